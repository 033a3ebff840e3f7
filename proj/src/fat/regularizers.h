#pragma once

#include <vector>

#include "core/tensor.h"
#include "nn/model.h"

namespace fatlab::fat {

// Weight-outlier suppression over conv kernels. For each conv layer with
// mean absolute weight wbar, each weight contributes exp(d/(wbar+alpha) -
// eta) * d where d = ||w| - wbar|. The `signed_dev` variant reads the
// deviation without the outer absolute value, d = |w| - wbar.
double weight_outlier_loss(const nn::Model& m, double eta, double alpha, bool signed_dev);

// Accumulates the analytic gradient of the loss above into param grads;
// returns the loss value. The gradient goes through wbar as well.
double weight_outlier_loss_grad(nn::Model& m, double eta, double alpha, bool signed_dev);

// lambda * sum of squared conv weights, gradient accumulated when grad=true.
double l2_conv_loss(nn::Model& m, double lam, bool grad);

// Hard clamp |w| <= eta * wbar per conv layer, applied between epochs.
void clip_conv_weights(nn::Model& m, double eta);

// max over conv layers of max_w ||w|-wbar| / wbar
double max_dev_ratio(const nn::Model& m);

// Histogram of r = ||w|-wbar|/wbar over all conv weights with fixed edges
// {0,.5,1,2,4,8,16,inf}; counts per bucket.
std::vector<int64_t> dev_ratio_histogram(const nn::Model& m, std::vector<double>* edges);

// Per-class momentum bank over detached sign batches:
// bank[t] <- 0.9*bank[t] + 0.1*mean(sign rows of class t), classes present only.
void trigger_bank_update(Tensor& bank, const Tensor& d_sign, const std::vector<int>& y);

// Auxiliary trigger-divergence loss value:
//   -alpha_aux * sum_t ||mean_t(d_sign) - bank_t||_2  (class-mean reading)
// or with per_example: -alpha_aux * sum_i ||d_sign_i - bank_{y_i}||_2.
double aux_loss_value(const Tensor& bank, const Tensor& d_sign, const std::vector<int>& y,
                      double alpha_aux, bool per_example);

// dL_aux/d(d_sign rows) under a straight-through sign; u has d_sign's shape.
void aux_loss_u(const Tensor& bank, const Tensor& d_sign, const std::vector<int>& y,
                double alpha_aux, bool per_example, Tensor* u);

}  // namespace fatlab::fat
