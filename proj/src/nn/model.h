#pragma once

#include <memory>
#include <string>
#include <vector>

#include "core/rng.h"
#include "core/tensor.h"

namespace fatlab::nn {

enum class Mode { Train, Eval };

// Named parameter with gradient and momentum slots. `trainable` gates the
// optimizer update; fine-tuning recipes flip it per layer.
struct Param {
    std::string name;
    Tensor w;
    Tensor grad;
    Tensor mom;
    bool trainable = true;
    bool is_conv_weight = false;

    void init_slots() {
        grad.reshape_alloc(w.shape());
        mom.reshape_alloc(w.shape());
    }
};

struct ConvShape {
    int cin, cout, k, stride, pad;
    int hin, win, hout, wout;
};

// One conv -> batchnorm -> relu block's forward intermediates. Caches are
// owned by the caller so several forwards (attack pass, loss pass, probe
// passes) can coexist before their backwards run.
struct BlockCache {
    Tensor x_in;       // (N,Cin,H,W)
    Tensor cols;       // im2col, rows = N*Hout*Wout, cols = Cin*k*k
    Tensor conv_rows;  // pre-BN activations as (N*Hout*Wout, Cout)
    Tensor xhat;       // normalized activations, same layout as conv_rows
    std::vector<float> mu, istd;  // per-channel batch stats (train mode)
    Tensor act;        // post-ReLU (N,Cout,Hout,Wout)
    std::vector<uint8_t> relu_mask;
    Mode mode = Mode::Train;
    int n = 0;
};

struct FwdCache {
    std::vector<BlockCache> blocks;
    Tensor flat;    // input to the linear head (N, F)
    Tensor logits;  // (N, K)
};

// Four stride-2 conv/BN/ReLU blocks and a linear head. Layer list for the
// fine-tuning recipes is [conv0, bn0, conv1, bn1, conv2, bn2, conv3, bn3,
// head]; a "conv block" counts as two layers (conv + its BN).
class Model {
public:
    Model(int in_c, int in_h, int in_w, int num_classes,
          std::vector<int> widths = {32, 64, 128, 128});

    void init_params(Rng& rng);

    // Logits forward. Train mode normalizes with batch stats; running stats
    // are updated on every train-mode forward when update_running is set,
    // which matches the reference training loop (attack and probe passes
    // update them too).
    void forward(const Tensor& x, Mode mode, bool update_running, FwdCache& cache) const;

    // Backward from dlogits. Fills param grads (accumulating) when
    // accum_param_grads, and writes input gradient into dx when given.
    void backward(const FwdCache& cache, const Tensor& dlogits, bool accum_param_grads,
                  Tensor* dx);

    std::vector<Param*> params();
    std::vector<const Param*> params() const;
    void zero_grads();

    // Deep copy: weights, grads, momentum, freeze masks, running stats.
    Model clone() const;

    // Layer granularity used by the fine-tuning recipes.
    int num_layers() const { return static_cast<int>(widths_.size()) * 2 + 1; }
    void set_layer_trainable(int layer, bool trainable);
    void reinit_layer(int layer, Rng& rng);

    int num_classes() const { return num_classes_; }
    int in_c() const { return in_c_; }
    int in_h() const { return in_h_; }
    int in_w() const { return in_w_; }
    const std::vector<int>& widths() const { return widths_; }

    // Flat copies of all trainable state (params only, no running stats),
    // used by checkpoint deltas and the similarity diagnostics.
    std::vector<float> flatten_params() const;
    void load_flat_params(const std::vector<float>& flat);

    struct BnState {
        Tensor gamma, beta;        // live in params_
        Tensor running_mu, running_var;
    };

    const std::vector<ConvShape>& conv_shapes() const { return shapes_; }
    std::vector<Tensor*> named_state(std::vector<std::string>* names);

    // BN running statistics are exposed for checkpointing.
    std::vector<BnState>& bn_states() { return bns_; }
    const std::vector<BnState>& bn_states() const { return bns_; }

    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

private:
    void conv_forward(int bi, const Tensor& x, BlockCache& bc) const;
    void bn_relu_forward(int bi, Mode mode, bool update_running, BlockCache& bc) const;
    void block_backward(int bi, const BlockCache& bc, const Tensor& dact,
                        bool accum_param_grads, Tensor* dx_in);

    int in_c_, in_h_, in_w_, num_classes_;
    std::vector<int> widths_;
    std::vector<ConvShape> shapes_;

    // params_ order: per block conv W, conv b, bn gamma, bn beta; then head
    // W, head b.
    std::vector<std::unique_ptr<Param>> params_;
    mutable std::vector<BnState> bns_;  // running stats mutate during forward

    Param* conv_w(int bi) { return params_[static_cast<size_t>(bi) * 4 + 0].get(); }
    Param* conv_b(int bi) { return params_[static_cast<size_t>(bi) * 4 + 1].get(); }
    Param* bn_g(int bi) { return params_[static_cast<size_t>(bi) * 4 + 2].get(); }
    Param* bn_b(int bi) { return params_[static_cast<size_t>(bi) * 4 + 3].get(); }
    const Param* conv_w(int bi) const { return params_[static_cast<size_t>(bi) * 4 + 0].get(); }
    const Param* conv_b(int bi) const { return params_[static_cast<size_t>(bi) * 4 + 1].get(); }
    const Param* bn_g(int bi) const { return params_[static_cast<size_t>(bi) * 4 + 2].get(); }
    const Param* bn_b(int bi) const { return params_[static_cast<size_t>(bi) * 4 + 3].get(); }
    Param* head_w() { return params_[params_.size() - 2].get(); }
    Param* head_b() { return params_[params_.size() - 1].get(); }
    const Param* head_w() const { return params_[params_.size() - 2].get(); }
    const Param* head_b() const { return params_[params_.size() - 1].get(); }

    int head_in_ = 0;
};

// Mean cross-entropy over the batch; log-softmax accumulates in double.
// Returns loss; writes dlogits = (softmax - onehot)/N when given.
double cross_entropy(const Tensor& logits, const std::vector<int>& y, Tensor* dlogits);

// Per-example cross-entropy (no reduction), for PGD restart bookkeeping.
void cross_entropy_each(const Tensor& logits, const std::vector<int>& y,
                        std::vector<double>* losses, Tensor* dlogits_sum);

int argmax_row(const Tensor& logits, int row);

}  // namespace fatlab::nn
