#include "fat/regularizers.h"

#include <cmath>

namespace fatlab::fat {

static double conv_wbar(const nn::Param* p) {
    return dsum_abs(p->w.data(), p->w.numel()) / static_cast<double>(p->w.numel());
}

double weight_outlier_loss(const nn::Model& m, double eta, double alpha, bool signed_dev) {
    double total = 0.0;
    for (const nn::Param* p : m.params()) {
        if (!p->is_conv_weight) continue;
        const int64_t n = p->w.numel();
        double wbar = conv_wbar(p);
        for (int64_t i = 0; i < n; ++i) {
            double d = std::abs(static_cast<double>(p->w[i])) - wbar;
            if (!signed_dev) d = std::abs(d);
            total += std::exp(d / (wbar + alpha) - eta) * d;
        }
    }
    return total;
}

double weight_outlier_loss_grad(nn::Model& m, double eta, double alpha, bool signed_dev) {
    double total = 0.0;
    for (nn::Param* p : m.params()) {
        if (!p->is_conv_weight) continue;
        const int64_t n = p->w.numel();
        double wbar = conv_wbar(p);
        double denom = wbar + alpha;
        // first pass: per-weight e^z terms and the wbar-chain accumulators
        double sum_gs = 0.0;  // sum of G_i * s_i
        double sum_h = 0.0;   // sum of e^z * d^2 / denom^2
        std::vector<double> gs(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            double dev = std::abs(static_cast<double>(p->w[i])) - wbar;
            double s = signed_dev ? 1.0 : (dev > 0 ? 1.0 : (dev < 0 ? -1.0 : 0.0));
            double d = signed_dev ? dev : std::abs(dev);
            double ez = std::exp(d / denom - eta);
            total += ez * d;
            double gi = ez * (1.0 + d / denom);
            gs[static_cast<size_t>(i)] = gi * s;
            sum_gs += gi * s;
            sum_h += ez * d * d / (denom * denom);
        }
        double mean_term = (sum_gs + sum_h) / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
            float sw = sign0(p->w[i]);
            p->grad[i] += static_cast<float>(sw * (gs[static_cast<size_t>(i)] - mean_term));
        }
    }
    return total;
}

double l2_conv_loss(nn::Model& m, double lam, bool grad) {
    double total = 0.0;
    for (nn::Param* p : m.params()) {
        if (!p->is_conv_weight) continue;
        total += dsum_sq(p->w.data(), p->w.numel());
        if (grad) {
            const float two_lam = static_cast<float>(2.0 * lam);
            for (int64_t i = 0; i < p->w.numel(); ++i) p->grad[i] += two_lam * p->w[i];
        }
    }
    return lam * total;
}

void clip_conv_weights(nn::Model& m, double eta) {
    for (nn::Param* p : m.params()) {
        if (!p->is_conv_weight) continue;
        float lim = static_cast<float>(eta * conv_wbar(p));
        for (int64_t i = 0; i < p->w.numel(); ++i) p->w[i] = clampf(p->w[i], -lim, lim);
    }
}

double max_dev_ratio(const nn::Model& m) {
    double r = 0.0;
    for (const nn::Param* p : m.params()) {
        if (!p->is_conv_weight) continue;
        double wbar = conv_wbar(p);
        double dmax = 0.0;
        for (int64_t i = 0; i < p->w.numel(); ++i)
            dmax = std::max(dmax, std::abs(std::abs(static_cast<double>(p->w[i])) - wbar));
        r = std::max(r, dmax / std::max(wbar, 1e-12));
    }
    return r;
}

std::vector<int64_t> dev_ratio_histogram(const nn::Model& m, std::vector<double>* edges) {
    static const double kEdges[] = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
    const int nb = 7;  // last bucket is [16, inf)
    if (edges) edges->assign(kEdges, kEdges + nb);
    std::vector<int64_t> counts(static_cast<size_t>(nb), 0);
    for (const nn::Param* p : m.params()) {
        if (!p->is_conv_weight) continue;
        double wbar = conv_wbar(p);
        double den = std::max(wbar, 1e-12);
        for (int64_t i = 0; i < p->w.numel(); ++i) {
            double r = std::abs(std::abs(static_cast<double>(p->w[i])) - wbar) / den;
            int b = nb - 1;
            for (int j = 1; j < nb; ++j) {
                if (r < kEdges[j]) {
                    b = j - 1;
                    break;
                }
            }
            counts[static_cast<size_t>(b)]++;
        }
    }
    return counts;
}

void trigger_bank_update(Tensor& bank, const Tensor& d_sign, const std::vector<int>& y) {
    const int K = static_cast<int>(bank.dim(0));
    const int64_t dsz = bank.numel() / K;
    const int nb = static_cast<int>(d_sign.dim(0));
    std::vector<double> mean(static_cast<size_t>(dsz));
    for (int t = 0; t < K; ++t) {
        int cnt = 0;
        std::fill(mean.begin(), mean.end(), 0.0);
        for (int i = 0; i < nb; ++i) {
            if (y[static_cast<size_t>(i)] != t) continue;
            const float* row = d_sign.data() + static_cast<int64_t>(i) * dsz;
            for (int64_t j = 0; j < dsz; ++j) mean[static_cast<size_t>(j)] += row[j];
            ++cnt;
        }
        if (cnt == 0) continue;
        float* bt = bank.data() + static_cast<int64_t>(t) * dsz;
        for (int64_t j = 0; j < dsz; ++j)
            bt[j] = 0.9f * bt[j] + 0.1f * static_cast<float>(mean[static_cast<size_t>(j)] / cnt);
    }
}

static void class_diff(const Tensor& bank, const Tensor& d_sign, const std::vector<int>& y,
                       int t, std::vector<double>* diff, int* count) {
    const int64_t dsz = bank.numel() / bank.dim(0);
    const int nb = static_cast<int>(d_sign.dim(0));
    diff->assign(static_cast<size_t>(dsz), 0.0);
    *count = 0;
    for (int i = 0; i < nb; ++i) {
        if (y[static_cast<size_t>(i)] != t) continue;
        const float* row = d_sign.data() + static_cast<int64_t>(i) * dsz;
        for (int64_t j = 0; j < dsz; ++j) (*diff)[static_cast<size_t>(j)] += row[j];
        ++(*count);
    }
    if (*count == 0) return;
    const float* bt = bank.data() + static_cast<int64_t>(t) * dsz;
    for (int64_t j = 0; j < dsz; ++j)
        (*diff)[static_cast<size_t>(j)] = (*diff)[static_cast<size_t>(j)] / *count - bt[j];
}

double aux_loss_value(const Tensor& bank, const Tensor& d_sign, const std::vector<int>& y,
                      double alpha_aux, bool per_example) {
    const int K = static_cast<int>(bank.dim(0));
    const int64_t dsz = bank.numel() / K;
    double total = 0.0;
    if (per_example) {
        const int nb = static_cast<int>(d_sign.dim(0));
        for (int i = 0; i < nb; ++i) {
            const float* row = d_sign.data() + static_cast<int64_t>(i) * dsz;
            const float* bt = bank.data() + static_cast<int64_t>(y[static_cast<size_t>(i)]) * dsz;
            double ss = 0.0;
            for (int64_t j = 0; j < dsz; ++j) {
                double d = static_cast<double>(row[j]) - bt[j];
                ss += d * d;
            }
            total += std::sqrt(ss);
        }
    } else {
        std::vector<double> diff;
        int cnt;
        for (int t = 0; t < K; ++t) {
            class_diff(bank, d_sign, y, t, &diff, &cnt);
            if (cnt == 0) continue;
            double ss = 0.0;
            for (double v : diff) ss += v * v;
            total += std::sqrt(ss);
        }
    }
    return -alpha_aux * total;
}

void aux_loss_u(const Tensor& bank, const Tensor& d_sign, const std::vector<int>& y,
                double alpha_aux, bool per_example, Tensor* u) {
    if (!u->same_shape(d_sign)) u->reshape_alloc(d_sign.shape());
    u->zero();
    const int K = static_cast<int>(bank.dim(0));
    const int64_t dsz = bank.numel() / K;
    const int nb = static_cast<int>(d_sign.dim(0));
    if (per_example) {
        for (int i = 0; i < nb; ++i) {
            const float* row = d_sign.data() + static_cast<int64_t>(i) * dsz;
            const float* bt = bank.data() + static_cast<int64_t>(y[static_cast<size_t>(i)]) * dsz;
            double ss = 0.0;
            for (int64_t j = 0; j < dsz; ++j) {
                double d = static_cast<double>(row[j]) - bt[j];
                ss += d * d;
            }
            double nrm = std::sqrt(ss);
            if (nrm <= 1e-12) continue;
            float* ur = u->data() + static_cast<int64_t>(i) * dsz;
            for (int64_t j = 0; j < dsz; ++j)
                ur[j] = static_cast<float>(-alpha_aux * (row[j] - bt[j]) / nrm);
        }
    } else {
        std::vector<double> diff;
        int cnt;
        for (int t = 0; t < K; ++t) {
            class_diff(bank, d_sign, y, t, &diff, &cnt);
            if (cnt == 0) continue;
            double ss = 0.0;
            for (double v : diff) ss += v * v;
            double nrm = std::sqrt(ss);
            if (nrm <= 1e-12) continue;
            for (int i = 0; i < nb; ++i) {
                if (y[static_cast<size_t>(i)] != t) continue;
                float* ur = u->data() + static_cast<int64_t>(i) * dsz;
                for (int64_t j = 0; j < dsz; ++j)
                    ur[j] = static_cast<float>(-alpha_aux * diff[static_cast<size_t>(j)] /
                                               (nrm * cnt));
            }
        }
    }
}

}  // namespace fatlab::fat
