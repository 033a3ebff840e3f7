#include "nn/model.h"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>

namespace fatlab::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Model::Model(int in_c, int in_h, int in_w, int num_classes, std::vector<int> widths)
    : in_c_(in_c), in_h_(in_h), in_w_(in_w), num_classes_(num_classes),
      widths_(std::move(widths)) {
    int c = in_c_, h = in_h_, w = in_w_;
    for (size_t bi = 0; bi < widths_.size(); ++bi) {
        ConvShape s;
        s.cin = c;
        s.cout = widths_[bi];
        s.k = 3;
        s.stride = 2;
        s.pad = 1;
        s.hin = h;
        s.win = w;
        s.hout = (h + 2 * s.pad - s.k) / s.stride + 1;
        s.wout = (w + 2 * s.pad - s.k) / s.stride + 1;
        shapes_.push_back(s);

        auto add = [&](const std::string& name, std::vector<int64_t> shape, bool conv_w) {
            auto p = std::make_unique<Param>();
            p->name = name;
            p->w.reshape_alloc(std::move(shape));
            p->is_conv_weight = conv_w;
            p->init_slots();
            params_.push_back(std::move(p));
        };
        std::string tag = std::to_string(bi);
        add("conv" + tag + ".weight", {s.cout, static_cast<int64_t>(s.cin) * s.k * s.k}, true);
        add("conv" + tag + ".bias", {s.cout}, false);
        add("bn" + tag + ".gamma", {s.cout}, false);
        add("bn" + tag + ".beta", {s.cout}, false);

        BnState bs;
        bs.running_mu.reshape_alloc({s.cout});
        bs.running_var.reshape_alloc({s.cout});
        bns_.push_back(std::move(bs));

        c = s.cout;
        h = s.hout;
        w = s.wout;
    }
    head_in_ = c * h * w;
    auto add_head = [&](const std::string& name, std::vector<int64_t> shape) {
        auto p = std::make_unique<Param>();
        p->name = name;
        p->w.reshape_alloc(std::move(shape));
        p->init_slots();
        params_.push_back(std::move(p));
    };
    add_head("head.weight", {num_classes_, head_in_});
    add_head("head.bias", {num_classes_});
}

void Model::init_params(Rng& rng) {
    for (size_t bi = 0; bi < widths_.size(); ++bi) {
        const ConvShape& s = shapes_[bi];
        Param* w = conv_w(static_cast<int>(bi));
        float std = std::sqrt(2.0f / static_cast<float>(s.cin * s.k * s.k));
        for (int64_t i = 0; i < w->w.numel(); ++i) w->w[i] = rng.normal(0.0f, std);
        conv_b(static_cast<int>(bi))->w.zero();
        bn_g(static_cast<int>(bi))->w.fill(1.0f);
        bn_b(static_cast<int>(bi))->w.zero();
        bns_[bi].running_mu.zero();
        bns_[bi].running_var.fill(1.0f);
    }
    Param* hw = head_w();
    float bound = 1.0f / std::sqrt(static_cast<float>(head_in_));
    for (int64_t i = 0; i < hw->w.numel(); ++i) hw->w[i] = rng.uniform(-bound, bound);
    head_b()->w.zero();
    for (auto& p : params_) {
        p->grad.zero();
        p->mom.zero();
    }
}

static void im2col(const Tensor& x, const ConvShape& s, int n, Tensor& cols) {
    const int64_t ck = static_cast<int64_t>(s.cin) * s.k * s.k;
    const int64_t rows = static_cast<int64_t>(n) * s.hout * s.wout;
    if (cols.numel() != rows * ck) cols.reshape_alloc({rows, ck});
    const float* xd = x.data();
    float* cd = cols.data();
    const int64_t img = static_cast<int64_t>(s.cin) * s.hin * s.win;
    const int64_t plane = static_cast<int64_t>(s.hin) * s.win;
    for (int bn = 0; bn < n; ++bn) {
        for (int oy = 0; oy < s.hout; ++oy) {
            for (int ox = 0; ox < s.wout; ++ox) {
                float* row = cd + ((static_cast<int64_t>(bn) * s.hout + oy) * s.wout + ox) * ck;
                int iy0 = oy * s.stride - s.pad;
                int ix0 = ox * s.stride - s.pad;
                for (int ci = 0; ci < s.cin; ++ci) {
                    const float* src = xd + bn * img + ci * plane;
                    for (int ky = 0; ky < s.k; ++ky) {
                        int iy = iy0 + ky;
                        for (int kx = 0; kx < s.k; ++kx) {
                            int ix = ix0 + kx;
                            float v = 0.0f;
                            if (iy >= 0 && iy < s.hin && ix >= 0 && ix < s.win)
                                v = src[iy * s.win + ix];
                            row[(static_cast<int64_t>(ci) * s.k + ky) * s.k + kx] = v;
                        }
                    }
                }
            }
        }
    }
}

static void col2im_add(const Tensor& cols, const ConvShape& s, int n, Tensor& dx) {
    const int64_t ck = static_cast<int64_t>(s.cin) * s.k * s.k;
    const float* cd = cols.data();
    float* xd = dx.data();
    const int64_t img = static_cast<int64_t>(s.cin) * s.hin * s.win;
    const int64_t plane = static_cast<int64_t>(s.hin) * s.win;
    for (int bn = 0; bn < n; ++bn) {
        for (int oy = 0; oy < s.hout; ++oy) {
            for (int ox = 0; ox < s.wout; ++ox) {
                const float* row = cd + ((static_cast<int64_t>(bn) * s.hout + oy) * s.wout + ox) * ck;
                int iy0 = oy * s.stride - s.pad;
                int ix0 = ox * s.stride - s.pad;
                for (int ci = 0; ci < s.cin; ++ci) {
                    float* dst = xd + bn * img + ci * plane;
                    for (int ky = 0; ky < s.k; ++ky) {
                        int iy = iy0 + ky;
                        if (iy < 0 || iy >= s.hin) continue;
                        for (int kx = 0; kx < s.k; ++kx) {
                            int ix = ix0 + kx;
                            if (ix < 0 || ix >= s.win) continue;
                            dst[iy * s.win + ix] +=
                                row[(static_cast<int64_t>(ci) * s.k + ky) * s.k + kx];
                        }
                    }
                }
            }
        }
    }
}

void Model::conv_forward(int bi, const Tensor& x, BlockCache& bc) const {
    const ConvShape& s = shapes_[static_cast<size_t>(bi)];
    const int n = bc.n;
    im2col(x, s, n, bc.cols);
    const int64_t rows = static_cast<int64_t>(n) * s.hout * s.wout;
    const int64_t ck = static_cast<int64_t>(s.cin) * s.k * s.k;
    if (bc.conv_rows.numel() != rows * s.cout)
        bc.conv_rows.reshape_alloc({rows, s.cout});
    CMapMat A(bc.cols.data(), rows, ck);
    CMapMat W(conv_w(bi)->w.data(), s.cout, ck);
    MapMat Y(bc.conv_rows.data(), rows, s.cout);
    Y.noalias() = A * W.transpose();
    const float* b = conv_b(bi)->w.data();
    for (int64_t r = 0; r < rows; ++r) {
        float* yr = bc.conv_rows.data() + r * s.cout;
        for (int c = 0; c < s.cout; ++c) yr[c] += b[c];
    }
}

void Model::bn_relu_forward(int bi, Mode mode, bool update_running, BlockCache& bc) const {
    const ConvShape& s = shapes_[static_cast<size_t>(bi)];
    const int64_t rows = static_cast<int64_t>(bc.n) * s.hout * s.wout;
    const int C = s.cout;
    bc.mu.assign(static_cast<size_t>(C), 0.0f);
    bc.istd.assign(static_cast<size_t>(C), 0.0f);
    if (bc.xhat.numel() != rows * C) bc.xhat.reshape_alloc({rows, C});
    bc.relu_mask.assign(static_cast<size_t>(rows * C), 0);
    if (bc.act.numel() != static_cast<int64_t>(bc.n) * C * s.hout * s.wout)
        bc.act.reshape_alloc({bc.n, C, s.hout, s.wout});

    const float* g = bn_g(bi)->w.data();
    const float* bt = bn_b(bi)->w.data();
    BnState& bs = bns_[static_cast<size_t>(bi)];

    std::vector<double> mu(static_cast<size_t>(C), 0.0), var(static_cast<size_t>(C), 0.0);
    if (mode == Mode::Train) {
        for (int64_t r = 0; r < rows; ++r) {
            const float* xr = bc.conv_rows.data() + r * C;
            for (int c = 0; c < C; ++c) mu[static_cast<size_t>(c)] += xr[c];
        }
        for (int c = 0; c < C; ++c) mu[static_cast<size_t>(c)] /= static_cast<double>(rows);
        for (int64_t r = 0; r < rows; ++r) {
            const float* xr = bc.conv_rows.data() + r * C;
            for (int c = 0; c < C; ++c) {
                double d = xr[c] - mu[static_cast<size_t>(c)];
                var[static_cast<size_t>(c)] += d * d;
            }
        }
        for (int c = 0; c < C; ++c) var[static_cast<size_t>(c)] /= static_cast<double>(rows);
        if (update_running) {
            double m = bn_momentum;
            double unbias = rows > 1 ? static_cast<double>(rows) / (rows - 1) : 1.0;
            for (int c = 0; c < C; ++c) {
                bs.running_mu[c] = static_cast<float>((1.0 - m) * bs.running_mu[c] +
                                                      m * mu[static_cast<size_t>(c)]);
                bs.running_var[c] = static_cast<float>((1.0 - m) * bs.running_var[c] +
                                                       m * var[static_cast<size_t>(c)] * unbias);
            }
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mu[static_cast<size_t>(c)] = bs.running_mu[c];
            var[static_cast<size_t>(c)] = bs.running_var[c];
        }
    }
    for (int c = 0; c < C; ++c) {
        bc.mu[static_cast<size_t>(c)] = static_cast<float>(mu[static_cast<size_t>(c)]);
        bc.istd[static_cast<size_t>(c)] =
            static_cast<float>(1.0 / std::sqrt(var[static_cast<size_t>(c)] + bn_eps));
    }

    float* act = bc.act.data();
    const int64_t plane = static_cast<int64_t>(s.hout) * s.wout;
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = bc.conv_rows.data() + r * C;
        float* xh = bc.xhat.data() + r * C;
        int bn = static_cast<int>(r / plane);
        int64_t pos = r % plane;
        for (int c = 0; c < C; ++c) {
            float h = (xr[c] - bc.mu[static_cast<size_t>(c)]) * bc.istd[static_cast<size_t>(c)];
            xh[c] = h;
            float y = g[c] * h + bt[c];
            bool on = y > 0.0f;
            bc.relu_mask[static_cast<size_t>(r * C + c)] = on ? 1 : 0;
            act[(static_cast<int64_t>(bn) * C + c) * plane + pos] = on ? y : 0.0f;
        }
    }
    bc.mode = mode;
}

void Model::forward(const Tensor& x, Mode mode, bool update_running, FwdCache& cache) const {
    const int n = static_cast<int>(x.dim(0));
    cache.blocks.resize(widths_.size());
    const Tensor* cur = &x;
    for (size_t bi = 0; bi < widths_.size(); ++bi) {
        BlockCache& bc = cache.blocks[bi];
        bc.n = n;
        bc.x_in = *cur;
        conv_forward(static_cast<int>(bi), *cur, bc);
        bn_relu_forward(static_cast<int>(bi), mode, update_running, bc);
        cur = &bc.act;
    }
    // NCHW flattens row-major straight into (N, F)
    cache.flat = *cur;
    cache.flat.reshape_view({n, head_in_});

    if (cache.logits.numel() != static_cast<int64_t>(n) * num_classes_)
        cache.logits.reshape_alloc({n, num_classes_});
    CMapMat F(cache.flat.data(), n, head_in_);
    CMapMat W(head_w()->w.data(), num_classes_, head_in_);
    MapMat L(cache.logits.data(), n, num_classes_);
    L.noalias() = F * W.transpose();
    const float* b = head_b()->w.data();
    for (int r = 0; r < n; ++r) {
        float* lr = cache.logits.data() + static_cast<int64_t>(r) * num_classes_;
        for (int c = 0; c < num_classes_; ++c) lr[c] += b[c];
    }
}

void Model::block_backward(int bi, const BlockCache& bc, const Tensor& dact,
                           bool accum_param_grads, Tensor* dx_in) {
    const ConvShape& s = shapes_[static_cast<size_t>(bi)];
    const int C = s.cout;
    const int64_t rows = static_cast<int64_t>(bc.n) * s.hout * s.wout;
    const int64_t plane = static_cast<int64_t>(s.hout) * s.wout;

    // gather NCHW grad into rows layout, apply ReLU mask
    Tensor drows({rows, C});
    const float* da = dact.data();
    for (int64_t r = 0; r < rows; ++r) {
        int bn = static_cast<int>(r / plane);
        int64_t pos = r % plane;
        float* dr = drows.data() + r * C;
        for (int c = 0; c < C; ++c) {
            float v = da[(static_cast<int64_t>(bn) * C + c) * plane + pos];
            dr[c] = bc.relu_mask[static_cast<size_t>(r * C + c)] ? v : 0.0f;
        }
    }

    const float* g = bn_g(bi)->w.data();
    Tensor dconv({rows, C});
    std::vector<double> sum_dy(static_cast<size_t>(C), 0.0);
    std::vector<double> sum_dy_xh(static_cast<size_t>(C), 0.0);
    for (int64_t r = 0; r < rows; ++r) {
        const float* dr = drows.data() + r * C;
        const float* xh = bc.xhat.data() + r * C;
        for (int c = 0; c < C; ++c) {
            sum_dy[static_cast<size_t>(c)] += dr[c];
            sum_dy_xh[static_cast<size_t>(c)] += static_cast<double>(dr[c]) * xh[c];
        }
    }
    if (accum_param_grads) {
        float* dg = bn_g(bi)->grad.data();
        float* db = bn_b(bi)->grad.data();
        for (int c = 0; c < C; ++c) {
            dg[c] += static_cast<float>(sum_dy_xh[static_cast<size_t>(c)]);
            db[c] += static_cast<float>(sum_dy[static_cast<size_t>(c)]);
        }
    }
    if (bc.mode == Mode::Train) {
        for (int64_t r = 0; r < rows; ++r) {
            const float* dr = drows.data() + r * C;
            const float* xh = bc.xhat.data() + r * C;
            float* dc = dconv.data() + r * C;
            for (int c = 0; c < C; ++c) {
                size_t cc = static_cast<size_t>(c);
                double t = static_cast<double>(dr[c]) -
                           sum_dy[cc] / static_cast<double>(rows) -
                           static_cast<double>(xh[c]) * sum_dy_xh[cc] / static_cast<double>(rows);
                dc[c] = static_cast<float>(static_cast<double>(g[c]) * bc.istd[cc] * t);
            }
        }
    } else {
        for (int64_t r = 0; r < rows; ++r) {
            const float* dr = drows.data() + r * C;
            float* dc = dconv.data() + r * C;
            for (int c = 0; c < C; ++c)
                dc[c] = dr[c] * g[c] * bc.istd[static_cast<size_t>(c)];
        }
    }

    const int64_t ck = static_cast<int64_t>(s.cin) * s.k * s.k;
    if (accum_param_grads) {
        CMapMat dY(dconv.data(), rows, C);
        CMapMat A(bc.cols.data(), rows, ck);
        MapMat dW(conv_w(bi)->grad.data(), C, ck);
        dW.noalias() += dY.transpose() * A;
        float* db = conv_b(bi)->grad.data();
        for (int64_t r = 0; r < rows; ++r) {
            const float* dc = dconv.data() + r * C;
            for (int c = 0; c < C; ++c) db[c] += dc[c];
        }
    }
    if (dx_in != nullptr) {
        Tensor dcols({rows, ck});
        CMapMat dY(dconv.data(), rows, C);
        CMapMat W(conv_w(bi)->w.data(), C, ck);
        MapMat dA(dcols.data(), rows, ck);
        dA.noalias() = dY * W;
        if (!dx_in->same_shape(bc.x_in)) dx_in->reshape_alloc(bc.x_in.shape());
        dx_in->zero();
        col2im_add(dcols, s, bc.n, *dx_in);
    }
}

void Model::backward(const FwdCache& cache, const Tensor& dlogits, bool accum_param_grads,
                     Tensor* dx) {
    const int n = static_cast<int>(dlogits.dim(0));
    if (accum_param_grads) {
        CMapMat dL(dlogits.data(), n, num_classes_);
        CMapMat F(cache.flat.data(), n, head_in_);
        MapMat dW(head_w()->grad.data(), num_classes_, head_in_);
        dW.noalias() += dL.transpose() * F;
        float* db = head_b()->grad.data();
        for (int r = 0; r < n; ++r) {
            const float* dr = dlogits.data() + static_cast<int64_t>(r) * num_classes_;
            for (int c = 0; c < num_classes_; ++c) db[c] += dr[c];
        }
    }
    Tensor dflat({n, head_in_});
    {
        CMapMat dL(dlogits.data(), n, num_classes_);
        CMapMat W(head_w()->w.data(), num_classes_, head_in_);
        MapMat dF(dflat.data(), n, head_in_);
        dF.noalias() = dL * W;
    }
    // reshape to the last block's activation layout
    const BlockCache& last = cache.blocks.back();
    dflat.reshape_view(last.act.shape());

    Tensor dcur = std::move(dflat);
    for (int bi = static_cast<int>(widths_.size()) - 1; bi >= 0; --bi) {
        bool need_dx = (bi > 0) || (dx != nullptr);
        Tensor dprev;
        block_backward(bi, cache.blocks[static_cast<size_t>(bi)], dcur, accum_param_grads,
                       need_dx ? &dprev : nullptr);
        if (bi == 0) {
            if (dx != nullptr) *dx = std::move(dprev);
        } else {
            dcur = std::move(dprev);
        }
    }
}

std::vector<Param*> Model::params() {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

std::vector<const Param*> Model::params() const {
    std::vector<const Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

void Model::zero_grads() {
    for (auto& p : params_) p->grad.zero();
}

Model Model::clone() const {
    Model out(in_c_, in_h_, in_w_, num_classes_, widths_);
    for (size_t i = 0; i < params_.size(); ++i) *out.params_[i] = *params_[i];
    out.bns_ = bns_;
    out.bn_momentum = bn_momentum;
    out.bn_eps = bn_eps;
    return out;
}

// layer index: 2*b = conv of block b, 2*b+1 = its BN, last = head
void Model::set_layer_trainable(int layer, bool trainable) {
    int nb = static_cast<int>(widths_.size());
    if (layer < 2 * nb) {
        int bi = layer / 2;
        if (layer % 2 == 0) {
            conv_w(bi)->trainable = trainable;
            conv_b(bi)->trainable = trainable;
        } else {
            bn_g(bi)->trainable = trainable;
            bn_b(bi)->trainable = trainable;
        }
    } else {
        head_w()->trainable = trainable;
        head_b()->trainable = trainable;
    }
}

void Model::reinit_layer(int layer, Rng& rng) {
    int nb = static_cast<int>(widths_.size());
    if (layer < 2 * nb) {
        int bi = layer / 2;
        if (layer % 2 == 0) {
            const ConvShape& s = shapes_[static_cast<size_t>(bi)];
            float std = std::sqrt(2.0f / static_cast<float>(s.cin * s.k * s.k));
            Param* w = conv_w(bi);
            for (int64_t i = 0; i < w->w.numel(); ++i) w->w[i] = rng.normal(0.0f, std);
            conv_b(bi)->w.zero();
            w->mom.zero();
            conv_b(bi)->mom.zero();
        } else {
            bn_g(bi)->w.fill(1.0f);
            bn_b(bi)->w.zero();
            bn_g(bi)->mom.zero();
            bn_b(bi)->mom.zero();
            bns_[static_cast<size_t>(bi)].running_mu.zero();
            bns_[static_cast<size_t>(bi)].running_var.fill(1.0f);
        }
    } else {
        Param* hw = head_w();
        float bound = 1.0f / std::sqrt(static_cast<float>(head_in_));
        for (int64_t i = 0; i < hw->w.numel(); ++i) hw->w[i] = rng.uniform(-bound, bound);
        head_b()->w.zero();
        hw->mom.zero();
        head_b()->mom.zero();
    }
}

std::vector<float> Model::flatten_params() const {
    std::vector<float> out;
    for (const auto& p : params_)
        out.insert(out.end(), p->w.data(), p->w.data() + p->w.numel());
    return out;
}

void Model::load_flat_params(const std::vector<float>& flat) {
    size_t off = 0;
    for (auto& p : params_) {
        std::memcpy(p->w.data(), flat.data() + off,
                    static_cast<size_t>(p->w.numel()) * sizeof(float));
        off += static_cast<size_t>(p->w.numel());
    }
}

std::vector<Tensor*> Model::named_state(std::vector<std::string>* names) {
    std::vector<Tensor*> out;
    for (auto& p : params_) {
        out.push_back(&p->w);
        if (names) names->push_back(p->name);
    }
    for (size_t bi = 0; bi < bns_.size(); ++bi) {
        out.push_back(&bns_[bi].running_mu);
        if (names) names->push_back("bn" + std::to_string(bi) + ".running_mu");
        out.push_back(&bns_[bi].running_var);
        if (names) names->push_back("bn" + std::to_string(bi) + ".running_var");
    }
    return out;
}

double cross_entropy(const Tensor& logits, const std::vector<int>& y, Tensor* dlogits) {
    const int n = static_cast<int>(logits.dim(0));
    const int k = static_cast<int>(logits.dim(1));
    if (dlogits && !dlogits->same_shape(logits)) dlogits->reshape_alloc(logits.shape());
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
        const float* lr = logits.data() + static_cast<int64_t>(r) * k;
        double m = lr[0];
        for (int c = 1; c < k; ++c) m = std::max(m, static_cast<double>(lr[c]));
        double se = 0.0;
        for (int c = 0; c < k; ++c) se += std::exp(lr[c] - m);
        double lse = m + std::log(se);
        total += lse - lr[y[static_cast<size_t>(r)]];
        if (dlogits) {
            float* dr = dlogits->data() + static_cast<int64_t>(r) * k;
            for (int c = 0; c < k; ++c) {
                double p = std::exp(lr[c] - lse);
                dr[c] = static_cast<float>((p - (c == y[static_cast<size_t>(r)] ? 1.0 : 0.0)) / n);
            }
        }
    }
    return total / n;
}

void cross_entropy_each(const Tensor& logits, const std::vector<int>& y,
                        std::vector<double>* losses, Tensor* dlogits_sum) {
    const int n = static_cast<int>(logits.dim(0));
    const int k = static_cast<int>(logits.dim(1));
    if (losses) losses->assign(static_cast<size_t>(n), 0.0);
    if (dlogits_sum && !dlogits_sum->same_shape(logits)) dlogits_sum->reshape_alloc(logits.shape());
    for (int r = 0; r < n; ++r) {
        const float* lr = logits.data() + static_cast<int64_t>(r) * k;
        double m = lr[0];
        for (int c = 1; c < k; ++c) m = std::max(m, static_cast<double>(lr[c]));
        double se = 0.0;
        for (int c = 0; c < k; ++c) se += std::exp(lr[c] - m);
        double lse = m + std::log(se);
        if (losses) (*losses)[static_cast<size_t>(r)] = lse - lr[y[static_cast<size_t>(r)]];
        if (dlogits_sum) {
            float* dr = dlogits_sum->data() + static_cast<int64_t>(r) * k;
            for (int c = 0; c < k; ++c) {
                double p = std::exp(lr[c] - lse);
                dr[c] = static_cast<float>(p - (c == y[static_cast<size_t>(r)] ? 1.0 : 0.0));
            }
        }
    }
}

int argmax_row(const Tensor& logits, int row) {
    const int k = static_cast<int>(logits.dim(1));
    const float* lr = logits.data() + static_cast<int64_t>(row) * k;
    int best = 0;
    for (int c = 1; c < k; ++c)
        if (lr[c] > lr[best]) best = c;
    return best;
}

}  // namespace fatlab::nn
