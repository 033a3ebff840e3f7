#include "diag/diagnostics.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "attack/attacks.h"
#include "core/error.h"
#include "core/rng.h"
#include "fat/regularizers.h"

namespace fatlab::diag {

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw_input("wasserstein_1d: empty sample set");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const size_t na = a.size(), nb = b.size();
    size_t ia = 0, ib = 0;
    double q = 0.0, total = 0.0;
    while (ia < na && ib < nb) {
        double qa = static_cast<double>(ia + 1) / na;
        double qb = static_cast<double>(ib + 1) / nb;
        double next = std::min(qa, qb);
        total += (next - q) * std::abs(a[ia] - b[ib]);
        q = next;
        if (qa <= next) ++ia;
        if (qb <= next) ++ib;
    }
    return total;
}

static void random_unit_dir(Rng& rng, int64_t dim, std::vector<double>* dir) {
    dir->resize(static_cast<size_t>(dim));
    double nrm = 0.0;
    for (int64_t i = 0; i < dim; ++i) {
        double v = rng.normal(0.0f, 1.0f);
        (*dir)[static_cast<size_t>(i)] = v;
        nrm += v * v;
    }
    nrm = std::sqrt(nrm);
    if (nrm <= 0.0) {
        (*dir)[0] = 1.0;
        return;
    }
    for (auto& v : *dir) v /= nrm;
}

double sliced_wasserstein(const float* a, int64_t na, const float* b, int64_t nb,
                          int64_t dim, int n_proj, uint64_t seed) {
    if (na < 1 || nb < 1) throw_input("sliced_wasserstein: empty sample set");
    Rng rng(seed);
    std::vector<double> dir;
    std::vector<double> pa(static_cast<size_t>(na)), pb(static_cast<size_t>(nb));
    double total = 0.0;
    for (int p = 0; p < n_proj; ++p) {
        random_unit_dir(rng, dim, &dir);
        for (int64_t i = 0; i < na; ++i) {
            double s = 0.0;
            const float* row = a + i * dim;
            for (int64_t j = 0; j < dim; ++j) s += dir[static_cast<size_t>(j)] * row[j];
            pa[static_cast<size_t>(i)] = s;
        }
        for (int64_t i = 0; i < nb; ++i) {
            double s = 0.0;
            const float* row = b + i * dim;
            for (int64_t j = 0; j < dim; ++j) s += dir[static_cast<size_t>(j)] * row[j];
            pb[static_cast<size_t>(i)] = s;
        }
        total += wasserstein_1d(pa, pb);
    }
    return total / n_proj;
}

void collect_sign_samples(nn::Model& m, const fat::Dataset& data, float xi, uint64_t seed,
                          int max_per_class, Tensor* samples, std::vector<int>* labels) {
    const int K = data.num_classes;
    const int64_t n = data.n();
    const int64_t img = data.x.numel() / n;
    Rng rng(seed);

    std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(K));
    for (int64_t i = 0; i < n; ++i) {
        auto& v = by_class[static_cast<size_t>(data.y[static_cast<size_t>(i)])];
        if (static_cast<int>(v.size()) < max_per_class) v.push_back(i);
    }
    int64_t total = 0;
    for (const auto& v : by_class) total += static_cast<int64_t>(v.size());

    std::vector<int64_t> shape = data.x.shape();
    shape[0] = total;
    Tensor xs(shape);
    labels->clear();
    labels->reserve(static_cast<size_t>(total));
    int64_t row = 0;
    for (int t = 0; t < K; ++t) {
        for (int64_t src : by_class[static_cast<size_t>(t)]) {
            std::copy(data.x.data() + src * img, data.x.data() + (src + 1) * img,
                      xs.data() + row * img);
            labels->push_back(t);
            ++row;
        }
    }
    Tensor d0(xs.shape());
    attack::draw_init_noise(rng, attack::InitNoise::Uniform, xi, &d0);
    samples->reshape_alloc({total, img});
    // batched to keep forward memory bounded
    const int64_t bs = 256;
    Tensor xb, db, sg;
    for (int64_t lo = 0; lo < total; lo += bs) {
        int64_t hi = std::min(total, lo + bs);
        std::vector<int64_t> bshape = xs.shape();
        bshape[0] = hi - lo;
        xb.reshape_alloc(bshape);
        db.reshape_alloc(bshape);
        std::copy(xs.data() + lo * img, xs.data() + hi * img, xb.data());
        std::copy(d0.data() + lo * img, d0.data() + hi * img, db.data());
        std::vector<int> yb(labels->begin() + lo, labels->begin() + hi);
        attack::fgsm_sign(m, xb, db, yb, nn::Mode::Eval, false, &sg);
        std::copy(sg.data(), sg.data() + (hi - lo) * img, samples->data() + lo * img);
    }
}

double DistanceMatrix::offdiag_mean() const {
    double s = 0.0;
    int c = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            if (i != j) {
                s += at(i, j);
                ++c;
            }
    return c ? s / c : 0.0;
}

DistanceMatrix sign_distance_matrix(nn::Model& m, const fat::Dataset& data, float xi,
                                    int n_proj, uint64_t seed, int max_per_class) {
    const int K = data.num_classes;
    if (K < 2) throw_input("sign_distance_matrix: need at least 2 classes");
    Tensor samples;
    std::vector<int> labels;
    collect_sign_samples(m, data, xi, seed, max_per_class, &samples, &labels);
    const int64_t dim = samples.dim(1);

    std::vector<std::vector<int64_t>> rows(static_cast<size_t>(K));
    for (size_t i = 0; i < labels.size(); ++i)
        rows[static_cast<size_t>(labels[i])].push_back(static_cast<int64_t>(i));
    DistanceMatrix dm;
    dm.k = K;
    dm.values.assign(static_cast<size_t>(K) * K, 0.0);
    dm.class_counts.resize(static_cast<size_t>(K));
    for (int t = 0; t < K; ++t) {
        dm.class_counts[static_cast<size_t>(t)] =
            static_cast<int>(rows[static_cast<size_t>(t)].size());
        if (rows[static_cast<size_t>(t)].size() < 2)
            throw_input("sign_distance_matrix: class " + std::to_string(t) +
                        " has fewer than 2 samples");
    }
    // per-class contiguous buffers (collect_sign_samples groups by class)
    std::vector<int64_t> offset(static_cast<size_t>(K) + 1, 0);
    for (int t = 0; t < K; ++t)
        offset[static_cast<size_t>(t) + 1] =
            offset[static_cast<size_t>(t)] +
            static_cast<int64_t>(rows[static_cast<size_t>(t)].size());
    for (int i = 0; i < K; ++i) {
        for (int j = i + 1; j < K; ++j) {
            double d = sliced_wasserstein(
                samples.data() + offset[static_cast<size_t>(i)] * dim,
                offset[static_cast<size_t>(i) + 1] - offset[static_cast<size_t>(i)],
                samples.data() + offset[static_cast<size_t>(j)] * dim,
                offset[static_cast<size_t>(j) + 1] - offset[static_cast<size_t>(j)], dim,
                n_proj, seed + 13 * (static_cast<uint64_t>(i) * K + j));
            dm.values[static_cast<size_t>(i) * K + j] = d;
            dm.values[static_cast<size_t>(j) * K + i] = d;
        }
    }
    return dm;
}

Embedding embed_2d(const Tensor& samples, const std::vector<int>& labels) {
    const int64_t n = samples.dim(0);
    const int64_t d = samples.dim(1);
    Embedding out;
    out.labels = labels;
    out.xy.assign(static_cast<size_t>(n) * 2, 0.0);

    Eigen::MatrixXd X(n, d);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) X(i, j) = samples[i * d + j];
    Eigen::RowVectorXd mu = X.colwise().mean();
    X.rowwise() -= mu;

    // Gram trick: n is typically far below d for sign samples
    Eigen::MatrixXd G = X * X.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const auto& ev = es.eigenvalues();
    int64_t i1 = n - 1, i2 = n - 2;
    if (i2 < 0 || ev(i2) <= 1e-9 * std::max(1.0, ev(i1))) {
        out.fallback = true;
        for (int64_t i = 0; i < n; ++i) {
            out.xy[static_cast<size_t>(i) * 2] = samples[i * d];
            out.xy[static_cast<size_t>(i) * 2 + 1] = d > 1 ? samples[i * d + 1] : 0.0;
        }
        return out;
    }
    // PCA coordinates = U * sigma for top-2 axes
    for (int64_t i = 0; i < n; ++i) {
        out.xy[static_cast<size_t>(i) * 2] = es.eigenvectors()(i, i1) * std::sqrt(ev(i1));
        out.xy[static_cast<size_t>(i) * 2 + 1] = es.eigenvectors()(i, i2) * std::sqrt(ev(i2));
    }
    return out;
}

WeightHistogram weight_histogram(const nn::Model& m) {
    static const double kEdges[] = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
    const int nb = 7;
    WeightHistogram h;
    h.edges.assign(kEdges, kEdges + nb);
    for (const nn::Param* p : m.params()) {
        if (!p->is_conv_weight) continue;
        LayerHistogram lh;
        lh.name = p->name;
        lh.pct.assign(static_cast<size_t>(nb), 0.0);
        const int64_t n = p->w.numel();
        if (n == 0) throw_input("weight_histogram: empty conv layer " + p->name);
        double wbar = dsum_abs(p->w.data(), n) / static_cast<double>(n);
        double den = std::max(wbar, 1e-12);
        for (int64_t i = 0; i < n; ++i) {
            double r = std::abs(std::abs(static_cast<double>(p->w[i])) - wbar) / den;
            lh.max_r = std::max(lh.max_r, r);
            int b = nb - 1;
            for (int j = 1; j < nb; ++j) {
                if (r < kEdges[j]) {
                    b = j - 1;
                    break;
                }
            }
            lh.pct[static_cast<size_t>(b)] += 1.0;
        }
        for (auto& v : lh.pct) v = 100.0 * v / static_cast<double>(n);
        h.layers.push_back(std::move(lh));
    }
    return h;
}

static double cosine(const float* a, const float* b, int64_t n) {
    double dot = ddot(a, b, n);
    double na = std::sqrt(dsum_sq(a, n));
    double nb_ = std::sqrt(dsum_sq(b, n));
    if (na <= 0.0 || nb_ <= 0.0) return 0.0;
    return dot / (na * nb_);
}

SimilarityPoint similarity_point(nn::Model& m, const fat::Dataset& data, float xi,
                                 int pair_samples, uint64_t seed) {
    const int64_t n = data.n();
    const int64_t img = data.x.numel() / n;
    const int K = data.num_classes;
    Rng rng(seed);

    // FGSM examples for the whole pool we sample pairs from
    const int64_t pool = std::min<int64_t>(n, 512);
    std::vector<int64_t> idx(static_cast<size_t>(pool));
    std::iota(idx.begin(), idx.end(), 0);
    Tensor xp;
    std::vector<int> yp;
    fat::gather_batch(data, idx, 0, pool, &xp, &yp);
    Tensor d0(xp.shape());
    attack::draw_init_noise(rng, attack::InitNoise::Uniform, xi, &d0);

    Tensor delta({pool, img}), xadv(xp.shape()), probs({pool, K});
    const int64_t bs = 256;
    for (int64_t lo = 0; lo < pool; lo += bs) {
        int64_t hi = std::min(pool, lo + bs);
        std::vector<int64_t> shape = xp.shape();
        shape[0] = hi - lo;
        Tensor xb(shape), db(shape);
        std::copy(xp.data() + lo * img, xp.data() + hi * img, xb.data());
        std::copy(d0.data() + lo * img, d0.data() + hi * img, db.data());
        std::vector<int> yb(yp.begin() + lo, yp.begin() + hi);
        attack::FgsmOut out;
        attack::craft_fgsm(m, xb, yb, db, 1.25f * xi, xi, nn::Mode::Eval, false, &out);
        nn::FwdCache cache;
        m.forward(out.x_adv, nn::Mode::Eval, false, cache);
        for (int64_t i = 0; i < hi - lo; ++i) {
            const float* lr = cache.logits.data() + i * K;
            double mx = lr[0];
            for (int c = 1; c < K; ++c) mx = std::max(mx, static_cast<double>(lr[c]));
            double se = 0.0;
            for (int c = 0; c < K; ++c) se += std::exp(lr[c] - mx);
            for (int c = 0; c < K; ++c)
                probs[(lo + i) * K + c] = static_cast<float>(std::exp(lr[c] - mx) / se);
            for (int64_t j = 0; j < img; ++j) {
                float dv = out.x_adv[i * img + j] - xb[i * img + j];
                delta[(lo + i) * img + j] = dv;
                xadv[(lo + i) * img + j] = out.x_adv[i * img + j];
            }
        }
    }

    std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(K));
    for (int64_t i = 0; i < pool; ++i)
        by_class[static_cast<size_t>(yp[static_cast<size_t>(i)])].push_back(i);

    SimilarityPoint sp;
    int got_intra = 0, got_inter = 0;
    double pred_intra = 0, pred_inter = 0, pert_intra = 0, advex_intra = 0;
    for (int s = 0; s < pair_samples; ++s) {
        // same-class pair
        int t = static_cast<int>(rng.next_index(K));
        const auto& rowsa = by_class[static_cast<size_t>(t)];
        if (rowsa.size() >= 2) {
            int64_t i = rowsa[static_cast<size_t>(rng.next_index(
                static_cast<int64_t>(rowsa.size())))];
            int64_t j = i;
            while (j == i)
                j = rowsa[static_cast<size_t>(rng.next_index(
                    static_cast<int64_t>(rowsa.size())))];
            pred_intra += cosine(probs.data() + i * K, probs.data() + j * K, K);
            pert_intra += cosine(delta.data() + i * img, delta.data() + j * img, img);
            advex_intra += cosine(xadv.data() + i * img, xadv.data() + j * img, img);
            ++got_intra;
        }
        // cross-class pair
        int64_t i = rng.next_index(pool);
        int64_t j = i;
        while (j == i || yp[static_cast<size_t>(j)] == yp[static_cast<size_t>(i)])
            j = rng.next_index(pool);
        pred_inter += cosine(probs.data() + i * K, probs.data() + j * K, K);
        ++got_inter;
    }
    if (got_intra) {
        sp.intraclass_pred = pred_intra / got_intra;
        sp.intraclass_perturb = pert_intra / got_intra;
        sp.intraclass_advexample = advex_intra / got_intra;
    }
    if (got_inter) sp.interclass_pred = pred_inter / got_inter;
    return sp;
}

Tensor extract_ucd_trigger(const Tensor& bank, int t, float xi) {
    const int K = static_cast<int>(bank.dim(0));
    if (t < 0 || t >= K) throw_input("extract_ucd_trigger: class out of range");
    const int64_t img = bank.numel() / K;
    std::vector<int64_t> shape(bank.shape().begin() + 1, bank.shape().end());
    Tensor trig(shape);
    const float* src = bank.data() + static_cast<int64_t>(t) * img;
    float mx = 0.0f;
    for (int64_t i = 0; i < img; ++i) mx = std::max(mx, std::abs(src[i]));
    if (mx <= 0.0f) return trig;
    const float scale = xi / mx;
    for (int64_t i = 0; i < img; ++i) trig[i] = src[i] * scale;
    return trig;
}

InjectReport inject_trigger(nn::Model& m, const Tensor& x, const std::vector<int>& y,
                            const Tensor& trigger, float strength, int target_class) {
    const int64_t n = x.dim(0);
    const int64_t img = x.numel() / n;
    if (trigger.numel() != img) throw_input("inject_trigger: trigger shape mismatch");
    Tensor xi_(x.shape());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < img; ++j)
            xi_[i * img + j] = clampf(x[i * img + j] + strength * trigger[j], 0.0f, 1.0f);

    InjectReport rep;
    nn::FwdCache cache;
    int64_t cor0 = 0, cor1 = 0, t0 = 0, t1 = 0;
    const int64_t bs = 256;
    for (int64_t lo = 0; lo < n; lo += bs) {
        int64_t hi = std::min(n, lo + bs);
        std::vector<int64_t> shape = x.shape();
        shape[0] = hi - lo;
        Tensor xb(shape);
        std::copy(x.data() + lo * img, x.data() + hi * img, xb.data());
        m.forward(xb, nn::Mode::Eval, false, cache);
        for (int64_t i = 0; i < hi - lo; ++i) {
            int p = nn::argmax_row(cache.logits, static_cast<int>(i));
            if (p == y[static_cast<size_t>(lo + i)]) ++cor0;
            if (p == target_class) ++t0;
        }
        std::copy(xi_.data() + lo * img, xi_.data() + hi * img, xb.data());
        m.forward(xb, nn::Mode::Eval, false, cache);
        for (int64_t i = 0; i < hi - lo; ++i) {
            int p = nn::argmax_row(cache.logits, static_cast<int>(i));
            if (p == y[static_cast<size_t>(lo + i)]) ++cor1;
            if (p == target_class) ++t1;
        }
    }
    rep.clean_acc = 100.0 * static_cast<double>(cor0) / static_cast<double>(n);
    rep.injected_acc = 100.0 * static_cast<double>(cor1) / static_cast<double>(n);
    rep.clean_target_rate = 100.0 * static_cast<double>(t0) / static_cast<double>(n);
    rep.injected_target_rate = 100.0 * static_cast<double>(t1) / static_cast<double>(n);
    rep.accuracy_delta = rep.injected_acc - rep.clean_acc;
    return rep;
}

bool accuracy_ordering_check(double clean, double perturbed, double adv, double chance,
                             double tol, double tol2) {
    return adv >= perturbed - tol && std::abs(perturbed - clean) <= tol2 &&
           clean > 2.0 * chance;
}

}  // namespace fatlab::diag
