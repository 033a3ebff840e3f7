#pragma once

#include <string>
#include <vector>

#include "core/tensor.h"
#include "fat/train.h"
#include "nn/model.h"

namespace fatlab::diag {

// Exact 1-D Wasserstein-1 between two empirical distributions given as
// unsorted samples (quantile-function integration; sample counts may differ).
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

// Sliced approximation for D-dimensional point sets: average over n_proj
// seeded random unit directions of the exact 1-D distance between the
// projected sets. Rows are samples.
double sliced_wasserstein(const float* a, int64_t na, const float* b, int64_t nb,
                          int64_t dim, int n_proj, uint64_t seed);

struct DistanceMatrix {
    int k = 0;
    std::vector<double> values;  // k*k, symmetric, zero diagonal
    std::vector<int> class_counts;
    double at(int i, int j) const { return values[static_cast<size_t>(i) * k + j]; }
    double offdiag_mean() const;
};

// delta_sign samples per class from FGSM at random starts (eval-mode
// gradients), then pairwise sliced Wasserstein distances.
DistanceMatrix sign_distance_matrix(nn::Model& m, const fat::Dataset& data, float xi,
                                    int n_proj, uint64_t seed, int max_per_class = 64);

// Collects per-class delta_sign rows (the raw material of the matrix and the
// 2-D embedding).
void collect_sign_samples(nn::Model& m, const fat::Dataset& data, float xi, uint64_t seed,
                          int max_per_class, Tensor* samples, std::vector<int>* labels);

struct Embedding {
    std::vector<double> xy;  // 2 per sample
    std::vector<int> labels;
    bool fallback = false;  // rank-deficient input, raw first two coordinates
};

// Top-2 principal axes projection of the centered sample matrix.
Embedding embed_2d(const Tensor& samples, const std::vector<int>& labels);

struct LayerHistogram {
    std::string name;
    std::vector<double> pct;  // per bucket, sums to 100
    double max_r = 0;
};
struct WeightHistogram {
    std::vector<double> edges;  // lower bucket edges; last bucket unbounded
    std::vector<LayerHistogram> layers;
};
WeightHistogram weight_histogram(const nn::Model& m);

struct SimilarityPoint {
    double interclass_pred = 0;
    double intraclass_pred = 0;
    double intraclass_perturb = 0;
    double intraclass_advexample = 0;
};

// Cosine similarities over sampled same-class / cross-class pairs: softmax
// predictions on FGSM examples, the perturbations delta, and x + delta.
SimilarityPoint similarity_point(nn::Model& m, const fat::Dataset& data, float xi,
                                 int pair_samples, uint64_t seed);

// Class-t bank pattern scaled so its infinity norm is xi (zero bank stays
// zero).
Tensor extract_ucd_trigger(const Tensor& bank, int t, float xi);

struct InjectReport {
    double clean_acc = 0;
    double injected_acc = 0;
    double clean_target_rate = 0;     // fraction predicted as class t
    double injected_target_rate = 0;
    double accuracy_delta = 0;
};
InjectReport inject_trigger(nn::Model& m, const Tensor& x, const std::vector<int>& y,
                            const Tensor& trigger, float strength, int target_class);

// Eq.-style ordering at one epoch: adv >= perturbed - tol, |perturbed -
// clean| <= tol2, clean > 2 * chance.
bool accuracy_ordering_check(double clean, double perturbed, double adv, double chance,
                             double tol = 2.0, double tol2 = 5.0);

}  // namespace fatlab::diag
