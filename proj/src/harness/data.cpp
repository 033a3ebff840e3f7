#include "harness/data.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "core/error.h"
#include "core/rng.h"

namespace fatlab::harness {

Source parse_source(const std::string& s) {
    if (s == "synthetic") return Source::Synthetic;
    if (s == "cifar10-binary") return Source::Cifar10Binary;
    if (s == "mnist-idx") return Source::MnistIdx;
    throw_input("unknown dataset source: '" + s + "'");
}

std::string source_name(Source s) {
    switch (s) {
        case Source::Synthetic: return "synthetic";
        case Source::Cifar10Binary: return "cifar10-binary";
        case Source::MnistIdx: return "mnist-idx";
    }
    return "?";
}

namespace {

constexpr double kPi = 3.14159265358979323846;

// Low-frequency random field per channel, max-abs normalized to 1.
void smooth_field(Rng& rng, int c, int hw, float* out) {
    const int modes = 8, cut = 4;
    for (int ch = 0; ch < c; ++ch) {
        float* f = out + ch * hw * hw;
        std::fill(f, f + hw * hw, 0.0f);
        for (int m = 0; m < modes; ++m) {
            const double ux = static_cast<double>(rng.next_index(cut));
            const double uy = static_cast<double>(rng.next_index(cut));
            const double amp = rng.normal(0.0f, 1.0f);
            const double phase = rng.uniform(0.0f, static_cast<float>(2.0 * kPi));
            for (int y = 0; y < hw; ++y)
                for (int x = 0; x < hw; ++x)
                    f[y * hw + x] += static_cast<float>(
                        amp * std::cos(2.0 * kPi * (ux * x + uy * y) / hw + phase));
        }
        float mx = 0.0f;
        for (int i = 0; i < hw * hw; ++i) mx = std::max(mx, std::abs(f[i]));
        if (mx > 0)
            for (int i = 0; i < hw * hw; ++i) f[i] /= mx;
    }
}

// Gaussian bump at a random center with a random per-channel color.
void blob_pattern(Rng& rng, int c, int hw, float* out) {
    const float cy = rng.uniform(3.0f, static_cast<float>(hw - 3));
    const float cx = rng.uniform(3.0f, static_cast<float>(hw - 3));
    std::vector<float> col(static_cast<size_t>(c));
    float mx = 0.0f;
    for (int ch = 0; ch < c; ++ch) {
        col[static_cast<size_t>(ch)] = rng.uniform(-1.0f, 1.0f);
        mx = std::max(mx, std::abs(col[static_cast<size_t>(ch)]));
    }
    if (mx > 0)
        for (auto& v : col) v /= mx;
    const float s2 = 2.0f * 2.5f * 2.5f;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < hw; ++y)
            for (int x = 0; x < hw; ++x) {
                const float r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                out[(ch * hw + y) * hw + x] = col[static_cast<size_t>(ch)] * std::exp(-r2 / s2);
            }
}

void make_synthetic(const DatasetSpec& spec, fat::Dataset* train, fat::Dataset* test,
                    Tensor* class_patterns) {
    const int K = spec.classes, hw = spec.hw, c = 3;
    const SynthParams& p = spec.synth;
    if (K < 2) throw_input("synthetic dataset needs at least 2 classes");
    if (p.blob_group > 0 && K % p.blob_group != 0)
        throw_input("synthetic blob_group must divide the class count");
    Rng rng(spec.seed);

    const int img = c * hw * hw;
    const int n_groups = p.blob_group > 0 ? K / p.blob_group : 0;
    std::vector<float> blobs(static_cast<size_t>(n_groups) * img);
    for (int g = 0; g < n_groups; ++g) {
        blob_pattern(rng, c, hw, blobs.data() + static_cast<size_t>(g) * img);
        for (int i = 0; i < img; ++i)
            blobs[static_cast<size_t>(g) * img + i] *= p.blob_amp;
    }
    std::vector<float> deltas(static_cast<size_t>(K) * img);
    for (int t = 0; t < K; ++t) {
        smooth_field(rng, c, hw, deltas.data() + static_cast<size_t>(t) * img);
        for (int i = 0; i < img; ++i)
            deltas[static_cast<size_t>(t) * img + i] *= p.delta_amp;
    }
    Tensor patts({K, c, hw, hw});
    for (int t = 0; t < K; ++t)
        for (int i = 0; i < img; ++i)
            patts[static_cast<int64_t>(t) * img + i] =
                (rng.uniform(-1.0f, 1.0f) >= 0.0f ? 1.0f : -1.0f) * p.patt_amp;
    if (class_patterns) *class_patterns = patts;

    auto sample_split = [&](int n, uint64_t split_seed, fat::Dataset* out) {
        Rng rs(split_seed);
        out->x.reshape_alloc({n, c, hw, hw});
        out->y.resize(static_cast<size_t>(n));
        out->num_classes = K;
        // exact class balance, then a seeded shuffle of the order
        std::vector<int> labels(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = i % K;
        rs.shuffle(labels);
        std::vector<float> field(static_cast<size_t>(img));
        for (int i = 0; i < n; ++i) {
            const int t = labels[static_cast<size_t>(i)];
            out->y[static_cast<size_t>(i)] = t;
            float* x = out->x.data() + static_cast<int64_t>(i) * img;
            const float base = 0.5f + p.bright * rs.uniform(-1.0f, 1.0f);
            const float* dl = deltas.data() + static_cast<size_t>(t) * img;
            const float* pt = patts.data() + static_cast<int64_t>(t) * img;
            const float* bl =
                n_groups ? blobs.data() + static_cast<size_t>(t / p.blob_group) * img
                         : nullptr;
            smooth_field(rs, c, hw, field.data());
            for (int j = 0; j < img; ++j) {
                float v = base + dl[j] + pt[j] + p.noise_smooth * field[static_cast<size_t>(j)] +
                          p.noise_white * rs.normal(0.0f, 1.0f);
                if (bl) v += bl[j];
                x[j] = clampf(v, 0.0f, 1.0f);
            }
        }
    };
    sample_split(spec.subset_train, spec.seed + 1, train);
    sample_split(spec.subset_test, spec.seed + 2, test);
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open dataset file: " + path);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
}

// Class-balanced, seed-deterministic subset of `want` examples.
void balanced_subset(const Tensor& x, const std::vector<int>& y, int classes, int want,
                     uint64_t seed, fat::Dataset* out) {
    const int64_t n = x.dim(0);
    const int64_t img = x.numel() / n;
    std::vector<std::vector<int64_t>> per(static_cast<size_t>(classes));
    for (int64_t i = 0; i < n; ++i) {
        const int t = y[static_cast<size_t>(i)];
        if (t >= 0 && t < classes) per[static_cast<size_t>(t)].push_back(i);
    }
    const int per_class = want / classes;
    Rng rng(seed);
    std::vector<int64_t> chosen;
    for (int t = 0; t < classes; ++t) {
        auto& v = per[static_cast<size_t>(t)];
        if (static_cast<int>(v.size()) < per_class)
            throw_input("class " + std::to_string(t) + " has only " +
                        std::to_string(v.size()) + " examples, need " +
                        std::to_string(per_class));
        rng.shuffle(v);
        chosen.insert(chosen.end(), v.begin(), v.begin() + per_class);
    }
    rng.shuffle(chosen);
    std::vector<int64_t> shape = x.shape();
    shape[0] = static_cast<int64_t>(chosen.size());
    out->x.reshape_alloc(shape);
    out->y.resize(chosen.size());
    out->num_classes = classes;
    for (size_t i = 0; i < chosen.size(); ++i) {
        std::copy(x.data() + chosen[i] * img, x.data() + (chosen[i] + 1) * img,
                  out->x.data() + static_cast<int64_t>(i) * img);
        out->y[i] = y[static_cast<size_t>(chosen[i])];
    }
}

void read_cifar_batch(const std::string& path, std::vector<float>* pixels,
                      std::vector<int>* labels) {
    const auto bytes = read_file(path);
    constexpr size_t rec = 3073;
    if (bytes.size() % rec != 0)
        throw_format(path + ": size " + std::to_string(bytes.size()) +
                     " is not a multiple of 3073 (trailing garbage at byte offset " +
                     std::to_string((bytes.size() / rec) * rec) + ")");
    const size_t n = bytes.size() / rec;
    for (size_t i = 0; i < n; ++i) {
        const uint8_t lab = bytes[i * rec];
        if (lab > 9)
            throw_format(path + ": label byte " + std::to_string(lab) +
                         " out of range at byte offset " + std::to_string(i * rec));
        labels->push_back(lab);
        for (size_t j = 0; j < 3072; ++j)
            pixels->push_back(static_cast<float>(bytes[i * rec + 1 + j]) / 255.0f);
    }
}

void load_cifar(const DatasetSpec& spec, fat::Dataset* train, fat::Dataset* test) {
    if (spec.classes < 2 || spec.classes > 10)
        throw_input("cifar10-binary supports 2..10 classes");
    std::vector<float> px;
    std::vector<int> lab;
    for (int b = 1; b <= 5; ++b) {
        const std::string path = spec.root + "/data_batch_" + std::to_string(b) + ".bin";
        std::ifstream probe(path, std::ios::binary);
        if (!probe) {
            if (b == 1) throw_io("missing " + path);
            break;  // fewer batches present is fine at desk scale
        }
        probe.close();
        read_cifar_batch(path, &px, &lab);
    }
    Tensor all({static_cast<int64_t>(lab.size()), 3, 32, 32});
    std::copy(px.begin(), px.end(), all.data());
    balanced_subset(all, lab, spec.classes, spec.subset_train, spec.seed + 11, train);

    std::vector<float> tpx;
    std::vector<int> tlab;
    read_cifar_batch(spec.root + "/test_batch.bin", &tpx, &tlab);
    Tensor tall({static_cast<int64_t>(tlab.size()), 3, 32, 32});
    std::copy(tpx.begin(), tpx.end(), tall.data());
    balanced_subset(tall, tlab, spec.classes, spec.subset_test, spec.seed + 12, test);
}

uint32_t be32(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
    if (off + 4 > b.size())
        throw_format(path + ": truncated header at byte offset " + std::to_string(off));
    return (static_cast<uint32_t>(b[off]) << 24) | (static_cast<uint32_t>(b[off + 1]) << 16) |
           (static_cast<uint32_t>(b[off + 2]) << 8) | static_cast<uint32_t>(b[off + 3]);
}

void read_idx_pair(const std::string& img_path, const std::string& lab_path,
                   std::vector<float>* pixels, std::vector<int>* labels, int* rows,
                   int* cols) {
    const auto ib = read_file(img_path);
    if (be32(ib, 0, img_path) != 0x00000803u)
        throw_format(img_path + ": bad IDX image magic at byte offset 0");
    const uint32_t n = be32(ib, 4, img_path);
    *rows = static_cast<int>(be32(ib, 8, img_path));
    *cols = static_cast<int>(be32(ib, 12, img_path));
    const size_t need = 16 + static_cast<size_t>(n) * (*rows) * (*cols);
    if (ib.size() != need)
        throw_format(img_path + ": expected " + std::to_string(need) + " bytes, got " +
                     std::to_string(ib.size()) + " (record data ends at byte offset " +
                     std::to_string(ib.size()) + ")");

    const auto lb = read_file(lab_path);
    if (be32(lb, 0, lab_path) != 0x00000801u)
        throw_format(lab_path + ": bad IDX label magic at byte offset 0");
    const uint32_t ln = be32(lb, 4, lab_path);
    if (ln != n)
        throw_format(lab_path + ": label count " + std::to_string(ln) +
                     " does not match image count " + std::to_string(n));
    if (lb.size() != 8 + static_cast<size_t>(n))
        throw_format(lab_path + ": truncated labels at byte offset " +
                     std::to_string(lb.size()));

    pixels->reserve(static_cast<size_t>(n) * (*rows) * (*cols));
    for (size_t i = 0; i < static_cast<size_t>(n) * (*rows) * (*cols); ++i)
        pixels->push_back(static_cast<float>(ib[16 + i]) / 255.0f);
    for (uint32_t i = 0; i < n; ++i) labels->push_back(lb[8 + i]);
}

void load_mnist(const DatasetSpec& spec, fat::Dataset* train, fat::Dataset* test) {
    if (spec.classes < 2 || spec.classes > 10)
        throw_input("mnist-idx supports 2..10 classes");
    std::vector<float> px, tpx;
    std::vector<int> lab, tlab;
    int r = 0, c = 0, tr = 0, tc = 0;
    read_idx_pair(spec.root + "/train-images-idx3-ubyte",
                  spec.root + "/train-labels-idx1-ubyte", &px, &lab, &r, &c);
    read_idx_pair(spec.root + "/t10k-images-idx3-ubyte",
                  spec.root + "/t10k-labels-idx1-ubyte", &tpx, &tlab, &tr, &tc);
    if (r != tr || c != tc) throw_format("mnist train/test image sizes disagree");
    Tensor all({static_cast<int64_t>(lab.size()), 1, r, c});
    std::copy(px.begin(), px.end(), all.data());
    balanced_subset(all, lab, spec.classes, spec.subset_train, spec.seed + 11, train);
    Tensor tall({static_cast<int64_t>(tlab.size()), 1, tr, tc});
    std::copy(tpx.begin(), tpx.end(), tall.data());
    balanced_subset(tall, tlab, spec.classes, spec.subset_test, spec.seed + 12, test);
}

}  // namespace

void load_dataset(const DatasetSpec& spec, fat::Dataset* train, fat::Dataset* test,
                  Tensor* class_patterns) {
    if (spec.subset_train <= 0 || spec.subset_test <= 0)
        throw_input("dataset subset sizes must be positive");
    switch (spec.source) {
        case Source::Synthetic:
            make_synthetic(spec, train, test, class_patterns);
            return;
        case Source::Cifar10Binary:
            load_cifar(spec, train, test);
            return;
        case Source::MnistIdx:
            load_mnist(spec, train, test);
            return;
    }
    throw_input("unhandled dataset source");
}

}  // namespace fatlab::harness
