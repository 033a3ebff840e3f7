// Infrastructure tests: config parsing, dataset loading and file-format
// validation, the checkpoint container, metrics CSV, plot artifacts and the
// experiment schema glue.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "core/error.h"
#include "harness/checkpoint.h"
#include "harness/config.h"
#include "harness/data.h"
#include "harness/experiment.h"
#include "harness/metrics.h"
#include "harness/plot.h"
#include "nn/model.h"

using namespace fatlab;
using namespace fatlab::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* name) {
    fs::path p = fs::path("unit_scratch") / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_bytes(const fs::path& p, const std::vector<uint8_t>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()),
              static_cast<std::streamsize>(b.size()));
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

bool error_mentions(const std::function<void()>& fn, const std::string& needle,
                    ErrCode code) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code() == code && std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
}

}  // namespace

TEST_CASE("config parses sections, comments and whitespace") {
    Config c = parse_config(
        "# leading comment\n"
        "; comment style two\n"
        "[data]\n"
        "source = synthetic\n"
        "  classes=8\n"
        "\n"
        "[train]\n"
        "xi = 16/255\n");
    CHECK(c.get_str("data", "source", "") == "synthetic");
    CHECK(c.get_int("data", "classes", 0) == 8);
    CHECK(c.get_real("train", "xi", 0) == doctest::Approx(16.0 / 255.0).epsilon(1e-15));
    CHECK(c.get_int("train", "missing", 42) == 42);
    CHECK(!c.has("train", "missing"));
}

TEST_CASE("config rejects malformed documents with line numbers") {
    CHECK(error_mentions([] { parse_config("[a]\nx = 1\nx = 2\n"); }, "line 3",
                         ErrCode::Format));
    CHECK(error_mentions([] { parse_config("key = 1\n"); }, "outside a section",
                         ErrCode::Format));
    CHECK(error_mentions([] { parse_config("[a]\nnovalue\n"); }, "line 2",
                         ErrCode::Format));
    CHECK(error_mentions([] { parse_config("[]\n"); }, "malformed section", ErrCode::Format));
    CHECK(error_mentions([] { parse_config("[ ]\nx = 1\n"); }, "empty section",
                         ErrCode::Format));
    CHECK(error_mentions([] { parse_config("[a]\n = 3\n"); }, "empty key", ErrCode::Format));
}

TEST_CASE("config re-opened sections append to the original") {
    Config c = parse_config("[a]\nx = 1\n[b]\ny = 2\n[a]\nz = 3\n");
    REQUIRE(c.sections.size() == 2);
    CHECK(c.get_int("a", "z", 0) == 3);
    CHECK(c.sections[0].kv.size() == 2);  // x and z both live in [a]
    // duplicate detection still sees the earlier key
    CHECK(error_mentions([] { parse_config("[a]\nx = 1\n[b]\ny = 2\n[a]\nx = 9\n"); },
                         "duplicate", ErrCode::Format));
}

TEST_CASE("config round-trips through serialize byte for byte") {
    const std::string text =
        "[data]\n"
        "source = synthetic\n"
        "classes = 8\n"
        "\n"
        "[train]\n"
        "xi = 16/255\n"
        "epochs = 30\n";
    Config c = parse_config(text);
    std::string once = c.serialize();
    Config c2 = parse_config(once);
    CHECK(c2.serialize() == once);
    // values survive
    CHECK(c2.get_str("train", "xi", "") == "16/255");
}

TEST_CASE("config set and set_dotted") {
    Config c;
    c.set_dotted("run.out_dir=/tmp/x");
    CHECK(c.get_str("run", "out_dir", "") == "/tmp/x");
    c.set_dotted("run.out_dir=/tmp/y");  // overwrite, not duplicate
    CHECK(c.get_str("run", "out_dir", "") == "/tmp/y");
    int n = 0;
    for (const auto& s : c.sections)
        for (const auto& kv : s.kv) n += (kv.first == "out_dir");
    CHECK(n == 1);
    CHECK(error_mentions([&] { c.set_dotted("no_dot=3"); }, "section.key", ErrCode::Input));
    CHECK(error_mentions([&] { c.set_dotted("a.b"); }, "section.key", ErrCode::Input));
}

TEST_CASE("parse_fraction handles exact ratios and rejects junk") {
    CHECK(parse_fraction("16/255") == doctest::Approx(16.0 / 255.0).epsilon(1e-16));
    CHECK(parse_fraction("0.25") == 0.25);
    CHECK(parse_fraction("-3/4") == -0.75);
    CHECK(error_mentions([] { parse_fraction("1/0"); }, "zero denominator", ErrCode::Format));
    CHECK(error_mentions([] { parse_fraction("1/2x"); }, "bad", ErrCode::Format));
    CHECK(error_mentions([] { parse_fraction("abc"); }, "bad real", ErrCode::Format));
}

TEST_CASE("parse_bool and int lists") {
    CHECK(parse_bool("true"));
    CHECK(parse_bool("1"));
    CHECK(!parse_bool("false"));
    CHECK(!parse_bool("0"));
    CHECK(error_mentions([] { parse_bool("maybe"); }, "boolean", ErrCode::Format));
    CHECK(parse_int_list("0, 1,2") == std::vector<int>{0, 1, 2});
    CHECK(error_mentions([] { parse_int_list("1,x"); }, "integer list", ErrCode::Format));
}

TEST_CASE("validate_keys lists every offender") {
    Config c = parse_config("[data]\nsource = synthetic\nbogus = 1\n[junk]\nz = 2\n");
    std::set<std::string> allowed = {"data.source"};
    try {
        validate_keys(c, allowed);
        FAIL("expected an error");
    } catch (const Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("data.bogus") != std::string::npos);
        CHECK(msg.find("junk.z") != std::string::npos);
        CHECK(msg.find("data.source") == std::string::npos);
    }
}

TEST_CASE("synthetic dataset: shapes, balance, range, determinism") {
    DatasetSpec spec;
    spec.subset_train = 256;
    spec.subset_test = 64;
    spec.classes = 8;
    spec.hw = 16;
    spec.seed = 5;
    fat::Dataset tr, te;
    Tensor patterns;
    load_dataset(spec, &tr, &te, &patterns);
    CHECK(tr.n() == 256);
    CHECK(te.n() == 64);
    CHECK(tr.x.dim(1) == 3);
    CHECK(tr.x.dim(2) == 16);
    CHECK(tr.num_classes == 8);
    CHECK(patterns.dim(0) == 8);
    std::vector<int> counts(8, 0);
    for (int v : tr.y) {
        REQUIRE(v >= 0);
        REQUIRE(v < 8);
        counts[static_cast<size_t>(v)]++;
    }
    for (int v : counts) CHECK(v == 32);  // exactly balanced
    for (int64_t i = 0; i < tr.x.numel(); ++i) {
        REQUIRE(tr.x[i] >= 0.0f);
        REQUIRE(tr.x[i] <= 1.0f);
    }
    fat::Dataset tr2, te2;
    load_dataset(spec, &tr2, &te2);
    CHECK(std::equal(tr.x.data(), tr.x.data() + tr.x.numel(), tr2.x.data()));
    CHECK(tr.y == tr2.y);
    spec.seed = 6;
    load_dataset(spec, &tr2, &te2);
    bool differs = !std::equal(tr.x.data(), tr.x.data() + tr.x.numel(), tr2.x.data());
    CHECK(differs);
}

TEST_CASE("synthetic dataset rejects bad geometry") {
    DatasetSpec spec;
    spec.classes = 1;
    fat::Dataset tr, te;
    CHECK(error_mentions([&] { load_dataset(spec, &tr, &te); }, "at least 2",
                         ErrCode::Input));
    spec.classes = 8;
    spec.synth.blob_group = 3;  // does not divide 8
    CHECK(error_mentions([&] { load_dataset(spec, &tr, &te); }, "divide", ErrCode::Input));
}

TEST_CASE("cifar10 binary loader validates record structure") {
    auto dir = scratch_dir("cifar");
    auto make_batch = [&](const fs::path& p, int n, bool bad_label) {
        std::vector<uint8_t> b;
        for (int i = 0; i < n; ++i) {
            b.push_back(bad_label && i == 1 ? uint8_t{77} : static_cast<uint8_t>(i % 10));
            for (int j = 0; j < 3072; ++j) b.push_back(static_cast<uint8_t>((i + j) % 256));
        }
        write_bytes(p, b);
    };
    make_batch(dir / "data_batch_1.bin", 40, false);
    make_batch(dir / "test_batch.bin", 20, false);

    DatasetSpec spec;
    spec.source = Source::Cifar10Binary;
    spec.root = dir.string();
    spec.classes = 10;
    spec.subset_train = 20;
    spec.subset_test = 10;
    spec.seed = 1;
    fat::Dataset tr, te;
    load_dataset(spec, &tr, &te);
    CHECK(tr.n() == 20);
    CHECK(te.n() == 10);
    CHECK(tr.x.dim(1) == 3);
    CHECK(tr.x.dim(2) == 32);
    for (int64_t i = 0; i < tr.x.numel(); ++i) REQUIRE((tr.x[i] >= 0.0f && tr.x[i] <= 1.0f));

    // size not a multiple of the record length
    std::vector<uint8_t> junk(3073 * 2 + 5, 0);
    write_bytes(dir / "data_batch_1.bin", junk);
    CHECK(error_mentions([&] { load_dataset(spec, &tr, &te); }, "size", ErrCode::Format));

    // out-of-range label names the record
    make_batch(dir / "data_batch_1.bin", 40, true);
    CHECK(error_mentions([&] { load_dataset(spec, &tr, &te); }, "label byte",
                         ErrCode::Format));

    // missing first batch is an io error
    fs::remove(dir / "data_batch_1.bin");
    CHECK(error_mentions([&] { load_dataset(spec, &tr, &te); }, "missing", ErrCode::Io));
}

TEST_CASE("mnist idx loader validates magics and lengths") {
    auto dir = scratch_dir("mnist");
    auto be32 = [](std::vector<uint8_t>& b, uint32_t v) {
        b.push_back(static_cast<uint8_t>(v >> 24));
        b.push_back(static_cast<uint8_t>(v >> 16));
        b.push_back(static_cast<uint8_t>(v >> 8));
        b.push_back(static_cast<uint8_t>(v));
    };
    auto make_images = [&](const fs::path& p, uint32_t n, uint32_t magic = 0x803) {
        std::vector<uint8_t> b;
        be32(b, magic);
        be32(b, n);
        be32(b, 28);
        be32(b, 28);
        for (uint32_t i = 0; i < n * 784; ++i) b.push_back(static_cast<uint8_t>(i % 251));
        write_bytes(p, b);
    };
    auto make_labels = [&](const fs::path& p, uint32_t n) {
        std::vector<uint8_t> b;
        be32(b, 0x801);
        be32(b, n);
        for (uint32_t i = 0; i < n; ++i) b.push_back(static_cast<uint8_t>(i % 10));
        write_bytes(p, b);
    };
    make_images(dir / "train-images-idx3-ubyte", 40);
    make_labels(dir / "train-labels-idx1-ubyte", 40);
    make_images(dir / "t10k-images-idx3-ubyte", 20);
    make_labels(dir / "t10k-labels-idx1-ubyte", 20);

    DatasetSpec spec;
    spec.source = Source::MnistIdx;
    spec.root = dir.string();
    spec.classes = 10;
    spec.subset_train = 20;
    spec.subset_test = 10;
    fat::Dataset tr, te;
    load_dataset(spec, &tr, &te);
    CHECK(tr.n() == 20);
    CHECK(tr.x.dim(1) == 1);
    CHECK(tr.x.dim(2) == 28);

    make_images(dir / "train-images-idx3-ubyte", 40, 0x804);
    CHECK(error_mentions([&] { load_dataset(spec, &tr, &te); }, "magic", ErrCode::Format));

    make_images(dir / "train-images-idx3-ubyte", 40);
    make_labels(dir / "train-labels-idx1-ubyte", 39);
    CHECK(error_mentions([&] { load_dataset(spec, &tr, &te); }, "label count",
                         ErrCode::Format));
}

TEST_CASE("container round-trips every entry type exactly") {
    auto dir = scratch_dir("container");
    Container c;
    Tensor t({2, 3});
    for (int64_t i = 0; i < 6; ++i) t[i] = static_cast<float>(i) * 0.25f - 0.6f;
    c.tensors.emplace_back("weights", t);
    c.strings.emplace_back("note", "hello world");
    c.ints.emplace_back("epoch", int64_t{42});
    c.reals.emplace_back("alpha", 1e-5);
    auto p = (dir / "c.bin").string();
    write_container(p, c);
    Container r = read_container(p);
    REQUIRE(r.tensor("weights") != nullptr);
    CHECK(r.tensor("weights")->same_shape(t));
    for (int64_t i = 0; i < 6; ++i) CHECK((*r.tensor("weights"))[i] == t[i]);
    REQUIRE(r.str("note") != nullptr);
    CHECK(*r.str("note") == "hello world");
    REQUIRE(r.integer("epoch") != nullptr);
    CHECK(*r.integer("epoch") == 42);
    REQUIRE(r.real("alpha") != nullptr);
    CHECK(*r.real("alpha") == 1e-5);
    CHECK(r.tensor("absent") == nullptr);
}

TEST_CASE("container rejects corrupted files with byte offsets") {
    auto dir = scratch_dir("container_bad");
    Container c;
    Tensor t({4});
    c.tensors.emplace_back("w", t);
    auto p = (dir / "c.bin").string();
    write_container(p, c);
    std::string bytes = read_file(p);

    // truncation
    write_bytes(dir / "trunc.bin",
                std::vector<uint8_t>(bytes.begin(), bytes.begin() + bytes.size() / 2));
    CHECK(error_mentions([&] { read_container((dir / "trunc.bin").string()); },
                         "truncated", ErrCode::Format));
    // trailing garbage
    std::vector<uint8_t> extra(bytes.begin(), bytes.end());
    extra.push_back(0xAB);
    write_bytes(dir / "trail.bin", extra);
    CHECK(error_mentions([&] { read_container((dir / "trail.bin").string()); },
                         "trailing", ErrCode::Format));
    // bad magic
    std::vector<uint8_t> bad(bytes.begin(), bytes.end());
    bad[0] ^= 0xFF;
    write_bytes(dir / "magic.bin", bad);
    CHECK(error_mentions([&] { read_container((dir / "magic.bin").string()); },
                         "magic", ErrCode::Format));
}

TEST_CASE("model checkpoints restore parameters, stats and geometry") {
    auto dir = scratch_dir("ckpt");
    nn::Model m(3, 16, 16, 5, {4, 8});
    Rng rng(17);
    m.init_params(rng);
    // move the running stats off their init so the round-trip is visible
    m.bn_states()[0].running_mu[0] = 0.37f;
    m.bn_states()[0].running_var[0] = 2.5f;
    auto p = (dir / "m.bin").string();
    save_checkpoint(p, m, 99, 7);

    CheckpointMeta meta;
    auto m2 = open_model_checkpoint(p, &meta);
    CHECK(meta.rng_seed == 99);
    CHECK(meta.epoch == 7);
    CHECK(m2->in_c() == 3);
    CHECK(m2->in_h() == 16);
    CHECK(m2->num_classes() == 5);
    auto a = m.flatten_params();
    auto b = m2->flatten_params();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
    CHECK(m2->bn_states()[0].running_mu[0] == 0.37f);
    CHECK(m2->bn_states()[0].running_var[0] == 2.5f);

    // strict shape checking when loading into an incompatible model
    nn::Model wrong(3, 16, 16, 5, {8, 8});
    CHECK(error_mentions([&] { load_checkpoint(p, &wrong); }, "shape", ErrCode::Format));
}

TEST_CASE("metrics csv columns are the single source of truth") {
    std::string header = metrics_csv_header();
    std::string joined;
    for (size_t i = 0; i < kMetricsColumns.size(); ++i) {
        if (i) joined += ",";
        joined += kMetricsColumns[i];
    }
    CHECK(header == joined + "\n");
}

TEST_CASE("metrics csv round-trips and rejects tampered headers") {
    auto dir = scratch_dir("metrics");
    fat::EpochStats s;
    s.clean = 93.25;
    s.perturbed = 94.5;
    s.fgsm = 90.125;
    s.pgd10 = 1.5;
    s.maxr = 7.25;
    s.train_loss_adv = 0.875;
    s.train_loss_clean = 0.25;
    s.reg_aux = -0.001;
    s.lr_last = 0.05;
    std::vector<MetricsRecord> rows = {to_record(0, s), to_record(1, s)};
    rows[1].pgd10_acc = 0.0;
    auto p = (dir / "m.csv").string();
    write_metrics_csv(p, rows);
    auto back = read_metrics_csv(p);
    REQUIRE(back.size() == 2);
    CHECK(back[0].epoch == 0);
    CHECK(back[0].clean_acc == 93.25);
    CHECK(back[0].fgsm_acc == 90.125);
    CHECK(back[0].reg_aux == -0.001);
    CHECK(back[1].pgd10_acc == 0.0);
    CHECK(back[1].max_dev_ratio == 7.25);

    // identical rows -> identical bytes (the determinism contract)
    auto p2 = (dir / "m2.csv").string();
    write_metrics_csv(p2, rows);
    CHECK(read_file(p) == read_file(p2));

    std::string text = read_file(p);
    text[0] = 'X';
    std::ofstream(dir / "bad.csv") << text;
    CHECK(error_mentions([&] { read_metrics_csv((dir / "bad.csv").string()); }, "header",
                         ErrCode::Format));
}

TEST_CASE("plots write an svg and a csv twin") {
    auto dir = scratch_dir("plots");
    Series s1{"clean & adv", {0, 1, 2}, {90, 95, 97}};
    Series s2{"pgd10", {0, 1, 2}, {40, 30, 0}};
    auto stem = (dir / "dyn").string();
    plot_lines(stem, "accuracy <dynamics>", "epoch", "acc", {s1, s2});
    std::string svg = read_file(dir / "dyn.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("&amp;") != std::string::npos);   // escaped series name
    CHECK(svg.find("&lt;dynamics&gt;") != std::string::npos);
    std::string csv = read_file(dir / "dyn.csv");
    CHECK(csv.find("series,x,y") == 0);
    CHECK(csv.find("pgd10,2,0") != std::string::npos);

    plot_heatmap((dir / "hm").string(), "distances", 2, {0.0, 1.5, 1.5, 0.0});
    CHECK(read_file(dir / "hm.svg").find("<svg") != std::string::npos);
    CHECK(read_file(dir / "hm.csv").find("i,j,value") == 0);

    plot_scatter((dir / "sc").string(), "embed", {0, 0, 1, 1, -1, 2}, {0, 1, 2});
    CHECK(read_file(dir / "sc.svg").find("<svg") != std::string::npos);
    CHECK(read_file(dir / "sc.csv").find("x,y,label") == 0);

    plot_grouped_bars((dir / "wb").string(), "hist", {"conv0", "conv1"}, {"b0", "b1"},
                      {{60, 40}, {70, 30}});
    CHECK(read_file(dir / "wb.svg").find("<svg") != std::string::npos);
    CHECK(read_file(dir / "wb.csv").find("group,bin,pct") == 0);
}

TEST_CASE("experiment schema accepts the documented keys and flags typos") {
    const auto& schema = config_schema();
    for (const char* k :
         {"data.source", "data.classes", "train.epochs", "train.method", "train.regs",
          "train.alpha_aux", "train.eta", "run.out_dir", "run.seeds", "finetune.recipe",
          "poison.budget", "sweep.axis", "diag.n_proj"})
        CHECK(schema.count(k) == 1);

    Config c = parse_config("[train]\nepochz = 3\n");
    CHECK(error_mentions([&] { validate_keys(c, schema); }, "train.epochz",
                         ErrCode::Input));
}

TEST_CASE("typed settings come out of the config correctly") {
    Config c = parse_config(
        "[data]\n"
        "source = synthetic\n"
        "classes = 4\n"
        "subset_train = 128\n"
        "subset_test = 64\n"
        "[train]\n"
        "epochs = 9\n"
        "lr_max = 0.3\n"
        "xi = 8/255\n"
        "method = fgsm-mep\n"
        "regs = aux, outlier\n"
        "alpha_aux = 0.02\n"
        "eta = 7\n"
        "[run]\n"
        "seeds = 0,1,2\n");
    DatasetSpec spec = dataset_spec_from(c, 3);
    CHECK(spec.classes == 4);
    CHECK(spec.subset_train == 128);
    CHECK(spec.seed == 3);
    fat::TrainSettings ts = train_settings_from(c, 11);
    CHECK(ts.epochs == 9);
    CHECK(ts.lr_max == 0.3);
    CHECK(ts.xi == doctest::Approx(8.0f / 255.0f));
    CHECK(ts.method == fat::Method::FgsmMep);
    CHECK(ts.seed == 11);
    CHECK(ts.regs.aux);
    CHECK(ts.regs.outlier);
    CHECK(!ts.regs.l2);
    CHECK(ts.regs.alpha_aux == 0.02);
    CHECK(ts.regs.eta == 7.0);
}

TEST_CASE("st string renders collapse glyphs per seed") {
    std::vector<SeedOutcome> seeds(3);
    seeds[0].co = true;
    seeds[1].co = false;
    seeds[2].co = true;
    CHECK(st_string(seeds) == "o*o");
}
