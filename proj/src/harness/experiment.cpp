#include "harness/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/error.h"
#include "core/rng.h"
#include "diag/diagnostics.h"
#include "harness/checkpoint.h"
#include "harness/metrics.h"
#include "harness/plot.h"

namespace fs = std::filesystem;

namespace fatlab::harness {

namespace {

std::string seed_dir(const std::string& run_dir, uint64_t seed) {
    return run_dir + "/seed" + std::to_string(seed);
}

std::string epoch_ckpt(const std::string& sdir, int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "/ckpt_epoch_%03d.bin", epoch);
    return sdir + buf;
}

void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_io("cannot write " + path);
    out << body;
}

attack::InitNoise parse_init_noise(const std::string& s) {
    if (s == "uniform") return attack::InitNoise::Uniform;
    if (s == "gaussian-clip") return attack::InitNoise::GaussianClip;
    throw_input("unknown init_noise: '" + s + "'");
}

fat::Method parse_method(const std::string& s) {
    if (s == "fgsm-rs") return fat::Method::FgsmRs;
    if (s == "fgsm-mep") return fat::Method::FgsmMep;
    throw_input("unknown train method: '" + s + "'");
}

}  // namespace

const std::set<std::string>& config_schema() {
    static const std::set<std::string> schema = {
        // data
        "data.source", "data.root", "data.subset_train", "data.subset_test",
        "data.classes", "data.hw", "data.blob_group", "data.blob_amp", "data.delta_amp",
        "data.patt_amp", "data.noise_smooth", "data.noise_white", "data.bright",
        // train
        "train.method", "train.epochs", "train.lr_max", "train.lr_peak", "train.batch",
        "train.momentum", "train.xi", "train.eps_scale", "train.regs", "train.alpha_aux",
        "train.beta", "train.eta", "train.alpha_reg", "train.lam_l2", "train.fd_h",
        "train.mep_mu", "train.init_noise", "train.aux_per_example", "train.outlier_signed",
        "train.eval_clean_n", "train.eval_pgd_n", "train.pgd_steps", "train.pgd_restarts",
        // run
        "run.out_dir", "run.seeds", "run.diagnostics", "run.keep_epoch_checkpoints",
        // diag
        "diag.n_proj", "diag.max_per_class", "diag.similarity_every", "diag.pair_samples",
        "diag.trigger_strength",
        // finetune
        "finetune.recipe", "finetune.k", "finetune.epochs", "finetune.lr",
        "finetune.lambda_shift", "finetune.rsft_raw_inner", "finetune.adversarial_data",
        "finetune.batch", "finetune.probe_epochs",
        // poison
        "poison.budget", "poison.mode", "poison.generator_epochs", "poison.surrogate_steps",
        "poison.pert_steps", "poison.transfer_epochs", "poison.transfer_lr",
        "poison.noise_scale",
        // sweep
        "sweep.axis", "sweep.values",
        // attack-eval
        "attack.pgd_steps", "attack.pgd_restarts", "attack.clean_n", "attack.pgd_n",
    };
    return schema;
}

DatasetSpec dataset_spec_from(const Config& cfg, uint64_t seed) {
    DatasetSpec spec;
    spec.source = parse_source(cfg.get_str("data", "source", "synthetic"));
    spec.root = cfg.get_str("data", "root", "");
    if (spec.root.empty()) {
        const char* env = std::getenv("FATLAB_DATA_ROOT");
        if (env) spec.root = env;
    }
    spec.subset_train = cfg.get_int("data", "subset_train", 4096);
    spec.subset_test = cfg.get_int("data", "subset_test", 1024);
    spec.classes = cfg.get_int("data", "classes", 8);
    spec.hw = cfg.get_int("data", "hw", 16);
    spec.seed = seed;
    spec.synth.blob_group = cfg.get_int("data", "blob_group", spec.synth.blob_group);
    spec.synth.blob_amp =
        static_cast<float>(cfg.get_real("data", "blob_amp", spec.synth.blob_amp));
    spec.synth.delta_amp =
        static_cast<float>(cfg.get_real("data", "delta_amp", spec.synth.delta_amp));
    spec.synth.patt_amp =
        static_cast<float>(cfg.get_real("data", "patt_amp", spec.synth.patt_amp));
    spec.synth.noise_smooth =
        static_cast<float>(cfg.get_real("data", "noise_smooth", spec.synth.noise_smooth));
    spec.synth.noise_white =
        static_cast<float>(cfg.get_real("data", "noise_white", spec.synth.noise_white));
    spec.synth.bright = static_cast<float>(cfg.get_real("data", "bright", spec.synth.bright));
    return spec;
}

fat::TrainSettings train_settings_from(const Config& cfg, uint64_t seed) {
    fat::TrainSettings ts;
    ts.method = parse_method(cfg.get_str("train", "method", "fgsm-rs"));
    ts.epochs = cfg.get_int("train", "epochs", 30);
    ts.lr_max = cfg.get_real("train", "lr_max", ts.lr_max);
    ts.lr_peak = cfg.get_real("train", "lr_peak", ts.lr_peak);
    ts.batch = cfg.get_int("train", "batch", ts.batch);
    ts.momentum = cfg.get_real("train", "momentum", ts.momentum);
    ts.xi = static_cast<float>(cfg.get_real("train", "xi", ts.xi));
    ts.eps_scale = static_cast<float>(cfg.get_real("train", "eps_scale", ts.eps_scale));
    ts.mep_mu = cfg.get_real("train", "mep_mu", ts.mep_mu);
    ts.init_noise = parse_init_noise(cfg.get_str("train", "init_noise", "uniform"));
    ts.seed = seed;
    ts.eval_clean_n = cfg.get_int("train", "eval_clean_n", ts.eval_clean_n);
    ts.eval_pgd_n = cfg.get_int("train", "eval_pgd_n", ts.eval_pgd_n);
    ts.pgd_steps = cfg.get_int("train", "pgd_steps", ts.pgd_steps);
    ts.pgd_restarts = cfg.get_int("train", "pgd_restarts", ts.pgd_restarts);

    fat::RegSettings& r = ts.regs;
    std::istringstream regs(cfg.get_str("train", "regs", ""));
    std::string item;
    while (std::getline(regs, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (item.empty()) continue;
        if (item == "aux") r.aux = true;
        else if (item == "outlier") r.outlier = true;
        else if (item == "l2") r.l2 = true;
        else if (item == "clip") r.clip = true;
        else if (item == "r_pred") r.r_pred = true;
        else throw_input("unknown regularizer '" + item + "' (aux,outlier,l2,clip,r_pred)");
    }
    r.alpha_aux = cfg.get_real("train", "alpha_aux", r.alpha_aux);
    r.beta = cfg.get_real("train", "beta", r.beta);
    r.eta = cfg.get_real("train", "eta", r.eta);
    r.alpha_reg = cfg.get_real("train", "alpha_reg", r.alpha_reg);
    r.lam_l2 = cfg.get_real("train", "lam_l2", r.lam_l2);
    r.fd_h = cfg.get_real("train", "fd_h", r.fd_h);
    r.aux_per_example = cfg.get_bool("train", "aux_per_example", r.aux_per_example);
    r.outlier_signed = cfg.get_bool("train", "outlier_signed", r.outlier_signed);
    return ts;
}

fat::FinetuneSettings finetune_settings_from(const Config& cfg) {
    fat::FinetuneSettings fs_;
    const std::string rec = cfg.get_str("finetune", "recipe", "vft");
    if (!fat::parse_recipe(rec, &fs_.kind)) throw_input("unknown finetune recipe: " + rec);
    fs_.k = cfg.get_int("finetune", "k", fs_.k);
    fs_.epochs = cfg.get_int("finetune", "epochs", fs_.epochs);
    fs_.lr = cfg.get_real("finetune", "lr", fs_.lr);
    fs_.lambda_shift = cfg.get_real("finetune", "lambda_shift", fs_.lambda_shift);
    fs_.rsft_raw_inner = cfg.get_bool("finetune", "rsft_raw_inner", fs_.rsft_raw_inner);
    fs_.adversarial_data = cfg.get_bool("finetune", "adversarial_data", fs_.adversarial_data);
    fs_.batch = cfg.get_int("finetune", "batch", fs_.batch);
    fs_.xi = static_cast<float>(cfg.get_real("train", "xi", fs_.xi));
    fs_.eps_scale = static_cast<float>(cfg.get_real("train", "eps_scale", fs_.eps_scale));
    return fs_;
}

poison::PoisonSpec poison_spec_from(const Config& cfg) {
    poison::PoisonSpec ps;
    ps.budget = static_cast<float>(cfg.get_real("poison", "budget", ps.budget));
    const std::string mode = cfg.get_str("poison", "mode", "class");
    if (mode == "class") ps.mode = poison::PoisonMode::ClassWise;
    else if (mode == "sample") ps.mode = poison::PoisonMode::SampleWise;
    else throw_input("poison.mode must be class or sample");
    ps.generator_epochs = cfg.get_int("poison", "generator_epochs", ps.generator_epochs);
    return ps;
}

std::string st_string(const std::vector<SeedOutcome>& seeds) {
    std::string st;
    for (const auto& s : seeds) st += s.co ? "o" : "*";
    return st;
}

namespace {

struct SeedArtifacts {
    std::vector<MetricsRecord> rows;
};

SeedOutcome run_one_seed(const Config& cfg, const std::string& run_dir, uint64_t seed) {
    const std::string sdir = seed_dir(run_dir, seed);
    fs::create_directories(sdir);
    fs::create_directories(sdir + "/diag");

    fat::Dataset train, test;
    load_dataset(dataset_spec_from(cfg, seed), &train, &test);
    fat::TrainSettings ts = train_settings_from(cfg, seed);

    nn::Model model(static_cast<int>(train.x.dim(1)), static_cast<int>(train.x.dim(2)),
                    static_cast<int>(train.x.dim(3)), train.num_classes);
    Rng init_rng(seed);
    model.init_params(init_rng);

    const bool keep_epochs = cfg.get_bool("run", "keep_epoch_checkpoints", true);

    std::ofstream mcsv(sdir + "/metrics.csv", std::ios::binary);
    if (!mcsv) throw_io("cannot write " + sdir + "/metrics.csv");
    mcsv << metrics_csv_header();

    double best_pgd = -1;
    int best_epoch = -1;
    auto hook = [&](int epoch, const fat::EpochStats& st, nn::Model& m,
                    const Tensor&) -> bool {
        mcsv << metrics_csv_row(to_record(epoch, st));
        mcsv.flush();
        if (keep_epochs) save_checkpoint(epoch_ckpt(sdir, epoch), m, seed, epoch);
        if (st.pgd10 > best_pgd) {
            best_pgd = st.pgd10;
            best_epoch = epoch;
            save_checkpoint(sdir + "/ckpt_best_pgd10.bin", m, seed, epoch);
        }
        return true;
    };

    const auto t0 = std::chrono::steady_clock::now();
    fat::TrainResult res = train_fat(model, train, test, ts, hook);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    mcsv.close();

    save_checkpoint(sdir + "/ckpt_final.bin", model, seed, ts.epochs - 1);
    {
        Container bank;
        bank.tensors.emplace_back("trigger_bank", res.trigger_bank);
        bank.ints.emplace_back("epoch", static_cast<int64_t>(res.history.size()) - 1);
        bank.ints.emplace_back("rng_seed", static_cast<int64_t>(seed));
        write_container(sdir + "/trigger_bank.bin", bank);
    }

    SeedOutcome out;
    out.seed = seed;
    out.co = res.co;
    out.co_epoch = res.co_epoch;
    out.best_pgd10 = best_pgd;
    out.best_epoch = best_epoch;
    out.aborted = res.aborted;
    out.seconds = secs;
    if (!res.history.empty()) {
        const auto& f = res.history.back();
        out.final_pgd10 = f.pgd10;
        out.final_clean = f.clean;
        out.final_perturbed = f.perturbed;
        out.final_fgsm = f.fgsm;
    }

    if (cfg.get_bool("run", "diagnostics", true)) {
        const int n_proj = cfg.get_int("diag", "n_proj", 64);
        const int max_per_class = cfg.get_int("diag", "max_per_class", 64);
        const int sim_every = cfg.get_int("diag", "similarity_every", 5);
        const int pair_samples = cfg.get_int("diag", "pair_samples", 256);
        const float trig_strength =
            static_cast<float>(cfg.get_real("diag", "trigger_strength", 1.0));

        // distance matrices at the final epoch, the best-pgd10 epoch and, if
        // CO fired, the CO epoch
        auto emit_dm = [&](nn::Model& m, const std::string& tag) {
            diag::DistanceMatrix dm =
                diag::sign_distance_matrix(m, test, ts.xi, n_proj, seed, max_per_class);
            std::ostringstream csv;
            csv << "i,j,value\n";
            for (int i = 0; i < dm.k; ++i)
                for (int j = 0; j < dm.k; ++j)
                    csv << i << "," << j << "," << fmt_real(dm.at(i, j)) << "\n";
            write_text_file(sdir + "/diag/distmat_" + tag + ".csv", csv.str());
        };
        emit_dm(model, "final");
        if (best_epoch >= 0) {
            nn::Model snap(model.in_c(), model.in_h(), model.in_w(), model.num_classes());
            load_checkpoint(sdir + "/ckpt_best_pgd10.bin", &snap);
            emit_dm(snap, "best");
        }
        if (res.co && keep_epochs && res.co_epoch >= 0) {
            nn::Model snap(model.in_c(), model.in_h(), model.in_w(), model.num_classes());
            load_checkpoint(epoch_ckpt(sdir, res.co_epoch), &snap);
            emit_dm(snap, "co");
        }

        // weight histogram of the final model
        {
            diag::WeightHistogram wh = diag::weight_histogram(model);
            std::ostringstream csv;
            csv << "layer,bin_lo,pct\n";
            for (const auto& lh : wh.layers)
                for (size_t b = 0; b < lh.pct.size(); ++b)
                    csv << lh.name << "," << fmt_real(wh.edges[b]) << ","
                        << fmt_real(lh.pct[b]) << "\n";
            write_text_file(sdir + "/diag/weight_hist_final.csv", csv.str());
        }

        // sign-sample embedding of the final model
        {
            Tensor samples;
            std::vector<int> labels;
            diag::collect_sign_samples(model, test, ts.xi, seed, max_per_class, &samples,
                                       &labels);
            diag::Embedding emb = diag::embed_2d(samples, labels);
            std::ostringstream csv;
            csv << "x,y,label\n";
            for (size_t i = 0; i < labels.size(); ++i)
                csv << fmt_real(emb.xy[2 * i]) << "," << fmt_real(emb.xy[2 * i + 1]) << ","
                    << labels[i] << "\n";
            write_text_file(sdir + "/diag/embed_final.csv", csv.str());
        }

        // similarity curves across training, replayed from epoch checkpoints
        if (keep_epochs && sim_every > 0) {
            std::ostringstream csv;
            csv << "epoch,interclass_pred,intraclass_pred,intraclass_perturb,"
                   "intraclass_advexample\n";
            for (int ep = 0; ep < static_cast<int>(res.history.size()); ep += sim_every) {
                nn::Model snap(model.in_c(), model.in_h(), model.in_w(),
                               model.num_classes());
                load_checkpoint(epoch_ckpt(sdir, ep), &snap);
                diag::SimilarityPoint sp =
                    diag::similarity_point(snap, test, ts.xi, pair_samples, seed + ep);
                csv << ep << "," << fmt_real(sp.interclass_pred) << ","
                    << fmt_real(sp.intraclass_pred) << "," << fmt_real(sp.intraclass_perturb)
                    << "," << fmt_real(sp.intraclass_advexample) << "\n";
            }
            write_text_file(sdir + "/diag/similarity.csv", csv.str());
        }

        // per-class trigger probes from the bank
        {
            std::ostringstream csv;
            csv << "class,clean_acc,injected_acc,accuracy_delta,clean_target_rate,"
                   "injected_target_rate\n";
            const int64_t n_eval = std::min<int64_t>(test.n(), 512);
            Tensor xe;
            std::vector<int> ye;
            std::vector<int64_t> idx(static_cast<size_t>(n_eval));
            std::iota(idx.begin(), idx.end(), 0);
            fat::gather_batch(test, idx, 0, n_eval, &xe, &ye);
            for (int t = 0; t < test.num_classes; ++t) {
                Tensor trig = diag::extract_ucd_trigger(res.trigger_bank, t, ts.xi);
                diag::InjectReport rep =
                    diag::inject_trigger(model, xe, ye, trig, trig_strength, t);
                csv << t << "," << fmt_real(rep.clean_acc) << "," << fmt_real(rep.injected_acc)
                    << "," << fmt_real(rep.accuracy_delta) << ","
                    << fmt_real(rep.clean_target_rate) << ","
                    << fmt_real(rep.injected_target_rate) << "\n";
            }
            write_text_file(sdir + "/diag/trigger_inject.csv", csv.str());
        }
    }
    return out;
}

}  // namespace

RunSummary run_experiment(const Config& cfg, bool force) {
    validate_keys(cfg, config_schema());
    RunSummary sum;
    sum.run_dir = cfg.get_str("run", "out_dir", "runs/out");
    const std::string done = sum.run_dir + "/DONE";
    if (!force && fs::exists(done)) {
        sum.skipped = true;
        return sum;
    }
    fs::create_directories(sum.run_dir);
    write_text_file(sum.run_dir + "/config.ini", cfg.serialize());

    std::vector<int> seeds = cfg.get_int_list("run", "seeds", {0, 1, 2});
    std::string failures;
    for (int s : seeds) {
        try {
            sum.seeds.push_back(run_one_seed(cfg, sum.run_dir, static_cast<uint64_t>(s)));
        } catch (const std::exception& e) {
            SeedOutcome bad;
            bad.seed = static_cast<uint64_t>(s);
            bad.aborted = true;
            sum.seeds.push_back(bad);
            failures += "seed " + std::to_string(s) + ": " + e.what() + "\n";
        }
    }
    sum.st = st_string(sum.seeds);

    std::ostringstream csv;
    csv << "seed,co,co_epoch,best_pgd10,best_epoch,final_pgd10,final_clean,"
           "final_perturbed,final_fgsm,aborted\n";
    for (const auto& s : sum.seeds)
        csv << s.seed << "," << (s.co ? 1 : 0) << "," << s.co_epoch << ","
            << fmt_real(s.best_pgd10) << "," << s.best_epoch << "," << fmt_real(s.final_pgd10)
            << "," << fmt_real(s.final_clean) << "," << fmt_real(s.final_perturbed) << ","
            << fmt_real(s.final_fgsm) << "," << (s.aborted ? 1 : 0) << "\n";
    write_text_file(sum.run_dir + "/summary.csv", csv.str());

    std::ostringstream txt;
    txt << "ST " << sum.st << "  (*) stable  (o) catastrophic overfitting\n";
    for (const auto& s : sum.seeds) {
        txt << "seed " << s.seed << ": best pgd10 " << fmt_real(s.best_pgd10) << " @"
            << s.best_epoch << ", final pgd10 " << fmt_real(s.final_pgd10) << ", clean "
            << fmt_real(s.final_clean) << ", fgsm " << fmt_real(s.final_fgsm);
        if (s.co) txt << ", CO at epoch " << s.co_epoch;
        if (s.aborted) txt << " [aborted]";
        txt << " (" << fmt_real(s.seconds) << "s)\n";
    }
    if (!failures.empty()) txt << "failures:\n" << failures;
    write_text_file(sum.run_dir + "/summary.txt", txt.str());
    write_text_file(done, "done\n");
    return sum;
}

SweepTable sweep(const Config& cfg, const std::string& axis,
                 const std::vector<double>& values, bool force) {
    if (axis != "beta" && axis != "alpha_aux" && axis != "eta" && axis != "k")
        throw_input("sweep axis must be one of beta, alpha_aux, eta, k");
    if (values.empty()) throw_input("sweep needs at least one value");

    SweepTable table;
    table.axis = axis;
    table.dir = cfg.get_str("run", "out_dir", "runs/sweep");
    fs::create_directories(table.dir);

    for (size_t vi = 0; vi < values.size(); ++vi) {
        const double v = values[vi];
        Config sub = cfg;
        if (axis == "k") sub.set("finetune", "k", std::to_string(static_cast<int>(v)));
        else sub.set("train", axis, fmt_real(v));
        sub.set("run", "out_dir", table.dir + "/" + axis + "_" + fmt_real(v));
        RunSummary rs = run_experiment(sub, force);
        SweepCell cell;
        cell.value = v;
        if (rs.skipped) {
            // re-read the persisted summary so a prior run still counts
            rs.run_dir = sub.get_str("run", "out_dir", "");
            std::ifstream in(rs.run_dir + "/summary.csv");
            if (in) {
                std::string line;
                std::getline(in, line);  // header
                while (std::getline(in, line)) {
                    std::istringstream ls(line);
                    std::string cell_s;
                    std::vector<std::string> cells;
                    while (std::getline(ls, cell_s, ',')) cells.push_back(cell_s);
                    if (cells.size() < 10) continue;
                    SeedOutcome so;
                    so.seed = static_cast<uint64_t>(std::stoll(cells[0]));
                    so.co = cells[1] == "1";
                    so.co_epoch = std::stoi(cells[2]);
                    so.best_pgd10 = std::stod(cells[3]);
                    so.best_epoch = std::stoi(cells[4]);
                    so.final_pgd10 = std::stod(cells[5]);
                    rs.seeds.push_back(so);
                }
                rs.st = st_string(rs.seeds);
            }
        }
        double best = 0, fin = 0;
        for (const auto& s : rs.seeds) {
            best += s.best_pgd10;
            fin += s.final_pgd10;
            cell.co_count += s.co ? 1 : 0;
        }
        const double n = std::max<size_t>(rs.seeds.size(), 1);
        cell.best_pgd10 = best / n;
        cell.final_pgd10 = fin / n;
        cell.st = rs.st;
        table.cells.push_back(cell);
    }

    std::ostringstream csv;
    csv << axis << ",best_pgd10,final_pgd10,co_count,st\n";
    for (const auto& c : table.cells)
        csv << fmt_real(c.value) << "," << fmt_real(c.best_pgd10) << ","
            << fmt_real(c.final_pgd10) << "," << c.co_count << "," << c.st << "\n";
    write_text_file(table.dir + "/sweep_summary.csv", csv.str());
    return table;
}

PlotReport emit_plots(const std::string& run_dir) {
    PlotReport rep;
    if (!fs::exists(run_dir)) throw_input("run directory not found: " + run_dir);

    auto note = [&](const std::string& p, bool ok) {
        (ok ? rep.emitted : rep.missing).push_back(p);
    };

    for (const auto& entry : fs::directory_iterator(run_dir)) {
        if (!entry.is_directory()) continue;
        const std::string sdir = entry.path().string();
        const std::string name = entry.path().filename().string();
        if (name.rfind("seed", 0) != 0) continue;

        // training dynamics from metrics.csv
        const std::string mpath = sdir + "/metrics.csv";
        if (fs::exists(mpath)) {
            const auto rows = read_metrics_csv(mpath);
            Series cl{"clean", {}, {}}, pe{"perturbed", {}, {}}, fg{"fgsm", {}, {}},
                pg{"pgd10", {}, {}};
            Series mr{"max_dev_ratio", {}, {}};
            for (const auto& r : rows) {
                const double e = r.epoch;
                cl.x.push_back(e);
                cl.y.push_back(r.clean_acc);
                pe.x.push_back(e);
                pe.y.push_back(r.perturbed_acc);
                fg.x.push_back(e);
                fg.y.push_back(r.fgsm_acc);
                pg.x.push_back(e);
                pg.y.push_back(r.pgd10_acc);
                mr.x.push_back(e);
                mr.y.push_back(r.max_dev_ratio);
            }
            plot_lines(sdir + "/dynamics", "training dynamics (" + name + ")", "epoch",
                       "accuracy (%)", {cl, pe, fg, pg});
            note(sdir + "/dynamics.svg", true);
            plot_lines(sdir + "/max_dev_ratio", "weight outlier ratio (" + name + ")",
                       "epoch", "max |d|/mean", {mr});
            note(sdir + "/max_dev_ratio.svg", true);
        } else {
            note(mpath, false);
        }

        // distance-matrix heatmaps
        for (const std::string tag : {"final", "best", "co"}) {
            const std::string dpath = sdir + "/diag/distmat_" + tag + ".csv";
            if (!fs::exists(dpath)) {
                if (tag != "co") note(dpath, false);
                continue;
            }
            std::ifstream in(dpath);
            std::string line;
            std::getline(in, line);
            std::vector<double> vals;
            int k = 0;
            while (std::getline(in, line)) {
                const size_t c1 = line.find(','), c2 = line.rfind(',');
                if (c1 == std::string::npos || c2 == c1) continue;
                const int i = std::stoi(line.substr(0, c1));
                k = std::max(k, i + 1);
                vals.push_back(std::stod(line.substr(c2 + 1)));
            }
            if (k > 0 && vals.size() == static_cast<size_t>(k) * k) {
                plot_heatmap(sdir + "/diag/distmat_" + tag,
                             "sign distance matrix, " + tag + " (" + name + ")", k, vals);
                note(sdir + "/diag/distmat_" + tag + ".svg", true);
            }
        }

        // similarity curves
        const std::string spath = sdir + "/diag/similarity.csv";
        if (fs::exists(spath)) {
            std::ifstream in(spath);
            std::string line;
            std::getline(in, line);
            Series a{"interclass_pred", {}, {}}, b{"intraclass_pred", {}, {}},
                c{"intraclass_perturb", {}, {}}, d{"intraclass_advexample", {}, {}};
            while (std::getline(in, line)) {
                std::istringstream ls(line);
                std::string cell;
                std::vector<double> v;
                while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
                if (v.size() != 5) continue;
                a.x.push_back(v[0]);
                a.y.push_back(v[1]);
                b.x.push_back(v[0]);
                b.y.push_back(v[2]);
                c.x.push_back(v[0]);
                c.y.push_back(v[3]);
                d.x.push_back(v[0]);
                d.y.push_back(v[4]);
            }
            plot_lines(sdir + "/diag/similarity", "similarity curves (" + name + ")",
                       "epoch", "cosine similarity", {a, b, c, d});
            note(sdir + "/diag/similarity.svg", true);
        } else {
            note(spath, false);
        }

        // embedding scatter
        const std::string epath = sdir + "/diag/embed_final.csv";
        if (fs::exists(epath)) {
            std::ifstream in(epath);
            std::string line;
            std::getline(in, line);
            std::vector<double> xy;
            std::vector<int> labels;
            while (std::getline(in, line)) {
                std::istringstream ls(line);
                std::string cell;
                std::vector<std::string> v;
                while (std::getline(ls, cell, ',')) v.push_back(cell);
                if (v.size() != 3) continue;
                xy.push_back(std::stod(v[0]));
                xy.push_back(std::stod(v[1]));
                labels.push_back(std::stoi(v[2]));
            }
            plot_scatter(sdir + "/diag/embed_final", "sign-sample embedding (" + name + ")",
                         xy, labels);
            note(sdir + "/diag/embed_final.svg", true);
        } else {
            note(epath, false);
        }

        // weight histogram bars
        const std::string wpath = sdir + "/diag/weight_hist_final.csv";
        if (fs::exists(wpath)) {
            std::ifstream in(wpath);
            std::string line;
            std::getline(in, line);
            std::vector<std::string> groups;
            std::vector<std::string> bins;
            std::vector<std::vector<double>> pct;
            while (std::getline(in, line)) {
                std::istringstream ls(line);
                std::string layer, bin, val;
                std::getline(ls, layer, ',');
                std::getline(ls, bin, ',');
                std::getline(ls, val, ',');
                if (groups.empty() || groups.back() != layer) {
                    groups.push_back(layer);
                    pct.emplace_back();
                }
                if (pct.size() == 1) bins.push_back(bin);
                pct.back().push_back(std::stod(val));
            }
            plot_grouped_bars(sdir + "/diag/weight_hist_final",
                              "conv weight deviation histogram (" + name + ")", groups, bins,
                              pct);
            note(sdir + "/diag/weight_hist_final.svg", true);
        } else {
            note(wpath, false);
        }
    }
    return rep;
}

}  // namespace fatlab::harness
