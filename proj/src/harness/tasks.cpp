#include "harness/tasks.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "core/error.h"
#include "diag/diagnostics.h"
#include "fat/finetune.h"
#include "fat/regularizers.h"
#include "harness/checkpoint.h"
#include "harness/data.h"
#include "harness/experiment.h"
#include "harness/metrics.h"

namespace fs = std::filesystem;

namespace fatlab::harness {

namespace {

uint64_t first_seed(const Config& cfg) {
    const auto seeds = cfg.get_int_list("run", "seeds", {0, 1, 2});
    return seeds.empty() ? 0 : static_cast<uint64_t>(seeds.front());
}

void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_io("cannot write " + path);
    out << body;
}

}  // namespace

std::string task_attack_eval(const Config& cfg, const std::string& ckpt_path) {
    validate_keys(cfg, config_schema());
    const uint64_t seed = first_seed(cfg);
    fat::Dataset train, test;
    load_dataset(dataset_spec_from(cfg, seed), &train, &test);

    CheckpointMeta meta;
    auto model = open_model_checkpoint(ckpt_path, &meta);
    const float xi = static_cast<float>(cfg.get_real("train", "xi", 16.0 / 255.0));
    const int clean_n = cfg.get_int("attack", "clean_n", 400);
    const int pgd_n = cfg.get_int("attack", "pgd_n", 256);
    const int pgd_steps = cfg.get_int("attack", "pgd_steps", 10);
    const int restarts = cfg.get_int("attack", "pgd_restarts", 1);

    fat::EvalScores s =
        fat::evaluate(*model, test, xi, seed, clean_n, pgd_n, pgd_steps, restarts);
    const double chance = 100.0 / test.num_classes;
    const bool ordering =
        diag::accuracy_ordering_check(s.clean, s.perturbed, s.fgsm, chance);

    std::ostringstream out;
    out << "checkpoint " << ckpt_path << " (epoch " << meta.epoch << ")\n"
        << "xi " << fmt_real(xi) << ", pgd steps " << pgd_steps << ", restarts " << restarts
        << "\n"
        << "clean      " << fmt_real(s.clean) << "\n"
        << "perturbed  " << fmt_real(s.perturbed) << "\n"
        << "fgsm       " << fmt_real(s.fgsm) << "\n"
        << "pgd" << pgd_steps << "      " << fmt_real(s.pgd10) << "\n"
        << "ordering(adv>=pert-2, |pert-clean|<=5, clean>2*chance): "
        << (ordering ? "pass" : "fail") << "\n";
    return out.str();
}

std::string task_diagnose(const Config& cfg, const std::string& ckpt_path,
                          const std::string& out_dir) {
    validate_keys(cfg, config_schema());
    const uint64_t seed = first_seed(cfg);
    fat::Dataset train, test;
    load_dataset(dataset_spec_from(cfg, seed), &train, &test);

    CheckpointMeta meta;
    auto model = open_model_checkpoint(ckpt_path, &meta);
    const float xi = static_cast<float>(cfg.get_real("train", "xi", 16.0 / 255.0));
    const int n_proj = cfg.get_int("diag", "n_proj", 64);
    const int max_per_class = cfg.get_int("diag", "max_per_class", 64);
    const int pair_samples = cfg.get_int("diag", "pair_samples", 256);

    fs::create_directories(out_dir);
    std::ostringstream out;
    out << "checkpoint " << ckpt_path << " (epoch " << meta.epoch << ")\n";

    diag::DistanceMatrix dm =
        diag::sign_distance_matrix(*model, test, xi, n_proj, seed, max_per_class);
    {
        std::ostringstream csv;
        csv << "i,j,value\n";
        for (int i = 0; i < dm.k; ++i)
            for (int j = 0; j < dm.k; ++j)
                csv << i << "," << j << "," << fmt_real(dm.at(i, j)) << "\n";
        write_text_file(out_dir + "/distmat.csv", csv.str());
    }
    out << "sign distance off-diagonal mean: " << fmt_real(dm.offdiag_mean()) << "\n";

    diag::WeightHistogram wh = diag::weight_histogram(*model);
    {
        std::ostringstream csv;
        csv << "layer,bin_lo,pct\n";
        double maxr = 0;
        for (const auto& lh : wh.layers) {
            maxr = std::max(maxr, lh.max_r);
            for (size_t b = 0; b < lh.pct.size(); ++b)
                csv << lh.name << "," << fmt_real(wh.edges[b]) << "," << fmt_real(lh.pct[b])
                    << "\n";
        }
        write_text_file(out_dir + "/weight_hist.csv", csv.str());
        out << "max weight deviation ratio: " << fmt_real(maxr) << "\n";
    }

    {
        Tensor samples;
        std::vector<int> labels;
        diag::collect_sign_samples(*model, test, xi, seed, max_per_class, &samples, &labels);
        diag::Embedding emb = diag::embed_2d(samples, labels);
        std::ostringstream csv;
        csv << "x,y,label\n";
        for (size_t i = 0; i < labels.size(); ++i)
            csv << fmt_real(emb.xy[2 * i]) << "," << fmt_real(emb.xy[2 * i + 1]) << ","
                << labels[i] << "\n";
        write_text_file(out_dir + "/embed.csv", csv.str());
        if (emb.fallback) out << "embedding: rank-deficient, raw coordinates emitted\n";
    }

    diag::SimilarityPoint sp = diag::similarity_point(*model, test, xi, pair_samples, seed);
    {
        std::ostringstream csv;
        csv << "interclass_pred,intraclass_pred,intraclass_perturb,intraclass_advexample\n"
            << fmt_real(sp.interclass_pred) << "," << fmt_real(sp.intraclass_pred) << ","
            << fmt_real(sp.intraclass_perturb) << "," << fmt_real(sp.intraclass_advexample)
            << "\n";
        write_text_file(out_dir + "/similarity.csv", csv.str());
    }
    out << "similarity interclass_pred " << fmt_real(sp.interclass_pred)
        << ", intraclass_pred " << fmt_real(sp.intraclass_pred) << ", intraclass_perturb "
        << fmt_real(sp.intraclass_perturb) << ", intraclass_advexample "
        << fmt_real(sp.intraclass_advexample) << "\n";

    // trigger probes when a bank sits next to the checkpoint
    const fs::path bank_path = fs::path(ckpt_path).parent_path() / "trigger_bank.bin";
    if (fs::exists(bank_path)) {
        const Container c = read_container(bank_path.string());
        const Tensor* bank = c.tensor("trigger_bank");
        if (bank) {
            const int64_t n_eval = std::min<int64_t>(test.n(), 512);
            Tensor xe;
            std::vector<int> ye;
            std::vector<int64_t> idx(static_cast<size_t>(n_eval));
            std::iota(idx.begin(), idx.end(), 0);
            fat::gather_batch(test, idx, 0, n_eval, &xe, &ye);
            std::ostringstream csv;
            csv << "class,clean_acc,injected_acc,accuracy_delta,clean_target_rate,"
                   "injected_target_rate\n";
            double worst_delta = 0;
            for (int t = 0; t < test.num_classes; ++t) {
                Tensor trig = diag::extract_ucd_trigger(*bank, t, xi);
                diag::InjectReport rep = diag::inject_trigger(*model, xe, ye, trig, 1.0f, t);
                worst_delta = std::min(worst_delta, rep.accuracy_delta);
                csv << t << "," << fmt_real(rep.clean_acc) << ","
                    << fmt_real(rep.injected_acc) << "," << fmt_real(rep.accuracy_delta)
                    << "," << fmt_real(rep.clean_target_rate) << ","
                    << fmt_real(rep.injected_target_rate) << "\n";
            }
            write_text_file(out_dir + "/trigger_inject.csv", csv.str());
            out << "trigger injection worst accuracy delta: " << fmt_real(worst_delta)
                << "\n";
        }
    }
    out << "artifacts in " << out_dir << "\n";
    return out.str();
}

std::string task_finetune(const Config& cfg, const std::string& ckpt_path,
                          const std::string& out_ckpt) {
    validate_keys(cfg, config_schema());
    const uint64_t seed = first_seed(cfg);
    fat::Dataset train, test;
    load_dataset(dataset_spec_from(cfg, seed), &train, &test);

    CheckpointMeta meta;
    auto model = open_model_checkpoint(ckpt_path, &meta);
    fat::FinetuneSettings fset = finetune_settings_from(cfg);
    fset.seed = seed;
    fat::TrainSettings ts = train_settings_from(cfg, seed);
    fset.lr = cfg.get_real("finetune", "lr", 0.1 * ts.lr_max);
    fset.xi = ts.xi;

    fat::FinetuneReport rep = fat::apply_recipe(*model, train, test, fset);

    std::ostringstream out;
    out << "recipe " << fat::recipe_name(fset.kind) << " (k=" << fset.k << ", lr "
        << fmt_real(fset.lr) << ", epochs " << fset.epochs << ")\n"
        << "pre:  clean " << fmt_real(rep.pre.clean) << ", fgsm " << fmt_real(rep.pre.fgsm)
        << ", pgd10 " << fmt_real(rep.pre.pgd10) << "\n"
        << "post: clean " << fmt_real(rep.post.clean) << ", fgsm " << fmt_real(rep.post.fgsm)
        << ", pgd10 " << fmt_real(rep.post.pgd10) << "\n";

    const int probe_epochs = cfg.get_int("finetune", "probe_epochs", 0);
    if (probe_epochs > 0) {
        fat::RecurrenceReport rr = fat::recurrence_probe(*model, train, test, ts, probe_epochs);
        out << "recurrence probe (" << probe_epochs << " epochs continued fgsm-rs): "
            << (rr.recurred ? "CO recurred at epoch " + std::to_string(rr.epoch)
                            : "no recurrence")
            << "\n";
        if (!rr.probe.history.empty())
            out << "probe final pgd10 " << fmt_real(rr.probe.history.back().pgd10) << "\n";
    }
    if (!out_ckpt.empty()) {
        save_checkpoint(out_ckpt, *model, seed, meta.epoch);
        out << "saved " << out_ckpt << "\n";
    }
    return out.str();
}

std::string task_unlearnable(const Config& cfg, bool run_transfer,
                             const std::string& out_dir) {
    validate_keys(cfg, config_schema());
    const uint64_t seed = first_seed(cfg);
    fat::Dataset train, test;
    load_dataset(dataset_spec_from(cfg, seed), &train, &test);

    poison::PoisonSpec spec = poison_spec_from(cfg);
    poison::SurrogateCfg scfg;
    scfg.seed = seed;
    scfg.surrogate_steps = cfg.get_int("poison", "surrogate_steps", scfg.surrogate_steps);
    scfg.pert_steps = cfg.get_int("poison", "pert_steps", scfg.pert_steps);

    fs::create_directories(out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    poison::PoisonedDataset pd = poison::generate_poison(train, spec, scfg);
    const double gen_secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ostringstream out;
    out << "poison budget " << fmt_real(spec.budget) << " ("
        << (spec.mode == poison::PoisonMode::ClassWise ? "class-wise" : "sample-wise")
        << "), generator passes " << pd.outer_passes << ", surrogate acc "
        << fmt_real(pd.surrogate_acc) << ", " << fmt_real(gen_secs) << "s\n";
    if (pd.zero_budget) out << "warning: zero budget, dataset returned unperturbed\n";

    {
        Container c;
        c.tensors.emplace_back("perts", pd.perts);
        c.strings.emplace_back("mode", spec.mode == poison::PoisonMode::ClassWise
                                           ? "class"
                                           : "sample");
        c.strings.emplace_back("dataset", source_name(dataset_spec_from(cfg, seed).source));
        c.reals.emplace_back("budget", spec.budget);
        c.ints.emplace_back("rng_seed", static_cast<int64_t>(seed));
        write_container(out_dir + "/poison.bin", c);
        out << "perturbations saved to " << out_dir << "/poison.bin\n";
    }

    if (run_transfer) {
        poison::TransferCfg tcfg;
        tcfg.seed = seed;
        tcfg.epochs = cfg.get_int("poison", "transfer_epochs", tcfg.epochs);
        tcfg.lr_max = cfg.get_real("poison", "transfer_lr", tcfg.lr_max);
        fat::Dataset poisoned = pd.apply();
        poison::TransferTable table = poison::transfer_experiment(poisoned, test, spec, tcfg);
        std::ostringstream csv;
        csv << "trainer,clean_acc,seconds\n";
        out << "transfer (cyclic lr, " << tcfg.epochs << " epochs, identical data order):\n";
        for (const auto& r : table.rows) {
            csv << r.trainer << "," << fmt_real(r.clean_acc) << "," << fmt_real(r.seconds)
                << "\n";
            out << "  " << r.trainer << ": clean " << fmt_real(r.clean_acc) << " ("
                << fmt_real(r.seconds) << "s)\n";
        }
        write_text_file(out_dir + "/transfer.csv", csv.str());
    }
    write_text_file(out_dir + "/report.txt", out.str());
    return out.str();
}

}  // namespace fatlab::harness
