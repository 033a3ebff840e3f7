// Command-line front end. Talks to the core exclusively through the C API in
// fatlab/fatlab.h, which keeps it an honest consumer of the shared library.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fatlab/fatlab.h"

namespace {

struct ConfigGuard {
    fatlab_config* cfg = nullptr;
    ~ConfigGuard() { fatlab_config_free(cfg); }
};

[[noreturn]] void die(const char* op, fatlab_status st) {
    std::fprintf(stderr, "error(%d) during %s: %s\n", static_cast<int>(st), op,
                 fatlab_last_error());
    std::exit(1);
}

void check(fatlab_status st, const char* op) {
    if (st != FATLAB_OK) die(op, st);
}

void print_and_free(char* text) {
    if (!text) return;
    std::fputs(text, stdout);
    fatlab_string_free(text);
}

fatlab_config* load_config(const std::string& path, const std::vector<std::string>& sets) {
    fatlab_config* cfg = nullptr;
    check(fatlab_config_load(path.c_str(), &cfg), "config load");
    for (const auto& s : sets) {
        fatlab_status st = fatlab_config_set(cfg, s.c_str());
        if (st != FATLAB_OK) {
            fatlab_config_free(cfg);
            die("config --set", st);
        }
    }
    fatlab_status st = fatlab_config_validate(cfg);
    if (st != FATLAB_OK) {
        fatlab_config_free(cfg);
        die("config validation", st);
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fatlab: fast adversarial training lab"};
    app.set_version_flag("--version", std::string(fatlab_version()));
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    bool force = false;

    auto add_common = [&](CLI::App* sub, bool with_force) {
        sub->add_option("-c,--config", config_path, "INI config file")->required();
        sub->add_option("--set", sets, "override: section.key=value (repeatable)");
        if (with_force) sub->add_flag("--force", force, "redo work even if a DONE marker exists");
    };

    // train: full multi-seed experiment into run.out_dir
    auto* train = app.add_subcommand("train", "run the configured experiment");
    add_common(train, true);

    // sweep: repeat the experiment along one axis
    auto* sweep = app.add_subcommand("sweep", "run the experiment across an axis of values");
    std::string axis;
    std::vector<double> values;
    add_common(sweep, true);
    sweep->add_option("--axis", axis, "beta | alpha_aux | eta | k")->required();
    sweep->add_option("--values", values, "axis values")->required()->expected(-1);

    // finetune: one recipe applied to a checkpoint
    auto* ft = app.add_subcommand("finetune", "fine-tune a stored model with a recovery recipe");
    std::string ckpt, out_ckpt;
    add_common(ft, false);
    ft->add_option("--ckpt", ckpt, "model checkpoint")->required();
    ft->add_option("--out", out_ckpt, "where to save the fine-tuned model");

    // attack-eval: clean/perturbed/fgsm/pgd scores of a checkpoint
    auto* ae = app.add_subcommand("attack-eval", "evaluate a stored model under attack");
    add_common(ae, false);
    ae->add_option("--ckpt", ckpt, "model checkpoint")->required();

    // diagnose: distance matrix, histogram, embedding, trigger probes
    auto* diag = app.add_subcommand("diagnose", "emit diagnostics for a stored model");
    std::string out_dir = ".";
    add_common(diag, false);
    diag->add_option("--ckpt", ckpt, "model checkpoint")->required();
    diag->add_option("--out", out_dir, "artifact directory (default .)");

    // unlearnable: error-minimizing poison, optional transfer study
    auto* un = app.add_subcommand("unlearnable", "generate unlearnable perturbations");
    bool transfer = false;
    add_common(un, false);
    un->add_option("--out", out_dir, "artifact directory (default .)");
    un->add_flag("--transfer", transfer, "also train the three transfer models");

    // plot: render SVG/CSV pairs from a finished run directory
    auto* plot = app.add_subcommand("plot", "render plots for a completed run directory");
    std::string run_dir;
    plot->add_option("--run", run_dir, "run directory (train output)")->required();

    CLI11_PARSE(app, argc, argv);

    if (plot->parsed()) {
        char* report = nullptr;
        check(fatlab_emit_plots(run_dir.c_str(), &report), "plot");
        print_and_free(report);
        return 0;
    }

    ConfigGuard guard;
    guard.cfg = load_config(config_path, sets);

    if (train->parsed()) {
        char* summary = nullptr;
        int skipped = 0;
        check(fatlab_run_experiment(guard.cfg, force ? 1 : 0, &summary, &skipped), "train");
        print_and_free(summary);
    } else if (sweep->parsed()) {
        char* summary = nullptr;
        check(fatlab_sweep(guard.cfg, axis.c_str(), values.data(), values.size(),
                           force ? 1 : 0, &summary),
              "sweep");
        print_and_free(summary);
    } else if (ft->parsed()) {
        char* report = nullptr;
        check(fatlab_task_finetune(guard.cfg, ckpt.c_str(),
                                   out_ckpt.empty() ? nullptr : out_ckpt.c_str(), &report),
              "finetune");
        print_and_free(report);
    } else if (ae->parsed()) {
        char* report = nullptr;
        check(fatlab_task_attack_eval(guard.cfg, ckpt.c_str(), &report), "attack-eval");
        print_and_free(report);
    } else if (diag->parsed()) {
        char* report = nullptr;
        check(fatlab_task_diagnose(guard.cfg, ckpt.c_str(), out_dir.c_str(), &report),
              "diagnose");
        print_and_free(report);
    } else if (un->parsed()) {
        char* report = nullptr;
        check(fatlab_task_unlearnable(guard.cfg, transfer ? 1 : 0, out_dir.c_str(), &report),
              "unlearnable");
        print_and_free(report);
    }
    return 0;
}
