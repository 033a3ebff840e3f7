#pragma once

#include <string>
#include <vector>

#include "fat/finetune.h"
#include "fat/train.h"
#include "harness/config.h"
#include "harness/data.h"
#include "poison/unlearnable.h"

namespace fatlab::harness {

// Config -> typed settings. Each rejects unknown keys for its sections.
DatasetSpec dataset_spec_from(const Config& cfg, uint64_t seed);
fat::TrainSettings train_settings_from(const Config& cfg, uint64_t seed);
fat::FinetuneSettings finetune_settings_from(const Config& cfg);
poison::PoisonSpec poison_spec_from(const Config& cfg);

// Full allowed-key schema across all sections; validate_keys() against it.
const std::set<std::string>& config_schema();

struct SeedOutcome {
    uint64_t seed = 0;
    bool co = false;
    int co_epoch = -1;
    double best_pgd10 = 0;
    int best_epoch = -1;
    double final_pgd10 = 0;
    double final_clean = 0, final_perturbed = 0, final_fgsm = 0;
    bool aborted = false;
    double seconds = 0;
};

struct RunSummary {
    std::string run_dir;
    std::vector<SeedOutcome> seeds;
    std::string st;  // one glyph per seed: * stable, o collapsed
    bool skipped = false;  // DONE marker found and --force absent
};

// Trains every seed in the config, persists metrics, checkpoints, trigger
// bank and diagnostics under cfg [run].out_dir, then writes summary files
// and a DONE marker. Re-running a completed directory is a no-op without
// force. Per-seed failures are recorded; remaining seeds still run.
RunSummary run_experiment(const Config& cfg, bool force = false);

struct SweepCell {
    double value = 0;
    double best_pgd10 = 0;   // mean over seeds
    double final_pgd10 = 0;  // mean over seeds
    int co_count = 0;
    std::string st;
};

struct SweepTable {
    std::string axis;
    std::vector<SweepCell> cells;
    std::string dir;
};

// axis in {beta, alpha_aux, eta, k}; one run_experiment per value in its own
// subdirectory plus an aggregate CSV mirroring the Best/Final convention.
SweepTable sweep(const Config& cfg, const std::string& axis,
                 const std::vector<double>& values, bool force = false);

struct PlotReport {
    std::vector<std::string> emitted;
    std::vector<std::string> missing;
};

// Renders SVG+CSV pairs from the artifacts of a completed run directory.
// Missing artifacts are listed, everything else still renders.
PlotReport emit_plots(const std::string& run_dir);

std::string st_string(const std::vector<SeedOutcome>& seeds);

}  // namespace fatlab::harness
