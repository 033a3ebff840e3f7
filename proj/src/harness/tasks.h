#pragma once

#include <string>

#include "harness/config.h"

namespace fatlab::harness {

// Orchestration behind the CLI subcommands. Each returns a structured text
// report; artifacts land in the given output directory (or next to the
// checkpoint when none applies).

// clean / perturbed / fgsm / pgd accuracies of a stored model, plus the
// accuracy-ordering verdict.
std::string task_attack_eval(const Config& cfg, const std::string& ckpt_path);

// Distance matrix, weight histogram, embedding, similarity point and trigger
// probes for a stored model; CSVs go to out_dir.
std::string task_diagnose(const Config& cfg, const std::string& ckpt_path,
                          const std::string& out_dir);

// Applies the [finetune] recipe to a stored model; optional recurrence probe
// ([finetune].probe_epochs > 0); optionally saves the result.
std::string task_finetune(const Config& cfg, const std::string& ckpt_path,
                          const std::string& out_ckpt);

// Generates error-minimizing poison per [poison]; optionally runs the
// three-trainer transfer experiment; persists tensors + report in out_dir.
std::string task_unlearnable(const Config& cfg, bool run_transfer,
                             const std::string& out_dir);

}  // namespace fatlab::harness
