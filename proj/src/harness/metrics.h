#pragma once

#include <array>
#include <string>
#include <vector>

#include "fat/train.h"

namespace fatlab::harness {

// One CSV row per completed epoch. Column names are the source of truth for
// the metrics files; the writer and the tests both consume kMetricsColumns.
struct MetricsRecord {
    int epoch = 0;
    double clean_acc = 0;
    double perturbed_acc = 0;
    double fgsm_acc = 0;
    double pgd10_acc = 0;
    double train_loss_clean = 0;
    double train_loss_adv = 0;
    double reg_aux = 0;
    double reg_outlier = 0;
    double reg_l2 = 0;
    double reg_rpred = 0;
    double max_dev_ratio = 0;
    double lr = 0;
};

inline constexpr std::array<const char*, 13> kMetricsColumns = {
    "epoch",           "clean_acc",      "perturbed_acc", "fgsm_acc",
    "pgd10_acc",       "train_loss_clean", "train_loss_adv", "reg_aux",
    "reg_outlier",     "reg_l2",         "reg_rpred",     "max_dev_ratio",
    "lr"};

MetricsRecord to_record(int epoch, const fat::EpochStats& s);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& r);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

// Canonical float formatting shared by every CSV writer so identical runs
// produce byte-identical files.
std::string fmt_real(double v);

}  // namespace fatlab::harness
