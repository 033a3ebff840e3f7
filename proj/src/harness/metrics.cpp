#include "harness/metrics.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "core/error.h"

namespace fatlab::harness {

MetricsRecord to_record(int epoch, const fat::EpochStats& s) {
    MetricsRecord r;
    r.epoch = epoch;
    r.clean_acc = s.clean;
    r.perturbed_acc = s.perturbed;
    r.fgsm_acc = s.fgsm;
    r.pgd10_acc = s.pgd10;
    r.train_loss_clean = s.train_loss_clean;
    r.train_loss_adv = s.train_loss_adv;
    r.reg_aux = s.reg_aux;
    r.reg_outlier = s.reg_outlier;
    r.reg_l2 = s.reg_l2;
    r.reg_rpred = s.reg_rpred;
    r.max_dev_ratio = s.maxr;
    r.lr = s.lr_last;
    return r;
}

std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string metrics_csv_header() {
    std::string h;
    for (size_t i = 0; i < kMetricsColumns.size(); ++i) {
        if (i) h += ",";
        h += kMetricsColumns[i];
    }
    return h + "\n";
}

std::string metrics_csv_row(const MetricsRecord& r) {
    std::ostringstream out;
    out << r.epoch << "," << fmt_real(r.clean_acc) << "," << fmt_real(r.perturbed_acc)
        << "," << fmt_real(r.fgsm_acc) << "," << fmt_real(r.pgd10_acc) << ","
        << fmt_real(r.train_loss_clean) << "," << fmt_real(r.train_loss_adv) << ","
        << fmt_real(r.reg_aux) << "," << fmt_real(r.reg_outlier) << ","
        << fmt_real(r.reg_l2) << "," << fmt_real(r.reg_rpred) << ","
        << fmt_real(r.max_dev_ratio) << "," << fmt_real(r.lr) << "\n";
    return out.str();
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_io("cannot write metrics csv: " + path);
    out << metrics_csv_header();
    for (const auto& r : rows) out << metrics_csv_row(r);
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot read metrics csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw_format(path + ": empty metrics csv");
    std::string nl = line;
    if (!nl.empty() && nl.back() == '\r') nl.pop_back();
    if (nl + "\n" != metrics_csv_header())
        throw_format(path + ": unexpected metrics header '" + nl + "'");
    std::vector<MetricsRecord> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ls, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw_format(path + ":" + std::to_string(lineno) + ": bad cell '" + cell +
                             "'");
            }
        }
        if (vals.size() != kMetricsColumns.size())
            throw_format(path + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(kMetricsColumns.size()) + " columns, got " +
                         std::to_string(vals.size()));
        MetricsRecord r;
        r.epoch = static_cast<int>(vals[0]);
        r.clean_acc = vals[1];
        r.perturbed_acc = vals[2];
        r.fgsm_acc = vals[3];
        r.pgd10_acc = vals[4];
        r.train_loss_clean = vals[5];
        r.train_loss_adv = vals[6];
        r.reg_aux = vals[7];
        r.reg_outlier = vals[8];
        r.reg_l2 = vals[9];
        r.reg_rpred = vals[10];
        r.max_dev_ratio = vals[11];
        r.lr = vals[12];
        rows.push_back(r);
    }
    return rows;
}

}  // namespace fatlab::harness
