#include "fatlab/fatlab.h"

#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "core/error.h"
#include "core/rng.h"
#include "fat/train.h"
#include "harness/checkpoint.h"
#include "harness/config.h"
#include "harness/data.h"
#include "harness/experiment.h"
#include "harness/metrics.h"
#include "harness/tasks.h"
#include "nn/model.h"

using fatlab::Error;
using fatlab::ErrCode;

namespace {

thread_local std::string g_last_error;

fatlab_status map_code(ErrCode c) {
    switch (c) {
        case ErrCode::Ok: return FATLAB_OK;
        case ErrCode::Input: return FATLAB_ERR_INPUT;
        case ErrCode::Format: return FATLAB_ERR_FORMAT;
        case ErrCode::Numeric: return FATLAB_ERR_NUMERIC;
        case ErrCode::Io: return FATLAB_ERR_IO;
    }
    return FATLAB_ERR_UNKNOWN;
}

// Runs fn, translating exceptions into status codes + the thread-local
// message. Every public entry point goes through here.
template <typename Fn>
fatlab_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return FATLAB_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return map_code(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return FATLAB_ERR_UNKNOWN;
    } catch (...) {
        g_last_error = "unknown failure";
        return FATLAB_ERR_UNKNOWN;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void require(bool ok, const char* what) {
    if (!ok) fatlab::throw_input(std::string("null argument: ") + what);
}

}  // namespace

struct fatlab_config {
    fatlab::harness::Config cfg;
};

struct fatlab_dataset {
    fatlab::fat::Dataset train;
    fatlab::fat::Dataset test;
};

struct fatlab_model {
    std::unique_ptr<fatlab::nn::Model> m;
};

struct fatlab_train_report {
    fatlab::fat::TrainResult result;
};

extern "C" {

const char* fatlab_version(void) { return "0.1.0"; }

const char* fatlab_last_error(void) { return g_last_error.c_str(); }

void fatlab_string_free(char* s) { std::free(s); }

/* ---- configuration ---------------------------------------------------- */

fatlab_status fatlab_config_parse(const char* text, fatlab_config** out) {
    return guarded([&] {
        require(text, "text");
        require(out, "out");
        auto h = std::make_unique<fatlab_config>();
        h->cfg = fatlab::harness::parse_config(text);
        *out = h.release();
    });
}

fatlab_status fatlab_config_load(const char* path, fatlab_config** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        auto h = std::make_unique<fatlab_config>();
        h->cfg = fatlab::harness::load_config_file(path);
        *out = h.release();
    });
}

fatlab_status fatlab_config_set(fatlab_config* cfg, const char* assignment) {
    return guarded([&] {
        require(cfg, "cfg");
        require(assignment, "assignment");
        cfg->cfg.set_dotted(assignment);
    });
}

fatlab_status fatlab_config_serialize(const fatlab_config* cfg, char** out) {
    return guarded([&] {
        require(cfg, "cfg");
        require(out, "out");
        *out = dup_string(cfg->cfg.serialize());
    });
}

fatlab_status fatlab_config_validate(const fatlab_config* cfg) {
    return guarded([&] {
        require(cfg, "cfg");
        fatlab::harness::validate_keys(cfg->cfg, fatlab::harness::config_schema());
    });
}

void fatlab_config_free(fatlab_config* cfg) { delete cfg; }

/* ---- datasets ---------------------------------------------------------- */

fatlab_status fatlab_dataset_load(const fatlab_config* cfg, uint64_t seed,
                                  fatlab_dataset** out) {
    return guarded([&] {
        require(cfg, "cfg");
        require(out, "out");
        auto spec = fatlab::harness::dataset_spec_from(cfg->cfg, seed);
        auto h = std::make_unique<fatlab_dataset>();
        fatlab::harness::load_dataset(spec, &h->train, &h->test);
        *out = h.release();
    });
}

fatlab_status fatlab_dataset_info(const fatlab_dataset* d, int64_t* n_train,
                                  int64_t* n_test, int* channels, int* height, int* width,
                                  int* classes) {
    return guarded([&] {
        require(d, "d");
        if (n_train) *n_train = d->train.n();
        if (n_test) *n_test = d->test.n();
        if (channels) *channels = d->train.n() ? static_cast<int>(d->train.x.dim(1)) : 0;
        if (height) *height = d->train.n() ? static_cast<int>(d->train.x.dim(2)) : 0;
        if (width) *width = d->train.n() ? static_cast<int>(d->train.x.dim(3)) : 0;
        if (classes) *classes = d->train.num_classes;
    });
}

void fatlab_dataset_free(fatlab_dataset* d) { delete d; }

/* ---- models ------------------------------------------------------------ */

fatlab_status fatlab_model_create(int channels, int height, int width, int classes,
                                  uint64_t seed, fatlab_model** out) {
    return guarded([&] {
        require(out, "out");
        auto h = std::make_unique<fatlab_model>();
        h->m = std::make_unique<fatlab::nn::Model>(channels, height, width, classes);
        fatlab::Rng rng(seed);
        h->m->init_params(rng);
        *out = h.release();
    });
}

fatlab_status fatlab_model_open(const char* ckpt_path, fatlab_model** out) {
    return guarded([&] {
        require(ckpt_path, "ckpt_path");
        require(out, "out");
        auto h = std::make_unique<fatlab_model>();
        fatlab::harness::CheckpointMeta meta;
        h->m = fatlab::harness::open_model_checkpoint(ckpt_path, &meta);
        *out = h.release();
    });
}

fatlab_status fatlab_model_save(fatlab_model* m, const char* ckpt_path, uint64_t rng_seed,
                                int epoch) {
    return guarded([&] {
        require(m, "m");
        require(ckpt_path, "ckpt_path");
        fatlab::harness::save_checkpoint(ckpt_path, *m->m, rng_seed, epoch);
    });
}

void fatlab_model_free(fatlab_model* m) { delete m; }

/* ---- training ---------------------------------------------------------- */

fatlab_status fatlab_train(fatlab_model* m, const fatlab_dataset* d,
                           const fatlab_config* cfg, uint64_t seed,
                           fatlab_train_report** out) {
    return guarded([&] {
        require(m, "m");
        require(d, "d");
        require(cfg, "cfg");
        require(out, "out");
        auto settings = fatlab::harness::train_settings_from(cfg->cfg, seed);
        auto h = std::make_unique<fatlab_train_report>();
        h->result = fatlab::fat::train_fat(*m->m, d->train, d->test, settings);
        *out = h.release();
    });
}

int fatlab_train_report_epochs(const fatlab_train_report* r) {
    return r ? static_cast<int>(r->result.history.size()) : 0;
}

fatlab_status fatlab_train_report_row(const fatlab_train_report* r, int epoch,
                                      double* vals, size_t n_vals) {
    return guarded([&] {
        require(r, "r");
        require(vals, "vals");
        if (epoch < 0 || epoch >= static_cast<int>(r->result.history.size()))
            fatlab::throw_input("epoch out of range");
        if (n_vals < fatlab::harness::kMetricsColumns.size())
            fatlab::throw_input("vals buffer too small");
        auto rec = fatlab::harness::to_record(epoch, r->result.history[epoch]);
        std::vector<double> row = {
            static_cast<double>(rec.epoch), rec.clean_acc, rec.perturbed_acc,
            rec.fgsm_acc,  rec.pgd10_acc,   rec.train_loss_clean,
            rec.train_loss_adv, rec.reg_aux, rec.reg_outlier,
            rec.reg_l2,    rec.reg_rpred,   rec.max_dev_ratio,
            rec.lr};
        for (size_t i = 0; i < row.size(); ++i) vals[i] = row[i];
    });
}

fatlab_status fatlab_train_report_co(const fatlab_train_report* r, int* co_fired,
                                     int* co_epoch) {
    return guarded([&] {
        require(r, "r");
        if (co_fired) *co_fired = r->result.co ? 1 : 0;
        if (co_epoch) *co_epoch = r->result.co ? r->result.co_epoch : -1;
    });
}

void fatlab_train_report_free(fatlab_train_report* r) { delete r; }

fatlab_status fatlab_evaluate(fatlab_model* m, const fatlab_dataset* d,
                              const fatlab_config* cfg, uint64_t seed, double* clean,
                              double* perturbed, double* fgsm, double* pgd) {
    return guarded([&] {
        require(m, "m");
        require(d, "d");
        require(cfg, "cfg");
        auto settings = fatlab::harness::train_settings_from(cfg->cfg, seed);
        auto s = fatlab::fat::evaluate(*m->m, d->test, settings.xi, seed,
                                       settings.eval_clean_n, settings.eval_pgd_n,
                                       settings.pgd_steps, settings.pgd_restarts);
        if (clean) *clean = s.clean;
        if (perturbed) *perturbed = s.perturbed;
        if (fgsm) *fgsm = s.fgsm;
        if (pgd) *pgd = s.pgd10;
    });
}

/* ---- experiment harness ------------------------------------------------ */

fatlab_status fatlab_run_experiment(const fatlab_config* cfg, int force, char** summary,
                                    int* skipped) {
    return guarded([&] {
        require(cfg, "cfg");
        auto res = fatlab::harness::run_experiment(cfg->cfg, force != 0);
        if (skipped) *skipped = res.skipped ? 1 : 0;
        if (summary) {
            std::string text = "run_dir: " + res.run_dir + "\n";
            if (res.skipped) text += "skipped: DONE marker present\n";
            text += "seeds: " + std::to_string(res.seeds.size()) + "\n";
            text += "st: " + res.st + "\n";
            for (const auto& s : res.seeds) {
                text += "seed " + std::to_string(s.seed) + (s.co ? " CO@" + std::to_string(s.co_epoch) : " stable");
                text += " best_pgd10=" + std::to_string(s.best_pgd10) +
                        " final_pgd10=" + std::to_string(s.final_pgd10) + "\n";
            }
            *summary = dup_string(text);
        }
    });
}

fatlab_status fatlab_sweep(const fatlab_config* cfg, const char* axis,
                           const double* values, size_t n_values, int force,
                           char** summary) {
    return guarded([&] {
        require(cfg, "cfg");
        require(axis, "axis");
        require(values, "values");
        std::vector<double> vals(values, values + n_values);
        auto table = fatlab::harness::sweep(cfg->cfg, axis, vals, force != 0);
        if (summary) {
            std::string text = "axis: " + table.axis + "\ndir: " + table.dir + "\n";
            for (const auto& c : table.cells) {
                text += table.axis + "=" + std::to_string(c.value) +
                        " best=" + std::to_string(c.best_pgd10) +
                        " final=" + std::to_string(c.final_pgd10) +
                        " co=" + std::to_string(c.co_count) + " st=" + c.st + "\n";
            }
            *summary = dup_string(text);
        }
    });
}

fatlab_status fatlab_emit_plots(const char* run_dir, char** report) {
    return guarded([&] {
        require(run_dir, "run_dir");
        auto rep = fatlab::harness::emit_plots(run_dir);
        if (report) {
            std::string text;
            for (const auto& p : rep.emitted) text += "emitted: " + p + "\n";
            for (const auto& p : rep.missing) text += "missing: " + p + "\n";
            *report = dup_string(text);
        }
    });
}

/* ---- subcommand tasks --------------------------------------------------- */

fatlab_status fatlab_task_attack_eval(const fatlab_config* cfg, const char* ckpt_path,
                                      char** report) {
    return guarded([&] {
        require(cfg, "cfg");
        require(ckpt_path, "ckpt_path");
        auto text = fatlab::harness::task_attack_eval(cfg->cfg, ckpt_path);
        if (report) *report = dup_string(text);
    });
}

fatlab_status fatlab_task_diagnose(const fatlab_config* cfg, const char* ckpt_path,
                                   const char* out_dir, char** report) {
    return guarded([&] {
        require(cfg, "cfg");
        require(ckpt_path, "ckpt_path");
        require(out_dir, "out_dir");
        auto text = fatlab::harness::task_diagnose(cfg->cfg, ckpt_path, out_dir);
        if (report) *report = dup_string(text);
    });
}

fatlab_status fatlab_task_finetune(const fatlab_config* cfg, const char* ckpt_path,
                                   const char* out_ckpt, char** report) {
    return guarded([&] {
        require(cfg, "cfg");
        require(ckpt_path, "ckpt_path");
        auto text = fatlab::harness::task_finetune(cfg->cfg, ckpt_path,
                                                   out_ckpt ? out_ckpt : "");
        if (report) *report = dup_string(text);
    });
}

fatlab_status fatlab_task_unlearnable(const fatlab_config* cfg, int run_transfer,
                                      const char* out_dir, char** report) {
    return guarded([&] {
        require(cfg, "cfg");
        require(out_dir, "out_dir");
        auto text = fatlab::harness::task_unlearnable(cfg->cfg, run_transfer != 0, out_dir);
        if (report) *report = dup_string(text);
    });
}

} /* extern "C" */
