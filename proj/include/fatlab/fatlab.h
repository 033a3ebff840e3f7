#ifndef FATLAB_FATLAB_H
#define FATLAB_FATLAB_H

/* C interface to the fatlab core. All entry points return a fatlab_status;
 * on failure, fatlab_last_error() yields a thread-local message describing
 * what went wrong. Handles are opaque and freed with their _free function.
 * Strings returned through char** are owned by the caller and released with
 * fatlab_string_free(). */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fatlab_status {
    FATLAB_OK = 0,
    FATLAB_ERR_INPUT = 1,   /* invalid argument or precondition */
    FATLAB_ERR_FORMAT = 2,  /* malformed file or config */
    FATLAB_ERR_NUMERIC = 3, /* non-finite values, aborted run */
    FATLAB_ERR_IO = 4,      /* filesystem failure */
    FATLAB_ERR_UNKNOWN = 5
} fatlab_status;

typedef struct fatlab_config fatlab_config;
typedef struct fatlab_dataset fatlab_dataset;
typedef struct fatlab_model fatlab_model;
typedef struct fatlab_train_report fatlab_train_report;

const char* fatlab_version(void);
/* Thread-local message for the most recent failure; empty string if none. */
const char* fatlab_last_error(void);
void fatlab_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

fatlab_status fatlab_config_parse(const char* text, fatlab_config** out);
fatlab_status fatlab_config_load(const char* path, fatlab_config** out);
/* assignment has the CLI --set shape: "section.key=value". */
fatlab_status fatlab_config_set(fatlab_config* cfg, const char* assignment);
fatlab_status fatlab_config_serialize(const fatlab_config* cfg, char** out);
/* Rejects keys outside the experiment schema. */
fatlab_status fatlab_config_validate(const fatlab_config* cfg);
void fatlab_config_free(fatlab_config* cfg);

/* ---- datasets ---------------------------------------------------------- */

fatlab_status fatlab_dataset_load(const fatlab_config* cfg, uint64_t seed,
                                  fatlab_dataset** out);
fatlab_status fatlab_dataset_info(const fatlab_dataset* d, int64_t* n_train,
                                  int64_t* n_test, int* channels, int* height, int* width,
                                  int* classes);
void fatlab_dataset_free(fatlab_dataset* d);

/* ---- models ------------------------------------------------------------ */

fatlab_status fatlab_model_create(int channels, int height, int width, int classes,
                                  uint64_t seed, fatlab_model** out);
/* Rebuilds the model from checkpoint geometry metadata. */
fatlab_status fatlab_model_open(const char* ckpt_path, fatlab_model** out);
fatlab_status fatlab_model_save(fatlab_model* m, const char* ckpt_path, uint64_t rng_seed,
                                int epoch);
void fatlab_model_free(fatlab_model* m);

/* ---- training ---------------------------------------------------------- */

/* Trains in place per the [train] section; no files are written. */
fatlab_status fatlab_train(fatlab_model* m, const fatlab_dataset* d,
                           const fatlab_config* cfg, uint64_t seed,
                           fatlab_train_report** out);

int fatlab_train_report_epochs(const fatlab_train_report* r);
/* Copies one epoch row into vals (size >= 13) ordered as the metrics CSV:
 * epoch, clean, perturbed, fgsm, pgd10, train_loss_clean, train_loss_adv,
 * reg_aux, reg_outlier, reg_l2, reg_rpred, max_dev_ratio, lr. */
fatlab_status fatlab_train_report_row(const fatlab_train_report* r, int epoch,
                                      double* vals, size_t n_vals);
/* co_epoch is -1 when no catastrophic overfitting was detected. */
fatlab_status fatlab_train_report_co(const fatlab_train_report* r, int* co_fired,
                                     int* co_epoch);
void fatlab_train_report_free(fatlab_train_report* r);

/* Clean/perturbed/FGSM/PGD accuracies of a model on the test split. */
fatlab_status fatlab_evaluate(fatlab_model* m, const fatlab_dataset* d,
                              const fatlab_config* cfg, uint64_t seed, double* clean,
                              double* perturbed, double* fgsm, double* pgd);

/* ---- experiment harness ------------------------------------------------ */

/* Full multi-seed experiment per the config; returns the textual summary.
 * skipped (optional) is set when a DONE marker was honored. */
fatlab_status fatlab_run_experiment(const fatlab_config* cfg, int force, char** summary,
                                    int* skipped);
fatlab_status fatlab_sweep(const fatlab_config* cfg, const char* axis,
                           const double* values, size_t n_values, int force,
                           char** summary);
fatlab_status fatlab_emit_plots(const char* run_dir, char** report);

/* ---- subcommand tasks --------------------------------------------------- */

fatlab_status fatlab_task_attack_eval(const fatlab_config* cfg, const char* ckpt_path,
                                      char** report);
fatlab_status fatlab_task_diagnose(const fatlab_config* cfg, const char* ckpt_path,
                                   const char* out_dir, char** report);
/* out_ckpt may be NULL to skip saving the fine-tuned model. */
fatlab_status fatlab_task_finetune(const fatlab_config* cfg, const char* ckpt_path,
                                   const char* out_ckpt, char** report);
fatlab_status fatlab_task_unlearnable(const fatlab_config* cfg, int run_transfer,
                                      const char* out_dir, char** report);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FATLAB_FATLAB_H */
