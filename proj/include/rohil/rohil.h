#ifndef ROHIL_ROHIL_H
#define ROHIL_ROHIL_H

/* C interface to the rohil library. Every call returns a status code; on
 * failure rohil_last_error() holds a message for the calling thread. Objects
 * are opaque and released with their matching *_free function (NULL is a
 * no-op). Strings returned through char** are released with rohil_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ROHIL_API __declspec(dllexport)
#else
#define ROHIL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rohil_status {
  ROHIL_OK = 0,
  ROHIL_ERR_INVALID_ARGUMENT = 1,
  ROHIL_ERR_SHAPE_MISMATCH = 2,
  ROHIL_ERR_NON_FINITE = 3,
  ROHIL_ERR_BAD_MAGIC = 4,
  ROHIL_ERR_VERSION_MISMATCH = 5,
  ROHIL_ERR_TRUNCATED = 6,
  ROHIL_ERR_MISSING_ENTRY = 7,
  ROHIL_ERR_EMPTY_POOL = 8,
  ROHIL_ERR_IO = 9,
  ROHIL_ERR_CONFIG = 10,
  ROHIL_ERR_MISSING_STATE = 11,
  ROHIL_ERR_INTERNAL = 100
} rohil_status;

typedef struct rohil_config rohil_config;
typedef struct rohil_agent rohil_agent;
typedef struct rohil_dataset rohil_dataset;
typedef struct rohil_report rohil_report;

/* Progress messages from long-running calls. */
typedef void (*rohil_progress_fn)(const char* message, void* user);
/* Fine-tune checkpoints: step 0 and every checkpoint_every steps. The agent is
 * borrowed for the duration of the call. */
typedef void (*rohil_checkpoint_fn)(uint64_t step, const rohil_agent* agent, void* user);

ROHIL_API const char* rohil_last_error(void);
ROHIL_API const char* rohil_status_name(rohil_status status);
ROHIL_API void rohil_string_free(char* s);

/* ---- configuration ---- */
ROHIL_API rohil_status rohil_config_default(rohil_config** out);
ROHIL_API rohil_status rohil_config_parse(const char* text, rohil_config** out);
ROHIL_API rohil_status rohil_config_load(const char* path, rohil_config** out);
ROHIL_API rohil_status rohil_config_to_text(const rohil_config* config, char** out);
ROHIL_API rohil_status rohil_config_hash(const rohil_config* config, uint64_t* out);
ROHIL_API void rohil_config_free(rohil_config* config);

/* ---- agents ---- */
ROHIL_API rohil_status rohil_agent_load(const char* path, rohil_agent** out);
ROHIL_API rohil_status rohil_agent_save(const rohil_agent* agent, const char* path, uint64_t step, uint64_t config_hash);
ROHIL_API rohil_status rohil_agent_checksum(const rohil_agent* agent, uint64_t* out);
ROHIL_API void rohil_agent_free(rohil_agent* agent);

/* ---- datasets ---- */
ROHIL_API rohil_status rohil_dataset_load(const char* path, rohil_dataset** out);
ROHIL_API rohil_status rohil_dataset_save(const rohil_dataset* dataset, const char* path);
ROHIL_API rohil_status rohil_dataset_size(const rohil_dataset* dataset, size_t* out);
/* Re-renders every record under the config's four relighting conditions. */
ROHIL_API rohil_status rohil_relight(const rohil_config* config, const rohil_dataset* source, uint64_t noise_seed,
                                     rohil_dataset** out);
ROHIL_API void rohil_dataset_free(rohil_dataset* dataset);

/* ---- training ---- */
typedef struct rohil_source_result {
  rohil_agent* agent;     /* best checkpoint by source-light success */
  rohil_dataset* rl;      /* every online transition */
  rohil_dataset* demos;   /* seed demonstrations */
  uint64_t best_step;
  double best_success;
} rohil_source_result;

ROHIL_API rohil_status rohil_train_source(const rohil_config* config, uint64_t seed, rohil_progress_fn progress,
                                          void* user, rohil_source_result* out);
ROHIL_API void rohil_source_result_free(rohil_source_result* result);

/* anchor: "mse" or "kl" enable both anchor terms with that policy head; "none"
 * disables both. The fine-tune reads learner.T and the remaining learner keys
 * from the config. */
ROHIL_API rohil_status rohil_finetune(const rohil_config* config, const rohil_agent* source, const rohil_dataset* rl,
                                      const rohil_dataset* demos, const rohil_dataset* rl_relit,
                                      const rohil_dataset* demos_relit, double alpha, const char* anchor, uint64_t seed,
                                      uint64_t checkpoint_every, rohil_checkpoint_fn on_checkpoint, void* user,
                                      rohil_agent** out);

/* ---- evaluation ---- */
typedef struct rohil_eval_result {
  double shift;
  uint32_t episodes;
  uint32_t successes;
  double success_rate;
  int has_mean_success_steps;
  double mean_success_steps;
  int has_intervention_rate;
  double intervention_rate;
  uint64_t seed;
} rohil_eval_result;

ROHIL_API rohil_status rohil_evaluate(const rohil_config* config, const rohil_agent* agent, double shift,
                                      uint32_t episodes, uint64_t seed, int interventions, rohil_eval_result* out);

/* ---- experiments and reports ---- */
typedef struct rohil_plan {
  const uint64_t* seeds;
  size_t n_seeds;
  const double* alphas; /* alpha sweep grid; NULL/0 selects 0.0, 0.05, ..., 1.0 */
  size_t n_alphas;
  const double* shifts; /* NULL/0 selects {0, eval.shift} */
  size_t n_shifts;
  const char* cache_dir; /* NULL keeps source runs in memory */
  unsigned threads;      /* 0 = one per hardware thread */
} rohil_plan;

/* kind: "sweep-alpha", "ablate-2x2", "compare-anchor-head" or "sweep-iterations". */
ROHIL_API rohil_status rohil_run_experiment(const rohil_config* config, const char* kind, const rohil_plan* plan,
                                            rohil_progress_fn progress, void* user, rohil_report** out);
ROHIL_API rohil_status rohil_report_new(rohil_report** out);
ROHIL_API rohil_status rohil_report_load_csv(const char* path, rohil_report** out);
ROHIL_API rohil_status rohil_report_merge(rohil_report* into, const rohil_report* from);
ROHIL_API rohil_status rohil_report_rows(const rohil_report* report, size_t* out);
ROHIL_API rohil_status rohil_report_csv(const rohil_report* report, char** out);
/* Writes the CSV and a JSON mirror with the extension replaced by .json. */
ROHIL_API rohil_status rohil_report_write(const rohil_report* report, const char* csv_path);
ROHIL_API void rohil_report_free(rohil_report* report);

#ifdef __cplusplus
}
#endif

#endif /* ROHIL_ROHIL_H */
