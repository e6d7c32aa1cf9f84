#include "rohil/rohil.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "harness/config.hpp"
#include "harness/experiments.hpp"
#include "harness/report.hpp"

struct rohil_config {
  rohil::Config value;
};
struct rohil_agent {
  rohil::Agent value;
};
struct rohil_dataset {
  rohil::TrajectoryDataset value;
};
struct rohil_report {
  std::vector<rohil::ReportRow> rows;
};

namespace {

thread_local std::string g_last_error;

rohil_status to_status(rohil::ErrorCode code) { return static_cast<rohil_status>(static_cast<int>(code)); }

template <typename F>
rohil_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return ROHIL_OK;
  } catch (const rohil::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ROHIL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ROHIL_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return ROHIL_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) rohil::fail(rohil::ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

rohil::ProgressFn wrap_progress(rohil_progress_fn fn, void* user) {
  if (fn == nullptr) return {};
  return [fn, user](const std::string& m) { fn(m.c_str(), user); };
}

}  // namespace

extern "C" {

const char* rohil_last_error(void) { return g_last_error.c_str(); }

const char* rohil_status_name(rohil_status status) {
  switch (status) {
    case ROHIL_OK: return "ok";
    case ROHIL_ERR_INTERNAL: return "internal error";
    default: break;
  }
  const int c = static_cast<int>(status);
  if (c >= static_cast<int>(rohil::ErrorCode::kInvalidArgument) && c <= static_cast<int>(rohil::ErrorCode::kMissingState)) {
    return rohil::error_code_name(static_cast<rohil::ErrorCode>(c));
  }
  return "unknown status";
}

void rohil_string_free(char* s) { std::free(s); }

// ---- configuration ----

rohil_status rohil_config_default(rohil_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new rohil_config{};
  });
}

rohil_status rohil_config_parse(const char* text, rohil_config** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = new rohil_config{rohil::parse_config(text)};
  });
}

rohil_status rohil_config_load(const char* path, rohil_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new rohil_config{rohil::load_config(path)};
  });
}

rohil_status rohil_config_to_text(const rohil_config* config, char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = dup_string(rohil::config_to_text(config->value));
  });
}

rohil_status rohil_config_hash(const rohil_config* config, uint64_t* out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = rohil::config_hash(config->value);
  });
}

void rohil_config_free(rohil_config* config) { delete config; }

// ---- agents ----

rohil_status rohil_agent_load(const char* path, rohil_agent** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new rohil_agent{rohil::agent_from_checkpoint(rohil::read_checkpoint(path))};
  });
}

rohil_status rohil_agent_save(const rohil_agent* agent, const char* path, uint64_t step, uint64_t config_hash) {
  return guarded([&] {
    require(agent, "agent");
    require(path, "path");
    rohil::write_checkpoint(path, rohil::agent_to_checkpoint(agent->value, rohil::CheckpointMeta{step, config_hash}));
  });
}

rohil_status rohil_agent_checksum(const rohil_agent* agent, uint64_t* out) {
  return guarded([&] {
    require(agent, "agent");
    require(out, "out");
    *out = rohil::checksum(agent->value);
  });
}

void rohil_agent_free(rohil_agent* agent) { delete agent; }

// ---- datasets ----

rohil_status rohil_dataset_load(const char* path, rohil_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new rohil_dataset{rohil::read_dataset(path)};
  });
}

rohil_status rohil_dataset_save(const rohil_dataset* dataset, const char* path) {
  return guarded([&] {
    require(dataset, "dataset");
    require(path, "path");
    rohil::write_dataset(path, dataset->value);
  });
}

rohil_status rohil_dataset_size(const rohil_dataset* dataset, size_t* out) {
  return guarded([&] {
    require(dataset, "dataset");
    require(out, "out");
    *out = dataset->value.records.size();
  });
}

rohil_status rohil_relight(const rohil_config* config, const rohil_dataset* source, uint64_t noise_seed,
                           rohil_dataset** out) {
  return guarded([&] {
    require(config, "config");
    require(source, "source");
    require(out, "out");
    rohil::RelightOptions ro;
    ro.lights = config->value.world.relight;
    ro.pixel_noise = config->value.relight.pixel_noise;
    ro.noise_seed = noise_seed;
    *out = new rohil_dataset{rohil::relight_dataset(source->value, ro)};
  });
}

void rohil_dataset_free(rohil_dataset* dataset) { delete dataset; }

// ---- training ----

rohil_status rohil_train_source(const rohil_config* config, uint64_t seed, rohil_progress_fn progress, void* user,
                                rohil_source_result* out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const rohil::Config& c = config->value;
    rohil::SourceResult r =
        rohil::train_source(c.world, rohil::effective_learner(c), c.source, seed, wrap_progress(progress, user));
    auto agent = std::make_unique<rohil_agent>(rohil_agent{std::move(r.agent)});
    auto rl = std::make_unique<rohil_dataset>(rohil_dataset{std::move(r.rl)});
    auto demos = std::make_unique<rohil_dataset>(rohil_dataset{std::move(r.demos)});
    out->agent = agent.release();
    out->rl = rl.release();
    out->demos = demos.release();
    out->best_step = r.best_step;
    out->best_success = r.best_success;
  });
}

void rohil_source_result_free(rohil_source_result* result) {
  if (result == nullptr) return;
  delete result->agent;
  delete result->rl;
  delete result->demos;
  result->agent = nullptr;
  result->rl = nullptr;
  result->demos = nullptr;
}

rohil_status rohil_finetune(const rohil_config* config, const rohil_agent* source, const rohil_dataset* rl,
                            const rohil_dataset* demos, const rohil_dataset* rl_relit,
                            const rohil_dataset* demos_relit, double alpha, const char* anchor, uint64_t seed,
                            uint64_t checkpoint_every, rohil_checkpoint_fn on_checkpoint, void* user,
                            rohil_agent** out) {
  return guarded([&] {
    require(config, "config");
    require(source, "source");
    require(rl, "rl");
    require(demos, "demos");
    require(rl_relit, "rl_relit");
    require(demos_relit, "demos_relit");
    require(anchor, "anchor");
    require(out, "out");
    rohil::Variant v;
    v.name = "finetune";
    v.alpha = alpha;
    v.head = rohil::parse_anchor_head(anchor);
    v.anchored = v.head != rohil::AnchorHead::kNone;
    if (!v.anchored) v.head = rohil::AnchorHead::kMse;
    const rohil::LearnerConfig lc = rohil::variant_learner(config->value, v, seed);
    const rohil::PoolSet pools = rohil::build_pools(rl->value, demos->value, rl_relit->value, demos_relit->value);
    rohil::CheckpointFn cb;
    if (on_checkpoint != nullptr) {
      cb = [&](std::uint64_t step, const rohil::Agent& a) {
        const rohil_agent view{a};
        on_checkpoint(step, &view, user);
      };
    }
    rohil::FinetuneResult r = rohil::finetune(source->value, pools, lc, cb, checkpoint_every);
    *out = new rohil_agent{std::move(r.agent)};
  });
}

// ---- evaluation ----

rohil_status rohil_evaluate(const rohil_config* config, const rohil_agent* agent, double shift, uint32_t episodes,
                            uint64_t seed, int interventions, rohil_eval_result* out) {
  return guarded([&] {
    require(config, "config");
    require(agent, "agent");
    require(out, "out");
    const rohil::Config& c = config->value;
    rohil::EvalOptions opts;
    opts.shift = shift;
    opts.episodes = episodes;
    opts.seed = seed;
    opts.interventions = interventions != 0;
    opts.rule = c.source.rule;
    const rohil::EvalReport r = rohil::evaluate(agent->value, c.world.env, c.world.source, c.world.deploy, opts);
    out->shift = r.shift;
    out->episodes = r.episodes;
    out->successes = r.successes;
    out->success_rate = r.success_rate;
    out->has_mean_success_steps = r.mean_success_steps.has_value();
    out->mean_success_steps = r.mean_success_steps.value_or(0.0);
    out->has_intervention_rate = r.intervention_rate.has_value();
    out->intervention_rate = r.intervention_rate.value_or(0.0);
    out->seed = r.seed;
  });
}

// ---- experiments and reports ----

rohil_status rohil_run_experiment(const rohil_config* config, const char* kind, const rohil_plan* plan,
                                  rohil_progress_fn progress, void* user, rohil_report** out) {
  return guarded([&] {
    require(config, "config");
    require(kind, "kind");
    require(plan, "plan");
    require(out, "out");
    rohil::ExperimentPlan p;
    p.config = config->value;
    if (plan->n_seeds > 0) {
      require(plan->seeds, "plan.seeds");
      p.seeds.assign(plan->seeds, plan->seeds + plan->n_seeds);
    }
    if (plan->n_alphas > 0) {
      require(plan->alphas, "plan.alphas");
      p.alphas.assign(plan->alphas, plan->alphas + plan->n_alphas);
    }
    if (plan->n_shifts > 0) {
      require(plan->shifts, "plan.shifts");
      p.shifts.assign(plan->shifts, plan->shifts + plan->n_shifts);
    } else {
      p.shifts = {0.0, config->value.eval.shift};
    }
    if (plan->cache_dir != nullptr) p.cache_dir = plan->cache_dir;
    p.threads = plan->threads;
    p.progress = wrap_progress(progress, user);

    const std::string k = kind;
    std::vector<rohil::ReportRow> rows;
    if (k == "sweep-alpha") {
      rows = rohil::run_alpha_sweep(p);
    } else if (k == "ablate-2x2") {
      rows = rohil::run_2x2_ablation(p);
    } else if (k == "compare-anchor-head") {
      rows = rohil::run_anchor_head_compare(p);
    } else if (k == "sweep-iterations") {
      rows = rohil::run_iteration_sweep(p);
    } else {
      rohil::fail(rohil::ErrorCode::kInvalidArgument, "unknown experiment kind '" + k + "'");
    }
    *out = new rohil_report{std::move(rows)};
  });
}

rohil_status rohil_report_new(rohil_report** out) {
  return guarded([&] {
    require(out, "out");
    *out = new rohil_report{};
  });
}

rohil_status rohil_report_load_csv(const char* path, rohil_report** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    const std::vector<std::uint8_t> bytes = rohil::read_file(path);
    *out = new rohil_report{rohil::parse_report_csv(std::string(bytes.begin(), bytes.end()))};
  });
}

rohil_status rohil_report_merge(rohil_report* into, const rohil_report* from) {
  return guarded([&] {
    require(into, "into");
    require(from, "from");
    into->rows.insert(into->rows.end(), from->rows.begin(), from->rows.end());
    rohil::sort_rows(into->rows);
  });
}

rohil_status rohil_report_rows(const rohil_report* report, size_t* out) {
  return guarded([&] {
    require(report, "report");
    require(out, "out");
    *out = report->rows.size();
  });
}

rohil_status rohil_report_csv(const rohil_report* report, char** out) {
  return guarded([&] {
    require(report, "report");
    require(out, "out");
    std::vector<rohil::ReportRow> sorted = report->rows;
    rohil::sort_rows(sorted);
    *out = dup_string(rohil::report_csv(sorted));
  });
}

rohil_status rohil_report_write(const rohil_report* report, const char* csv_path) {
  return guarded([&] {
    require(report, "report");
    require(csv_path, "csv_path");
    rohil::emit_report(report->rows, csv_path);
  });
}

void rohil_report_free(rohil_report* report) { delete report; }

}  // extern "C"
