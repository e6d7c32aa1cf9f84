#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "harness/config.hpp"
#include "harness/report.hpp"

namespace rohil {

// Reported once per source stage (cell "source") and once per fine-tune.
struct CellRecord {
  std::uint64_t seed = 0;
  std::string cell;
  std::optional<double> alpha;
  double seconds = 0.0;
  bool from_cache = false;
  std::uint64_t source_checksum = 0;
  std::uint64_t anchor_checksum = 0;  // fine-tunes only
};

struct ExperimentPlan {
  Config config;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<double> alphas;  // alpha sweep grid; empty means the 21-point default
  std::vector<double> shifts{0.0, 0.6};
  std::string cache_dir;  // per-seed source artifacts; empty keeps them in memory
  unsigned threads = 1;   // 0 = one per hardware thread
  ProgressFn progress;
  std::function<void(const CellRecord&)> on_cell;
};

void validate(const ExperimentPlan& plan);

// 0.0, 0.05, ..., 1.0
std::vector<double> default_alpha_grid();

// A fine-tune configuration. `anchored` switches both anchor terms; with it off
// the feature weight is zero and the policy head is NONE.
struct Variant {
  std::string name;
  double alpha = 0.75;
  bool anchored = true;
  AnchorHead head = AnchorHead::kMse;
  std::uint64_t checkpoint_every = 0;  // 0: evaluate the final agent only
};

LearnerConfig variant_learner(const Config& config, const Variant& v, std::uint64_t seed);

// Source agent, its recorded pools and their relit copies for one seed.
struct SourceArtifacts {
  SourceResult source;
  TrajectoryDataset rl_relit;
  TrajectoryDataset demos_relit;
  bool from_cache = false;
};

// Trains (or loads from plan.cache_dir when the cached run matches) the source stage.
SourceArtifacts prepare_source(const Config& config, std::uint64_t seed, const std::string& cache_dir,
                               const ProgressFn& progress = {});

std::uint64_t eval_seed_for(const Config& config, std::uint64_t seed);

// Evaluates the source agent ("source" rows) and every variant on every shift,
// for every seed. Rows come back sorted.
std::vector<ReportRow> run_variants(const ExperimentPlan& plan, const std::vector<Variant>& variants);

std::vector<Variant> alpha_sweep_variants(const ExperimentPlan& plan);
std::vector<Variant> ablation_variants(const Config& config);  // Final-A .. Final-D
std::vector<Variant> anchor_head_variants(const Config& config);
std::vector<Variant> iteration_sweep_variants(const Config& config);

std::vector<ReportRow> run_alpha_sweep(const ExperimentPlan& plan);
std::vector<ReportRow> run_2x2_ablation(const ExperimentPlan& plan);
std::vector<ReportRow> run_anchor_head_compare(const ExperimentPlan& plan);
std::vector<ReportRow> run_iteration_sweep(const ExperimentPlan& plan);

}  // namespace rohil
