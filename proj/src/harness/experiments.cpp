#include "harness/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "numerics/seeding.hpp"

namespace rohil {

namespace fs = std::filesystem;

void validate(const ExperimentPlan& plan) {
  if (plan.seeds.empty()) fail(ErrorCode::kInvalidArgument, "experiment: seed list is empty");
  if (std::set<std::uint64_t>(plan.seeds.begin(), plan.seeds.end()).size() != plan.seeds.size()) {
    fail(ErrorCode::kInvalidArgument, "experiment: seeds must be distinct");
  }
  if (plan.shifts.empty()) fail(ErrorCode::kInvalidArgument, "experiment: shift list is empty");
  for (double s : plan.shifts) shift_percent(s);
  for (double a : plan.alphas) {
    if (!(a >= 0.0 && a <= 1.0)) fail(ErrorCode::kInvalidArgument, "experiment: alpha outside [0,1]");
  }
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
  return grid;
}

LearnerConfig variant_learner(const Config& config, const Variant& v, std::uint64_t seed) {
  LearnerConfig l = effective_learner(config);
  l.alpha = v.alpha;
  if (v.anchored) {
    l.anchor = v.head;
  } else {
    l.lambda_feat = 0.0;
    l.beta_mse = 0.0;
    l.anchor = AnchorHead::kNone;
  }
  l.seed = derive_seed(config.learner.seed, {kStreamFinetune, seed});
  l.replay_seed = derive_seed(config.replay.seed, {kStreamFinetune, seed});
  return l;
}

std::uint64_t eval_seed_for(const Config& config, std::uint64_t seed) {
  return derive_seed(config.eval.seed, {kStreamEval, seed});
}

namespace {

// Only the settings the source stage reads feed its cache key.
std::uint64_t source_hash(const Config& config, std::uint64_t seed) {
  static const char* const kPrefixes[] = {"env.",          "light.source.",  "learner.gamma", "learner.eta",
                                          "learner.tau",   "learner.lr",     "learner.batch", "replay.batch_size",
                                          "source."};
  std::uint64_t h = derive_seed(seed, {0x50u});
  std::istringstream in(config_to_text(config));
  std::string line;
  while (std::getline(in, line)) {
    const bool used = std::any_of(std::begin(kPrefixes), std::end(kPrefixes),
                                  [&](const char* p) { return line.rfind(p, 0) == 0; });
    if (!used) continue;
    for (unsigned char c : line) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

SourceResult load_cached(const fs::path& dir, std::uint64_t expected_hash) {
  const Checkpoint ckpt = read_checkpoint((dir / "source.ckpt").string());
  if (ckpt.meta.config_hash != expected_hash) fail(ErrorCode::kConfig, "cached source was built from another config");
  SourceResult r;
  r.agent = agent_from_checkpoint(ckpt);
  r.best_step = ckpt.meta.step;
  const std::vector<std::uint8_t> meta_bytes = read_file((dir / "source.json").string());
  const auto meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
  r.best_success = meta.at("best_success").get<double>();
  for (const auto& point : meta.at("curve")) r.curve.emplace_back(point.at(0).get<std::uint64_t>(), point.at(1).get<double>());
  r.rl = read_dataset((dir / "rl.rohl").string());
  r.demos = read_dataset((dir / "demos.rohl").string());
  return r;
}

void store_cached(const fs::path& dir, const SourceResult& r, std::uint64_t hash) {
  fs::create_directories(dir);
  write_dataset((dir / "rl.rohl").string(), r.rl);
  write_dataset((dir / "demos.rohl").string(), r.demos);
  nlohmann::json meta;
  meta["best_step"] = r.best_step;
  meta["best_success"] = r.best_success;
  meta["curve"] = nlohmann::json::array();
  for (const auto& [step, sr] : r.curve) meta["curve"].push_back({step, sr});
  const std::string text = meta.dump(2) + "\n";
  write_file((dir / "source.json").string(), std::vector<std::uint8_t>(text.begin(), text.end()));
  // Written last: its presence marks a complete cache entry.
  write_checkpoint((dir / "source.ckpt").string(), agent_to_checkpoint(r.agent, CheckpointMeta{r.best_step, hash}));
}

}  // namespace

SourceArtifacts prepare_source(const Config& config, std::uint64_t seed, const std::string& cache_dir,
                               const ProgressFn& progress) {
  SourceArtifacts out;
  const std::uint64_t hash = source_hash(config, seed);
  const fs::path dir = cache_dir.empty() ? fs::path() : fs::path(cache_dir) / ("seed_" + std::to_string(seed));
  bool loaded = false;
  if (!cache_dir.empty() && fs::exists(dir / "source.ckpt")) {
    try {
      out.source = load_cached(dir, hash);
      loaded = true;
      out.from_cache = true;
      if (progress) progress("seed " + std::to_string(seed) + ": reusing cached source run");
    } catch (const Error& e) {
      if (progress) progress("seed " + std::to_string(seed) + ": cache unusable (" + e.what() + "), retraining");
    }
  }
  if (!loaded) {
    ProgressFn tagged;
    if (progress) tagged = [&](const std::string& m) { progress("seed " + std::to_string(seed) + ": " + m); };
    out.source = train_source(config.world, effective_learner(config), config.source, seed, tagged);
    if (!cache_dir.empty()) store_cached(dir, out.source, hash);
  }
  RelightOptions ro;
  ro.lights = config.world.relight;
  ro.pixel_noise = config.relight.pixel_noise;
  ro.noise_seed = derive_seed(config.relight.noise_seed, {seed});
  out.rl_relit = relight_dataset(out.source.rl, ro);
  out.demos_relit = relight_dataset(out.source.demos, ro);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<ReportRow> evaluate_rows(const Agent& agent, const Config& config, const ExperimentPlan& plan,
                                     std::uint64_t seed, const std::string& variant, std::optional<double> alpha,
                                     const std::string& head, std::optional<std::uint64_t> step) {
  std::vector<ReportRow> rows;
  for (double s : plan.shifts) {
    EvalOptions opts;
    opts.shift = s;
    opts.episodes = config.eval.episodes;
    opts.seed = eval_seed_for(config, seed);
    const EvalReport r = evaluate(agent, config.world.env, config.world.source, config.world.deploy, opts);
    rows.push_back(make_row(variant, alpha, head, seed, r, step));
  }
  return rows;
}

std::string head_label(const Variant& v) { return v.anchored ? anchor_head_name(v.head) : "none"; }

// Per-seed state shared by that seed's cells; released after its last cell.
struct SeedSlot {
  std::once_flag ready;
  std::unique_ptr<SourceArtifacts> artifacts;
  std::unique_ptr<PoolSet> pools;
  std::atomic<std::size_t> remaining{0};
  std::exception_ptr error;
};

}  // namespace

std::vector<ReportRow> run_variants(const ExperimentPlan& plan, const std::vector<Variant>& variants) {
  validate(plan);
  const Config& config = plan.config;
  for (const Variant& v : variants) {
    if (v.name.empty() || v.name.find(',') != std::string::npos) {
      fail(ErrorCode::kInvalidArgument, "experiment: variant names must be nonempty and comma-free");
    }
  }

  std::mutex mu;
  std::vector<ReportRow> rows;
  auto say = [&](const std::string& m) {
    if (!plan.progress) return;
    std::lock_guard<std::mutex> lock(mu);
    plan.progress(m);
  };
  auto record = [&](const CellRecord& r) {
    if (!plan.on_cell) return;
    std::lock_guard<std::mutex> lock(mu);
    plan.on_cell(r);
  };

  std::vector<SeedSlot> slots(plan.seeds.size());
  // Cell 0 of each seed evaluates the source agent; cells 1.. are the variants.
  const std::size_t per_seed = variants.size() + 1;
  for (auto& s : slots) s.remaining = per_seed;

  auto run_cell = [&](std::size_t index) {
    const std::size_t si = index / per_seed;
    const std::size_t ci = index % per_seed;
    const std::uint64_t seed = plan.seeds[si];
    SeedSlot& slot = slots[si];
    std::call_once(slot.ready, [&] {
      try {
        const auto start = Clock::now();
        slot.artifacts = std::make_unique<SourceArtifacts>(prepare_source(config, seed, plan.cache_dir, say));
        const SourceArtifacts& a = *slot.artifacts;
        record({seed, "source", std::nullopt, seconds_since(start), a.from_cache, checksum(a.source.agent), 0});
        slot.pools = std::make_unique<PoolSet>(build_pools(a.source.rl, a.source.demos, a.rl_relit, a.demos_relit));
        // The pools own copies of every transition.
        slot.artifacts->source.rl = {};
        slot.artifacts->source.demos = {};
        slot.artifacts->rl_relit = {};
        slot.artifacts->demos_relit = {};
      } catch (...) {
        slot.error = std::current_exception();
      }
    });
    if (slot.error) std::rethrow_exception(slot.error);

    std::vector<ReportRow> local;
    if (ci == 0) {
      local = evaluate_rows(slot.artifacts->source.agent, config, plan, seed, "source", std::nullopt, "", std::nullopt);
    } else {
      const Variant& v = variants[ci - 1];
      const LearnerConfig lc = variant_learner(config, v, seed);
      const std::string head = head_label(v);
      const std::uint64_t verify_every = v.checkpoint_every > 0 ? v.checkpoint_every : 1000;
      CheckpointFn on_checkpoint;
      if (v.checkpoint_every > 0) {
        on_checkpoint = [&](std::uint64_t step, const Agent& agent) {
          auto r = evaluate_rows(agent, config, plan, seed, v.name, v.alpha, head, step);
          local.insert(local.end(), r.begin(), r.end());
        };
      }
      say("seed " + std::to_string(seed) + ": fine-tuning " + v.name);
      const auto start = Clock::now();
      FinetuneResult ft = finetune(slot.artifacts->source.agent, *slot.pools, lc, on_checkpoint, verify_every);
      record({seed, v.name, v.alpha, seconds_since(start), false, checksum(slot.artifacts->source.agent),
              ft.anchor_checksum});
      if (v.checkpoint_every == 0 || lc.horizon % v.checkpoint_every != 0) {
        auto r = evaluate_rows(ft.agent, config, plan, seed, v.name, v.alpha, head, lc.horizon);
        local.insert(local.end(), r.begin(), r.end());
      }
    }
    {
      std::lock_guard<std::mutex> lock(mu);
      rows.insert(rows.end(), local.begin(), local.end());
    }
    if (--slot.remaining == 0) {
      slot.pools.reset();
      slot.artifacts.reset();
    }
  };

  const std::size_t total = plan.seeds.size() * per_seed;
  unsigned threads = plan.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : plan.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, total));
  if (threads <= 1) {
    for (std::size_t i = 0; i < total; ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next++;
          if (i >= total) return;
          try {
            run_cell(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (!first_error) first_error = std::current_exception();
            next = total;
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  sort_rows(rows);
  return rows;
}

std::vector<Variant> alpha_sweep_variants(const ExperimentPlan& plan) {
  const std::vector<double> grid = plan.alphas.empty() ? default_alpha_grid() : plan.alphas;
  std::vector<Variant> out;
  for (double a : grid) out.push_back({"alpha-sweep", a, true, plan.config.learner.anchor, 0});
  return out;
}

std::vector<Variant> ablation_variants(const Config& config) {
  const double on = config.replay.alpha;
  const AnchorHead head = config.learner.anchor;
  return {{"Final-A", 0.0, false, head, 0},
          {"Final-B", 0.0, true, head, 0},
          {"Final-C", on, false, head, 0},
          {"Final-D", on, true, head, 0}};
}

std::vector<Variant> anchor_head_variants(const Config& config) {
  return {{"head-mse", config.replay.alpha, true, AnchorHead::kMse, 0},
          {"head-kl", config.replay.alpha, true, AnchorHead::kKl, 0}};
}

std::vector<Variant> iteration_sweep_variants(const Config& config) {
  return {{"anchored", config.replay.alpha, true, config.learner.anchor, 1000},
          {"unanchored", config.replay.alpha, false, config.learner.anchor, 1000}};
}

std::vector<ReportRow> run_alpha_sweep(const ExperimentPlan& plan) {
  return run_variants(plan, alpha_sweep_variants(plan));
}
std::vector<ReportRow> run_2x2_ablation(const ExperimentPlan& plan) {
  return run_variants(plan, ablation_variants(plan.config));
}
std::vector<ReportRow> run_anchor_head_compare(const ExperimentPlan& plan) {
  return run_variants(plan, anchor_head_variants(plan.config));
}
std::vector<ReportRow> run_iteration_sweep(const ExperimentPlan& plan) {
  return run_variants(plan, iteration_sweep_variants(plan.config));
}

}  // namespace rohil
