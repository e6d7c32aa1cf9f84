#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <unordered_map>
#include <vector>

#include "harness/evaluate.hpp"
#include "learners/losses.hpp"
#include "replay/replay.hpp"

namespace rohil {

struct LearnerConfig {
  double gamma = 0.97;
  double eta = 0.05;
  double tau = 0.005;
  double lr = 3e-4;
  std::size_t batch = 256;
  std::uint64_t horizon = 15000;  // T
  double lambda_feat = 0.2;
  double beta_mse = 0.1;
  double rho_end = 0.33;
  AnchorHead anchor = AnchorHead::kMse;
  double alpha = 0.75;
  std::uint64_t seed = 0;         // learner noise
  std::uint64_t replay_seed = 0;  // fine-tune batch sampling
};

void validate(const LearnerConfig& cfg);

struct SourceConfig {
  std::uint64_t budget = 30000;  // environment steps, one learner step each
  std::uint32_t demos = 20;
  std::uint32_t eval_every = 2500;
  std::uint32_t eval_episodes = 50;
  InterventionRule rule{};
};

// Lights and dynamics shared by every stage.
struct WorldConfig {
  EnvConfig env{};
  Illumination source = default_source_light();
  Illumination deploy = default_deploy_light();
  std::array<Illumination, 4> relight = default_relight_lights();
};

// rho(t) = 1 - (1 - rho_end) t / T
double rho(std::uint64_t t, std::uint64_t horizon, double rho_end);

// Frozen copy of the fine-tune starting point. Its outputs on anchor transitions
// are cached by transition address, which PoolSet keeps stable.
class FrozenAnchor {
 public:
  explicit FrozenAnchor(const Agent& agent);

  const Agent& params() const noexcept { return params_; }
  std::uint64_t checksum() const noexcept { return checksum_; }
  // Throws if the parameters changed since construction.
  void verify() const;

  // Caches outputs for every anchor-pool transition up front.
  void prefill(const PoolSet& pools, std::size_t batch_size);
  // `obs` is the batch observation tensor the online pass encodes.
  AnchorTargets<float> targets(const Batch& batch, const Tensor<float>& obs);

 private:
  struct Row {
    std::vector<float> feature;
    std::array<float, kActionDim> mean{};
    std::array<float, kActionDim> log_std{};
  };
  void store(const std::vector<const Transition*>& rows, const Tensor<float>& obs);

  Agent params_;
  std::uint64_t checksum_;
  std::unordered_map<const Transition*, Row> cache_;
};

enum class SamplerMode { kRlpd, kIrr };

struct StepStats {
  double bellman = 0.0;
  double feat = 0.0;
  double sac = 0.0;
  double anchor = 0.0;
};

BatchTensors<float> make_batch_tensors(const Batch& batch, std::mt19937_64& noise_rng);

// Owns the online agent and one Adam state per network group (encoder + critics,
// actor). Targets have no optimizer state; only the Polyak update moves them.
class Learner {
 public:
  Learner(Agent agent, const LearnerConfig& cfg, std::uint64_t noise_seed);

  // One learner step: critic update, then actor update, then Polyak.
  StepStats step(const PoolSet& pools, ReplaySampler& sampler, SamplerMode mode, FrozenAnchor* anchor,
                 std::uint64_t t);
  StepStats step_on(const Batch& batch, FrozenAnchor* anchor, std::uint64_t t);

  const Agent& agent() const noexcept { return agent_; }
  const AdamState<float>& critic_optimizer() const noexcept { return critic_opt_; }
  const AdamState<float>& actor_optimizer() const noexcept { return actor_opt_; }

 private:
  Agent agent_;
  LearnerConfig cfg_;
  AdamState<float> critic_opt_;
  AdamState<float> actor_opt_;
  std::mt19937_64 noise_rng_;
};

// Stochastic single-observation action a = tanh(mu + sigma * noise).
Action sample_action(const Agent& agent, const Observation& obs, std::mt19937_64& rng);

struct SourceResult {
  Agent agent;
  TrajectoryDataset rl;     // every online transition, interventions included
  TrajectoryDataset demos;  // seed demonstrations
  std::uint64_t best_step = 0;
  double best_success = 0.0;
  std::vector<std::pair<std::uint64_t, double>> curve;  // (env step, source success)
};

using ProgressFn = std::function<void(const std::string&)>;

SourceResult train_source(const WorldConfig& world, const LearnerConfig& learner, const SourceConfig& source,
                          std::uint64_t seed, const ProgressFn& progress = {});

// Pools for fine-tuning from the source-training outputs and their relit copies.
PoolSet build_pools(const TrajectoryDataset& rl, const TrajectoryDataset& demos, const TrajectoryDataset& rl_relit,
                    const TrajectoryDataset& demos_relit);

using CheckpointFn = std::function<void(std::uint64_t step, const Agent& agent)>;

struct FinetuneResult {
  Agent agent;
  std::uint64_t anchor_checksum = 0;
  StepStats first_step;
};

// T offline learner steps on IRR batches; no environment interaction. The
// callback fires at step 0 and after every `checkpoint_every` steps.
FinetuneResult finetune(const Agent& source, const PoolSet& pools, const LearnerConfig& cfg,
                        const CheckpointFn& on_checkpoint = {}, std::uint64_t checkpoint_every = 1000);

}  // namespace rohil
