#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "datasets/datasets.hpp"
#include "nets/nets.hpp"

namespace rohil {

struct EvalOptions {
  double shift = 0.0;  // 0.0, 0.1, ..., 1.0
  std::uint32_t episodes = 100;
  std::uint64_t seed = 0;
  bool interventions = false;
  InterventionRule rule{};
};

struct EvalReport {
  double shift = 0.0;
  std::uint32_t episodes = 0;
  std::uint32_t successes = 0;
  double success_rate = 0.0;
  // Absent when no episode succeeded.
  std::optional<double> mean_success_steps;
  // Present only for intervention-enabled evaluation.
  std::optional<double> intervention_rate;
  std::uint64_t seed = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Maps a batch of live episodes to actions. Policies see observations only;
// the state view exists for the oracle expert.
using BatchPolicy =
    std::function<std::vector<Action>(std::span<const Observation* const>, std::span<const WorldState* const>)>;

BatchPolicy greedy_policy(const Agent& agent);
BatchPolicy expert_policy(const EnvConfig& env);

// Rolls out `episodes` episodes in lockstep under the light interpolated between
// source and deploy at the given shift. Episode start states depend on the seed
// only, so every shift level replays the same initial conditions.
EvalReport evaluate(const BatchPolicy& policy, const EnvConfig& env, const Illumination& source,
                    const Illumination& deploy, const EvalOptions& options);

EvalReport evaluate(const Agent& agent, const EnvConfig& env, const Illumination& source, const Illumination& deploy,
                    const EvalOptions& options);

// Validates a shift against the 0%,10%,...,100% grid and returns it as a percentage.
int shift_percent(double shift);

}  // namespace rohil
