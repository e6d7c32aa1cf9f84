#include "harness/evaluate.hpp"

#include <cmath>

#include "numerics/runtime.hpp"
#include "numerics/seeding.hpp"

namespace rohil {

int shift_percent(double shift) {
  const double pct = shift * 100.0;
  const long rounded = std::lround(pct);
  if (!(shift >= 0.0 && shift <= 1.0) || std::abs(pct - static_cast<double>(rounded)) > 1e-6 || rounded % 10 != 0) {
    fail(ErrorCode::kInvalidArgument, "shift must be one of 0.0, 0.1, ..., 1.0; got " + std::to_string(shift));
  }
  return static_cast<int>(rounded);
}

BatchPolicy greedy_policy(const Agent& agent) {
  return [&agent](std::span<const Observation* const> obs, std::span<const WorldState* const>) {
    const Tensor<float> features = encode(agent, observation_batch<float>(obs));
    const PolicyOutput<float> out = policy_from_features(agent, features);
    std::vector<Action> actions(obs.size());
    for (std::size_t r = 0; r < obs.size(); ++r) {
      for (std::size_t d = 0; d < kActionDim; ++d) actions[r][d] = std::tanh(out.mean.at(r, d));
    }
    return actions;
  };
}

BatchPolicy expert_policy(const EnvConfig& env) {
  return [env](std::span<const Observation* const>, std::span<const WorldState* const> states) {
    std::vector<Action> actions;
    actions.reserve(states.size());
    for (const WorldState* s : states) actions.push_back(expert_action(*s, env));
    return actions;
  };
}

EvalReport evaluate(const BatchPolicy& policy, const EnvConfig& env_config, const Illumination& source,
                    const Illumination& deploy, const EvalOptions& options) {
  configure_runtime();
  if (options.episodes == 0) fail(ErrorCode::kInvalidArgument, "evaluate: episodes must be positive");
  shift_percent(options.shift);
  const LitWorld env(env_config, interpolate_light(source, deploy, options.shift));

  struct Live {
    WorldState state;
    Observation obs;
    InterventionTracker tracker{InterventionRule{}};
    bool finished = false;
    bool success = false;
    bool intervened = false;
  };
  InterventionRule rule = options.rule;
  rule.enabled = options.interventions;
  std::vector<Live> live(options.episodes);
  for (std::uint32_t i = 0; i < options.episodes; ++i) {
    ResetResult r = env.reset(derive_seed(options.seed, {kStreamEval, i}));
    live[i].state = r.state;
    live[i].obs = r.obs;
    live[i].tracker = InterventionTracker(rule);
    live[i].tracker.reset(distance(r.state.agent, r.state.target));
  }

  std::vector<std::size_t> active;
  std::vector<const Observation*> obs;
  std::vector<const WorldState*> states;
  for (;;) {
    active.clear();
    obs.clear();
    states.clear();
    for (std::size_t i = 0; i < live.size(); ++i) {
      if (!live[i].finished) {
        active.push_back(i);
        obs.push_back(&live[i].obs);
        states.push_back(&live[i].state);
      }
    }
    if (active.empty()) break;
    const std::vector<Action> actions = policy(obs, states);
    for (std::size_t k = 0; k < active.size(); ++k) {
      Live& e = live[active[k]];
      Action a = actions[k];
      if (e.tracker.active()) {
        a = expert_action(e.state, env_config);
        e.intervened = true;
      }
      StepResult r = env.step(e.state, a);
      e.state = r.state;
      e.obs = r.obs;
      e.success = r.done;
      e.finished = r.done || r.truncated;
      if (!e.finished) e.tracker.observe(distance(e.state.agent, e.state.target));
    }
  }

  EvalReport report;
  report.shift = options.shift;
  report.episodes = options.episodes;
  report.seed = options.seed;
  double steps = 0.0;
  std::uint32_t intervened = 0;
  for (const Live& e : live) {
    if (e.success) {
      ++report.successes;
      steps += e.state.step;
    }
    if (e.intervened) ++intervened;
  }
  report.success_rate = static_cast<double>(report.successes) / static_cast<double>(report.episodes);
  if (report.successes > 0) report.mean_success_steps = steps / static_cast<double>(report.successes);
  if (options.interventions) {
    report.intervention_rate = static_cast<double>(intervened) / static_cast<double>(report.episodes);
  }
  return report;
}

EvalReport evaluate(const Agent& agent, const EnvConfig& env, const Illumination& source, const Illumination& deploy,
                    const EvalOptions& options) {
  return evaluate(greedy_policy(agent), env, source, deploy, options);
}

}  // namespace rohil
