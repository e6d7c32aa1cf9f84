#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "litworld/litworld.hpp"
#include "nets/nets.hpp"

namespace rohil {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;
// WorldState::step value marking a record whose ground-truth state is unknown.
inline constexpr std::uint32_t kMissingStateStep = std::numeric_limits<std::uint32_t>::max();

enum class ActionSource : std::uint8_t { kPolicy = 0, kExpert = 1 };

// 0 = source light, k in 1..4 = relit under K_k.
using LightTag = std::uint8_t;
inline constexpr LightTag kSourceLight = 0;

struct Transition {
  std::uint32_t episode = 0;
  std::uint32_t step = 0;
  LightTag light = kSourceLight;
  ActionSource source = ActionSource::kPolicy;
  WorldState state;
  Observation obs;
  Action action{0.0f, 0.0f};
  float reward = 0.0f;
  Observation next_obs;
  WorldState next_state;
  bool done = false;

  bool relit() const noexcept { return light != kSourceLight; }
  bool has_state() const noexcept {
    return state.step != kMissingStateStep && next_state.step != kMissingStateStep;
  }

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct TrajectoryDataset {
  // Entry k is the light for tag k.
  std::vector<Illumination> lights;
  std::vector<Transition> records;

  friend bool operator==(const TrajectoryDataset&, const TrajectoryDataset&) = default;
};

// Expert takeover once the agent has gone `stall_window` consecutive steps
// without getting closer to the target than its best distance so far. After
// triggering, the expert keeps control until the episode ends.
struct InterventionRule {
  bool enabled = true;
  std::uint32_t stall_window = 10;
};

class InterventionTracker {
 public:
  explicit InterventionTracker(InterventionRule rule) : rule_(rule) {}
  void reset(float initial_distance);
  // Returns true when the expert controls the next action.
  bool observe(float distance);
  bool active() const noexcept { return active_; }

 private:
  InterventionRule rule_;
  float best_ = 0.0f;
  std::uint32_t stalled_ = 0;
  bool active_ = false;
};

using PolicyFn = std::function<Action(const Observation&)>;

struct EpisodeRecord {
  std::vector<Transition> transitions;
  bool success = false;
  bool intervened = false;
};

// Step-wise recorder so a learner can interleave updates with environment steps.
class EpisodeRecorder {
 public:
  EpisodeRecorder(const LitWorld& env, InterventionRule rule);

  void begin(std::uint64_t seed, std::uint32_t episode_id);
  const Observation& observation() const noexcept { return obs_; }
  const WorldState& state() const noexcept { return state_; }
  bool expert_in_control() const noexcept { return tracker_.active(); }
  bool finished() const noexcept { return finished_; }
  bool success() const noexcept { return success_; }
  bool intervened() const noexcept { return intervened_; }

  // Applies the policy action, or the expert action while an intervention is
  // active, and returns the stored transition.
  const Transition& step(const Action& policy_action);

 private:
  const LitWorld* env_;
  InterventionTracker tracker_;
  std::uint32_t episode_ = 0;
  WorldState state_;
  Observation obs_;
  Transition last_;
  bool finished_ = true;
  bool success_ = false;
  bool intervened_ = false;
};

// A null policy records a pure expert episode (every transition tagged EXPERT).
EpisodeRecord record_episode(const LitWorld& env, const PolicyFn* policy, std::uint64_t seed,
                             std::uint32_t episode_id, InterventionRule rule);

struct RelightOptions {
  std::array<Illumination, 4> lights = default_relight_lights();
  // Standard deviation (in u8 levels) of additive pixel noise; 0 disables it.
  double pixel_noise = 0.0;
  std::uint64_t noise_seed = 0;
};

// Re-renders every source record under K1..K4 from its stored world states.
// Output holds exactly 4 records per input record; only observation bytes differ.
TrajectoryDataset relight_dataset(const TrajectoryDataset& source, const RelightOptions& options = {});

void write_dataset(const std::string& path, const TrajectoryDataset& ds);
TrajectoryDataset read_dataset(const std::string& path);
std::vector<std::uint8_t> encode_dataset(const TrajectoryDataset& ds);
TrajectoryDataset decode_dataset(const std::vector<std::uint8_t>& bytes);

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

struct CheckpointMeta {
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  std::vector<NamedArray> arrays;
  CheckpointMeta meta;

  const NamedArray& find(const std::string& name) const;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

Checkpoint agent_to_checkpoint(const Agent& agent, CheckpointMeta meta = {});
Agent agent_from_checkpoint(const Checkpoint& ckpt);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace rohil
