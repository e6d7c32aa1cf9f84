#pragma once

#include <array>
#include <cstdint>
#include <numbers>

namespace rohil {

inline constexpr std::size_t kImageH = 16;
inline constexpr std::size_t kImageW = 16;
inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kImageBytes = kImageH * kImageW * kChannels;
inline constexpr std::size_t kProprioDim = 2;
inline constexpr std::size_t kActionDim = 2;

using Vec2 = std::array<float, 2>;
using Action = std::array<float, kActionDim>;
using Image = std::array<std::uint8_t, kImageBytes>;

struct WorldState {
  Vec2 agent{0.0f, 0.0f};
  Vec2 target{0.0f, 0.0f};
  std::uint32_t step = 0;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

// Parametric light: ambient term, directional diffuse gradient, a gaussian
// specular blob and per-channel gains. Stored in fp32 to match the file format.
struct Illumination {
  float ambient = 0.6f;
  float diffuse = 0.3f;
  float phi = 0.0f;
  Vec2 spec_center{0.25f, 0.25f};
  float spec_strength = 0.2f;
  std::array<float, 3> gains{1.0f, 1.0f, 1.0f};

  friend bool operator==(const Illumination&, const Illumination&) = default;
};

struct Observation {
  Image image{};
  Vec2 proprio{0.0f, 0.0f};

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct EnvConfig {
  float step_size = 0.05f;
  float success_radius = 0.05f;
  std::uint32_t max_steps = 60;
};

struct StepResult {
  WorldState state;
  Observation obs;
  float reward = 0.0f;
  bool done = false;       // success only
  bool truncated = false;  // time limit, stored as done=false
};

struct ResetResult {
  WorldState state;
  Observation obs;
};

Illumination default_source_light();
Illumination default_deploy_light();
// Relighting conditions K1..K4 (index 0..3).
std::array<Illumination, 4> default_relight_lights();

// Throws kInvalidArgument when a field is outside its documented range.
void validate_light(const Illumination& light);
void validate_env(const EnvConfig& config);

Image render(const WorldState& state, const Illumination& light);

// Per-field linear interpolation; the diffuse angle follows the shortest arc.
Illumination interpolate_light(const Illumination& src, const Illumination& tgt, double s);

Action expert_action(const WorldState& state, const EnvConfig& config = {});

float distance(const Vec2& a, const Vec2& b);

class LitWorld {
 public:
  LitWorld(EnvConfig config, Illumination light);

  ResetResult reset(std::uint64_t seed) const;
  StepResult step(const WorldState& state, Action action) const;
  Observation observe(const WorldState& state) const;
  bool success(const WorldState& state) const;

  const EnvConfig& config() const noexcept { return config_; }
  const Illumination& light() const noexcept { return light_; }

 private:
  EnvConfig config_;
  Illumination light_;
};

}  // namespace rohil
