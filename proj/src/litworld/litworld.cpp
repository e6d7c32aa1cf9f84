#include "litworld/litworld.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "numerics/error.hpp"

namespace rohil {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDiskRadius = 0.08;
constexpr double kSpecSigma = 0.12;
// Positions are fp32; the success check absorbs accumulated rounding of the
// fixed step size so that exact-arithmetic boundary cases succeed.
constexpr double kRadiusSlack = 1e-6;

constexpr std::array<double, 3> kAgentColor{0.9, 0.2, 0.2};
constexpr std::array<double, 3> kTargetColor{0.2, 0.9, 0.2};
constexpr std::array<double, 3> kFloorColor{0.5, 0.5, 0.5};

// Bounds are compared in fp32 so a field stored as 0.6f passes an upper bound of 0.6.
void require_range(const char* field, float v, double lo, double hi, bool hi_open = false) {
  const float flo = static_cast<float>(lo);
  const float fhi = static_cast<float>(hi);
  const bool ok = std::isfinite(v) && v >= flo && (hi_open ? v < fhi : v <= fhi);
  if (!ok) {
    fail(ErrorCode::kInvalidArgument, std::string("light.") + field + " = " + std::to_string(v) +
                                          " outside [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                          (hi_open ? ")" : "]"));
  }
}

float wrap_angle(double phi) {
  double w = std::fmod(phi, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  auto f = static_cast<float>(w);
  if (f >= static_cast<float>(kTwoPi) || f < 0.0f) f = 0.0f;
  return f;
}

Illumination make_light(float ambient, float diffuse, double phi, Vec2 center, float strength,
                        std::array<float, 3> gains) {
  Illumination l;
  l.ambient = ambient;
  l.diffuse = diffuse;
  l.phi = wrap_angle(phi);
  l.spec_center = center;
  l.spec_strength = strength;
  l.gains = gains;
  return l;
}

float lerp(float a, float b, double s) {
  return static_cast<float>(static_cast<double>(a) + s * (static_cast<double>(b) - static_cast<double>(a)));
}

}  // namespace

Illumination default_source_light() {
  return make_light(0.6f, 0.3f, std::numbers::pi / 4.0, {0.25f, 0.25f}, 0.2f, {1.0f, 1.0f, 1.0f});
}

Illumination default_deploy_light() {
  return make_light(0.3f, 0.7f, 5.0 * std::numbers::pi / 4.0, {0.7f, 0.6f}, 0.5f, {1.4f, 0.9f, 0.6f});
}

std::array<Illumination, 4> default_relight_lights() {
  const double pi = std::numbers::pi;
  return {
      make_light(0.7f, 0.2f, pi / 2.0, {0.5f, 0.8f}, 0.1f, {1.2f, 1.2f, 0.8f}),
      make_light(0.25f, 0.6f, pi, {0.2f, 0.7f}, 0.4f, {0.7f, 0.8f, 1.5f}),
      make_light(0.5f, 0.5f, 3.0 * pi / 2.0, {0.8f, 0.2f}, 0.3f, {1.5f, 0.7f, 0.7f}),
      make_light(0.35f, 0.4f, 0.0, {0.5f, 0.5f}, 0.6f, {0.9f, 1.4f, 0.9f}),
  };
}

void validate_light(const Illumination& light) {
  require_range("ambient", light.ambient, 0.2, 0.8);
  require_range("diffuse", light.diffuse, 0.0, 0.8);
  require_range("phi", light.phi, 0.0, kTwoPi, true);
  require_range("spec_x", light.spec_center[0], 0.0, 1.0);
  require_range("spec_y", light.spec_center[1], 0.0, 1.0);
  require_range("spec_strength", light.spec_strength, 0.0, 0.6);
  require_range("gain_r", light.gains[0], 0.4, 1.6);
  require_range("gain_g", light.gains[1], 0.4, 1.6);
  require_range("gain_b", light.gains[2], 0.4, 1.6);
}

void validate_env(const EnvConfig& config) {
  if (!(config.step_size > 0.0f) || !(config.success_radius > 0.0f) || config.max_steps == 0) {
    fail(ErrorCode::kInvalidArgument, "env: step_size, success_radius and max_steps must be positive");
  }
}

Image render(const WorldState& state, const Illumination& light) {
  Image img{};
  const double cos_phi = std::cos(static_cast<double>(light.phi));
  const double sin_phi = std::sin(static_cast<double>(light.phi));
  const double r2 = kDiskRadius * kDiskRadius;
  const double two_sigma2 = 2.0 * kSpecSigma * kSpecSigma;
  for (std::size_t row = 0; row < kImageH; ++row) {
    const double py = (static_cast<double>(row) + 0.5) / static_cast<double>(kImageH);
    for (std::size_t col = 0; col < kImageW; ++col) {
      const double px = (static_cast<double>(col) + 0.5) / static_cast<double>(kImageW);
      auto sq_dist = [&](const Vec2& c) {
        const double dx = px - c[0];
        const double dy = py - c[1];
        return dx * dx + dy * dy;
      };
      const std::array<double, 3>* base = &kFloorColor;
      if (sq_dist(state.agent) <= r2) {
        base = &kAgentColor;
      } else if (sq_dist(state.target) <= r2) {
        base = &kTargetColor;
      }
      const double lum =
          light.ambient + light.diffuse * ((cos_phi * (px - 0.5) + sin_phi * (py - 0.5)) / 0.7071 + 1.0) / 2.0;
      const double spec = light.spec_strength * std::exp(-sq_dist(light.spec_center) / two_sigma2);
      for (std::size_t ch = 0; ch < kChannels; ++ch) {
        const double v = std::clamp(light.gains[ch] * ((*base)[ch] * lum + spec), 0.0, 1.0);
        img[(row * kImageW + col) * kChannels + ch] = static_cast<std::uint8_t>(std::lround(255.0 * v));
      }
    }
  }
  return img;
}

Illumination interpolate_light(const Illumination& src, const Illumination& tgt, double s) {
  if (!(s >= 0.0 && s <= 1.0)) fail(ErrorCode::kInvalidArgument, "interpolate_light: s outside [0,1]");
  if (s == 0.0) return src;
  if (s == 1.0) return tgt;
  Illumination out;
  out.ambient = lerp(src.ambient, tgt.ambient, s);
  out.diffuse = lerp(src.diffuse, tgt.diffuse, s);
  // Shortest signed arc in [-pi, pi); an exact half-turn rotates negatively.
  double delta = std::fmod(static_cast<double>(tgt.phi) - src.phi + std::numbers::pi, kTwoPi);
  if (delta < 0.0) delta += kTwoPi;
  delta -= std::numbers::pi;
  out.phi = wrap_angle(src.phi + s * delta);
  out.spec_center = {lerp(src.spec_center[0], tgt.spec_center[0], s),
                     lerp(src.spec_center[1], tgt.spec_center[1], s)};
  out.spec_strength = lerp(src.spec_strength, tgt.spec_strength, s);
  for (std::size_t c = 0; c < 3; ++c) out.gains[c] = lerp(src.gains[c], tgt.gains[c], s);
  return out;
}

float distance(const Vec2& a, const Vec2& b) {
  const double dx = static_cast<double>(a[0]) - b[0];
  const double dy = static_cast<double>(a[1]) - b[1];
  return static_cast<float>(std::sqrt(dx * dx + dy * dy));
}

Action expert_action(const WorldState& state, const EnvConfig& config) {
  Action a{};
  for (std::size_t d = 0; d < kActionDim; ++d) {
    const float v = (state.target[d] - state.agent[d]) / config.step_size;
    a[d] = std::clamp(v, -1.0f, 1.0f);
  }
  return a;
}

LitWorld::LitWorld(EnvConfig config, Illumination light) : config_(config), light_(light) {
  validate_env(config_);
  validate_light(light_);
}

Observation LitWorld::observe(const WorldState& state) const {
  return Observation{render(state, light_), state.agent};
}

bool LitWorld::success(const WorldState& state) const {
  return std::hypot(static_cast<double>(state.agent[0]) - state.target[0],
                    static_cast<double>(state.agent[1]) - state.target[1]) <=
         static_cast<double>(config_.success_radius) + kRadiusSlack;
}

ResetResult LitWorld::reset(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> place(0.1, 0.9);
  const double min_sep = 3.0 * config_.success_radius;
  WorldState s;
  do {
    s.agent = {static_cast<float>(place(rng)), static_cast<float>(place(rng))};
    s.target = {static_cast<float>(place(rng)), static_cast<float>(place(rng))};
  } while (distance(s.agent, s.target) < min_sep);
  s.step = 0;
  return {s, observe(s)};
}

StepResult LitWorld::step(const WorldState& state, Action action) const {
  StepResult r;
  r.state = state;
  for (std::size_t d = 0; d < kActionDim; ++d) {
    const float a = std::clamp(std::isfinite(action[d]) ? action[d] : 0.0f, -1.0f, 1.0f);
    r.state.agent[d] = std::clamp(state.agent[d] + config_.step_size * a, 0.0f, 1.0f);
  }
  r.state.step = state.step + 1;
  r.obs = observe(r.state);
  r.done = success(r.state);
  r.reward = r.done ? 1.0f : 0.0f;
  r.truncated = !r.done && r.state.step >= config_.max_steps;
  return r;
}

}  // namespace rohil
