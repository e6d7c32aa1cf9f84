#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "litworld/litworld.hpp"
#include "numerics/adam.hpp"
#include "numerics/tape.hpp"

namespace rohil {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kSquashEps = 1e-6;

struct NetDims {
  std::size_t input = kImageBytes + kProprioDim;
  std::size_t encoder_hidden = 128;
  std::size_t feature = 64;
  std::size_t actor_hidden = 64;
  std::size_t critic_hidden = 64;
  std::size_t action = kActionDim;

  friend bool operator==(const NetDims&, const NetDims&) = default;
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]
};

template <typename T>
struct EncoderParams {
  Linear<T> hidden;
  Linear<T> out;
};

template <typename T>
struct ActorParams {
  Linear<T> hidden;
  Linear<T> mean;
  Linear<T> log_std;
};

template <typename T>
struct CriticParams {
  Linear<T> hidden;
  Linear<T> out;
};

template <typename T>
struct AgentParams {
  NetDims dims;
  EncoderParams<T> encoder;
  ActorParams<T> actor;
  std::array<CriticParams<T>, 2> critics;
  std::array<CriticParams<T>, 2> targets;
};

// ---- parameter enumeration ----------------------------------------------------

template <typename T, typename F>
void visit_linear(const std::string& prefix, Linear<T>& l, F&& f) {
  f(prefix + ".weight", l.weight);
  f(prefix + ".bias", l.bias);
}

template <typename T, typename F>
void visit_encoder(EncoderParams<T>& e, F&& f) {
  visit_linear("encoder.hidden", e.hidden, f);
  visit_linear("encoder.out", e.out, f);
}

template <typename T, typename F>
void visit_actor(ActorParams<T>& a, F&& f) {
  visit_linear("actor.hidden", a.hidden, f);
  visit_linear("actor.mean", a.mean, f);
  visit_linear("actor.log_std", a.log_std, f);
}

template <typename T, typename F>
void visit_critic(const std::string& prefix, CriticParams<T>& c, F&& f) {
  visit_linear(prefix + ".hidden", c.hidden, f);
  visit_linear(prefix + ".out", c.out, f);
}

// Every array in checkpoint order: encoder, actor, critics, targets.
template <typename T, typename F>
void visit_params(AgentParams<T>& agent, F&& f) {
  visit_encoder(agent.encoder, f);
  visit_actor(agent.actor, f);
  visit_critic("critic1", agent.critics[0], f);
  visit_critic("critic2", agent.critics[1], f);
  visit_critic("target1", agent.targets[0], f);
  visit_critic("target2", agent.targets[1], f);
}

template <typename T, typename F>
void visit_params(const AgentParams<T>& agent, F&& f) {
  visit_params(const_cast<AgentParams<T>&>(agent),
               [&f](const std::string& name, Tensor<T>& t) { f(name, static_cast<const Tensor<T>&>(t)); });
}

// Parameters updated by the critic optimizer: shared encoder plus both online critics.
template <typename T>
std::vector<ParamRef<T>> critic_group(AgentParams<T>& agent) {
  std::vector<ParamRef<T>> refs;
  auto push = [&refs](const std::string& name, Tensor<T>& t) { refs.push_back({name, &t}); };
  visit_encoder(agent.encoder, push);
  visit_critic("critic1", agent.critics[0], push);
  visit_critic("critic2", agent.critics[1], push);
  return refs;
}

template <typename T>
std::vector<ParamRef<T>> actor_group(AgentParams<T>& agent) {
  std::vector<ParamRef<T>> refs;
  visit_actor(agent.actor, [&refs](const std::string& name, Tensor<T>& t) { refs.push_back({name, &t}); });
  return refs;
}

template <typename U, typename T>
AgentParams<U> cast_agent(const AgentParams<T>& src) {
  AgentParams<U> dst;
  dst.dims = src.dims;
  std::vector<const Tensor<T>*> flat;
  visit_params(src, [&flat](const std::string&, const Tensor<T>& t) { flat.push_back(&t); });
  std::size_t i = 0;
  visit_params(dst, [&](const std::string&, Tensor<U>& t) { t = flat[i++]->template cast<U>(); });
  return dst;
}

// ---- initialization -----------------------------------------------------------

template <typename T>
Linear<T> init_linear(std::size_t in, std::size_t out, std::mt19937_64& rng, double scale = 1.0) {
  const double bound = scale / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Linear<T> l{Tensor<T>(Shape{in, out}), Tensor<T>(Shape{out}, T(0))};
  for (auto& w : l.weight.values()) w = static_cast<T>(u(rng));
  return l;
}

template <typename T>
AgentParams<T> init_agent(const NetDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AgentParams<T> a;
  a.dims = dims;
  a.encoder.hidden = init_linear<T>(dims.input, dims.encoder_hidden, rng);
  a.encoder.out = init_linear<T>(dims.encoder_hidden, dims.feature, rng);
  a.actor.hidden = init_linear<T>(dims.feature, dims.actor_hidden, rng);
  a.actor.mean = init_linear<T>(dims.actor_hidden, dims.action, rng, 0.1);
  a.actor.log_std = init_linear<T>(dims.actor_hidden, dims.action, rng, 0.1);
  for (auto& c : a.critics) {
    c.hidden = init_linear<T>(dims.feature + dims.action, dims.critic_hidden, rng);
    c.out = init_linear<T>(dims.critic_hidden, 1, rng, 0.1);
  }
  a.targets = a.critics;
  return a;
}

// ---- tape binding -------------------------------------------------------------

// kTrainable: leaf that accumulates a gradient. kFrozen: constant. kReadOnly: a
// gradient-tracking leaf consumed through stop_gradient, so its adjoint is zero
// by construction and can be asserted.
enum class Binding { kTrainable, kFrozen, kReadOnly };

struct LinearNodes {
  NodeId weight = -1;
  NodeId bias = -1;
  NodeId weight_leaf = -1;
  NodeId bias_leaf = -1;
};

template <typename T>
LinearNodes bind(Tape<T>& tape, const Linear<T>& l, Binding binding) {
  LinearNodes n;
  const bool track = binding != Binding::kFrozen;
  n.weight_leaf = tape.leaf(l.weight, track);
  n.bias_leaf = tape.leaf(l.bias, track);
  if (binding == Binding::kReadOnly) {
    n.weight = tape.stop_gradient(n.weight_leaf);
    n.bias = tape.stop_gradient(n.bias_leaf);
  } else {
    n.weight = n.weight_leaf;
    n.bias = n.bias_leaf;
  }
  return n;
}

struct EncoderNodes {
  LinearNodes hidden, out;
};
struct ActorNodes {
  LinearNodes hidden, mean, log_std;
};
struct CriticNodes {
  LinearNodes hidden, out;
};

template <typename T>
EncoderNodes bind(Tape<T>& tape, const EncoderParams<T>& p, Binding b) {
  return {bind(tape, p.hidden, b), bind(tape, p.out, b)};
}
template <typename T>
ActorNodes bind(Tape<T>& tape, const ActorParams<T>& p, Binding b) {
  return {bind(tape, p.hidden, b), bind(tape, p.mean, b), bind(tape, p.log_std, b)};
}
template <typename T>
CriticNodes bind(Tape<T>& tape, const CriticParams<T>& p, Binding b) {
  return {bind(tape, p.hidden, b), bind(tape, p.out, b)};
}

inline void append_leaf_ids(const LinearNodes& n, std::vector<NodeId>& ids) {
  ids.push_back(n.weight_leaf);
  ids.push_back(n.bias_leaf);
}
inline std::vector<NodeId> leaf_ids(const EncoderNodes& n) {
  std::vector<NodeId> ids;
  append_leaf_ids(n.hidden, ids);
  append_leaf_ids(n.out, ids);
  return ids;
}
inline std::vector<NodeId> leaf_ids(const ActorNodes& n) {
  std::vector<NodeId> ids;
  append_leaf_ids(n.hidden, ids);
  append_leaf_ids(n.mean, ids);
  append_leaf_ids(n.log_std, ids);
  return ids;
}
inline std::vector<NodeId> leaf_ids(const CriticNodes& n) {
  std::vector<NodeId> ids;
  append_leaf_ids(n.hidden, ids);
  append_leaf_ids(n.out, ids);
  return ids;
}

// ---- forward heads ------------------------------------------------------------

// input [n, dims.input] -> feature [n, F] = tanh(W2 relu(W1 x + b1) + b2)
template <typename T>
NodeId encoder_forward(Tape<T>& tape, const EncoderNodes& enc, NodeId input) {
  NodeId h = tape.relu(tape.affine(input, enc.hidden.weight, enc.hidden.bias));
  return tape.tanh(tape.affine(h, enc.out.weight, enc.out.bias));
}

struct GaussianHeads {
  NodeId mean = -1;
  NodeId log_std = -1;
};

// log_std is squashed smoothly into [kLogStdMin, kLogStdMax].
template <typename T>
GaussianHeads actor_forward(Tape<T>& tape, const ActorNodes& actor, NodeId feature) {
  NodeId h = tape.relu(tape.affine(feature, actor.hidden.weight, actor.hidden.bias));
  NodeId mean = tape.affine(h, actor.mean.weight, actor.mean.bias);
  NodeId raw = tape.tanh(tape.affine(h, actor.log_std.weight, actor.log_std.bias));
  const T half_span = static_cast<T>(0.5 * (kLogStdMax - kLogStdMin));
  NodeId offset = tape.constant(Tensor<T>::scalar(static_cast<T>(kLogStdMin) + half_span));
  NodeId log_std = tape.add(tape.scale(raw, half_span), offset);
  return {mean, log_std};
}

// (feature [n,F] ++ action [n,A]) -> q [n,1]
template <typename T>
NodeId critic_forward(Tape<T>& tape, const CriticNodes& critic, NodeId feature, NodeId action) {
  NodeId x = tape.concat(feature, action);
  NodeId h = tape.relu(tape.affine(x, critic.hidden.weight, critic.hidden.bias));
  return tape.affine(h, critic.out.weight, critic.out.bias);
}

struct SquashedSample {
  NodeId action = -1;    // [n,A], inside (-1,1)
  NodeId log_prob = -1;  // [n,1]
};

// a = tanh(mu + sigma * noise);
// log pi = sum_d [-0.5 log 2pi - log sigma_d - 0.5 noise_d^2 - log(1 - a_d^2 + eps)]
template <typename T>
SquashedSample sample_squashed(Tape<T>& tape, GaussianHeads heads, NodeId noise) {
  NodeId sigma = tape.exp(heads.log_std);
  NodeId pre = tape.add(heads.mean, tape.mul(sigma, noise));
  NodeId action = tape.tanh(pre);
  NodeId squash = tape.log(tape.add(tape.scale(tape.square(action), T(-1)),
                                    tape.constant(Tensor<T>::scalar(static_cast<T>(1.0 + kSquashEps)))));
  NodeId gauss = tape.add(tape.add(heads.log_std, tape.scale(tape.square(noise), T(0.5))),
                          tape.constant(Tensor<T>::scalar(static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi)))));
  NodeId per_dim = tape.scale(tape.add(gauss, squash), T(-1));
  return {action, tape.sum_rows(per_dim)};
}

// Per-row D_KL(N(mean0, exp(log_std0)) || N(mean, exp(log_std))) on pre-tanh gaussians, [n,1].
// Written as (log_std - log_std0) + 0.5 exp(2 (log_std0 - log_std)) + 0.5 (mean0 - mean)^2 exp(-2 log_std) - 0.5
// so identical distributions give exactly zero.
template <typename T>
NodeId kl_diag_gauss(Tape<T>& tape, NodeId mean0, NodeId log_std0, NodeId mean, NodeId log_std) {
  NodeId log_ratio = tape.sub(log_std, log_std0);
  NodeId var_ratio = tape.exp(tape.scale(log_ratio, T(-2)));
  NodeId inv_var = tape.exp(tape.scale(log_std, T(-2)));
  NodeId mean_term = tape.mul(tape.square(tape.sub(mean0, mean)), inv_var);
  NodeId per_dim = tape.add(tape.add(log_ratio, tape.scale(tape.add(var_ratio, mean_term), T(0.5))),
                            tape.constant(Tensor<T>::scalar(T(-0.5))));
  return tape.sum_rows(per_dim);
}

// Plain closed form, used outside the tape.
inline double kl_diag_gauss(std::span<const double> mean0, std::span<const double> std0,
                            std::span<const double> mean, std::span<const double> std) {
  if (mean0.size() != mean.size() || std0.size() != std.size() || mean.size() != std.size()) {
    fail(ErrorCode::kShapeMismatch, "kl_diag_gauss: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t d = 0; d < mean.size(); ++d) {
    if (!(std0[d] > 0.0) || !(std[d] > 0.0)) fail(ErrorCode::kInvalidArgument, "kl_diag_gauss: nonpositive sigma");
    const double dm = mean0[d] - mean[d];
    kl += std::log(std[d] / std0[d]) + (std0[d] * std0[d] + dm * dm) / (2.0 * std[d] * std[d]) - 0.5;
  }
  return kl;
}

// ---- observation batches ------------------------------------------------------

// Pixels scaled to [0,1] followed by proprioception.
template <typename T>
void write_observation_row(const Observation& obs, T* row) {
  for (std::size_t i = 0; i < kImageBytes; ++i) row[i] = static_cast<T>(obs.image[i]) / T(255);
  for (std::size_t i = 0; i < kProprioDim; ++i) row[kImageBytes + i] = static_cast<T>(obs.proprio[i]);
}

template <typename T>
Tensor<T> observation_batch(std::span<const Observation* const> obs) {
  Tensor<T> x(Shape{obs.size(), kImageBytes + kProprioDim});
  for (std::size_t r = 0; r < obs.size(); ++r) write_observation_row(*obs[r], x.data() + r * x.cols());
  return x;
}

// ---- whole-network conveniences -------------------------------------------------

template <typename T>
Tensor<T> encode(const AgentParams<T>& agent, const Tensor<T>& inputs) {
  if (inputs.rank() != 2 || inputs.cols() != agent.dims.input) {
    fail(ErrorCode::kShapeMismatch, "encode: input extents " + shape_str(inputs.shape()) + ", expected [n," +
                                        std::to_string(agent.dims.input) + "]");
  }
  Tape<T> tape;
  EncoderNodes enc = bind(tape, agent.encoder, Binding::kFrozen);
  return tape.value(encoder_forward(tape, enc, tape.constant(inputs)));
}

template <typename T>
Tensor<T> encode(const AgentParams<T>& agent, const Observation& obs) {
  if (agent.dims.input != kImageBytes + kProprioDim) {
    fail(ErrorCode::kShapeMismatch, "encode: network expects " + std::to_string(agent.dims.input) +
                                        " inputs, observation has " + std::to_string(kImageBytes + kProprioDim));
  }
  const Observation* p = &obs;
  return encode(agent, observation_batch<T>(std::span<const Observation* const>(&p, 1)));
}

template <typename T>
struct PolicyOutput {
  Tensor<T> mean;
  Tensor<T> log_std;
};

template <typename T>
PolicyOutput<T> policy_from_features(const AgentParams<T>& agent, const Tensor<T>& features) {
  Tape<T> tape;
  ActorNodes actor = bind(tape, agent.actor, Binding::kFrozen);
  GaussianHeads h = actor_forward(tape, actor, tape.constant(features));
  return {tape.value(h.mean), tape.value(h.log_std)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> q_values(const AgentParams<T>& agent, const Tensor<T>& features,
                                         const Tensor<T>& actions) {
  Tape<T> tape;
  NodeId f = tape.constant(features);
  NodeId a = tape.constant(actions);
  CriticNodes c1 = bind(tape, agent.critics[0], Binding::kFrozen);
  CriticNodes c2 = bind(tape, agent.critics[1], Binding::kFrozen);
  return {tape.value(critic_forward(tape, c1, f, a)), tape.value(critic_forward(tape, c2, f, a))};
}

// target <- tau * online + (1 - tau) * target
template <typename T>
void polyak_update(CriticParams<T>& target, const CriticParams<T>& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) fail(ErrorCode::kInvalidArgument, "polyak_update: tau outside [0,1]");
  auto blend = [tau](Tensor<T>& dst, const Tensor<T>& src) {
    if (dst.shape() != src.shape()) fail(ErrorCode::kShapeMismatch, "polyak_update: shape mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<T>(tau * src[i] + (1.0 - tau) * dst[i]);
    }
  };
  blend(target.hidden.weight, online.hidden.weight);
  blend(target.hidden.bias, online.hidden.bias);
  blend(target.out.weight, online.out.weight);
  blend(target.out.bias, online.out.bias);
}

template <typename T>
void polyak_update(AgentParams<T>& agent, double tau) {
  polyak_update(agent.targets[0], agent.critics[0], tau);
  polyak_update(agent.targets[1], agent.critics[1], tau);
}

// FNV-1a over parameter names, shapes and raw element bytes.
template <typename T>
std::uint64_t checksum(const AgentParams<T>& agent) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  visit_params(agent, [&](const std::string& name, const Tensor<T>& t) {
    mix(name.data(), name.size());
    for (std::size_t e : t.shape()) mix(&e, sizeof e);
    mix(t.data(), t.size() * sizeof(T));
  });
  return h;
}

using Agent = AgentParams<float>;

}  // namespace rohil
