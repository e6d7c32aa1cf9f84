#pragma once

#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "nets/nets.hpp"

namespace rohil {

enum class AnchorHead : std::uint8_t { kMse, kKl, kNone };

const char* anchor_head_name(AnchorHead head);
AnchorHead parse_anchor_head(const std::string& text);

// Minibatch in tensor form. Rows with anchor_mask = 1 are the demonstration half B_D.
template <typename T>
struct BatchTensors {
  Tensor<T> obs;          // [n, in]
  Tensor<T> next_obs;     // [n, in]
  Tensor<T> action;       // [n, A]
  Tensor<T> reward;       // [n, 1]
  Tensor<T> not_done;     // [n, 1]
  Tensor<T> anchor_mask;  // [n, 1]
  Tensor<T> noise;        // [n, A] reparameterization noise for a ~ pi(.|s)
  Tensor<T> next_noise;   // [n, A] noise for a' ~ pi(.|s')
  std::size_t anchor_rows = 0;

  std::size_t rows() const { return obs.rows(); }
};

// Frozen-model outputs on the batch observations; only B_D rows are read.
template <typename T>
struct AnchorTargets {
  Tensor<T> feature;  // [n, F]
  Tensor<T> mean;     // [n, A]
  Tensor<T> log_std;  // [n, A]
};

struct LossWeights {
  double gamma = 0.97;
  double eta = 0.05;
  double feat = 0.0;    // lambda_feat * rho(t)
  double anchor = 0.0;  // beta_mse * rho(t)
  AnchorHead head = AnchorHead::kNone;
};

template <typename T>
struct CriticLossGraph {
  Tape<T> tape;
  EncoderNodes encoder;
  CriticNodes critics[2];
  ActorNodes actor;     // read-only, feeds a' in the target
  CriticNodes targets[2];  // read-only
  NodeId feature = -1;  // phi(o) on the batch observations
  NodeId target = -1;   // y, already stop-gradiented
  NodeId bellman = -1;
  NodeId feat = -1;     // -1 when the feature anchor is off
  NodeId total = -1;
};

template <typename T>
struct ActorLossGraph {
  Tape<T> tape;
  EncoderNodes encoder;  // read-only
  ActorNodes actor;
  CriticNodes critics[2];  // read-only
  NodeId sac = -1;
  NodeId anchor = -1;  // -1 when the policy anchor is off
  NodeId total = -1;
};

namespace detail {

template <typename T>
NodeId masked_mean_sq(Tape<T>& tape, NodeId current, const Tensor<T>& reference, const Tensor<T>& mask,
                      std::size_t rows, double weight) {
  NodeId diff = tape.mul(tape.sub(current, tape.constant(reference)), tape.constant(mask));
  return tape.scale(tape.sum(tape.square(diff)), static_cast<T>(weight / static_cast<double>(rows)));
}

}  // namespace detail

// y = r + gamma (1 - d) [min_i Qbar_i(s', a') - eta log pi(a'|s')], a' ~ pi(.|s'), under stop-gradient.
// L_Bellman = mean_B sum_i (Q_i(s,a) - y)^2; L_feat = lambda rho mean_{B_D} ||phi(o) - phi0(o)||^2.
// `fixed_target` replaces y (finite-difference checks hold y constant, as sg() does).
template <typename T>
std::unique_ptr<CriticLossGraph<T>> build_critic_loss(const AgentParams<T>& agent, const BatchTensors<T>& batch,
                                                      const std::type_identity_t<AnchorTargets<T>>* anchor, const LossWeights& w,
                                                      const Tensor<T>* fixed_target = nullptr) {
  auto g = std::make_unique<CriticLossGraph<T>>();
  Tape<T>& tape = g->tape;
  const std::size_t n = batch.rows();
  g->encoder = bind(tape, agent.encoder, Binding::kTrainable);
  for (int i = 0; i < 2; ++i) g->critics[i] = bind(tape, agent.critics[i], Binding::kTrainable);
  g->actor = bind(tape, agent.actor, Binding::kReadOnly);
  for (int i = 0; i < 2; ++i) g->targets[i] = bind(tape, agent.targets[i], Binding::kReadOnly);

  if (fixed_target != nullptr) {
    g->target = tape.constant(*fixed_target);
  } else {
    NodeId next_feature = encoder_forward(tape, g->encoder, tape.constant(batch.next_obs));
    GaussianHeads heads = actor_forward(tape, g->actor, next_feature);
    SquashedSample next = sample_squashed(tape, heads, tape.constant(batch.next_noise));
    NodeId q1 = critic_forward(tape, g->targets[0], next_feature, next.action);
    NodeId q2 = critic_forward(tape, g->targets[1], next_feature, next.action);
    NodeId soft = tape.sub(tape.min(q1, q2), tape.scale(next.log_prob, static_cast<T>(w.eta)));
    NodeId discounted = tape.scale(tape.mul(soft, tape.constant(batch.not_done)), static_cast<T>(w.gamma));
    g->target = tape.stop_gradient(tape.add(tape.constant(batch.reward), discounted));
  }

  NodeId feature = encoder_forward(tape, g->encoder, tape.constant(batch.obs));
  g->feature = feature;
  NodeId action = tape.constant(batch.action);
  NodeId td1 = tape.square(tape.sub(critic_forward(tape, g->critics[0], feature, action), g->target));
  NodeId td2 = tape.square(tape.sub(critic_forward(tape, g->critics[1], feature, action), g->target));
  g->bellman = tape.scale(tape.add(tape.sum(td1), tape.sum(td2)), static_cast<T>(1.0 / static_cast<double>(n)));
  g->total = g->bellman;
  if (w.feat > 0.0 && anchor != nullptr && batch.anchor_rows > 0) {
    g->feat = detail::masked_mean_sq(tape, feature, anchor->feature, batch.anchor_mask, batch.anchor_rows, w.feat);
    g->total = tape.add(g->bellman, g->feat);
  }
  return g;
}

// L_SAC = mean_B [eta log pi(a|s) - min_i Q_i(s,a)], a ~ pi(.|s) reparameterized.
// Policy anchor over B_D: beta rho ||mu - mu0||^2 (MSE head) or beta rho KL(pi0 || pi) (KL head).
// `features` supplies phi(o) precomputed for this batch; the encoder is not trained here either way.
template <typename T>
std::unique_ptr<ActorLossGraph<T>> build_actor_loss(const AgentParams<T>& agent, const BatchTensors<T>& batch,
                                                    const std::type_identity_t<AnchorTargets<T>>* anchor, const LossWeights& w,
                                                    const Tensor<T>* features = nullptr) {
  auto g = std::make_unique<ActorLossGraph<T>>();
  Tape<T>& tape = g->tape;
  const std::size_t n = batch.rows();
  if (features == nullptr) g->encoder = bind(tape, agent.encoder, Binding::kReadOnly);
  g->actor = bind(tape, agent.actor, Binding::kTrainable);
  for (int i = 0; i < 2; ++i) g->critics[i] = bind(tape, agent.critics[i], Binding::kReadOnly);

  NodeId feature = features != nullptr ? tape.constant(*features)
                                       : encoder_forward(tape, g->encoder, tape.constant(batch.obs));
  GaussianHeads heads = actor_forward(tape, g->actor, feature);
  SquashedSample s = sample_squashed(tape, heads, tape.constant(batch.noise));
  NodeId q1 = critic_forward(tape, g->critics[0], feature, s.action);
  NodeId q2 = critic_forward(tape, g->critics[1], feature, s.action);
  NodeId per_row = tape.sub(tape.scale(s.log_prob, static_cast<T>(w.eta)), tape.min(q1, q2));
  g->sac = tape.scale(tape.sum(per_row), static_cast<T>(1.0 / static_cast<double>(n)));
  g->total = g->sac;

  if (w.head != AnchorHead::kNone && w.anchor > 0.0 && anchor != nullptr && batch.anchor_rows > 0) {
    if (w.head == AnchorHead::kMse) {
      g->anchor = detail::masked_mean_sq(tape, heads.mean, anchor->mean, batch.anchor_mask, batch.anchor_rows,
                                         w.anchor);
    } else {
      NodeId kl = kl_diag_gauss(tape, tape.constant(anchor->mean), tape.constant(anchor->log_std), heads.mean,
                                heads.log_std);
      NodeId masked = tape.mul(kl, tape.constant(batch.anchor_mask));
      g->anchor = tape.scale(tape.sum(masked), static_cast<T>(w.anchor / static_cast<double>(batch.anchor_rows)));
    }
    g->total = tape.add(g->sac, g->anchor);
  }
  return g;
}

// Gradients of `output` with respect to each listed leaf.
template <typename T>
std::vector<Tensor<T>> leaf_grads(Tape<T>& tape, NodeId output, const std::vector<NodeId>& leaves) {
  tape.backward(output);
  std::vector<Tensor<T>> out;
  out.reserve(leaves.size());
  for (NodeId id : leaves) out.push_back(tape.grad(id));
  return out;
}

inline std::vector<NodeId> concat_ids(std::initializer_list<std::vector<NodeId>> parts) {
  std::vector<NodeId> ids;
  for (const auto& p : parts) ids.insert(ids.end(), p.begin(), p.end());
  return ids;
}

}  // namespace rohil
