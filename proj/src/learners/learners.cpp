#include "learners/learners.hpp"

#include <algorithm>
#include <cmath>

#include "numerics/runtime.hpp"
#include "numerics/seeding.hpp"

namespace rohil {

const char* anchor_head_name(AnchorHead head) {
  switch (head) {
    case AnchorHead::kMse: return "mse";
    case AnchorHead::kKl: return "kl";
    case AnchorHead::kNone: return "none";
  }
  return "?";
}

AnchorHead parse_anchor_head(const std::string& text) {
  if (text == "mse") return AnchorHead::kMse;
  if (text == "kl") return AnchorHead::kKl;
  if (text == "none") return AnchorHead::kNone;
  fail(ErrorCode::kInvalidArgument, "anchor head must be mse, kl or none; got '" + text + "'");
}

void validate(const LearnerConfig& cfg) {
  auto bad = [](const std::string& what) { fail(ErrorCode::kInvalidArgument, "learner: " + what); };
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) bad("gamma must lie in (0,1)");
  if (!(cfg.eta > 0.0)) bad("eta must be positive");
  if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) bad("tau must lie in [0,1]");
  if (!(cfg.lr >= 0.0)) bad("lr must be nonnegative");
  if (!(cfg.lambda_feat >= 0.0) || !(cfg.beta_mse >= 0.0)) bad("anchor weights must be nonnegative");
  if (!(cfg.rho_end >= 0.0 && cfg.rho_end <= 1.0)) bad("rho_end must lie in [0,1]");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) bad("alpha must lie in [0,1]");
  if (cfg.batch < 2 || cfg.batch % 2 != 0) bad("batch must be even and >= 2");
}

double rho(std::uint64_t t, std::uint64_t horizon, double rho_end) {
  if (t > horizon) {
    fail(ErrorCode::kInvalidArgument, "rho: t=" + std::to_string(t) + " exceeds T=" + std::to_string(horizon));
  }
  if (horizon == 0 || t == 0) return 1.0;
  // Written from the far end so rho(T) is rho_end exactly.
  return rho_end + (1.0 - rho_end) * static_cast<double>(horizon - t) / static_cast<double>(horizon);
}

// ---- frozen anchor ------------------------------------------------------------------

FrozenAnchor::FrozenAnchor(const Agent& agent) : params_(agent), checksum_(rohil::checksum(agent)) {}

void FrozenAnchor::verify() const {
  if (rohil::checksum(params_) != checksum_) {
    fail(ErrorCode::kInvalidArgument, "frozen anchor parameters were modified");
  }
}

void FrozenAnchor::store(const std::vector<const Transition*>& rows, const Tensor<float>& obs) {
  const std::size_t feat_dim = params_.dims.feature;
  const Tensor<float> features = encode(params_, obs);
  const PolicyOutput<float> pol = policy_from_features(params_, features);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] == nullptr || cache_.contains(rows[r])) continue;
    Row row;
    row.feature.assign(features.data() + r * feat_dim, features.data() + (r + 1) * feat_dim);
    for (std::size_t d = 0; d < kActionDim; ++d) {
      row.mean[d] = pol.mean.at(r, d);
      row.log_std[d] = pol.log_std.at(r, d);
    }
    cache_.emplace(rows[r], std::move(row));
  }
}

// BLAS rounding of a row depends on the row count of the product, so theta_0 is
// always evaluated on blocks of exactly one batch; at theta = theta_0 the cached
// outputs are then bit-identical to the online pass.
void FrozenAnchor::prefill(const PoolSet& pools, std::size_t batch_size) {
  std::vector<const Transition*> all;
  for (Pool p : {Pool::kSourceDemo, Pool::kRelitDemo}) {
    for (std::size_t i = 0; i < pools.size(p); ++i) all.push_back(&pools.at(p, i));
  }
  for (std::size_t begin = 0; begin < all.size(); begin += batch_size) {
    std::vector<const Transition*> rows(batch_size, nullptr);
    std::vector<const Observation*> obs(batch_size, &all[begin]->obs);
    for (std::size_t r = 0; r < batch_size && begin + r < all.size(); ++r) {
      rows[r] = all[begin + r];
      obs[r] = &rows[r]->obs;
    }
    store(rows, observation_batch<float>(obs));
  }
}

AnchorTargets<float> FrozenAnchor::targets(const Batch& batch, const Tensor<float>& obs) {
  const std::size_t n = batch.size();
  const std::size_t feat_dim = params_.dims.feature;
  bool missing = false;
  for (std::size_t r = batch.anchor_begin; r < n && !missing; ++r) missing = !cache_.contains(batch.items[r]);
  if (missing) {
    std::vector<const Transition*> rows(batch.items.begin(), batch.items.end());
    std::fill(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(batch.anchor_begin), nullptr);
    store(rows, obs);
  }
  AnchorTargets<float> out{Tensor<float>(Shape{n, feat_dim}), Tensor<float>(Shape{n, kActionDim}),
                           Tensor<float>(Shape{n, kActionDim})};
  for (std::size_t r = batch.anchor_begin; r < n; ++r) {
    const Row& row = cache_.at(batch.items[r]);
    std::copy(row.feature.begin(), row.feature.end(), out.feature.data() + r * feat_dim);
    for (std::size_t d = 0; d < kActionDim; ++d) {
      out.mean.at(r, d) = row.mean[d];
      out.log_std.at(r, d) = row.log_std[d];
    }
  }
  return out;
}

// ---- learner --------------------------------------------------------------------

BatchTensors<float> make_batch_tensors(const Batch& batch, std::mt19937_64& noise_rng) {
  const std::size_t n = batch.size();
  const std::size_t in = kImageBytes + kProprioDim;
  BatchTensors<float> b;
  b.obs = Tensor<float>(Shape{n, in});
  b.next_obs = Tensor<float>(Shape{n, in});
  b.action = Tensor<float>(Shape{n, kActionDim});
  b.reward = Tensor<float>(Shape{n, 1});
  b.not_done = Tensor<float>(Shape{n, 1});
  b.anchor_mask = Tensor<float>(Shape{n, 1});
  b.noise = Tensor<float>(Shape{n, kActionDim});
  b.next_noise = Tensor<float>(Shape{n, kActionDim});
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (std::size_t r = 0; r < n; ++r) {
    const Transition& t = *batch.items[r];
    write_observation_row(t.obs, b.obs.data() + r * in);
    write_observation_row(t.next_obs, b.next_obs.data() + r * in);
    for (std::size_t d = 0; d < kActionDim; ++d) b.action.at(r, d) = t.action[d];
    b.reward[r] = t.reward;
    b.not_done[r] = t.done ? 0.0f : 1.0f;
    b.anchor_mask[r] = r >= batch.anchor_begin ? 1.0f : 0.0f;
  }
  for (float& v : b.next_noise.values()) v = normal(noise_rng);
  for (float& v : b.noise.values()) v = normal(noise_rng);
  b.anchor_rows = n - batch.anchor_begin;
  return b;
}

Learner::Learner(Agent agent, const LearnerConfig& cfg, std::uint64_t noise_seed)
    : agent_(std::move(agent)), cfg_(cfg), noise_rng_(noise_seed) {
  configure_runtime();
  validate(cfg_);
  AdamOptions opts;
  opts.lr = cfg_.lr;
  auto critic_refs = critic_group(agent_);
  auto actor_refs = actor_group(agent_);
  critic_opt_ = make_adam_state<float>(critic_refs, opts);
  actor_opt_ = make_adam_state<float>(actor_refs, opts);
}

StepStats Learner::step(const PoolSet& pools, ReplaySampler& sampler, SamplerMode mode, FrozenAnchor* anchor,
                        std::uint64_t t) {
  const Batch batch = mode == SamplerMode::kIrr ? sampler.irr_sample(pools, cfg_.batch, cfg_.alpha)
                                                : sampler.rlpd_sample(pools, cfg_.batch);
  return step_on(batch, anchor, t);
}

StepStats Learner::step_on(const Batch& batch, FrozenAnchor* anchor, std::uint64_t t) {
  const BatchTensors<float> tensors = make_batch_tensors(batch, noise_rng_);
  LossWeights w;
  w.gamma = cfg_.gamma;
  w.eta = cfg_.eta;
  std::optional<AnchorTargets<float>> targets;
  if (anchor != nullptr) {
    const double r = rho(std::min(t, cfg_.horizon), cfg_.horizon, cfg_.rho_end);
    w.feat = cfg_.lambda_feat * r;
    w.anchor = cfg_.beta_mse * r;
    w.head = cfg_.anchor;
    if (w.feat > 0.0 || (w.head != AnchorHead::kNone && w.anchor > 0.0)) targets = anchor->targets(batch, tensors.obs);
  }
  const AnchorTargets<float>* anchor_targets = targets ? &*targets : nullptr;
  StepStats stats;
  // phi(o) from the critic pass, taken before the encoder update, feeds the actor.
  Tensor<float> features;

  {
    auto g = build_critic_loss(agent_, tensors, anchor_targets, w);
    const std::vector<NodeId> leaves =
        concat_ids({leaf_ids(g->encoder), leaf_ids(g->critics[0]), leaf_ids(g->critics[1])});
    const std::vector<Tensor<float>> grads = leaf_grads(g->tape, g->total, leaves);
    stats.bellman = g->tape.value(g->bellman).item();
    if (g->feat >= 0) stats.feat = g->tape.value(g->feat).item();
    features = g->tape.value(g->feature);
    auto refs = critic_group(agent_);
    adam_step<float>(refs, grads, critic_opt_);
  }
  {
    auto g = build_actor_loss(agent_, tensors, anchor_targets, w, &features);
    const std::vector<Tensor<float>> grads = leaf_grads(g->tape, g->total, leaf_ids(g->actor));
    stats.sac = g->tape.value(g->sac).item();
    if (g->anchor >= 0) stats.anchor = g->tape.value(g->anchor).item();
    auto refs = actor_group(agent_);
    adam_step<float>(refs, grads, actor_opt_);
  }
  polyak_update(agent_, cfg_.tau);
  return stats;
}

Action sample_action(const Agent& agent, const Observation& obs, std::mt19937_64& rng) {
  const Tensor<float> feature = encode(agent, obs);
  const PolicyOutput<float> pol = policy_from_features(agent, feature);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Action a{};
  for (std::size_t d = 0; d < kActionDim; ++d) {
    a[d] = std::tanh(pol.mean[d] + std::exp(pol.log_std[d]) * normal(rng));
  }
  return a;
}

// ---- source training ----------------------------------------------------------------

SourceResult train_source(const WorldConfig& world, const LearnerConfig& learner_cfg, const SourceConfig& source,
                          std::uint64_t seed, const ProgressFn& progress) {
  validate(learner_cfg);
  const LitWorld env(world.env, world.source);
  SourceResult out;
  out.rl.lights = {world.source};
  out.demos.lights = {world.source};

  PoolSet pools;
  std::uint32_t episode_id = 0;
  for (std::uint32_t i = 0; i < source.demos; ++i) {
    EpisodeRecord rec = record_episode(env, nullptr, derive_seed(seed, {kStreamDemo, i}), episode_id++, source.rule);
    for (const Transition& t : rec.transitions) {
      out.demos.records.push_back(t);
      pools.ingest(t, Stream::kDemo);
    }
  }

  Agent initial = init_agent<float>(NetDims{}, derive_seed(seed, {kStreamInit}));
  out.agent = initial;
  out.best_success = -1.0;
  if (source.budget == 0) {
    out.best_success = 0.0;
    return out;
  }

  Learner learner(std::move(initial), learner_cfg, derive_seed(seed, {kStreamLearnerNoise}));
  ReplaySampler sampler(derive_seed(seed, {kStreamReplay}));
  std::mt19937_64 action_rng(derive_seed(seed, {kStreamActionNoise}));
  EpisodeRecorder recorder(env, source.rule);
  std::uint64_t train_episode = 0;
  recorder.begin(derive_seed(seed, {kStreamTrainEpisode, train_episode++}), episode_id++);

  for (std::uint64_t step = 1; step <= source.budget; ++step) {
    const Action a = recorder.expert_in_control() ? Action{}
                                                  : sample_action(learner.agent(), recorder.observation(), action_rng);
    const Transition& t = recorder.step(a);
    out.rl.records.push_back(t);
    pools.ingest(t, Stream::kRl);
    if (recorder.finished()) recorder.begin(derive_seed(seed, {kStreamTrainEpisode, train_episode++}), episode_id++);

    learner.step(pools, sampler, SamplerMode::kRlpd, nullptr, 0);

    if (source.eval_every > 0 && step % source.eval_every == 0) {
      EvalOptions opts;
      opts.shift = 0.0;
      opts.episodes = source.eval_episodes;
      opts.seed = derive_seed(seed, {kStreamSelectEval});
      const EvalReport r = evaluate(learner.agent(), world.env, world.source, world.deploy, opts);
      out.curve.emplace_back(step, r.success_rate);
      if (r.success_rate > out.best_success) {
        out.best_success = r.success_rate;
        out.best_step = step;
        out.agent = learner.agent();
      }
      if (progress) {
        progress("source step " + std::to_string(step) + " success " + std::to_string(r.success_rate) +
                 " (best " + std::to_string(out.best_success) + " @" + std::to_string(out.best_step) + ")");
      }
    }
  }
  if (out.best_success < 0.0) {
    // No periodic evaluation fired; keep the final agent.
    out.agent = learner.agent();
    out.best_step = source.budget;
    out.best_success = 0.0;
  }
  return out;
}

PoolSet build_pools(const TrajectoryDataset& rl, const TrajectoryDataset& demos, const TrajectoryDataset& rl_relit,
                    const TrajectoryDataset& demos_relit) {
  PoolSet pools;
  pools.ingest(rl, Stream::kRl);
  pools.ingest(demos, Stream::kDemo);
  pools.ingest(rl_relit, Stream::kRl);
  pools.ingest(demos_relit, Stream::kDemo);
  return pools;
}

// ---- offline fine-tune ----------------------------------------------------------------

FinetuneResult finetune(const Agent& source, const PoolSet& pools, const LearnerConfig& cfg,
                        const CheckpointFn& on_checkpoint, std::uint64_t checkpoint_every) {
  validate(cfg);
  const IrrCounts counts = irr_counts(cfg.batch, cfg.alpha);
  if (counts.source_rl > 0 && pools.size(Pool::kSourceRl) == 0) {
    fail(ErrorCode::kEmptyPool, "finetune: R0_pi is empty");
  }
  if (counts.relit > 0 && pools.size(Pool::kRelitRl) + pools.size(Pool::kRelitDemo) == 0) {
    fail(ErrorCode::kEmptyPool, "finetune: relit pools are empty");
  }
  if (pools.size(Pool::kSourceDemo) + pools.size(Pool::kRelitDemo) == 0) {
    fail(ErrorCode::kEmptyPool, "finetune: anchor pool is empty");
  }

  FrozenAnchor anchor(source);
  anchor.prefill(pools, cfg.batch);
  Learner learner(source, cfg, derive_seed(cfg.seed, {kStreamFinetune, kStreamLearnerNoise}));
  ReplaySampler sampler(derive_seed(cfg.replay_seed, {kStreamFinetune, kStreamReplay}));
  FinetuneResult out;
  out.anchor_checksum = anchor.checksum();
  if (on_checkpoint) on_checkpoint(0, learner.agent());
  for (std::uint64_t t = 0; t < cfg.horizon; ++t) {
    const StepStats s = learner.step(pools, sampler, SamplerMode::kIrr, &anchor, t);
    if (t == 0) out.first_step = s;
    const std::uint64_t done = t + 1;
    if (checkpoint_every > 0 && done % checkpoint_every == 0) {
      anchor.verify();
      if (on_checkpoint) on_checkpoint(done, learner.agent());
    }
  }
  anchor.verify();
  out.agent = learner.agent();
  return out;
}

}  // namespace rohil
