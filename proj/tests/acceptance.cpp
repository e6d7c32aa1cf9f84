// Acceptance suite: property checks P1-P6, experiment checks A1-A5 and the
// total-time budget. Prints one PASS/FAIL line per criterion; exits 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "harness/experiments.hpp"
#include "numerics/finite_diff.hpp"
#include "tiny.hpp"

using namespace rohil;
using namespace rohil::testing;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[2048];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;
};

void note(const std::string& m) {
  std::fprintf(stderr, "%s\n", m.c_str());
  std::fflush(stderr);
}

// Runs a property check, turning an unexpected exception into a failure.
Outcome guarded(const std::string& id, const std::string& title, const std::function<Outcome()>& body) {
  note("running " + id + " (" + title + ")");
  try {
    Outcome o = body();
    o.id = id;
    o.title = title;
    return o;
  } catch (const std::exception& e) {
    return {id, title, false, std::string("exception: ") + e.what()};
  }
}

// ---- P1 ------------------------------------------------------------------------------

LossWeights oracle_weights(AnchorHead head) {
  LossWeights w;
  w.gamma = 0.97;
  w.eta = 0.05;
  w.feat = 0.2 * 0.7;
  w.anchor = 0.1 * 0.7;
  w.head = head;
  return w;
}

std::vector<ParamRef<double>> encoder_refs(AgentParams<double>& a) {
  std::vector<ParamRef<double>> out;
  visit_encoder(a.encoder, [&](const std::string& name, Tensor<double>& t) { out.push_back({name, &t}); });
  return out;
}

// Keeps every relu input and min-gap at least 1e-3 from its kink.
template <typename Build>
AgentParams<double> smooth_point(std::uint64_t& seed, Build build) {
  for (;;) {
    AgentParams<double> a = tiny_agent(seed++);
    if (build(a) > 1e-3) return a;
  }
}

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-6;
constexpr int kFdPoints = 20;

Outcome p1_gradients() {
  const auto start = Clock::now();
  std::map<std::string, double> worst;
  std::uint64_t seed = 1;

  const BatchTensors<double> b = tiny_batch(7, 6, 3);
  const AnchorTargets<double> anc = anchor_targets_of(tiny_agent(999), b);

  // Critic side: Bellman (target held fixed), feature anchor, and their sum.
  for (const char* term : {"bellman", "feat", "critic-total"}) {
    const LossWeights w = oracle_weights(AnchorHead::kMse);
    for (int p = 0; p < kFdPoints; ++p) {
      AgentParams<double> a = smooth_point(seed, [&](const AgentParams<double>& x) {
        return build_critic_loss(x, b, &anc, w)->tape.kink_margin();
      });
      auto g = build_critic_loss(a, b, &anc, w);
      const Tensor<double> y = g->tape.value(g->target);
      auto pick = [&](const CriticLossGraph<double>& h) {
        const std::string t = term;
        return t == "bellman" ? h.bellman : t == "feat" ? h.feat : h.total;
      };
      const bool encoder_only = std::string(term) == "feat";
      const auto ids = encoder_only ? leaf_ids(g->encoder)
                                    : concat_ids({leaf_ids(g->encoder), leaf_ids(g->critics[0]),
                                                  leaf_ids(g->critics[1])});
      const auto analytic = leaf_grads(g->tape, pick(*g), ids);
      auto refs = encoder_only ? encoder_refs(a) : critic_group(a);
      const auto numeric = finite_difference_gradient(
          std::span<const ParamRef<double>>(refs),
          [&] {
            auto h = build_critic_loss(a, b, &anc, w, &y);
            return h->tape.value(pick(*h)).item();
          },
          kFdStep);
      worst[term] = std::max(worst[term], relative_error(analytic, numeric));
    }
  }

  // Actor side: SAC term, MSE and KL policy anchors.
  struct Term {
    const char* name;
    AnchorHead head;
    bool anchor_only;
  };
  for (const Term term : {Term{"actor-sac", AnchorHead::kNone, false}, Term{"anchor-mse", AnchorHead::kMse, true},
                          Term{"anchor-kl", AnchorHead::kKl, true}}) {
    const LossWeights w = oracle_weights(term.head);
    auto pick = [&](const ActorLossGraph<double>& g) { return term.anchor_only ? g.anchor : g.total; };
    for (int p = 0; p < kFdPoints; ++p) {
      AgentParams<double> a = smooth_point(seed, [&](const AgentParams<double>& x) {
        return build_actor_loss(x, b, &anc, w)->tape.kink_margin();
      });
      auto g = build_actor_loss(a, b, &anc, w);
      const auto analytic = leaf_grads(g->tape, pick(*g), leaf_ids(g->actor));
      auto refs = actor_group(a);
      const auto numeric = finite_difference_gradient(
          std::span<const ParamRef<double>>(refs),
          [&] {
            auto h = build_actor_loss(a, b, &anc, w);
            return h->tape.value(pick(*h)).item();
          },
          kFdStep);
      worst[term.name] = std::max(worst[term.name], relative_error(analytic, numeric));
    }
  }

  const double seconds = since(start);
  double max_err = 0.0;
  std::string per;
  for (const auto& [k, v] : worst) {
    max_err = std::max(max_err, v);
    per += fmt(" %s=%.1e", k.c_str(), v);
  }
  return {"", "", max_err <= kFdTol && seconds <= 60.0,
          fmt("max rel err %.2e (tol 1e-6), %d points x %zu terms,%s; %.1f s (limit 60 s)", max_err, kFdPoints,
              worst.size(), per.c_str(), seconds)};
}

// ---- P2 ------------------------------------------------------------------------------

PoolSet synthetic_pools(std::uint32_t n_rl, std::uint32_t n_demo) {
  PoolSet ps;
  std::uint32_t id = 0;
  auto add = [&](LightTag light, ActionSource src, Stream stream) {
    Transition t;
    t.episode = id++;
    t.light = light;
    t.source = src;
    ps.ingest(t, stream);
  };
  for (std::uint32_t i = 0; i < n_rl; ++i) add(kSourceLight, ActionSource::kPolicy, Stream::kRl);
  for (std::uint32_t i = 0; i < n_demo; ++i) add(kSourceLight, ActionSource::kExpert, Stream::kDemo);
  for (std::uint32_t i = 0; i < 4 * n_rl; ++i) add(static_cast<LightTag>(1 + i % 4), ActionSource::kPolicy, Stream::kRl);
  for (std::uint32_t i = 0; i < 4 * n_demo; ++i)
    add(static_cast<LightTag>(1 + i % 4), ActionSource::kExpert, Stream::kDemo);
  return ps;
}

// Standardized Pearson statistic (chi2 - dof) / sqrt(2 dof) for uniform draws.
double chi_square_sigma(const std::map<std::uint32_t, long>& hits, std::size_t population) {
  long n = 0;
  for (const auto& [k, c] : hits) n += c;
  const double expect = static_cast<double>(n) / static_cast<double>(population);
  double chi2 = 0.0;
  for (const auto& [k, c] : hits) chi2 += (c - expect) * (c - expect) / expect;
  chi2 += static_cast<double>(population - hits.size()) * expect;
  const double dof = static_cast<double>(population) - 1.0;
  return (chi2 - dof) / std::sqrt(2.0 * dof);
}

Outcome p2_sampler() {
  const auto start = Clock::now();
  constexpr std::uint32_t kRl = 50, kDemo = 30;
  const PoolSet ps = synthetic_pools(kRl, kDemo);
  const std::size_t n_relit = 4 * (kRl + kDemo);
  const std::size_t n_anchor = kDemo + 4 * kDemo;
  constexpr long kDraws = 100000;
  bool counts_ok = true;
  double worst_sigma = 0.0;
  std::string counts;

  ReplaySampler sampler(20240611);
  for (double alpha : {0.0, 0.75, 1.0}) {
    const IrrCounts want = irr_counts(256, alpha);
    std::map<std::uint32_t, long> src, relit, anchor;
    long drawn_src = 0, drawn_relit = 0, drawn_anchor = 0;
    while ((want.source_rl > 0 && drawn_src < kDraws) || (want.relit > 0 && drawn_relit < kDraws) ||
           drawn_anchor < kDraws) {
      const Batch b = sampler.irr_sample(ps, 256, alpha);
      std::size_t s = 0, r = 0, d = 0;
      for (std::size_t i = 0; i < b.size(); ++i) {
        const Transition& t = *b.items[i];
        if (i >= b.anchor_begin) {
          counts_ok = counts_ok && t.source == ActionSource::kExpert;
          ++anchor[t.episode];
          ++d;
        } else if (t.relit()) {
          ++relit[t.episode];
          ++r;
        } else {
          counts_ok = counts_ok && t.source == ActionSource::kPolicy;
          ++src[t.episode];
          ++s;
        }
      }
      counts_ok = counts_ok && s == want.source_rl && r == want.relit && d == want.anchor;
      drawn_src += static_cast<long>(s);
      drawn_relit += static_cast<long>(r);
      drawn_anchor += static_cast<long>(d);
    }
    counts += fmt(" a=%g:%zu/%zu/%zu", alpha, want.source_rl, want.relit, want.anchor);
    if (want.source_rl > 0) worst_sigma = std::max(worst_sigma, std::abs(chi_square_sigma(src, kRl)));
    if (want.relit > 0) worst_sigma = std::max(worst_sigma, std::abs(chi_square_sigma(relit, n_relit)));
    worst_sigma = std::max(worst_sigma, std::abs(chi_square_sigma(anchor, n_anchor)));
  }
  const bool want_counts = irr_counts(256, 0.0) == IrrCounts{0, 128, 128} &&
                           irr_counts(256, 0.75) == IrrCounts{96, 32, 128} &&
                           irr_counts(256, 1.0) == IrrCounts{128, 0, 128};

  std::map<std::uint32_t, long> rl, demo;
  long drawn = 0;
  while (drawn < kDraws) {
    const Batch b = sampler.rlpd_sample(ps, 256);
    std::size_t p = 0, e = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const Transition& t = *b.items[i];
      counts_ok = counts_ok && !t.relit();
      if (i < b.anchor_begin) {
        ++rl[t.episode];
        p += t.source == ActionSource::kPolicy;
      } else {
        ++demo[t.episode];
        e += t.source == ActionSource::kExpert;
      }
    }
    counts_ok = counts_ok && p == 128 && e == 128;
    drawn += 128;
  }
  worst_sigma = std::max({worst_sigma, std::abs(chi_square_sigma(rl, kRl)), std::abs(chi_square_sigma(demo, kDemo))});

  const double seconds = since(start);
  return {"", "", counts_ok && want_counts && worst_sigma <= 5.0 && seconds <= 60.0,
          fmt("exact strata%s, rlpd 128/128: %s; worst chi-square %.2f sigma (limit 5) over 1e5 draws per "
              "stratum; %.1f s (limit 60 s)",
              counts.c_str(), counts_ok && want_counts ? "yes" : "NO", worst_sigma, seconds)};
}

// ---- P4 ------------------------------------------------------------------------------

Outcome p4_stop_gradient() {
  long checked = 0, nonzero = 0;
  bool live = true;
  auto scan = [&](const std::vector<Tensor<double>>& grads) {
    for (const auto& t : grads) {
      for (double v : t.values()) {
        ++checked;
        nonzero += v != 0.0;
      }
    }
  };
  for (AnchorHead head : {AnchorHead::kMse, AnchorHead::kKl}) {
    for (std::uint64_t s = 1; s <= 20; ++s) {
      const AgentParams<double> a = tiny_agent(s);
      const BatchTensors<double> b = tiny_batch(s);
      const AnchorTargets<double> anc = anchor_targets_of(tiny_agent(s + 100), b);
      const LossWeights w = oracle_weights(head);

      auto c = build_critic_loss(a, b, &anc, w);
      scan(leaf_grads(c->tape, c->total,
                      concat_ids({leaf_ids(c->actor), leaf_ids(c->targets[0]), leaf_ids(c->targets[1])})));
      double norm = 0.0;
      for (const auto& t : leaf_grads(c->tape, c->total, leaf_ids(c->critics[0])))
        for (double v : t.values()) norm += v * v;
      live = live && norm > 0.0;

      auto p = build_actor_loss(a, b, &anc, w);
      scan(leaf_grads(p->tape, p->total,
                      concat_ids({leaf_ids(p->encoder), leaf_ids(p->critics[0]), leaf_ids(p->critics[1])})));
    }
  }
  // Target critics belong to no optimizer group; they move only by Polyak averaging.
  AgentParams<double> a = tiny_agent(1);
  bool groups_ok = true;
  for (const auto& r : critic_group(a)) groups_ok = groups_ok && r.name.rfind("target", 0) != 0;
  for (const auto& r : actor_group(a)) groups_ok = groups_ok && r.name.rfind("target", 0) != 0;
  return {"", "", nonzero == 0 && live && groups_ok,
          fmt("%ld blocked gradient entries checked, %ld nonzero; critic gradients live: %s; targets outside "
              "optimizer groups: %s",
              checked, nonzero, live ? "yes" : "NO", groups_ok ? "yes" : "NO")};
}

// ---- P3 (identities part), P5, P6 share a short source run ----------------------------

struct ShortRun {
  SourceResult source;
  TrajectoryDataset rl_relit;
  TrajectoryDataset demos_relit;
};

ShortRun short_run() {
  SourceConfig sc;
  sc.budget = 500;
  sc.demos = 5;
  sc.eval_every = 0;
  ShortRun r;
  r.source = train_source(WorldConfig{}, LearnerConfig{}, sc, 1);
  r.rl_relit = relight_dataset(r.source.rl);
  r.demos_relit = relight_dataset(r.source.demos);
  return r;
}

struct AnchorIdentities {
  double worst = 0.0;
  bool rho_ok = false;
  std::string detail;
};

AnchorIdentities anchor_identities(const ShortRun& run) {
  AnchorIdentities out;
  // fp64 oracle networks at theta = theta_0.
  for (AnchorHead head : {AnchorHead::kMse, AnchorHead::kKl}) {
    for (std::uint64_t s = 1; s <= 20; ++s) {
      const AgentParams<double> a = tiny_agent(s);
      const BatchTensors<double> b = tiny_batch(s);
      const AnchorTargets<double> anc = anchor_targets_of(a, b);
      auto c = build_critic_loss(a, b, &anc, oracle_weights(head));
      auto p = build_actor_loss(a, b, &anc, oracle_weights(head));
      out.worst = std::max({out.worst, std::abs(c->tape.value(c->feat).item()),
                            std::abs(p->tape.value(p->anchor).item())});
    }
  }
  // Production fp32 learner: first fine-tune step against the frozen copy.
  const PoolSet pools = build_pools(run.source.rl, run.source.demos, run.rl_relit, run.demos_relit);
  for (AnchorHead head : {AnchorHead::kMse, AnchorHead::kKl}) {
    LearnerConfig cfg;
    cfg.horizon = 1;
    cfg.anchor = head;
    const FinetuneResult r = finetune(run.source.agent, pools, cfg);
    out.worst = std::max({out.worst, std::abs(r.first_step.feat), std::abs(r.first_step.anchor)});
  }
  out.rho_ok = rho(0, 15000, 0.33) == 1.0 && rho(15000, 15000, 0.33) == 0.33;
  out.detail = fmt("max |L_feat|, |L_mse|, |L_KL| at theta_0 = %.1e (limit 1e-12); rho(0) == 1 and rho(T) == 0.33 "
                   "exactly: %s",
                   out.worst, out.rho_ok ? "yes" : "NO");
  return out;
}

Outcome p5_relight(const ShortRun& run) {
  const TrajectoryDataset& src = run.source.rl;
  const TrajectoryDataset& relit = run.rl_relit;
  std::map<std::pair<std::uint32_t, std::uint32_t>, const Transition*> by_key;
  for (const Transition& t : src.records) by_key[{t.episode, t.step}] = &t;
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> tags;
  long mismatched = 0, same_image = 0;
  for (const Transition& r : relit.records) {
    const auto it = by_key.find({r.episode, r.step});
    if (it == by_key.end() || r.light < 1 || r.light > 4) {
      ++mismatched;
      continue;
    }
    const Transition& s = *it->second;
    tags[{r.episode, r.step}] |= 1 << r.light;
    mismatched += !(r.action == s.action && r.reward == s.reward && r.done == s.done && r.state == s.state &&
                    r.next_state == s.next_state && r.source == s.source);
    same_image += r.obs.image == s.obs.image;
  }
  bool tags_ok = tags.size() == src.records.size();
  for (const auto& [k, m] : tags) tags_ok = tags_ok && m == 0b11110;
  const bool idempotent = encode_dataset(relight_dataset(src)) == encode_dataset(relit) &&
                          encode_dataset(relight_dataset(run.source.demos)) == encode_dataset(run.demos_relit);
  const bool sized = relit.records.size() == 4 * src.records.size() &&
                     run.demos_relit.records.size() == 4 * run.source.demos.records.size();
  return {"", "", sized && tags_ok && mismatched == 0 && same_image == 0 && idempotent,
          fmt("%zu -> %zu records (4x: %s), K1-K4 per record: %s, field mismatches %ld, unchanged observations "
              "%ld, repeat relighting byte-identical: %s",
              src.records.size(), relit.records.size(), sized ? "yes" : "NO", tags_ok ? "yes" : "NO", mismatched,
              same_image, idempotent ? "yes" : "NO")};
}

Outcome p6_persistence(const ShortRun& run) {
  const auto dir = std::filesystem::temp_directory_path() / "rohil_acceptance_p6";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  auto code_of = [](auto&& fn) -> std::optional<ErrorCode> {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return std::nullopt;
  };

  for (const TrajectoryDataset* ds : {&run.source.rl, &run.rl_relit}) {
    const std::string path = (dir / "ds.rohl").string();
    write_dataset(path, *ds);
    const TrajectoryDataset back = read_dataset(path);
    expect(back == *ds, "dataset round-trip");
    expect(encode_dataset(back) == read_file(path), "dataset bytes");
  }
  const std::string ckpt_path = (dir / "agent.ckpt").string();
  const Checkpoint ckpt = agent_to_checkpoint(run.source.agent, {500, 0x1234});
  write_checkpoint(ckpt_path, ckpt);
  const Checkpoint back = read_checkpoint(ckpt_path);
  expect(back == ckpt, "checkpoint round-trip");
  expect(checksum(agent_from_checkpoint(back)) == checksum(run.source.agent), "agent checksum");
  expect(encode_checkpoint(back) == read_file(ckpt_path), "checkpoint bytes");

  const auto ds_bytes = encode_dataset(run.source.rl);
  auto bad = ds_bytes;
  bad[0] ^= 0xff;
  expect(code_of([&] { decode_dataset(bad); }) == ErrorCode::kBadMagic, "dataset magic");
  bad = ds_bytes;
  bad[4] += 1;
  expect(code_of([&] { decode_dataset(bad); }) == ErrorCode::kVersionMismatch, "dataset version");
  const std::vector<std::uint8_t> cut(ds_bytes.begin(), ds_bytes.end() - 7);
  expect(code_of([&] { decode_dataset(cut); }) == ErrorCode::kTruncated, "dataset truncation");

  const auto ck_bytes = encode_checkpoint(ckpt);
  auto cbad = ck_bytes;
  cbad[0] ^= 0xff;
  expect(code_of([&] { decode_checkpoint(cbad); }) == ErrorCode::kBadMagic, "checkpoint magic");
  cbad = ck_bytes;
  cbad[4] += 1;
  expect(code_of([&] { decode_checkpoint(cbad); }) == ErrorCode::kVersionMismatch, "checkpoint version");
  const std::vector<std::uint8_t> ccut(ck_bytes.begin(), ck_bytes.end() - 7);
  expect(code_of([&] { decode_checkpoint(ccut); }) == ErrorCode::kTruncated, "checkpoint truncation");
  Checkpoint missing = ckpt;
  missing.arrays.pop_back();
  expect(code_of([&] { agent_from_checkpoint(missing); }) == ErrorCode::kMissingEntry, "checkpoint missing entry");
  expect(code_of([&] { read_dataset((dir / "absent.rohl").string()); }) == ErrorCode::kIo, "missing file");
  std::filesystem::remove_all(dir);

  std::string detail = "dataset and checkpoint files bit-exact; magic/version/truncation/missing-entry faults named";
  if (!failures.empty()) {
    detail = "failed:";
    for (const auto& f : failures) detail += " " + f + ";";
  }
  return {"", "", failures.empty(), detail};
}

// ---- experiment criteria -------------------------------------------------------------

struct RowIndex {
  // (variant, alpha or -1, seed, shift_pct, step or -1) -> success rate
  std::map<std::tuple<std::string, double, std::uint64_t, int, long>, double> sr;

  explicit RowIndex(const std::vector<ReportRow>& rows) {
    for (const ReportRow& r : rows) {
      sr[{r.variant, r.alpha.value_or(-1.0), r.seed, r.shift_pct,
          r.finetune_step ? static_cast<long>(*r.finetune_step) : -1L}] = r.success_rate;
    }
  }
  double at(const std::string& v, double alpha, std::uint64_t seed, int pct, long step) const {
    const auto it = sr.find({v, alpha, seed, pct, step});
    if (it == sr.end()) fail(ErrorCode::kMissingEntry, "acceptance: missing row " + v + " seed " + std::to_string(seed));
    return it->second;
  }
};

std::size_t needed(std::size_t of, std::size_t k_of_5) { return (of * k_of_5 + 4) / 5; }

std::string seeds_list(const std::vector<double>& v, const char* f = "%.2f") {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(f, x);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string config_path, cache_dir, csv_path;
  app.add_option("--seeds", seeds, "source seeds")->delimiter(',');
  app.add_option("--config", config_path, "config override (the criteria assume the defaults)")
      ->check(CLI::ExistingFile);
  app.add_option("--cache", cache_dir, "reuse per-seed source runs from this directory");
  app.add_option("--csv", csv_path, "write the experiment rows here");
  CLI11_PARSE(app, argc, argv);

  const auto start = Clock::now();
  std::vector<Outcome> out;

  out.push_back(guarded("P1", "gradient oracle", p1_gradients));
  out.push_back(guarded("P2", "sampler composition", p2_sampler));

  note("short source run for P3/P5/P6");
  std::optional<ShortRun> run;
  std::string run_error;
  try {
    run = short_run();
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  AnchorIdentities ident;
  bool ident_ok = false;
  if (run) {
    try {
      ident = anchor_identities(*run);
      ident_ok = true;
    } catch (const std::exception& e) {
      ident.detail = std::string("exception: ") + e.what();
    }
  } else {
    ident.detail = "short source run failed: " + run_error;
  }
  out.push_back(guarded("P4", "stop-gradient", p4_stop_gradient));
  out.push_back(guarded("P5", "relighting contract", [&] {
    if (!run) return Outcome{"", "", false, "short source run failed: " + run_error};
    return p5_relight(*run);
  }));
  out.push_back(guarded("P6", "persistence", [&] {
    if (!run) return Outcome{"", "", false, "short source run failed: " + run_error};
    return p6_persistence(*run);
  }));
  run.reset();

  // One experiment covers A1-A5: per seed the source agent, Final-A, Final-C and
  // Final-D (both checkpointed every 1000 steps), and anchored alpha in {0, .25, .5, 1}.
  ExperimentPlan plan;
  plan.config = config_path.empty() ? parse_config("") : load_config(config_path);
  plan.seeds = seeds;
  plan.shifts = {0.0, 0.6};
  plan.cache_dir = cache_dir;
  plan.threads = 1;
  plan.progress = note;
  std::vector<CellRecord> cells;
  plan.on_cell = [&](const CellRecord& c) {
    cells.push_back(c);
    note(fmt("seed %llu %s: %.1f s", static_cast<unsigned long long>(c.seed), c.cell.c_str(), c.seconds));
  };
  const double alpha_d = plan.config.replay.alpha;
  const std::uint64_t horizon = plan.config.learner.horizon;
  std::vector<Variant> variants;
  variants.push_back({"Final-A", 0.0, false, AnchorHead::kMse, 0});
  variants.push_back({"Final-C", alpha_d, false, AnchorHead::kMse, 1000});
  variants.push_back({"Final-D", alpha_d, true, AnchorHead::kMse, 1000});
  const std::vector<double> sweep{0.0, 0.25, 0.5, 0.75, 1.0};
  for (double a : sweep) {
    if (a != alpha_d) variants.push_back({"alpha-sweep", a, true, AnchorHead::kMse, 0});
  }

  std::vector<ReportRow> rows;
  std::string experiment_error;
  try {
    rows = run_variants(plan, variants);
    if (!csv_path.empty()) emit_report(rows, csv_path);
  } catch (const std::exception& e) {
    experiment_error = e.what();
  }

  // P3: identities plus a theta_0 checksum that never moved during any full fine-tune.
  {
    std::size_t anchored = 0, moved = 0;
    for (const CellRecord& c : cells) {
      if (c.cell == "source" || c.cell == "Final-A" || c.cell == "Final-C") continue;
      ++anchored;
      moved += c.anchor_checksum != c.source_checksum;
    }
    const bool full = experiment_error.empty() && anchored == seeds.size() * (sweep.size());
    Outcome p3{"P3", "anchor identities", ident_ok && ident.worst <= 1e-12 && ident.rho_ok && full && moved == 0,
               ident.detail + fmt("; theta_0 checksum constant over %zu anchored %llu-step fine-tunes "
                                  "(verified every 1000 steps), moved in %zu",
                                  anchored, static_cast<unsigned long long>(horizon), moved)};
    out.insert(out.begin() + 2, p3);
  }

  const std::size_t n = seeds.size();
  if (!experiment_error.empty()) {
    for (const char* id : {"A1", "A2", "A3", "A4", "A5"}) {
      out.push_back({id, "experiment", false, "experiment failed: " + experiment_error});
    }
  } else {
    const RowIndex idx(rows);
    const long T = static_cast<long>(horizon);
    std::map<std::uint64_t, double> src_seconds;
    double max_ft = 0.0;
    bool cached = false;
    for (const CellRecord& c : cells) {
      if (c.cell == "source") {
        src_seconds[c.seed] = c.seconds;
        cached = cached || c.from_cache;
      } else {
        max_ft = std::max(max_ft, c.seconds);
      }
    }

    // A1
    std::vector<double> sr0, gap;
    std::size_t a1 = 0, a2 = 0;
    double max_src = 0.0;
    for (std::uint64_t s : seeds) {
      const double s0 = idx.at("source", -1, s, 0, -1);
      const double s6 = idx.at("source", -1, s, 60, -1);
      sr0.push_back(s0);
      gap.push_back(s0 - s6);
      a1 += s0 >= 0.9;
      a2 += s0 - s6 >= 0.3;
      max_src = std::max(max_src, src_seconds[s]);
    }
    out.push_back({"A1", "source competence", a1 >= needed(n, 4) && max_src <= 1200.0,
                   fmt("source-light SR per seed [%s], %zu/%zu seeds >= 0.90 (need %zu); slowest source run %.0f s "
                       "(limit 1200 s)%s",
                       seeds_list(sr0).c_str(), a1, n, needed(n, 4), max_src, cached ? " [cached]" : "")});
    out.push_back({"A2", "shift gap", a2 >= needed(n, 4),
                   fmt("SR(s=0) - SR(s=0.6) per seed [%s], %zu/%zu seeds >= 0.30 (need %zu)", seeds_list(gap).c_str(),
                       a2, n, needed(n, 4))});

    // A3
    std::vector<double> lift, keep;
    std::size_t kept = 0;
    for (std::uint64_t s : seeds) {
      const double d6 = idx.at("Final-D", alpha_d, s, 60, T);
      const double a6 = idx.at("Final-A", 0.0, s, 60, T);
      const double d0 = idx.at("Final-D", alpha_d, s, 0, T);
      const double src0 = idx.at("source", -1, s, 0, -1);
      lift.push_back(d6 - a6);
      keep.push_back(d0 - src0);
      kept += d0 >= src0 - 0.05;
    }
    const double mean_lift = std::accumulate(lift.begin(), lift.end(), 0.0) / static_cast<double>(n);
    out.push_back({"A3", "gap closed without forgetting", mean_lift >= 0.15 && kept == n && max_ft <= 600.0,
                   fmt("mean D-A shifted SR %.3f (need >= 0.15) [%s]; D source SR - source agent [%s], %zu/%zu seeds "
                       ">= -0.05; slowest fine-tune %.0f s incl. checkpoint evals (limit 600 s)",
                       mean_lift, seeds_list(lift).c_str(), seeds_list(keep).c_str(), kept, n, max_ft)});

    // A4: ties with an endpoint do not count as an interior optimum.
    std::size_t interior = 0;
    std::string per_seed;
    for (std::uint64_t s : seeds) {
      std::vector<double> metric;
      for (double a : sweep) {
        const bool is_d = a == alpha_d;
        const std::string v = is_d ? "Final-D" : "alpha-sweep";
        metric.push_back(
            std::min(idx.at(v, a, s, 0, T), idx.at(v, a, s, 60, T)));
      }
      const double ends = std::max(metric.front(), metric.back());
      const double mid = *std::max_element(metric.begin() + 1, metric.end() - 1);
      interior += mid > ends;
      per_seed += fmt(" s%llu[%s]", static_cast<unsigned long long>(s), seeds_list(metric).c_str());
    }
    out.push_back({"A4", "interior alpha optimum", interior >= needed(n, 3),
                   fmt("min(SR0, SR0.6) over alpha {0,.25,.5,.75,1}:%s; strict interior max in %zu/%zu seeds (need "
                       "%zu)",
                       per_seed.c_str(), interior, n, needed(n, 3))});

    // A5
    std::size_t stable = 0;
    std::vector<double> anchored_end, plain_end;
    for (std::uint64_t s : seeds) {
      const double d = std::min(idx.at("Final-D", alpha_d, s, 0, T), idx.at("Final-D", alpha_d, s, 60, T));
      const double c = std::min(idx.at("Final-C", alpha_d, s, 0, T), idx.at("Final-C", alpha_d, s, 60, T));
      anchored_end.push_back(d);
      plain_end.push_back(c);
      stable += d >= c;
    }
    out.push_back({"A5", "anchored stability", stable >= needed(n, 4),
                   fmt("terminal min(SR0, SR0.6) anchored [%s] vs unanchored [%s], %zu/%zu seeds anchored >= "
                       "unanchored (need %zu)",
                       seeds_list(anchored_end).c_str(), seeds_list(plain_end).c_str(), stable, n, needed(n, 4))});
  }

  const double total = since(start);
  out.push_back({"TIME", "total pipeline", total <= 5400.0 && experiment_error.empty(),
                 fmt("%.1f min (limit 90 min)%s", total / 60.0, cache_dir.empty() ? "" : " [cache in use]")});

  std::size_t failed = 0;
  for (const Outcome& o : out) {
    std::printf("%s %-4s %-30s %s\n", o.pass ? "PASS" : "FAIL", o.id.c_str(), o.title.c_str(), o.detail.c_str());
    failed += !o.pass;
  }
  std::printf("%zu/%zu criteria passed\n", out.size() - failed, out.size());
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
