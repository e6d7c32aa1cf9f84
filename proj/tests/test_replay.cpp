#include <cmath>
#include <map>

#include "doctest.h"
#include "error_code.hpp"
#include "replay/replay.hpp"

using namespace rohil;
using namespace rohil::testing;

namespace {

Transition make(std::uint32_t id, LightTag light, ActionSource source) {
  Transition t;
  t.episode = id;
  t.light = light;
  t.source = source;
  return t;
}

// Pool sizes: R0_pi n_rl, D0 n_demo, Rrel_pi and Drel 4x their sources.
// Every transition carries a unique id in `episode`.
PoolSet filled_pools(std::uint32_t n_rl, std::uint32_t n_demo, bool relit = true) {
  PoolSet ps;
  std::uint32_t id = 0;
  for (std::uint32_t i = 0; i < n_rl; ++i) ps.ingest(make(id++, kSourceLight, ActionSource::kPolicy), Stream::kRl);
  for (std::uint32_t i = 0; i < n_demo; ++i) ps.ingest(make(id++, kSourceLight, ActionSource::kExpert), Stream::kDemo);
  if (relit) {
    for (std::uint32_t i = 0; i < 4 * n_rl; ++i)
      ps.ingest(make(id++, static_cast<LightTag>(1 + i % 4), ActionSource::kPolicy), Stream::kRl);
    for (std::uint32_t i = 0; i < 4 * n_demo; ++i)
      ps.ingest(make(id++, static_cast<LightTag>(1 + i % 4), ActionSource::kExpert), Stream::kDemo);
  }
  return ps;
}

// Largest standardized deviation of per-element hit counts from uniform.
double max_z(const std::map<std::uint32_t, int>& hits, std::size_t population, int draws) {
  const double p = 1.0 / static_cast<double>(population);
  const double mean = draws * p;
  const double sd = std::sqrt(draws * p * (1 - p));
  double worst = mean / sd;  // an element never hit
  if (hits.size() == population) worst = 0;
  for (const auto& [id, n] : hits) worst = std::max(worst, std::abs(n - mean) / sd);
  return worst;
}

}  // namespace

TEST_CASE("routing covers the tag grid") {
  CHECK(route(make(0, 0, ActionSource::kPolicy), Stream::kRl) == pool_bit(Pool::kSourceRl));
  CHECK(route(make(0, 2, ActionSource::kPolicy), Stream::kRl) == pool_bit(Pool::kRelitRl));
  CHECK(route(make(0, 0, ActionSource::kExpert), Stream::kDemo) == pool_bit(Pool::kSourceDemo));
  CHECK(route(make(0, 3, ActionSource::kExpert), Stream::kDemo) == pool_bit(Pool::kRelitDemo));

  // Interventions on the RL stream go to both buffers of their light.
  CHECK(route(make(0, 0, ActionSource::kExpert), Stream::kRl) ==
        (pool_bit(Pool::kSourceRl) | pool_bit(Pool::kSourceDemo)));
  CHECK(route(make(0, 1, ActionSource::kExpert), Stream::kRl) ==
        (pool_bit(Pool::kRelitRl) | pool_bit(Pool::kRelitDemo)));

  // Policy-tagged records never reach a demo pool.
  CHECK(error_code_of([] { route(make(0, 0, ActionSource::kPolicy), Stream::kDemo); }) ==
        code(ErrorCode::kInvalidArgument));
  for (LightTag l = 0; l <= 4; ++l) {
    const PoolMask m = route(make(0, l, ActionSource::kPolicy), Stream::kRl);
    CHECK((m & (pool_bit(Pool::kSourceDemo) | pool_bit(Pool::kRelitDemo))) == 0);
  }

  PoolSet ps;
  ps.ingest(make(0, 0, ActionSource::kExpert), Stream::kRl);
  CHECK(ps.size(Pool::kSourceRl) == 1);
  CHECK(ps.size(Pool::kSourceDemo) == 1);
  CHECK(ps.stored() == 1);
  CHECK(&ps.at(Pool::kSourceRl, 0) == &ps.at(Pool::kSourceDemo, 0));
}

TEST_CASE("IRR counts") {
  CHECK(irr_counts(256, 0.75) == IrrCounts{96, 32, 128});
  CHECK(irr_counts(256, 1.0) == IrrCounts{128, 0, 128});
  CHECK(irr_counts(256, 0.0) == IrrCounts{0, 128, 128});
  CHECK(irr_counts(256, 0.25) == IrrCounts{32, 96, 128});
  CHECK(irr_counts(256, 0.5) == IrrCounts{64, 64, 128});
  // Round half to even: 0.5 * 5 = 2.5 -> 2, 0.5 * 7 = 3.5 -> 4.
  CHECK(irr_counts(10, 0.5).source_rl == 2);
  CHECK(irr_counts(14, 0.5).source_rl == 4);
  CHECK(error_code_of([] { irr_counts(256, 1.5); }) == code(ErrorCode::kInvalidArgument));
  CHECK(error_code_of([] { irr_counts(255, 0.5); }) == code(ErrorCode::kInvalidArgument));
  CHECK(error_code_of([] { irr_counts(0, 0.5); }) == code(ErrorCode::kInvalidArgument));
}

TEST_CASE("RLPD batches are exactly half and half") {
  const PoolSet ps = filled_pools(50, 30);
  ReplaySampler s(1, true);
  for (int i = 0; i < 50; ++i) {
    const Batch b = s.rlpd_sample(ps, 256);
    REQUIRE(b.size() == 256);
    CHECK(b.anchor_begin == 128);
    int policy = 0, expert = 0;
    for (std::size_t r = 0; r < b.size(); ++r) {
      CHECK(b.items[r]->light == kSourceLight);
      (b.items[r]->source == ActionSource::kPolicy ? policy : expert) += 1;
      CHECK((r < 128) == (b.items[r]->source == ActionSource::kPolicy));
    }
    CHECK(policy == 128);
    CHECK(expert == 128);
  }
}

TEST_CASE("IRR batches hit exact per-stratum counts") {
  const PoolSet ps = filled_pools(40, 20);
  for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    ReplaySampler s(7, true);
    const IrrCounts c = irr_counts(256, alpha);
    for (int i = 0; i < 20; ++i) {
      const Batch b = s.irr_sample(ps, 256, alpha);
      REQUIRE(b.size() == 256);
      CHECK(b.anchor_begin == 128);
      std::size_t src_rl = 0, relit = 0;
      for (std::size_t r = 0; r < 128; ++r) (b.items[r]->relit() ? relit : src_rl) += 1;
      CHECK(src_rl == c.source_rl);
      CHECK(relit == c.relit);
      for (std::size_t r = 0; r < 128; ++r) {
        if (!b.items[r]->relit()) CHECK(b.items[r]->source == ActionSource::kPolicy);
      }
      for (std::size_t r = 128; r < 256; ++r) CHECK(b.items[r]->source == ActionSource::kExpert);
      CHECK(b.count(Stratum::kAnchor) == 128);
    }
  }
}

TEST_CASE("RLPD draws are uniform over each pool") {
  const PoolSet ps = filled_pools(37, 23, false);
  ReplaySampler s(2024);
  std::map<std::uint32_t, int> rl, demo;
  const int batches = 100000 / 128;
  for (int i = 0; i < batches; ++i) {
    const Batch b = s.rlpd_sample(ps, 256);
    for (std::size_t r = 0; r < b.size(); ++r) (r < 128 ? rl : demo)[b.items[r]->episode] += 1;
  }
  CHECK(max_z(rl, 37, batches * 128) < 5.0);
  CHECK(max_z(demo, 23, batches * 128) < 5.0);
}

TEST_CASE("union strata weight elements uniformly") {
  // Relit union: 4*10 policy + 4*30 expert elements; anchor union: 30 + 120.
  const PoolSet ps = filled_pools(10, 30);
  ReplaySampler s(99);
  std::map<std::uint32_t, int> relit, anchor;
  const int batches = 100000 / 128;
  for (int i = 0; i < batches; ++i) {
    const Batch b = s.irr_sample(ps, 256, 0.0);
    for (std::size_t r = 0; r < b.size(); ++r) (r < 128 ? relit : anchor)[b.items[r]->episode] += 1;
  }
  CHECK(max_z(relit, 160, batches * 128) < 5.0);
  CHECK(max_z(anchor, 150, batches * 128) < 5.0);

  // Pearson chi-square over the anchor union stays within 5 sigma of its mean.
  const double n = batches * 128.0;
  const double expect = n / 150.0;
  double chi2 = 0;
  for (const auto& [id, k] : anchor) chi2 += (k - expect) * (k - expect) / expect;
  chi2 += (150.0 - static_cast<double>(anchor.size())) * expect;
  const double dof = 149;
  CHECK(std::abs(chi2 - dof) < 5 * std::sqrt(2 * dof));
}

TEST_CASE("sampling is reproducible under a fixed seed") {
  const PoolSet ps = filled_pools(25, 25);
  ReplaySampler a(5), b(5), c(6);
  bool differs = false;
  for (int i = 0; i < 10; ++i) {
    const Batch x = a.irr_sample(ps, 64, 0.75);
    const Batch y = b.irr_sample(ps, 64, 0.75);
    const Batch z = c.irr_sample(ps, 64, 0.75);
    CHECK(x.items == y.items);
    differs = differs || x.items != z.items;
  }
  CHECK(differs);
}

TEST_CASE("empty strata are reported by name") {
  auto message = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kEmptyPool);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  const PoolSet source_only = filled_pools(10, 10, false);
  ReplaySampler s(1);
  CHECK(message([&] { s.irr_sample(source_only, 256, 0.75); }).find("Rrel_pi+Drel") != std::string::npos);
  // alpha = 1 needs no relit rows.
  CHECK_NOTHROW(s.irr_sample(source_only, 256, 1.0));

  PoolSet no_demo;
  no_demo.ingest(make(0, 0, ActionSource::kPolicy), Stream::kRl);
  CHECK(message([&] { s.rlpd_sample(no_demo, 8); }).find("D0") != std::string::npos);
  CHECK(message([&] { s.rlpd_sample(PoolSet{}, 8); }).find("R0_pi") != std::string::npos);
}
