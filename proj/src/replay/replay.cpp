#include "replay/replay.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>

namespace rohil {

namespace {

void require_batch_size(std::size_t batch_size) {
  if (batch_size < 2 || batch_size % 2 != 0) {
    fail(ErrorCode::kInvalidArgument, "batch size must be even and >= 2, got " + std::to_string(batch_size));
  }
}

}  // namespace

const char* pool_name(Pool pool) {
  switch (pool) {
    case Pool::kSourceRl: return "R0_pi";
    case Pool::kSourceDemo: return "D0";
    case Pool::kRelitRl: return "Rrel_pi";
    case Pool::kRelitDemo: return "Drel";
  }
  return "?";
}

PoolMask route(const Transition& t, Stream stream) {
  const bool relit = t.relit();
  const bool expert = t.source == ActionSource::kExpert;
  const PoolMask rl = pool_bit(relit ? Pool::kRelitRl : Pool::kSourceRl);
  const PoolMask demo = pool_bit(relit ? Pool::kRelitDemo : Pool::kSourceDemo);
  if (stream == Stream::kDemo) {
    if (!expert) fail(ErrorCode::kInvalidArgument, "route: policy-tagged transition on the demonstration stream");
    return demo;
  }
  return expert ? static_cast<PoolMask>(rl | demo) : rl;
}

void PoolSet::ingest(const Transition& t, Stream stream) {
  const PoolMask mask = route(t, stream);
  const auto index = static_cast<std::uint32_t>(store_.size());
  store_.push_back(t);
  for (std::size_t p = 0; p < kPoolCount; ++p) {
    if (mask & pool_bit(static_cast<Pool>(p))) pools_[p].push_back(index);
  }
}

void PoolSet::ingest(const TrajectoryDataset& ds, Stream stream) {
  for (const Transition& t : ds.records) ingest(t, stream);
}

std::size_t Batch::count(Stratum s) const {
  return static_cast<std::size_t>(std::count(strata.begin(), strata.end(), s));
}

IrrCounts irr_counts(std::size_t batch_size, double alpha) {
  require_batch_size(batch_size);
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::kInvalidArgument, "alpha outside [0,1]");
  const std::size_t half = batch_size / 2;
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const auto orig = static_cast<std::size_t>(std::nearbyint(alpha * static_cast<double>(half)));
  std::fesetround(saved);
  return {orig, half - orig, half};
}

ReplaySampler::ReplaySampler(std::uint64_t seed, bool verify_counts) : rng_(seed), verify_counts_(verify_counts) {}

void ReplaySampler::draw(const PoolSet& pools, std::initializer_list<Pool> union_of, std::size_t n,
                         Stratum stratum, const char* name, Batch& out) {
  if (n == 0) return;
  std::size_t total = 0;
  for (Pool p : union_of) total += pools.size(p);
  if (total == 0) fail(ErrorCode::kEmptyPool, std::string("sampler: stratum ") + name + " is empty");
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = pick(rng_);
    for (Pool p : union_of) {
      if (k < pools.size(p)) {
        out.items.push_back(&pools.at(p, k));
        break;
      }
      k -= pools.size(p);
    }
    out.strata.push_back(stratum);
  }
}

Batch ReplaySampler::rlpd_sample(const PoolSet& pools, std::size_t batch_size) {
  require_batch_size(batch_size);
  const std::size_t half = batch_size / 2;
  Batch b;
  b.items.reserve(batch_size);
  draw(pools, {Pool::kSourceRl}, half, Stratum::kSourceRl, "R0_pi", b);
  b.anchor_begin = b.items.size();
  draw(pools, {Pool::kSourceDemo}, half, Stratum::kDemo, "D0", b);
  if (verify_counts_ && (b.count(Stratum::kSourceRl) != half || b.count(Stratum::kDemo) != half)) {
    fail(ErrorCode::kInvalidArgument, "rlpd_sample: composition drifted");
  }
  return b;
}

Batch ReplaySampler::irr_sample(const PoolSet& pools, std::size_t batch_size, double alpha) {
  const IrrCounts c = irr_counts(batch_size, alpha);
  Batch b;
  b.items.reserve(batch_size);
  draw(pools, {Pool::kSourceRl}, c.source_rl, Stratum::kSourceRl, "R0_pi", b);
  draw(pools, {Pool::kRelitRl, Pool::kRelitDemo}, c.relit, Stratum::kRelitMix, "Rrel_pi+Drel", b);
  b.anchor_begin = b.items.size();
  draw(pools, {Pool::kSourceDemo, Pool::kRelitDemo}, c.anchor, Stratum::kAnchor, "D0+Drel", b);
  if (verify_counts_) {
    const bool ok = b.count(Stratum::kSourceRl) == c.source_rl && b.count(Stratum::kRelitMix) == c.relit &&
                    b.count(Stratum::kAnchor) == c.anchor &&
                    std::all_of(b.items.begin() + static_cast<std::ptrdiff_t>(b.anchor_begin), b.items.end(),
                                [](const Transition* t) { return t->source == ActionSource::kExpert; });
    if (!ok) fail(ErrorCode::kInvalidArgument, "irr_sample: composition drifted");
  }
  return b;
}

}  // namespace rohil
