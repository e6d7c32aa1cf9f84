#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "datasets/datasets.hpp"

namespace rohil {

// The four transition pools: light (source / relit) x action (mixed RL / expert demo).
enum class Pool : std::uint8_t { kSourceRl = 0, kSourceDemo = 1, kRelitRl = 2, kRelitDemo = 3 };
inline constexpr std::size_t kPoolCount = 4;

const char* pool_name(Pool pool);

// Which stream a transition arrives on. Online RL steps (including expert
// takeovers) arrive on kRl; recorded demonstrations arrive on kDemo.
enum class Stream : std::uint8_t { kRl, kDemo };

using PoolMask = std::uint8_t;
inline constexpr PoolMask pool_bit(Pool p) { return static_cast<PoolMask>(1u << static_cast<unsigned>(p)); }

// RL-stream transitions land in the RL pool of their light; expert-tagged RL
// steps (interventions) are additionally copied into the demo pool. Demo-stream
// transitions must be expert-tagged and land only in the demo pool.
PoolMask route(const Transition& t, Stream stream);

class PoolSet {
 public:
  void ingest(const Transition& t, Stream stream);
  void ingest(const TrajectoryDataset& ds, Stream stream);

  std::size_t size(Pool pool) const { return pools_[static_cast<std::size_t>(pool)].size(); }
  const Transition& at(Pool pool, std::size_t i) const {
    return store_[pools_[static_cast<std::size_t>(pool)][i]];
  }
  std::size_t stored() const noexcept { return store_.size(); }

 private:
  std::deque<Transition> store_;
  std::array<std::vector<std::uint32_t>, kPoolCount> pools_;
};

enum class Stratum : std::uint8_t {
  kSourceRl,   // R0_pi
  kRelitMix,   // R_rel_pi u D_rel
  kDemo,       // D0 (source training)
  kAnchor,     // D_anc = D0 u D_rel
};

struct Batch {
  std::vector<const Transition*> items;
  std::vector<Stratum> strata;
  // Rows [anchor_begin, size) form the demonstration half B_D.
  std::size_t anchor_begin = 0;

  std::size_t size() const noexcept { return items.size(); }
  std::size_t count(Stratum s) const;
};

struct IrrCounts {
  std::size_t source_rl = 0;
  std::size_t relit = 0;
  std::size_t anchor = 0;

  friend bool operator==(const IrrCounts&, const IrrCounts&) = default;
};

// Exact stratified counts for one IRR batch: B/2 RL rows split by
// round-half-to-even(alpha * B/2), B/2 anchor rows.
IrrCounts irr_counts(std::size_t batch_size, double alpha);

class ReplaySampler {
 public:
  explicit ReplaySampler(std::uint64_t seed, bool verify_counts = false);

  // Symmetric RLPD batch: B/2 uniform draws from R0_pi, B/2 from D0.
  Batch rlpd_sample(const PoolSet& pools, std::size_t batch_size);

  // Illumination-retention batch. The RL half mixes source-light policy data
  // with relit data by alpha; the demo half draws from every expert pool.
  Batch irr_sample(const PoolSet& pools, std::size_t batch_size, double alpha);

  std::mt19937_64& rng() noexcept { return rng_; }

 private:
  void draw(const PoolSet& pools, std::initializer_list<Pool> union_of, std::size_t n, Stratum stratum,
            const char* name, Batch& out);

  std::mt19937_64 rng_;
  bool verify_counts_;
};

}  // namespace rohil
