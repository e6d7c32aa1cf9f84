#pragma once

#include <cstdint>
#include <string>

#include "learners/learners.hpp"

namespace rohil {

struct ReplayConfig {
  double alpha = 0.75;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  std::uint32_t episodes = 100;
  double shift = 0.6;  // headline shifted-light condition
  std::uint64_t seed = 0;
};

struct RelightConfig {
  double pixel_noise = 0.0;
  std::uint64_t noise_seed = 0;
};

// Everything a run depends on. Loaded from flat `key = value` text; every key
// has a default, so an empty file is the default configuration.
struct Config {
  WorldConfig world;
  LearnerConfig learner;
  SourceConfig source;
  ReplayConfig replay;
  EvalConfig eval;
  RelightConfig relight;
};

// Throws kConfig for unknown keys, malformed lines, duplicate keys and bad values.
Config parse_config(const std::string& text);
Config load_config(const std::string& path);

// Canonical text: every key, sorted, shortest round-trip numbers.
std::string config_to_text(const Config& config);
std::uint64_t config_hash(const Config& config);

// Learner settings with the replay section folded in (alpha, batch size).
LearnerConfig effective_learner(const Config& config);

// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace rohil
