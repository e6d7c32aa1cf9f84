#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <random>

#include "datasets/datasets.hpp"
#include "doctest.h"
#include "error_code.hpp"

using namespace rohil;
using namespace rohil::testing;

namespace {

PolicyFn random_policy(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng](const Observation&) {
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    return Action{u(*rng), u(*rng)};
  };
}

// Three episodes: one expert, one random with interventions, one random without.
TrajectoryDataset small_dataset() {
  const LitWorld env(EnvConfig{}, default_source_light());
  TrajectoryDataset ds;
  ds.lights.push_back(env.light());
  auto add = [&](const EpisodeRecord& e) { ds.records.insert(ds.records.end(), e.transitions.begin(), e.transitions.end()); };
  add(record_episode(env, nullptr, 1, 0, InterventionRule{}));
  const PolicyFn p = random_policy(2);
  add(record_episode(env, &p, 2, 1, InterventionRule{}));
  add(record_episode(env, &p, 3, 2, InterventionRule{false, 10}));
  return ds;
}

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::temp_directory_path() / (std::string("rohil_test_") + name);
}

}  // namespace

TEST_CASE("expert episode is all EXPERT and ends with reward 1") {
  const LitWorld env(EnvConfig{}, default_source_light());
  const EpisodeRecord e = record_episode(env, nullptr, 7, 3, InterventionRule{});
  REQUIRE(!e.transitions.empty());
  for (const Transition& t : e.transitions) {
    CHECK(t.source == ActionSource::kExpert);
    CHECK(t.episode == 3);
  }
  CHECK(e.transitions.back().reward == 1.0f);
  CHECK(e.transitions.back().done);
  CHECK(e.success);
}

TEST_CASE("random policy without interventions is all POLICY") {
  const LitWorld env(EnvConfig{}, default_source_light());
  const PolicyFn p = random_policy(4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const EpisodeRecord e = record_episode(env, &p, seed, 0, InterventionRule{false, 10});
    for (const Transition& t : e.transitions) CHECK(t.source == ActionSource::kPolicy);
    CHECK_FALSE(e.intervened);
  }
}

TEST_CASE("recorded transitions chain states and observations") {
  const TrajectoryDataset ds = small_dataset();
  const LitWorld env(EnvConfig{}, default_source_light());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const Transition& t = ds.records[i];
    CHECK(t.obs == env.observe(t.state));
    CHECK(t.next_obs == env.observe(t.next_state));
    CHECK(t.next_state.step == t.state.step + 1);
    if (i + 1 < ds.records.size() && ds.records[i + 1].episode == t.episode) {
      CHECK(ds.records[i + 1].state == t.next_state);
    }
  }
}

TEST_CASE("stalled policy hands over to the expert and stays there") {
  const LitWorld env(EnvConfig{}, default_source_light());
  const PolicyFn still = [](const Observation&) { return Action{0.0f, 0.0f}; };
  const EpisodeRecord e = record_episode(env, &still, 5, 0, InterventionRule{true, 10});
  REQUIRE(e.transitions.size() > 10);
  for (std::size_t i = 0; i < e.transitions.size(); ++i) {
    // Ten non-improving observations, then takeover from the eleventh action.
    CHECK((e.transitions[i].source == ActionSource::kExpert) == (i >= 10));
  }
  CHECK(e.intervened);
  CHECK(e.success);
}

TEST_CASE("stall is measured against the best distance so far") {
  InterventionTracker tr(InterventionRule{true, 3});
  tr.reset(1.0f);
  CHECK_FALSE(tr.observe(0.5f));
  CHECK_FALSE(tr.observe(0.7f));
  CHECK_FALSE(tr.observe(0.6f));  // closer than last step, not than best
  CHECK(tr.observe(0.55f));
  CHECK(tr.observe(0.1f));  // once active, stays active
}

TEST_CASE("recording is deterministic for a fixed seed and policy") {
  const LitWorld env(EnvConfig{}, default_deploy_light());
  const PolicyFn p1 = random_policy(9);
  const PolicyFn p2 = random_policy(9);
  const EpisodeRecord a = record_episode(env, &p1, 12, 0, InterventionRule{});
  const EpisodeRecord b = record_episode(env, &p2, 12, 0, InterventionRule{});
  TrajectoryDataset da{{env.light()}, a.transitions};
  TrajectoryDataset db{{env.light()}, b.transitions};
  CHECK(encode_dataset(da) == encode_dataset(db));
}

TEST_CASE("relighting contract") {
  const TrajectoryDataset ds = small_dataset();
  const TrajectoryDataset relit = relight_dataset(ds);
  REQUIRE(relit.records.size() == 4 * ds.records.size());
  CHECK(relit.lights.size() == 5);

  // Pair every relit record with its source by (episode, step, tag).
  std::map<std::pair<std::uint32_t, std::uint32_t>, const Transition*> by_key;
  for (const Transition& t : ds.records) by_key[{t.episode, t.step}] = &t;
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> tags_seen;
  const auto lights = default_relight_lights();
  for (const Transition& r : relit.records) {
    REQUIRE(r.light >= 1);
    REQUIRE(r.light <= 4);
    const Transition& s = *by_key.at({r.episode, r.step});
    tags_seen[{r.episode, r.step}] |= 1 << r.light;
    CHECK(r.action == s.action);
    CHECK(r.reward == s.reward);
    CHECK(r.done == s.done);
    CHECK(r.source == s.source);
    CHECK(r.state == s.state);
    CHECK(r.next_state == s.next_state);
    CHECK(r.obs.proprio == s.obs.proprio);
    CHECK(r.next_obs.proprio == s.next_obs.proprio);
    CHECK(r.obs.image == render(s.state, lights[r.light - 1]));
    CHECK(r.next_obs.image == render(s.next_state, lights[r.light - 1]));
    CHECK(r.obs.image != s.obs.image);
  }
  for (const auto& [key, mask] : tags_seen) CHECK(mask == 0b11110);
  CHECK(tags_seen.size() == ds.records.size());

  CHECK(encode_dataset(relight_dataset(ds)) == encode_dataset(relit));
}

TEST_CASE("relighting noise knob is seeded") {
  const TrajectoryDataset ds = small_dataset();
  RelightOptions opt;
  opt.pixel_noise = 4.0;
  opt.noise_seed = 3;
  const TrajectoryDataset a = relight_dataset(ds, opt);
  const TrajectoryDataset b = relight_dataset(ds, opt);
  CHECK(a == b);
  CHECK(a != relight_dataset(ds));
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].action == b.records[i].action);
}

TEST_CASE("relighting needs world states and source records") {
  TrajectoryDataset ds = small_dataset();
  ds.records[5].state.step = kMissingStateStep;
  CHECK(error_code_of([&] { relight_dataset(ds); }) == code(ErrorCode::kMissingState));
  const TrajectoryDataset relit = relight_dataset(small_dataset());
  CHECK(error_code_of([&] { relight_dataset(relit); }) == code(ErrorCode::kInvalidArgument));
}

TEST_CASE("dataset file round-trip is bit-exact") {
  const TrajectoryDataset ds = small_dataset();
  const auto path = temp_path("ds.rohl");
  write_dataset(path.string(), ds);
  const TrajectoryDataset back = read_dataset(path.string());
  CHECK(back == ds);
  CHECK(encode_dataset(back) == read_file(path.string()));
  std::filesystem::remove(path);

  const TrajectoryDataset relit = relight_dataset(ds);
  CHECK(decode_dataset(encode_dataset(relit)) == relit);
}

TEST_CASE("dataset header layout") {
  const TrajectoryDataset ds = small_dataset();
  const auto bytes = encode_dataset(ds);
  REQUIRE(bytes.size() > 16);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "ROHL");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[8] == 16);   // H
  CHECK(bytes[10] == 16);  // W
  CHECK(bytes[12] == 3);   // C
  CHECK(bytes[13] == 2);   // A
  CHECK(bytes[14] == 1);   // light count
  // 4+4+2+2+1+1+1 header bytes, 9 fp32 per light, fixed-size records.
  const std::size_t header = 15 + 36;
  const std::size_t record = 4 + 4 + 1 + 1 + 2 * 20 + 2 * (768 + 8) + 8 + 4 + 1;
  CHECK(bytes.size() == header + record * ds.records.size());
}

TEST_CASE("dataset fault injection") {
  const auto good = encode_dataset(small_dataset());

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(error_code_of([&] { decode_dataset(bad_magic); }) == code(ErrorCode::kBadMagic));

  auto bad_version = good;
  bad_version[4] = 2;
  CHECK(error_code_of([&] { decode_dataset(bad_version); }) == code(ErrorCode::kVersionMismatch));

  const std::size_t header = 15 + 36;
  const std::size_t record = 4 + 4 + 1 + 1 + 2 * 20 + 2 * (768 + 8) + 8 + 4 + 1;
  std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<long>(header + 2 * record + 100));
  try {
    decode_dataset(cut);
    FAIL("truncated file decoded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTruncated);
    CHECK(std::string(e.what()).find("record 2") != std::string::npos);
  }

  std::vector<std::uint8_t> header_only(good.begin(), good.begin() + 10);
  CHECK(error_code_of([&] { decode_dataset(header_only); }) == code(ErrorCode::kTruncated));

  CHECK(error_code_of([&] { read_dataset("/nonexistent/dir/x.rohl"); }) == code(ErrorCode::kIo));
}

TEST_CASE("non-contiguous episodes are rejected") {
  TrajectoryDataset ds = small_dataset();
  std::swap(ds.records.front(), ds.records.back());
  CHECK(error_code_of([&] { encode_dataset(ds); }) == code(ErrorCode::kInvalidArgument));
}

TEST_CASE("checkpoint round-trip and faults") {
  const Agent agent = init_agent<float>(NetDims{}, 17);
  const Checkpoint ckpt = agent_to_checkpoint(agent, CheckpointMeta{1234, 0xabcdef});
  const auto path = temp_path("agent.ckpt");
  write_checkpoint(path.string(), ckpt);
  const Checkpoint back = read_checkpoint(path.string());
  std::filesystem::remove(path);
  CHECK(back == ckpt);
  CHECK(back.meta.step == 1234);
  CHECK(back.meta.config_hash == 0xabcdef);

  const Agent reloaded = agent_from_checkpoint(back);
  CHECK(checksum(reloaded) == checksum(agent));

  const auto bytes = encode_checkpoint(ckpt);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "ROHC");
  auto bad_magic = bytes;
  bad_magic[3] = 'L';
  CHECK(error_code_of([&] { decode_checkpoint(bad_magic); }) == code(ErrorCode::kBadMagic));
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK(error_code_of([&] { decode_checkpoint(bad_version); }) == code(ErrorCode::kVersionMismatch));
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 20);
  CHECK(error_code_of([&] { decode_checkpoint(cut); }) == code(ErrorCode::kTruncated));

  Checkpoint missing = ckpt;
  const std::string dropped = missing.arrays[3].name;
  missing.arrays.erase(missing.arrays.begin() + 3);
  try {
    agent_from_checkpoint(missing);
    FAIL("missing array accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingEntry);
    CHECK(std::string(e.what()).find(dropped) != std::string::npos);
  }
}
