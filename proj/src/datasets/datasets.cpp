#include "datasets/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <unordered_set>

namespace rohil {

namespace {

constexpr std::array<char, 4> kDatasetMagic{'R', 'O', 'H', 'L'};
constexpr std::array<char, 4> kCheckpointMagic{'R', 'O', 'H', 'C'};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

// Little-endian cursor. Reading past the end throws a truncation error built
// by the caller-supplied context.
class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  std::size_t remaining() const noexcept { return buf_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == buf_.size(); }
  void set_context(std::string ctx) { ctx_ = std::move(ctx); }

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail(ErrorCode::kTruncated, "truncated " + ctx_);
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
  std::string ctx_ = "file";
};

void write_light(ByteWriter& w, const Illumination& l) {
  w.f32(l.ambient);
  w.f32(l.diffuse);
  w.f32(l.phi);
  w.f32(l.spec_center[0]);
  w.f32(l.spec_center[1]);
  w.f32(l.spec_strength);
  for (float g : l.gains) w.f32(g);
}

Illumination read_light(ByteReader& r) {
  Illumination l;
  l.ambient = r.f32();
  l.diffuse = r.f32();
  l.phi = r.f32();
  l.spec_center[0] = r.f32();
  l.spec_center[1] = r.f32();
  l.spec_strength = r.f32();
  for (float& g : l.gains) g = r.f32();
  return l;
}

void write_state(ByteWriter& w, const WorldState& s) {
  w.f32(s.agent[0]);
  w.f32(s.agent[1]);
  w.f32(s.target[0]);
  w.f32(s.target[1]);
  w.u32(s.step);
}

WorldState read_state(ByteReader& r) {
  WorldState s;
  s.agent[0] = r.f32();
  s.agent[1] = r.f32();
  s.target[0] = r.f32();
  s.target[1] = r.f32();
  s.step = r.u32();
  return s;
}

void write_obs(ByteWriter& w, const Observation& o) {
  w.bytes(o.image.data(), o.image.size());
  w.f32(o.proprio[0]);
  w.f32(o.proprio[1]);
}

Observation read_obs(ByteReader& r) {
  Observation o;
  r.bytes(o.image.data(), o.image.size());
  o.proprio[0] = r.f32();
  o.proprio[1] = r.f32();
  return o;
}

void validate_dataset(const TrajectoryDataset& ds) {
  if (ds.lights.empty() || ds.lights.size() > 255) {
    fail(ErrorCode::kInvalidArgument, "dataset: light table must hold 1..255 entries");
  }
  std::unordered_set<std::uint32_t> closed;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const Transition& t = ds.records[i];
    if (t.light >= ds.lights.size()) {
      fail(ErrorCode::kInvalidArgument, "dataset: record " + std::to_string(i) + " light tag " +
                                            std::to_string(t.light) + " outside light table");
    }
    if (i > 0 && ds.records[i - 1].episode != t.episode) {
      closed.insert(ds.records[i - 1].episode);
      if (closed.contains(t.episode)) {
        fail(ErrorCode::kInvalidArgument, "dataset: episode " + std::to_string(t.episode) + " is not contiguous");
      }
    }
  }
}

void check_magic(ByteReader& r, const std::array<char, 4>& magic, const char* what) {
  std::array<char, 4> got{};
  r.set_context(std::string(what) + " header");
  r.bytes(got.data(), got.size());
  if (got != magic) fail(ErrorCode::kBadMagic, std::string(what) + ": bad magic");
}

void check_version(ByteReader& r, std::uint32_t expected, const char* what) {
  const std::uint32_t v = r.u32();
  if (v != expected) {
    fail(ErrorCode::kVersionMismatch, std::string(what) + ": version mismatch (file " + std::to_string(v) +
                                          ", expected " + std::to_string(expected) + ")");
  }
}

}  // namespace

// ---- intervention ---------------------------------------------------------------

void InterventionTracker::reset(float initial_distance) {
  best_ = initial_distance;
  stalled_ = 0;
  active_ = rule_.enabled && rule_.stall_window == 0;
}

bool InterventionTracker::observe(float distance) {
  if (!rule_.enabled || active_) return active_;
  if (distance < best_) {
    best_ = distance;
    stalled_ = 0;
  } else if (++stalled_ >= rule_.stall_window) {
    active_ = true;
  }
  return active_;
}

// ---- recording ------------------------------------------------------------------

EpisodeRecorder::EpisodeRecorder(const LitWorld& env, InterventionRule rule) : env_(&env), tracker_(rule) {}

void EpisodeRecorder::begin(std::uint64_t seed, std::uint32_t episode_id) {
  ResetResult r = env_->reset(seed);
  state_ = r.state;
  obs_ = r.obs;
  episode_ = episode_id;
  tracker_.reset(distance(state_.agent, state_.target));
  finished_ = false;
  success_ = false;
  intervened_ = false;
}

const Transition& EpisodeRecorder::step(const Action& policy_action) {
  if (finished_) fail(ErrorCode::kInvalidArgument, "EpisodeRecorder: step after episode end");
  const bool expert = tracker_.active();
  const Action action = expert ? expert_action(state_, env_->config()) : policy_action;
  StepResult r = env_->step(state_, action);

  last_ = Transition{};
  last_.episode = episode_;
  last_.step = state_.step;
  last_.light = kSourceLight;
  last_.source = expert ? ActionSource::kExpert : ActionSource::kPolicy;
  last_.state = state_;
  last_.obs = obs_;
  for (std::size_t d = 0; d < kActionDim; ++d) last_.action[d] = std::clamp(action[d], -1.0f, 1.0f);
  last_.reward = r.reward;
  last_.next_obs = r.obs;
  last_.next_state = r.state;
  last_.done = r.done;

  intervened_ = intervened_ || expert;
  state_ = r.state;
  obs_ = r.obs;
  success_ = r.done;
  finished_ = r.done || r.truncated;
  if (!finished_) tracker_.observe(distance(state_.agent, state_.target));
  return last_;
}

EpisodeRecord record_episode(const LitWorld& env, const PolicyFn* policy, std::uint64_t seed,
                             std::uint32_t episode_id, InterventionRule rule) {
  EpisodeRecord out;
  if (policy == nullptr) {
    // Expert from the first step: an immediate-takeover rule.
    rule.enabled = true;
    rule.stall_window = 0;
  }
  EpisodeRecorder rec(env, rule);
  rec.begin(seed, episode_id);
  if (policy == nullptr) {
    while (!rec.finished()) out.transitions.push_back(rec.step(Action{}));
  } else {
    while (!rec.finished()) out.transitions.push_back(rec.step((*policy)(rec.observation())));
  }
  out.success = rec.success();
  out.intervened = rec.intervened();
  return out;
}

// ---- relighting -----------------------------------------------------------------

TrajectoryDataset relight_dataset(const TrajectoryDataset& source, const RelightOptions& options) {
  for (const auto& l : options.lights) validate_light(l);
  TrajectoryDataset out;
  out.lights.push_back(source.lights.empty() ? default_source_light() : source.lights.front());
  out.lights.insert(out.lights.end(), options.lights.begin(), options.lights.end());
  out.records.reserve(source.records.size() * options.lights.size());

  std::mt19937_64 noise_rng(options.noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto perturb = [&](Image& img) {
    if (options.pixel_noise <= 0.0) return;
    for (auto& px : img) {
      const double v = std::round(static_cast<double>(px) + options.pixel_noise * noise(noise_rng));
      px = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  };

  std::size_t begin = 0;
  while (begin < source.records.size()) {
    std::size_t end = begin;
    while (end < source.records.size() && source.records[end].episode == source.records[begin].episode) ++end;
    for (std::size_t k = 0; k < options.lights.size(); ++k) {
      for (std::size_t i = begin; i < end; ++i) {
        const Transition& src = source.records[i];
        if (src.relit()) {
          fail(ErrorCode::kInvalidArgument, "relight_dataset: record " + std::to_string(i) + " is already relit");
        }
        if (!src.has_state()) {
          fail(ErrorCode::kMissingState, "relight_dataset: record " + std::to_string(i) +
                                             " has no world state; cannot relight");
        }
        Transition t = src;
        t.light = static_cast<LightTag>(k + 1);
        t.obs.image = render(src.state, options.lights[k]);
        t.next_obs.image = render(src.next_state, options.lights[k]);
        perturb(t.obs.image);
        perturb(t.next_obs.image);
        out.records.push_back(t);
      }
    }
    begin = end;
  }
  return out;
}

// ---- dataset files --------------------------------------------------------------

std::vector<std::uint8_t> encode_dataset(const TrajectoryDataset& ds) {
  validate_dataset(ds);
  ByteWriter w;
  w.bytes(kDatasetMagic.data(), kDatasetMagic.size());
  w.u32(kDatasetVersion);
  w.u16(static_cast<std::uint16_t>(kImageH));
  w.u16(static_cast<std::uint16_t>(kImageW));
  w.u8(static_cast<std::uint8_t>(kChannels));
  w.u8(static_cast<std::uint8_t>(kActionDim));
  w.u8(static_cast<std::uint8_t>(ds.lights.size()));
  for (const auto& l : ds.lights) write_light(w, l);
  for (const Transition& t : ds.records) {
    w.u32(t.episode);
    w.u32(t.step);
    w.u8(t.light);
    w.u8(static_cast<std::uint8_t>(t.source));
    write_state(w, t.state);
    write_state(w, t.next_state);
    write_obs(w, t.obs);
    write_obs(w, t.next_obs);
    for (float a : t.action) w.f32(a);
    w.f32(t.reward);
    w.u8(t.done ? 1 : 0);
  }
  return w.take();
}

TrajectoryDataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  check_magic(r, kDatasetMagic, "dataset");
  check_version(r, kDatasetVersion, "dataset");
  const std::uint16_t h = r.u16();
  const std::uint16_t wd = r.u16();
  const std::uint8_t c = r.u8();
  const std::uint8_t a = r.u8();
  if (h != kImageH || wd != kImageW || c != kChannels || a != kActionDim) {
    fail(ErrorCode::kShapeMismatch, "dataset: header shape " + std::to_string(h) + "x" + std::to_string(wd) + "x" +
                                        std::to_string(c) + " action " + std::to_string(a) + " unsupported");
  }
  TrajectoryDataset ds;
  const std::uint8_t count = r.u8();
  for (std::uint8_t i = 0; i < count; ++i) ds.lights.push_back(read_light(r));

  for (std::size_t index = 0; !r.at_end(); ++index) {
    r.set_context("dataset record " + std::to_string(index));
    Transition t;
    t.episode = r.u32();
    t.step = r.u32();
    t.light = r.u8();
    const std::uint8_t src = r.u8();
    if (src > 1) fail(ErrorCode::kInvalidArgument, "dataset record " + std::to_string(index) + ": bad action source");
    t.source = static_cast<ActionSource>(src);
    t.state = read_state(r);
    t.next_state = read_state(r);
    t.obs = read_obs(r);
    t.next_obs = read_obs(r);
    for (float& v : t.action) v = r.f32();
    t.reward = r.f32();
    const std::uint8_t done = r.u8();
    if (done > 1) fail(ErrorCode::kInvalidArgument, "dataset record " + std::to_string(index) + ": bad done flag");
    t.done = done == 1;
    ds.records.push_back(t);
  }
  validate_dataset(ds);
  return ds;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "short write to " + path);
}

void write_dataset(const std::string& path, const TrajectoryDataset& ds) { write_file(path, encode_dataset(ds)); }

TrajectoryDataset read_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

// ---- checkpoints ----------------------------------------------------------------

const NamedArray& Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  fail(ErrorCode::kMissingEntry, "checkpoint: missing array '" + name + "'");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const NamedArray& a : ckpt.arrays) {
    if (a.name.size() > 0xFFFF || a.shape.empty() || a.shape.size() > 255 || shape_size(a.shape) != a.values.size()) {
      fail(ErrorCode::kInvalidArgument, "checkpoint: malformed array '" + a.name + "'");
    }
    w.u16(static_cast<std::uint16_t>(a.name.size()));
    w.bytes(a.name.data(), a.name.size());
    w.u8(static_cast<std::uint8_t>(a.shape.size()));
    for (std::size_t e : a.shape) w.u32(static_cast<std::uint32_t>(e));
    for (float v : a.values) w.f32(v);
  }
  w.u64(ckpt.meta.step);
  w.u64(ckpt.meta.config_hash);
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  check_magic(r, kCheckpointMagic, "checkpoint");
  check_version(r, kCheckpointVersion, "checkpoint");
  Checkpoint ckpt;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    r.set_context("checkpoint entry " + std::to_string(i));
    NamedArray a;
    a.name.resize(r.u16());
    r.bytes(a.name.data(), a.name.size());
    const std::uint8_t rank = r.u8();
    if (rank == 0) fail(ErrorCode::kInvalidArgument, "checkpoint entry " + std::to_string(i) + ": rank 0");
    for (std::uint8_t d = 0; d < rank; ++d) a.shape.push_back(r.u32());
    const std::size_t n = shape_size(a.shape);
    if (n * 4 > r.remaining()) fail(ErrorCode::kTruncated, "truncated checkpoint entry " + std::to_string(i));
    a.values.resize(n);
    for (float& v : a.values) v = r.f32();
    ckpt.arrays.push_back(std::move(a));
  }
  r.set_context("checkpoint metadata");
  ckpt.meta.step = r.u64();
  ckpt.meta.config_hash = r.u64();
  if (!r.at_end()) fail(ErrorCode::kInvalidArgument, "checkpoint: trailing bytes after metadata");
  return ckpt;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) { write_file(path, encode_checkpoint(ckpt)); }

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

Checkpoint agent_to_checkpoint(const Agent& agent, CheckpointMeta meta) {
  Checkpoint ckpt;
  ckpt.meta = meta;
  visit_params(agent, [&ckpt](const std::string& name, const Tensor<float>& t) {
    ckpt.arrays.push_back({name, t.shape(), std::vector<float>(t.values().begin(), t.values().end())});
  });
  return ckpt;
}

Agent agent_from_checkpoint(const Checkpoint& ckpt) {
  const NamedArray& enc_hidden = ckpt.find("encoder.hidden.weight");
  const NamedArray& enc_out = ckpt.find("encoder.out.weight");
  const NamedArray& actor_hidden = ckpt.find("actor.hidden.weight");
  const NamedArray& actor_mean = ckpt.find("actor.mean.weight");
  const NamedArray& critic_hidden = ckpt.find("critic1.hidden.weight");
  for (const NamedArray* a : {&enc_hidden, &enc_out, &actor_hidden, &actor_mean, &critic_hidden}) {
    if (a->shape.size() != 2) fail(ErrorCode::kShapeMismatch, "checkpoint: '" + a->name + "' must be rank 2");
  }
  NetDims dims;
  dims.input = enc_hidden.shape[0];
  dims.encoder_hidden = enc_hidden.shape[1];
  dims.feature = enc_out.shape[1];
  dims.actor_hidden = actor_hidden.shape[1];
  dims.action = actor_mean.shape[1];
  dims.critic_hidden = critic_hidden.shape[1];

  Agent agent = init_agent<float>(dims, 0);
  visit_params(agent, [&ckpt](const std::string& name, Tensor<float>& t) {
    const NamedArray& a = ckpt.find(name);
    if (a.shape != t.shape()) {
      fail(ErrorCode::kShapeMismatch, "checkpoint: '" + name + "' has shape " + shape_str(a.shape) + ", expected " +
                                          shape_str(t.shape()));
    }
    t = Tensor<float>(a.shape, a.values);
  });
  return agent;
}

}  // namespace rohil
