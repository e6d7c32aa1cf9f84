#include "harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "datasets/datasets.hpp"

namespace rohil {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

[[noreturn]] void config_error(const std::string& msg) { fail(ErrorCode::kConfig, "config: " + msg); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) config_error(key + ": '" + text + "' is not a number");
  return v;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) config_error(key + ": '" + text + "' is not a nonnegative integer");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  config_error(key + ": '" + text + "' is not a boolean");
}

struct Field {
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

using FieldTable = std::map<std::string, Field>;

template <typename Member>
Field real_field(Member member) {
  return {[member](Config& c, const std::string& v) {
            auto& ref = member(c);
            ref = static_cast<std::remove_reference_t<decltype(ref)>>(parse_number("", v));
          },
          [member](const Config& c) { return format_double(static_cast<double>(member(const_cast<Config&>(c)))); }};
}

template <typename Member>
Field unsigned_field(Member member) {
  return {[member](Config& c, const std::string& v) {
            auto& ref = member(c);
            using U = std::remove_reference_t<decltype(ref)>;
            const std::uint64_t x = parse_unsigned("", v);
            if (x > std::numeric_limits<U>::max()) config_error("value " + v + " out of range");
            ref = static_cast<U>(x);
          },
          [member](const Config& c) { return std::to_string(member(const_cast<Config&>(c))); }};
}

void add_light(FieldTable& t, const std::string& prefix, std::function<Illumination&(Config&)> light) {
  t[prefix + ".ambient"] = real_field([light](Config& c) -> float& { return light(c).ambient; });
  t[prefix + ".diffuse"] = real_field([light](Config& c) -> float& { return light(c).diffuse; });
  t[prefix + ".phi"] = real_field([light](Config& c) -> float& { return light(c).phi; });
  t[prefix + ".spec_x"] = real_field([light](Config& c) -> float& { return light(c).spec_center[0]; });
  t[prefix + ".spec_y"] = real_field([light](Config& c) -> float& { return light(c).spec_center[1]; });
  t[prefix + ".spec_strength"] = real_field([light](Config& c) -> float& { return light(c).spec_strength; });
  t[prefix + ".gain_r"] = real_field([light](Config& c) -> float& { return light(c).gains[0]; });
  t[prefix + ".gain_g"] = real_field([light](Config& c) -> float& { return light(c).gains[1]; });
  t[prefix + ".gain_b"] = real_field([light](Config& c) -> float& { return light(c).gains[2]; });
}

const FieldTable& fields() {
  static const FieldTable table = [] {
    FieldTable t;
    t["env.step_size"] = real_field([](Config& c) -> float& { return c.world.env.step_size; });
    t["env.success_radius"] = real_field([](Config& c) -> float& { return c.world.env.success_radius; });
    t["env.max_steps"] = unsigned_field([](Config& c) -> std::uint32_t& { return c.world.env.max_steps; });
    add_light(t, "light.source", [](Config& c) -> Illumination& { return c.world.source; });
    add_light(t, "light.deploy", [](Config& c) -> Illumination& { return c.world.deploy; });
    for (std::size_t k = 0; k < 4; ++k) {
      add_light(t, "light.relight.k" + std::to_string(k + 1),
                [k](Config& c) -> Illumination& { return c.world.relight[k]; });
    }

    t["replay.alpha"] = real_field([](Config& c) -> double& { return c.replay.alpha; });
    t["replay.batch_size"] = unsigned_field([](Config& c) -> std::size_t& { return c.replay.batch_size; });
    t["replay.seed"] = unsigned_field([](Config& c) -> std::uint64_t& { return c.replay.seed; });

    t["learner.gamma"] = real_field([](Config& c) -> double& { return c.learner.gamma; });
    t["learner.eta"] = real_field([](Config& c) -> double& { return c.learner.eta; });
    t["learner.tau"] = real_field([](Config& c) -> double& { return c.learner.tau; });
    t["learner.lr"] = real_field([](Config& c) -> double& { return c.learner.lr; });
    t["learner.batch"] = unsigned_field([](Config& c) -> std::size_t& { return c.learner.batch; });
    t["learner.T"] = unsigned_field([](Config& c) -> std::uint64_t& { return c.learner.horizon; });
    t["learner.lambda_feat"] = real_field([](Config& c) -> double& { return c.learner.lambda_feat; });
    t["learner.beta_mse"] = real_field([](Config& c) -> double& { return c.learner.beta_mse; });
    t["learner.rho_end"] = real_field([](Config& c) -> double& { return c.learner.rho_end; });
    t["learner.anchor_head"] = {
        [](Config& c, const std::string& v) { c.learner.anchor = parse_anchor_head(v); },
        [](const Config& c) { return std::string(anchor_head_name(c.learner.anchor)); }};
    t["learner.seed"] = unsigned_field([](Config& c) -> std::uint64_t& { return c.learner.seed; });

    t["source.budget"] = unsigned_field([](Config& c) -> std::uint64_t& { return c.source.budget; });
    t["source.demos"] = unsigned_field([](Config& c) -> std::uint32_t& { return c.source.demos; });
    t["source.eval_every"] = unsigned_field([](Config& c) -> std::uint32_t& { return c.source.eval_every; });
    t["source.eval_episodes"] = unsigned_field([](Config& c) -> std::uint32_t& { return c.source.eval_episodes; });
    t["source.stall_window"] = unsigned_field([](Config& c) -> std::uint32_t& { return c.source.rule.stall_window; });
    t["source.interventions"] = {
        [](Config& c, const std::string& v) { c.source.rule.enabled = parse_bool("source.interventions", v); },
        [](const Config& c) { return std::string(c.source.rule.enabled ? "true" : "false"); }};

    t["eval.episodes"] = unsigned_field([](Config& c) -> std::uint32_t& { return c.eval.episodes; });
    t["eval.shift"] = real_field([](Config& c) -> double& { return c.eval.shift; });
    t["eval.seed"] = unsigned_field([](Config& c) -> std::uint64_t& { return c.eval.seed; });

    t["relight.pixel_noise"] = real_field([](Config& c) -> double& { return c.relight.pixel_noise; });
    t["relight.noise_seed"] = unsigned_field([](Config& c) -> std::uint64_t& { return c.relight.noise_seed; });
    return t;
  }();
  return table;
}

void validate_config(const Config& c) {
  try {
    validate_env(c.world.env);
    validate_light(c.world.source);
    validate_light(c.world.deploy);
    for (const Illumination& l : c.world.relight) validate_light(l);
    validate(effective_learner(c));
    shift_percent(c.eval.shift);
  } catch (const Error& e) {
    config_error(e.what());
  }
  if (c.eval.episodes == 0) config_error("eval.episodes must be positive");
  if (c.source.demos == 0) config_error("source.demos must be positive");
  if (!(c.relight.pixel_noise >= 0.0)) config_error("relight.pixel_noise must be nonnegative");
}

}  // namespace

LearnerConfig effective_learner(const Config& config) {
  LearnerConfig l = config.learner;
  l.alpha = config.replay.alpha;
  l.batch = config.replay.batch_size;
  l.replay_seed = config.replay.seed;
  return l;
}

Config parse_config(const std::string& text) {
  Config config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_error("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) config_error("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) config_error("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    if (value.empty()) config_error("line " + std::to_string(line_no) + ": empty value for '" + key + "'");
    try {
      it->second.set(config, value);
    } catch (const Error& e) {
      config_error("line " + std::to_string(line_no) + " (" + key + "): " + e.what());
    }
  }
  // learner.batch and replay.batch_size name the same quantity.
  const bool has_learner = seen.contains("learner.batch");
  const bool has_replay = seen.contains("replay.batch_size");
  if (has_learner && has_replay && config.learner.batch != config.replay.batch_size) {
    config_error("learner.batch and replay.batch_size disagree");
  }
  if (has_learner && !has_replay) config.replay.batch_size = config.learner.batch;
  if (has_replay) config.learner.batch = config.replay.batch_size;
  validate_config(config);
  return config;
}

Config load_config(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

std::string config_to_text(const Config& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  return out;
}

std::uint64_t config_hash(const Config& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_text(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rohil
