#include "dagankit/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

namespace dagankit {

DepthTrainConfig RunConfig::depth_config() const {
  DepthTrainConfig d;
  d.width = d.height = resolution;
  d.steps = depth_steps;
  d.batch = depth_batch;
  d.lr = depth_lr;
  d.smoothness = smoothness;
  d.seed = seed;
  d.scenes = depth_scenes;
  d.frames_per_scene = depth_frames;
  d.photometric.alpha = photometric_alpha;
  return d;
}

GanTrainConfig RunConfig::gan_config() const {
  GanTrainConfig g;
  g.width = g.height = resolution;
  g.steps = gan_steps;
  g.lr = gan_lr;
  g.weights = weights;
  g.distance_alpha = distance_alpha;
  g.distance_surrogate = distance_surrogate;
  g.seed = seed;
  g.sequences = gan_sequences;
  g.frames_per_sequence = gan_frames;
  return g;
}

NetSizes RunConfig::net_sizes() const {
  NetSizes s;
  s.keypoints = keypoints;
  return s;
}

void RunConfig::validate() const {
  if (resolution < 16 || resolution % 16 != 0) {
    throw ConfigError("resolution must be a positive multiple of 16");
  }
  if (keypoints < 1) throw ConfigError("keypoints must be positive");
  if (sigma <= 0 || background_weight <= 0) throw ConfigError("motion field scales must be positive");
  if (photometric_alpha < 0 || photometric_alpha > 1) throw ConfigError("alpha must be in [0,1]");
  if (distance_alpha < 0) throw ConfigError("distance alpha must be nonnegative");
  weights.validate();
  if (depth_steps < 0 || gan_steps < 0) throw ConfigError("step counts must be nonnegative");
  if (depth_lr <= 0 || gan_lr <= 0) throw ConfigError("learning rates must be positive");
  if (depth_batch < 1) throw ConfigError("batch must be positive");
  if (depth_scenes < 1 || depth_frames < 2) throw ConfigError("depth corpus too small");
  if (gan_sequences < 1 || gan_frames < 2) throw ConfigError("puppet corpus too small");
}

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config key '" + key + "': bad number '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  const int i = static_cast<int>(v);
  if (v != i) throw ConfigError("config key '" + key + "': expected an integer");
  return i;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean");
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"resolution", [](RunConfig& c, const std::string& v) { c.resolution = parse_int("resolution", v); }},
      {"keypoints", [](RunConfig& c, const std::string& v) { c.keypoints = parse_int("keypoints", v); }},
      {"seed",
       [](RunConfig& c, const std::string& v) {
         c.seed = static_cast<std::uint64_t>(std::stoull(v));
       }},
      {"sigma", [](RunConfig& c, const std::string& v) { c.sigma = parse_double("sigma", v); }},
      {"background_weight",
       [](RunConfig& c, const std::string& v) {
         c.background_weight = parse_double("background_weight", v);
       }},
      {"photometric_alpha",
       [](RunConfig& c, const std::string& v) {
         c.photometric_alpha = parse_double("photometric_alpha", v);
       }},
      {"distance_alpha",
       [](RunConfig& c, const std::string& v) { c.distance_alpha = parse_double("distance_alpha", v); }},
      {"distance_surrogate",
       [](RunConfig& c, const std::string& v) { c.distance_surrogate = parse_bool("distance_surrogate", v); }},
      {"lambda_perceptual",
       [](RunConfig& c, const std::string& v) { c.weights.perceptual = parse_double("lambda_perceptual", v); }},
      {"lambda_gan",
       [](RunConfig& c, const std::string& v) { c.weights.gan = parse_double("lambda_gan", v); }},
      {"lambda_equivariance",
       [](RunConfig& c, const std::string& v) {
         c.weights.equivariance = parse_double("lambda_equivariance", v);
       }},
      {"lambda_distance",
       [](RunConfig& c, const std::string& v) { c.weights.distance = parse_double("lambda_distance", v); }},
      {"depth_steps", [](RunConfig& c, const std::string& v) { c.depth_steps = parse_int("depth_steps", v); }},
      {"depth_lr", [](RunConfig& c, const std::string& v) { c.depth_lr = parse_double("depth_lr", v); }},
      {"smoothness", [](RunConfig& c, const std::string& v) { c.smoothness = parse_double("smoothness", v); }},
      {"depth_batch", [](RunConfig& c, const std::string& v) { c.depth_batch = parse_int("depth_batch", v); }},
      {"depth_scenes", [](RunConfig& c, const std::string& v) { c.depth_scenes = parse_int("depth_scenes", v); }},
      {"depth_frames", [](RunConfig& c, const std::string& v) { c.depth_frames = parse_int("depth_frames", v); }},
      {"gan_steps", [](RunConfig& c, const std::string& v) { c.gan_steps = parse_int("gan_steps", v); }},
      {"gan_lr", [](RunConfig& c, const std::string& v) { c.gan_lr = parse_double("gan_lr", v); }},
      {"gan_sequences",
       [](RunConfig& c, const std::string& v) { c.gan_sequences = parse_int("gan_sequences", v); }},
      {"gan_frames", [](RunConfig& c, const std::string& v) { c.gan_frames = parse_int("gan_frames", v); }},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  const auto b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(cfg, value);
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    apply_config_override(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

std::string config_text(const RunConfig& cfg) {
  std::map<std::string, std::string> kv = {
      {"resolution", std::to_string(cfg.resolution)},
      {"keypoints", std::to_string(cfg.keypoints)},
      {"seed", std::to_string(cfg.seed)},
      {"sigma", num(cfg.sigma)},
      {"background_weight", num(cfg.background_weight)},
      {"photometric_alpha", num(cfg.photometric_alpha)},
      {"distance_alpha", num(cfg.distance_alpha)},
      {"distance_surrogate", cfg.distance_surrogate ? "true" : "false"},
      {"lambda_perceptual", num(cfg.weights.perceptual)},
      {"lambda_gan", num(cfg.weights.gan)},
      {"lambda_equivariance", num(cfg.weights.equivariance)},
      {"lambda_distance", num(cfg.weights.distance)},
      {"depth_steps", std::to_string(cfg.depth_steps)},
      {"depth_lr", num(cfg.depth_lr)},
      {"smoothness", num(cfg.smoothness)},
      {"depth_batch", std::to_string(cfg.depth_batch)},
      {"depth_scenes", std::to_string(cfg.depth_scenes)},
      {"depth_frames", std::to_string(cfg.depth_frames)},
      {"gan_steps", std::to_string(cfg.gan_steps)},
      {"gan_lr", num(cfg.gan_lr)},
      {"gan_sequences", std::to_string(cfg.gan_sequences)},
      {"gan_frames", std::to_string(cfg.gan_frames)},
  };
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  return os.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string text = config_text(cfg);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace dagankit
