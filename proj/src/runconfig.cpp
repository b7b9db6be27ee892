#include "decloss/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace decloss {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config: key '" + key + "' needs " + want + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  bad_value(key, value, "a number");
}

Index to_index(const std::string& key, const std::string& value) {
  Index v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    bad_value(key, value, "a non-negative integer");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t\r");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r");
  return s.substr(from, to - from + 1);
}

}  // namespace

void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "enhance.alpha") {
    cfg.enhance.alpha = to_double(key, value);
  } else if (key == "enhance.mu") {
    if (value == "auto") {
      cfg.enhance.mu.reset();  // back to the per-extent n/4 default
    } else {
      cfg.enhance.mu = to_double(key, value);
    }
  } else if (key == "enhance.inverse") {
    if (value == "exact") {
      cfg.enhance.inverse = InverseMode::exact;
    } else if (value == "real_matrix") {
      cfg.enhance.inverse = InverseMode::real_matrix;
    } else {
      bad_value(key, value, "'exact' or 'real_matrix'");
    }
  } else if (key == "contrast.patch_size") {
    cfg.contrast.patch_size = to_index(key, value);
  } else if (key == "contrast.eta") {
    cfg.contrast.eta = to_double(key, value);
  } else if (key == "contrast.t_pos") {
    cfg.contrast.t_pos = to_double(key, value);
  } else if (key == "contrast.t_neg") {
    cfg.contrast.t_neg = to_double(key, value);
  } else if (key == "contrast.temp_mode") {
    if (value == "inside_exp") {
      cfg.contrast.temp_mode = TempMode::inside_exp;
    } else if (value == "outside_exp") {
      cfg.contrast.temp_mode = TempMode::outside_exp;
    } else {
      bad_value(key, value, "'inside_exp' or 'outside_exp'");
    }
  } else if (key == "contrast.max_value") {
    cfg.contrast.max_value = to_double(key, value);
  } else if (key == "contrast.mask_clamp") {
    cfg.contrast.mask_clamp = to_double(key, value);
  } else if (key == "contrast.cos_epsilon") {
    cfg.contrast.cos_epsilon = to_double(key, value);
  } else if (key == "weights.w1") {
    cfg.weights.w1 = to_double(key, value);
  } else if (key == "weights.w2") {
    cfg.weights.w2 = to_double(key, value);
  } else if (key == "weights.w3") {
    cfg.weights.w3 = to_double(key, value);
  } else if (key == "icoo.patch_size") {
    cfg.icoo.patch_size = to_index(key, value);
  } else if (key == "icoo.sr_patches") {
    cfg.icoo.sr_patches = to_index(key, value);
  } else if (key == "icoo.hr_patches") {
    cfg.icoo.hr_patches = to_index(key, value);
  } else if (key == "icoo.rounds") {
    cfg.icoo.rounds = to_index(key, value);
  } else if (key == "icoo.distance_clamp") {
    cfg.icoo.distance_clamp = to_double(key, value);
  } else if (key == "icoo.nearest_k") {
    cfg.icoo.nearest_k = to_index(key, value);
  } else if (key == "icoo.seed") {
    cfg.icoo.seed = to_u64(key, value);
  } else if (key == "icoo.average_before_log") {
    cfg.icoo.average_before_log = to_bool(key, value);
  } else if (key == "train.epochs_phase1") {
    cfg.train.epochs_phase1 = to_index(key, value);
  } else if (key == "train.epochs_phase2") {
    cfg.train.epochs_phase2 = to_index(key, value);
  } else if (key == "train.steps_per_epoch") {
    cfg.train.steps_per_epoch = to_index(key, value);
  } else if (key == "train.lr_phase1") {
    cfg.train.lr_phase1 = to_double(key, value);
  } else if (key == "train.lr_phase2") {
    cfg.train.lr_phase2 = to_double(key, value);
  } else if (key == "train.beta1") {
    cfg.train.beta1 = to_double(key, value);
  } else if (key == "train.beta2") {
    cfg.train.beta2 = to_double(key, value);
  } else if (key == "train.adam_eps") {
    cfg.train.adam_eps = to_double(key, value);
  } else if (key == "train.batch") {
    cfg.train.batch = to_index(key, value);
  } else if (key == "train.lr_crop") {
    cfg.train.lr_crop = to_index(key, value);
  } else if (key == "train.hr_crop") {
    cfg.train.hr_crop = to_index(key, value);
  } else if (key == "train.scale") {
    cfg.train.scale = to_index(key, value);
  } else if (key == "train.hidden") {
    cfg.train.hidden = to_index(key, value);
  } else if (key == "train.seed") {
    cfg.train.seed = to_u64(key, value);
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

void apply_run_config(RunConfig& cfg, std::istream& in, const std::string& source) {
  std::set<std::string> seen;
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = source + ":" + std::to_string(lineno) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key before '='");
    if (value.empty()) throw ConfigError(where + "missing value for '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      set_config_key(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  apply_run_config(cfg, in, source);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open config file");
  return parse_run_config(in, path);
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.enhance = enhance;
  t.contrast = contrast;
  t.weights = weights;
  return t;
}

nlohmann::json config_echo(const RunConfig& cfg) {
  nlohmann::json j;
  j["enhance.alpha"] = cfg.enhance.alpha;
  if (cfg.enhance.mu) {
    j["enhance.mu"] = *cfg.enhance.mu;
  } else {
    j["enhance.mu"] = "auto";
  }
  j["enhance.inverse"] = cfg.enhance.inverse == InverseMode::exact ? "exact" : "real_matrix";
  j["contrast.patch_size"] = cfg.contrast.patch_size;
  j["contrast.eta"] = cfg.contrast.eta;
  j["contrast.t_pos"] = cfg.contrast.t_pos;
  j["contrast.t_neg"] = cfg.contrast.t_neg;
  j["contrast.temp_mode"] =
      cfg.contrast.temp_mode == TempMode::inside_exp ? "inside_exp" : "outside_exp";
  j["contrast.max_value"] = cfg.contrast.max_value;
  j["contrast.mask_clamp"] = cfg.contrast.mask_clamp;
  j["contrast.cos_epsilon"] = cfg.contrast.cos_epsilon;
  j["weights.w1"] = cfg.weights.w1;
  j["weights.w2"] = cfg.weights.w2;
  j["weights.w3"] = cfg.weights.w3;
  j["icoo.patch_size"] = cfg.icoo.patch_size;
  j["icoo.sr_patches"] = cfg.icoo.sr_patches;
  j["icoo.hr_patches"] = cfg.icoo.hr_patches;
  j["icoo.rounds"] = cfg.icoo.rounds;
  j["icoo.distance_clamp"] = cfg.icoo.distance_clamp;
  j["icoo.nearest_k"] = cfg.icoo.nearest_k;
  j["icoo.seed"] = cfg.icoo.seed;
  j["icoo.average_before_log"] = cfg.icoo.average_before_log;
  j["train.epochs_phase1"] = cfg.train.epochs_phase1;
  j["train.epochs_phase2"] = cfg.train.epochs_phase2;
  j["train.steps_per_epoch"] = cfg.train.steps_per_epoch;
  j["train.lr_phase1"] = cfg.train.lr_phase1;
  j["train.lr_phase2"] = cfg.train.lr_phase2;
  j["train.beta1"] = cfg.train.beta1;
  j["train.beta2"] = cfg.train.beta2;
  j["train.adam_eps"] = cfg.train.adam_eps;
  j["train.batch"] = cfg.train.batch;
  j["train.lr_crop"] = cfg.train.lr_crop;
  j["train.hr_crop"] = cfg.train.hr_crop;
  j["train.scale"] = cfg.train.scale;
  j["train.hidden"] = cfg.train.hidden;
  j["train.seed"] = cfg.train.seed;
  return j;
}

}  // namespace decloss
