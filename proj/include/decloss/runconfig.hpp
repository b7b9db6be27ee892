#pragma once

#include <iosfwd>
#include <string>

#include "json.hpp"

#include "decloss/icoo.hpp"
#include "decloss/loss.hpp"
#include "decloss/srtoy.hpp"

namespace decloss {

// One run's worth of settings, covering every configurable struct. The file
// format is flat `key = value` lines with `#` comments; keys use dotted
// prefixes (enhance.alpha, contrast.eta, icoo.rounds, weights.w1, train.batch).
// CLI flags are applied on top of file values, which sit on top of defaults.
struct RunConfig {
  EnhanceConfig enhance;
  ContrastConfig contrast;
  IcooConfig icoo;
  LossWeights weights;
  TrainConfig train;

  // train with the shared enhance/contrast/weights sections folded in, so a
  // single document configures both standalone evaluation and training.
  TrainConfig train_config() const;
};

// Applies one key/value pair. Unknown keys and unparseable values raise
// ConfigError; silence would let typos pass as defaults.
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

// Applies a whole document on top of cfg; errors are prefixed
// "<source>:<line>:". Duplicate keys within one document are an error.
void apply_run_config(RunConfig& cfg, std::istream& in, const std::string& source);
RunConfig parse_run_config(std::istream& in, const std::string& source);
RunConfig load_run_config(const std::string& path);

// Flat JSON object in the same dotted-key space, embedded in every JSON
// report so the run can be reproduced from its own output.
nlohmann::json config_echo(const RunConfig& cfg);

}  // namespace decloss
