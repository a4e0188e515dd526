#pragma once

#include <set>
#include <string>
#include <vector>

#include "infnet/data.hpp"
#include "infnet/model.hpp"
#include "infnet/schema.hpp"
#include "infnet/train_config.hpp"

namespace infnet {

/// Flat `key = value` configuration with `#` comments. Unknown keys are
/// errors; every value is validated against its domain before any command
/// does work. Overrides ("key=value" strings) apply after the file, last
/// one wins.
struct RunConfig {
  FeatureSchema schema;
  TrainConfig train;
  double synth_noise = 0.05;
  std::size_t synth_train = 20000;
  std::size_t synth_val = 5000;
  std::size_t synth_test = 5000;
  std::size_t synth_users = 0;
  std::uint64_t synth_seed = 7;
  std::string data_dir = "data";
  std::string out_dir = "out";

  /// Keys that were explicitly assigned (file or override).
  std::set<std::string> keys_seen;

  static RunConfig defaults();

  /// Parse path (empty = defaults only), then apply overrides, then
  /// validate everything.
  static RunConfig load(const std::string& path,
                        const std::vector<std::string>& overrides);

  void apply(const std::string& key, const std::string& value);
  void validate() const;

  bool declared(const std::string& key) const { return keys_seen.count(key) > 0; }
  bool schema_declared() const;

  SyntheticSpec synthetic_spec() const;
  ModelConfig model_config() const;
};

}  // namespace infnet
