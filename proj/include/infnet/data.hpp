#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "infnet/schema.hpp"

namespace infnet {

/// An in-memory split: the data-facing schema plus validated examples in
/// file order.
struct Dataset {
  FeatureSchema schema;
  std::vector<Example> examples;
};

/// Text format, one record per line:
///   schema M=<int> F=<int> d_irrelevant cards=<..> lens=<..> vocabs=<..> tasks=<int>
///   user=<id>|cat=<..>|seq1=<..>|...|seqF=<..>|labels=<..>|mask=<..>
/// Lists are comma separated; an empty sequence has nothing after '='.
/// Indices are 1-based. The literal d_irrelevant token marks that the
/// embedding dimension is model configuration, not data.
void write_dataset(const std::string& path, const FeatureSchema& schema,
                   const std::vector<Example>& examples);

/// Parses and validates a dataset file. Malformed or out-of-schema lines
/// raise DataError naming the line; filesystem problems raise IoError. The
/// returned schema carries default model dims (overlay config before use).
Dataset read_dataset(const std::string& path);

std::string format_example(const Example& ex);

/// Synthetic generation spec. Task i's clean label is
///   [field a_i's value is in a planted subset] AND
///   [behavior b_i's sequence contains a planted item],
/// with (a_i, b_i) distinct per task, then flipped with probability
/// noise_rate. Sequence lengths are uniform on {1..n_a}.
struct SyntheticSpec {
  FeatureSchema schema;
  std::uint64_t seed = 7;
  double noise_rate = 0.05;
  std::size_t train_examples = 20000;
  std::size_t val_examples = 5000;
  std::size_t test_examples = 5000;
  std::size_t num_users = 0;  // 0 = examples/20 per split

  void validate() const;
};

struct PlantedRule {
  std::size_t field = 0;                // a_i
  std::size_t behavior = 0;             // b_i
  std::vector<std::uint8_t> cat_subset;  // flag per categorical value (0-based)
  std::vector<std::uint8_t> item_subset; // flag per item id (0-based)
  double base_rate = 0.0;               // analytic P(clean label = 1)
  double auc_ceiling = 0.0;             // analytic best AUC under label noise
};

/// Deterministic rule placement. Throws DataError when the schema cannot
/// host one distinct field per task.
std::vector<PlantedRule> plant_rules(const SyntheticSpec& spec);

/// Clean (pre-noise) rule evaluation; the oracle classifier for tests.
int rule_label(const PlantedRule& rule, const Example& ex);

/// Best achievable AUC when scores can depend only on features: the clean
/// rule ranked against noise-flipped labels.
double noisy_ceiling(double base_rate, double noise_rate);

struct SyntheticData {
  std::vector<PlantedRule> rules;
  Dataset train, val, test;
};

/// Splits draw from disjoint seed streams; same spec and seed, same bytes.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace infnet
