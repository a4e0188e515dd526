#include "infnet/schema.hpp"

namespace infnet {

void FeatureSchema::validate() const {
  if (num_fields < 1) throw ConfigError("schema: need at least one categorical field");
  if (cardinalities.size() != num_fields) {
    throw ConfigError("schema: expected " + std::to_string(num_fields) +
                      " cardinalities, got " + std::to_string(cardinalities.size()));
  }
  for (std::size_t j = 0; j < num_fields; ++j) {
    if (cardinalities[j] < 1) {
      throw ConfigError("schema: field " + std::to_string(j) + " has cardinality 0");
    }
  }
  if (num_behaviors < 1) throw ConfigError("schema: need at least one behavior type");
  if (max_lens.size() != num_behaviors || seq_vocabs.size() != num_behaviors) {
    throw ConfigError("schema: lens/vocabs must both have one entry per behavior");
  }
  for (std::size_t a = 0; a < num_behaviors; ++a) {
    if (max_lens[a] < 1) {
      throw ConfigError("schema: behavior " + std::to_string(a) + " has max length 0");
    }
    if (seq_vocabs[a] < 1) {
      throw ConfigError("schema: behavior " + std::to_string(a) + " has empty vocabulary");
    }
  }
  if (num_tasks < 1) throw ConfigError("schema: need at least one task");
  if (embed_dim < 1) throw ConfigError("schema: embedding dimension must be >= 1");
  if (num_cat_proxies < 1) throw ConfigError("schema: need at least one categorical proxy");
  if (num_shared_tokens < 1) throw ConfigError("schema: need at least one shared task token");
}

void validate_example(const Example& ex, const FeatureSchema& schema,
                      std::size_t line_no) {
  auto where = [line_no]() {
    return line_no ? " (line " + std::to_string(line_no) + ")" : std::string();
  };
  if (ex.categorical.size() != schema.num_fields) {
    throw DataError("example: expected " + std::to_string(schema.num_fields) +
                    " categorical values, got " + std::to_string(ex.categorical.size()) +
                    where());
  }
  for (std::size_t j = 0; j < schema.num_fields; ++j) {
    const std::size_t v = ex.categorical[j];
    if (v < 1 || v > schema.cardinalities[j]) {
      throw DataError("example: field " + std::to_string(j) + " value " +
                      std::to_string(v) + " outside [1, " +
                      std::to_string(schema.cardinalities[j]) + "]" + where());
    }
  }
  if (ex.sequences.size() != schema.num_behaviors) {
    throw DataError("example: expected " + std::to_string(schema.num_behaviors) +
                    " behavior sequences, got " + std::to_string(ex.sequences.size()) +
                    where());
  }
  for (std::size_t a = 0; a < schema.num_behaviors; ++a) {
    for (std::size_t item : ex.sequences[a]) {
      if (item < 1 || item > schema.seq_vocabs[a]) {
        throw DataError("example: behavior " + std::to_string(a) + " item " +
                        std::to_string(item) + " outside [1, " +
                        std::to_string(schema.seq_vocabs[a]) + "]" + where());
      }
    }
  }
  if (ex.labels.size() != schema.num_tasks || ex.label_mask.size() != schema.num_tasks) {
    throw DataError("example: labels/mask must have one entry per task" + where());
  }
  for (int l : ex.labels) {
    if (l != 0 && l != 1) {
      throw DataError("example: label must be 0 or 1, got " + std::to_string(l) + where());
    }
  }
}

}  // namespace infnet
