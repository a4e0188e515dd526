#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "infnet/error.hpp"

namespace infnet {

/// Declarative description of the input space plus the model-side token
/// dimensions. The data fields (fields/cards/behaviors/lens/vocabs/tasks)
/// round-trip through dataset files; embed_dim and the proxy counts are
/// model configuration and never stored with data.
struct FeatureSchema {
  std::size_t num_fields = 0;                 // M categorical fields
  std::vector<std::size_t> cardinalities;     // V_j per field
  std::size_t num_behaviors = 0;              // F behavior sequence types
  std::vector<std::size_t> max_lens;          // n_a per behavior
  std::vector<std::size_t> seq_vocabs;        // item vocabulary per behavior
  std::size_t num_tasks = 0;
  std::size_t embed_dim = 0;                  // d
  std::size_t num_cat_proxies = 4;            // m
  std::size_t num_shared_tokens = 2;          // N_s

  /// L: total sequence row count after padding/truncation.
  std::size_t total_seq_len() const {
    std::size_t l = 0;
    for (std::size_t n : max_lens) l += n;
    return l;
  }

  void validate() const;

  /// True when the data-facing fields agree (model dims ignored).
  bool data_compatible(const FeatureSchema& other) const {
    return num_fields == other.num_fields && cardinalities == other.cardinalities &&
           num_behaviors == other.num_behaviors && max_lens == other.max_lens &&
           seq_vocabs == other.seq_vocabs && num_tasks == other.num_tasks;
  }

  bool operator==(const FeatureSchema&) const = default;
};

/// One labeled interaction. Categorical values and sequence item ids are
/// 1-based, matching the dataset text format.
struct Example {
  std::string user_id;
  std::vector<std::size_t> categorical;             // size M
  std::vector<std::vector<std::size_t>> sequences;  // size F, variable lengths
  std::vector<int> labels;                          // size N_task, 0/1
  std::vector<std::uint8_t> label_mask;             // size N_task, 1 = observed
};

/// Throws DataError naming the offending field/behavior. line_no, when
/// nonzero, is included for dataset diagnostics.
void validate_example(const Example& ex, const FeatureSchema& schema,
                      std::size_t line_no = 0);

}  // namespace infnet
