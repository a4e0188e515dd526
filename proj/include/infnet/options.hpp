#pragma once

#include <string>

#include "infnet/error.hpp"
#include "infnet/rng.hpp"

namespace infnet {

/// Component-removal variants. wo1 drops task tokens, wo2 drops the
/// within-type gated refinement, wo3 drops cross-type attention.
enum class Ablation { full, no_task_tokens, no_homogeneous, no_heterogeneous };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_task_tokens: return "wo1";
    case Ablation::no_homogeneous: return "wo2";
    case Ablation::no_heterogeneous: return "wo3";
  }
  return "?";
}

inline Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "wo1" || s == "no_task_tokens") return Ablation::no_task_tokens;
  if (s == "wo2" || s == "no_homogeneous") return Ablation::no_homogeneous;
  if (s == "wo3" || s == "no_heterogeneous") return Ablation::no_heterogeneous;
  throw ConfigError("unknown ablation mode '" + s +
                    "' (expected full, wo1, wo2 or wo3)");
}

/// Per-forward runtime knobs. Dropout is active only when training is set,
/// the rate is positive, and a generator is supplied.
struct ForwardOptions {
  bool training = false;
  double dropout = 0.0;
  Rng* dropout_rng = nullptr;

  bool dropout_active() const {
    return training && dropout > 0.0 && dropout_rng != nullptr;
  }
};

}  // namespace infnet
