#include "infnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "infnet/rng.hpp"

namespace infnet {

namespace {

std::string join_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::size_t> parse_uint_list(const std::string& s, std::size_t line_no,
                                         const std::string& what) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t comma = s.find(',', pos);
    const std::string tok =
        s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
      throw DataError("line " + std::to_string(line_no) + ": bad " + what +
                      " entry '" + tok + "'");
    }
    out.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::size_t parse_uint(const std::string& s, std::size_t line_no,
                       const std::string& what) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw DataError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  }
  return std::stoull(s);
}

// "key=value" -> value, enforcing the key.
std::string expect_kv(const std::string& tok, const std::string& key,
                      std::size_t line_no) {
  const std::string prefix = key + "=";
  if (tok.rfind(prefix, 0) != 0) {
    throw DataError("line " + std::to_string(line_no) + ": expected '" + key +
                    "=...', got '" + tok + "'");
  }
  return tok.substr(prefix.size());
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string::npos ? std::string::npos
                                                          : next - pos));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace

std::string format_example(const Example& ex) {
  std::string line = "user=" + ex.user_id + "|cat=" + join_list(ex.categorical);
  for (std::size_t a = 0; a < ex.sequences.size(); ++a) {
    line += "|seq" + std::to_string(a + 1) + "=" + join_list(ex.sequences[a]);
  }
  line += "|labels=";
  for (std::size_t i = 0; i < ex.labels.size(); ++i) {
    if (i) line += ',';
    line += std::to_string(ex.labels[i]);
  }
  line += "|mask=";
  for (std::size_t i = 0; i < ex.label_mask.size(); ++i) {
    if (i) line += ',';
    line += ex.label_mask[i] ? '1' : '0';
  }
  return line;
}

void write_dataset(const std::string& path, const FeatureSchema& schema,
                   const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "schema M=" << schema.num_fields << " F=" << schema.num_behaviors
      << " d_irrelevant cards=" << join_list(schema.cardinalities)
      << " lens=" << join_list(schema.max_lens)
      << " vocabs=" << join_list(schema.seq_vocabs) << " tasks=" << schema.num_tasks
      << "\n";
  std::size_t line_no = 1;
  for (const Example& ex : examples) {
    ++line_no;
    validate_example(ex, schema, line_no);
    out << format_example(ex) << "\n";
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path + "'");

  std::string header;
  if (!std::getline(in, header)) {
    throw DataError("dataset '" + path + "' is empty, missing schema header");
  }
  std::istringstream hs(header);
  std::vector<std::string> toks;
  for (std::string t; hs >> t;) toks.push_back(t);
  if (toks.size() != 8 || toks[0] != "schema" || toks[3] != "d_irrelevant") {
    throw DataError("line 1: malformed schema header '" + header + "'");
  }

  Dataset ds;
  FeatureSchema& sc = ds.schema;
  sc.num_fields = parse_uint(expect_kv(toks[1], "M", 1), 1, "M");
  sc.num_behaviors = parse_uint(expect_kv(toks[2], "F", 1), 1, "F");
  sc.cardinalities = parse_uint_list(expect_kv(toks[4], "cards", 1), 1, "cards");
  sc.max_lens = parse_uint_list(expect_kv(toks[5], "lens", 1), 1, "lens");
  sc.seq_vocabs = parse_uint_list(expect_kv(toks[6], "vocabs", 1), 1, "vocabs");
  sc.num_tasks = parse_uint(expect_kv(toks[7], "tasks", 1), 1, "tasks");
  if (sc.cardinalities.size() != sc.num_fields) {
    throw DataError("line 1: cards lists " + std::to_string(sc.cardinalities.size()) +
                    " entries for M=" + std::to_string(sc.num_fields));
  }
  if (sc.max_lens.size() != sc.num_behaviors ||
      sc.seq_vocabs.size() != sc.num_behaviors) {
    throw DataError("line 1: lens/vocabs must list F=" +
                    std::to_string(sc.num_behaviors) + " entries");
  }

  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> parts = split(line, '|');
    const std::size_t expected = 4 + sc.num_behaviors;
    if (parts.size() != expected) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(expected) + " '|' separated fields, got " +
                      std::to_string(parts.size()));
    }
    Example ex;
    ex.user_id = expect_kv(parts[0], "user", line_no);
    if (ex.user_id.empty()) {
      throw DataError("line " + std::to_string(line_no) + ": empty user id");
    }
    ex.categorical = parse_uint_list(expect_kv(parts[1], "cat", line_no), line_no, "cat");
    for (std::size_t a = 0; a < sc.num_behaviors; ++a) {
      ex.sequences.push_back(parse_uint_list(
          expect_kv(parts[2 + a], "seq" + std::to_string(a + 1), line_no), line_no,
          "seq" + std::to_string(a + 1)));
    }
    const auto labels = parse_uint_list(
        expect_kv(parts[2 + sc.num_behaviors], "labels", line_no), line_no, "labels");
    for (std::size_t l : labels) ex.labels.push_back(static_cast<int>(l));
    const auto mask = parse_uint_list(
        expect_kv(parts[3 + sc.num_behaviors], "mask", line_no), line_no, "mask");
    for (std::size_t mv : mask) {
      if (mv > 1) {
        throw DataError("line " + std::to_string(line_no) + ": mask entries must be 0/1");
      }
      ex.label_mask.push_back(static_cast<std::uint8_t>(mv));
    }
    validate_example(ex, sc, line_no);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// synthetic generation
// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  schema.validate();
  if (!(noise_rate >= 0.0 && noise_rate < 0.5)) {
    throw ConfigError("synthetic: noise_rate must lie in [0, 0.5), got " +
                      std::to_string(noise_rate));
  }
  if (train_examples < 1 || val_examples < 1 || test_examples < 1) {
    throw ConfigError("synthetic: every split needs at least one example");
  }
}

namespace {

// P(a length-uniform{1..n} sequence contains at least one of k items out of
// a vocabulary of w).
double mean_hit_prob(std::size_t k, std::size_t w, std::size_t n) {
  const double q = static_cast<double>(k) / static_cast<double>(w);
  double acc = 0.0;
  for (std::size_t l = 1; l <= n; ++l) {
    acc += 1.0 - std::pow(1.0 - q, static_cast<double>(l));
  }
  return acc / static_cast<double>(n);
}

std::vector<std::uint8_t> pick_subset(std::size_t universe, std::size_t count,
                                      Rng& rng) {
  std::vector<std::size_t> order(universe);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::uint8_t> flags(universe, 0);
  for (std::size_t i = 0; i < count; ++i) flags[order[i]] = 1;
  return flags;
}

}  // namespace

double noisy_ceiling(double base_rate, double noise_rate) {
  const double pi = base_rate, rho = noise_rate;
  const double a = pi * (1.0 - rho) / (pi * (1.0 - rho) + (1.0 - pi) * rho);
  const double b = pi * rho / (pi * rho + (1.0 - pi) * (1.0 - rho));
  return a * (1.0 - b) + 0.5 * (a * b + (1.0 - a) * (1.0 - b));
}

std::vector<PlantedRule> plant_rules(const SyntheticSpec& spec) {
  spec.validate();
  const FeatureSchema& sc = spec.schema;
  if (sc.num_tasks > sc.num_fields) {
    throw DataError("synthetic: schema too small to host disjoint rules (" +
                    std::to_string(sc.num_tasks) + " tasks need " +
                    std::to_string(sc.num_tasks) + " distinct fields, have " +
                    std::to_string(sc.num_fields) + ")");
  }
  Rng rng(derive_seed(spec.seed, Stream::rules));
  std::vector<std::size_t> fields(sc.num_fields);
  std::iota(fields.begin(), fields.end(), 0);
  rng.shuffle(fields);

  std::vector<PlantedRule> rules;
  for (std::size_t i = 0; i < sc.num_tasks; ++i) {
    PlantedRule r;
    r.field = fields[i];
    r.behavior = i % sc.num_behaviors;
    const std::size_t v = sc.cardinalities[r.field];
    const std::size_t w = sc.seq_vocabs[r.behavior];
    const std::size_t n = sc.max_lens[r.behavior];

    // Aim the joint rate near 1/2: a binary score's AUC ceiling under label
    // flips is best when the rule fires about half the time.
    std::size_t cat_count = static_cast<std::size_t>(std::lround(0.75 * v));
    cat_count = std::clamp<std::size_t>(cat_count, 1, v > 1 ? v - 1 : 1);
    const double p_cat = static_cast<double>(cat_count) / static_cast<double>(v);
    const double target_hit = std::min(0.95, 0.5 / p_cat);
    std::size_t best_k = 1;
    double best_gap = 2.0;
    for (std::size_t k = 1; k < std::max<std::size_t>(w, 2); ++k) {
      const double gap = std::fabs(mean_hit_prob(k, w, n) - target_hit);
      if (gap < best_gap) {
        best_gap = gap;
        best_k = k;
      }
    }
    r.cat_subset = pick_subset(v, cat_count, rng);
    r.item_subset = pick_subset(w, best_k, rng);
    r.base_rate = p_cat * mean_hit_prob(best_k, w, n);
    r.auc_ceiling = spec.noise_rate == 0.0 ? 1.0
                                           : noisy_ceiling(r.base_rate, spec.noise_rate);
    rules.push_back(std::move(r));
  }
  return rules;
}

int rule_label(const PlantedRule& rule, const Example& ex) {
  if (!rule.cat_subset[ex.categorical[rule.field] - 1]) return 0;
  for (std::size_t item : ex.sequences[rule.behavior]) {
    if (rule.item_subset[item - 1]) return 1;
  }
  return 0;
}

namespace {

Dataset generate_split(const SyntheticSpec& spec,
                       const std::vector<PlantedRule>& rules, std::size_t count,
                       std::uint64_t split_index) {
  const FeatureSchema& sc = spec.schema;
  Rng rng(derive_seed(spec.seed, Stream::data, split_index));
  const std::size_t users =
      spec.num_users > 0 ? spec.num_users : std::max<std::size_t>(1, count / 20);

  Dataset ds;
  ds.schema = sc;
  ds.examples.reserve(count);
  for (std::size_t e = 0; e < count; ++e) {
    Example ex;
    ex.user_id = "u" + std::to_string(rng.uniform_index(users));
    ex.categorical.reserve(sc.num_fields);
    for (std::size_t j = 0; j < sc.num_fields; ++j) {
      ex.categorical.push_back(1 + rng.uniform_index(sc.cardinalities[j]));
    }
    for (std::size_t a = 0; a < sc.num_behaviors; ++a) {
      const std::size_t len = 1 + rng.uniform_index(sc.max_lens[a]);
      std::vector<std::size_t> items(len);
      for (std::size_t t = 0; t < len; ++t) {
        items[t] = 1 + rng.uniform_index(sc.seq_vocabs[a]);
      }
      ex.sequences.push_back(std::move(items));
    }
    for (const PlantedRule& r : rules) {
      int y = rule_label(r, ex);
      if (rng.uniform() < spec.noise_rate) y = 1 - y;
      ex.labels.push_back(y);
      ex.label_mask.push_back(1);
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  SyntheticData out;
  out.rules = plant_rules(spec);
  out.train = generate_split(spec, out.rules, spec.train_examples, 0);
  out.val = generate_split(spec, out.rules, spec.val_examples, 1);
  out.test = generate_split(spec, out.rules, spec.test_examples, 2);
  return out;
}

}  // namespace infnet
