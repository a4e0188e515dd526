#include "infnet/config.hpp"

#include <fstream>

namespace infnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return std::stoull(v);
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const std::size_t comma = v.find(',', pos);
    const std::string tok = trim(
        v.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    out.push_back(parse_u64(key, tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.schema.num_fields = 4;
  c.schema.cardinalities = {12, 12, 12, 12};
  c.schema.num_behaviors = 2;
  c.schema.max_lens = {8, 8};
  c.schema.seq_vocabs = {20, 20};
  c.schema.num_tasks = 3;
  c.schema.embed_dim = 16;
  c.schema.num_cat_proxies = 4;
  c.schema.num_shared_tokens = 2;
  c.train.batch_size = 256;
  return c;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  keys_seen.insert(key);
  if (key == "schema.fields") {
    schema.num_fields = parse_u64(key, value);
  } else if (key == "schema.cards") {
    schema.cardinalities = parse_list(key, value);
  } else if (key == "schema.behaviors") {
    schema.num_behaviors = parse_u64(key, value);
  } else if (key == "schema.lens") {
    schema.max_lens = parse_list(key, value);
  } else if (key == "schema.vocabs") {
    schema.seq_vocabs = parse_list(key, value);
  } else if (key == "schema.tasks") {
    schema.num_tasks = parse_u64(key, value);
  } else if (key == "schema.dim") {
    schema.embed_dim = parse_u64(key, value);
  } else if (key == "schema.cat_proxies") {
    schema.num_cat_proxies = parse_u64(key, value);
  } else if (key == "schema.shared_tokens") {
    schema.num_shared_tokens = parse_u64(key, value);
  } else if (key == "train.batch") {
    train.batch_size = parse_u64(key, value);
  } else if (key == "train.lr") {
    train.learning_rate = parse_f64(key, value);
  } else if (key == "train.optimizer") {
    train.optimizer = optimizer_from_string(value);
  } else if (key == "train.l2") {
    train.l2_weight = parse_f64(key, value);
  } else if (key == "train.dropout") {
    train.dropout = parse_f64(key, value);
  } else if (key == "train.blocks") {
    train.num_blocks = parse_u64(key, value);
  } else if (key == "train.heads") {
    train.num_heads = parse_u64(key, value);
  } else if (key == "train.d_k") {
    train.d_k = parse_u64(key, value);
  } else if (key == "train.patience") {
    train.patience = parse_u64(key, value);
  } else if (key == "train.max_epochs") {
    train.max_epochs = parse_u64(key, value);
  } else if (key == "train.seed") {
    train.seed = parse_u64(key, value);
  } else if (key == "train.ablation") {
    train.ablation = ablation_from_string(value);
  } else if (key == "train.grad_clip") {
    train.grad_clip = parse_bool(key, value);
  } else if (key == "train.clip_norm") {
    train.grad_clip_norm = parse_f64(key, value);
  } else if (key == "synth.noise") {
    synth_noise = parse_f64(key, value);
  } else if (key == "synth.train") {
    synth_train = parse_u64(key, value);
  } else if (key == "synth.val") {
    synth_val = parse_u64(key, value);
  } else if (key == "synth.test") {
    synth_test = parse_u64(key, value);
  } else if (key == "synth.users") {
    synth_users = parse_u64(key, value);
  } else if (key == "synth.seed") {
    synth_seed = parse_u64(key, value);
  } else if (key == "io.data_dir") {
    data_dir = value;
  } else if (key == "io.out_dir") {
    out_dir = value;
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

RunConfig RunConfig::load(const std::string& path,
                          const std::vector<std::string>& overrides) {
  RunConfig c = defaults();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path + ":" + std::to_string(line_no) +
                          ": expected 'key = value', got '" + line + "'");
      }
      c.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  for (const std::string& ov : overrides) {
    const std::size_t eq = ov.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + ov + "' must have the form key=value");
    }
    c.apply(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  schema.validate();
  train.validate();
  if (train.num_heads > 0 && schema.embed_dim % train.num_heads != 0) {
    throw ConfigError("train.heads: embedding dim " +
                      std::to_string(schema.embed_dim) + " not divisible by " +
                      std::to_string(train.num_heads));
  }
  if (!(synth_noise >= 0.0 && synth_noise < 0.5)) {
    throw ConfigError("synth.noise: must lie in [0, 0.5)");
  }
  if (synth_train < 1 || synth_val < 1 || synth_test < 1) {
    throw ConfigError("synth: every split needs at least one example");
  }
  if (data_dir.empty() || out_dir.empty()) {
    throw ConfigError("io: data_dir and out_dir must be non-empty");
  }
}

bool RunConfig::schema_declared() const {
  for (const char* k :
       {"schema.fields", "schema.cards", "schema.behaviors", "schema.lens",
        "schema.vocabs", "schema.tasks"}) {
    if (declared(k)) return true;
  }
  return false;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.schema = schema;
  s.seed = synth_seed;
  s.noise_rate = synth_noise;
  s.train_examples = synth_train;
  s.val_examples = synth_val;
  s.test_examples = synth_test;
  s.num_users = synth_users;
  return s;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig mc;
  mc.num_blocks = train.num_blocks;
  mc.num_heads = train.num_heads;
  mc.d_k = train.d_k;
  mc.ablation = train.ablation;
  return mc;
}

}  // namespace infnet
