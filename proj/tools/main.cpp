// infnet command-line tool: synthetic data generation, training, evaluation,
// ablation sweeps, attention inspection and gradient audits.
#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "infnet/config.hpp"
#include "infnet/data.hpp"
#include "infnet/diagnostics.hpp"
#include "infnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace infnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitIo = 5;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string checkpoint;
  std::string split = "test";
  std::size_t example_index = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool* seed_set,
                std::uint64_t* seed, bool* out_set, std::string* out_dir,
                bool* mode_set, std::string* mode) {
  cmd->add_option("--config", args.config_path, "Configuration file (key = value)");
  cmd->add_option("--set", args.sets, "Override: key=value (repeatable, last wins)");
  cmd->add_option("--seed", *seed, "Override train.seed")->each([seed_set](const std::string&) {
    *seed_set = true;
  });
  cmd->add_option("--out-dir", *out_dir, "Override io.out_dir")->each([out_set](const std::string&) {
    *out_set = true;
  });
  cmd->add_option("--mode", *mode, "Ablation mode: full, wo1, wo2 or wo3")
      ->each([mode_set](const std::string&) { *mode_set = true; });
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

Dataset read_split(const RunConfig& cfg, const std::string& split) {
  if (split != "train" && split != "val" && split != "test") {
    throw ConfigError("--split must be train, val or test, got '" + split + "'");
  }
  return read_dataset((fs::path(cfg.data_dir) / (split + ".txt")).string());
}

/// Dataset header + configured model dims; declared schema keys must agree
/// with the data.
FeatureSchema resolve_schema(const RunConfig& cfg, const FeatureSchema& from_data) {
  if (cfg.schema_declared() && !cfg.schema.data_compatible(from_data)) {
    throw ConfigError("configured schema does not match the dataset header");
  }
  FeatureSchema s = from_data;
  s.embed_dim = cfg.schema.embed_dim;
  s.num_cat_proxies = cfg.schema.num_cat_proxies;
  s.num_shared_tokens = cfg.schema.num_shared_tokens;
  s.validate();
  return s;
}

void require_checkpoint_schema(const Checkpoint& ckpt, const FeatureSchema& schema) {
  if (!ckpt.schema.data_compatible(schema)) {
    throw ConfigError("checkpoint schema does not match the dataset");
  }
}

int cmd_gen_data(const RunConfig& cfg) {
  SyntheticSpec spec = cfg.synthetic_spec();
  SyntheticData data = generate_synthetic(spec);

  fs::create_directories(cfg.data_dir);
  const fs::path out(cfg.data_dir);
  write_dataset((out / "train.txt").string(), data.train.schema, data.train.examples);
  write_dataset((out / "val.txt").string(), data.val.schema, data.val.examples);
  write_dataset((out / "test.txt").string(), data.test.schema, data.test.examples);

  nlohmann::json manifest;
  manifest["seed"] = spec.seed;
  manifest["noise_rate"] = spec.noise_rate;
  manifest["splits"] = {{"train", spec.train_examples},
                        {"val", spec.val_examples},
                        {"test", spec.test_examples}};
  for (std::size_t i = 0; i < data.rules.size(); ++i) {
    const PlantedRule& r = data.rules[i];
    manifest["tasks"].push_back({{"task", i},
                                 {"field", r.field},
                                 {"behavior", r.behavior},
                                 {"base_rate", r.base_rate},
                                 {"auc_ceiling", r.auc_ceiling}});
  }
  std::ofstream mf(out / "manifest.json", std::ios::binary);
  if (!mf) throw IoError("cannot write manifest.json");
  mf << manifest.dump(2) << "\n";

  std::cout << "wrote " << spec.train_examples << "/" << spec.val_examples << "/"
            << spec.test_examples << " examples to " << cfg.data_dir << "\n";
  for (std::size_t i = 0; i < data.rules.size(); ++i) {
    std::cout << "task " << i << ": base_rate " << fmt4(data.rules[i].base_rate)
              << ", auc_ceiling " << fmt4(data.rules[i].auc_ceiling) << "\n";
  }
  return kExitOk;
}

void print_eval(const std::string& tag, const EvalResult& ev) {
  std::cout << tag << ": mean_auc " << fmt4(ev.mean_auc) << " |";
  for (std::size_t i = 0; i < ev.auc.size(); ++i) {
    std::cout << " task" << i << " auc " << fmt4(ev.auc[i]) << " gauc "
              << fmt4(ev.gauc[i]);
  }
  std::cout << "\n";
}

int cmd_train(const RunConfig& cfg, const std::string& resume_path) {
  Dataset train_set = read_split(cfg, "train");
  Dataset val_set = read_split(cfg, "val");
  if (!train_set.schema.data_compatible(val_set.schema)) {
    throw DataError("train and val splits disagree on the schema");
  }
  const FeatureSchema schema = resolve_schema(cfg, train_set.schema);

  Checkpoint resume;
  const bool resuming = !resume_path.empty();
  if (resuming) {
    resume = load_checkpoint(resume_path);
    require_checkpoint_schema(resume, schema);
  }

  Model model = Model::init(schema, cfg.model_config(), cfg.train.seed);
  TrainResult result = train_model(model, cfg.train, train_set.examples,
                                   val_set.examples, resuming ? &resume : nullptr);

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  write_history_file((out / "history.tsv").string(), result.history);
  save_checkpoint((out / "ckpt_best.bin").string(), result.best);
  save_checkpoint((out / "ckpt_final.bin").string(), result.final_state);

  std::cout << "trained " << result.history.size() << " evaluations, best mean_auc "
            << fmt4(result.best.best_metric) << "\n";
  if (!result.history.empty()) {
    const HistoryRow& last = result.history.back();
    EvalResult ev{last.auc, last.gauc, result.best.best_metric};
    print_eval("last_eval", ev);
  }
  std::cout << "outputs: " << (out / "history.tsv").string() << ", "
            << (out / "ckpt_best.bin").string() << ", "
            << (out / "ckpt_final.bin").string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt_path,
             const std::string& split) {
  if (ckpt_path.empty()) throw ConfigError("eval requires --checkpoint");
  Dataset ds = read_split(cfg, split);
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  require_checkpoint_schema(ckpt, ds.schema);
  Model model = model_from_checkpoint(ckpt);
  EvalResult ev = evaluate_model(model, ds.examples);

  fs::create_directories(cfg.out_dir);
  const fs::path table_path = fs::path(cfg.out_dir) / ("eval_" + split + ".tsv");
  std::ofstream table(table_path, std::ios::binary);
  if (!table) throw IoError("cannot write " + table_path.string());
  table << "task\tauc\tgauc\n";
  for (std::size_t i = 0; i < ev.auc.size(); ++i) {
    table << i << "\t" << fmt(ev.auc[i]) << "\t" << fmt(ev.gauc[i]) << "\n";
  }
  table << "mean\t" << fmt(ev.mean_auc) << "\t-\n";
  print_eval("eval[" + split + "]", ev);
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg) {
  Dataset train_set = read_split(cfg, "train");
  Dataset val_set = read_split(cfg, "val");
  Dataset test_set = read_split(cfg, "test");
  const FeatureSchema schema = resolve_schema(cfg, train_set.schema);

  const Ablation modes[] = {Ablation::full, Ablation::no_task_tokens,
                            Ablation::no_homogeneous, Ablation::no_heterogeneous};
  std::vector<EvalResult> results;
  std::vector<double> val_means;
  for (Ablation mode : modes) {
    TrainConfig tc = cfg.train;
    tc.ablation = mode;
    ModelConfig mc = cfg.model_config();
    mc.ablation = mode;
    std::cout << "training variant " << to_string(mode) << " (seed " << tc.seed
              << ")\n";
    Model model = Model::init(schema, mc, tc.seed);
    TrainResult res = train_model(model, tc, train_set.examples, val_set.examples);
    Model best = model_from_checkpoint(res.best);
    results.push_back(evaluate_model(best, test_set.examples));
    val_means.push_back(res.best.best_metric);
  }

  fs::create_directories(cfg.out_dir);
  const fs::path table_path = fs::path(cfg.out_dir) / "ablation.tsv";
  std::ofstream table(table_path, std::ios::binary);
  if (!table) throw IoError("cannot write " + table_path.string());
  auto emit = [&](std::ostream& os) {
    os << "task";
    for (Ablation mode : modes) os << "\t" << to_string(mode);
    os << "\n";
    for (std::size_t i = 0; i < schema.num_tasks; ++i) {
      os << i;
      for (const EvalResult& r : results) os << "\t" << fmt4(r.auc[i]);
      os << "\n";
    }
    os << "mean";
    for (const EvalResult& r : results) os << "\t" << fmt4(r.mean_auc);
    os << "\n";
    os << "val_mean";
    for (double v : val_means) os << "\t" << fmt4(v);
    os << "\n";
  };
  emit(table);
  emit(std::cout);
  return kExitOk;
}

int cmd_dump_attention(const RunConfig& cfg, const std::string& ckpt_path,
                       const std::string& split, std::size_t example_index) {
  if (ckpt_path.empty()) throw ConfigError("dump-attention requires --checkpoint");
  Dataset ds = read_split(cfg, split);
  if (example_index >= ds.examples.size()) {
    throw DataError("--example " + std::to_string(example_index) +
                    " out of range, split has " + std::to_string(ds.examples.size()) +
                    " examples");
  }
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  require_checkpoint_schema(ckpt, ds.schema);
  if (ckpt.config.ablation == Ablation::no_task_tokens ||
      ckpt.config.ablation == Ablation::no_heterogeneous) {
    throw ConfigError("checkpoint variant '" + to_string(ckpt.config.ablation) +
                      "' has no task attention to dump");
  }
  Model model = model_from_checkpoint(ckpt);
  const Example& ex = ds.examples[example_index];

  Tape tape;
  std::vector<BlockTrace> traces;
  model.forward_example(tape, ex, ForwardOptions{}, &traces);
  const BlockTrace& last = traces.back();

  const FeatureSchema& s = model.schema();
  auto row_label = [&](const std::string& flow, std::size_t r) {
    return flow.rfind("task_", 0) == 0 ? "task:" + std::to_string(r)
                                       : "shared:" + std::to_string(r);
  };
  auto col_labels = [&](const std::string& flow) {
    std::vector<std::string> cols;
    if (flow.find("from_cat") != std::string::npos) {
      for (std::size_t j = 0; j < s.num_fields; ++j) {
        cols.push_back("cat:" + std::to_string(j));
      }
    } else {
      for (std::size_t a = 0; a < s.num_behaviors; ++a) {
        for (std::size_t t = 0; t < s.max_lens[a]; ++t) {
          cols.push_back("seq" + std::to_string(a) + ":" + std::to_string(t));
        }
      }
    }
    return cols;
  };

  fs::create_directories(cfg.out_dir);
  const fs::path out_path = fs::path(cfg.out_dir) / "attention.tsv";
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + out_path.string());
  auto emit = [&](std::ostream& os) {
    for (const char* want : {"task_from_cat", "task_from_seq", "shared_from_cat",
                             "shared_from_seq"}) {
      for (const AttentionTrace& tr : last.attention) {
        if (tr.flow != want) continue;
        const auto cols = col_labels(tr.flow);
        for (std::size_t h = 0; h < tr.head_probs.size(); ++h) {
          os << "# flow=" << tr.flow;
          if (tr.head_probs.size() > 1) os << " head=" << h;
          os << " example=" << example_index << "\n";
          os << "query";
          for (const auto& c : cols) os << "\t" << c;
          os << "\n";
          for (std::size_t r = 0; r < tr.query_rows; ++r) {
            os << row_label(tr.flow, r);
            for (std::size_t c = 0; c < tr.key_cols; ++c) {
              os << "\t" << fmt(tr.head_probs[h][r * tr.key_cols + c]);
            }
            os << "\n";
          }
        }
      }
    }
  };
  emit(out);
  emit(std::cout);
  return kExitOk;
}

int cmd_grad_check() {
  const auto reports = run_grad_check_suite();
  for (const auto& r : reports) {
    std::printf("%-24s max_rel_error %.3e  tol %.0e  %s\n", r.component.c_str(),
                r.max_rel_error, r.tolerance, r.pass ? "PASS" : "FAIL");
  }
  return all_pass(reports) ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"infnet: task-aware information flow network"};
  app.require_subcommand(1);

  CommonArgs args;
  bool seed_set = false, out_set = false, mode_set = false;
  std::uint64_t seed = 0;
  std::string out_dir, mode;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate planted synthetic splits");
  CLI::App* train = app.add_subcommand("train", "Train and checkpoint a model");
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  CLI::App* ablate = app.add_subcommand("ablate", "Train full, wo1, wo2 and wo3");
  CLI::App* dump = app.add_subcommand("dump-attention",
                                      "Write final-block task attention tables");
  CLI::App* gradcheck = app.add_subcommand("grad-check",
                                           "Finite-difference audit of all modules");
  for (CLI::App* cmd : {gen, train, eval, ablate, dump, gradcheck}) {
    add_common(cmd, args, &seed_set, &seed, &out_set, &out_dir, &mode_set, &mode);
  }
  train->add_option("--checkpoint", args.checkpoint, "Resume from this checkpoint");
  eval->add_option("--checkpoint", args.checkpoint, "Checkpoint to evaluate");
  dump->add_option("--checkpoint", args.checkpoint, "Checkpoint to inspect");
  eval->add_option("--split", args.split, "train, val or test");
  dump->add_option("--split", args.split, "train, val or test");
  dump->add_option("--example", args.example_index, "Example index within the split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    std::vector<std::string> overrides = args.sets;
    if (seed_set) overrides.push_back("train.seed=" + std::to_string(seed));
    if (out_set) overrides.push_back("io.out_dir=" + out_dir);
    if (mode_set) overrides.push_back("train.ablation=" + mode);
    const RunConfig cfg = RunConfig::load(args.config_path, overrides);

    if (gen->parsed()) return cmd_gen_data(cfg);
    if (train->parsed()) return cmd_train(cfg, args.checkpoint);
    if (eval->parsed()) return cmd_eval(cfg, args.checkpoint, args.split);
    if (ablate->parsed()) return cmd_ablate(cfg);
    if (dump->parsed()) {
      return cmd_dump_attention(cfg, args.checkpoint, args.split, args.example_index);
    }
    if (gradcheck->parsed()) return cmd_grad_check();
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MetricError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
