#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "infnet/data.hpp"
#include "infnet/metrics.hpp"
#include "infnet/rng.hpp"
#include "oracles.hpp"

using namespace infnet;

namespace {

std::filesystem::path tmp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "infnet_data_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.schema.num_fields = 4;
  spec.schema.cardinalities = {12, 12, 12, 12};
  spec.schema.num_behaviors = 2;
  spec.schema.max_lens = {8, 8};
  spec.schema.seq_vocabs = {20, 20};
  spec.schema.num_tasks = 3;
  spec.schema.embed_dim = 4;
  spec.seed = 7;
  spec.noise_rate = 0.05;
  spec.train_examples = 200;
  spec.val_examples = 50;
  spec.test_examples = 50;
  return spec;
}

}  // namespace

TEST_CASE("write then read preserves every example exactly") {
  SyntheticSpec spec = small_spec();
  SyntheticData data = generate_synthetic(spec);
  const auto path = tmp_dir() / "roundtrip.txt";
  write_dataset(path.string(), data.train.schema, data.train.examples);
  Dataset back = read_dataset(path.string());
  CHECK(back.schema.data_compatible(data.train.schema));
  REQUIRE(back.examples.size() == data.train.examples.size());
  for (std::size_t i = 0; i < back.examples.size(); ++i) {
    const Example& a = back.examples[i];
    const Example& b = data.train.examples[i];
    CHECK(a.user_id == b.user_id);
    CHECK(a.categorical == b.categorical);
    CHECK(a.sequences == b.sequences);
    CHECK(a.labels == b.labels);
    CHECK(a.label_mask == b.label_mask);
  }
  // Writing the parsed examples again reproduces the bytes.
  const auto path2 = tmp_dir() / "roundtrip2.txt";
  write_dataset(path2.string(), back.schema, back.examples);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("empty sequences and an empty body are valid") {
  const auto path = tmp_dir() / "empty.txt";
  {
    std::ofstream out(path);
    out << "schema M=2 F=2 d_irrelevant cards=3,4 lens=2,2 vocabs=5,5 tasks=2\n";
  }
  Dataset ds = read_dataset(path.string());
  CHECK(ds.examples.empty());
  CHECK(ds.schema.num_fields == 2);

  {
    std::ofstream out(path, std::ios::app);
    out << "user=u1|cat=1,4|seq1=|seq2=5|labels=1,0|mask=1,1\n";
  }
  ds = read_dataset(path.string());
  REQUIRE(ds.examples.size() == 1);
  CHECK(ds.examples[0].sequences[0].empty());
  CHECK(ds.examples[0].sequences[1] == std::vector<std::size_t>{5});
}

TEST_CASE("schema violations name the field and line") {
  const auto path = tmp_dir() / "bad_index.txt";
  {
    std::ofstream out(path);
    out << "schema M=2 F=1 d_irrelevant cards=3,4 lens=2 vocabs=5 tasks=1\n";
    out << "user=u1|cat=1,2|seq1=1|labels=0|mask=1\n";
    out << "user=u2|cat=1,5|seq1=1|labels=0|mask=1\n";  // field 1 over cardinality
  }
  try {
    read_dataset(path.string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("field 1") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
  }
}

TEST_CASE("malformed lines report their number") {
  const auto path = tmp_dir() / "malformed.txt";
  {
    std::ofstream out(path);
    out << "schema M=1 F=1 d_irrelevant cards=3 lens=2 vocabs=5 tasks=1\n";
    out << "user=u1|cat=1|seq1=1|labels=0|mask=1\n";
    out << "user=u2|cat=oops|seq1=1|labels=0|mask=1\n";
  }
  CHECK_THROWS_WITH_AS(read_dataset(path.string()), doctest::Contains("line 3"),
                       DataError);

  const auto missing = tmp_dir() / "missing_field.txt";
  {
    std::ofstream out(missing);
    out << "schema M=1 F=1 d_irrelevant cards=3 lens=2 vocabs=5 tasks=1\n";
    out << "user=u1|cat=1|labels=0|mask=1\n";
  }
  CHECK_THROWS_WITH_AS(read_dataset(missing.string()), doctest::Contains("line 2"),
                       DataError);

  CHECK_THROWS_AS(read_dataset((tmp_dir() / "nope.txt").string()), IoError);

  const auto badhdr = tmp_dir() / "bad_header.txt";
  {
    std::ofstream out(badhdr);
    out << "schema M=1 F=1 cards=3 lens=2 vocabs=5 tasks=1\n";
  }
  CHECK_THROWS_AS(read_dataset(badhdr.string()), DataError);
}

TEST_CASE("generation is deterministic: same seed, same bytes") {
  SyntheticSpec spec = small_spec();
  SyntheticData a = generate_synthetic(spec);
  SyntheticData b = generate_synthetic(spec);
  const auto pa = tmp_dir() / "det_a.txt";
  const auto pb = tmp_dir() / "det_b.txt";
  write_dataset(pa.string(), a.train.schema, a.train.examples);
  write_dataset(pb.string(), b.train.schema, b.train.examples);
  CHECK(slurp(pa) == slurp(pb));

  SyntheticSpec other = spec;
  other.seed = 8;
  SyntheticData c = generate_synthetic(other);
  write_dataset(pb.string(), c.train.schema, c.train.examples);
  CHECK(slurp(pa) != slurp(pb));
}

TEST_CASE("rules place distinct fields and reject too-small schemas") {
  SyntheticSpec spec = small_spec();
  auto rules = plant_rules(spec);
  REQUIRE(rules.size() == 3);
  CHECK(rules[0].field != rules[1].field);
  CHECK(rules[0].field != rules[2].field);
  CHECK(rules[1].field != rules[2].field);
  for (const auto& r : rules) {
    CHECK(r.base_rate > 0.3);
    CHECK(r.base_rate < 0.7);
  }

  SyntheticSpec tiny = spec;
  tiny.schema.num_fields = 2;
  tiny.schema.cardinalities = {12, 12};
  CHECK_THROWS_WITH_AS(plant_rules(tiny), doctest::Contains("too small"), DataError);
}

TEST_CASE("noise-free data: the rule oracle ranks perfectly, ceiling is 1") {
  SyntheticSpec spec = small_spec();
  spec.noise_rate = 0.0;
  spec.train_examples = 2000;
  SyntheticData data = generate_synthetic(spec);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(data.rules[i].auc_ceiling == 1.0);
    std::vector<ScoredLabel> scored;
    for (const Example& ex : data.train.examples) {
      scored.push_back({static_cast<double>(rule_label(data.rules[i], ex)),
                        ex.labels[i], ex.user_id});
    }
    CHECK(auc(scored) == 1.0);
  }
}

TEST_CASE("noisy data: oracle auc matches the analytic ceiling within 0.01") {
  SyntheticSpec spec = small_spec();
  spec.noise_rate = 0.1;
  spec.train_examples = 10000;
  SyntheticData data = generate_synthetic(spec);
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<ScoredLabel> scored;
    for (const Example& ex : data.train.examples) {
      scored.push_back({static_cast<double>(rule_label(data.rules[i], ex)),
                        ex.labels[i], ex.user_id});
    }
    const double empirical = auc(scored);
    INFO("task ", i, " empirical ", empirical, " ceiling ", data.rules[i].auc_ceiling);
    CHECK(std::fabs(empirical - data.rules[i].auc_ceiling) <= 0.01);
  }
}

TEST_CASE("positive rates sit within three sigma of the analytic base rate") {
  for (double noise : {0.0, 0.1}) {
    SyntheticSpec spec = small_spec();
    spec.noise_rate = noise;
    spec.train_examples = 10000;
    SyntheticData data = generate_synthetic(spec);
    for (std::size_t i = 0; i < 3; ++i) {
      const double pi = data.rules[i].base_rate;
      const double expect = pi * (1.0 - 2.0 * noise) + noise;
      double positives = 0;
      for (const Example& ex : data.train.examples) positives += ex.labels[i];
      const double observed = positives / 10000.0;
      const double sigma = std::sqrt(expect * (1.0 - expect) / 10000.0);
      INFO("noise ", noise, " task ", i, " observed ", observed, " expect ", expect);
      CHECK(std::fabs(observed - expect) <= 3.0 * sigma);
    }
  }
}

TEST_CASE("a single shared linear model cannot match the per-task oracles") {
  SyntheticSpec spec = small_spec();
  spec.train_examples = 3000;
  SyntheticData data = generate_synthetic(spec);
  const FeatureSchema& sc = spec.schema;

  // Pooled binary features: one-hot categorical fields plus per-behavior
  // item bags.
  std::size_t dim = 0;
  for (std::size_t v : sc.cardinalities) dim += v;
  for (std::size_t w : sc.seq_vocabs) dim += w;
  auto featurize = [&](const Example& ex) {
    std::vector<double> x(dim, 0.0);
    std::size_t off = 0;
    for (std::size_t j = 0; j < sc.num_fields; ++j) {
      x[off + ex.categorical[j] - 1] = 1.0;
      off += sc.cardinalities[j];
    }
    for (std::size_t a = 0; a < sc.num_behaviors; ++a) {
      for (std::size_t item : ex.sequences[a]) x[off + item - 1] = 1.0;
      off += sc.seq_vocabs[a];
    }
    return x;
  };

  // One weight vector, one score per example, trained on every task's
  // labels jointly.
  std::vector<double> w(dim, 0.0);
  double b = 0.0;
  const double lr = 0.1;
  for (int epoch = 0; epoch < 40; ++epoch) {
    for (const Example& ex : data.train.examples) {
      const auto x = featurize(ex);
      double z = b;
      for (std::size_t k = 0; k < dim; ++k) z += w[k] * x[k];
      const double p = 1.0 / (1.0 + std::exp(-z));
      double g = 0.0;
      for (std::size_t i = 0; i < sc.num_tasks; ++i) g += p - ex.labels[i];
      g /= static_cast<double>(sc.num_tasks);
      for (std::size_t k = 0; k < dim; ++k) w[k] -= lr * g * x[k];
      b -= lr * g;
    }
  }

  double shared_mean = 0.0, oracle_mean = 0.0;
  for (std::size_t i = 0; i < sc.num_tasks; ++i) {
    std::vector<ScoredLabel> shared, best;
    for (const Example& ex : data.test.examples) {
      const auto x = featurize(ex);
      double z = b;
      for (std::size_t k = 0; k < dim; ++k) z += w[k] * x[k];
      shared.push_back({z, ex.labels[i], ex.user_id});
      best.push_back({static_cast<double>(rule_label(data.rules[i], ex)),
                      ex.labels[i], ex.user_id});
    }
    shared_mean += auc(shared);
    oracle_mean += auc(best);
  }
  shared_mean /= 3.0;
  oracle_mean /= 3.0;
  INFO("shared linear ", shared_mean, " per-task oracle ", oracle_mean);
  CHECK(shared_mean < oracle_mean);
  CHECK(oracle_mean - shared_mean > 0.05);
}

TEST_CASE("noisy_ceiling matches hand-checked values") {
  CHECK(noisy_ceiling(0.5, 0.0) == doctest::Approx(1.0));
  // pi = 0.5, rho = 0.05: a = 0.95, b = 0.05,
  // ceiling = 0.95*0.95 + 0.5*(0.95*0.05 + 0.05*0.95) = 0.95.
  CHECK(noisy_ceiling(0.5, 0.05) == doctest::Approx(0.95).epsilon(1e-12));
}
