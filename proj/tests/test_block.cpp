#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "infnet/block.hpp"
#include "infnet/gradcheck.hpp"
#include "infnet/model.hpp"
#include "oracles.hpp"

using namespace infnet;

namespace {

FeatureSchema toy_schema() {
  FeatureSchema s;
  s.num_fields = 2;
  s.cardinalities = {3, 3};
  s.num_behaviors = 1;
  s.max_lens = {3};
  s.seq_vocabs = {4};
  s.num_tasks = 1;
  s.embed_dim = 4;
  s.num_cat_proxies = 2;
  s.num_shared_tokens = 1;
  return s;
}

Tensor random_param(Shape shape, std::uint64_t seed, std::string name = "x") {
  Rng rng(seed);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::parameter(std::move(shape), std::move(v), std::move(name));
}

TokenSet random_state(const FeatureSchema& s, std::uint64_t seed,
                      const Mask& seq_mask) {
  TokenSet ts;
  ts.cat = random_param({s.num_fields, s.embed_dim}, seed + 1, "cat");
  ts.cat_proxy = random_param({s.num_cat_proxies, s.embed_dim}, seed + 2, "catp");
  ts.seq = random_param({s.total_seq_len(), s.embed_dim}, seed + 3, "seq");
  ts.seq_proxy = random_param({s.num_behaviors, s.embed_dim}, seed + 4, "seqp");
  ts.task = random_param({s.num_tasks, s.embed_dim}, seed + 5, "task");
  ts.task_proxy = random_param({s.num_shared_tokens, s.embed_dim}, seed + 6, "taskp");
  ts.seq_mask = seq_mask;
  return ts;
}

// Plain-double reimplementations, independent of the tape.
oracle::Vec plain_ca(const oracle::Vec& q, std::size_t nq, const oracle::Vec& kv,
                     std::size_t nk, std::size_t d, const AttentionParams& p,
                     const Mask* mask) {
  if (mask) {
    bool any = false;
    for (auto b : *mask) any = any || b;
    if (!any) return oracle::Vec(nq * d, 0.0);
  }
  return oracle::attention(q, nq, kv, kv, nk, d, p.w_q[0].values(),
                           p.w_k[0].values(), p.w_v[0].values(), p.d_k, d, mask);
}

oracle::Vec plain_pgu(const oracle::Vec& x, std::size_t n, const oracle::Vec& proxy,
                      std::size_t pn, std::size_t d, const GateParams& g) {
  oracle::Vec hidden = oracle::mat_mul(proxy, 1, pn * d, g.w1.values(), d);
  for (std::size_t j = 0; j < d; ++j) {
    hidden[j] = std::max(0.0, hidden[j] + g.b1.values()[j]);
  }
  oracle::Vec logits = oracle::mat_mul(hidden, 1, d, g.w2.values(), d);
  oracle::Vec out(n * d);
  for (std::size_t j = 0; j < d; ++j) {
    const double gate = 1.0 / (1.0 + std::exp(-(logits[j] + g.b2.values()[j])));
    for (std::size_t i = 0; i < n; ++i) out[i * d + j] = x[i * d + j] * gate;
  }
  return out;
}

void add_into(oracle::Vec& acc, const oracle::Vec& term) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += term[i];
}

}  // namespace

TEST_CASE("cross attention with a single key broadcasts its value projection") {
  const std::size_t d = 4;
  Rng rng(1);
  AttentionParams p = AttentionParams::init(d, 0, 1, rng, "ca");
  Tensor q = random_param({3, d}, 2, "q");
  Tensor kv = random_param({1, d}, 3, "kv");
  Tape t;
  Tensor out = cross_attention(t, q, kv, kv, p, nullptr);
  oracle::Vec vp = oracle::mat_mul(kv.values(), 1, d, p.w_v[0].values(), d);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(out(i, j) == doctest::Approx(vp[j]).epsilon(1e-14));
    }
  }
}

TEST_CASE("zero query/key projections give uniform attention") {
  const std::size_t d = 4;
  Rng rng(2);
  AttentionParams p = AttentionParams::init(d, 0, 1, rng, "ca");
  for (Tensor* w : {&p.w_q[0], &p.w_k[0]}) {
    for (double& v : w->mutable_values()) v = 0.0;
  }
  Tensor q = random_param({2, d}, 4, "q");
  Tensor kv = random_param({5, d}, 5, "kv");
  Tape t;
  Tensor out = cross_attention(t, q, kv, kv, p, nullptr);
  oracle::Vec vp = oracle::mat_mul(kv.values(), 5, d, p.w_v[0].values(), d);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 5; ++r) mean += vp[r * d + j];
    mean /= 5.0;
    CHECK(out(0, j) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(out(1, j) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("cross attention equals the loop-and-normalize oracle") {
  const std::size_t d = 5;
  Rng rng(3);
  for (int inst = 0; inst < 50; ++inst) {
    AttentionParams p = AttentionParams::init(d, 0, 1, rng, "ca");
    Tensor q = random_param({2, d}, 100 + inst, "q");
    Tensor kv = random_param({3, d}, 200 + inst, "kv");
    Tape t;
    Tensor out = cross_attention(t, q, kv, kv, p, nullptr);
    oracle::Vec expect = plain_ca(q.values(), 2, kv.values(), 3, d, p, nullptr);
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(std::fabs(out.values()[i] - expect[i]) <= 1e-12);
    }
  }
}

TEST_CASE("cross attention gradients pass finite differences") {
  const std::size_t d = 4;
  Rng rng(4);
  AttentionParams p = AttentionParams::init(d, 0, 1, rng, "ca");
  Tensor kv = random_param({3, d}, 7, "kv");
  Tensor q = random_param({2, d}, 8, "q");
  auto fq = [&](Tape& t, const Tensor& v) {
    return cross_attention(t, v, kv, kv, p, nullptr);
  };
  auto fkv = [&](Tape& t, const Tensor& v) {
    return cross_attention(t, q, v, v, p, nullptr);
  };
  CHECK(grad_check(fq, q, 1e-4, 1e-5).pass);
  CHECK(grad_check(fkv, kv, 1e-4, 1e-5).pass);
  auto loss_fn = [&](Tape& t) {
    return t.mean(cross_attention(t, q, kv, kv, p, nullptr));
  };
  CHECK(grad_check_params(loss_fn, {p.w_q[0], p.w_k[0], p.w_v[0]}, 1e-4, 1e-5).pass);
}

TEST_CASE("masked keys receive exactly zero weight; all-masked gives zeros") {
  const std::size_t d = 4;
  Rng rng(5);
  AttentionParams p = AttentionParams::init(d, 0, 1, rng, "ca");
  Tensor q = random_param({2, d}, 9, "q");
  Tensor kv = random_param({4, d}, 10, "kv");
  Mask mask{1, 0, 1, 0};
  Tape t;
  AttentionTrace trace;
  Tensor out = cross_attention(t, q, kv, kv, p, &mask, {}, &trace);
  REQUIRE(trace.head_probs.size() == 1);
  for (std::size_t i = 0; i < 2; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      const double w = trace.head_probs[0][i * 4 + j];
      if (!mask[j]) CHECK(w == 0.0);
      sum += w;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
  }
  oracle::Vec expect = plain_ca(q.values(), 2, kv.values(), 4, d, p, &mask);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(std::fabs(out.values()[i] - expect[i]) <= 1e-12);
  }

  Mask none{0, 0, 0, 0};
  Tensor zero = cross_attention(t, q, kv, kv, p, &none);
  CHECK(zero.shape() == Shape{2, d});
  for (double v : zero.values()) CHECK(v == 0.0);
}

TEST_CASE("multi-head attention concatenates head outputs") {
  const std::size_t d = 6;
  Rng rng(6);
  AttentionParams p = AttentionParams::init(d, 0, 2, rng, "ca");
  CHECK(p.d_k == 3);
  Tensor q = random_param({2, d}, 11, "q");
  Tensor kv = random_param({3, d}, 12, "kv");
  Tape t;
  Tensor out = cross_attention(t, q, kv, kv, p, nullptr);
  CHECK(out.shape() == Shape{2, d});
  for (std::size_t h = 0; h < 2; ++h) {
    oracle::Vec expect = oracle::attention(
        q.values(), 2, kv.values(), kv.values(), 3, d, p.w_q[h].values(),
        p.w_k[h].values(), p.w_v[h].values(), p.d_k, 3, nullptr);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(out(i, h * 3 + j) == doctest::Approx(expect[i * 3 + j]).epsilon(1e-12));
      }
    }
  }
  auto fq = [&](Tape& tt, const Tensor& v) {
    return cross_attention(tt, v, kv, kv, p, nullptr);
  };
  CHECK(grad_check(fq, q, 1e-4, 1e-5).pass);
}

TEST_CASE("pgu: zero gate MLP halves the input") {
  const std::size_t d = 4;
  Rng rng(7);
  GateParams g = GateParams::init(2, d, rng, "gate");
  for (Tensor* w : {&g.w1, &g.b1, &g.w2, &g.b2}) {
    for (double& v : w->mutable_values()) v = 0.0;
  }
  Tensor x = random_param({5, d}, 13, "x");
  Tensor proxy = random_param({2, d}, 14, "proxy");
  Tape t;
  Tensor out = pgu(t, x, proxy, g);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.values()[i] == doctest::Approx(0.5 * x.values()[i]).epsilon(1e-15));
  }
}

TEST_CASE("pgu: saturated gate passes the input through") {
  const std::size_t d = 3;
  Rng rng(8);
  GateParams g = GateParams::init(1, d, rng, "gate");
  for (Tensor* w : {&g.w1, &g.b1, &g.w2}) {
    for (double& v : w->mutable_values()) v = 0.0;
  }
  for (double& v : g.b2.mutable_values()) v = 50.0;
  Tensor x = random_param({4, d}, 15, "x");
  Tensor proxy = random_param({1, d}, 16, "proxy");
  Tape t;
  Tensor out = pgu(t, x, proxy, g);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("pgu matches hand arithmetic, gates stay inside (0,1)") {
  const std::size_t d = 3;
  Rng rng(9);
  GateParams g = GateParams::init(2, d, rng, "gate");
  Tensor x = random_param({5, d}, 17, "x");
  Tensor proxy = random_param({2, d}, 18, "proxy");
  Tape t;
  Tensor out = pgu(t, x, proxy, g);
  oracle::Vec expect = plain_pgu(x.values(), 5, proxy.values(), 2, d, g);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(out.values()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    CHECK(std::fabs(out.values()[i]) <= std::fabs(x.values()[i]));
    if (x.values()[i] != 0.0) {
      const double gate = out.values()[i] / x.values()[i];
      CHECK(gate > 0.0);
      CHECK(gate < 1.0);
    }
  }

  auto fx = [&](Tape& tt, const Tensor& v) { return pgu(tt, v, proxy, g); };
  CHECK(grad_check(fx, x, 1e-4, 1e-5).pass);
  auto loss_fn = [&](Tape& tt) { return tt.mean(pgu(tt, x, proxy, g)); };
  CHECK(grad_check_params(loss_fn, {g.w1, g.b1, g.w2, g.b2, proxy}, 1e-4, 1e-5).pass);
}

TEST_CASE("flows: empty sequence and zero task tokens leave proxies unchanged") {
  FeatureSchema s = toy_schema();
  Rng rng(10);
  BlockParams bp = BlockParams::init(s, 0, 1, rng, 0);
  TokenSet st = random_state(s, 20, Mask{0, 0, 0});
  for (double& v : st.task.mutable_values()) v = 0.0;
  Tape t;
  Tensor next = flow_to_categorical(t, st, bp, Ablation::full);
  CHECK(next.values() == st.cat_proxy.values());
}

TEST_CASE("flows reduce to the single-key case with one real token") {
  FeatureSchema s = toy_schema();
  Rng rng(11);
  BlockParams bp = BlockParams::init(s, 0, 1, rng, 0);
  TokenSet st = random_state(s, 30, Mask{1, 0, 0});
  for (double& v : st.task.mutable_values()) v = 0.0;
  Tape t;
  Tensor next = flow_to_categorical(t, st, bp, Ablation::full);
  // Single unmasked key: every proxy row gains that token's value projection.
  oracle::Vec token(4);
  for (std::size_t j = 0; j < 4; ++j) token[j] = st.seq(0, j);
  oracle::Vec vp = oracle::mat_mul(token, 1, 4, bp.cat_from_seq.w_v[0].values(), 4);
  for (std::size_t i = 0; i < s.num_cat_proxies; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(next(i, j) == doctest::Approx(st.cat_proxy(i, j) + vp[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("proxy shapes are independent of sequence length") {
  for (std::size_t len : {4u, 64u, 512u}) {
    FeatureSchema s = toy_schema();
    s.max_lens = {len};
    Rng rng(12);
    BlockParams bp = BlockParams::init(s, 0, 1, rng, 0);
    Mask mask(len, 1);
    TokenSet st = random_state(s, 40 + len, mask);
    Tape t;
    TokenSet next = block_forward(t, st, bp);
    CHECK(next.cat_proxy.shape() == Shape{s.num_cat_proxies, s.embed_dim});
    CHECK(next.seq_proxy.shape() == Shape{s.num_behaviors, s.embed_dim});
    CHECK(next.task_proxy.shape() == Shape{s.num_shared_tokens, s.embed_dim});
    CHECK(next.task.shape() == Shape{s.num_tasks, s.embed_dim});
  }
}

TEST_CASE("flows equal a naive oracle and block_forward is order-invariant") {
  FeatureSchema s = toy_schema();
  Rng rng(13);
  BlockParams bp = BlockParams::init(s, 0, 1, rng, 0);
  TokenSet st = random_state(s, 50, Mask{1, 1, 0});
  const std::size_t d = s.embed_dim;

  // Naive full flows.
  oracle::Vec catp_next = st.cat_proxy.values();
  add_into(catp_next, plain_ca(st.cat_proxy.values(), 2, st.seq.values(), 3, d,
                               bp.cat_from_seq, &st.seq_mask));
  add_into(catp_next, plain_ca(st.cat_proxy.values(), 2, st.task.values(), 1, d,
                               bp.cat_from_task, nullptr));
  oracle::Vec seqp_next = st.seq_proxy.values();
  add_into(seqp_next, plain_ca(st.seq_proxy.values(), 1, st.cat.values(), 2, d,
                               bp.seq_from_cat, nullptr));
  add_into(seqp_next, plain_ca(st.seq_proxy.values(), 1, st.task.values(), 1, d,
                               bp.seq_from_task, nullptr));
  oracle::Vec shared_next = st.task_proxy.values();
  add_into(shared_next, plain_ca(st.task_proxy.values(), 1, st.cat.values(), 2, d,
                                 bp.shared_from_cat, nullptr));
  add_into(shared_next, plain_ca(st.task_proxy.values(), 1, st.seq.values(), 3, d,
                                 bp.shared_from_seq, &st.seq_mask));
  oracle::Vec task_hat = st.task.values();
  add_into(task_hat, plain_ca(st.task.values(), 1, st.cat.values(), 2, d,
                              bp.task_from_cat, nullptr));
  add_into(task_hat, plain_ca(st.task.values(), 1, st.seq.values(), 3, d,
                              bp.task_from_seq, &st.seq_mask));

  // Hand-unrolled homogeneous stage: gates read layer-l proxies.
  oracle::Vec cat_next = plain_pgu(st.cat.values(), 2, st.cat_proxy.values(),
                                   s.num_cat_proxies, d, bp.cat_gate);
  oracle::Vec seq_next = plain_pgu(st.seq.values(), 3, st.seq_proxy.values(),
                                   s.num_behaviors, d, bp.seq_gate);
  oracle::Vec task_next = plain_pgu(task_hat, 1, st.task_proxy.values(),
                                    s.num_shared_tokens, d, bp.task_gate);

  Tape t;
  TokenSet next = block_forward(t, st, bp);
  auto close = [](const std::vector<double>& got, const oracle::Vec& want) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(std::fabs(got[i] - want[i]) <= 1e-10);
    }
  };
  close(next.cat_proxy.values(), catp_next);
  close(next.seq_proxy.values(), seqp_next);
  close(next.task_proxy.values(), shared_next);
  close(next.cat.values(), cat_next);
  close(next.seq.values(), seq_next);
  close(next.task.values(), task_next);

  // Evaluating the flows separately, in a different order, changes nothing.
  Tape t2;
  auto [sh2, th2] = flow_to_task(t2, st, bp, Ablation::full);
  Tensor sq2 = flow_to_sequence(t2, st, bp, Ablation::full);
  Tensor ct2 = flow_to_categorical(t2, st, bp, Ablation::full);
  CHECK(sh2.values() == next.task_proxy.values());
  CHECK(sq2.values() == next.seq_proxy.values());
  CHECK(ct2.values() == next.cat_proxy.values());
  (void)th2;

  // Purity: a second identical call is bit-identical.
  Tape t3;
  TokenSet again = block_forward(t3, st, bp);
  CHECK(again.task.values() == next.task.values());
  CHECK(again.cat_proxy.values() == next.cat_proxy.values());
}

TEST_CASE("perturbing a padded sequence row changes nothing") {
  FeatureSchema s = toy_schema();
  Rng rng(14);
  std::vector<BlockParams> blocks{BlockParams::init(s, 0, 1, rng, 0),
                                  BlockParams::init(s, 0, 1, rng, 1)};
  TokenSet st = random_state(s, 60, Mask{1, 1, 0});
  // Zero the padded row first so it looks like real tokenizer output.
  {
    auto& sv = st.seq.mutable_values();
    for (std::size_t j = 0; j < 4; ++j) sv[2 * 4 + j] = 0.0;
  }
  Tape t1;
  TokenSet out1 = stack_forward(t1, st, blocks);

  TokenSet perturbed = st;
  std::vector<double> sv = st.seq.values();
  for (std::size_t j = 0; j < 4; ++j) sv[2 * 4 + j] = 1e6 * (j + 1.0);
  perturbed.seq = Tensor::parameter({3, 4}, sv, "seq");
  Tape t2;
  TokenSet out2 = stack_forward(t2, perturbed, blocks);

  CHECK(out1.cat.values() == out2.cat.values());
  CHECK(out1.cat_proxy.values() == out2.cat_proxy.values());
  CHECK(out1.seq_proxy.values() == out2.seq_proxy.values());
  CHECK(out1.task.values() == out2.task.values());
  CHECK(out1.task_proxy.values() == out2.task_proxy.values());
  // Real rows of the refined sequence agree; only the padded row differs.
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(out1.seq(r, j) == out2.seq(r, j));
    }
  }
}

TEST_CASE("stack of one block equals block_forward; shapes hold for any N") {
  FeatureSchema s = toy_schema();
  Rng rng(15);
  std::vector<BlockParams> blocks;
  for (std::size_t l = 0; l < 3; ++l) blocks.push_back(BlockParams::init(s, 0, 1, rng, l));
  TokenSet st = random_state(s, 70, Mask{1, 1, 1});

  Tape t;
  TokenSet one = stack_forward(t, st, std::span(blocks.data(), 1));
  TokenSet direct = block_forward(t, st, blocks[0]);
  CHECK(one.task.values() == direct.task.values());
  CHECK(one.cat_proxy.values() == direct.cat_proxy.values());

  TokenSet three = stack_forward(t, st, blocks);
  CHECK(three.task.shape() == Shape{s.num_tasks, s.embed_dim});
  CHECK(three.cat_proxy.shape() == Shape{s.num_cat_proxies, s.embed_dim});
  CHECK(three.seq_proxy.shape() == Shape{s.num_behaviors, s.embed_dim});
  CHECK(three.seq_mask == st.seq_mask);
}

TEST_CASE("two-block stack passes the gradient check end to end") {
  FeatureSchema s = toy_schema();
  Rng rng(16);
  std::vector<BlockParams> blocks{BlockParams::init(s, 0, 1, rng, 0),
                                  BlockParams::init(s, 0, 1, rng, 1)};
  TokenSet st = random_state(s, 80, Mask{1, 1, 0});

  std::vector<Tensor> params;
  for (const auto& b : blocks) b.append_params(params, Ablation::full);
  params.push_back(st.cat);
  params.push_back(st.cat_proxy);
  params.push_back(st.seq);
  params.push_back(st.task);
  params.push_back(st.task_proxy);

  auto loss_fn = [&](Tape& t) {
    TokenSet out = stack_forward(t, st, blocks);
    Tensor probe = t.add(t.mean(out.task), t.mean(out.cat_proxy));
    return t.add(probe, t.mean(out.seq_proxy));
  };
  auto rep = grad_check_params(loss_fn, params, 1e-4, 1e-4);
  INFO("max_rel_error ", rep.max_rel_error, " at ", rep.worst_entry);
  CHECK(rep.pass);
}

TEST_CASE("every parameter group receives gradient on a random batch") {
  FeatureSchema s = toy_schema();
  s.num_tasks = 2;
  ModelConfig mc;
  mc.num_blocks = 2;
  Model model = Model::init(s, mc, 99);
  Rng rng(17);
  std::vector<Example> batch;
  for (int e = 0; e < 4; ++e) {
    Example ex;
    ex.user_id = "u" + std::to_string(e);
    for (std::size_t j = 0; j < s.num_fields; ++j) {
      ex.categorical.push_back(1 + rng.uniform_index(s.cardinalities[j]));
    }
    for (std::size_t a = 0; a < s.num_behaviors; ++a) {
      std::vector<std::size_t> items(1 + rng.uniform_index(s.max_lens[a]));
      for (auto& it : items) it = 1 + rng.uniform_index(s.seq_vocabs[a]);
      ex.sequences.push_back(items);
    }
    for (std::size_t i = 0; i < s.num_tasks; ++i) {
      ex.labels.push_back(static_cast<int>(rng.uniform_index(2)));
      ex.label_mask.push_back(1);
    }
    batch.push_back(ex);
  }
  // Cover every embedding row across the batch so each table gets touched.
  batch[0].categorical = {1, 1};
  batch[1].categorical = {2, 2};
  batch[2].categorical = {3, 3};
  batch[0].sequences[0] = {1, 2, 3};
  batch[1].sequences[0] = {4};

  std::vector<Tensor> params = model.parameters();
  for (Tensor& p : params) p.zero_grad();
  Tape t;
  Tensor loss = model.batch_loss(t, batch);
  t.backward(loss);
  for (const Tensor& p : params) {
    bool nonzero = false;
    for (double g : p.grad()) nonzero = nonzero || g != 0.0;
    INFO("parameter ", p.name());
    CHECK(nonzero);
  }
}
