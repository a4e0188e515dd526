#include "infnet/diagnostics.hpp"

#include "infnet/block.hpp"
#include "infnet/heads.hpp"
#include "infnet/model.hpp"

namespace infnet {

namespace {

Tensor random_param(Shape shape, std::uint64_t seed, std::string name) {
  Rng rng(seed);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::parameter(std::move(shape), std::move(v), std::move(name));
}

FeatureSchema audit_schema() {
  FeatureSchema s;
  s.num_fields = 3;
  s.cardinalities = {5, 4, 6};
  s.num_behaviors = 2;
  s.max_lens = {3, 2};
  s.seq_vocabs = {6, 5};
  s.num_tasks = 2;
  s.embed_dim = 8;
  s.num_cat_proxies = 2;
  s.num_shared_tokens = 2;
  return s;
}

std::vector<Example> audit_batch() {
  Example a;
  a.user_id = "u0";
  a.categorical = {2, 1, 5};
  a.sequences = {{1, 4, 2}, {5}};
  a.labels = {1, 0};
  a.label_mask = {1, 1};
  Example b;
  b.user_id = "u1";
  b.categorical = {5, 4, 1};
  b.sequences = {{6}, {}};
  b.labels = {0, 1};
  b.label_mask = {1, 0};
  return {a, b};
}

void check_fn(std::vector<ComponentReport>& out, const std::string& name,
              const TensorFn& f, const Tensor& x, double tol) {
  GradCheckReport rep = grad_check(f, x, 1e-4, tol);
  out.push_back({name, rep.max_rel_error, tol, rep.pass});
}

void check_params(std::vector<ComponentReport>& out, const std::string& name,
                  const std::function<Tensor(Tape&)>& loss_fn,
                  const std::vector<Tensor>& params, double tol) {
  GradCheckReport rep = grad_check_params(loss_fn, params, 1e-4, tol);
  out.push_back({name, rep.max_rel_error, tol, rep.pass});
}

}  // namespace

std::vector<ComponentReport> run_grad_check_suite() {
  std::vector<ComponentReport> out;

  // Individual ops.
  {
    Tensor w = random_param({4, 3}, 11, "w");
    check_fn(out, "matmul",
             [&](Tape& t, const Tensor& v) { return t.matmul(v, w); },
             random_param({3, 4}, 12, "x"), 1e-5);
    Tensor wn = random_param({5, 4}, 13, "wn");
    check_fn(out, "matmul_nt",
             [&](Tape& t, const Tensor& v) { return t.matmul_nt(v, wn); },
             random_param({3, 4}, 14, "x"), 1e-5);
  }
  check_fn(out, "softmax_rows",
           [](Tape& t, const Tensor& v) { return t.softmax_rows(v); },
           random_param({3, 5}, 15, "x"), 1e-5);
  {
    Mask mask{1, 0, 1, 1, 0};
    check_fn(out, "softmax_rows_masked",
             [mask](Tape& t, const Tensor& v) { return t.softmax_rows(v, mask); },
             random_param({3, 5}, 16, "x"), 1e-5);
  }
  check_fn(out, "sigmoid",
           [](Tape& t, const Tensor& v) { return t.sigmoid(v); },
           random_param({2, 6}, 17, "x"), 1e-6);
  {
    Tensor other = random_param({3, 4}, 18, "other");
    check_fn(out, "elementwise",
             [&](Tape& t, const Tensor& v) {
               return t.relu(t.add(t.mul(v, other), t.scale(v, 0.7)));
             },
             random_param({3, 4}, 19, "x"), 1e-5);
  }
  {
    Tensor row = random_param({1, 4}, 20, "row");
    check_fn(out, "rowwise",
             [&](Tape& t, const Tensor& v) {
               return t.mul_rowwise(t.add_rowwise(v, row), row);
             },
             random_param({3, 4}, 21, "x"), 1e-5);
  }
  {
    Tensor extra = random_param({2, 4}, 22, "extra");
    check_fn(out, "reshape_concat_slice",
             [&](Tape& t, const Tensor& v) {
               Tensor c = t.concat_rows({t.reshape(v, {3, 4}), extra});
               return t.concat_cols({t.slice_rows(c, 1, 4), t.slice_rows(c, 0, 3)});
             },
             random_param({4, 3}, 23, "x"), 1e-5);
  }
  {
    Mask mask{1, 0, 1};
    check_fn(out, "reductions",
             [mask](Tape& t, const Tensor& v) {
               return t.concat_cols(
                   {t.sum_rows(v), t.sum_rows_masked(v, mask),
                    t.reshape(t.mean(v), {1, 1})});
             },
             random_param({3, 4}, 24, "x"), 1e-5);
  }
  check_fn(out, "lookup_rows",
           [](Tape& t, const Tensor& v) { return t.lookup_rows(v, {0, 2, 2}); },
           random_param({4, 3}, 25, "table"), 1e-5);

  // Module composites on the audit schema.
  const FeatureSchema schema = audit_schema();
  const std::vector<Example> batch = audit_batch();
  {
    EmbeddingTables tables = EmbeddingTables::init(schema, 31);
    std::vector<Tensor> params{tables.phi_cat_w1, tables.phi_cat_b1,
                               tables.phi_cat_w2, tables.phi_cat_b2,
                               tables.cat_tables[0], tables.cat_tables[1],
                               tables.cat_tables[2]};
    check_params(out, "categorical_proxies",
                 [&](Tape& t) {
                   Tensor c = embed_categorical(t, batch[0], tables, schema);
                   return t.mean(build_categorical_proxies(t, c, tables, schema));
                 },
                 params, 1e-5);
    check_params(out, "sequence_proxies",
                 [&](Tape& t) {
                   auto [seq, mask] = embed_sequences(t, batch[0], tables, schema);
                   return t.mean(build_sequence_proxies(t, seq, mask, tables, schema));
                 },
                 {tables.phi_seq_w, tables.phi_seq_b, tables.seq_tables[0],
                  tables.seq_tables[1]},
                 1e-5);
  }
  {
    Rng rng(32);
    AttentionParams ap = AttentionParams::init(8, 0, 1, rng, "audit_ca");
    Tensor q = random_param({2, 8}, 33, "q");
    Tensor kv = random_param({4, 8}, 34, "kv");
    Mask mask{1, 1, 0, 1};
    check_params(out, "cross_attention",
                 [&](Tape& t) {
                   return t.mean(cross_attention(t, q, kv, kv, ap, &mask));
                 },
                 {ap.w_q[0], ap.w_k[0], ap.w_v[0], q, kv}, 1e-5);
  }
  {
    Rng rng(35);
    GateParams gp = GateParams::init(2, 8, rng, "audit_gate");
    Tensor x = random_param({5, 8}, 36, "x");
    Tensor proxy = random_param({2, 8}, 37, "proxy");
    check_params(out, "pgu",
                 [&](Tape& t) { return t.mean(pgu(t, x, proxy, gp)); },
                 {gp.w1, gp.b1, gp.w2, gp.b2, x, proxy}, 1e-5);
  }
  {
    Rng rng(38);
    HeadParams heads = HeadParams::init(schema, rng);
    Tensor task_final = random_param({2, 8}, 39, "task_final");
    std::vector<Tensor> params{task_final};
    heads.append_params(params);
    check_params(out, "heads_predict",
                 [&](Tape& t) {
                   auto probs = predict(t, task_final, heads);
                   Tensor acc = probs[0];
                   for (std::size_t i = 1; i < probs.size(); ++i) {
                     acc = t.add(acc, probs[i]);
                   }
                   return t.mean(acc);
                 },
                 params, 1e-5);
    check_params(out, "multi_task_loss",
                 [&](Tape& t) {
                   std::vector<std::vector<Tensor>> probs{
                       predict(t, task_final, heads)};
                   return multi_task_loss(t, probs, {{1, 0}}, {{1, 1}}, {1.0, 2.0});
                 },
                 params, 1e-5);
  }
  {
    ModelConfig mc;
    mc.num_blocks = 1;
    Model model = Model::init(schema, mc, 40);
    check_params(out, "block",
                 [&](Tape& t) { return model.batch_loss(t, batch); },
                 model.parameters(), 1e-4);
  }
  {
    ModelConfig mc;
    mc.num_blocks = 2;
    Model model = Model::init(schema, mc, 41);
    check_params(out, "full_model_n2",
                 [&](Tape& t) { return model.batch_loss(t, batch); },
                 model.parameters(), 1e-4);
  }
  return out;
}

bool all_pass(const std::vector<ComponentReport>& reports) {
  for (const auto& r : reports) {
    if (!r.pass) return false;
  }
  return true;
}

}  // namespace infnet
