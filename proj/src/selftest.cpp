#include "dcn/selftest.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "dcn/metrics.hpp"
#include "dcn/optim.hpp"

namespace dcn {

namespace {

Tensor random_tensor(const Shape& shape, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so rectifier kinks stay outside the finite-difference step.
Tensor off_zero_tensor(const Shape& shape, SeededRng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
  return t;
}

std::vector<Id> random_sequence(SeededRng& rng, std::size_t length, Id catalog) {
  std::vector<Id> seq(length, 0);
  const std::size_t pads = rng.below(length + 1);
  for (std::size_t t = pads; t < length; ++t) seq[t] = static_cast<Id>(rng.below(catalog) + 1);
  return seq;
}

struct OpCase {
  std::string name;
  OpKind kind;
  std::vector<Parameter> inputs;
  std::function<Var(Tape&, const std::vector<Var>&)> apply;
  std::function<bool(const Parameter&, std::size_t)> skip;
};

std::vector<OpCase> op_cases(SeededRng& rng) {
  using namespace ops;
  const auto p = [](const char* name, Tensor t) { return Parameter(name, std::move(t)); };
  std::vector<OpCase> cases;
  const auto add_case = [&cases](std::string name, OpKind kind, std::vector<Parameter> inputs, auto apply) {
    cases.push_back({std::move(name), kind, std::move(inputs), apply, {}});
  };
  add_case("sigmoid", OpKind::kSigmoid, {p("a", random_tensor({3, 4}, rng, -3, 3))},
           [](Tape& t, const std::vector<Var>& v) { return sigmoid(t, v[0]); });
  add_case("tanh", OpKind::kTanh, {p("a", random_tensor({3, 4}, rng, -2, 2))},
           [](Tape& t, const std::vector<Var>& v) { return ops::tanh(t, v[0]); });
  add_case("relu", OpKind::kRelu, {p("a", off_zero_tensor({3, 4}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return relu(t, v[0]); });
  add_case("add", OpKind::kAdd, {p("a", random_tensor({2, 3}, rng)), p("b", random_tensor({2, 3}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return add(t, v[0], v[1]); });
  add_case("sub", OpKind::kSub, {p("a", random_tensor({2, 3}, rng)), p("b", random_tensor({2, 3}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return sub(t, v[0], v[1]); });
  add_case("mul", OpKind::kMul, {p("a", random_tensor({2, 3}, rng)), p("b", random_tensor({2, 3}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return mul(t, v[0], v[1]); });
  add_case("scale", OpKind::kScale, {p("a", random_tensor({2, 3}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return scale(t, v[0], -1.7); });
  add_case("add_scalar", OpKind::kAddScalar, {p("a", random_tensor({2, 3}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return add_scalar(t, v[0], 0.3); });
  add_case("matmul", OpKind::kMatmul, {p("a", random_tensor({3, 4}, rng)), p("b", random_tensor({4, 2}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return matmul(t, v[0], v[1]); });
  add_case("matmul/transposed", OpKind::kMatmul,
           {p("a", random_tensor({3, 4}, rng)), p("b", random_tensor({2, 4}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return matmul(t, v[0], v[1], Transpose::kRight); });
  add_case("add_bias", OpKind::kAddBias, {p("a", random_tensor({3, 4}, rng)), p("b", random_tensor({4}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return add_bias(t, v[0], v[1]); });
  add_case("concat/rows", OpKind::kConcat, {p("a", random_tensor({2, 3}, rng)), p("b", random_tensor({1, 3}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return concat(t, v[0], v[1], 0); });
  add_case("concat/cols", OpKind::kConcat, {p("a", random_tensor({2, 3}, rng)), p("b", random_tensor({2, 2}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return concat(t, v[0], v[1], 1); });
  add_case("concat/vector", OpKind::kConcat, {p("a", random_tensor({3}, rng)), p("b", random_tensor({2}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return concat(t, v[0], v[1], 0); });
  add_case("gather_rows/frozen_pad", OpKind::kGather, {p("table", random_tensor({5, 3}, rng))},
           [](Tape& t, const std::vector<Var>& v) {
             const std::vector<Id> ids{0, 2, 2, 4, 0};
             return gather_rows(t, v[0], ids, PadRow::kFrozen);
           });
  cases.back().skip = [](const Parameter&, std::size_t k) { return k < 3; };
  add_case("gather_rows/trainable", OpKind::kGather, {p("table", random_tensor({4, 2}, rng))},
           [](Tape& t, const std::vector<Var>& v) {
             const std::vector<Id> ids{0, 3, 0, 1};
             return gather_rows(t, v[0], ids, PadRow::kTrainable);
           });
  add_case("squared_l2", OpKind::kSquaredL2, {p("a", random_tensor({2, 3}, rng)), p("b", random_tensor({2, 3}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return squared_l2(t, v[0], v[1]); });
  add_case("row_squared_distance", OpKind::kRowSquaredDistance,
           {p("a", random_tensor({3, 2}, rng)), p("b", random_tensor({3, 2}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return row_squared_distance(t, v[0], v[1]); });
  add_case("sum", OpKind::kSum, {p("a", random_tensor({2, 3}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return sum(t, v[0]); });
  add_case("weighted_sum", OpKind::kWeightedSum, {p("a", random_tensor({2, 3}, rng))},
           [](Tape& t, const std::vector<Var>& v) {
             return weighted_sum(t, v[0], {0.5, -1.0, 2.0, 0.25, 1.5, -0.75});
           });
  add_case("sum_squares", OpKind::kSumSquares, {p("a", random_tensor({2, 3}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return sum_squares(t, v[0]); });
  add_case("logloss", OpKind::kLogLoss, {p("p", random_tensor({4, 1}, rng, 0.1, 0.9))},
           [](Tape& t, const std::vector<Var>& v) {
             const std::vector<int> labels{1, 0, 0, 1};
             return logloss(t, v[0], labels);
           });
  add_case("row_dot", OpKind::kRowDot, {p("a", random_tensor({3, 4}, rng)), p("b", random_tensor({3, 4}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return row_dot(t, v[0], v[1]); });
  add_case("column", OpKind::kColumn, {p("a", random_tensor({3, 4}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return column(t, v[0], 2); });
  add_case("scale_rows", OpKind::kScaleRows, {p("a", random_tensor({3, 4}, rng)), p("s", random_tensor({3, 1}, rng))},
           [](Tape& t, const std::vector<Var>& v) { return scale_rows(t, v[0], v[1]); });
  add_case("masked_softmax", OpKind::kMaskedSoftmax, {p("logits", random_tensor({3, 4}, rng, -2, 2))},
           [](Tape& t, const std::vector<Var>& v) {
             return masked_softmax(t, v[0], {0, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0});
           });
  return cases;
}

// Fixed, non-uniform weights so every output element reaches the loss with its own scale.
std::vector<double> projection_weights(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k) w[k] = 0.5 + std::sin(1.3 * static_cast<double>(k) + 0.4);
  return w;
}

std::string format_report(const GradCheckReport& r) {
  std::ostringstream s;
  s << "max_rel_error=" << r.max_rel_error << " at " << r.worst_parameter << "[" << r.worst_index
    << "] (analytic " << r.worst_analytic << ", numeric " << r.worst_numeric << ", " << r.checked << " elements)";
  return s.str();
}

}  // namespace

TinyProblem make_tiny_problem(std::uint64_t seed, Backbone backbone, std::size_t embed_dim, std::size_t max_seq_len,
                              std::size_t batch_size, StaticTowerInput static_input) {
  constexpr Id kUsers = 6;
  constexpr Id kItems = 8;
  SeededRng rng(derive_seed(seed, "tiny-problem"));
  TinyProblem problem;
  problem.params = DcnParameters(ModelConfig{kUsers, kItems, embed_dim, max_seq_len, backbone, static_input}, rng);
  for (Parameter* p : problem.params.all())
    if (p->value.rank() == 1)
      for (double& v : p->value.values()) v = rng.uniform(-0.1, 0.1);
  for (std::size_t b = 0; b < batch_size; ++b) {
    DualSample s;
    s.user = static_cast<Id>(rng.below(kUsers) + 1);
    s.item = static_cast<Id>(rng.below(kItems) + 1);
    s.timestamp = static_cast<std::int64_t>(b);
    s.item_seq = random_sequence(rng, max_seq_len, kItems);
    s.user_seq = random_sequence(rng, max_seq_len, kUsers);
    s.label = b % 2 == 0 ? 1 : 0;
    problem.batch.push_back(std::move(s));
  }
  return problem;
}

std::vector<OpGradResult> check_op_gradients(std::uint64_t seed, std::optional<OpKind> fault) {
  SeededRng rng(derive_seed(seed, "op-gradients"));
  auto cases = op_cases(rng);
  std::vector<OpGradResult> results;
  for (auto& c : cases) {
    std::vector<Parameter*> handles;
    for (auto& p : c.inputs) handles.push_back(&p);
    const LossBuilder loss = [&c, &handles](Tape& tape) {
      std::vector<Var> vars;
      for (Parameter* p : handles) vars.push_back(tape.parameter(*p));
      const Var out = c.apply(tape, vars);
      if (tape.value(out).size() == 1) return out;
      return ops::weighted_sum(tape, out, projection_weights(tape.value(out).size()));
    };
    GradCheckOptions options;
    options.fault = fault;
    options.skip = c.skip;
    results.push_back({c.name, c.kind, check_gradients(handles, loss, options)});
  }
  return results;
}

namespace {

void gradient_suite(const SelftestOptions& options, std::vector<CheckOutcome>& out) {
  for (const auto& r : check_op_gradients(options.seed, options.fault)) {
    const bool ok = r.report.max_rel_error < kOpGradTolerance;
    out.push_back({"gradients", "op " + r.name, ok, format_report(r.report)});
  }
  const LossWeights weights{0.1, 0.1, 1e-5, true};
  struct ModelCase {
    std::string name;
    Backbone backbone;
    StaticTowerInput static_input;
    bool aux_on_negatives;
  };
  const std::vector<ModelCase> models{
      {"model gru", Backbone::kGru, StaticTowerInput::kEmbeddings, true},
      {"model attention", Backbone::kAttention, StaticTowerInput::kEmbeddings, true},
      {"model gru static=hidden positives-only", Backbone::kGru, StaticTowerInput::kHidden, false},
  };
  for (const auto& m : models) {
    TinyProblem problem = make_tiny_problem(options.seed, m.backbone, 4, 5, 3, m.static_input);
    LossWeights w = weights;
    w.aux_on_negatives = m.aux_on_negatives;
    GradCheckOptions gopt;
    gopt.fault = options.fault;
    const auto report = check_model_gradients(problem.params, problem.batch, w, ForwardMode::kFull, gopt);
    out.push_back({"gradients", m.name, report.max_rel_error < kModelGradTolerance, format_report(report)});
  }
}

void metric_suite(const SelftestOptions& options, std::vector<CheckOutcome>& out) {
  const auto expect = [&out](std::string name, double got, double want, double tol = 1e-12) {
    std::ostringstream d;
    d.precision(17);
    d << "got " << got << ", expected " << want;
    out.push_back({"metrics", std::move(name), std::abs(got - want) <= tol, d.str()});
  };
  const auto group = [](std::vector<double> scores, std::vector<int> labels) {
    ScoredGroup g;
    for (std::size_t k = 0; k < scores.size(); ++k) g.candidates.push_back({scores[k], labels[k]});
    return g;
  };
  expect("auc positive first", *auc(group({0.9, 0.1, 0.5}, {1, 0, 0}).candidates), 1.0);
  expect("auc one of two pairs", *auc(group({0.3, 0.5, 0.1}, {1, 0, 0}).candidates), 0.5);
  expect("auc tie", *auc(group({0.4, 0.4}, {1, 0}).candidates), 0.5);
  out.push_back({"metrics", "auc single class skipped", !auc(group({0.1, 0.2}, {1, 1}).candidates).has_value(), ""});

  SeededRng rng(derive_seed(options.seed, "metric-oracle"));
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    ScoredGroup g;
    const std::size_t n = 2 + rng.below(40);
    for (std::size_t k = 0; k < n; ++k)
      g.candidates.push_back({static_cast<double>(rng.below(10)) / 10.0, k < 2 ? static_cast<int>(k) : static_cast<int>(rng.below(2))});
    worst = std::max(worst, std::abs(*auc(g.candidates) - *auc_rank_sum(g.candidates)));
  }
  expect("auc pairwise equals rank-sum", worst, 0.0);

  std::vector<ScoredGroup> weighted{group({0.9, 0.8, 0.1}, {1, 1, 0}), group({0.3, 0.5, 0.1}, {1, 0, 0})};
  expect("gauc weighted by positives", gauc(weighted), 2.5 / 3.0);
  std::vector<ScoredGroup> ranks{group({0.9, 0.1}, {1, 0}), group({0.1, 0.9, 0.8, 0.7}, {1, 0, 0, 0})};
  expect("mrr ranks 1 and 4", mrr(ranks), 0.625);
  expect("mrr tie is pessimistic", mrr(std::vector<ScoredGroup>{group({0.5, 0.5}, {1, 0})}), 0.5);

  const auto single_positive_at = [&group](std::size_t rank) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t r = 1; r <= 20; ++r) {
      scores.push_back(1.0 - 0.01 * static_cast<double>(r));
      labels.push_back(r == rank ? 1 : 0);
    }
    return group(scores, labels);
  };
  expect("ndcg@10 rank 1", ndcg_at_k(single_positive_at(1).candidates, 10), 1.0);
  expect("ndcg@10 rank 3", ndcg_at_k(single_positive_at(3).candidates, 10), 0.5);
  expect("ndcg@10 rank 11", ndcg_at_k(single_positive_at(11).candidates, 10), 0.0);
}

bool all_zero(const Tensor& t) {
  for (double v : t.values())
    if (v != 0.0) return false;
  return true;
}

bool group_grads_zero(std::initializer_list<const Parameter*> params) {
  for (const Parameter* p : params)
    if (!all_zero(p->grad)) return false;
  return true;
}

void invariant_suite(const SelftestOptions& options, std::vector<CheckOutcome>& out) {
  {
    TinyProblem problem = make_tiny_problem(options.seed);
    const auto handles = problem.params.all();
    Adam adam(handles, AdamConfig{.lr = 1e-2});
    for (int step = 0; step < 100; ++step) {
      problem.params.zero_grad();
      Tape tape;
      const auto outputs = forward(tape, problem.params, problem.batch, LossWeights{0.1, 0.1, 1e-3, true});
      tape.backward(outputs.loss_total);
      adam.step();
    }
    const std::size_t d = problem.params.config.embed_dim;
    bool zero = true;
    for (std::size_t k = 0; k < d; ++k)
      zero = zero && problem.params.user_embedding.value[k] == 0.0 && problem.params.item_embedding.value[k] == 0.0;
    out.push_back({"invariants", "pad rows zero after 100 steps", zero, ""});
  }
  {
    SeededRng rng(derive_seed(options.seed, "left-pad"));
    double worst = 0.0;
    for (int draw = 0; draw < 200; ++draw) {
      const std::size_t d = 1 + rng.below(6);
      const std::size_t len = 1 + rng.below(6);
      const std::size_t pads = rng.below(6);
      Parameter w_z("w_z", random_tensor({d, 2 * d}, rng, -2, 2));
      Parameter w_r("w_r", random_tensor({d, 2 * d}, rng, -2, 2));
      Parameter w_h("w_h", random_tensor({d, 2 * d}, rng, -2, 2));
      Tensor table = random_tensor({8, d}, rng, -2, 2);
      for (std::size_t k = 0; k < d; ++k) table[k] = 0.0;
      std::vector<Id> seq(len);
      for (auto& id : seq) id = static_cast<Id>(rng.below(7) + 1);
      std::vector<Id> padded(pads, 0);
      padded.insert(padded.end(), seq.begin(), seq.end());
      const auto encode_one = [&](const std::vector<Id>& ids) {
        Tape tape;
        const GruVars vars{tape.parameter(w_z), tape.parameter(w_r), tape.parameter(w_h)};
        const std::vector<std::vector<Id>> batch{ids};
        return tape.value(gru_encode(tape, embed_sequences(tape, tape.view(table), batch), vars));
      };
      const Tensor a = encode_one(seq);
      const Tensor b = encode_one(padded);
      for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
    }
    out.push_back({"invariants", "gru left-pad invariance", worst <= 1e-12, "max diff " + std::to_string(worst)});
  }
  {
    TinyProblem problem = make_tiny_problem(options.seed + 1);
    Tape tape;
    const auto o = forward(tape, problem.params, problem.batch, LossWeights{0.5, 0.5, 0.0, true});
    const auto values = loss_values(tape, o);
    Tape eq;
    const Var x = eq.constant(Tensor({3, 4}, 0.25));
    const Var p = eq.constant(Tensor({3, 1}, 0.3));
    const double re = eq.value(representation_contrastive_loss(eq, x, x, x, x, 1.0)).item();
    const double ie = eq.value(interest_contrastive_loss(eq, p, p, p, 1.0)).item();
    out.push_back({"invariants", "contrastive losses non-negative, zero at equality",
                   values.repr >= 0.0 && values.interest >= 0.0 && re == 0.0 && ie == 0.0, ""});
  }
  {
    TinyProblem problem = make_tiny_problem(options.seed + 2);
    auto& p = problem.params;
    const auto grads_with = [&](LossWeights w) {
      p.zero_grad();
      Tape tape;
      const auto o = forward(tape, p, problem.batch, w);
      tape.backward(o.loss_total);
      return loss_values(tape, o);
    };
    grads_with(LossWeights{0.0, 0.3, 1e-4, true});
    const bool dr_off = group_grads_zero({&p.item_to_user.w, &p.item_to_user.b, &p.user_to_item.w, &p.user_to_item.b});
    grads_with(LossWeights{0.3, 0.0, 1e-4, true});
    const auto& t = p.next_user_tower;
    const bool di_off = group_grads_zero({&t.w1, &t.b1, &t.w2, &t.b2, &t.w3, &t.b3});
    const auto both = grads_with(LossWeights{0.0, 0.0, 1e-4, true});
    out.push_back({"invariants", "DR off: transform gradients exactly zero", dr_off, ""});
    out.push_back({"invariants", "DI off: next-user tower gradients exactly zero", di_off, ""});
    out.push_back({"invariants", "both off: L_total == L_i + penalty", both.total == both.item + both.reg, ""});
  }
  {
    TinyProblem problem = make_tiny_problem(options.seed + 3);
    const auto probabilities = [&problem] {
      Tape tape;
      const auto o = forward(tape, problem.params, problem.batch, LossWeights{0.1, 0.1, 0.0, true});
      return std::make_pair(tape.value(o.p_item), tape.value(*o.p_static));
    };
    const auto before = probabilities();
    for (double& v : problem.params.next_user_tower.w1.value.values()) v += 0.5;
    const auto after = probabilities();
    out.push_back({"invariants", "next-user tower does not feed p_item or p_static", before == after, ""});
  }
}

}  // namespace

std::vector<CheckOutcome> run_selftest(const SelftestOptions& options) {
  std::vector<CheckOutcome> out;
  gradient_suite(options, out);
  metric_suite(options, out);
  invariant_suite(options, out);
  return out;
}

bool print_selftest_summary(std::ostream& out, const std::vector<CheckOutcome>& outcomes) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  std::vector<std::string> order;
  for (const auto& o : outcomes) {
    if (!counts.contains(o.suite)) order.push_back(o.suite);
    auto& [passed, total] = counts[o.suite];
    ++total;
    if (o.passed) ++passed;
  }
  bool ok = true;
  for (const auto& suite : order) {
    const auto [passed, total] = counts[suite];
    out << suite << ": " << passed << "/" << total << " passed\n";
    ok = ok && passed == total;
  }
  for (const auto& o : outcomes)
    if (!o.passed) out << "FAIL " << o.suite << " / " << o.name << (o.detail.empty() ? "" : ": " + o.detail) << "\n";
  return ok;
}

}  // namespace dcn
