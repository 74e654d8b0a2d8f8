#include "lfdet/suites.hpp"

#include <algorithm>
#include <functional>
#include <utility>

#include "lfdet/autograd.hpp"
#include "lfdet/lfsa.hpp"
#include "lfdet/random.hpp"
#include "lfdet/toy.hpp"

namespace lfdet {

double SuiteReport::max_error() const {
  double m = 0.0;
  for (const GroupError& g : groups) m = std::max(m, g.rel_error);
  return m;
}

bool SuiteReport::passed() const {
  return std::all_of(groups.begin(), groups.end(),
                     [&](const GroupError& g) { return g.rel_error < tolerance; });
}

namespace {

using TapeFn = std::function<ad::Var(const std::vector<ad::Var>&)>;

struct Input {
  std::string name;
  Tensor value;
};

// Checks d/dx of sum(f(x) * R) for a fixed random R, one group per input.
void check_op(SuiteReport& report, const std::string& op, std::vector<Input> inputs,
              const TapeFn& f, Rng& rng, const SuiteOptions& opt) {
  Tensor weights;
  const auto objective = [&](ad::Tape& tape, std::vector<ad::Var>& leaves) {
    leaves.clear();
    for (const Input& in : inputs) leaves.push_back(tape.leaf(in.value, in.name));
    ad::Var out = f(leaves);
    if (weights.size() == 0) weights = rng.uniform_tensor(out.shape(), -1.0, 1.0);
    return ad::sum(ad::mul(out, tape.leaf(weights, "weights")));
  };
  const auto value = [&] {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    return objective(tape, leaves).value()[0];
  };

  ad::Tape tape;
  std::vector<ad::Var> leaves;
  ad::Var loss = objective(tape, leaves);
  const ad::Gradients grads = tape.backward(loss);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor analytic = grads.wrt(leaves[i]);
    analytic[0] += opt.perturb;
    const Tensor numeric = finite_diff_grad_inplace(value, inputs[i].value, opt.eps);
    report.groups.push_back({op + "/" + inputs[i].name, relative_error(analytic, numeric)});
  }
}

}  // namespace

SuiteReport primitive_suite(const SuiteOptions& opt) {
  SuiteReport r{"primitive", 1e-6, {}};
  Rng rng(derive_seed(opt.seed, 1));
  const auto u = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    return rng.uniform_tensor(std::move(s), lo, hi);
  };
  using V = std::vector<ad::Var>;

  check_op(r, "matmul", {{"a", u({3, 4})}, {"b", u({4, 5})}},
           [](const V& v) { return ad::matmul(v[0], v[1]); }, rng, opt);
  check_op(r, "transpose", {{"x", u({3, 4})}}, [](const V& v) { return ad::transpose(v[0]); },
           rng, opt);
  check_op(r, "transpose3", {{"x", u({2, 3, 4})}},
           [](const V& v) { return ad::transpose(v[0]); }, rng, opt);
  check_op(r, "softmax", {{"x", u({3, 5}, -3, 3)}},
           [](const V& v) { return ad::softmax_lastdim(v[0]); }, rng, opt);
  check_op(r, "conv2d", {{"x", u({2, 5, 6})}, {"w", u({3, 2, 3, 3})}, {"b", u({3})}},
           [](const V& v) { return ad::conv2d(v[0], v[1], v[2], {1, 1, 1}); }, rng, opt);
  check_op(r, "conv2d_stride2", {{"x", u({2, 7, 6})}, {"w", u({3, 2, 3, 3})}},
           [](const V& v) { return ad::conv2d(v[0], v[1], std::nullopt, {2, 1, 1}); }, rng, opt);
  check_op(r, "conv2d_groups", {{"x", u({4, 5, 5})}, {"w", u({6, 2, 3, 3})}, {"b", u({6})}},
           [](const V& v) { return ad::conv2d(v[0], v[1], v[2], {1, 1, 2}); }, rng, opt);
  check_op(r, "conv2d_1x1", {{"x", u({3, 4, 5})}, {"w", u({2, 3, 1, 1})}, {"b", u({2})}},
           [](const V& v) { return ad::conv2d(v[0], v[1], v[2], {}); }, rng, opt);
  check_op(r, "depthwise", {{"x", u({3, 6, 5})}, {"w", u({3, 1, 7, 7})}, {"b", u({3})}},
           [](const V& v) { return ad::depthwise_conv2d(v[0], v[1], v[2], 3); }, rng, opt);
  for (const char* name : {"row_attention", "col_attention"}) {
    const bool row = name[0] == 'r';
    check_op(r, name, {{"q", u({2, 4, 5})}, {"k", u({2, 4, 5})}, {"v", u({2, 4, 5})}},
             [row](const V& v) {
               return row ? ad::row_attention(v[0], v[1], v[2]) : ad::col_attention(v[0], v[1], v[2]);
             },
             rng, opt);
  }
  check_op(r, "add", {{"a", u({2, 3})}, {"b", u({2, 3})}},
           [](const V& v) { return v[0] + v[1]; }, rng, opt);
  check_op(r, "sub", {{"a", u({2, 3})}, {"b", u({2, 3})}},
           [](const V& v) { return v[0] - v[1]; }, rng, opt);
  check_op(r, "mul", {{"a", u({2, 3})}, {"b", u({2, 3})}},
           [](const V& v) { return v[0] * v[1]; }, rng, opt);
  check_op(r, "div", {{"a", u({2, 3})}, {"b", u({2, 3}, 1.0, 2.0)}},
           [](const V& v) { return v[0] / v[1]; }, rng, opt);
  // Separate the arguments so no finite-difference step crosses a tie.
  Tensor lo = u({2, 3});
  Tensor hi = lo;
  for (std::size_t i = 0; i < hi.size(); ++i) hi[i] += (i % 2 ? 1.0 : -1.0) * rng.uniform(0.1, 0.5);
  check_op(r, "minimum", {{"a", lo}, {"b", hi}},
           [](const V& v) { return ad::minimum(v[0], v[1]); }, rng, opt);
  check_op(r, "maximum", {{"a", lo}, {"b", hi}},
           [](const V& v) { return ad::maximum(v[0], v[1]); }, rng, opt);
  check_op(r, "scale", {{"x", u({4})}}, [](const V& v) { return ad::scale(v[0], -2.5); }, rng,
           opt);
  check_op(r, "add_scalar", {{"x", u({4})}}, [](const V& v) { return ad::add_scalar(v[0], 3.0); },
           rng, opt);
  check_op(r, "square", {{"x", u({4})}}, [](const V& v) { return ad::square(v[0]); }, rng, opt);
  check_op(r, "sigmoid", {{"x", u({4}, -4, 4)}}, [](const V& v) { return ad::sigmoid(v[0]); },
           rng, opt);
  check_op(r, "silu", {{"x", u({4}, -4, 4)}}, [](const V& v) { return ad::silu(v[0]); }, rng, opt);
  check_op(r, "atan", {{"x", u({4}, -3, 3)}}, [](const V& v) { return ad::atan(v[0]); }, rng, opt);
  check_op(r, "sum", {{"x", u({2, 3})}}, [](const V& v) { return ad::sum(v[0]); }, rng, opt);
  check_op(r, "mean", {{"x", u({2, 3})}}, [](const V& v) { return ad::mean(v[0]); }, rng, opt);
  check_op(r, "reshape", {{"x", u({2, 3})}},
           [](const V& v) { return ad::reshape(v[0], {3, 2}); }, rng, opt);
  check_op(r, "gather", {{"x", u({2, 3})}},
           [](const V& v) { return ad::gather(v[0], {5, 0, 0, 2}, {2, 2}); }, rng, opt);
  check_op(r, "concat", {{"a", u({1, 3})}, {"b", u({2, 3})}},
           [](const V& v) { return ad::concat({v[0], v[1]}); }, rng, opt);
  const Tensor targets = Tensor::vector({1.0, 0.0, 0.25, 1.0});
  check_op(r, "bce_with_logits", {{"x", u({4}, -3, 3)}},
           [targets](const V& v) { return ad::bce_with_logits(v[0], targets); }, rng, opt);
  return r;
}

SuiteReport lfsa_suite(const SuiteOptions& opt) {
  SuiteReport r{"lfsa", 1e-6, {}};
  Rng rng(derive_seed(opt.seed, 2));
  LfsaParams params = LfsaParams::random(4, rng);
  std::vector<Input> inputs{{"x", rng.uniform_tensor({4, 8, 8}, -1.0, 1.0)}};
  for (const auto& g : params.groups()) inputs.push_back({g.name, *g.tensor});
  check_op(
      r, "lfsa", std::move(inputs),
      [](const std::vector<ad::Var>& v) {
        LfsaVars p{v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11]};
        return lfsa_forward(v[0], p);
      },
      rng, opt);
  return r;
}

SuiteReport end2end_suite(const SuiteOptions& opt) {
  SuiteReport r{"end2end", 1e-5, {}};
  ToyConfig cfg = ToyConfig::miniature();
  ToyModel model = ToyModel::init(cfg, derive_seed(opt.seed, 3));
  // Random LFSa weights so every group carries gradient.
  Rng rng(derive_seed(opt.seed, 4));
  for (LfsaParams& p : model.lfsa) p = LfsaParams::random(p.channels, rng, 0.3);
  const Scene scene = gen_scene(derive_seed(opt.seed, 5), 2, cfg.scene);
  const AssignmentResult assignment = evaluate(model, scene).assignment;

  const StepResult base = evaluate(model, scene, assignment, true);
  std::vector<NamedTensor> params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor analytic = base.grads[i];
    analytic[0] += opt.perturb;
    const Tensor numeric = finite_diff_grad_inplace(
        [&] { return evaluate(model, scene, assignment).loss; }, *params[i].tensor, opt.eps);
    r.groups.push_back({params[i].name, relative_error(analytic, numeric)});
  }
  return r;
}

}  // namespace lfdet
