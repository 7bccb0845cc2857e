// tests/test_util.hpp
//
// Shared test helpers. The central-difference gradient checker here is the
// independent oracle for every backward implementation: it never calls into
// the autodiff machinery except to run forward passes on constant tensors.

// Copyright 2026  PDAF Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pdaf/common.hpp"
#include "pdaf/tensor.hpp"

namespace pdaf {
namespace testing {

// Tolerances used throughout: single ops must match central differences to
// 1e-4 in relative error, composed blocks to 1e-3.
inline constexpr double kOpGradTol = 1e-4;
inline constexpr double kBlockGradTol = 1e-3;
inline constexpr double kFdStep = 1e-5;

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline std::vector<double> random_values(Rng &rng, size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double &x : v) x = rng.uniform(lo, hi);
  return v;
}

inline Tensor random_tensor(Rng &rng, Shape shape, double lo, double hi,
                            bool requires_grad = false) {
  const size_t n = static_cast<size_t>(shape_numel(shape));
  return Tensor::from_data(std::move(shape), random_values(rng, n, lo, hi), requires_grad);
}

/// Reduce any tensor to a scalar with fixed random weights so every output
/// element receives a distinct upstream gradient. Weights are constants.
inline Tensor weighted_sum(const Tensor &t, const std::vector<double> &w) {
  return sum(mul(t, Tensor::from_data(t.shape(), w)));
}

/// One gradient-check problem: leaf shapes and values plus a pure function
/// from those leaves to a scalar loss.
struct GradProblem {
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
  std::function<Tensor(const std::vector<Tensor> &)> loss;
};

struct GradReport {
  double max_rel = 0.0;
  std::string worst;  // "leaf k elem i: analytic=..., numeric=..."
};

/// Runs backward once on grad-requiring leaves, then perturbs every leaf
/// element by +/-h on constant rebuilds of the graph and compares.
inline GradReport check_gradients(const GradProblem &p, double h = kFdStep) {
  std::vector<Tensor> leaves;
  leaves.reserve(p.shapes.size());
  for (size_t k = 0; k < p.shapes.size(); ++k) {
    leaves.push_back(Tensor::from_data(p.shapes[k], p.values[k], /*requires_grad=*/true));
  }
  Tensor loss = p.loss(leaves);
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (Tensor &l : leaves) {
    analytic.push_back(l.has_grad() ? l.grad()
                                    : std::vector<double>(static_cast<size_t>(l.numel()), 0.0));
  }

  auto eval = [&p](const std::vector<std::vector<double>> &vals) {
    std::vector<Tensor> ls;
    ls.reserve(p.shapes.size());
    for (size_t k = 0; k < p.shapes.size(); ++k) {
      ls.push_back(Tensor::from_data(p.shapes[k], vals[k], /*requires_grad=*/false));
    }
    return p.loss(ls).at(0);
  };

  GradReport rep;
  std::vector<std::vector<double>> vals = p.values;
  for (size_t k = 0; k < vals.size(); ++k) {
    for (size_t i = 0; i < vals[k].size(); ++i) {
      const double orig = vals[k][i];
      vals[k][i] = orig + h;
      const double fp = eval(vals);
      vals[k][i] = orig - h;
      const double fm = eval(vals);
      vals[k][i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double r = rel_err(analytic[k][i], numeric);
      if (r > rep.max_rel) {
        rep.max_rel = r;
        rep.worst = "leaf " + std::to_string(k) + " elem " + std::to_string(i) +
                    ": analytic=" + std::to_string(analytic[k][i]) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  return rep;
}

namespace detail {

// Shapes stay small so a full FD sweep over 50 instances per op is cheap.
inline int64_t small_dim(Rng &rng) { return 2 + static_cast<int64_t>(rng.uniform_int(4)); }

inline GradProblem unary_problem(Rng &rng, double lo, double hi,
                                 std::function<Tensor(const Tensor &)> op) {
  const int64_t r = small_dim(rng), c = small_dim(rng);
  GradProblem p;
  p.shapes = {{r, c}};
  p.values = {random_values(rng, static_cast<size_t>(r * c), lo, hi)};
  // probe the op once so the weights match its output size (reductions give {1})
  Tensor probe = op(Tensor::from_data(p.shapes[0], p.values[0]));
  auto w = random_values(rng, static_cast<size_t>(probe.numel()), -1.0, 1.0);
  p.loss = [op, w](const std::vector<Tensor> &ls) { return weighted_sum(op(ls[0]), w); };
  return p;
}

}  // namespace detail

/// Per-op gradient sweep against the finite-difference oracle. Returns the
/// worst relative error seen for each op over `instances` random problems.
inline std::map<std::string, double> run_op_gradcheck_suite(int instances, uint64_t seed) {
  using Gen = std::function<GradProblem(Rng &)>;
  std::vector<std::pair<std::string, Gen>> ops;

  ops.emplace_back("matmul", [](Rng &rng) {
    const int64_t m = detail::small_dim(rng), k = detail::small_dim(rng),
                  n = detail::small_dim(rng);
    GradProblem p;
    p.shapes = {{m, k}, {k, n}};
    p.values = {random_values(rng, static_cast<size_t>(m * k), -2.0, 2.0),
                random_values(rng, static_cast<size_t>(k * n), -2.0, 2.0)};
    auto w = random_values(rng, static_cast<size_t>(m * n), -1.0, 1.0);
    p.loss = [w](const std::vector<Tensor> &ls) { return weighted_sum(matmul(ls[0], ls[1]), w); };
    return p;
  });

  ops.emplace_back("transpose", [](Rng &rng) {
    const int64_t m = detail::small_dim(rng), n = detail::small_dim(rng);
    GradProblem p;
    p.shapes = {{m, n}};
    p.values = {random_values(rng, static_cast<size_t>(m * n), -2.0, 2.0)};
    auto w = random_values(rng, static_cast<size_t>(m * n), -1.0, 1.0);
    p.loss = [w](const std::vector<Tensor> &ls) { return weighted_sum(transpose(ls[0]), w); };
    return p;
  });

  enum class Rhs { kSame, kRow, kScalar };
  auto binary_gen = [](Rhs rhs, Tensor (*op)(const Tensor &, const Tensor &)) {
    return [rhs, op](Rng &rng) {
      const int64_t r = detail::small_dim(rng), c = detail::small_dim(rng);
      Shape bshape = rhs == Rhs::kSame ? Shape{r, c} : rhs == Rhs::kRow ? Shape{1, c} : Shape{1};
      GradProblem p;
      p.shapes = {{r, c}, bshape};
      p.values = {random_values(rng, static_cast<size_t>(r * c), -2.0, 2.0),
                  random_values(rng, static_cast<size_t>(shape_numel(bshape)), -2.0, 2.0)};
      auto w = random_values(rng, static_cast<size_t>(r * c), -1.0, 1.0);
      p.loss = [op, w](const std::vector<Tensor> &ls) { return weighted_sum(op(ls[0], ls[1]), w); };
      return p;
    };
  };
  ops.emplace_back("add_same", binary_gen(Rhs::kSame, &add));
  ops.emplace_back("add_row", binary_gen(Rhs::kRow, &add));
  ops.emplace_back("add_bscalar", binary_gen(Rhs::kScalar, &add));
  ops.emplace_back("sub_same", binary_gen(Rhs::kSame, &sub));
  ops.emplace_back("sub_row", binary_gen(Rhs::kRow, &sub));
  ops.emplace_back("sub_bscalar", binary_gen(Rhs::kScalar, &sub));
  ops.emplace_back("mul_same", binary_gen(Rhs::kSame, &mul));
  ops.emplace_back("mul_row", binary_gen(Rhs::kRow, &mul));
  ops.emplace_back("mul_bscalar", binary_gen(Rhs::kScalar, &mul));

  ops.emplace_back("scale", [](Rng &rng) {
    const double c = rng.uniform(-2.0, 2.0);
    return detail::unary_problem(rng, -2.0, 2.0, [c](const Tensor &t) { return scale(t, c); });
  });
  ops.emplace_back("add_scalar", [](Rng &rng) {
    const double c = rng.uniform(-2.0, 2.0);
    return detail::unary_problem(rng, -2.0, 2.0, [c](const Tensor &t) { return add_scalar(t, c); });
  });
  // relu inputs kept off the kink; the subgradient at zero has no FD analogue.
  ops.emplace_back("relu", [](Rng &rng) {
    auto p = detail::unary_problem(rng, -2.0, 2.0, [](const Tensor &t) { return relu(t); });
    for (double &x : p.values[0]) {
      if (std::abs(x) < 0.05) x = x < 0.0 ? x - 0.05 : x + 0.05;
    }
    return p;
  });
  ops.emplace_back("log", [](Rng &rng) {
    return detail::unary_problem(rng, 0.1, 3.0, [](const Tensor &t) { return log(t); });
  });
  ops.emplace_back("exp", [](Rng &rng) {
    return detail::unary_problem(rng, -2.0, 2.0, [](const Tensor &t) { return exp(t); });
  });
  ops.emplace_back("sqrt", [](Rng &rng) {
    return detail::unary_problem(rng, 0.1, 4.0, [](const Tensor &t) { return sqrt(t); });
  });
  ops.emplace_back("sum", [](Rng &rng) {
    return detail::unary_problem(rng, -2.0, 2.0, [](const Tensor &t) { return sum(t); });
  });
  ops.emplace_back("mean", [](Rng &rng) {
    return detail::unary_problem(rng, -2.0, 2.0, [](const Tensor &t) { return mean(t); });
  });
  ops.emplace_back("stddev", [](Rng &rng) {
    auto p = detail::unary_problem(rng, -1.0, 1.0, [](const Tensor &t) { return stddev(t); });
    // guarantee spread so the zero-variance singularity stays far away
    for (size_t i = 0; i < p.values[0].size(); ++i) p.values[0][i] += 0.3 * static_cast<double>(i);
    return p;
  });

  auto concat_gen = [](int axis) {
    return [axis](Rng &rng) {
      const int64_t fixed = detail::small_dim(rng);
      const int parts = 2 + static_cast<int>(rng.uniform_int(2));
      GradProblem p;
      int64_t total = 0;
      for (int k = 0; k < parts; ++k) {
        const int64_t ext = detail::small_dim(rng);
        total += ext;
        Shape s = axis == 0 ? Shape{ext, fixed} : Shape{fixed, ext};
        p.shapes.push_back(s);
        p.values.push_back(random_values(rng, static_cast<size_t>(shape_numel(s)), -2.0, 2.0));
      }
      const int64_t on = axis == 0 ? total * fixed : fixed * total;
      auto w = random_values(rng, static_cast<size_t>(on), -1.0, 1.0);
      p.loss = [axis, w](const std::vector<Tensor> &ls) { return weighted_sum(concat(ls, axis), w); };
      return p;
    };
  };
  ops.emplace_back("concat_rows", concat_gen(0));
  ops.emplace_back("concat_cols", concat_gen(1));

  // sampling with replacement exercises the scatter-add path
  ops.emplace_back("gather", [](Rng &rng) {
    const int64_t n = 3 + static_cast<int64_t>(rng.uniform_int(4));
    const size_t ni = static_cast<size_t>(n) + 2;
    std::vector<int> idx(ni);
    for (int &i : idx) i = static_cast<int>(rng.uniform_int(n));
    GradProblem p;
    p.shapes = {{n}};
    p.values = {random_values(rng, static_cast<size_t>(n), -2.0, 2.0)};
    auto w = random_values(rng, ni, -1.0, 1.0);
    p.loss = [idx, w](const std::vector<Tensor> &ls) { return weighted_sum(gather(ls[0], idx), w); };
    return p;
  });

  ops.emplace_back("softmax", [](Rng &rng) {
    return detail::unary_problem(rng, -3.0, 3.0,
                                 [](const Tensor &t) { return softmax_lastdim(t); });
  });
  ops.emplace_back("softmax_bias_full", [](Rng &rng) {
    const int64_t r = detail::small_dim(rng), c = detail::small_dim(rng);
    GradProblem p;
    p.shapes = {{r, c}, {r, c}};
    p.values = {random_values(rng, static_cast<size_t>(r * c), -3.0, 3.0),
                random_values(rng, static_cast<size_t>(r * c), -2.0, 2.0)};
    auto w = random_values(rng, static_cast<size_t>(r * c), -1.0, 1.0);
    p.loss = [w](const std::vector<Tensor> &ls) {
      return weighted_sum(softmax_lastdim(ls[0], ls[1]), w);
    };
    return p;
  });
  ops.emplace_back("softmax_bias_row", [](Rng &rng) {
    const int64_t r = detail::small_dim(rng), c = detail::small_dim(rng);
    GradProblem p;
    p.shapes = {{r, c}, {1, c}};
    p.values = {random_values(rng, static_cast<size_t>(r * c), -3.0, 3.0),
                random_values(rng, static_cast<size_t>(c), -2.0, 2.0)};
    auto w = random_values(rng, static_cast<size_t>(r * c), -1.0, 1.0);
    p.loss = [w](const std::vector<Tensor> &ls) {
      return weighted_sum(softmax_lastdim(ls[0], ls[1]), w);
    };
    return p;
  });
  ops.emplace_back("softmax_masked", [](Rng &rng) {
    const int64_t r = detail::small_dim(rng), c = detail::small_dim(rng);
    std::vector<bool> attendable(static_cast<size_t>(c));
    for (size_t j = 0; j < attendable.size(); ++j) attendable[j] = rng.uniform() < 0.5;
    attendable[static_cast<size_t>(rng.uniform_int(c))] = true;
    GradProblem p;
    p.shapes = {{r, c}, {c}};
    p.values = {random_values(rng, static_cast<size_t>(r * c), -3.0, 3.0),
                random_values(rng, static_cast<size_t>(c), -2.0, 2.0)};
    auto w = random_values(rng, static_cast<size_t>(r * c), -1.0, 1.0);
    p.loss = [attendable, w](const std::vector<Tensor> &ls) {
      return weighted_sum(softmax_lastdim(ls[0], masked_key_bias(ls[1], attendable)), w);
    };
    return p;
  });

  ops.emplace_back("layernorm", [](Rng &rng) {
    auto p = detail::unary_problem(rng, -2.0, 2.0,
                                   [](const Tensor &t) { return layernorm_lastdim(t); });
    // keep per-row variance comfortably positive
    for (size_t i = 0; i < p.values[0].size(); ++i) p.values[0][i] += 0.4 * static_cast<double>(i % 5);
    return p;
  });

  auto batchnorm_gen = [](Phase phase) {
    return [phase](Rng &rng) {
      const int64_t b = 2 + static_cast<int64_t>(rng.uniform_int(4));
      const int64_t d = detail::small_dim(rng);
      GradProblem p;
      p.shapes = {{b, d}, {d}, {d}};
      p.values = {random_values(rng, static_cast<size_t>(b * d), -2.0, 2.0),
                  random_values(rng, static_cast<size_t>(d), 0.5, 1.5),
                  random_values(rng, static_cast<size_t>(d), -1.0, 1.0)};
      auto w = random_values(rng, static_cast<size_t>(b * d), -1.0, 1.0);
      BatchNormState fixed = BatchNormState::init(d);
      if (phase == Phase::kInfer) {
        fixed.running_mean = random_values(rng, static_cast<size_t>(d), -0.5, 0.5);
        fixed.running_var = random_values(rng, static_cast<size_t>(d), 0.5, 2.0);
      }
      p.loss = [phase, w, fixed](const std::vector<Tensor> &ls) {
        BatchNormState st = fixed;  // fresh stats per evaluation
        return weighted_sum(batchnorm(ls[0], ls[1], ls[2], st, phase), w);
      };
      return p;
    };
  };
  ops.emplace_back("batchnorm_train", batchnorm_gen(Phase::kTrain));
  ops.emplace_back("batchnorm_infer", batchnorm_gen(Phase::kInfer));

  ops.emplace_back("cross_entropy", [](Rng &rng) {
    const int64_t b = detail::small_dim(rng), c = detail::small_dim(rng);
    std::vector<int> targets(static_cast<size_t>(b));
    for (int &t : targets) t = static_cast<int>(rng.uniform_int(c));
    GradProblem p;
    p.shapes = {{b, c}};
    p.values = {random_values(rng, static_cast<size_t>(b * c), -3.0, 3.0)};
    p.loss = [targets](const std::vector<Tensor> &ls) {
      return cross_entropy_mean(ls[0], targets);
    };
    return p;
  });

  std::map<std::string, double> worst;
  Rng rng(seed);
  for (auto &[name, gen] : ops) {
    Rng op_rng = rng.fork(fnv1a64(name));
    double mx = 0.0;
    for (int i = 0; i < instances; ++i) {
      GradProblem p = gen(op_rng);
      mx = std::max(mx, check_gradients(p).max_rel);
    }
    worst[name] = mx;
  }
  return worst;
}

}  // namespace testing
}  // namespace pdaf
