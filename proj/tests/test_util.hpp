#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "qrec/autodiff.hpp"
#include "qrec/graph.hpp"

namespace qrec::test {

// 5 questions over 3 concepts, with concept 0 prerequisite to concept 2.
inline KnowledgeGraph toy_graph() {
  return KnowledgeGraph(3, {{0, 2}}, {0, 0, 1, 1, 2});
}

// Plain-double GRU step, written independently of the autodiff engine so it
// can serve as a hand-trace oracle. Weight layout matches GruCellParams:
// wx (in, 3h), wh (h, 3h), gate order [update | reset | candidate].
inline std::vector<double> gru_oracle(std::span<const double> wx, std::span<const double> wh,
                                      std::span<const double> bx, std::span<const double> bh,
                                      std::span<const double> x, std::span<const double> h) {
  const std::size_t in = x.size();
  const std::size_t hs = h.size();
  std::vector<double> gx(3 * hs, 0.0), gh(3 * hs, 0.0);
  for (std::size_t j = 0; j < 3 * hs; ++j) {
    double sx = bx[j], sh = bh[j];
    for (std::size_t i = 0; i < in; ++i) sx += x[i] * wx[i * 3 * hs + j];
    for (std::size_t i = 0; i < hs; ++i) sh += h[i] * wh[i * 3 * hs + j];
    gx[j] = sx;
    gh[j] = sh;
  }
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> out(hs);
  for (std::size_t j = 0; j < hs; ++j) {
    const double z = sigmoid(gx[j] + gh[j]);
    const double r = sigmoid(gx[hs + j] + gh[hs + j]);
    const double n = std::tanh(gx[2 * hs + j] + r * gh[2 * hs + j]);
    out[j] = (1.0 - z) * n + z * h[j];
  }
  return out;
}

// Central finite differences against reverse-mode gradients.
//
// `leaves` must have requires_grad set; `build` constructs the scalar loss
// from their current values. Relative error uses a small floor so
// vanishing gradients compare on FD noise terms sensibly.
inline double fd_rel_error(double g_ad, double g_fd, double floor = 1e-6) {
  return std::abs(g_ad - g_fd) / std::max({std::abs(g_ad), std::abs(g_fd), floor});
}

template <typename BuildLoss>
double max_gradient_error(std::span<ad::Tensor> leaves, BuildLoss build, double eps = 1e-4,
                          double floor = 1e-6) {
  for (ad::Tensor& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.node()->grad.assign(leaf.size(), 0.0);
  }
  {
    ad::Tape tape;
    ad::Tensor loss = build();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> grads;
  grads.reserve(leaves.size());
  for (const ad::Tensor& leaf : leaves) grads.push_back(leaf.grad());

  double max_err = 0.0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    auto& values = leaves[i].mutable_values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double orig = values[j];
      values[j] = orig + eps;
      const double up = build().scalar_value();
      values[j] = orig - eps;
      const double down = build().scalar_value();
      values[j] = orig;
      const double g_fd = (up - down) / (2.0 * eps);
      max_err = std::max(max_err, fd_rel_error(grads[i][j], g_fd, floor));
    }
  }
  return max_err;
}

// Same check over every parameter of a set (model pipelines).
template <typename BuildLoss>
double max_param_gradient_error(ad::ParameterSet& params, BuildLoss build, double eps = 1e-4,
                                double floor = 1e-6) {
  params.zero_grad();
  {
    ad::Tape tape;
    ad::Tensor loss = build();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> grads;
  for (const auto& p : params.all()) grads.push_back(p->grad());

  double max_err = 0.0;
  for (std::size_t i = 0; i < params.all().size(); ++i) {
    auto& values = params.all()[i]->values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double orig = values[j];
      values[j] = orig + eps;
      const double up = build().scalar_value();
      values[j] = orig - eps;
      const double down = build().scalar_value();
      values[j] = orig;
      const double g_fd = (up - down) / (2.0 * eps);
      max_err = std::max(max_err, fd_rel_error(grads[i][j], g_fd, floor));
    }
  }
  params.zero_grad();
  return max_err;
}

}  // namespace qrec::test
