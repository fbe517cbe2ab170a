#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fap/mlp.hpp"
#include "fap/rng.hpp"

namespace fap::testing {

inline double relative_gap(double a, double b) {
  double denom = std::max(std::abs(a), std::abs(b));
  if (denom < 1e-8) return std::abs(a - b);
  return std::abs(a - b) / denom;
}

// Central finite differences of the full training loss; the independent
// oracle for every backprop check.
inline Eigen::VectorXd fd_gradient(const MLPNetwork& net, const Eigen::MatrixXd& X,
                                   const Eigen::MatrixXd& y, double lambda,
                                   double h = 1e-5) {
  Eigen::VectorXd theta = flatten_parameters(net);
  Eigen::VectorXd grad(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    auto eval = [&](double delta) {
      MLPNetwork probe = net;
      Eigen::VectorXd shifted = theta;
      shifted(i) += delta;
      unflatten_parameters(probe, shifted);
      Eigen::MatrixXd pred = forward(probe, X, /*training=*/true);
      return l1_mse_loss(pred, y, probe, lambda);
    };
    grad(i) = (eval(h) - eval(-h)) / (2.0 * h);
  }
  return grad;
}

inline double max_gradient_gap(MLPNetwork net, const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& y, double lambda) {
  ForwardCache cache;
  forward(net, X, /*training=*/true, &cache);
  Eigen::VectorXd analytic = backprop(net, cache, y, lambda);
  Eigen::VectorXd numeric = fd_gradient(net, X, y, lambda);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, relative_gap(analytic(i), numeric(i)));
  }
  return worst;
}

// Random net with weights bounded away from zero so the L1 kink and the
// finite-difference step never interact.
inline MLPNetwork random_test_net(int input, const std::vector<int>& hidden,
                                  bool batch_norm, std::uint64_t seed) {
  MLPNetwork net = make_network(input, hidden, 1, batch_norm, seed);
  Rng rng(mix_seed(seed, 99));
  for (auto& layer : net.layers) {
    for (Eigen::Index i = 0; i < layer.W.size(); ++i) {
      double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      layer.W.data()[i] = sign * rng.uniform(0.05, 0.6);
    }
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) {
      layer.b(i) = rng.uniform(-0.3, 0.3);
    }
  }
  return net;
}

}  // namespace fap::testing
