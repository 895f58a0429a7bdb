#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cso/preprocess.hpp"
#include "cso/rng.hpp"

namespace cso {

// L2-penalized logistic regression trained by deterministic full-batch
// gradient descent with backtracking line search. The bias is unpenalized.
struct LogRegModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  double lambda = 0.0;
};

struct CvPlan {
  int folds = 2;
  std::vector<double> lambda_grid;
  int max_iter = 10000;
  double tolerance = 1e-8;

  void validate() const {
    if (folds < 2) throw std::invalid_argument("CvPlan: folds < 2");
    if (lambda_grid.empty()) throw std::invalid_argument("CvPlan: empty lambda grid");
  }
};

inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int i = 0; i < 10; ++i) g.push_back(std::pow(10.0, -4.0 + 8.0 * i / 9.0));
  return g;
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace detail {

// mean binary cross-entropy + (lambda/2) ||w||^2
inline double logreg_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double b, double lambda) {
  const Eigen::ArrayXd z = (X * w).array() + b;
  // log(1 + exp(-|z|)) + max(z,0) - y*z, numerically stable
  const Eigen::ArrayXd softplus = (-z.abs()).exp().log1p() + z.max(0.0);
  const double ce = (softplus - y.array() * z).mean();
  return ce + 0.5 * lambda * w.squaredNorm();
}

inline void logreg_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& w, double b, double lambda,
                            Eigen::VectorXd& gw, double& gb) {
  const Eigen::ArrayXd z = (X * w).array() + b;
  Eigen::ArrayXd p(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) p[i] = sigmoid(z[i]);
  const Eigen::VectorXd r = (p - y.array()).matrix() / static_cast<double>(X.rows());
  gw = X.transpose() * r + lambda * w;
  gb = r.sum();
}

}  // namespace detail

inline LogRegModel train_logreg(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                                int max_iter = 10000, double tolerance = 1e-8) {
  if (X.rows() != y.size()) throw std::invalid_argument("train_logreg: size mismatch");
  LogRegModel m;
  m.lambda = lambda;
  m.weights = Eigen::VectorXd::Zero(X.cols());
  m.bias = 0.0;

  double loss = detail::logreg_loss(X, y, m.weights, m.bias, lambda);
  if (!std::isfinite(loss)) throw std::runtime_error("train_logreg: non-finite loss (unnormalized input?)");
  Eigen::VectorXd gw(X.cols());
  double gb = 0.0;
  double step = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    detail::logreg_gradient(X, y, m.weights, m.bias, lambda, gw, gb);
    const double gnorm2 = gw.squaredNorm() + gb * gb;
    if (std::sqrt(gnorm2) < tolerance) break;
    // Armijo backtracking
    step = std::min(step * 2.0, 1e4);
    for (int bt = 0; bt < 60; ++bt) {
      const Eigen::VectorXd w_new = m.weights - step * gw;
      const double b_new = m.bias - step * gb;
      const double loss_new = detail::logreg_loss(X, y, w_new, b_new, lambda);
      if (std::isfinite(loss_new) && loss_new <= loss - 1e-4 * step * gnorm2) {
        m.weights = w_new;
        m.bias = b_new;
        loss = loss_new;
        break;
      }
      step *= 0.5;
    }
  }
  if (!m.weights.allFinite() || !std::isfinite(m.bias)) {
    throw std::runtime_error("train_logreg: non-finite parameters after training");
  }
  return m;
}

inline double predict_proba(const LogRegModel& m, const Eigen::VectorXd& x) {
  return sigmoid(m.weights.dot(x) + m.bias);
}

struct CvResult {
  double lambda = 0.0;
  LogRegModel model;
  std::vector<double> mean_val_loss;  // per grid point, grid order
};

// 2-fold (or more) cross-validation over the lambda grid; mean validation
// log-loss selects lambda, ties to the larger lambda; refit on all data.
inline CvResult cross_validate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const CvPlan& plan, Rng& rng) {
  plan.validate();
  const Eigen::Index n = X.rows();
  if (n < 2 * plan.folds) throw std::invalid_argument("cross_validate: too few samples");

  const std::vector<std::size_t> perm = rng.permutation(static_cast<std::size_t>(n));
  // contiguous fold slices of the shuffled order
  std::vector<std::pair<std::size_t, std::size_t>> folds;
  const std::size_t base = static_cast<std::size_t>(n) / plan.folds;
  const std::size_t rem = static_cast<std::size_t>(n) % plan.folds;
  std::size_t at = 0;
  for (int f = 0; f < plan.folds; ++f) {
    const std::size_t len = base + (static_cast<std::size_t>(f) < rem ? 1 : 0);
    folds.emplace_back(at, at + len);
    at += len;
  }

  CvResult res;
  double best_loss = std::numeric_limits<double>::infinity();
  for (double lambda : plan.lambda_grid) {
    double total = 0.0;
    for (const auto& [lo, hi] : folds) {
      const std::size_t n_val = hi - lo;
      const std::size_t n_tr = static_cast<std::size_t>(n) - n_val;
      Eigen::MatrixXd Xtr(n_tr, X.cols()), Xva(n_val, X.cols());
      Eigen::VectorXd ytr(n_tr), yva(n_val);
      std::size_t it = 0, iv = 0;
      for (std::size_t i = 0; i < perm.size(); ++i) {
        if (i >= lo && i < hi) {
          Xva.row(static_cast<Eigen::Index>(iv)) = X.row(static_cast<Eigen::Index>(perm[i]));
          yva[static_cast<Eigen::Index>(iv++)] = y[static_cast<Eigen::Index>(perm[i])];
        } else {
          Xtr.row(static_cast<Eigen::Index>(it)) = X.row(static_cast<Eigen::Index>(perm[i]));
          ytr[static_cast<Eigen::Index>(it++)] = y[static_cast<Eigen::Index>(perm[i])];
        }
      }
      const LogRegModel m = train_logreg(Xtr, ytr, lambda, plan.max_iter, plan.tolerance);
      total += detail::logreg_loss(Xva, yva, m.weights, m.bias, 0.0);
    }
    const double mean_loss = total / plan.folds;
    res.mean_val_loss.push_back(mean_loss);
    if (mean_loss < best_loss || (mean_loss == best_loss && lambda > res.lambda)) {
      best_loss = mean_loss;
      res.lambda = lambda;
    }
  }
  res.model = train_logreg(X, y, res.lambda, plan.max_iter, plan.tolerance);
  return res;
}

inline void save_logreg(const LogRegModel& m, const std::string& path) {
  detail::check_little_endian();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_logreg: cannot open " + path);
  detail::write_u64(os, 0x4752474cULL);  // "LGRG"
  detail::write_u64(os, static_cast<std::uint64_t>(m.weights.size()));
  detail::write_f64(os, m.weights.data(), static_cast<std::size_t>(m.weights.size()));
  detail::write_f64(os, &m.bias, 1);
  detail::write_f64(os, &m.lambda, 1);
  if (!os) throw std::runtime_error("save_logreg: write failed");
}

inline LogRegModel load_logreg(const std::string& path) {
  detail::check_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_logreg: cannot open " + path);
  if (detail::read_u64(is) != 0x4752474cULL) throw std::runtime_error("load_logreg: bad magic");
  const auto d = static_cast<Eigen::Index>(detail::read_u64(is));
  LogRegModel m;
  m.weights.resize(d);
  detail::read_f64(is, m.weights.data(), static_cast<std::size_t>(d));
  detail::read_f64(is, &m.bias, 1);
  detail::read_f64(is, &m.lambda, 1);
  if (!is) throw std::runtime_error("load_logreg: truncated file");
  return m;
}

}  // namespace cso
