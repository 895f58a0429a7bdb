#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cso/matern.hpp"
#include "cso/preprocess.hpp"
#include "cso/sim.hpp"

namespace cso {

// Nearest-neighbor local-kriging GP classifier. Each prediction solves the
// kriging system restricted to the query's k nearest training points.
struct GpModel {
  Eigen::MatrixXd train_features;  // n x d
  Eigen::MatrixXd train_labels;    // n x 2, one-hot
  int k_neighbors = 28;
  MaternKernel kernel;
  double nugget = 1e-5;
  double ambiguity_threshold = 0.2;

  void validate() const {
    if (train_features.rows() != train_labels.rows()) {
      throw std::invalid_argument("GpModel: feature/label row mismatch");
    }
    if (train_labels.cols() != 2) throw std::invalid_argument("GpModel: labels must be n x 2");
    if (k_neighbors <= 0 || k_neighbors > train_features.rows()) {
      throw std::invalid_argument("GpModel: k_neighbors out of range");
    }
    if (nugget < 0.0) throw std::invalid_argument("GpModel: negative nugget");
    kernel.validate();
  }
};

struct GpPrediction {
  Eigen::Vector2d mean;
  double variance = 0.0;
  Label label = Label::SINGLE;
  bool ambiguous = false;
};

// Indices of the k smallest Euclidean distances, ties broken by lower index.
// Exact brute-force search.
inline std::vector<int> find_neighbors(const Eigen::VectorXd& query, const GpModel& model) {
  const int n = static_cast<int>(model.train_features.rows());
  const int k = model.k_neighbors;
  Eigen::VectorXd d2 =
      (model.train_features.rowwise() - query.transpose()).rowwise().squaredNorm();
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    if (d2[a] != d2[b]) return d2[a] < d2[b];
    return a < b;
  });
  idx.resize(k);
  return idx;
}

inline GpPrediction posterior(const Eigen::VectorXd& query, const GpModel& model) {
  model.validate();
  const std::vector<int> nbrs = find_neighbors(query, model);
  const int k = static_cast<int>(nbrs.size());

  Eigen::MatrixXd knn(k, k);
  Eigen::VectorXd kq(k);
  Eigen::MatrixXd yn(k, 2);
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXd xi = model.train_features.row(nbrs[i]);
    kq[i] = matern((query - xi).norm(), model.kernel);
    yn.row(i) = model.train_labels.row(nbrs[i]);
    knn(i, i) = model.kernel.variance;
    for (int j = i + 1; j < k; ++j) {
      const double v = matern((xi - model.train_features.row(nbrs[j]).transpose()).norm(), model.kernel);
      knn(i, j) = v;
      knn(j, i) = v;
    }
  }

  // SPD solve with jitter escalation.
  double jitter = model.nugget;
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (int attempt = 0;; ++attempt) {
    Eigen::MatrixXd sys = knn;
    sys.diagonal().array() += jitter;
    llt.compute(sys);
    if (llt.info() == Eigen::Success) break;
    if (attempt >= 8) {
      throw std::runtime_error(
          "posterior: Cholesky failed after jitter escalation (k=" + std::to_string(k) +
          ", final jitter=" + std::to_string(jitter) +
          ", diag max=" + std::to_string(knn.diagonal().maxCoeff()) + ")");
    }
    jitter = (jitter == 0.0) ? 1e-12 : jitter * 10.0;
  }

  GpPrediction p;
  p.mean = (kq.transpose() * llt.solve(yn)).transpose();
  p.variance = model.kernel.variance - kq.dot(llt.solve(kq));
  if (p.variance < -1e-10) {
    throw std::runtime_error("posterior: variance below tolerance: " + std::to_string(p.variance));
  }
  p.variance = std::max(0.0, p.variance);
  p.label = p.mean[1] > p.mean[0] ? Label::CSO : Label::SINGLE;
  p.ambiguous = std::fabs(p.mean[0] - p.mean[1]) < model.ambiguity_threshold;
  return p;
}

inline std::vector<GpPrediction> classify_batch(const Eigen::MatrixXd& queries,
                                                const GpModel& model) {
  std::vector<GpPrediction> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = posterior(queries.row(i), model);
  }
  return out;
}

inline void save_gp(const GpModel& m, const std::string& path) {
  detail::check_little_endian();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_gp: cannot open " + path);
  detail::write_u64(os, 0x53504759ULL);  // "YGPS"
  detail::write_u64(os, static_cast<std::uint64_t>(m.train_features.rows()));
  detail::write_u64(os, static_cast<std::uint64_t>(m.train_features.cols()));
  detail::write_u64(os, static_cast<std::uint64_t>(m.k_neighbors));
  const double hyper[5] = {m.kernel.nu, m.kernel.length_scale, m.kernel.variance, m.nugget,
                           m.ambiguity_threshold};
  detail::write_f64(os, hyper, 5);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = m.train_features;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> y = m.train_labels;
  detail::write_f64(os, f.data(), static_cast<std::size_t>(f.size()));
  detail::write_f64(os, y.data(), static_cast<std::size_t>(y.size()));
  if (!os) throw std::runtime_error("save_gp: write failed");
}

inline GpModel load_gp(const std::string& path) {
  detail::check_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_gp: cannot open " + path);
  if (detail::read_u64(is) != 0x53504759ULL) throw std::runtime_error("load_gp: bad magic");
  const auto n = static_cast<Eigen::Index>(detail::read_u64(is));
  const auto d = static_cast<Eigen::Index>(detail::read_u64(is));
  GpModel m;
  m.k_neighbors = static_cast<int>(detail::read_u64(is));
  double hyper[5];
  detail::read_f64(is, hyper, 5);
  m.kernel.nu = hyper[0];
  m.kernel.length_scale = hyper[1];
  m.kernel.variance = hyper[2];
  m.nugget = hyper[3];
  m.ambiguity_threshold = hyper[4];
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(n, d), y(n, 2);
  detail::read_f64(is, f.data(), static_cast<std::size_t>(f.size()));
  detail::read_f64(is, y.data(), static_cast<std::size_t>(y.size()));
  if (!is) throw std::runtime_error("load_gp: truncated file");
  m.train_features = f;
  m.train_labels = y;
  return m;
}

}  // namespace cso
