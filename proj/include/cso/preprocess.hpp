#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cso/rng.hpp"

namespace cso {

enum class FeatureStage { RAW_NORMALIZED, PCA };

struct FeatureVector {
  Eigen::VectorXd values;
  FeatureStage stage = FeatureStage::RAW_NORMALIZED;
};

// Local minmax scaling: (x - min) / (max - min), flattened row-major.
// The output always attains exactly 0 and 1.
inline FeatureVector minmax_normalize(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("minmax_normalize: empty grid");
  double lo = grid[0], hi = grid[0];
  for (double v : grid) {
    if (!std::isfinite(v)) throw std::invalid_argument("minmax_normalize: non-finite pixel");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) throw std::runtime_error("minmax_normalize: constant image (degenerate cutout)");
  FeatureVector f;
  f.stage = FeatureStage::RAW_NORMALIZED;
  f.values.resize(static_cast<Eigen::Index>(grid.size()));
  // exact division so the extremes land on exactly 0 and 1
  const double range = hi - lo;
  for (std::size_t i = 0; i < grid.size(); ++i) f.values[static_cast<Eigen::Index>(i)] = (grid[i] - lo) / range;
  return f;
}

struct PcaModel {
  Eigen::VectorXd mean;         // d
  Eigen::MatrixXd components;   // n_components x d, orthonormal rows
  Eigen::VectorXd eigenvalues;  // n_components, non-increasing
};

// Top-k eigenvectors of the sample covariance via a deterministic
// self-adjoint solve. Sign convention: each component's largest-magnitude
// entry is positive.
inline PcaModel fit_pca(const Eigen::MatrixXd& train, int n_components = 21) {
  const Eigen::Index n = train.rows(), d = train.cols();
  if (n < n_components + 1) throw std::invalid_argument("fit_pca: need at least n_components+1 samples");
  PcaModel m;
  m.mean = train.colwise().mean();
  Eigen::MatrixXd centered = train.rowwise() - m.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw std::runtime_error("fit_pca: eigen solve failed");
  // Eigen returns ascending order.
  m.components.resize(n_components, d);
  m.eigenvalues.resize(n_components);
  for (int j = 0; j < n_components; ++j) {
    const Eigen::Index src = d - 1 - j;
    Eigen::VectorXd v = es.eigenvectors().col(src);
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    m.components.row(j) = v.transpose();
    m.eigenvalues[j] = std::max(0.0, es.eigenvalues()[src]);
  }
  return m;
}

inline FeatureVector project(const PcaModel& model, const FeatureVector& v) {
  if (v.stage != FeatureStage::RAW_NORMALIZED) {
    throw std::invalid_argument("project: expected RAW_NORMALIZED input");
  }
  if (v.values.size() != model.mean.size()) {
    throw std::invalid_argument("project: dimension mismatch");
  }
  FeatureVector out;
  out.stage = FeatureStage::PCA;
  out.values = model.components * (v.values - model.mean);
  return out;
}

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

// Unstratified uniform shuffle; |train| = round(train_fraction * n).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split(std::size_t n,
                                                                           const SplitSpec& spec) {
  if (n == 0) throw std::invalid_argument("split: empty dataset");
  if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0) {
    throw std::invalid_argument("split: train_fraction out of (0,1)");
  }
  Rng rng(spec.seed);
  std::vector<std::size_t> perm = rng.permutation(n);
  const std::size_t n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  return {std::move(train), std::move(test)};
}

// --- binary serialization (float64 little-endian) ---

namespace detail {
inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}
inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
inline void write_f64(std::ostream& os, const double* p, std::size_t n) {
  // little-endian host assumed; asserted at save time
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}
inline void read_f64(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}
inline void check_little_endian() {
  const std::uint16_t x = 1;
  if (*reinterpret_cast<const unsigned char*>(&x) != 1) {
    throw std::runtime_error("serialization requires a little-endian host");
  }
}
}  // namespace detail

inline void save_pca(const PcaModel& m, const std::string& path) {
  detail::check_little_endian();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_pca: cannot open " + path);
  detail::write_u64(os, 0x41435050ULL);  // "PPCA"
  detail::write_u64(os, static_cast<std::uint64_t>(m.components.rows()));
  detail::write_u64(os, static_cast<std::uint64_t>(m.components.cols()));
  detail::write_f64(os, m.mean.data(), static_cast<std::size_t>(m.mean.size()));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> comp = m.components;
  detail::write_f64(os, comp.data(), static_cast<std::size_t>(comp.size()));
  detail::write_f64(os, m.eigenvalues.data(), static_cast<std::size_t>(m.eigenvalues.size()));
  if (!os) throw std::runtime_error("save_pca: write failed");
}

inline PcaModel load_pca(const std::string& path) {
  detail::check_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_pca: cannot open " + path);
  if (detail::read_u64(is) != 0x41435050ULL) throw std::runtime_error("load_pca: bad magic");
  const auto k = static_cast<Eigen::Index>(detail::read_u64(is));
  const auto d = static_cast<Eigen::Index>(detail::read_u64(is));
  PcaModel m;
  m.mean.resize(d);
  detail::read_f64(is, m.mean.data(), static_cast<std::size_t>(d));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> comp(k, d);
  detail::read_f64(is, comp.data(), static_cast<std::size_t>(comp.size()));
  m.components = comp;
  m.eigenvalues.resize(k);
  detail::read_f64(is, m.eigenvalues.data(), static_cast<std::size_t>(k));
  if (!is) throw std::runtime_error("load_pca: truncated file");
  return m;
}

}  // namespace cso
