#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cso/cnn.hpp"
#include "cso/dataset.hpp"
#include "cso/gp.hpp"
#include "cso/logreg.hpp"
#include "cso/preprocess.hpp"

namespace cso {

struct ItemResult {
  std::size_t item_id = 0;
  int true_label = 0;
  int pred_label = 0;
};

struct RunResult {
  std::string model_kind;
  std::uint64_t seed = 0;
  std::vector<ItemResult> items;  // one record per test item
};

// Equal-count partition of a covariate: sorted values split contiguously
// into bins of size ceil(n/k) or floor(n/k), remainder in the lowest bins;
// ties stay in sorted-stable order.
struct Binning {
  std::vector<int> assignment;                    // per input index
  std::vector<std::pair<double, double>> ranges;  // [lo, hi] per bin
  std::vector<double> x_mean;                     // mean covariate per bin
  std::vector<int> counts;
};

inline Binning equal_count_bins(const std::vector<double>& values, int n_bins = 12) {
  const std::size_t n = values.size();
  if (n < static_cast<std::size_t>(n_bins)) {
    throw std::invalid_argument("equal_count_bins: fewer values than bins");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  Binning bins;
  bins.assignment.assign(n, -1);
  const std::size_t base = n / static_cast<std::size_t>(n_bins);
  const std::size_t rem = n % static_cast<std::size_t>(n_bins);
  std::size_t at = 0;
  for (int b = 0; b < n_bins; ++b) {
    const std::size_t len = base + (static_cast<std::size_t>(b) < rem ? 1 : 0);
    double lo = values[order[at]], hi = lo, sum = 0.0;
    for (std::size_t i = at; i < at + len; ++i) {
      const double v = values[order[i]];
      bins.assignment[order[i]] = b;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    bins.ranges.emplace_back(lo, hi);
    bins.x_mean.push_back(sum / static_cast<double>(len));
    bins.counts.push_back(static_cast<int>(len));
    at += len;
  }
  return bins;
}

// Bins only the items carrying the covariate; missing items get
// assignment -1 and never contribute.
inline Binning bin_covariate(const std::vector<std::optional<double>>& covariate, int n_bins = 12) {
  std::vector<double> values;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < covariate.size(); ++i) {
    if (covariate[i].has_value()) {
      values.push_back(*covariate[i]);
      owner.push_back(i);
    }
  }
  Binning bins = equal_count_bins(values, n_bins);
  std::vector<int> full(covariate.size(), -1);
  for (std::size_t i = 0; i < owner.size(); ++i) full[owner[i]] = bins.assignment[i];
  bins.assignment = std::move(full);
  return bins;
}

struct BinnedAccuracy {
  std::string covariate;
  std::vector<std::pair<double, double>> ranges;
  std::vector<double> x_mean;
  std::vector<double> acc_mean;
  std::vector<double> acc_std;  // across runs, population std
  std::vector<int> counts;      // full-dataset items per bin
};

// Per run, per bin accuracy among test items landing in the bin; mean and
// std taken across runs. Bins where a run has no test items are excluded
// from that bin's statistics.
inline BinnedAccuracy binned_accuracy(const std::vector<RunResult>& runs,
                                      const std::vector<std::optional<double>>& covariate,
                                      const Binning& bins, const std::string& name) {
  const int n_bins = static_cast<int>(bins.counts.size());
  std::vector<std::vector<double>> per_bin_accs(static_cast<std::size_t>(n_bins));
  for (const RunResult& run : runs) {
    std::vector<int> correct(static_cast<std::size_t>(n_bins), 0), total(static_cast<std::size_t>(n_bins), 0);
    for (const ItemResult& item : run.items) {
      if (!covariate[item.item_id].has_value()) continue;
      const int b = bins.assignment[item.item_id];
      if (b < 0) continue;
      ++total[static_cast<std::size_t>(b)];
      if (item.true_label == item.pred_label) ++correct[static_cast<std::size_t>(b)];
    }
    for (int b = 0; b < n_bins; ++b) {
      if (total[static_cast<std::size_t>(b)] > 0) {
        per_bin_accs[static_cast<std::size_t>(b)].push_back(
            static_cast<double>(correct[static_cast<std::size_t>(b)]) / total[static_cast<std::size_t>(b)]);
      }
    }
  }

  BinnedAccuracy out;
  out.covariate = name;
  out.ranges = bins.ranges;
  out.x_mean = bins.x_mean;
  out.counts = bins.counts;
  for (int b = 0; b < n_bins; ++b) {
    const auto& accs = per_bin_accs[static_cast<std::size_t>(b)];
    if (accs.empty()) {
      out.acc_mean.push_back(std::nan(""));
      out.acc_std.push_back(std::nan(""));
      continue;
    }
    const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    out.acc_mean.push_back(mean);
    out.acc_std.push_back(std::sqrt(var / static_cast<double>(accs.size())));
  }
  return out;
}

struct ConfusionMatrix {
  // counts[true][pred], class 0 = SINGLE, 1 = CSO; averaged over runs
  double counts[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  double false_positive_rate = 0.0;  // true SINGLE predicted CSO
  double false_negative_rate = 0.0;  // true CSO predicted SINGLE
};

inline ConfusionMatrix confusion(const std::vector<RunResult>& runs) {
  if (runs.empty()) throw std::invalid_argument("confusion: no runs");
  ConfusionMatrix m;
  for (const RunResult& run : runs) {
    for (const ItemResult& item : run.items) {
      m.counts[item.true_label][item.pred_label] += 1.0;
    }
  }
  for (auto& row : m.counts) {
    for (double& v : row) v /= static_cast<double>(runs.size());
  }
  const double n_single = m.counts[0][0] + m.counts[0][1];
  const double n_cso = m.counts[1][0] + m.counts[1][1];
  m.false_positive_rate = n_single > 0.0 ? m.counts[0][1] / n_single : 0.0;
  m.false_negative_rate = n_cso > 0.0 ? m.counts[1][0] / n_cso : 0.0;
  return m;
}

inline double overall_accuracy(const RunResult& run) {
  if (run.items.empty()) return 0.0;
  std::size_t correct = 0;
  for (const ItemResult& i : run.items) {
    if (i.true_label == i.pred_label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(run.items.size());
}

struct ExperimentParams {
  int pca_components = 21;
  // GP
  MaternKernel kernel{10.0, 20.0, 1.0};
  int k_neighbors = 28;
  double nugget = 1e-5;
  double ambiguity_threshold = 0.2;
  // logistic regression
  std::vector<double> lambda_grid = default_lambda_grid();
  int logreg_max_iter = 10000;
  // CNN
  int cnn_epochs = 15;
  int cnn_batch_size = 200;
  bool cnn_desk_config = false;
};

// Normalized feature matrix (n x 576) plus covariates pulled off the
// dataset once; shared across runs.
struct PreparedDataset {
  Eigen::MatrixXd features;  // local minmax normalized, flattened row-major
  std::vector<int> labels;   // 0 = SINGLE, 1 = CSO
  std::vector<std::optional<double>> separation;
  std::vector<std::optional<double>> delta_mag;
  std::vector<std::optional<double>> primary_mag;
  int image_size = 24;
};

inline PreparedDataset prepare_dataset(const Dataset& ds) {
  PreparedDataset p;
  const std::size_t n = ds.cutouts.size();
  if (n == 0) throw std::invalid_argument("prepare_dataset: empty dataset");
  p.image_size = ds.config.cutout_size;
  const int d = ds.config.cutout_size * ds.config.cutout_size;
  p.features.resize(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i) {
    const Cutout& c = ds.cutouts[i];
    p.features.row(static_cast<Eigen::Index>(i)) = minmax_normalize(c.pixels).values.transpose();
    p.labels.push_back(c.label == Label::CSO ? 1 : 0);
    p.separation.push_back(c.separation_arcsec);
    p.delta_mag.push_back(c.delta_mag);
    p.primary_mag.push_back(c.scene.primary_mag);
  }
  return p;
}

namespace detail {

inline RunResult run_once(const std::string& kind, const PreparedDataset& data,
                          const ExperimentParams& params, std::uint64_t root_seed, int run_index) {
  const std::string run_tag = "run/" + std::to_string(run_index);
  RunResult result;
  result.model_kind = kind;
  result.seed = derive_seed(root_seed, run_tag);

  SplitSpec spec;
  spec.seed = derive_seed(root_seed, run_tag + "/split");  // model-independent split
  const auto [train_idx, test_idx] = split(static_cast<std::size_t>(data.features.rows()), spec);

  auto record = [&](std::size_t item, int pred) {
    result.items.push_back({item, data.labels[item], pred});
  };

  if (kind == "cnn") {
    Eigen::MatrixXd Xtr(train_idx.size(), data.features.cols());
    std::vector<int> ytr;
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
      Xtr.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(train_idx[i]));
      ytr.push_back(data.labels[train_idx[i]]);
    }
    CnnModel model(params.cnn_desk_config ? desk_cnn_spec() : default_cnn_spec(), data.image_size,
                   derive_seed(root_seed, run_tag + "/cnn"));
    CnnTrainConfig tc;
    tc.epochs = params.cnn_epochs;
    tc.batch_size = params.cnn_batch_size;
    tc.seed = derive_seed(root_seed, run_tag + "/cnn/train");
    train_cnn(model, Xtr, ytr, tc);
    for (std::size_t i = 0; i < test_idx.size(); ++i) {
      const Eigen::MatrixXd probs =
          model.forward(data.features.row(static_cast<Eigen::Index>(test_idx[i])), false);
      record(test_idx[i], probs(0, 1) > probs(0, 0) ? 1 : 0);
    }
    return result;
  }

  // PCA models: fit on the training rows only, project everything needed.
  Eigen::MatrixXd Xtr(train_idx.size(), data.features.cols());
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    Xtr.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(train_idx[i]));
  }
  const PcaModel pca = fit_pca(Xtr, params.pca_components);
  Eigen::MatrixXd Ftr = (Xtr.rowwise() - pca.mean.transpose()) * pca.components.transpose();
  Eigen::MatrixXd Fte(test_idx.size(), params.pca_components);
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    Fte.row(static_cast<Eigen::Index>(i)) =
        pca.components * (data.features.row(static_cast<Eigen::Index>(test_idx[i])).transpose() - pca.mean);
  }

  if (kind == "gp") {
    GpModel model;
    model.train_features = Ftr;
    model.train_labels.resize(static_cast<Eigen::Index>(train_idx.size()), 2);
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
      const int y = data.labels[train_idx[i]];
      model.train_labels(static_cast<Eigen::Index>(i), 0) = y == 0 ? 1.0 : 0.0;
      model.train_labels(static_cast<Eigen::Index>(i), 1) = y == 1 ? 1.0 : 0.0;
    }
    model.k_neighbors = std::min<int>(params.k_neighbors, static_cast<int>(train_idx.size()));
    model.kernel = params.kernel;
    model.nugget = params.nugget;
    model.ambiguity_threshold = params.ambiguity_threshold;
    const std::vector<GpPrediction> preds = classify_batch(Fte, model);
    for (std::size_t i = 0; i < test_idx.size(); ++i) {
      record(test_idx[i], preds[i].label == Label::CSO ? 1 : 0);
    }
    return result;
  }

  if (kind == "logreg") {
    Eigen::VectorXd ytr(static_cast<Eigen::Index>(train_idx.size()));
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
      ytr[static_cast<Eigen::Index>(i)] = data.labels[train_idx[i]];
    }
    CvPlan plan;
    plan.lambda_grid = params.lambda_grid;
    plan.max_iter = params.logreg_max_iter;
    Rng cv_rng(derive_seed(root_seed, run_tag + "/cv"));
    const CvResult cv = cross_validate(Ftr, ytr, plan, cv_rng);
    for (std::size_t i = 0; i < test_idx.size(); ++i) {
      const double p = predict_proba(cv.model, Fte.row(static_cast<Eigen::Index>(i)));
      record(test_idx[i], p >= 0.5 ? 1 : 0);
    }
    return result;
  }

  throw std::invalid_argument("run_once: unknown model kind '" + kind + "'");
}

}  // namespace detail

// Repeated fresh 80/20 splits of a fixed dataset,
// preprocessing fit on train only, one model trained and evaluated per run.
inline std::vector<RunResult> run_experiment(const std::string& kind, const PreparedDataset& data,
                                             const ExperimentParams& params, int n_runs,
                                             std::uint64_t root_seed) {
  if (n_runs <= 0) throw std::invalid_argument("run_experiment: n_runs <= 0");
  std::vector<RunResult> runs;
  runs.reserve(static_cast<std::size_t>(n_runs));
  for (int r = 0; r < n_runs; ++r) {
    runs.push_back(detail::run_once(kind, data, params, root_seed, r));
  }
  return runs;
}

}  // namespace cso
