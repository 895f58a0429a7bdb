#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cso/config.hpp"
#include "cso/eval.hpp"

namespace cso {

namespace detail {
inline std::string fmt(double v) { return Config::format_double(v); }
}  // namespace detail

inline void write_results_csv(const std::string& path, const std::vector<RunResult>& runs,
                              const PreparedDataset& data) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_results_csv: cannot open " + path);
  os << "model,run,item_id,true,pred,separation_arcsec,delta_mag,primary_mag\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const ItemResult& it : runs[r].items) {
      os << runs[r].model_kind << "," << r << "," << it.item_id << ","
         << (it.true_label ? "CSO" : "SINGLE") << "," << (it.pred_label ? "CSO" : "SINGLE") << ",";
      if (data.separation[it.item_id]) os << detail::fmt(*data.separation[it.item_id]);
      os << ",";
      if (data.delta_mag[it.item_id]) os << detail::fmt(*data.delta_mag[it.item_id]);
      os << ",";
      if (data.primary_mag[it.item_id]) os << detail::fmt(*data.primary_mag[it.item_id]);
      os << "\n";
    }
  }
}

inline void write_bins_csv(const std::string& path, const BinnedAccuracy& bins) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_bins_csv: cannot open " + path);
  os << "bin_lo,bin_hi,x_mean,acc_mean,acc_std,n\n";
  for (std::size_t b = 0; b < bins.x_mean.size(); ++b) {
    os << detail::fmt(bins.ranges[b].first) << "," << detail::fmt(bins.ranges[b].second) << ","
       << detail::fmt(bins.x_mean[b]) << ",";
    if (std::isfinite(bins.acc_mean[b])) os << detail::fmt(bins.acc_mean[b]);
    os << ",";
    if (std::isfinite(bins.acc_std[b])) os << detail::fmt(bins.acc_std[b]);
    os << "," << bins.counts[b] << "\n";
  }
}

inline void write_confusion_csv(const std::string& path, const ConfusionMatrix& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_confusion_csv: cannot open " + path);
  os << "true,pred_single,pred_cso\n";
  os << "SINGLE," << detail::fmt(m.counts[0][0]) << "," << detail::fmt(m.counts[0][1]) << "\n";
  os << "CSO," << detail::fmt(m.counts[1][0]) << "," << detail::fmt(m.counts[1][1]) << "\n";
  os << "# false_positive_rate=" << detail::fmt(m.false_positive_rate) << "\n";
  os << "# false_negative_rate=" << detail::fmt(m.false_negative_rate) << "\n";
}

inline void write_summary_csv(const std::string& path, const std::string& model,
                              const std::vector<RunResult>& runs) {
  double mean = 0.0;
  for (const RunResult& r : runs) mean += overall_accuracy(r);
  mean /= static_cast<double>(runs.size());
  double var = 0.0;
  for (const RunResult& r : runs) {
    const double a = overall_accuracy(r);
    var += (a - mean) * (a - mean);
  }
  const double sd = std::sqrt(var / static_cast<double>(runs.size()));
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_summary_csv: cannot open " + path);
  os << "model,runs,acc_mean,acc_std\n";
  os << model << "," << runs.size() << "," << detail::fmt(mean) << "," << detail::fmt(sd) << "\n";
}

// Minimal line plot with error bars; enough to eyeball the accuracy curves.
inline void write_curve_svg(const std::string& path, const BinnedAccuracy& bins,
                            const std::string& title) {
  const int width = 640, height = 420, ml = 60, mr = 20, mt = 40, mb = 50;
  double xlo = bins.x_mean.front(), xhi = bins.x_mean.back();
  if (xhi == xlo) xhi = xlo + 1.0;
  auto sx = [&](double x) { return ml + (x - xlo) / (xhi - xlo) * (width - ml - mr); };
  auto sy = [&](double acc) { return mt + (1.0 - acc) * (height - mt - mb); };

  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_curve_svg: cannot open " + path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
     << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << width / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
     << "</text>\n";
  os << "<line x1='" << ml << "' y1='" << sy(0.0) << "' x2='" << width - mr << "' y2='" << sy(0.0)
     << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << sy(0.0) << "' x2='" << ml << "' y2='" << sy(1.0)
     << "' stroke='black'/>\n";
  for (int g = 0; g <= 10; ++g) {
    const double acc = g / 10.0;
    os << "<text x='" << ml - 8 << "' y='" << sy(acc) + 4
       << "' text-anchor='end' font-size='10'>" << detail::fmt(acc) << "</text>\n";
  }
  std::string poly;
  for (std::size_t b = 0; b < bins.x_mean.size(); ++b) {
    if (!std::isfinite(bins.acc_mean[b])) continue;
    const double x = sx(bins.x_mean[b]), y = sy(bins.acc_mean[b]);
    poly += detail::fmt(x) + "," + detail::fmt(y) + " ";
    if (std::isfinite(bins.acc_std[b])) {
      os << "<line x1='" << x << "' y1='" << sy(bins.acc_mean[b] - bins.acc_std[b]) << "' x2='" << x
         << "' y2='" << sy(bins.acc_mean[b] + bins.acc_std[b]) << "' stroke='steelblue'/>\n";
    }
    os << "<circle cx='" << x << "' cy='" << y << "' r='3' fill='steelblue'/>\n";
    os << "<text x='" << x << "' y='" << height - mb + 16
       << "' text-anchor='middle' font-size='9'>" << detail::fmt(std::round(bins.x_mean[b] * 100) / 100)
       << "</text>\n";
  }
  os << "<polyline points='" << poly << "' fill='none' stroke='steelblue' stroke-width='1.5'/>\n";
  os << "</svg>\n";
}

}  // namespace cso
