#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cso/eval.hpp"
#include "cso/sim.hpp"

namespace cso {

// Flat key=value configuration with section prefixes. Every key defaults to
// the corresponding table value of the replicated setup. Unknown keys are
// rejected; parse -> serialize -> parse is a fixed point.
struct Config {
  SimConfig sim;
  ExperimentParams experiment;
  int n_single = 2000;
  int n_cso = 2000;
  int n_runs = 100;
  double train_fraction = 0.8;

  static std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // trim to shortest representation that round-trips
    for (int prec = 1; prec < 17; ++prec) {
      char probe[64];
      std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
      if (std::stod(probe) == v) return probe;
    }
    return buf;
  }

  static std::string format_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ",";
      out += format_double(v[i]);
    }
    return out;
  }

  static std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(std::stod(tok));
    return out;
  }

  std::string serialize() const {
    std::ostringstream os;
    auto d = [&](const char* key, double v) { os << key << "=" << format_double(v) << "\n"; };
    auto i = [&](const char* key, long v) { os << key << "=" << v << "\n"; };
    d("sim.primary_mag_lo", sim.primary_mag_range[0]);
    d("sim.primary_mag_hi", sim.primary_mag_range[1]);
    d("sim.delta_mag_lo", sim.delta_mag_range[0]);
    d("sim.delta_mag_hi", sim.delta_mag_range[1]);
    d("sim.fwhm_lo", sim.fwhm_range[0]);
    d("sim.fwhm_hi", sim.fwhm_range[1]);
    d("sim.offset_factor_lo", sim.offset_factor_range[0]);
    d("sim.offset_factor_hi", sim.offset_factor_range[1]);
    os << "sim.exposure_choices=" << format_list(sim.exposure_choices) << "\n";
    d("sim.sky_mag_lo", sim.sky_mag_range[0]);
    d("sim.sky_mag_hi", sim.sky_mag_range[1]);
    d("sim.zp_unif_lo", sim.zp_unif_range[0]);
    d("sim.zp_unif_hi", sim.zp_unif_range[1]);
    d("sim.size_lo", sim.size_range[0]);
    d("sim.size_hi", sim.size_range[1]);
    d("sim.albedo_lo", sim.albedo_range[0]);
    d("sim.albedo_hi", sim.albedo_range[1]);
    i("sim.cutout_size", sim.cutout_size);
    d("sim.plate_scale", sim.plate_scale);
    d("sim.gain", sim.gain);
    d("sim.read_noise", sim.read_noise);
    d("sim.centering_error_sigma", sim.centering_error_sigma);
    d("sim.jitter_deg", sim.jitter_deg);
    i("dataset.n_single", n_single);
    i("dataset.n_cso", n_cso);
    i("pca.components", experiment.pca_components);
    d("gp.nu", experiment.kernel.nu);
    d("gp.length_scale", experiment.kernel.length_scale);
    d("gp.variance", experiment.kernel.variance);
    i("gp.k_neighbors", experiment.k_neighbors);
    d("gp.nugget", experiment.nugget);
    d("gp.ambiguity_threshold", experiment.ambiguity_threshold);
    os << "logreg.lambda_grid=" << format_list(experiment.lambda_grid) << "\n";
    i("logreg.max_iter", experiment.logreg_max_iter);
    i("cnn.epochs", experiment.cnn_epochs);
    i("cnn.batch_size", experiment.cnn_batch_size);
    i("cnn.desk_config", experiment.cnn_desk_config ? 1 : 0);
    i("harness.runs", n_runs);
    d("harness.train_fraction", train_fraction);
    return os.str();
  }

  void apply(const std::string& key, const std::string& value) {
    auto d = [&]() { return std::stod(value); };
    auto i = [&]() { return std::stoi(value); };
    if (key == "sim.primary_mag_lo") sim.primary_mag_range[0] = d();
    else if (key == "sim.primary_mag_hi") sim.primary_mag_range[1] = d();
    else if (key == "sim.delta_mag_lo") sim.delta_mag_range[0] = d();
    else if (key == "sim.delta_mag_hi") sim.delta_mag_range[1] = d();
    else if (key == "sim.fwhm_lo") sim.fwhm_range[0] = d();
    else if (key == "sim.fwhm_hi") sim.fwhm_range[1] = d();
    else if (key == "sim.offset_factor_lo") sim.offset_factor_range[0] = d();
    else if (key == "sim.offset_factor_hi") sim.offset_factor_range[1] = d();
    else if (key == "sim.exposure_choices") sim.exposure_choices = parse_list(value);
    else if (key == "sim.sky_mag_lo") sim.sky_mag_range[0] = d();
    else if (key == "sim.sky_mag_hi") sim.sky_mag_range[1] = d();
    else if (key == "sim.zp_unif_lo") sim.zp_unif_range[0] = d();
    else if (key == "sim.zp_unif_hi") sim.zp_unif_range[1] = d();
    else if (key == "sim.size_lo") sim.size_range[0] = d();
    else if (key == "sim.size_hi") sim.size_range[1] = d();
    else if (key == "sim.albedo_lo") sim.albedo_range[0] = d();
    else if (key == "sim.albedo_hi") sim.albedo_range[1] = d();
    else if (key == "sim.cutout_size") sim.cutout_size = i();
    else if (key == "sim.plate_scale") sim.plate_scale = d();
    else if (key == "sim.gain") sim.gain = d();
    else if (key == "sim.read_noise") sim.read_noise = d();
    else if (key == "sim.centering_error_sigma") sim.centering_error_sigma = d();
    else if (key == "sim.jitter_deg") sim.jitter_deg = d();
    else if (key == "dataset.n_single") n_single = i();
    else if (key == "dataset.n_cso") n_cso = i();
    else if (key == "pca.components") experiment.pca_components = i();
    else if (key == "gp.nu") experiment.kernel.nu = d();
    else if (key == "gp.length_scale") experiment.kernel.length_scale = d();
    else if (key == "gp.variance") experiment.kernel.variance = d();
    else if (key == "gp.k_neighbors") experiment.k_neighbors = i();
    else if (key == "gp.nugget") experiment.nugget = d();
    else if (key == "gp.ambiguity_threshold") experiment.ambiguity_threshold = d();
    else if (key == "logreg.lambda_grid") experiment.lambda_grid = parse_list(value);
    else if (key == "logreg.max_iter") experiment.logreg_max_iter = i();
    else if (key == "cnn.epochs") experiment.cnn_epochs = i();
    else if (key == "cnn.batch_size") experiment.cnn_batch_size = i();
    else if (key == "cnn.desk_config") experiment.cnn_desk_config = i() != 0;
    else if (key == "harness.runs") n_runs = i();
    else if (key == "harness.train_fraction") train_fraction = d();
    else throw std::invalid_argument("Config: unknown key '" + key + "'");
  }

  static Config parse(const std::string& text) {
    Config c;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw std::invalid_argument("Config: line " + std::to_string(lineno) + " is not key=value");
      }
      c.apply(line.substr(0, eq), line.substr(eq + 1));
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("Config: cannot open " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return parse(os.str());
  }
};

}  // namespace cso
