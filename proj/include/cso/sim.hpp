#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cso/geometry.hpp"
#include "cso/rng.hpp"

namespace cso {

enum class Label { SINGLE = 0, CSO = 1 };

struct SimConfig {
  double primary_mag_range[2] = {12.0, 15.0};
  double delta_mag_range[2] = {-1.5, 1.5};
  double fwhm_range[2] = {2.0, 6.0};           // arcsec
  double offset_factor_range[2] = {0.2, 1.5};  // times FWHM, per axis
  std::vector<double> exposure_choices = {0.1, 0.2, 0.5};  // seconds
  double sky_mag_range[2] = {18.3, 20.3};      // mag arcsec^-2
  double zp_unif_range[2] = {0.0, 0.3};        // zp = 24 + u/0.4
  double size_range[2] = {0.1, 10.0};          // meters, metadata only
  double albedo_range[2] = {0.05, 0.2};        // metadata only
  int cutout_size = 24;
  double plate_scale = 1.0;                    // arcsec / pixel
  double gain = 1.0;                           // e- / ADU
  double read_noise = 5.0;                     // e- RMS
  double centering_error_sigma = 0.5;          // arcsec, per axis
  double jitter_deg = 0.00139;                 // metadata only

  void validate() const {
    auto range_ok = [](const double r[2]) { return r[0] <= r[1]; };
    if (!range_ok(primary_mag_range) || !range_ok(delta_mag_range) ||
        !range_ok(fwhm_range) || !range_ok(offset_factor_range) ||
        !range_ok(sky_mag_range) || !range_ok(zp_unif_range) ||
        !range_ok(size_range) || !range_ok(albedo_range)) {
      throw std::invalid_argument("SimConfig: range lower bound exceeds upper bound");
    }
    if (cutout_size < 8) throw std::invalid_argument("SimConfig: cutout_size < 8");
    if (plate_scale <= 0.0) throw std::invalid_argument("SimConfig: plate_scale <= 0");
    if (read_noise < 0.0) throw std::invalid_argument("SimConfig: read_noise < 0");
    if (fwhm_range[0] <= 0.0) throw std::invalid_argument("SimConfig: fwhm must be positive");
    if (exposure_choices.empty()) throw std::invalid_argument("SimConfig: no exposure choices");
    for (double t : exposure_choices) {
      if (t <= 0.0) throw std::invalid_argument("SimConfig: exposure <= 0");
    }
  }
};

struct SceneSample {
  bool is_cso = false;
  double primary_mag = 0.0;
  std::optional<double> secondary_mag;
  double fwhm_arcsec = 0.0;
  double exposure_s = 0.0;
  double sky_mag = 0.0;
  double zero_point = 0.0;
  // Tangent point of the cutout; pixel coordinates are measured from here.
  SkyPoint field_center;
  Endpoints primary_endpoints;
  std::optional<Endpoints> secondary_endpoints;
  double size_m = 0.0;    // metadata only, does not drive flux
  double albedo = 0.0;    // metadata only
  double centering_error_arcsec[2] = {0.0, 0.0};
};

struct Cutout {
  std::vector<double> pixels;  // row-major cutout_size x cutout_size, ADU
  Label label = Label::SINGLE;
  SceneSample scene;
  std::optional<double> separation_arcsec;  // CSO only
  std::optional<double> delta_mag;          // CSO only
};

// Expected total counts from an apparent magnitude, zero point, exposure.
inline double mag_to_counts(double m, double zp, double t) {
  if (t <= 0.0) throw std::invalid_argument("mag_to_counts: t <= 0");
  return t * std::pow(10.0, -0.4 * (m - zp));
}

// Sky background in counts per pixel.
inline double sky_counts_per_pixel(double m_sky, double zp, double t, double plate_scale) {
  if (t <= 0.0) throw std::invalid_argument("sky_counts_per_pixel: t <= 0");
  if (plate_scale <= 0.0) throw std::invalid_argument("sky_counts_per_pixel: plate_scale <= 0");
  return t * std::pow(10.0, -0.4 * (m_sky - zp)) * plate_scale * plate_scale;
}

inline double fwhm_to_sigma(double fwhm) {
  return fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
}

// Draws one scene. The field center is placed away from the RA wrap and near
// the equator; the primary's true midpoint is the cutout center plus the
// per-axis centering error. RA offsets are divided by cos(DEC) so the drawn
// offsets are true angular distances on the sky.
inline SceneSample sample_scene(const SimConfig& config, bool want_cso, Rng& rng) {
  SceneSample s;
  s.is_cso = want_cso;
  s.primary_mag = rng.uniform(config.primary_mag_range[0], config.primary_mag_range[1]);
  s.fwhm_arcsec = rng.uniform(config.fwhm_range[0], config.fwhm_range[1]);
  s.exposure_s = rng.pick(config.exposure_choices);
  s.sky_mag = rng.uniform(config.sky_mag_range[0], config.sky_mag_range[1]);
  s.zero_point = 24.0 + rng.uniform(config.zp_unif_range[0], config.zp_unif_range[1]) / 0.4;
  s.size_m = rng.uniform(config.size_range[0], config.size_range[1]);
  s.albedo = rng.uniform(config.albedo_range[0], config.albedo_range[1]);

  s.field_center.ra_deg = rng.uniform(30.0, 330.0);
  s.field_center.dec_deg = rng.uniform(-1.0, 1.0);
  const double cos_dec = std::cos(s.field_center.dec_deg * kDegToRad);

  s.centering_error_arcsec[0] = rng.normal(0.0, config.centering_error_sigma);
  s.centering_error_arcsec[1] = rng.normal(0.0, config.centering_error_sigma);

  const SkyPoint primary_mid{
      s.field_center.ra_deg + s.centering_error_arcsec[0] / 3600.0 / cos_dec,
      s.field_center.dec_deg + s.centering_error_arcsec[1] / 3600.0};

  // Apparent motion over the exposure; only the midpoint matters for
  // rendering, so the magnitude is a nominal LEO-like rate.
  const double motion_angle = rng.uniform(0.0, 2.0 * M_PI);
  const double motion_arcsec = 10.0 * s.exposure_s;
  const double half_ra = 0.5 * motion_arcsec * std::cos(motion_angle) / 3600.0 / cos_dec;
  const double half_dec = 0.5 * motion_arcsec * std::sin(motion_angle) / 3600.0;
  s.primary_endpoints = {primary_mid.ra_deg - half_ra, primary_mid.dec_deg - half_dec,
                         primary_mid.ra_deg + half_ra, primary_mid.dec_deg + half_dec};

  if (want_cso) {
    const double dmag = rng.uniform(config.delta_mag_range[0], config.delta_mag_range[1]);
    double sec = s.primary_mag + dmag;
    // Draws landing outside the magnitude bounds take the closest bound.
    sec = std::min(std::max(sec, config.primary_mag_range[0]), config.primary_mag_range[1]);
    s.secondary_mag = sec;

    const double u_ra = rng.uniform(config.offset_factor_range[0], config.offset_factor_range[1]);
    const double sign_ra = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double u_dec = rng.uniform(config.offset_factor_range[0], config.offset_factor_range[1]);
    const double sign_dec = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double off_ra = sign_ra * u_ra * s.fwhm_arcsec;    // arcsec on sky
    const double off_dec = sign_dec * u_dec * s.fwhm_arcsec;

    const SkyPoint secondary_mid{primary_mid.ra_deg + off_ra / 3600.0 / cos_dec,
                                 primary_mid.dec_deg + off_dec / 3600.0};
    s.secondary_endpoints = Endpoints{
        secondary_mid.ra_deg - half_ra, secondary_mid.dec_deg - half_dec,
        secondary_mid.ra_deg + half_ra, secondary_mid.dec_deg + half_dec};
  }
  return s;
}

// Adds a pixel-integrated circular Gaussian to the grid. The flux through
// each pixel is the product of 1-D CDF differences at the pixel edges, so a
// fully contained source conserves total_counts. Off-grid flux is truncated.
inline void render_point_source(std::vector<double>& grid, int size, double cx, double cy,
                                double total_counts, double fwhm_pixels) {
  if (total_counts < 0.0) throw std::invalid_argument("render_point_source: negative counts");
  if (fwhm_pixels <= 0.0) throw std::invalid_argument("render_point_source: fwhm <= 0");
  if (total_counts == 0.0) return;
  const double sigma = fwhm_to_sigma(fwhm_pixels);
  const double inv = 1.0 / (sigma * std::sqrt(2.0));
  std::vector<double> fx(size), fy(size);
  for (int i = 0; i < size; ++i) {
    fx[i] = 0.5 * (std::erf((i + 1 - cx) * inv) - std::erf((i - cx) * inv));
    fy[i] = 0.5 * (std::erf((i + 1 - cy) * inv) - std::erf((i - cy) * inv));
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      grid[static_cast<std::size_t>(y) * size + x] += total_counts * fx[x] * fy[y];
    }
  }
}

// Poisson shot noise plus Gaussian read noise, divided by gain.
inline std::vector<double> add_noise(const std::vector<double>& expected, double read_noise,
                                     double gain, Rng& rng) {
  if (gain <= 0.0) throw std::invalid_argument("add_noise: gain <= 0");
  std::vector<double> out(expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i] < 0.0) {
      throw std::runtime_error("add_noise: negative expected count at pixel " + std::to_string(i));
    }
    double e = static_cast<double>(rng.poisson(expected[i]));
    if (read_noise > 0.0) e += rng.normal(0.0, read_noise);
    out[i] = e / gain;
  }
  return out;
}

// Pixel position of a sky point relative to the cutout's field center.
// Pixel (i, j) spans [i, i+1) x [j, j+1); the cutout center is at size/2.
inline void sky_to_pixel(const SceneSample& scene, const SimConfig& config, const SkyPoint& p,
                         double& px, double& py) {
  const double cos_dec = std::cos(scene.field_center.dec_deg * kDegToRad);
  const double dx = (p.ra_deg - scene.field_center.ra_deg) * cos_dec * 3600.0;
  const double dy = (p.dec_deg - scene.field_center.dec_deg) * 3600.0;
  px = 0.5 * config.cutout_size + dx / config.plate_scale;
  py = 0.5 * config.cutout_size + dy / config.plate_scale;
}

inline Cutout simulate_cutout(const SceneSample& scene, const SimConfig& config, Rng& rng) {
  const int n = config.cutout_size;
  std::vector<double> expected(static_cast<std::size_t>(n) * n,
                               sky_counts_per_pixel(scene.sky_mag, scene.zero_point,
                                                    scene.exposure_s, config.plate_scale));
  const double fwhm_pix = scene.fwhm_arcsec / config.plate_scale;

  const SkyPoint pmid = midpoint(scene.primary_endpoints);
  double px, py;
  sky_to_pixel(scene, config, pmid, px, py);
  render_point_source(expected, n, px, py,
                      mag_to_counts(scene.primary_mag, scene.zero_point, scene.exposure_s),
                      fwhm_pix);

  Cutout c;
  c.label = scene.is_cso ? Label::CSO : Label::SINGLE;
  c.scene = scene;
  if (scene.is_cso) {
    const SkyPoint smid = midpoint(*scene.secondary_endpoints);
    double sx, sy;
    sky_to_pixel(scene, config, smid, sx, sy);
    render_point_source(expected, n, sx, sy,
                        mag_to_counts(*scene.secondary_mag, scene.zero_point, scene.exposure_s),
                        fwhm_pix);
    c.separation_arcsec = angular_separation_arcsec(pmid, smid);
    c.delta_mag = magnitude_difference(*scene.secondary_mag, scene.primary_mag);
  }
  c.pixels = add_noise(expected, config.read_noise, config.gain, rng);
  return c;
}

}  // namespace cso
