#pragma once

#include <cmath>
#include <stdexcept>

namespace cso {

struct SkyPoint {
  double ra_deg = 0.0;
  double dec_deg = 0.0;
};

struct Endpoints {
  double ra_i_deg = 0.0;
  double dec_i_deg = 0.0;
  double ra_f_deg = 0.0;
  double dec_f_deg = 0.0;
};

constexpr double kDegToRad = M_PI / 180.0;
constexpr double kRadToArcsec = 3600.0 * 180.0 / M_PI;

// Coordinate-wise arithmetic mean of the two endpoints. Discontinuous across
// the RA 0/360 wrap; scene generation stays away from the wrap.
inline SkyPoint midpoint(const Endpoints& e) {
  if (!std::isfinite(e.ra_i_deg) || !std::isfinite(e.dec_i_deg) ||
      !std::isfinite(e.ra_f_deg) || !std::isfinite(e.dec_f_deg)) {
    throw std::invalid_argument("midpoint: non-finite endpoints");
  }
  return {0.5 * (e.ra_i_deg + e.ra_f_deg), 0.5 * (e.dec_i_deg + e.dec_f_deg)};
}

// Great-circle distance, Vincenty arctangent form (stable at small angles),
// in arcseconds.
inline double angular_separation_arcsec(const SkyPoint& p, const SkyPoint& s) {
  const double phi1 = p.dec_deg * kDegToRad;
  const double phi2 = s.dec_deg * kDegToRad;
  const double dlam = (s.ra_deg - p.ra_deg) * kDegToRad;
  const double c1 = std::cos(phi1), s1 = std::sin(phi1);
  const double c2 = std::cos(phi2), s2 = std::sin(phi2);
  const double cd = std::cos(dlam), sd = std::sin(dlam);
  const double num = std::hypot(c2 * sd, c1 * s2 - s1 * c2 * cd);
  const double den = s1 * s2 + c1 * c2 * cd;
  return std::atan2(num, den) * kRadToArcsec;
}

// Magnitude difference, secondary minus primary.
inline double magnitude_difference(double secondary_mag, double primary_mag) {
  if (!std::isfinite(secondary_mag) || !std::isfinite(primary_mag)) {
    throw std::invalid_argument("magnitude_difference: non-finite input");
  }
  return secondary_mag - primary_mag;
}

}  // namespace cso
