#pragma once

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cso/preprocess.hpp"
#include "cso/sim.hpp"

namespace cso {

constexpr int kDatasetFormatVersion = 1;

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

struct Dataset {
  SimConfig config;
  std::vector<Cutout> cutouts;
};

namespace detail {

inline nlohmann::json config_to_json(const SimConfig& c) {
  return {
      {"primary_mag_range", {c.primary_mag_range[0], c.primary_mag_range[1]}},
      {"delta_mag_range", {c.delta_mag_range[0], c.delta_mag_range[1]}},
      {"fwhm_range", {c.fwhm_range[0], c.fwhm_range[1]}},
      {"offset_factor_range", {c.offset_factor_range[0], c.offset_factor_range[1]}},
      {"exposure_choices", c.exposure_choices},
      {"sky_mag_range", {c.sky_mag_range[0], c.sky_mag_range[1]}},
      {"zp_unif_range", {c.zp_unif_range[0], c.zp_unif_range[1]}},
      {"size_range", {c.size_range[0], c.size_range[1]}},
      {"albedo_range", {c.albedo_range[0], c.albedo_range[1]}},
      {"cutout_size", c.cutout_size},
      {"plate_scale", c.plate_scale},
      {"gain", c.gain},
      {"read_noise", c.read_noise},
      {"centering_error_sigma", c.centering_error_sigma},
      {"jitter_deg", c.jitter_deg},
  };
}

inline SimConfig config_from_json(const nlohmann::json& j) {
  SimConfig c;
  auto pair = [&](const char* key, double out[2]) {
    out[0] = j.at(key).at(0).get<double>();
    out[1] = j.at(key).at(1).get<double>();
  };
  pair("primary_mag_range", c.primary_mag_range);
  pair("delta_mag_range", c.delta_mag_range);
  pair("fwhm_range", c.fwhm_range);
  pair("offset_factor_range", c.offset_factor_range);
  c.exposure_choices = j.at("exposure_choices").get<std::vector<double>>();
  pair("sky_mag_range", c.sky_mag_range);
  pair("zp_unif_range", c.zp_unif_range);
  pair("size_range", c.size_range);
  pair("albedo_range", c.albedo_range);
  c.cutout_size = j.at("cutout_size").get<int>();
  c.plate_scale = j.at("plate_scale").get<double>();
  c.gain = j.at("gain").get<double>();
  c.read_noise = j.at("read_noise").get<double>();
  c.centering_error_sigma = j.at("centering_error_sigma").get<double>();
  c.jitter_deg = j.at("jitter_deg").get<double>();
  return c;
}

inline nlohmann::json endpoints_to_json(const Endpoints& e) {
  return {e.ra_i_deg, e.dec_i_deg, e.ra_f_deg, e.dec_f_deg};
}

inline Endpoints endpoints_from_json(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

}  // namespace detail

// Writes manifest.json plus pixels.f32le (row-major float32 little-endian
// blocks, concatenated in manifest order).
inline void save_dataset(const Dataset& ds, const std::string& dir) {
  detail::check_little_endian();
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  const std::size_t pix_per = static_cast<std::size_t>(ds.config.cutout_size) * ds.config.cutout_size;
  std::vector<float> blob;
  blob.reserve(ds.cutouts.size() * pix_per);
  nlohmann::json records = nlohmann::json::array();
  std::size_t n_single = 0, n_cso = 0;
  for (std::size_t i = 0; i < ds.cutouts.size(); ++i) {
    const Cutout& c = ds.cutouts[i];
    if (c.pixels.size() != pix_per) throw std::runtime_error("save_dataset: pixel count mismatch");
    nlohmann::json r = {
        {"label", c.label == Label::CSO ? "CSO" : "SINGLE"},
        {"primary_mag", c.scene.primary_mag},
        {"fwhm_arcsec", c.scene.fwhm_arcsec},
        {"exposure_s", c.scene.exposure_s},
        {"sky_mag", c.scene.sky_mag},
        {"zero_point", c.scene.zero_point},
        {"field_center", {c.scene.field_center.ra_deg, c.scene.field_center.dec_deg}},
        {"primary_endpoints", detail::endpoints_to_json(c.scene.primary_endpoints)},
        {"size_m", c.scene.size_m},
        {"albedo", c.scene.albedo},
        {"centering_error_arcsec",
         {c.scene.centering_error_arcsec[0], c.scene.centering_error_arcsec[1]}},
        {"byte_offset", blob.size() * sizeof(float)},
    };
    if (c.label == Label::CSO) {
      ++n_cso;
      r["secondary_mag"] = *c.scene.secondary_mag;
      r["secondary_endpoints"] = detail::endpoints_to_json(*c.scene.secondary_endpoints);
      r["separation_arcsec"] = *c.separation_arcsec;
      r["delta_mag"] = *c.delta_mag;
    } else {
      ++n_single;
    }
    records.push_back(std::move(r));
    for (double v : c.pixels) blob.push_back(static_cast<float>(v));
  }

  {
    std::ofstream os(fs::path(dir) / "pixels.f32le", std::ios::binary);
    if (!os) throw std::runtime_error("save_dataset: cannot write pixel blob");
    os.write(reinterpret_cast<const char*>(blob.data()),
             static_cast<std::streamsize>(blob.size() * sizeof(float)));
  }

  nlohmann::json manifest = {
      {"format_version", kDatasetFormatVersion},
      {"config", detail::config_to_json(ds.config)},
      {"n_single", n_single},
      {"n_cso", n_cso},
      {"records", std::move(records)},
      {"pixel_hash", hash_hex(fnv1a64(blob.data(), blob.size() * sizeof(float)))},
  };
  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw std::runtime_error("save_dataset: cannot write manifest");
  os << manifest.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& dir) {
  detail::check_little_endian();
  namespace fs = std::filesystem;
  std::ifstream ms(fs::path(dir) / "manifest.json");
  if (!ms) throw std::runtime_error("load_dataset: cannot open manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(ms);
  if (manifest.at("format_version").get<int>() != kDatasetFormatVersion) {
    throw std::runtime_error("load_dataset: unsupported format version");
  }
  Dataset ds;
  ds.config = detail::config_from_json(manifest.at("config"));
  const std::size_t pix_per = static_cast<std::size_t>(ds.config.cutout_size) * ds.config.cutout_size;

  std::ifstream ps(fs::path(dir) / "pixels.f32le", std::ios::binary);
  if (!ps) throw std::runtime_error("load_dataset: cannot open pixel blob");
  ps.seekg(0, std::ios::end);
  const std::size_t bytes = static_cast<std::size_t>(ps.tellg());
  ps.seekg(0);
  std::vector<float> pixels(bytes / sizeof(float));
  ps.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(bytes));

  const auto& records = manifest.at("records");
  if (records.size() * pix_per != pixels.size()) {
    throw std::runtime_error("load_dataset: record count does not match pixel blob size");
  }
  const std::string expect_hash = manifest.at("pixel_hash").get<std::string>();
  const std::string got_hash = hash_hex(fnv1a64(pixels.data(), bytes));
  if (expect_hash != got_hash) {
    throw std::runtime_error("load_dataset: pixel blob hash mismatch (corrupt dataset)");
  }

  ds.cutouts.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    Cutout c;
    c.label = r.at("label").get<std::string>() == "CSO" ? Label::CSO : Label::SINGLE;
    c.scene.is_cso = c.label == Label::CSO;
    c.scene.primary_mag = r.at("primary_mag").get<double>();
    c.scene.fwhm_arcsec = r.at("fwhm_arcsec").get<double>();
    c.scene.exposure_s = r.at("exposure_s").get<double>();
    c.scene.sky_mag = r.at("sky_mag").get<double>();
    c.scene.zero_point = r.at("zero_point").get<double>();
    c.scene.field_center = {r.at("field_center").at(0).get<double>(),
                            r.at("field_center").at(1).get<double>()};
    c.scene.primary_endpoints = detail::endpoints_from_json(r.at("primary_endpoints"));
    c.scene.size_m = r.at("size_m").get<double>();
    c.scene.albedo = r.at("albedo").get<double>();
    c.scene.centering_error_arcsec[0] = r.at("centering_error_arcsec").at(0).get<double>();
    c.scene.centering_error_arcsec[1] = r.at("centering_error_arcsec").at(1).get<double>();
    if (c.label == Label::CSO) {
      c.scene.secondary_mag = r.at("secondary_mag").get<double>();
      c.scene.secondary_endpoints = detail::endpoints_from_json(r.at("secondary_endpoints"));
      c.separation_arcsec = r.at("separation_arcsec").get<double>();
      c.delta_mag = r.at("delta_mag").get<double>();
    }
    const std::size_t off = r.at("byte_offset").get<std::size_t>() / sizeof(float);
    c.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(off),
                    pixels.begin() + static_cast<std::ptrdiff_t>(off + pix_per));
    ds.cutouts.push_back(std::move(c));
  }
  return ds;
}

}  // namespace cso
