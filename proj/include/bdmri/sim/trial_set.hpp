#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/dmri/acquisition.hpp"
#include "bdmri/io/csv.hpp"
#include "bdmri/sim/phantom.hpp"
#include "json.hpp"

namespace bdmri::sim {

/// Simulated measurements of one phantom: a directory holding
/// scheme.bvals, scheme.bvecs, latent.csv, noisy.csv, truth.json and meta.json.
struct TrialSet {
  AcquisitionScheme scheme;
  VectorXd latent;
  MatrixXd noisy;  ///< trials x measurements
  Truth truth;
  NoiseSpec noise;
  std::uint64_t seed = 0;
  /// Free-form description of the phantom, stored in meta.json.
  nlohmann::json phantom;

  Index trials() const { return noisy.rows(); }
};

inline nlohmann::json truth_to_json(const Truth& t) {
  nlohmann::json j = nlohmann::json::object();
  auto put = [&](const char* key, const std::optional<double>& v) { j[key] = v ? nlohmann::json(*v) : nlohmann::json(); };
  put("md", t.md);
  put("fa", t.fa);
  put("rtop", t.rtop);
  put("crossing_angle_deg", t.crossing_angle_deg);
  return j;
}

inline Truth truth_from_json(const nlohmann::json& j) {
  auto get = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
  };
  return {get("md"), get("fa"), get("rtop"), get("crossing_angle_deg")};
}

inline std::vector<std::string> measurement_header(Index n) {
  std::vector<std::string> h;
  for (Index j = 0; j < n; ++j) h.push_back("m" + std::to_string(j));
  return h;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid JSON: " + e.what());
  }
}

/// Writes all files except meta.json, whose content the caller extends.
inline void write_trial_set(const std::filesystem::path& dir, const TrialSet& ts, nlohmann::json meta = {}) {
  std::filesystem::create_directories(dir);
  dmri::write_fsl(ts.scheme, (dir / "scheme.bvals").string(), (dir / "scheme.bvecs").string());
  io::write_csv((dir / "latent.csv").string(), measurement_header(ts.latent.size()), ts.latent.transpose());
  io::write_csv((dir / "noisy.csv").string(), measurement_header(ts.noisy.cols()), ts.noisy);
  write_json((dir / "truth.json").string(), truth_to_json(ts.truth));
  meta["seed"] = ts.seed;
  meta["noise"] = {{"kind", to_string(ts.noise.kind)}, {"sigma", ts.noise.sigma}};
  if (const auto td = ts.scheme.diffusion_time()) meta["diffusion_time"] = *td;
  if (const auto tm = ts.scheme.timing()) meta["pulse_timing"] = {{"delta", tm->delta}, {"Delta", tm->Delta}};
  meta["trials"] = ts.trials();
  meta["measurements"] = ts.noisy.cols();
  meta["phantom"] = ts.phantom;
  write_json((dir / "meta.json").string(), meta);
}

inline TrialSet read_trial_set(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("trial set directory not found: " + dir.string());
  const auto meta = read_json((dir / "meta.json").string());
  std::optional<double> td;
  std::optional<dmri::PulseTiming> timing;
  if (meta.contains("diffusion_time")) td = meta["diffusion_time"].get<double>();
  if (meta.contains("pulse_timing"))
    timing = dmri::PulseTiming{meta["pulse_timing"]["delta"].get<double>(), meta["pulse_timing"]["Delta"].get<double>()};
  TrialSet ts;
  ts.scheme = dmri::read_fsl((dir / "scheme.bvals").string(), (dir / "scheme.bvecs").string(), td, timing);
  const auto latent = io::read_csv((dir / "latent.csv").string());
  if (latent.values.rows() != 1) throw DataError("latent.csv must hold exactly one row");
  ts.latent = latent.values.row(0).transpose();
  ts.noisy = io::read_csv((dir / "noisy.csv").string()).values;
  if (ts.noisy.cols() != static_cast<Index>(ts.scheme.size()) || ts.latent.size() != ts.noisy.cols())
    throw DataError("trial set: signal width does not match the scheme");
  ts.truth = truth_from_json(read_json((dir / "truth.json").string()));
  ts.seed = meta.value("seed", std::uint64_t{0});
  if (meta.contains("noise"))
    ts.noise = {noise_kind_from_string(meta["noise"]["kind"].get<std::string>()), meta["noise"]["sigma"].get<double>()};
  ts.phantom = meta.value("phantom", nlohmann::json::object());
  return ts;
}

}  // namespace bdmri::sim
