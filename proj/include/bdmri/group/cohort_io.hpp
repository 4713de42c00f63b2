#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/rng.hpp"
#include "bdmri/group/group.hpp"
#include "bdmri/io/csv.hpp"
#include "bdmri/sim/trial_set.hpp"
#include "json.hpp"

namespace bdmri::group {

struct Cohort {
  std::vector<SubjectPosterior> controls;
  std::vector<SubjectPosterior> patients;
};

inline std::vector<std::string> voxel_header(Index v) {
  std::vector<std::string> h;
  for (Index j = 0; j < v; ++j) h.push_back("v" + std::to_string(j));
  return h;
}

/// manifest.json lists {id, group ("control" | "patient"), file, S, V, seed}
/// per subject; each file is an S x V CSV of draws.
inline void write_cohort(const std::filesystem::path& dir, const Cohort& cohort, std::uint64_t seed = 0) {
  std::filesystem::create_directories(dir);
  nlohmann::json subjects = nlohmann::json::array();
  std::uint64_t index = 0;
  for (const auto* g : {&cohort.controls, &cohort.patients}) {
    const std::string label = g == &cohort.controls ? "control" : "patient";
    for (const auto& sp : *g) {
      const std::string file = sp.id + ".csv";
      io::write_csv((dir / file).string(), voxel_header(sp.n_voxels()), sp.draws);
      subjects.push_back({{"id", sp.id},
                          {"group", label},
                          {"file", file},
                          {"S", sp.n_draws()},
                          {"V", sp.n_voxels()},
                          {"seed", rng::derive_seed(seed, index++)}});
    }
  }
  sim::write_json((dir / "manifest.json").string(), {{"subjects", subjects}, {"seed", seed}});
}

inline Cohort read_cohort(const std::filesystem::path& manifest_path) {
  const auto manifest = sim::read_json(manifest_path.string());
  const auto dir = manifest_path.parent_path();
  if (!manifest.contains("subjects") || !manifest["subjects"].is_array())
    throw DataError(manifest_path.string() + ": missing 'subjects' array");
  Cohort c;
  for (const auto& s : manifest["subjects"]) {
    const auto id = s.at("id").get<std::string>();
    const auto label = s.at("group").get<std::string>();
    auto table = io::read_csv((dir / s.at("file").get<std::string>()).string());
    if (s.contains("S") && s["S"].get<Index>() != table.values.rows())
      throw DataError("subject " + id + ": manifest S does not match file");
    if (s.contains("V") && s["V"].get<Index>() != table.values.cols())
      throw DataError("subject " + id + ": manifest V does not match file");
    SubjectPosterior sp(id, std::move(table.values));
    if (label == "control") {
      c.controls.push_back(std::move(sp));
    } else if (label == "patient") {
      c.patients.push_back(std::move(sp));
    } else {
      throw DataError("subject " + id + ": group must be 'control' or 'patient'");
    }
  }
  return c;
}

}  // namespace bdmri::group
