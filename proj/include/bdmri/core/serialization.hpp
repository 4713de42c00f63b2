#pragma once

#include <cmath>
#include <vector>

#include "bdmri/core/posterior.hpp"
#include "json.hpp"

namespace bdmri {

inline std::vector<double> to_std_vector(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

/// {mean, dof, sigma2_hat, scale (row-major), dim, heavy_tailed,
///  condition_estimate}
inline nlohmann::json posterior_to_json(const PosteriorT& post) {
  const Index d = post.dim();
  std::vector<double> scale;
  scale.reserve(static_cast<std::size_t>(d * d));
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) scale.push_back(post.scale()(i, j));
  nlohmann::json j = {{"dim", d},
                      {"mean", to_std_vector(post.mean())},
                      {"dof", post.dof()},
                      {"sigma2_hat", post.sigma2_hat()},
                      {"scale", scale},
                      {"heavy_tailed", post.heavy_tailed()}};
  if (std::isfinite(post.condition_estimate())) j["condition_estimate"] = post.condition_estimate();
  return j;
}

inline PosteriorT posterior_from_json(const nlohmann::json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto flat = j.at("scale").get<std::vector<double>>();
  const auto d = static_cast<Index>(mean.size());
  if (static_cast<Index>(flat.size()) != d * d) throw DataError("posterior json: scale has wrong size");
  MatrixXd scale(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index k = 0; k < d; ++k) scale(i, k) = flat[static_cast<std::size_t>(i * d + k)];
  const double cond = j.contains("condition_estimate") ? j["condition_estimate"].get<double>()
                                                        : std::numeric_limits<double>::quiet_NaN();
  return PosteriorT(to_eigen(mean), j.at("dof").get<double>(), j.at("sigma2_hat").get<double>(),
                    std::move(scale), std::nullopt, cond);
}

}  // namespace bdmri
