#pragma once

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mfegra/driver.hpp"

// Versioned JSON dump of a run in progress: training set, hyperparameters,
// output scaling, and the iteration cursor. All per-iteration randomness is
// derived from the master seed and the iteration index, so a resumed run
// reproduces the uninterrupted one exactly.

namespace mfegra {

inline constexpr int kCheckpointSchemaVersion = 1;

namespace detail {

inline nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vec_from_json(const nlohmann::json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const MfGpPosterior& gp, int next_iteration,
                                         std::uint64_t master_seed, double cumulative_cost) {
  nlohmann::json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["master_seed"] = master_seed;
  j["next_iteration"] = next_iteration;
  j["cumulative_cost"] = cumulative_cost;

  auto [y_mean, y_sd] = gp.output_scaling();
  j["output_scaling"] = {{"mean", y_mean}, {"sd", y_sd}};

  const auto& h = gp.hyperparams();
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : h.components)
    comps.push_back({{"signal_variance", c.signal_variance},
                     {"length_scales", detail::vec_to_json(c.length_scales)}});
  j["hyperparams"] = {{"components", comps},
                      {"means", detail::vec_to_json(h.means)},
                      {"jitter", h.jitter}};

  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : gp.training().obs)
    obs.push_back({{"source", o.source}, {"z", detail::vec_to_json(o.z)}, {"y", o.y}});
  j["training"] = obs;
  return j;
}

inline void save_checkpoint(const std::string& path, const MfGpPosterior& gp, int next_iteration,
                            std::uint64_t master_seed, double cumulative_cost) {
  std::ofstream out(path);
  if (!out) throw ConfigError("checkpoint: cannot write " + path);
  out << checkpoint_to_json(gp, next_iteration, master_seed, cumulative_cost).dump(2) << "\n";
}

struct LoadedCheckpoint {
  TrainingSet data;
  KernelHyperparams hyperparams;
  double y_mean = 0.0;
  double y_sd = 1.0;
  int next_iteration = 1;
  std::uint64_t master_seed = 0;
  double cumulative_cost = 0.0;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot read " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("schema_version", -1) != kCheckpointSchemaVersion)
    throw ConfigError("checkpoint: unsupported schema version");

  LoadedCheckpoint c;
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  c.next_iteration = j.at("next_iteration").get<int>();
  c.cumulative_cost = j.at("cumulative_cost").get<double>();
  c.y_mean = j.at("output_scaling").at("mean").get<double>();
  c.y_sd = j.at("output_scaling").at("sd").get<double>();

  const auto& h = j.at("hyperparams");
  for (const auto& cj : h.at("components")) {
    ComponentHyper comp;
    comp.signal_variance = cj.at("signal_variance").get<double>();
    comp.length_scales = detail::vec_from_json(cj.at("length_scales"));
    c.hyperparams.components.push_back(std::move(comp));
  }
  c.hyperparams.means = detail::vec_from_json(h.at("means"));
  c.hyperparams.jitter = h.at("jitter").get<double>();
  c.hyperparams.validate();

  for (const auto& oj : j.at("training"))
    c.data.add(oj.at("source").get<int>(), detail::vec_from_json(oj.at("z")),
               oj.at("y").get<double>());
  return c;
}

}  // namespace mfegra
