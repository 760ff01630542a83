#include "stjm/fit_io.hpp"

#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace stjm {

void save_fit(const std::string& path, const FitResult& fit) {
  nlohmann::json j;
  j["variant"] = variant_to_string(fit.variant);
  j["mode_index"] = fit.mode_index;
  std::vector<std::string> hypers;
  for (Hyper h : fit.active_hypers) hypers.push_back(hyper_name(h));
  j["active_hypers"] = hypers;
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& gp : fit.grid) {
    nlohmann::json p;
    p["theta_internal"] =
        std::vector<double>(gp.theta_internal.data(), gp.theta_internal.data() + gp.theta_internal.size());
    p["z"] = std::vector<double>(gp.z.data(), gp.z.data() + gp.z.size());
    p["delta_w"] = gp.delta_w;
    p["weight"] = gp.weight;
    p["log_marginal"] = gp.approx.log_marginal;
    p["mode"] = std::vector<double>(gp.approx.mode.data(),
                                    gp.approx.mode.data() + gp.approx.mode.size());
    grid.push_back(std::move(p));
  }
  j["grid"] = std::move(grid);
  nlohmann::json summaries = nlohmann::json::array();
  for (const auto& s : fit.summaries)
    summaries.push_back({{"name", s.name},
                         {"mean", s.mean},
                         {"sd", s.sd},
                         {"q025", s.q025},
                         {"q50", s.q50},
                         {"q975", s.q975}});
  j["summaries"] = std::move(summaries);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write fit file: " + path);
  out << j.dump() << '\n';
}

FitResult load_fit(const std::string& path, const ModelDefinition& model) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fit file: " + path);
  nlohmann::json j;
  in >> j;
  FitResult fit;
  fit.variant = variant_from_string(j.at("variant").get<std::string>());
  if (fit.variant != model.variant())
    throw std::runtime_error("fit file variant does not match the model");
  fit.mode_index = j.at("mode_index").get<int>();
  fit.active_hypers = model.active_hypers();
  const HyperMap map = model.hyper_map();
  for (const auto& p : j.at("grid")) {
    GridPoint gp;
    const auto ti = p.at("theta_internal").get<std::vector<double>>();
    gp.theta_internal = Eigen::Map<const Eigen::VectorXd>(ti.data(), ti.size());
    const auto z = p.at("z").get<std::vector<double>>();
    gp.z = Eigen::Map<const Eigen::VectorXd>(z.data(), z.size());
    gp.delta_w = p.at("delta_w").get<double>();
    gp.weight = p.at("weight").get<double>();
    gp.approx.log_marginal = p.at("log_marginal").get<double>();
    const auto mode = p.at("mode").get<std::vector<double>>();
    if (static_cast<int>(mode.size()) != model.layout().dim)
      throw std::runtime_error("fit file latent dimension does not match the model");
    gp.approx.mode = Eigen::Map<const Eigen::VectorXd>(mode.data(), mode.size());
    gp.approx.theta = map.from_internal(gp.theta_internal);
    fit.grid.push_back(std::move(gp));
  }
  if (fit.grid.empty()) throw std::runtime_error("fit file has an empty grid");
  fit.mode_theta = fit.grid[fit.mode_index].approx.theta;
  for (const auto& s : j.at("summaries"))
    fit.summaries.push_back({s.at("name").get<std::string>(), s.at("mean").get<double>(),
                             s.at("sd").get<double>(), s.at("q025").get<double>(),
                             s.at("q50").get<double>(), s.at("q975").get<double>()});
  return fit;
}

}  // namespace stjm
