#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "bml/errors.hpp"
#include "bml/experiment.hpp"

namespace {

// "a,b[,c]": P1 -> n_radial,n_angular[,x_max]; P2 -> n_simplex,n_angular.
nlohmann::json grid_override(const std::string& s, const nlohmann::json& cfg) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
  const bml::CatalogBundle b =
      bml::bundle_from_string(cfg.contains("bundle") ? cfg["bundle"].get<std::string>() : std::string("split_p1:0,2"));
  nlohmann::json g;
  try {
    if (b.space == bml::Space::P1) {
      if (parts.size() < 2 || parts.size() > 3) throw std::invalid_argument(s);
      g = {{"space", "P1"}, {"n_radial", std::stoi(parts[0])}, {"n_angular", std::stoi(parts[1])}};
      if (parts.size() == 3) g["x_max"] = std::stod(parts[2]);
    } else {
      if (parts.size() != 2) throw std::invalid_argument(s);
      g = {{"space", "P2"}, {"n_simplex", std::stoi(parts[0])}, {"n_angular", std::stoi(parts[1])}};
    }
  } catch (const std::exception&) {
    throw bml::Error(bml::ErrorKind::ConfigError, "grid: expected n_radial,n_angular[,x_max] (P1) or n_simplex,n_angular (P2)");
  }
  return g;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bergman metric lab: asymptotics of energy functionals and balanced metrics"};
  std::string kind;
  std::optional<std::string> config, bundle, ps, grid, method, curvature, out;
  std::optional<int> k, samples, max_iter, draws;
  std::optional<double> t_end, tol, slope_tol, fd_step;
  std::optional<std::uint64_t> seed;
  std::optional<bool> stretch;
  bool quiet = false;

  app.add_option("experiment", kind, "verify | slope | mna | asymptote | balance | subgeodesic")
      ->required()
      ->check(CLI::IsMember({"verify", "slope", "mna", "asymptote", "balance", "subgeodesic"}));
  app.add_option("--config", config, "JSON config file");
  app.add_option("--bundle", bundle, "split_p1:d1,...  split_p2:d1,...  euler_tp2");
  app.add_option("--k", k, "level k");
  app.add_option("--grid", grid, "n_radial,n_angular[,x_max] on P1; n_simplex,n_angular on P2");
  app.add_option("--ps", ps, "generator: two_step:O(d)[:a,b] | diag:w1,... | file:path | random:seed");
  app.add_option("--t-end", t_end, "path length");
  app.add_option("--samples", samples, "number of path samples");
  app.add_option("--tol", tol, "balance residual tolerance");
  app.add_option("--slope-tol", slope_tol, "relative tolerance for fitted slopes");
  app.add_option("--max-iter", max_iter, "balance iteration cap");
  app.add_option("--method", method, "balance solver: both | t_operator | lm");
  app.add_option("--curvature", curvature, "analytic | fd");
  app.add_option("--draws", draws, "subgeodesic draws");
  app.add_option("--fd-step", fd_step, "finite-difference step");
  app.add_option("--seed", seed, "RNG seed");
  app.add_option("--stretch", stretch, "verify: run the T_P2 criterion (true/false)");
  app.add_option("--out", out, "output directory");
  app.add_flag("--quiet", quiet, "no progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? bml::kExitOk : bml::kExitError;
  }

  try {
    nlohmann::json j = nlohmann::json::object();
    if (config) {
      std::ifstream is(*config);
      if (!is) throw bml::Error(bml::ErrorKind::IOError, "cannot read config " + *config);
      try {
        j = nlohmann::json::parse(is);
      } catch (const std::exception& e) {
        throw bml::Error(bml::ErrorKind::ConfigError, std::string("config: parse error: ") + e.what());
      }
      if (!j.is_object()) throw bml::Error(bml::ErrorKind::ConfigError, "config: expected a JSON object");
    }
    j["kind"] = kind;
    if (bundle) j["bundle"] = *bundle;
    if (k) j["k"] = *k;
    if (grid) j["grid"] = grid_override(*grid, j);
    if (ps) j["ps"] = *ps;
    if (t_end) j["t_end"] = *t_end;
    if (samples) j["samples"] = *samples;
    if (tol) j["balance_tol"] = *tol;
    if (slope_tol) j["slope_tol"] = *slope_tol;
    if (max_iter) j["max_iter"] = *max_iter;
    if (method) j["method"] = *method;
    if (curvature) j["curvature"] = *curvature;
    if (draws) j["draws"] = *draws;
    if (fd_step) j["fd_step"] = *fd_step;
    if (seed) j["seed"] = *seed;
    if (stretch) j["stretch"] = *stretch;
    if (out) j["out"] = *out;

    const bml::ExperimentConfig cfg = bml::config_from_json(j);
    const bml::ExperimentOutcome res = bml::run_experiment(cfg, quiet ? nullptr : &std::cerr);
    std::cout << res.text;
    std::cout << "reports written to " << cfg.out << std::endl;
    return res.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "bml: " << e.what() << std::endl;
    return bml::kExitError;
  }
}
