#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "bml/balance.hpp"

namespace bml {

enum class ExperimentKind { Verify, Slope, Mna, Asymptote, Balance, Subgeodesic };
const char* experiment_name(ExperimentKind k);
ExperimentKind experiment_from_string(const std::string& s);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Verify;
  CatalogBundle bundle = CatalogBundle::split_p1({0, 2});
  std::optional<int> level;          // default: k0 of the bundle
  std::optional<GridSpec> grid;      // default: the space's default grid
  std::optional<ZetaSpec> ps;        // default: two-step on the maximal destabilizing summand, else random
  double t_end = 15;
  int samples = 31;
  double slope_tol = 0.02;           // relative, asymptote/slope assertions
  double balance_tol = 1e-10;
  int max_iter = 200;
  std::string method = "both";       // balance: t_operator | lm | both
  CurvatureMethod curvature = CurvatureMethod::Analytic;
  int draws = 200;                   // subgeodesic
  double fd_step = 1e-3;
  std::uint64_t seed = 0;
  bool stretch = true;               // verify: include the T_P2 criterion (never gating)
  std::string out = "bml_out";

  int resolved_level() const;
  QuadratureGrid resolved_grid() const;
  ZetaSpec resolved_ps() const;
  // Checks invariants; throws ConfigError naming the field.
  void validate() const;
  bool operator==(const ExperimentConfig& o) const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Missing fields take defaults; unknown fields and bad values raise ConfigError naming the field.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitAssertion = 2;

struct ExperimentOutcome {
  int exit_code = kExitOk;
  nlohmann::json summary;   // deterministic for a fixed config
  std::string text;         // human-readable report
};

// Runs the experiment and writes config.json, <kind>_summary.json, summary.txt and CSV tables to c.out.
// Module errors are rethrown as ExperimentFailed with context.
ExperimentOutcome run_experiment(const ExperimentConfig& c, std::ostream* progress = nullptr);

}  // namespace bml
