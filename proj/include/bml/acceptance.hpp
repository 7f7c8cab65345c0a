#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace bml {

struct CriterionResult {
  CriterionResult() = default;
  CriterionResult(std::string id_, std::string title_) : id(std::move(id_)), title(std::move(title_)) {}

  std::string id;      // "1", "2", "2-literal", ...
  std::string title;
  bool pass = false;
  bool gating = true;
  // Set for literal readings that cannot hold; reported as FAIL without affecting the verdict.
  std::string unattainable;
  std::string detail;
  double seconds = 0;
};

struct AcceptanceOptions {
  bool stretch = true;            // run the T_P2 criterion (never gating)
  std::ostream* log = nullptr;    // one line per criterion as it finishes
};

struct AcceptanceReport {
  std::vector<CriterionResult> results;
  bool gating_pass() const;
  // Deterministic summary (no timings).
  nlohmann::json to_json() const;
};

std::string format_line(const CriterionResult& r);
AcceptanceReport run_acceptance(const AcceptanceOptions& opts = {});

}  // namespace bml
