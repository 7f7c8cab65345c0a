#pragma once

#include <gmpxx.h>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace bml {

using Rat = mpq_class;
using Int = mpz_class;

enum class Space { P1, P2 };

const char* space_name(Space s);
int space_dim(Space s);

// Torsion-free sheaf data. h0_table holds dim H^0(F(k)) for the levels it covers.
struct SheafData {
  long rank = 1;
  std::optional<Rat> degree;
  std::map<int, long> h0_table;
  Space space = Space::P1;
  std::string label;

  long h0_at(int k) const;
  bool has_h0(int k) const { return h0_table.count(k) != 0; }
};

// Closed-form cohomology of catalog line bundles.
long h0_line(Space s, long d);

SheafData line_bundle(Space s, int d);
SheafData split_sum(Space s, const std::vector<int>& degrees);
SheafData tangent_p2();

struct CatalogBundle {
  enum class Kind { Split, EulerTP2 };
  Kind kind = Kind::Split;
  Space space = Space::P1;
  std::vector<int> degrees;

  static CatalogBundle split_p1(std::vector<int> d) { return {Kind::Split, Space::P1, std::move(d)}; }
  static CatalogBundle split_p2(std::vector<int> d) { return {Kind::Split, Space::P2, std::move(d)}; }
  static CatalogBundle euler_tp2() { return {Kind::EulerTP2, Space::P2, {}}; }

  int rank() const;
  Rat degree() const;
  std::string label() const;
};

SheafData sheaf_of(const CatalogBundle& b);
// dim H^i(E(m)) from closed forms (line bundles) or the Euler-sequence chase (T_P2).
long cohomology(const CatalogBundle& b, int i, int m);

Rat mu(const SheafData& sheaf);

struct FiltrationSpec {
  std::vector<Rat> weights;  // normalized: max |w| <= 1
  Rat scale = 1;             // generator as supplied = scale * weights
  std::vector<SheafData> steps;
  std::vector<long> v_dims;
  SheafData ambient;
  int level = 0;

  static FiltrationSpec create(std::vector<Rat> raw_weights, std::vector<SheafData> steps,
                               std::vector<long> v_dims, SheafData ambient, int level);
  std::vector<Rat> raw_weights() const;
};

struct WeightGrading {
  Int j;
  std::vector<Int> integer_weights;
  std::vector<std::size_t> surviving;  // zero-based indices
};

Int j_of_zeta(const std::vector<Rat>& weights);
WeightGrading grading_of(const FiltrationSpec& filt);

Rat m_na(const FiltrationSpec& filt);
Rat j_na(const WeightGrading& grading, const std::vector<Rat>& weights);
Rat m2_slope_prediction(const FiltrationSpec& filt, const WeightGrading& grading);
std::pair<Rat, Rat> weight_sum_identity(const FiltrationSpec& filt, const WeightGrading& grading);

// Two-step filtration F subset E at level k with trace-free weights (a, b), a > b.
FiltrationSpec two_step_filtration(const SheafData& sub, const SheafData& ambient, int k,
                                   const Rat& a, const Rat& b);
// Trace-free weights for a two-step filtration, normalized to operator norm 1.
std::pair<Rat, Rat> two_step_weights(long sub_dim, long total_dim);

enum class Ordering { NonDestabilizing = -1, Equal = 0, Destabilizing = 1 };
Ordering le_potier_verdict(const SheafData& sub, const SheafData& ambient, int k);

enum class Stability { Stable, Semistable, Unstable };
const char* stability_name(Stability s);
struct StabilityVerdict {
  Stability verdict;
  std::size_t witness_index;
  SheafData witness;
};
StabilityVerdict slope_stability_verdict(const SheafData& ambient, const std::vector<SheafData>& candidates);

SheafData f_max_split(const std::vector<int>& degrees);
int regularity_catalog(const CatalogBundle& b);
int k0_level(const CatalogBundle& b);

std::vector<Rat> rationalize_weights(const std::vector<double>& real_weights, long denominator_bound);

std::string rat_str(const Rat& q);
Rat parse_rat(const std::string& s);

nlohmann::json to_json(const SheafData& s);
SheafData sheaf_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FiltrationSpec& f);
FiltrationSpec filtration_from_json(const nlohmann::json& j);

}  // namespace bml
