#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

#include "bml/geometry.hpp"
#include "bml/stability.hpp"

namespace bml {

using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;

// A basis element before orthonormalization: the monomial Z^exp placed in one
// component. Split bundles: component = summand. Euler T_P2: component of O(1)^3,
// taken modulo the Euler relation.
struct RawSection {
  int component = 0;
  std::array<int, 3> exp{};
};

struct SectionBasis {
  CatalogBundle bundle;
  int level = 0;
  int rank = 1;
  long dim = 0;
  std::vector<RawSection> raw;
  std::vector<std::vector<Rat>> gram_exact;  // L2 Gram of the raw sections
  MatC transform;                            // basis = transform * raw
  bool orthonormal = false;
};

// Raw monomial basis (graded lexicographic, summand-major); optionally
// L2-orthonormalized against the homogeneous Fubini-Study metric of E(k).
SectionBasis section_basis(const CatalogBundle& bundle, int k, bool orthonormalize = true);

// N x r matrix: row i is the value of basis section i in the chart frame of E(k) at pt.
MatC evaluate_q(const SectionBasis& basis, const ChartPoint& pt);
// d Q / d w_a with w_a = log y_a (Q is holomorphic in the chart coordinates).
MatC evaluate_q_dlog(const SectionBasis& basis, const ChartPoint& pt, int a);
// Rows for the raw (untransformed) sections.
MatC evaluate_q_raw(const SectionBasis& basis, const ChartPoint& pt);
// Numeric rank of Q(x) with relative singular-value threshold.
int q_rank(const MatC& q, double rel_tol = 1e-8);

struct MetricField {
  const QuadratureGrid* grid = nullptr;
  std::vector<MatC> h;
  double min_eigenvalue() const;
};

MetricField h_ref(const SectionBasis& basis, const QuadratureGrid& grid);

// Exact L2 pairing of monomial sections against the homogeneous FS metric on E(k).
Rat raw_l2_pairing(const SectionBasis& basis, std::size_t i, std::size_t j);

CatalogBundle bundle_from_string(const std::string& s);  // "split_p1:0,2", "euler_tp2"
std::string bundle_to_string(const CatalogBundle& b);
nlohmann::json to_json(const CatalogBundle& b);
CatalogBundle bundle_from_json(const nlohmann::json& j);

}  // namespace bml
