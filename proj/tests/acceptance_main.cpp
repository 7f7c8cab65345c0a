#include <iostream>

#include "bml/acceptance.hpp"

int main() {
  bml::AcceptanceOptions opts;
  opts.log = &std::cout;
  const bml::AcceptanceReport rep = bml::run_acceptance(opts);
  const bool ok = rep.gating_pass();
  std::cout << "acceptance: " << (ok ? "all gating criteria pass" : "gating failure") << std::endl;
  return ok ? 0 : 1;
}
