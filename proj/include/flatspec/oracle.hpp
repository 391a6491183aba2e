#pragma once

// Self-checks of the numerical routes against independent ones: dense
// eigensolvers, finite differences and the product-chain closed forms.

#include <string>
#include <vector>

#include "flatspec/kernels.hpp"
#include "flatspec/serialize.hpp"

namespace flatspec {

struct OracleResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

struct OracleReport {
  std::vector<OracleResult> results;
  bool all_pass() const;
};

OracleReport oracle_suite(Exec exec = Exec::parallel);

void to_json(Json& j, const OracleResult& r);
void to_json(Json& j, const OracleReport& r);

}  // namespace flatspec
