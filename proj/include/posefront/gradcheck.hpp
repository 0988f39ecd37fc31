#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace posefront {

struct GradcheckOptions {
  int trials = 100;
  std::uint64_t seed = 1;
  double step = 1e-5;         // central-difference step
  double kink_margin = 1e-4;  // trials with a ReLU input closer than this to 0 are redrawn
  bool inject_sign_error = false;  // negates every analytic gradient (self-test of the checker)
};

struct GradcheckRow {
  std::string component;
  int trials = 0;
  int redrawn = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Compares every backward pass against central differences on random inputs:
// affine, relu, hadamard, cross_entropy, mse, apl, residual_block, frontalize and
// the full training objective on a toy model (D_in 6, H 8, D 8, 3 identities, 4 pairs).
std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& opts);

bool all_passed(const std::vector<GradcheckRow>& rows);

// `component,trials,redrawn,max_rel_error,tolerance,passed` CSV.
void write_gradcheck_csv(std::ostream& out, const std::vector<GradcheckRow>& rows);

}  // namespace posefront
