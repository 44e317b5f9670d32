#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace upmnet {

/// Five-point finite-difference verification of the global-aware backward pass and
/// of the association-loss gradient. Configurations are drawn from
/// c in {8,16}, c' in {4,8}, k in {1,2,4}, batch in {4,8}; draws that land
/// within `kink_margin` of a ReLU or hinge kink are redrawn.
struct GradcheckOptions {
  std::uint64_t seed = 1;
  int num_configs = 25;
  double step = 1e-4;
  double kink_margin = 1e-3;
  double abs_floor = 1e-6;  // denominator floor of the relative error
};

struct GradcheckCase {
  int in_dim = 0;
  int reduced_dim = 0;
  int k = 0;
  int batch = 0;
  double max_rel_err_params = 0.0;    // global-aware parameters, both objectives
  double max_rel_err_inputs = 0.0;    // x_0..x_k
  double max_rel_err_features = 0.0;  // association loss w.r.t. its input features
  std::size_t checked = 0;
  int redraws = 0;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace upmnet
