#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vseg/arch.hpp"
#include "vseg/loss_metrics.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

struct GradCheckOptions {
  std::size_t instances = 20;  // random instances per check
  double step = 1e-5;          // central-difference step
  double tolerance = 1e-4;     // on the relative error
  double floor = 1e-5;         // denominator floor of the relative error
  std::size_t coords_per_tensor = 4;  // sampled coordinates per network tensor; 0 checks all
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  std::string name;
  std::size_t instances = 0;
  std::size_t coordinates = 0;  // compared coordinates
  std::size_t skipped = 0;      // steps that crossed a PReLU kink
  double max_error = 0.0;       // largest relative error |a - n| / max(|a|, |n|, floor)
  std::string worst;            // tensor, index and values at max_error
  bool passed = false;
};

double relative_error(double analytic, double numeric, double floor);

/// Names of the individual checks, in run order.
std::vector<std::string> gradcheck_names();

/// Runs one named check (see gradcheck_names()).
GradCheckReport run_gradcheck(const std::string& name, const GradCheckOptions& opts);

/// Every layer primitive, both losses, and a tiny full network on an 8^3
/// input in every combination of skip mode, head count and loss.
std::vector<GradCheckReport> run_gradcheck_suite(const GradCheckOptions& opts,
                                                 const std::function<void(const GradCheckReport&)>& on_report = {});

}  // namespace vseg
