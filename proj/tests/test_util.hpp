#pragma once

#include <memory>

#include "infersched/costmodel.hpp"

namespace infersched::testing {

// Calibrated stub with the given coefficients.
inline CostMode linear_cost(std::array<double, kNumFeatures> coef) {
  auto lm = std::make_shared<LinearCostModel>();
  lm->coefficients = coef;
  return CalibratedCost{lm};
}

// Every non-empty batch takes one second.
inline CostMode unit_cost() {
  std::array<double, kNumFeatures> coef{};
  coef[0] = 1.0;
  return linear_cost(coef);
}

inline Request make_request(const std::string& id, Tokens input, Tokens output, Seconds arrival = 0.0) {
  Request r;
  r.id = id;
  r.input_len = input;
  r.output_len = output;
  r.arrival_time = arrival;
  return r;
}

} // namespace infersched::testing
