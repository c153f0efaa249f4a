#pragma once

#include <map>

#include "edcflow/flowio.hpp"

namespace edcflow {

struct MetricReport {
  double epe = 0.0;          // mean endpoint error, pixels
  double ae = 0.0;           // mean angular error, degrees
  std::map<int, double> npe; // n -> percent of pixels with endpoint error > n
  double outlier_pct = 0.0;  // endpoint error > 3 px and > 5% of |gt|
  int64_t valid_count = 0;
};

double epe(const FlowImage& pred, const FlowImage& gt, const std::vector<uint8_t>& mask);
double angular_error(const FlowImage& pred, const FlowImage& gt, const std::vector<uint8_t>& mask);
double npe(const FlowImage& pred, const FlowImage& gt, const std::vector<uint8_t>& mask, double n);
double outlier_pct(const FlowImage& pred, const FlowImage& gt, const std::vector<uint8_t>& mask);

// all of the above in one pass, with npe at n = 1, 2, 3
MetricReport evaluate_flow(const FlowImage& pred, const FlowImage& gt, const std::vector<uint8_t>& mask);

}  // namespace edcflow
