#include "edcflow/metrics.hpp"

#include <cmath>

namespace edcflow {

namespace {

void validate(const FlowImage& pred, const FlowImage& gt, const std::vector<uint8_t>& mask) {
  check(pred.width == gt.width && pred.height == gt.height, ErrorKind::ShapeError,
        "metrics: prediction and ground truth sizes differ");
  check(mask.size() == gt.pixels(), ErrorKind::ShapeError, "metrics: mask size mismatch");
  bool any = false;
  for (uint8_t m : mask)
    if (m) {
      any = true;
      break;
    }
  check(any, ErrorKind::EmptyGroundTruth, "metrics: no valid ground-truth pixels");
}

inline double err_at(const FlowImage& pred, const FlowImage& gt, size_t i) {
  const double du = static_cast<double>(pred.data[2 * i]) - static_cast<double>(gt.data[2 * i]);
  const double dv = static_cast<double>(pred.data[2 * i + 1]) - static_cast<double>(gt.data[2 * i + 1]);
  return std::sqrt(du * du + dv * dv);
}

}  // namespace

double epe(const FlowImage& pred, const FlowImage& gt, const std::vector<uint8_t>& mask) {
  validate(pred, gt, mask);
  double s = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      s += err_at(pred, gt, i);
      ++n;
    }
  return s / static_cast<double>(n);
}

double angular_error(const FlowImage& pred, const FlowImage& gt, const std::vector<uint8_t>& mask) {
  validate(pred, gt, mask);
  double s = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    // angle between homogeneous direction vectors (u, v, 1)
    const double pu = pred.data[2 * i], pv = pred.data[2 * i + 1];
    const double gu = gt.data[2 * i], gv = gt.data[2 * i + 1];
    const double num = pu * gu + pv * gv + 1.0;
    const double den = std::sqrt(pu * pu + pv * pv + 1.0) * std::sqrt(gu * gu + gv * gv + 1.0);
    double c = num / den;
    c = std::min(1.0, std::max(-1.0, c));
    s += std::acos(c) * (180.0 / M_PI);
    ++n;
  }
  return s / static_cast<double>(n);
}

double npe(const FlowImage& pred, const FlowImage& gt, const std::vector<uint8_t>& mask, double n) {
  check(n > 0, ErrorKind::InvalidConfig, "npe: threshold must be positive");
  validate(pred, gt, mask);
  int64_t bad = 0, total = 0;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      if (err_at(pred, gt, i) > n) ++bad;
      ++total;
    }
  return 100.0 * static_cast<double>(bad) / static_cast<double>(total);
}

double outlier_pct(const FlowImage& pred, const FlowImage& gt, const std::vector<uint8_t>& mask) {
  validate(pred, gt, mask);
  int64_t bad = 0, total = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double e = err_at(pred, gt, i);
    const double gu = gt.data[2 * i], gv = gt.data[2 * i + 1];
    const double mag = std::sqrt(gu * gu + gv * gv);
    if (e > 3.0 && e > 0.05 * mag) ++bad;
    ++total;
  }
  return 100.0 * static_cast<double>(bad) / static_cast<double>(total);
}

MetricReport evaluate_flow(const FlowImage& pred, const FlowImage& gt, const std::vector<uint8_t>& mask) {
  MetricReport r;
  r.epe = epe(pred, gt, mask);
  r.ae = angular_error(pred, gt, mask);
  for (int n : {1, 2, 3}) r.npe[n] = npe(pred, gt, mask, static_cast<double>(n));
  r.outlier_pct = outlier_pct(pred, gt, mask);
  for (uint8_t m : mask) r.valid_count += m ? 1 : 0;
  return r;
}

}  // namespace edcflow
