#pragma once

#include "cpfs3d/eval3d.hpp"
#include "cpfs3d/protobank.hpp"

#include <string>
#include <vector>

namespace cpfs3d {

// One verification outcome. `value` is the measured quantity (an error, a
// count) and `limit` the bound it must stay under; exact checks use limit 0.
struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double limit = 0.0;
  std::string detail;
};

std::string format_check_line(const CheckResult& r);
bool all_passed(const std::vector<CheckResult>& results);

// Closed-form loss values: uniform similarities give ln N / ln W', the
// orthonormal two-way case gives ln(1 + e^{-1/tau}).
std::vector<CheckResult> run_closed_form_checks();

// Central finite differences (h = 1e-5, double precision) against the tape
// gradients of the semantic, primitive, and detection losses, plus the
// detach and update semantics of the prototype bank.
std::vector<CheckResult> run_grad_checks(uint64_t seed);

// Brute-force reimplementations of IoU, average precision, prototype
// assignment, and cross-attention, compared on randomized instances.
std::vector<CheckResult> run_oracle_checks(uint64_t seed);

// The independent implementations, exposed for the unit suites.
double oracle_iou3d(const Box3D& a, const Box3D& b);
double oracle_average_precision(const std::vector<RankedDet>& dets,
                                const std::vector<std::pair<int, Box3D>>& gts,
                                double iou_threshold);
std::vector<int> oracle_assign_labels(const MatX<float>& features,
                                      const std::vector<char>& foreground,
                                      const MatX<float>& bank_rows);

}  // namespace cpfs3d
