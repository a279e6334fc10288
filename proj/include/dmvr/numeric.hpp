#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>

namespace dmvr {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Neumaier-compensated running sum. Order of add() calls is the order of
/// accumulation, so callers that iterate in a fixed order get bit-identical
/// totals.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    // Infinite or NaN totals carry no rounding error to track.
    if (!std::isfinite(t)) {
      sum_ = t;
      return;
    }
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return std::isfinite(sum_) ? sum_ + comp_ : sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_sum(std::span<const double> xs) noexcept;

/// log(sum(exp(xs))), -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> xs) noexcept;

/// Shortest-free fixed format: "%.17g", with "inf", "-inf" and "nan" spelled out.
std::string format17(double x);

}  // namespace dmvr
