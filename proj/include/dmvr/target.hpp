#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>

#include "dmvr/discrete_dist.hpp"
#include "dmvr/policy.hpp"
#include "dmvr/verifier.hpp"

namespace dmvr {

inline constexpr double kDefaultZFloor = 1e-4;

struct PartitionEstimate {
  double value = 0.0;
  std::size_t sample_count = 0;
  std::string proposal_id;
};

/// The verifier-filtered target p_x(y) = base(y|x) v(y,x) / Z_x for one context.
struct TargetSpec {
  TabularPolicy base;
  Verifier verifier;
  ContextId context = 0;
  std::optional<double> z_exact;
  std::optional<PartitionEstimate> z_estimate;
  double z_floor = kDefaultZFloor;

  /// max(Z, z_floor), preferring the exact value when both are present.
  double effective_z() const;
};

struct ExactTarget {
  Distribution dist;
  double z = 0.0;
};

/// Enumerates every sequence, keeps the accepted ones with their base
/// weights and normalizes. Throws EmptyTarget when nothing is accepted and
/// BudgetExceeded when the space is too large.
ExactTarget build_target_exact(const TabularPolicy& base, const Verifier& verifier, ContextId context,
                               std::size_t budget = kDefaultOutcomeBudget);

/// TargetSpec with z_exact filled in by enumeration.
TargetSpec make_exact_target_spec(const TabularPolicy& base, const Verifier& verifier, ContextId context,
                                  double z_floor = kDefaultZFloor, std::size_t budget = kDefaultOutcomeBudget);

/// Importance-sampling estimate (1/N) sum base(y) v(y) / q(y). Unfloored.
double estimate_partition(std::span<const Sequence> samples, const TabularPolicy& proposal,
                          const TabularPolicy& base, const Verifier& verifier, ContextId context);
/// Same estimator with an arbitrary proposal given by its log-probability.
double estimate_partition(std::span<const Sequence> samples,
                          const std::function<double(const Sequence&)>& proposal_log_prob,
                          const TabularPolicy& base, const Verifier& verifier, ContextId context);

double floor_partition(double z, double z_floor = kDefaultZFloor);

/// Exponentially tilted base: base(y) exp(v(y)/beta) / Z(beta).
struct TemperedTarget {
  double beta = 1.0;
  Distribution dist;
  double log_z_beta = 0.0;
  /// exp(log_z_beta); +inf when that overflows.
  double z_beta = 0.0;
};

TemperedTarget tempered_target(const TabularPolicy& base, const Verifier& verifier, ContextId context, double beta,
                               std::size_t budget = kDefaultOutcomeBudget);

/// ||p_beta - p||_TV = e^{-1/beta}(1 - Z) / (Z + e^{-1/beta}(1 - Z)).
double tv_bound_closed_form(double z, double beta);

/// p_x(y) / pi(y|x), evaluated in the log domain with the effective Z.
/// Exactly 0 for rejected sequences, whatever pi says; otherwise DomainError
/// when pi(y|x) = 0.
double target_over_policy_ratio(const TargetSpec& target, const TabularPolicy& policy, const Sequence& y);

}  // namespace dmvr
