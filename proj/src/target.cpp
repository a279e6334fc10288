#include "dmvr/target.hpp"

#include <algorithm>
#include <cmath>

#include "dmvr/errors.hpp"
#include "dmvr/numeric.hpp"

namespace dmvr {

double TargetSpec::effective_z() const {
  if (z_exact) return std::max(*z_exact, z_floor);
  if (z_estimate) return std::max(z_estimate->value, z_floor);
  throw Error(ErrorCode::DomainError, "target has no partition function");
}

ExactTarget build_target_exact(const TabularPolicy& base, const Verifier& verifier, ContextId context,
                               std::size_t budget) {
  const auto space = enumerate_space(base, budget);
  const auto lp = sequence_log_probs(base, context, *space);
  std::vector<double> weights(space->size(), 0.0);
  for (std::size_t i = 0; i < space->size(); ++i) {
    if (verifier(space->at(i), context)) weights[i] = std::exp(lp[i]);
  }
  const double z = compensated_sum(weights);
  if (!(z > 0.0)) {
    throw Error(ErrorCode::EmptyTarget, "no sequence is accepted in context '" + base.contexts().at(context) + "'");
  }
  return ExactTarget{Distribution::normalize(weights, space), z};
}

TargetSpec make_exact_target_spec(const TabularPolicy& base, const Verifier& verifier, ContextId context,
                                  double z_floor, std::size_t budget) {
  const auto exact = build_target_exact(base, verifier, context, budget);
  TargetSpec spec{base, verifier, context, exact.z, std::nullopt, z_floor};
  return spec;
}

double estimate_partition(std::span<const Sequence> samples,
                          const std::function<double(const Sequence&)>& proposal_log_prob,
                          const TabularPolicy& base, const Verifier& verifier, ContextId context) {
  if (samples.empty()) return 0.0;
  CompensatedSum acc;
  for (const auto& y : samples) {
    if (!verifier(y, context)) continue;
    acc.add(std::exp(base.log_prob(context, y) - proposal_log_prob(y)));
  }
  return acc.value() / static_cast<double>(samples.size());
}

double estimate_partition(std::span<const Sequence> samples, const TabularPolicy& proposal,
                          const TabularPolicy& base, const Verifier& verifier, ContextId context) {
  return estimate_partition(
      samples, [&](const Sequence& y) { return proposal.log_prob(context, y); }, base, verifier, context);
}

double floor_partition(double z, double z_floor) { return std::max(z, z_floor); }

TemperedTarget tempered_target(const TabularPolicy& base, const Verifier& verifier, ContextId context, double beta,
                               std::size_t budget) {
  if (!(beta > 0.0)) throw Error(ErrorCode::DomainError, "beta must be positive");
  const auto space = enumerate_space(base, budget);
  const auto lp = sequence_log_probs(base, context, *space);
  // Weights scaled by e^{-1/beta}: accepted keep base(y), rejected get
  // base(y) e^{-1/beta}. Avoids overflow of e^{1/beta} for small beta.
  const double damp = std::exp(-1.0 / beta);
  std::vector<double> weights(space->size());
  for (std::size_t i = 0; i < space->size(); ++i) {
    const double b = std::exp(lp[i]);
    weights[i] = verifier(space->at(i), context) ? b : b * damp;
  }
  const double scaled_total = compensated_sum(weights);
  TemperedTarget out{beta, Distribution::normalize(weights, space), 0.0, 0.0};
  out.log_z_beta = 1.0 / beta + std::log(scaled_total);
  out.z_beta = std::exp(out.log_z_beta);
  return out;
}

double tv_bound_closed_form(double z, double beta) {
  if (!(z > 0.0) || z > 1.0) throw Error(ErrorCode::DomainError, "Z must lie in (0, 1]");
  if (!(beta > 0.0)) throw Error(ErrorCode::DomainError, "beta must be positive");
  const double leak = std::exp(-1.0 / beta) * (1.0 - z);
  return leak / (z + leak);
}

double target_over_policy_ratio(const TargetSpec& target, const TabularPolicy& policy, const Sequence& y) {
  policy.validate_sequence(y);
  if (!target.verifier(y, target.context)) return 0.0;
  const double policy_lp = policy.log_prob(target.context, y);
  if (policy_lp == kNegInf) throw Error(ErrorCode::DomainError, "policy assigns zero probability to the sequence");
  const double base_lp = target.base.log_prob(target.context, y);
  return std::exp(base_lp - std::log(target.effective_z()) - policy_lp);
}

}  // namespace dmvr
