#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dmvr/discrete_dist.hpp"
#include "dmvr/divergence.hpp"
#include "dmvr/numeric.hpp"
#include "dmvr/policy.hpp"
#include "dmvr/trainers.hpp"
#include "dmvr/verifier.hpp"

namespace dmvr {

/// One context of a task, enumerated exhaustively.
struct EnumeratedEnv {
  TabularPolicy base;
  Verifier verifier;
  ContextId context = 0;
  SpacePtr space;
  Distribution base_probs;
  std::vector<std::uint8_t> verifier_bits;
  /// normalize(base_probs * verifier_bits).
  Distribution target;
  double z_exact = 0.0;
};

/// Throws BudgetExceeded above `budget` outcomes and EmptyTarget when the
/// verifier rejects everything.
EnumeratedEnv enumerate_env(const TabularPolicy& base, const Verifier& verifier, ContextId context,
                            std::size_t budget = kDefaultOutcomeBudget);

/// Estimators whose expectation the oracle evaluates. The last two sample
/// from the base model instead of the policy.
enum class Estimator { reinforce, kl_control, kl_dpg, alpha_dpg, rs_ft, kl_dpg_from_base };

struct EstimatorParams {
  double beta_kl = 0.0;
  double alpha = 0.5;
  double clip_M = kInf;
  /// alpha_dpg weight divided by (1 - alpha), i.e. -f'(pi/p).
  bool exact_pseudo_reward = false;
  /// Only group_mean changes the expectation, by the factor 1 - 1/group_K;
  /// the other baselines are sample-independent and drop out.
  BaselineKind baseline = BaselineKind::none;
  int group_K = 1;
};

/// Sequence distribution of `policy` in the env's context.
Distribution policy_distribution(const TabularPolicy& policy, const EnumeratedEnv& env);

/// sum_y q(y) w(y) grad log pi(y), with q the estimator's sampling
/// distribution and w its per-sample weight. No loss normalization.
GradientVector exact_expected_gradient(Estimator estimator, const TabularPolicy& policy, const EnumeratedEnv& env,
                                       const EstimatorParams& params = {});

DivergenceValue exact_divergence_to_target(const TabularPolicy& policy, const EnumeratedEnv& env,
                                           const AlphaSpec& spec);
double exact_expected_reward(const TabularPolicy& policy, const EnumeratedEnv& env);
double exact_entropy(const TabularPolicy& policy, const EnumeratedEnv& env);

struct TrajectoryPoint {
  double reward = 0.0;
  double entropy = 0.0;
  double divergence = 0.0;
};

struct Simulation {
  /// iterations + 1 points, the first at the starting policy.
  std::vector<TrajectoryPoint> trajectory;
  TabularPolicy final_policy;
};

/// Iterates logits += lr * exact_expected_gradient from `start`; lr = 0
/// gives a constant trajectory.
Simulation simulate_exact_training(Estimator estimator, const EnumeratedEnv& env, const TabularPolicy& start,
                                   double lr, int iterations, const EstimatorParams& params = {},
                                   const AlphaSpec& report = AlphaSpec::hellinger());

/// A scalar functional of the sequence probabilities, evaluated on complex
/// inputs so it can be differentiated by the complex-step method.
using ComplexFunctional = std::function<std::complex<double>(std::span<const std::complex<double>>)>;

/// Gradient of F(pi_theta) with respect to every free logit of the context,
/// by complex-step differentiation (no subtractive cancellation, so the
/// result is accurate to rounding). Forced states are skipped.
GradientVector complex_step_gradient(const TabularPolicy& policy, ContextId context, const OutcomeSpace& space,
                                     const ComplexFunctional& functional);

/// y,pi_base,v,p_x rows in enumeration order.
std::string oracle_dump_csv(const EnumeratedEnv& env);

}  // namespace dmvr
