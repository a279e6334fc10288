#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dmvr/discrete_dist.hpp"

namespace dmvr {

enum class AlphaKind { forward_kl_limit, reverse_kl_limit, generic, hellinger };

/// An alpha parameter together with which closed form evaluates it.
/// Values within 1e-9 of 0 or 1 snap to the exact KL limits, since the
/// generic formulas divide by alpha * (alpha - 1).
class AlphaSpec {
 public:
  static AlphaSpec of(double alpha);
  static AlphaSpec forward_kl() { return AlphaSpec(0.0, AlphaKind::forward_kl_limit); }
  static AlphaSpec reverse_kl() { return AlphaSpec(1.0, AlphaKind::reverse_kl_limit); }
  static AlphaSpec hellinger() { return AlphaSpec(0.5, AlphaKind::hellinger); }

  double alpha() const noexcept { return alpha_; }
  AlphaKind kind() const noexcept { return kind_; }
  bool is_limit() const noexcept {
    return kind_ == AlphaKind::forward_kl_limit || kind_ == AlphaKind::reverse_kl_limit;
  }

 private:
  AlphaSpec(double alpha, AlphaKind kind) : alpha_(alpha), kind_(kind) {}
  double alpha_;
  AlphaKind kind_;
};

inline constexpr double kAlphaSnap = 1e-9;

/// value = leakage_penalty + shape_term whenever both are finite. When the
/// policy does not leak mass outside the target support, the whole value is
/// reported as shape_term.
struct DivergenceValue {
  double value = 0.0;
  double leakage_penalty = 0.0;
  double shape_term = 0.0;
};

/// f_alpha(t). Defined for t >= 0 (t = 0 gives 1/alpha for alpha > 0 and +inf
/// at the forward-KL limit). Any real alpha is accepted here.
double generator(double t, const AlphaSpec& spec);

/// f'_alpha(t) for t > 0.
double generator_prime(double t, const AlphaSpec& spec);

/// lim_{t->inf} f_alpha(t) / t: 1/(1-alpha) below one, +inf from one upward.
double generator_prime_at_infinity(const AlphaSpec& spec);

/// sum_y pi(y)^alpha p(y)^(1-alpha), alpha in (0, 1).
double hellinger_sum(const Distribution& pi, const Distribution& p, double alpha);

/// Extended f-divergence D_{f_alpha}(pi, p) = sum_{p>0} p f(pi/p) + f'(inf) pi(p = 0),
/// alpha in [0, 1]. Infinite values are returned, never thrown.
DivergenceValue alpha_divergence(const Distribution& pi, const Distribution& p, const AlphaSpec& spec);

struct SupportDecomposition {
  double leakage = 0.0;
  double shape = 0.0;
};

/// Splits D_{f_alpha}(pi, p) into the penalty for pi's mass outside supp(p)
/// and pi(A)^alpha times the divergence of pi renormalized on A = supp(p).
SupportDecomposition decomposition_terms(const Distribution& pi, const Distribution& p, double alpha);

/// KL(p || q) = sum p log(p/q), +inf when p charges a zero of q.
double forward_kl(const Distribution& p, const Distribution& q);

/// KL(q || p); the argument order mirrors the policy-first convention.
double reverse_kl(const Distribution& q, const Distribution& p);

struct NamedDistribution {
  std::string id;
  Distribution dist;
};

/// CSV with header policy_id,alpha,divergence,leakage,shape; one row per
/// (policy, alpha) in input order.
std::string alpha_sweep_csv(const std::vector<NamedDistribution>& policies, const Distribution& target,
                            const std::vector<double>& alphas);

}  // namespace dmvr
