#include "dmvr/divergence.hpp"

#include <cmath>

#include "dmvr/errors.hpp"
#include "dmvr/numeric.hpp"

namespace dmvr {
namespace {

// p * (t^a - a t - (1 - a)) with t = pi / p, for p > 0. Two algebraically
// equal forms; the one matching the side of 1/2 that alpha is on keeps the
// expm1 argument small and avoids cancellation near the KL limits.
double scaled_numerator(double pi, double p, double a) {
  if (pi == 0.0) return -(1.0 - a) * p;
  const double log_t = std::log(pi) - std::log(p);
  if (a < 0.5) return p * std::expm1(a * log_t) - a * (pi - p);
  return pi * std::expm1((a - 1.0) * log_t) + (1.0 - a) * (pi - p);
}

double generic_numerator(double t, double a) {
  if (t == 0.0) {
    if (a < 0.0) return kInf;
    if (a == 0.0) return 0.0;
    return -(1.0 - a);
  }
  if (std::isinf(t)) return a > 1.0 ? kInf : (a < 1.0 ? -kInf : kNegInf);
  const double log_t = std::log(t);
  if (a < 0.5) return std::expm1(a * log_t) - a * (t - 1.0);
  return t * std::expm1((a - 1.0) * log_t) + (1.0 - a) * (t - 1.0);
}

void require_alpha_in_unit_open(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::DomainError, "alpha must lie in (0, 1), got " + format17(alpha));
  }
}

// Generic-alpha divergence via the extended definition, no decomposition.
double generic_divergence(const Distribution& pi, const Distribution& p, double a) {
  CompensatedSum on_support;
  CompensatedSum leaked;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.prob(i) > 0.0) {
      on_support.add(scaled_numerator(pi.prob(i), p.prob(i), a));
    } else {
      leaked.add(pi.prob(i));
    }
  }
  return on_support.value() / (a * (a - 1.0)) + leaked.value() / (1.0 - a);
}

}  // namespace

AlphaSpec AlphaSpec::of(double alpha) {
  if (!std::isfinite(alpha)) throw Error(ErrorCode::DomainError, "alpha must be finite");
  if (std::abs(alpha) <= kAlphaSnap) return forward_kl();
  if (std::abs(alpha - 1.0) <= kAlphaSnap) return reverse_kl();
  if (alpha == 0.5) return hellinger();
  return AlphaSpec(alpha, AlphaKind::generic);
}

double generator(double t, const AlphaSpec& spec) {
  if (t < 0.0 || std::isnan(t)) throw Error(ErrorCode::DomainError, "generator needs t >= 0");
  switch (spec.kind()) {
    case AlphaKind::reverse_kl_limit:
      if (t == 0.0) return 1.0;
      return t * std::log(t) - t + 1.0;
    case AlphaKind::forward_kl_limit:
      if (t == 0.0) return kInf;
      return -std::log(t) + t - 1.0;
    case AlphaKind::generic:
    case AlphaKind::hellinger: {
      const double a = spec.alpha();
      return generic_numerator(t, a) / (a * (a - 1.0));
    }
  }
  return 0.0;
}

double generator_prime(double t, const AlphaSpec& spec) {
  if (!(t > 0.0)) throw Error(ErrorCode::DomainError, "generator_prime needs t > 0");
  switch (spec.kind()) {
    case AlphaKind::reverse_kl_limit: return std::log(t);
    case AlphaKind::forward_kl_limit: return 1.0 - 1.0 / t;
    case AlphaKind::generic:
    case AlphaKind::hellinger: {
      const double a = spec.alpha();
      return std::expm1((a - 1.0) * std::log(t)) / (a - 1.0);
    }
  }
  return 0.0;
}

double generator_prime_at_infinity(const AlphaSpec& spec) {
  if (spec.alpha() >= 1.0) return kInf;
  return 1.0 / (1.0 - spec.alpha());
}

double hellinger_sum(const Distribution& pi, const Distribution& p, double alpha) {
  require_same_space(pi, p);
  require_alpha_in_unit_open(alpha);
  CompensatedSum acc;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pp = p.prob(i);
    const double qq = pi.prob(i);
    if (pp == 0.0 || qq == 0.0) continue;
    acc.add(std::exp(alpha * std::log(qq) + (1.0 - alpha) * std::log(pp)));
  }
  return acc.value();
}

double forward_kl(const Distribution& p, const Distribution& q) {
  require_same_space(p, q);
  CompensatedSum acc;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pp = p.prob(i);
    if (pp == 0.0) continue;
    const double qq = q.prob(i);
    if (qq == 0.0) return kInf;
    acc.add(pp * (std::log(pp) - std::log(qq)));
  }
  return acc.value();
}

double reverse_kl(const Distribution& q, const Distribution& p) { return forward_kl(q, p); }

SupportDecomposition decomposition_terms(const Distribution& pi, const Distribution& p, double alpha) {
  require_same_space(pi, p);
  require_alpha_in_unit_open(alpha);
  const auto target_support = support_mask(p);
  const double valid_mass = mass(pi, target_support);
  if (!(valid_mass > 0.0)) {
    throw Error(ErrorCode::ZeroMass, "policy puts no mass on the target support");
  }
  const Distribution renormalized = condition(pi, target_support);
  SupportDecomposition out;
  out.leakage = -std::expm1(alpha * std::log(valid_mass)) / (alpha * (1.0 - alpha));
  out.shape = std::exp(alpha * std::log(valid_mass)) * generic_divergence(renormalized, p, alpha);
  return out;
}

DivergenceValue alpha_divergence(const Distribution& pi, const Distribution& p, const AlphaSpec& spec) {
  require_same_space(pi, p);
  const double a = spec.alpha();
  if (a < 0.0 || a > 1.0) {
    throw Error(ErrorCode::DomainError, "alpha_divergence is defined for alpha in [0, 1]");
  }
  DivergenceValue out;
  const auto target_support = support_mask(p);
  const double valid_mass = mass(pi, target_support);
  bool leaks = false;
  for (std::size_t i = 0; i < p.size() && !leaks; ++i) {
    leaks = !target_support[i] && pi.prob(i) > 0.0;
  }
  switch (spec.kind()) {
    case AlphaKind::forward_kl_limit:
      out.value = forward_kl(p, pi);
      out.shape_term = out.value;
      // Limits of the decomposition as alpha -> 0: -ln pi(A) + KL(p || pi_A).
      if (leaks && valid_mass > 0.0) {
        out.leakage_penalty = -std::log(valid_mass);
        out.shape_term = forward_kl(p, condition(pi, target_support));
      }
      return out;
    case AlphaKind::reverse_kl_limit:
      out.value = reverse_kl(pi, p);
      out.shape_term = out.value;
      // As alpha -> 1 the leakage term diverges; the shape term tends to
      // pi(A) KL(pi_A || p).
      if (leaks) {
        out.leakage_penalty = kInf;
        out.shape_term = valid_mass > 0.0 ? valid_mass * reverse_kl(condition(pi, target_support), p) : 0.0;
      }
      return out;
    case AlphaKind::generic:
    case AlphaKind::hellinger:
      break;
  }
  out.value = generic_divergence(pi, p, a);
  if (!leaks) {
    out.shape_term = out.value;
  } else if (valid_mass > 0.0) {
    const auto parts = decomposition_terms(pi, p, a);
    out.leakage_penalty = parts.leakage;
    out.shape_term = parts.shape;
  } else {
    // Disjoint supports: pi(A)^alpha = 0 removes the shape term entirely.
    out.leakage_penalty = 1.0 / (a * (1.0 - a));
    out.shape_term = 0.0;
  }
  return out;
}

std::string alpha_sweep_csv(const std::vector<NamedDistribution>& policies, const Distribution& target,
                            const std::vector<double>& alphas) {
  std::string out = "policy_id,alpha,divergence,leakage,shape\n";
  for (const auto& named : policies) {
    for (double a : alphas) {
      const auto d = alpha_divergence(named.dist, target, AlphaSpec::of(a));
      out += named.id + ',' + format17(a) + ',' + format17(d.value) + ',' + format17(d.leakage_penalty) + ',' +
             format17(d.shape_term) + '\n';
    }
  }
  return out;
}

}  // namespace dmvr
