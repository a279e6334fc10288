#include "dmvr/oracle.hpp"

#include <cmath>
#include <map>
#include <set>

#include "dmvr/errors.hpp"

namespace dmvr {

EnumeratedEnv enumerate_env(const TabularPolicy& base, const Verifier& verifier, ContextId context,
                            std::size_t budget) {
  const auto space = enumerate_space(base, budget);
  auto base_probs = sequence_distribution(base, context, space);
  std::vector<std::uint8_t> bits(space->size());
  std::vector<double> w(space->size(), 0.0);
  for (std::size_t i = 0; i < space->size(); ++i) {
    bits[i] = verifier(space->at(i), context) ? 1 : 0;
    if (bits[i]) w[i] = base_probs.prob(i);
  }
  const double z = compensated_sum(w);
  if (!(z > 0.0)) throw Error(ErrorCode::EmptyTarget, "verifier rejects every sequence");
  auto target = Distribution::normalize(w, space);
  return EnumeratedEnv{base, verifier, context, space, std::move(base_probs), std::move(bits), std::move(target), z};
}

Distribution policy_distribution(const TabularPolicy& policy, const EnumeratedEnv& env) {
  return sequence_distribution(policy, env.context, env.space);
}

GradientVector exact_expected_gradient(Estimator estimator, const TabularPolicy& policy, const EnumeratedEnv& env,
                                       const EstimatorParams& params) {
  const auto pi = policy_distribution(policy, env);
  const bool from_base = estimator == Estimator::rs_ft || estimator == Estimator::kl_dpg_from_base;
  if (from_base && params.baseline != BaselineKind::none) {
    throw Error(ErrorCode::DomainError, "baselines are not expectation-neutral under base-model sampling");
  }
  double scale = 1.0;
  if (params.baseline == BaselineKind::group_mean) {
    if (params.group_K < 1) throw Error(ErrorCode::GroupTooSmall, "group_K must be positive");
    scale = 1.0 - 1.0 / params.group_K;
  }
  GradientVector g(policy.vocab().size());
  for (std::size_t i = 0; i < env.space->size(); ++i) {
    const double q = from_base ? env.base_probs.prob(i) : pi.prob(i);
    if (q == 0.0) continue;
    const double v = env.verifier_bits[i] ? 1.0 : 0.0;
    const double p = env.target.prob(i);
    double w = 0.0;
    switch (estimator) {
      case Estimator::reinforce:
      case Estimator::rs_ft:
        w = v;
        break;
      case Estimator::kl_control: {
        const double b = env.base_probs.prob(i);
        if (b == 0.0) throw Error(ErrorCode::DomainError, "policy charges a sequence the base model excludes");
        w = v - params.beta_kl * (std::log(pi.prob(i)) - std::log(b));
        break;
      }
      case Estimator::kl_dpg:
        w = p / pi.prob(i) - 1.0;
        break;
      case Estimator::alpha_dpg: {
        const double t = p / pi.prob(i);
        w = t == 0.0 ? -1.0 : std::expm1((1.0 - params.alpha) * std::log(t));
        w = std::min(w, params.clip_M);
        if (params.exact_pseudo_reward) w /= 1.0 - params.alpha;
        break;
      }
      case Estimator::kl_dpg_from_base:
        w = p / env.base_probs.prob(i);
        break;
    }
    if (w == 0.0) continue;
    g.add_scaled(policy.score_gradient(env.context, env.space->at(i)), q * w * scale);
  }
  if (!g.all_finite()) throw Error(ErrorCode::NonFiniteGradient, "non-finite exact gradient");
  return g;
}

DivergenceValue exact_divergence_to_target(const TabularPolicy& policy, const EnumeratedEnv& env,
                                           const AlphaSpec& spec) {
  return alpha_divergence(policy_distribution(policy, env), env.target, spec);
}

double exact_expected_reward(const TabularPolicy& policy, const EnumeratedEnv& env) {
  const auto pi = policy_distribution(policy, env);
  CompensatedSum acc;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (env.verifier_bits[i]) acc.add(pi.prob(i));
  }
  return acc.value();
}

double exact_entropy(const TabularPolicy& policy, const EnumeratedEnv& env) {
  const auto pi = policy_distribution(policy, env);
  CompensatedSum acc;
  for (double p : pi.probs()) {
    if (p > 0.0) acc.add(-p * std::log(p));
  }
  return acc.value();
}

Simulation simulate_exact_training(Estimator estimator, const EnumeratedEnv& env, const TabularPolicy& start,
                                   double lr, int iterations, const EstimatorParams& params,
                                   const AlphaSpec& report) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::DomainError, "learning rate must be non-negative");
  Simulation sim{{}, start};
  auto point = [&](const TabularPolicy& p) {
    return TrajectoryPoint{exact_expected_reward(p, env), exact_entropy(p, env),
                           exact_divergence_to_target(p, env, report).value};
  };
  sim.trajectory.push_back(point(sim.final_policy));
  for (int it = 0; it < iterations; ++it) {
    const auto g = exact_expected_gradient(estimator, sim.final_policy, env, params);
    if (!g.all_finite()) throw Error(ErrorCode::NonFiniteGradient, "non-finite exact gradient");
    // A zero step leaves the logits (and version) untouched.
    if (lr > 0.0) sim.final_policy = sim.final_policy.apply_update(g, lr);
    sim.trajectory.push_back(point(sim.final_policy));
  }
  return sim;
}

GradientVector complex_step_gradient(const TabularPolicy& policy, ContextId context, const OutcomeSpace& space,
                                     const ComplexFunctional& functional) {
  using cd = std::complex<double>;
  constexpr double h = 1e-30;
  const std::size_t vocab = policy.vocab().size();

  // Free states reached by the space, with their real log-softmax rows.
  std::map<Sequence, std::vector<double>> log_rows;
  for (const auto& y : space.outcomes()) {
    Sequence prefix;
    for (TokenId t : y) {
      if (!policy.is_forced(prefix) && !log_rows.count(prefix)) {
        log_rows.emplace(prefix, policy.next_token_log_probs(context, prefix));
      }
      prefix.push_back(t);
    }
  }
  std::vector<double> base_lp(space.size(), 0.0);
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto& y = space.at(i);
    Sequence prefix;
    for (TokenId t : y) {
      auto it = log_rows.find(prefix);
      if (it != log_rows.end()) base_lp[i] += it->second[t];
      prefix.push_back(t);
    }
  }

  GradientVector g(vocab);
  std::vector<cd> probs(space.size());
  for (const auto& [state, row_lp] : log_rows) {
    const auto z = policy.logits(context, state);
    auto& out = g.row(StateKey{context, state});
    for (std::size_t k = 0; k < vocab; ++k) {
      // log-softmax of z + i h e_k.
      cd total = 0.0;
      double zmax = -kInf;
      for (double zi : z) zmax = std::max(zmax, zi);
      for (std::size_t j = 0; j < vocab; ++j) {
        const cd zj(z[j] - zmax, j == k ? h : 0.0);
        if (z[j] != -kInf) total += std::exp(zj);
      }
      const cd lse = std::log(total) + zmax;
      for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& y = space.at(i);
        const bool through = y.size() > state.size() && std::equal(state.begin(), state.end(), y.begin());
        if (!through) {
          probs[i] = std::exp(base_lp[i]);
          continue;
        }
        const TokenId next = y[state.size()];
        const cd lp_c = cd(z[next], static_cast<std::size_t>(next) == k ? h : 0.0) - lse;
        const cd lp = base_lp[i] - row_lp[next] + lp_c;
        probs[i] = row_lp[next] == -kInf ? cd(0.0) : std::exp(lp);
      }
      out[k] = functional(probs).imag() / h;
    }
  }
  return g;
}

std::string oracle_dump_csv(const EnumeratedEnv& env) {
  std::string out = "y,pi_base,v,p_x\n";
  for (std::size_t i = 0; i < env.space->size(); ++i) {
    out += '"' + env.base.format_sequence(env.space->at(i)) + "\"," + format17(env.base_probs.prob(i)) + ',' +
           (env.verifier_bits[i] ? "1" : "0") + ',' + format17(env.target.prob(i)) + '\n';
  }
  return out;
}

}  // namespace dmvr
