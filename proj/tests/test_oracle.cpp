#include <cmath>
#include <complex>
#include <set>

#include "doctest.h"
#include "dmvr/errors.hpp"
#include "dmvr/numeric.hpp"
#include "dmvr/oracle.hpp"
#include "dmvr/target.hpp"
#include "test_support.hpp"

using namespace dmvr;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

// Random base, random non-empty accept set on the seven-sequence task.
EnumeratedEnv random_env(RngStream& rng) {
  const std::vector<std::string> all = {"eos", "a eos", "b eos", "a a eos", "a b eos", "b a eos", "b b eos"};
  std::vector<std::string> accept;
  while (accept.empty()) {
    for (const auto& y : all) {
      if (rng.uniform() < 0.5) accept.push_back(y);
    }
  }
  auto task = testing::small_eos_task(accept);
  return enumerate_env(testing::randomize(task.base, rng), task.verifier, 0);
}

TabularPolicy at(const EnumeratedEnv& env, const Distribution& d) {
  TabularPolicy p = env.base;
  assign_distribution(p, env.context, d);
  return p;
}

// Free logit coordinates of the env's policy shape.
std::vector<Sequence> free_states(const EnumeratedEnv& env) {
  std::set<Sequence> states;
  for (const auto& y : env.space->outcomes()) {
    Sequence prefix;
    for (TokenId t : y) {
      if (!env.base.is_forced(prefix)) states.insert(prefix);
      prefix.push_back(t);
    }
  }
  return {states.begin(), states.end()};
}

}  // namespace

TEST_CASE("enumerate_env") {
  const auto task = testing::four_outcome_task({"a", "c"});
  const auto env = enumerate_env(task.base, task.verifier, 0);
  CHECK(env.space->size() == 4);
  CHECK(testing::vec(env.target.probs()) == std::vector<double>{0.5, 0.0, 0.5, 0.0});
  CHECK(env.verifier_bits == std::vector<std::uint8_t>{1, 0, 1, 0});
  CHECK(env.z_exact == 0.5);
  CHECK(oracle_dump_csv(env) == "y,pi_base,v,p_x\n\"a\",0.25,1,0.5\n\"b\",0.25,0,0\n\"c\",0.25,1,0.5\n\"d\",0.25,0,0\n");

  const auto none = testing::four_outcome_task({});
  CHECK(code_of([&] { enumerate_env(none.base, none.verifier, 0); }) == ErrorCode::EmptyTarget);
  const auto eos = testing::small_eos_task();
  CHECK(code_of([&] { enumerate_env(eos.base, eos.verifier, 0, 5); }) == ErrorCode::BudgetExceeded);
}

TEST_CASE("REINFORCE expected gradient on two outcomes") {
  const auto task = testing::two_outcome_task({"a"});
  const auto env = enumerate_env(task.base, task.verifier, 0);
  const auto g = exact_expected_gradient(Estimator::reinforce, task.base, env);
  CHECK(g.at({0, {}}, 0) == 0.25);
  CHECK(g.at({0, {}}, 1) == -0.25);

  EstimatorParams grouped;
  grouped.baseline = BaselineKind::group_mean;
  grouped.group_K = 4;
  const auto gm = exact_expected_gradient(Estimator::reinforce, task.base, env, grouped);
  CHECK(gm.at({0, {}}, 0) == 0.1875);
  grouped.baseline = BaselineKind::leave_one_out;
  CHECK(exact_expected_gradient(Estimator::reinforce, task.base, env, grouped).max_abs_diff(g) == 0.0);
  grouped.baseline = BaselineKind::constant;
  CHECK(code_of([&] { exact_expected_gradient(Estimator::rs_ft, task.base, env, grouped); }) ==
        ErrorCode::DomainError);
}

TEST_CASE("expected gradients vanish at their fixed points") {
  RngStream rng(301, {1});
  for (int trial = 0; trial < 20; ++trial) {
    const auto env = random_env(rng);
    const auto target = at(env, env.target);
    CHECK(exact_expected_gradient(Estimator::kl_dpg, target, env).max_abs() <= 1e-12);
    CHECK(exact_expected_gradient(Estimator::reinforce, target, env).max_abs() <= 1e-12);
    CHECK(exact_expected_gradient(Estimator::rs_ft, target, env).max_abs() <= 1e-12);
    for (double a : {0.0, 0.25, 0.5, 0.75, 0.9, 0.999}) {
      EstimatorParams p;
      p.alpha = a;
      p.clip_M = 10.0;
      CHECK(exact_expected_gradient(Estimator::alpha_dpg, target, env, p).max_abs() <= 1e-12);
    }
    const double beta = 0.3;
    const auto tempered = at(env, tempered_target(env.base, env.verifier, 0, beta).dist);
    CHECK(exact_expected_gradient(Estimator::kl_control, tempered, env, EstimatorParams{beta}).max_abs() <= 1e-12);
  }
}

TEST_CASE("REINFORCE gradient matches finite differences of the expected reward") {
  RngStream rng(311, {2});
  const auto env = random_env(rng);
  const auto states = free_states(env);
  constexpr double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    const auto pi = testing::randomize(env.base, rng);
    const auto g = exact_expected_gradient(Estimator::reinforce, pi, env);
    for (const auto& s : states) {
      for (std::size_t k = 0; k < 3; ++k) {
        auto up = pi, down = pi;
        auto z = pi.logits(0, s);
        z[k] += h;
        up.set_logits(0, s, z);
        z[k] -= 2 * h;
        down.set_logits(0, s, z);
        const double fd = (exact_expected_reward(up, env) - exact_expected_reward(down, env)) / (2 * h);
        const double an = g.at({0, s}, static_cast<TokenId>(k));
        CHECK(std::abs(fd - an) <= 1e-6 * std::max(std::abs(an), 1e-2));
      }
    }
  }
}

TEST_CASE("KL-control gradient is -beta times the reverse-KL gradient") {
  RngStream rng(321, {3});
  for (int trial = 0; trial < 5; ++trial) {
    const auto env = random_env(rng);
    const auto pi = testing::randomize(env.base, rng);
    for (double beta : {0.1, 0.5, 1.0}) {
      const auto pb = tempered_target(env.base, env.verifier, 0, beta).dist;
      const auto kl = complex_step_gradient(pi, 0, *env.space, [&](std::span<const std::complex<double>> q) {
        std::complex<double> acc = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) acc += q[i] * (std::log(q[i]) - pb.log_prob(i));
        return acc;
      });
      const auto control = exact_expected_gradient(Estimator::kl_control, pi, env, EstimatorParams{beta});
      auto scaled_kl = kl;
      scaled_kl *= -beta;
      CHECK(control.max_abs_diff(scaled_kl) <= 1e-10);
      auto scaled_control = control;
      scaled_control *= -1.0 / beta;
      CHECK(kl.max_abs_diff(scaled_control) <= 1e-10);
    }
  }
}

TEST_CASE("complex-step gradient agrees with the score-function form") {
  RngStream rng(331, {4});
  const auto env = random_env(rng);
  const auto pi = testing::randomize(env.base, rng);
  // d/dtheta sum_y pi(y) v(y) is the REINFORCE expectation.
  const auto cs = complex_step_gradient(pi, 0, *env.space, [&](std::span<const std::complex<double>> q) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) acc += q[i] * static_cast<double>(env.verifier_bits[i]);
    return acc;
  });
  CHECK(cs.max_abs_diff(exact_expected_gradient(Estimator::reinforce, pi, env)) <= 1e-14);
}

TEST_CASE("RS-FT expectation is Z times base-sampled KL-DPG") {
  RngStream rng(341, {5});
  for (int trial = 0; trial < 10; ++trial) {
    const auto env = random_env(rng);
    const auto pi = testing::randomize(env.base, rng);
    auto kl = exact_expected_gradient(Estimator::kl_dpg_from_base, pi, env);
    kl *= env.z_exact;
    CHECK(exact_expected_gradient(Estimator::rs_ft, pi, env).max_abs_diff(kl) <= 1e-10);
  }
}

TEST_CASE("exact divergence, reward and entropy") {
  const auto task = testing::four_outcome_task({"a", "c"});
  const auto env = enumerate_env(task.base, task.verifier, 0);
  CHECK(exact_divergence_to_target(task.base, env, AlphaSpec::reverse_kl()).value == kInf);
  CHECK(exact_divergence_to_target(at(env, env.target), env, AlphaSpec::hellinger()).value == 0.0);
  CHECK(exact_expected_reward(task.base, env) == 0.5);
  CHECK(exact_expected_reward(at(env, env.target), env) == 1.0);
  CHECK(exact_entropy(task.base, env) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  auto rejecting = env;
  std::fill(rejecting.verifier_bits.begin(), rejecting.verifier_bits.end(), 0);
  CHECK(exact_expected_reward(task.base, rejecting) == 0.0);

  // Three outcomes, uniform base accepting the outer two: target (0.5, 0, 0.5).
  Json def;
  def["name"] = "three";
  def["vocab"] = {"a", "b", "c"};
  def["max_len"] = 1;
  def["contexts"] = {"x"};
  def["verifier"] = {{"kind", "membership"}, {"params", {{"accept", {"a", "c"}}}}};
  const auto three = load_task(def);
  const auto tenv = enumerate_env(three.base, three.verifier, 0);
  const auto pi1 = at(tenv, Distribution(tenv.space, {0.33, 0.34, 0.33}));
  CHECK(exact_divergence_to_target(pi1, tenv, AlphaSpec::of(0.0)).value == doctest::Approx(0.4155).epsilon(2e-4));
  CHECK(exact_divergence_to_target(pi1, tenv, AlphaSpec::of(0.5)).value == doctest::Approx(0.7504).epsilon(2e-4));
  CHECK(exact_divergence_to_target(pi1, tenv, AlphaSpec::of(0.9)).value == doctest::Approx(3.4666).epsilon(2e-4));
}

TEST_CASE("exact training simulation") {
  const auto two = testing::two_outcome_task({"a"});
  const auto env2 = enumerate_env(two.base, two.verifier, 0);
  for (double lr : {0.1, 0.5}) {
    const auto sim = simulate_exact_training(Estimator::reinforce, env2, two.base, lr, 200);
    REQUIRE(sim.trajectory.size() == 201);
    for (std::size_t i = 1; i < sim.trajectory.size(); ++i) {
      CHECK(sim.trajectory[i].reward >= sim.trajectory[i - 1].reward);
    }
  }
  const auto fast = simulate_exact_training(Estimator::reinforce, env2, two.base, 0.5, 200);
  const auto slow = simulate_exact_training(Estimator::reinforce, env2, two.base, 0.1, 200);
  CHECK(fast.trajectory.back().reward > slow.trajectory.back().reward);

  RngStream rng(351, {6});
  const auto env = random_env(rng);
  const auto start = testing::randomize(env.base, rng);
  EstimatorParams fkl;
  fkl.alpha = 0.0;
  const auto sim = simulate_exact_training(Estimator::alpha_dpg, env, start, 0.01, 300, fkl, AlphaSpec::forward_kl());
  for (std::size_t i = 1; i < sim.trajectory.size(); ++i) {
    CHECK(sim.trajectory[i].divergence <= sim.trajectory[i - 1].divergence);
  }
  CHECK(sim.trajectory.back().divergence < sim.trajectory.front().divergence);

  const auto still = simulate_exact_training(Estimator::kl_dpg, env, start, 0.0, 5);
  for (const auto& p : still.trajectory) {
    CHECK(p.reward == still.trajectory[0].reward);
    CHECK(p.entropy == still.trajectory[0].entropy);
    CHECK(p.divergence == still.trajectory[0].divergence);
  }
  CHECK(still.final_policy.same_logits(start));
  CHECK(code_of([&] { simulate_exact_training(Estimator::kl_dpg, env, start, -1.0, 1); }) == ErrorCode::DomainError);
}

TEST_CASE("exact KL-control dynamics converge to the tempered target") {
  RngStream rng(361, {7});
  const auto env = random_env(rng);
  const double beta = 0.5;
  const auto sim = simulate_exact_training(Estimator::kl_control, env, env.base, 1.0, 10000, EstimatorParams{beta});
  const auto tempered = tempered_target(env.base, env.verifier, 0, beta);
  CHECK(total_variation(policy_distribution(sim.final_policy, env), tempered.dist) < 1e-9);
  CHECK(std::abs(total_variation(tempered.dist, env.target) - tv_bound_closed_form(env.z_exact, beta)) <= 1e-12);
}

TEST_CASE("one exact alpha-DPG step decreases the alpha-divergence") {
  RngStream rng(371, {8});
  for (int trial = 0; trial < 100; ++trial) {
    const auto env = random_env(rng);
    const auto pi = testing::randomize(env.base, rng);
    for (double a : {0.0, 0.25, 0.5, 0.75, 0.9, 0.999}) {
      EstimatorParams p;
      p.alpha = a;
      const auto spec = AlphaSpec::of(a);
      const double before = exact_divergence_to_target(pi, env, spec).value;
      const auto next = pi.apply_update(exact_expected_gradient(Estimator::alpha_dpg, pi, env, p), 1e-3);
      CHECK(exact_divergence_to_target(next, env, spec).value < before);
    }
  }
}
