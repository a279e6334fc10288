#include <cmath>

#include "doctest.h"
#include "dmvr/errors.hpp"
#include "dmvr/numeric.hpp"
#include "dmvr/oracle.hpp"
#include "dmvr/trainers.hpp"
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

std::vector<Rollout> rollouts(std::initializer_list<Sequence> ys) {
  std::vector<Rollout> out;
  for (const auto& y : ys) out.push_back(Rollout{0, y});
  return out;
}

void check_close(const GradientVector& a, const GradientVector& b, double tol) { CHECK(a.max_abs_diff(b) <= tol); }

}  // namespace

TEST_CASE("pseudo_reward_rlvr") {
  auto task = testing::two_outcome_task({"a"});
  task.base.set_logits(0, {}, {std::log(0.1), std::log(0.9)});
  TabularPolicy pi = task.base;
  const double pa = 0.1 * std::exp(2.0);
  pi.set_logits(0, {}, {std::log(pa), std::log(1.0 - pa)});

  CHECK(pseudo_reward_rlvr({0}, 0, pi, task.base, task.verifier, 0.0) == 1.0);
  CHECK(pseudo_reward_rlvr({1}, 0, pi, task.base, task.verifier, 0.0) == 0.0);
  for (double beta : {0.1, 2.0}) {
    CHECK(pseudo_reward_rlvr({0}, 0, task.base, task.base, task.verifier, beta) == 1.0);
    CHECK(pseudo_reward_rlvr({1}, 0, task.base, task.base, task.verifier, beta) == 0.0);
  }
  CHECK(std::abs(pseudo_reward_rlvr({0}, 0, pi, task.base, task.verifier, 0.5)) <= 1e-14);

  TabularPolicy blind = pi;
  blind.set_logits(0, {}, {0.0, -kInf});
  CHECK(code_of([&] { pseudo_reward_rlvr({1}, 0, blind, task.base, task.verifier, 0.5); }) == ErrorCode::DomainError);
}

TEST_CASE("pseudo_reward_alpha") {
  for (double a : {0.0, 0.3, 0.999}) {
    CHECK(pseudo_reward_alpha(0.0, a, 10.0) == -1.0);
    CHECK(pseudo_reward_alpha(1.0, a, 10.0) == 0.0);
  }
  CHECK(pseudo_reward_alpha(4.0, 0.5, 10.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pseudo_reward_alpha(1e6, 0.5, 10.0) == 10.0);
  CHECK(pseudo_reward_alpha(1e6, 0.5, kInf) == doctest::Approx(999.0).epsilon(1e-13));
  CHECK(pseudo_reward_alpha(3.0, 0.0, kInf) == doctest::Approx(2.0).epsilon(1e-15));
  // Near alpha = 1 accepted samples get almost no pseudo-reward.
  CHECK(std::abs(pseudo_reward_alpha(50.0, 0.999, 10.0)) < 0.004);
}

TEST_CASE("baselines") {
  const std::vector<double> r = {1, 0, 0, 1};
  const auto loo = advantage_leave_one_out(r);
  const double third = 2.0 / 3.0;
  const double expected[] = {third, -third, -third, third};
  for (std::size_t i = 0; i < 4; ++i) CHECK(loo[i] == doctest::Approx(expected[i]).epsilon(1e-15));
  CHECK(testing::vec(advantage_group_mean(r)) == std::vector<double>{0.5, -0.5, -0.5, 0.5});
  for (double v : advantage_leave_one_out(std::vector<double>{0.3, 0.3, 0.3})) CHECK(v == 0.0);
  for (double v : advantage_group_mean(std::vector<double>{0.7, 0.7})) CHECK(v == 0.0);
  CHECK(testing::vec(advantage_group_mean(std::vector<double>{5.0})) == std::vector<double>{0.0});
  CHECK(code_of([] { advantage_leave_one_out(std::vector<double>{1.0}); }) == ErrorCode::GroupTooSmall);

  const std::vector<double> two_groups = {1, 0, 0, 0, 1, 1};
  const auto a = apply_baseline(two_groups, BaselineKind::leave_one_out, 3);
  CHECK(testing::vec(a) == std::vector<double>{1.0, -0.5, -0.5, -1.0, 0.5, 0.5});
  CHECK(testing::vec(apply_baseline(two_groups, BaselineKind::none, 3)) == two_groups);
  CHECK(testing::vec(apply_baseline(two_groups, BaselineKind::constant, 3, 0.25)) ==
        std::vector<double>{0.75, -0.25, -0.25, -0.25, 0.75, 0.75});
  CHECK(code_of([&] { apply_baseline(two_groups, BaselineKind::leave_one_out, 4); }) == ErrorCode::DomainError);
}

TEST_CASE("step_policy_gradient") {
  const auto task = testing::small_eos_task();
  RngStream rng(201, {1});
  const auto pi = testing::randomize(task.base, rng);
  const auto batch = rollouts({pi.parse_sequence("a eos"), pi.parse_sequence("b a eos")});

  CHECK(step_policy_gradient(pi, batch, std::vector<double>{0.0, 0.0}, 3).max_abs() == 0.0);

  auto expected = pi.score_gradient(0, batch[0].y);
  expected *= 1.0 / 3.0;
  check_close(step_policy_gradient(pi, {batch.data(), 1}, std::vector<double>{1.0}, 3), expected, 1e-16);
  CHECK(code_of([&] { step_policy_gradient(pi, batch, std::vector<double>{1.0}, 3); }) == ErrorCode::DomainError);
  CHECK(code_of([&] { step_policy_gradient(pi, batch, std::vector<double>{1.0, kInf}, 3); }) ==
        ErrorCode::NonFiniteGradient);

  // Enumerated expectation of the single-sample REINFORCE step.
  const auto two = testing::two_outcome_task({"a"});
  GradientVector mean(2);
  for (const Sequence& y : {Sequence{0}, Sequence{1}}) {
    const Rollout r{0, y};
    const double v = two.verifier(y, 0) ? 1.0 : 0.0;
    mean.add_scaled(step_policy_gradient(two.base, {&r, 1}, std::vector<double>{v}, 2), 0.5);
  }
  CHECK(mean.at({0, {}}, 0) == 0.125);
  CHECK(mean.at({0, {}}, 1) == -0.125);
  auto oracle = exact_expected_gradient(Estimator::reinforce, two.base, enumerate_env(two.base, two.verifier, 0));
  oracle *= 0.5;
  check_close(mean, oracle, 1e-16);
}

TEST_CASE("step_ppo_clip") {
  const auto task = testing::small_eos_task();
  RngStream rng(211, {2});
  const auto pi = testing::randomize(task.base, rng);
  const auto batch = rollouts({pi.parse_sequence("a eos"), pi.parse_sequence("b b eos"), pi.parse_sequence("eos")});
  const std::vector<double> adv = {0.7, -1.3, 0.2};
  check_close(step_ppo_clip(pi, pi, batch, adv, 0.2, 3), step_policy_gradient(pi, batch, adv, 3), 1e-15);

  // Two outcomes, old policy uniform, current pi(a) = 0.7 so rho(a) = 1 + 2 eps.
  const double eps = 0.2;
  const auto two = testing::two_outcome_task({"a"});
  TabularPolicy cur = two.base;
  cur.set_logits(0, {}, {std::log(0.7), std::log(0.3)});
  const auto a = rollouts({{0}});
  CHECK(step_ppo_clip(cur, two.base, a, std::vector<double>{1.0}, eps, 1).max_abs() == 0.0);

  const auto g = step_ppo_clip(cur, two.base, a, std::vector<double>{-1.0}, eps, 1);
  CHECK(g.max_abs() > 0.0);
  // Central differences of min(rho A, clip(rho) A) with A = -1.
  auto surrogate = [&](const TabularPolicy& p) {
    const double rho = std::exp(p.log_prob(0, {0}) - two.base.log_prob(0, {0}));
    return std::min(-rho, -std::clamp(rho, 1.0 - eps, 1.0 + eps));
  };
  for (std::size_t k = 0; k < 2; ++k) {
    auto up = cur, down = cur;
    auto z = cur.logits(0, {});
    z[k] += 1e-6;
    up.set_logits(0, {}, z);
    z[k] -= 2e-6;
    down.set_logits(0, {}, z);
    const double fd = (surrogate(up) - surrogate(down)) / 2e-6;
    CHECK(g.at({0, {}}, static_cast<TokenId>(k)) == doctest::Approx(fd).epsilon(1e-7));
  }

  TabularPolicy blind = two.base;
  blind.set_logits(0, {}, {-kInf, 0.0});
  CHECK(code_of([&] { step_ppo_clip(cur, blind, a, std::vector<double>{1.0}, eps, 1); }) == ErrorCode::DomainError);
}

TEST_CASE("step_kl_dpg") {
  const auto task = testing::four_outcome_task({"a", "c"});
  const std::vector<TargetSpec> targets = {make_exact_target_spec(task.base, task.verifier, 0)};
  const auto batch = rollouts({{0}, {1}, {2}, {3}});
  const auto g = step_kl_dpg(task.base, targets, batch, 1);
  GradientVector expected(4);
  const double w[] = {1, -1, 1, -1};
  for (std::size_t i = 0; i < 4; ++i) expected.add_scaled(task.base.score_gradient(0, batch[i].y), w[i] / 4.0);
  check_close(g, expected, 1e-16);

  TabularPolicy at_target = task.base;
  assign_distribution(at_target, 0, build_target_exact(task.base, task.verifier, 0).dist);
  CHECK(step_kl_dpg(at_target, targets, rollouts({{0}, {2}}), 1).max_abs() <= 1e-15);

  // A rejected sample alone carries weight -1.
  auto minus = task.base.score_gradient(0, {1});
  minus *= -1.0;
  check_close(step_kl_dpg(task.base, targets, rollouts({{1}}), 1), minus, 1e-16);
}

TEST_CASE("step_alpha_dpg") {
  const auto task = testing::small_eos_task();
  RngStream rng(221, {3});
  const auto base = testing::randomize(task.base, rng);
  const auto pi = testing::randomize(task.base, rng);
  const std::vector<TargetSpec> targets = {make_exact_target_spec(base, task.verifier, 0)};
  const auto space = enumerate_space(pi);
  std::vector<Rollout> batch;
  for (const auto& y : space->outcomes()) batch.push_back(Rollout{0, y});

  // alpha = 0 without clip or baseline is KL-DPG.
  check_close(step_alpha_dpg(pi, targets, batch, 0.0, kInf, BaselineKind::none, 1, 3), step_kl_dpg(pi, targets, batch, 3),
              1e-15);

  // Near alpha = 1 the leave-one-out advantages match REINFORCE on v - 1.
  std::vector<double> alpha_r, reinforce_r;
  for (const auto& r : batch) {
    alpha_r.push_back(pseudo_reward_alpha(target_over_policy_ratio(targets[0], pi, r.y), 0.999, 10.0));
    reinforce_r.push_back(task.verifier(r.y, 0) ? 0.0 : -1.0);
  }
  const auto a1 = apply_baseline(alpha_r, BaselineKind::leave_one_out, 7);
  const auto a2 = apply_baseline(reinforce_r, BaselineKind::leave_one_out, 7);
  for (std::size_t i = 0; i < a1.size(); ++i) CHECK(std::abs(a1[i] - a2[i]) <= 1e-2);

  CHECK(code_of([&] { step_alpha_dpg(pi, targets, batch, 0.5, 10.0, BaselineKind::leave_one_out, 1, 3); }) ==
        ErrorCode::GroupTooSmall);

  // At the target every accepted sample has pseudo-reward 0 and the clip never binds.
  TabularPolicy at_target = base;
  assign_distribution(at_target, 0, build_target_exact(base, task.verifier, 0).dist);
  std::vector<Rollout> accepted;
  for (const auto& r : batch) {
    if (task.verifier(r.y, 0)) accepted.push_back(r);
  }
  for (double a : {0.0, 0.25, 0.5, 0.75, 0.9, 0.999}) {
    for (const auto& r : accepted) {
      const double ratio = target_over_policy_ratio(targets[0], at_target, r.y);
      CHECK(std::abs(pseudo_reward_alpha(ratio, a, 10.0)) <= 1e-12);
      CHECK(pseudo_reward_alpha(ratio, a, 10.0) == pseudo_reward_alpha(ratio, a, kInf));
    }
    CHECK(step_alpha_dpg(at_target, targets, accepted, a, 10.0, BaselineKind::none, 1, 3).max_abs() <= 1e-12);
  }

  // The exact -f' form is the rescaled one divided by 1 - alpha.
  auto scaled = step_alpha_dpg(pi, targets, batch, 0.4, kInf, BaselineKind::none, 1, 3);
  scaled *= 1.0 / 0.6;
  check_close(step_alpha_dpg(pi, targets, batch, 0.4, kInf, BaselineKind::none, 1, 3, true), scaled, 1e-14);
}

TEST_CASE("step_rs_ft") {
  const auto task = testing::small_eos_task();
  const auto& pi = task.base;
  CHECK(code_of([&] { step_rs_ft(pi, task.verifier, rollouts({{2}, pi.parse_sequence("a a eos")}), 3); }) ==
        ErrorCode::EmptyFilteredSet);
  auto one = pi.score_gradient(0, pi.parse_sequence("a eos"));
  one *= 1.0 / 3.0;
  check_close(step_rs_ft(pi, task.verifier, rollouts({pi.parse_sequence("a eos"), {2}}), 3), one, 1e-16);

  RngStream rng(231, {4});
  const auto base = testing::randomize(task.base, rng);
  const auto env = enumerate_env(base, task.verifier, 0);
  const auto policy = testing::randomize(task.base, rng);
  auto kl = exact_expected_gradient(Estimator::kl_dpg_from_base, policy, env);
  kl *= env.z_exact;
  check_close(exact_expected_gradient(Estimator::rs_ft, policy, env), kl, 1e-15);
}

TEST_CASE("config json") {
  TrainerConfig c;
  c.algorithm = Algorithm::ppo_clip;
  c.alpha = 0.3;
  c.beta_kl = 0.05;
  c.clip_M = kInf;
  c.seed = 17;
  c.z_mode = ZMode::online;
  c.baseline = BaselineKind::group_mean;
  const auto j = c.to_json();
  CHECK(j.at("clip_M") == "inf");
  const auto back = TrainerConfig::from_json(Json::parse(dump_json(j)));
  CHECK(dump_json(back.to_json()) == dump_json(j));
  CHECK(std::isinf(back.clip_M));

  CHECK(TrainerConfig::from_json(Json::object()).to_json() == TrainerConfig{}.to_json());
  CHECK(code_of([] { TrainerConfig::from_json(Json{{"learning_rate", 1.0}}); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { TrainerConfig::from_json(Json{{"algorithm", "sgd"}}); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { TrainerConfig::from_json(Json{{"group_K", "four"}}); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { TrainerConfig::from_json(Json::array()); }) == ErrorCode::InvalidConfig);
  for (auto a : {Algorithm::reinforce, Algorithm::kl_control, Algorithm::ppo_clip, Algorithm::kl_dpg,
                 Algorithm::alpha_dpg, Algorithm::rs_ft}) {
    CHECK(parse_algorithm(std::string(to_string(a))) == a);
  }
}

TEST_CASE("config diagnostics") {
  CHECK(TrainerConfig{}.diagnostics().empty());
  TrainerConfig c;
  c.alpha = 1.0;
  const auto d = c.diagnostics();
  REQUIRE(d.size() == 1);
  CHECK(d[0].find("use 0.999") != std::string::npos);
  c = TrainerConfig{};
  c.group_K = 1;
  CHECK(c.diagnostics().size() == 1);
  c.baseline = BaselineKind::none;
  CHECK(c.diagnostics().empty());
  c.lr = -1.0;
  c.clip_M = 0.0;
  CHECK(c.diagnostics().size() == 2);
  CHECK(code_of([&] { train(c, testing::two_outcome_task()); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("train with zero iterations") {
  const auto task = skewed_multi_answer_task();
  TrainerConfig c;
  c.iterations = 0;
  const auto log = train(c, task);
  REQUIRE(log.records.size() == 1);
  CHECK(log.records[0].iteration == 0);
  CHECK(log.final_policy.same_logits(task.base));
  CHECK(log.final_policy.version() == task.base.version());
}

TEST_CASE("REINFORCE solves the two-outcome env") {
  const auto task = testing::two_outcome_task({"a"});
  TrainerConfig c;
  c.algorithm = Algorithm::reinforce;
  c.lr = 0.5;
  c.iterations = 200;
  const auto log = train(c, task);
  REQUIRE(log.records.size() == 201);
  for (std::size_t i = 0; i < log.records.size(); ++i) CHECK(log.records[i].iteration == static_cast<int>(i));
  CHECK(log.records.front().reward == 0.5);
  CHECK(log.records.back().reward >= 0.99);
}

TEST_CASE("training is deterministic across worker counts") {
  const auto task = skewed_multi_answer_task();
  for (auto algo : {Algorithm::alpha_dpg, Algorithm::ppo_clip, Algorithm::kl_dpg, Algorithm::rs_ft}) {
    TrainerConfig c;
    c.algorithm = algo;
    c.iterations = 15;
    c.lr = 5.0;
    c.batch_contexts = 2;
    c.beta_kl = 0.05;
    const auto one = train(c, task, TrainOptions{1});
    const auto four = train(c, task, TrainOptions{4});
    CHECK(runlog_csv(one) == runlog_csv(four));
    CHECK(one.final_policy.same_logits(four.final_policy));
    CHECK(runlog_csv(one, true).rfind("iteration,reward,entropy,divergence,wall_ms\n", 0) == 0);
    c.seed = 1;
    CHECK(runlog_csv(train(c, task)) != runlog_csv(one));
  }
}

TEST_CASE("kl_control without a KL term is REINFORCE") {
  const auto task = skewed_multi_answer_task();
  TrainerConfig c;
  c.iterations = 10;
  c.algorithm = Algorithm::reinforce;
  const auto a = train(c, task);
  c.algorithm = Algorithm::kl_control;
  c.beta_kl = 0.0;
  CHECK(runlog_csv(train(c, task)) == runlog_csv(a));
}

TEST_CASE("algorithms improve reward on the skewed task") {
  const auto task = skewed_multi_answer_task();
  for (auto algo : {Algorithm::reinforce, Algorithm::kl_control, Algorithm::ppo_clip, Algorithm::kl_dpg,
                    Algorithm::alpha_dpg, Algorithm::rs_ft}) {
    TrainerConfig c;
    c.algorithm = algo;
    c.iterations = 40;
    c.lr = 5.0;
    c.beta_kl = 0.02;
    const auto log = train(c, task);
    CHECK(log.records.back().reward > log.records.front().reward + 0.2);
    for (const auto& r : log.records) CHECK(std::isfinite(r.divergence));
  }
}

TEST_CASE("partition modes") {
  const auto task = skewed_multi_answer_task();
  TrainerConfig c;
  c.iterations = 5;
  const auto exact = train(c, task);
  const auto targets = exact_targets(task, c.z_floor);
  for (std::size_t i = 0; i < targets.size(); ++i) CHECK(exact.z_used[i] == targets[i].z_exact.value());

  for (auto mode : {ZMode::precomputed_sampled, ZMode::online}) {
    c.z_mode = mode;
    const auto log = train(c, task);
    CHECK(log.z_mode == mode);
    for (double z : log.z_used) {
      CHECK(z >= c.z_floor);
      CHECK(z <= 1.0);
    }
    CHECK(log.records.back().reward > log.records.front().reward);
  }

  // An unsolved context is floored rather than dividing by zero.
  Json def = skewed_multi_answer_definition();
  def["verifier"]["params"]["accept"]["q1"] = Json::array({"c c c c c eos"});
  c.z_mode = ZMode::precomputed_sampled;
  c.z_samples = 8;
  const auto floored = train(c, load_task(def));
  CHECK(floored.z_used[0] == c.z_floor);
}
