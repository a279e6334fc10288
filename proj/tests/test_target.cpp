#include <cmath>
#include <set>

#include "doctest.h"
#include "dmvr/errors.hpp"
#include "dmvr/numeric.hpp"
#include "dmvr/target.hpp"
#include "dmvr/task.hpp"
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

// Filter-and-normalize over an explicit list, independent of the library.
std::vector<double> filter_normalize(const std::vector<double>& base, const std::vector<bool>& accept) {
  double z = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) z += accept[i] ? base[i] : 0.0;
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = accept[i] ? base[i] / z : 0.0;
  return out;
}

}  // namespace

TEST_CASE("build_target_exact on four outcomes") {
  const auto task = testing::four_outcome_task({"a", "c"});
  const auto t = build_target_exact(task.base, task.verifier, 0);
  CHECK(testing::vec(t.dist.probs()) == std::vector<double>{0.5, 0.0, 0.5, 0.0});
  CHECK(t.z == 0.5);

  const auto all = testing::four_outcome_task({"a", "b", "c", "d"});
  const auto ta = build_target_exact(all.base, all.verifier, 0);
  CHECK(ta.z == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(total_variation(ta.dist, sequence_distribution(all.base, 0)) <= 1e-15);

  const auto none = testing::four_outcome_task({});
  CHECK(code_of([&] { build_target_exact(none.base, none.verifier, 0); }) == ErrorCode::EmptyTarget);
}

TEST_CASE("build_target_exact matches an independent filter on random bases") {
  RngStream rng(101, {1});
  for (int trial = 0; trial < 20; ++trial) {
    auto task = testing::small_eos_task();
    const auto base = testing::randomize(task.base, rng, 2.0);
    const auto t = build_target_exact(base, task.verifier, 0);
    const auto space = enumerate_space(base);
    std::vector<double> probs;
    std::vector<bool> accept;
    double z = 0.0;
    for (const auto& y : space->outcomes()) {
      probs.push_back(std::exp(base.log_prob(0, y)));
      accept.push_back(task.verifier(y, 0));
      if (accept.back()) z += probs.back();
    }
    const auto ref = filter_normalize(probs, accept);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(t.dist.prob(i) - ref[i]) <= 1e-14);
    CHECK(std::abs(t.z - z) <= 1e-12);
    CHECK(make_exact_target_spec(base, task.verifier, 0).z_exact.value() == t.z);
  }
}

TEST_CASE("estimate_partition") {
  const auto task = testing::four_outcome_task({"a", "c"});
  const std::vector<Sequence> all = {{0}, {1}, {2}, {3}};
  CHECK(estimate_partition(all, task.base, task.base, task.verifier, 0) == 0.5);

  const std::vector<Sequence> rejected = {{1}, {3}, {3}};
  const double z = estimate_partition(rejected, task.base, task.base, task.verifier, 0);
  CHECK(z == 0.0);
  CHECK(floor_partition(z) == 1e-4);
  CHECK(floor_partition(0.3) == 0.3);

  // Sampling from the target itself gives weight Z on every draw.
  TabularPolicy q = task.base;
  assign_distribution(q, 0, build_target_exact(task.base, task.verifier, 0).dist);
  for (std::size_t n : {1, 3, 17}) {
    std::vector<Sequence> ys;
    for (std::size_t i = 0; i < n; ++i) ys.push_back(i % 2 ? Sequence{0} : Sequence{2});
    CHECK(estimate_partition(ys, q, task.base, task.verifier, 0) == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("estimate_partition is unbiased") {
  RngStream rng(111, {2});
  auto task = testing::small_eos_task();
  const auto base = testing::randomize(task.base, rng, 1.0);
  const double z = build_target_exact(base, task.verifier, 0).z;
  constexpr std::size_t reps = 10000, n = 16;
  CompensatedSum sum, sq;
  for (std::size_t r = 0; r < reps; ++r) {
    std::vector<Sequence> ys;
    for (std::size_t i = 0; i < n; ++i) {
      RngStream s(StreamKey{112, StreamPurpose::test, r, 0, i});
      ys.push_back(base.sample(0, s));
    }
    const double e = estimate_partition(ys, base, base, task.verifier, 0);
    sum.add(e);
    sq.add(e * e);
  }
  const double mean = sum.value() / reps;
  const double se = std::sqrt((sq.value() / reps - mean * mean) / reps);
  CHECK(std::abs(mean - z) <= 3.0 * se);
}

TEST_CASE("effective Z") {
  const auto task = testing::four_outcome_task({"a"});
  TargetSpec spec{task.base, task.verifier, 0, std::nullopt, PartitionEstimate{0.0, 128, "base"}, 1e-4};
  CHECK(spec.effective_z() == 1e-4);
  spec.z_exact = 0.25;
  CHECK(spec.effective_z() == 0.25);
  spec.z_exact = 1e-6;
  CHECK(spec.effective_z() == 1e-4);
}

TEST_CASE("tv_bound_closed_form") {
  for (double beta : {0.01, 0.3, 1.0, 50.0}) CHECK(tv_bound_closed_form(1.0, beta) == 0.0);
  CHECK(tv_bound_closed_form(0.5, 0.1) == doctest::Approx(std::exp(-10.0) * 0.5 / (0.5 + std::exp(-10.0) * 0.5)));
  CHECK(tv_bound_closed_form(0.5, 0.1) == doctest::Approx(4.54e-5).epsilon(1e-3));
  CHECK(tv_bound_closed_form(0.5, 1.0 / std::log(10.0)) == doctest::Approx(0.05 / 0.55).epsilon(1e-13));
  CHECK(code_of([] { tv_bound_closed_form(0.0, 1.0); }) == ErrorCode::DomainError);
  CHECK(code_of([] { tv_bound_closed_form(-0.1, 1.0); }) == ErrorCode::DomainError);
}

TEST_CASE("tempered target") {
  const auto task = testing::four_outcome_task({"a", "c"});
  const auto p = build_target_exact(task.base, task.verifier, 0).dist;
  const auto base = sequence_distribution(task.base, 0);

  CHECK(total_variation(tempered_target(task.base, task.verifier, 0, 1e6).dist, base) < 1e-6);
  CHECK(total_variation(tempered_target(task.base, task.verifier, 0, 1.0 / std::log(10.0)).dist, p) ==
        doctest::Approx(0.090909090909).epsilon(1e-10));

  const auto all = testing::four_outcome_task({"a", "b", "c", "d"});
  for (double beta : {0.05, 1.0, 20.0}) {
    CHECK(total_variation(tempered_target(all.base, all.verifier, 0, beta).dist, sequence_distribution(all.base, 0)) <=
          1e-15);
  }

  const auto t = tempered_target(task.base, task.verifier, 0, 0.5);
  CHECK(t.z_beta == doctest::Approx(0.5 * std::exp(2.0) + 0.5).epsilon(1e-14));
  CHECK(std::exp(t.log_z_beta) == doctest::Approx(t.z_beta).epsilon(1e-14));
  CHECK(std::isinf(tempered_target(task.base, task.verifier, 0, 1e-3).z_beta));
  CHECK(code_of([&] { tempered_target(task.base, task.verifier, 0, 0.0); }) == ErrorCode::DomainError);
}

TEST_CASE("tempered TV equals the closed form and shrinks with beta") {
  RngStream rng(121, {3});
  for (int trial = 0; trial < 50; ++trial) {
    auto task = testing::small_eos_task();
    const auto base = testing::randomize(task.base, rng, 2.0);
    const auto exact = build_target_exact(base, task.verifier, 0);
    double prev = kInf;
    for (double beta : {1.0, 0.5, 0.2, 0.1, 0.05}) {
      const double tv = total_variation(tempered_target(base, task.verifier, 0, beta).dist, exact.dist);
      CHECK(std::abs(tv - tv_bound_closed_form(exact.z, beta)) <= 1e-12);
      CHECK(tv < prev);
      prev = tv;
    }
    // e^{-20} (1 - Z) / Z < 1e-8 needs Z above about 0.171.
    if (exact.z >= 0.2) CHECK(prev < 1e-8);
  }
}

TEST_CASE("target_over_policy_ratio") {
  const auto task = testing::four_outcome_task({"a", "c"});
  const auto spec = make_exact_target_spec(task.base, task.verifier, 0);
  CHECK(target_over_policy_ratio(spec, task.base, {0}) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(target_over_policy_ratio(spec, task.base, {1}) == 0.0);

  TabularPolicy at_target = task.base;
  assign_distribution(at_target, 0, build_target_exact(task.base, task.verifier, 0).dist);
  CHECK(target_over_policy_ratio(spec, at_target, {0}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(target_over_policy_ratio(spec, at_target, {2}) == doctest::Approx(1.0).epsilon(1e-14));
  // A rejected outcome gives 0 even where the policy has no mass.
  CHECK(target_over_policy_ratio(spec, at_target, {1}) == 0.0);

  TabularPolicy blind = task.base;
  blind.set_logits(0, {}, {-kInf, 0.0, 0.0, 0.0});
  CHECK(code_of([&] { target_over_policy_ratio(spec, blind, {0}); }) == ErrorCode::DomainError);
}

TEST_CASE("importance weights under the policy average to one") {
  RngStream rng(131, {4});
  for (int trial = 0; trial < 30; ++trial) {
    auto task = testing::small_eos_task();
    const auto base = testing::randomize(task.base, rng, 2.0);
    const auto pi = testing::randomize(task.base, rng, 2.0);
    const auto spec = make_exact_target_spec(base, task.verifier, 0);
    CompensatedSum acc;
    for (const auto& y : enumerate_space(pi)->outcomes()) {
      acc.add(std::exp(pi.log_prob(0, y)) * target_over_policy_ratio(spec, pi, y));
    }
    CHECK(std::abs(acc.value() - 1.0) <= 1e-10);
  }
}

TEST_CASE("verifier memoization") {
  int calls = 0;
  Verifier v("count", [&](const Sequence& y, ContextId) {
    ++calls;
    return y.size() == 2;
  });
  const Verifier copy = v;
  for (int i = 0; i < 5; ++i) {
    CHECK(v({0, 1}, 0));
    CHECK_FALSE(copy({0}, 0));
  }
  CHECK(calls == 2);
  CHECK(v.judge_calls() == 2);
  CHECK(copy.memo_size() == 2);
  CHECK(v({0, 1}, 1));
  CHECK(calls == 3);
}

TEST_CASE("built-in verifiers") {
  Json def;
  def["name"] = "arith";
  def["vocab"] = {"0", "1", "2", "eos"};
  def["eos"] = "eos";
  def["max_len"] = 4;
  def["contexts"] = {"x", "y"};
  def["verifier"] = {{"kind", "sum_mod"}, {"params", {{"k", 3}, {"targets", {{"x", 0}, {"y", 2}}}}}};
  const auto arith = load_task(def);
  const auto& b = arith.base;
  CHECK(arith.verifier(b.parse_sequence("1 2 eos"), 0));
  CHECK_FALSE(arith.verifier(b.parse_sequence("1 2 eos"), 1));
  CHECK(arith.verifier(b.parse_sequence("2 eos"), 1));
  CHECK(arith.verifier(b.parse_sequence("eos"), 0));

  def["vocab"] = {"(", ")", "eos"};
  def["contexts"] = {"x"};
  def["max_len"] = 5;
  def["verifier"] = {{"kind", "balanced_parens"}, {"params", Json::object()}};
  const auto parens = load_task(def);
  const auto& p = parens.base;
  CHECK(parens.verifier(p.parse_sequence("( ) eos"), 0));
  CHECK(parens.verifier(p.parse_sequence("( ( ) ) eos"), 0));
  CHECK_FALSE(parens.verifier(p.parse_sequence(") ( eos"), 0));
  CHECK_FALSE(parens.verifier(p.parse_sequence("( eos"), 0));
  CHECK_FALSE(parens.verifier(p.parse_sequence("eos"), 0));

  def["verifier"] = {{"kind", "no_such_judge"}, {"params", Json::object()}};
  CHECK(code_of([&] { load_task(def); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("skewed multi-answer task") {
  const auto task = skewed_multi_answer_task();
  CHECK(task.context_count() >= 2);
  for (ContextId c = 0; c < task.context_count(); ++c) {
    const auto space = enumerate_space(task.base);
    const auto base = sequence_distribution(task.base, c, space);
    double lo = kInf, hi = 0.0;
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < space->size(); ++i) {
      if (!task.verifier(space->at(i), c)) continue;
      ++accepted;
      lo = std::min(lo, base.prob(i));
      hi = std::max(hi, base.prob(i));
    }
    CHECK(accepted >= 3);
    CHECK(hi / lo >= 100.0);
    const double z = build_target_exact(task.base, task.verifier, c).z;
    CHECK(z > 0.0);
    CHECK(z < 1.0);
  }
  CHECK(resolve_task("skewed-multi-answer").name == task.name);
  CHECK(code_of([] { resolve_task("/no/such/task.json"); }) != ErrorCode::DomainError);
}
