#include "dmvr/trainers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dmvr/divergence.hpp"
#include "dmvr/errors.hpp"
#include "dmvr/numeric.hpp"
#include "dmvr/parallel.hpp"

namespace dmvr {
namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::pair<E, const char*> (&table)[N], const char* what) {
  for (const auto& [value, name] : table) {
    if (s == name) return value;
  }
  throw Error(ErrorCode::InvalidConfig, std::string("unknown ") + what + " '" + s + "'");
}

template <typename E, std::size_t N>
std::string_view name_of(E e, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [value, name] : table) {
    if (value == e) return name;
  }
  return "?";
}

const std::pair<Algorithm, const char*> kAlgorithms[] = {
    {Algorithm::reinforce, "reinforce"}, {Algorithm::kl_control, "kl_control"}, {Algorithm::ppo_clip, "ppo_clip"},
    {Algorithm::kl_dpg, "kl_dpg"},       {Algorithm::alpha_dpg, "alpha_dpg"},   {Algorithm::rs_ft, "rs_ft"}};
const std::pair<BaselineKind, const char*> kBaselines[] = {{BaselineKind::none, "none"},
                                                           {BaselineKind::constant, "constant"},
                                                           {BaselineKind::leave_one_out, "leave_one_out"},
                                                           {BaselineKind::group_mean, "group_mean"}};
const std::pair<ZMode, const char*> kZModes[] = {
    {ZMode::exact, "exact"}, {ZMode::precomputed_sampled, "precomputed_sampled"}, {ZMode::online, "online"}};

Json number_or_inf(double x) {
  if (std::isinf(x)) return x > 0 ? Json("inf") : Json("-inf");
  return Json(x);
}

void check_finite(const GradientVector& g, const char* where) {
  if (!g.all_finite()) throw Error(ErrorCode::NonFiniteGradient, std::string("non-finite gradient in ") + where);
}

void check_norm(int loss_norm_len) {
  if (loss_norm_len <= 0) throw Error(ErrorCode::DomainError, "loss_norm_len must be positive");
}

}  // namespace

std::string_view to_string(Algorithm a) { return name_of(a, kAlgorithms); }
std::string_view to_string(BaselineKind b) { return name_of(b, kBaselines); }
std::string_view to_string(ZMode z) { return name_of(z, kZModes); }
Algorithm parse_algorithm(const std::string& s) { return parse_enum(s, kAlgorithms, "algorithm"); }
BaselineKind parse_baseline(const std::string& s) { return parse_enum(s, kBaselines, "baseline"); }
ZMode parse_z_mode(const std::string& s) { return parse_enum(s, kZModes, "z_mode"); }

Json TrainerConfig::to_json() const {
  Json j;
  j["algorithm"] = std::string(to_string(algorithm));
  j["alpha"] = alpha;
  j["beta_kl"] = beta_kl;
  j["clip_M"] = number_or_inf(clip_M);
  j["ppo_epsilon"] = ppo_epsilon;
  j["group_K"] = group_K;
  j["batch_contexts"] = batch_contexts;
  j["lr"] = lr;
  j["iterations"] = iterations;
  j["baseline"] = std::string(to_string(baseline));
  j["baseline_value"] = baseline_value;
  j["z_mode"] = std::string(to_string(z_mode));
  j["z_samples"] = z_samples;
  j["z_floor"] = z_floor;
  j["seed"] = seed;
  j["loss_norm_len"] = loss_norm_len;
  j["exact_pseudo_reward"] = exact_pseudo_reward;
  j["rs_ft_pool"] = rs_ft_pool;
  return j;
}

TrainerConfig TrainerConfig::from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "trainer config must be a JSON object");
  TrainerConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "algorithm") c.algorithm = parse_algorithm(value.get<std::string>());
      else if (key == "alpha") c.alpha = json_to_double(value);
      else if (key == "beta_kl") c.beta_kl = json_to_double(value);
      else if (key == "clip_M") c.clip_M = json_to_double(value);
      else if (key == "ppo_epsilon") c.ppo_epsilon = json_to_double(value);
      else if (key == "group_K") c.group_K = value.get<int>();
      else if (key == "batch_contexts") c.batch_contexts = value.get<int>();
      else if (key == "lr") c.lr = json_to_double(value);
      else if (key == "iterations") c.iterations = value.get<int>();
      else if (key == "baseline") c.baseline = parse_baseline(value.get<std::string>());
      else if (key == "baseline_value") c.baseline_value = json_to_double(value);
      else if (key == "z_mode") c.z_mode = parse_z_mode(value.get<std::string>());
      else if (key == "z_samples") c.z_samples = value.get<int>();
      else if (key == "z_floor") c.z_floor = json_to_double(value);
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "loss_norm_len") c.loss_norm_len = value.get<int>();
      else if (key == "exact_pseudo_reward") c.exact_pseudo_reward = value.get<bool>();
      else if (key == "rs_ft_pool") c.rs_ft_pool = value.get<int>();
      else throw Error(ErrorCode::InvalidConfig, "unknown trainer config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad trainer config value: ") + e.what());
  }
  return c;
}

std::vector<std::string> TrainerConfig::diagnostics() const {
  std::vector<std::string> out;
  if (!(alpha >= 0.0 && alpha <= 1.0)) out.push_back("alpha must lie in [0, 1]");
  if (algorithm == Algorithm::alpha_dpg && alpha >= 1.0) {
    out.push_back("alpha_dpg needs alpha < 1 (the clipped pseudo-reward is undefined at alpha = 1; use 0.999)");
  }
  if (!(beta_kl >= 0.0)) out.push_back("beta_kl must be non-negative");
  if (!(clip_M > 0.0)) out.push_back("clip_M must be positive");
  if (!(ppo_epsilon > 0.0)) out.push_back("ppo_epsilon must be positive");
  if (group_K < 1) out.push_back("group_K must be at least 1");
  if (baseline == BaselineKind::leave_one_out && group_K < 2) out.push_back("leave_one_out baseline needs group_K >= 2");
  if (batch_contexts < 1) out.push_back("batch_contexts must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) out.push_back("lr must be a positive finite number");
  if (iterations < 0) out.push_back("iterations must be non-negative");
  if (z_samples < 1) out.push_back("z_samples must be at least 1");
  if (!(z_floor > 0.0)) out.push_back("z_floor must be positive");
  if (loss_norm_len < 0) out.push_back("loss_norm_len must be positive (or 0 for the task max_len)");
  if (rs_ft_pool < 1) out.push_back("rs_ft_pool must be at least 1");
  return out;
}

double pseudo_reward_rlvr(const Sequence& y, ContextId context, const TabularPolicy& policy,
                          const TabularPolicy& base, const Verifier& verifier, double beta_kl) {
  const double lp = policy.log_prob(context, y);
  const double lb = base.log_prob(context, y);
  if (lp == kNegInf || lb == kNegInf) throw Error(ErrorCode::DomainError, "zero probability in RLVR pseudo-reward");
  const double v = verifier(y, context) ? 1.0 : 0.0;
  if (beta_kl == 0.0) return v;
  return v - beta_kl * (lp - lb);
}

double pseudo_reward_alpha(double ratio, double alpha, double clip_M) {
  if (ratio == 0.0) return std::min(-1.0, clip_M);
  // ratio^(1-alpha) - 1 via expm1 keeps precision as alpha -> 1.
  return std::min(std::expm1((1.0 - alpha) * std::log(ratio)), clip_M);
}

std::vector<double> advantage_leave_one_out(std::span<const double> rewards) {
  const std::size_t k = rewards.size();
  if (k < 2) throw Error(ErrorCode::GroupTooSmall, "leave-one-out needs at least two rewards");
  std::vector<double> adv(k);
  for (std::size_t i = 0; i < k; ++i) {
    CompensatedSum others;
    for (std::size_t j = 0; j < k; ++j) {
      if (j != i) others.add(rewards[j]);
    }
    adv[i] = rewards[i] - others.value() / static_cast<double>(k - 1);
  }
  return adv;
}

std::vector<double> advantage_group_mean(std::span<const double> rewards) {
  if (rewards.empty()) return {};
  const double mean = compensated_sum(rewards) / static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
  return adv;
}

std::vector<double> apply_baseline(std::span<const double> rewards, BaselineKind kind, int group_size,
                                   double constant) {
  std::vector<double> out(rewards.begin(), rewards.end());
  switch (kind) {
    case BaselineKind::none:
      return out;
    case BaselineKind::constant:
      for (double& r : out) r -= constant;
      return out;
    case BaselineKind::leave_one_out:
    case BaselineKind::group_mean:
      break;
  }
  if (group_size < 1) throw Error(ErrorCode::GroupTooSmall, "group size must be positive");
  const auto g = static_cast<std::size_t>(group_size);
  if (rewards.size() % g != 0) throw Error(ErrorCode::DomainError, "batch is not a whole number of groups");
  for (std::size_t start = 0; start < rewards.size(); start += g) {
    const auto group = rewards.subspan(start, g);
    const auto adv =
        kind == BaselineKind::leave_one_out ? advantage_leave_one_out(group) : advantage_group_mean(group);
    std::copy(adv.begin(), adv.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return out;
}

GradientVector step_policy_gradient(const TabularPolicy& policy, std::span<const Rollout> batch,
                                    std::span<const double> advantages, int loss_norm_len) {
  check_norm(loss_norm_len);
  if (advantages.size() != batch.size()) throw Error(ErrorCode::DomainError, "one advantage per rollout required");
  GradientVector g(policy.vocab().size());
  if (batch.empty()) return g;
  const double scale = 1.0 / (static_cast<double>(batch.size()) * loss_norm_len);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (advantages[i] == 0.0) continue;
    g.add_scaled(policy.score_gradient(batch[i].context, batch[i].y), advantages[i] * scale);
  }
  check_finite(g, "policy gradient");
  return g;
}

GradientVector step_ppo_clip(const TabularPolicy& policy, const TabularPolicy& old_policy,
                             std::span<const Rollout> batch, std::span<const double> advantages, double ppo_epsilon,
                             int loss_norm_len) {
  check_norm(loss_norm_len);
  if (advantages.size() != batch.size()) throw Error(ErrorCode::DomainError, "one advantage per rollout required");
  GradientVector g(policy.vocab().size());
  if (batch.empty()) return g;
  const double scale = 1.0 / (static_cast<double>(batch.size()) * loss_norm_len);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& [context, y] = batch[i];
    policy.validate_sequence(y);
    const double a = advantages[i];
    Sequence prefix;
    for (TokenId token : y) {
      if (!policy.is_forced(prefix)) {
        const auto lp_old = old_policy.next_token_log_probs(context, prefix);
        if (lp_old[token] == kNegInf) throw Error(ErrorCode::DomainError, "old policy gives a sampled token zero probability");
        const auto p = policy.next_token_probs(context, prefix);
        const auto lp = policy.next_token_log_probs(context, prefix);
        const double rho = std::exp(lp[token] - lp_old[token]);
        const double clipped = std::clamp(rho, 1.0 - ppo_epsilon, 1.0 + ppo_epsilon);
        // min picks the unclipped term (which carries the gradient) unless
        // the clipped one is strictly smaller.
        if (a != 0.0 && rho * a <= clipped * a) {
          auto& row = g.row(StateKey{context, prefix});
          const double w = a * rho * scale;
          for (std::size_t k = 0; k < row.size(); ++k) {
            row[k] += w * ((static_cast<TokenId>(k) == token ? 1.0 : 0.0) - p[k]);
          }
        }
      }
      prefix.push_back(token);
    }
  }
  check_finite(g, "ppo clip");
  return g;
}

GradientVector step_kl_dpg(const TabularPolicy& policy, std::span<const TargetSpec> targets,
                           std::span<const Rollout> batch, int loss_norm_len) {
  std::vector<double> weights(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    weights[i] = target_over_policy_ratio(targets[batch[i].context], policy, batch[i].y) - 1.0;
  }
  return step_policy_gradient(policy, batch, weights, loss_norm_len);
}

GradientVector step_alpha_dpg(const TabularPolicy& policy, std::span<const TargetSpec> targets,
                              std::span<const Rollout> batch, double alpha, double clip_M, BaselineKind baseline,
                              int group_K, int loss_norm_len, bool exact_pseudo_reward) {
  if (baseline == BaselineKind::leave_one_out && group_K < 2) {
    throw Error(ErrorCode::GroupTooSmall, "leave-one-out baseline needs group_K >= 2");
  }
  std::vector<double> rewards(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double ratio = target_over_policy_ratio(targets[batch[i].context], policy, batch[i].y);
    rewards[i] = pseudo_reward_alpha(ratio, alpha, clip_M);
    if (exact_pseudo_reward) rewards[i] /= 1.0 - alpha;
  }
  const auto adv = apply_baseline(rewards, baseline, group_K);
  return step_policy_gradient(policy, batch, adv, loss_norm_len);
}

GradientVector step_rs_ft(const TabularPolicy& policy, const Verifier& verifier, std::span<const Rollout> pool,
                          int loss_norm_len) {
  check_norm(loss_norm_len);
  std::vector<Rollout> accepted;
  for (const auto& r : pool) {
    if (verifier(r.y, r.context)) accepted.push_back(r);
  }
  if (accepted.empty()) throw Error(ErrorCode::EmptyFilteredSet, "no sample in the pool is accepted");
  const std::vector<double> ones(accepted.size(), 1.0);
  return step_policy_gradient(policy, accepted, ones, loss_norm_len);
}

std::vector<TargetSpec> exact_targets(const Task& task, double z_floor, std::size_t budget) {
  const auto space = enumerate_space(task.base, budget);
  std::vector<TargetSpec> out;
  for (ContextId c = 0; c < task.context_count(); ++c) {
    const auto lp = sequence_log_probs(task.base, c, *space);
    CompensatedSum z;
    for (std::size_t i = 0; i < space->size(); ++i) {
      if (task.verifier(space->at(i), c)) z.add(std::exp(lp[i]));
    }
    out.push_back(TargetSpec{task.base, task.verifier, c, z.value(), std::nullopt, z_floor});
  }
  return out;
}

namespace {

struct ExactView {
  SpacePtr space;
  std::vector<std::vector<std::uint8_t>> accepted;  // per context
  std::vector<std::optional<Distribution>> target;  // empty when Z = 0
};

std::optional<ExactView> exact_view(const Task& task, std::size_t budget) {
  SpacePtr space;
  try {
    space = enumerate_space(task.base, budget);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BudgetExceeded) return std::nullopt;
    throw;
  }
  ExactView view{space, {}, {}};
  for (ContextId c = 0; c < task.context_count(); ++c) {
    const auto lp = sequence_log_probs(task.base, c, *space);
    std::vector<std::uint8_t> bits(space->size());
    std::vector<double> w(space->size(), 0.0);
    for (std::size_t i = 0; i < space->size(); ++i) {
      bits[i] = task.verifier(space->at(i), c) ? 1 : 0;
      if (bits[i]) w[i] = std::exp(lp[i]);
    }
    view.accepted.push_back(std::move(bits));
    if (compensated_sum(w) > 0.0) view.target.emplace_back(Distribution::normalize(w, space));
    else view.target.emplace_back(std::nullopt);
  }
  return view;
}

RunRecord evaluate_record(int iteration, const TabularPolicy& policy, const Task& task,
                          const std::optional<ExactView>& view, const AlphaSpec& alpha, std::uint64_t seed) {
  RunRecord r;
  r.iteration = iteration;
  const std::size_t n_ctx = task.context_count();
  CompensatedSum reward, entropy, divergence;
  std::size_t div_count = 0;
  for (ContextId c = 0; c < n_ctx; ++c) {
    if (view) {
      const auto pi = sequence_distribution(policy, c, view->space);
      CompensatedSum rc, hc;
      for (std::size_t i = 0; i < pi.size(); ++i) {
        const double p = pi.prob(i);
        if (view->accepted[c][i]) rc.add(p);
        if (p > 0.0) hc.add(-p * std::log(p));
      }
      reward.add(rc.value());
      entropy.add(hc.value());
      if (view->target[c]) {
        divergence.add(alpha_divergence(pi, *view->target[c], alpha).value);
        ++div_count;
      }
    } else {
      constexpr std::size_t kSamples = 256;
      CompensatedSum rc, hc;
      for (std::size_t i = 0; i < kSamples; ++i) {
        RngStream s(StreamKey{seed, StreamPurpose::evaluation, static_cast<std::uint64_t>(iteration), c, i});
        const auto y = policy.sample(c, s);
        if (task.verifier(y, c)) rc.add(1.0);
        hc.add(-policy.log_prob(c, y));
      }
      reward.add(rc.value() / kSamples);
      entropy.add(hc.value() / kSamples);
    }
  }
  r.reward = reward.value() / static_cast<double>(n_ctx);
  r.entropy = entropy.value() / static_cast<double>(n_ctx);
  r.divergence = div_count ? divergence.value() / static_cast<double>(div_count)
                           : std::numeric_limits<double>::quiet_NaN();
  return r;
}

std::vector<ContextId> pick_contexts(std::size_t n_ctx, int batch_contexts, std::uint64_t seed, int iteration) {
  std::vector<ContextId> all(n_ctx);
  std::iota(all.begin(), all.end(), 0);
  const auto want = static_cast<std::size_t>(batch_contexts);
  if (want >= n_ctx) return all;
  RngStream s(StreamKey{seed, StreamPurpose::context_pick, static_cast<std::uint64_t>(iteration), 0, 0});
  for (std::size_t i = 0; i < want; ++i) {
    const auto j = i + static_cast<std::size_t>(s.uniform() * static_cast<double>(n_ctx - i));
    std::swap(all[i], all[std::min(j, n_ctx - 1)]);
  }
  all.resize(want);
  std::sort(all.begin(), all.end());
  return all;
}

PartitionEstimate sampled_partition(const Task& task, ContextId c, int samples, std::uint64_t seed,
                                    std::uint64_t iteration) {
  std::vector<Sequence> ys;
  ys.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    RngStream s(StreamKey{seed, StreamPurpose::partition_estimate, iteration, c, static_cast<std::uint64_t>(i)});
    ys.push_back(task.base.sample(c, s));
  }
  return PartitionEstimate{estimate_partition(ys, task.base, task.base, task.verifier, c), ys.size(), "base"};
}

}  // namespace

RunLog train(const TrainerConfig& config, const Task& task, const TrainOptions& options) {
  const auto diags = config.diagnostics();
  if (!diags.empty()) {
    std::string msg;
    for (const auto& d : diags) msg += (msg.empty() ? "" : "; ") + d;
    throw Error(ErrorCode::InvalidConfig, msg);
  }
  Algorithm algo = config.algorithm;
  if (algo == Algorithm::kl_control && config.beta_kl == 0.0) algo = Algorithm::reinforce;

  const int norm = config.loss_norm_len > 0 ? config.loss_norm_len : task.base.max_len();
  const std::size_t n_ctx = task.context_count();
  const auto view = exact_view(task, options.budget);
  const AlphaSpec report_alpha = AlphaSpec::of(config.alpha);

  std::vector<TargetSpec> targets;
  for (ContextId c = 0; c < n_ctx; ++c) {
    TargetSpec t{task.base, task.verifier, c, std::nullopt, std::nullopt, config.z_floor};
    if (config.z_mode == ZMode::exact) {
      if (!view) throw Error(ErrorCode::BudgetExceeded, "z_mode exact needs an enumerable task");
      const auto lp = sequence_log_probs(task.base, c, *view->space);
      CompensatedSum z;
      for (std::size_t i = 0; i < lp.size(); ++i) {
        if (view->accepted[c][i]) z.add(std::exp(lp[i]));
      }
      t.z_exact = z.value();
    } else {
      t.z_estimate = sampled_partition(task, c, config.z_samples, config.seed, 0);
    }
    targets.push_back(std::move(t));
  }

  std::vector<Rollout> rs_pool;
  if (algo == Algorithm::rs_ft) {
    for (ContextId c = 0; c < n_ctx; ++c) {
      for (int i = 0; i < config.rs_ft_pool; ++i) {
        RngStream s(StreamKey{config.seed, StreamPurpose::rs_ft_pool, 0, c, static_cast<std::uint64_t>(i)});
        Rollout r{c, task.base.sample(c, s)};
        if (task.verifier(r.y, c)) rs_pool.push_back(std::move(r));
      }
    }
    if (rs_pool.empty()) throw Error(ErrorCode::EmptyFilteredSet, "no base sample in the RS-FT pool is accepted");
  }

  RunLog log{{}, task.base, config.z_mode, {}};
  TabularPolicy policy = task.base;
  log.records.push_back(evaluate_record(0, policy, task, view, report_alpha, config.seed));

  const auto K = static_cast<std::size_t>(config.group_K);
  for (int it = 1; it <= config.iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    const auto picked = pick_contexts(n_ctx, config.batch_contexts, config.seed, it);
    GradientVector g(policy.vocab().size());

    if (algo == Algorithm::rs_ft) {
      std::vector<Rollout> pool;
      for (const auto& r : rs_pool) {
        if (std::binary_search(picked.begin(), picked.end(), r.context)) pool.push_back(r);
      }
      if (!pool.empty()) g = step_rs_ft(policy, task.verifier, pool, norm);
    } else {
      if (config.z_mode == ZMode::online) {
        for (ContextId c : picked) {
          targets[c].z_estimate =
              sampled_partition(task, c, config.z_samples, config.seed, static_cast<std::uint64_t>(it));
        }
      }
      std::vector<Rollout> batch(picked.size() * K);
      parallel_for(batch.size(), options.workers, [&](std::size_t i) {
        const ContextId c = picked[i / K];
        RngStream s(StreamKey{config.seed, StreamPurpose::rollout, static_cast<std::uint64_t>(it), c, i % K});
        batch[i] = Rollout{c, policy.sample(c, s)};
      });

      switch (algo) {
        case Algorithm::reinforce:
        case Algorithm::kl_control:
        case Algorithm::ppo_clip: {
          std::vector<double> rewards(batch.size());
          for (std::size_t i = 0; i < batch.size(); ++i) {
            rewards[i] = algo == Algorithm::reinforce
                             ? (task.verifier(batch[i].y, batch[i].context) ? 1.0 : 0.0)
                             : pseudo_reward_rlvr(batch[i].y, batch[i].context, policy, task.base, task.verifier,
                                                  config.beta_kl);
          }
          const auto adv = apply_baseline(rewards, config.baseline, config.group_K, config.baseline_value);
          // One inner epoch: the surrogate is differentiated at the
          // sampling policy itself.
          g = algo == Algorithm::ppo_clip ? step_ppo_clip(policy, policy, batch, adv, config.ppo_epsilon, norm)
                                          : step_policy_gradient(policy, batch, adv, norm);
          break;
        }
        case Algorithm::kl_dpg:
          g = step_kl_dpg(policy, targets, batch, norm);
          break;
        case Algorithm::alpha_dpg:
          g = step_alpha_dpg(policy, targets, batch, config.alpha, config.clip_M, config.baseline, config.group_K,
                             norm, config.exact_pseudo_reward);
          break;
        case Algorithm::rs_ft:
          break;
      }
    }
    if (!g.all_finite()) {
      throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient at iteration " + std::to_string(it));
    }
    policy = policy.apply_update(g, config.lr);
    auto rec = evaluate_record(it, policy, task, view, report_alpha, config.seed);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    log.records.push_back(rec);
  }

  log.final_policy = std::move(policy);
  for (const auto& t : targets) log.z_used.push_back(t.effective_z());
  return log;
}

std::string runlog_csv(const RunLog& log, bool include_timing) {
  std::string out = include_timing ? "iteration,reward,entropy,divergence,wall_ms\n" : "iteration,reward,entropy,divergence\n";
  for (const auto& r : log.records) {
    out += std::to_string(r.iteration) + ',' + format17(r.reward) + ',' + format17(r.entropy) + ',' +
           format17(r.divergence);
    if (include_timing) out += ',' + format17(r.wall_ms);
    out += '\n';
  }
  return out;
}

}  // namespace dmvr
