#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmvr/json_io.hpp"
#include "dmvr/policy.hpp"
#include "dmvr/target.hpp"
#include "dmvr/task.hpp"

namespace dmvr {

enum class Algorithm { reinforce, kl_control, ppo_clip, kl_dpg, alpha_dpg, rs_ft };
enum class BaselineKind { none, constant, leave_one_out, group_mean };
enum class ZMode { exact, precomputed_sampled, online };

std::string_view to_string(Algorithm a);
std::string_view to_string(BaselineKind b);
std::string_view to_string(ZMode z);
Algorithm parse_algorithm(const std::string& s);
BaselineKind parse_baseline(const std::string& s);
ZMode parse_z_mode(const std::string& s);

struct TrainerConfig {
  Algorithm algorithm = Algorithm::alpha_dpg;
  /// Divergence parameter for alpha_dpg; also the alpha at which the run
  /// log reports the exact divergence to the target.
  double alpha = 0.5;
  double beta_kl = 0.0;
  double clip_M = 10.0;
  double ppo_epsilon = 0.2;
  int group_K = 4;
  int batch_contexts = 4;
  double lr = 1.0;
  int iterations = 200;
  BaselineKind baseline = BaselineKind::leave_one_out;
  double baseline_value = 0.0;
  ZMode z_mode = ZMode::exact;
  /// Base-model samples per context behind a sampled Z estimate.
  int z_samples = 128;
  double z_floor = kDefaultZFloor;
  std::uint64_t seed = 0;
  /// Divides every policy-gradient step; 0 means the task's max_len.
  int loss_norm_len = 0;
  /// alpha_dpg: use -f'(pi/p) = (ratio^(1-alpha) - 1)/(1-alpha) instead of
  /// the rescaled form. The clip still applies to the parenthetical factor.
  bool exact_pseudo_reward = false;
  /// rs_ft: base-model samples per context in the fixed pool.
  int rs_ft_pool = 128;

  Json to_json() const;
  /// Unknown keys are rejected; missing keys keep their defaults.
  static TrainerConfig from_json(const Json& j);

  /// Static checks; empty when the config is usable.
  std::vector<std::string> diagnostics() const;
};

struct Rollout {
  ContextId context = 0;
  Sequence y;
};

/// v - beta (log pi - log base). DomainError on zero probabilities.
double pseudo_reward_rlvr(const Sequence& y, ContextId context, const TabularPolicy& policy,
                          const TabularPolicy& base, const Verifier& verifier, double beta_kl);

/// min(ratio^(1-alpha) - 1, M); -1 for ratio 0.
double pseudo_reward_alpha(double ratio, double alpha, double clip_M);

/// r_i - mean_{j != i} r_j. GroupTooSmall for fewer than two rewards.
std::vector<double> advantage_leave_one_out(std::span<const double> rewards);
/// r_i - mean_j r_j (biased: the sample's own reward enters its baseline).
std::vector<double> advantage_group_mean(std::span<const double> rewards);

/// Applies `kind` to consecutive groups of `group_size` rewards.
std::vector<double> apply_baseline(std::span<const double> rewards, BaselineKind kind, int group_size,
                                   double constant = 0.0);

/// Mean over the batch of advantage * score, divided by loss_norm_len.
/// Ascent direction on the objective.
GradientVector step_policy_gradient(const TabularPolicy& policy, std::span<const Rollout> batch,
                                    std::span<const double> advantages, int loss_norm_len);

/// Gradient of the token-level clipped surrogate
/// sum_t min(rho_t A, clip(rho_t, 1-eps, 1+eps) A), batch mean / loss_norm_len.
GradientVector step_ppo_clip(const TabularPolicy& policy, const TabularPolicy& old_policy,
                             std::span<const Rollout> batch, std::span<const double> advantages, double ppo_epsilon,
                             int loss_norm_len);

/// (p/pi - 1)-weighted scores. `targets` is indexed by context.
GradientVector step_kl_dpg(const TabularPolicy& policy, std::span<const TargetSpec> targets,
                           std::span<const Rollout> batch, int loss_norm_len);

/// Clipped alpha pseudo-reward minus baseline; batch laid out as
/// consecutive groups of group_K rollouts sharing a context.
GradientVector step_alpha_dpg(const TabularPolicy& policy, std::span<const TargetSpec> targets,
                              std::span<const Rollout> batch, double alpha, double clip_M, BaselineKind baseline,
                              int group_K, int loss_norm_len, bool exact_pseudo_reward = false);

/// Mean score over the verifier-accepted part of a base-model pool.
/// EmptyFilteredSet when nothing is accepted.
GradientVector step_rs_ft(const TabularPolicy& policy, const Verifier& verifier, std::span<const Rollout> pool,
                          int loss_norm_len);

struct RunRecord {
  int iteration = 0;
  double reward = 0.0;
  double entropy = 0.0;
  double divergence = 0.0;
  double wall_ms = 0.0;
};

struct RunLog {
  std::vector<RunRecord> records;
  TabularPolicy final_policy;
  ZMode z_mode = ZMode::exact;
  /// Effective Z per context at the end of training.
  std::vector<double> z_used;
};

struct TrainOptions {
  int workers = 1;
  std::size_t budget = kDefaultOutcomeBudget;
};

/// Full training loop. Deterministic in (config, task); worker count only
/// changes how rollouts are scheduled.
RunLog train(const TrainerConfig& config, const Task& task, const TrainOptions& options = {});

/// iteration,reward,entropy,divergence[,wall_ms]
std::string runlog_csv(const RunLog& log, bool include_timing = false);

/// Per-context exact targets used by the trainers and the run log.
std::vector<TargetSpec> exact_targets(const Task& task, double z_floor, std::size_t budget = kDefaultOutcomeBudget);

}  // namespace dmvr
