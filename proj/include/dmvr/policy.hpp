#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmvr/discrete_dist.hpp"
#include "dmvr/json_io.hpp"
#include "dmvr/rng.hpp"

namespace dmvr {

using ContextId = std::size_t;

inline constexpr std::size_t kDefaultOutcomeBudget = 1'000'000;

struct Vocabulary {
  std::vector<std::string> tokens;
  /// Index of the end-of-sequence token. Without one, every sequence has
  /// exactly max_len tokens.
  std::optional<TokenId> eos;

  std::size_t size() const noexcept { return tokens.size(); }
  /// Throws MalformedSequence for unknown names.
  TokenId id_of(const std::string& name) const;
};

/// A decision point of the autoregressive policy.
struct StateKey {
  ContextId context = 0;
  Sequence prefix;

  auto operator<=>(const StateKey&) const = default;
};

/// Sparse gradient over logits: one dense row per touched state.
class GradientVector {
 public:
  explicit GradientVector(std::size_t vocab_size = 0) : vocab_size_(vocab_size) {}

  std::size_t vocab_size() const noexcept { return vocab_size_; }
  const std::map<StateKey, std::vector<double>>& rows() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_.empty(); }

  /// Zero-initialized on first access.
  std::vector<double>& row(const StateKey& state);
  double at(const StateKey& state, TokenId token) const;

  void add_scaled(const GradientVector& other, double scale);
  GradientVector& operator+=(const GradientVector& other);
  GradientVector& operator*=(double scale);

  bool all_finite() const noexcept;
  double max_abs() const noexcept;
  /// Largest |this - other| over the union of entries.
  double max_abs_diff(const GradientVector& other) const;

 private:
  std::size_t vocab_size_;
  std::map<StateKey, std::vector<double>> rows_;
};

/// Tabular autoregressive softmax policy: one logit vector per
/// (context, prefix) state, lazily zero so an untouched state is uniform.
///
/// In end-of-sequence mode a state whose prefix already has max_len - 1
/// tokens is forced to emit eos, which keeps the sequence space finite.
///
/// Logits are stored as an unevaluated sum hi + lo (the lo part holds the
/// rounding error of past updates), which makes an update followed by its
/// negation restore the table bit-for-bit. The visible logit is hi.
class TabularPolicy {
 public:
  TabularPolicy(Vocabulary vocab, int max_len, std::vector<std::string> contexts);

  const Vocabulary& vocab() const noexcept { return vocab_; }
  int max_len() const noexcept { return max_len_; }
  const std::vector<std::string>& contexts() const noexcept { return contexts_; }
  ContextId context_index(const std::string& name) const;
  std::uint64_t version() const noexcept { return version_; }
  bool eos_mode() const noexcept { return vocab_.eos.has_value(); }

  /// True when the state admits exactly one continuation (forced eos).
  bool is_forced(const Sequence& prefix) const noexcept;
  /// True when `y` is a complete sequence.
  bool is_complete(const Sequence& y) const noexcept;
  /// Throws MalformedSequence unless `y` is a complete, well-formed sequence.
  void validate_sequence(const Sequence& y) const;

  std::vector<double> logits(ContextId context, const Sequence& prefix) const;
  /// Builder access used when loading base models. Bumps nothing.
  void set_logits(ContextId context, const Sequence& prefix, std::vector<double> logits);

  std::vector<double> next_token_probs(ContextId context, const Sequence& prefix) const;
  std::vector<double> next_token_log_probs(ContextId context, const Sequence& prefix) const;

  double log_prob(ContextId context, const Sequence& y) const;
  Sequence sample(ContextId context, RngStream& stream) const;
  GradientVector score_gradient(ContextId context, const Sequence& y) const;

  /// logits + lr * g, version + 1. Throws NonFiniteGradient.
  TabularPolicy apply_update(const GradientVector& g, double lr) const;

  std::string format_sequence(const Sequence& y) const;
  Sequence parse_sequence(const std::string& text) const;

  /// Number of stored (non-default) states.
  std::size_t stored_states() const noexcept { return table_.size(); }

  Json to_checkpoint() const;
  static TabularPolicy from_checkpoint(const Json& j);

  /// Bitwise comparison of the stored tables (ignores version).
  bool same_logits(const TabularPolicy& other) const;

 private:
  struct Row {
    std::vector<double> hi;
    std::vector<double> lo;
  };

  const Row* find_row(ContextId context, const Sequence& prefix) const;

  Vocabulary vocab_;
  int max_len_;
  std::vector<std::string> contexts_;
  std::uint64_t version_ = 0;
  std::map<StateKey, Row> table_;
};

/// Every complete sequence of the policy's shape, lexicographic. Cached per
/// (vocab size, eos, max_len). Throws BudgetExceeded above `budget`.
SpacePtr enumerate_space(const TabularPolicy& policy, std::size_t budget = kDefaultOutcomeBudget);

/// Log-probabilities of every outcome of `space`, in space order.
std::vector<double> sequence_log_probs(const TabularPolicy& policy, ContextId context, const OutcomeSpace& space);

Distribution sequence_distribution(const TabularPolicy& policy, ContextId context, const SpacePtr& space);
Distribution sequence_distribution(const TabularPolicy& policy, ContextId context,
                                   std::size_t budget = kDefaultOutcomeBudget);

/// Sets the context's logits so the policy's sequence distribution equals
/// `dist` (zero-probability continuations get -inf logits). States the
/// distribution never reaches are left uniform.
void assign_distribution(TabularPolicy& policy, ContextId context, const Distribution& dist);

double sequence_entropy_exact(const TabularPolicy& policy, ContextId context,
                              std::size_t budget = kDefaultOutcomeBudget);
/// -mean log_prob over `samples` draws keyed by `seed`.
double sequence_entropy_mc(const TabularPolicy& policy, ContextId context, std::size_t samples, std::uint64_t seed);
/// Exact when the space fits the budget, Monte-Carlo otherwise.
double sequence_entropy(const TabularPolicy& policy, ContextId context, std::size_t budget = kDefaultOutcomeBudget,
                        std::size_t mc_samples = 4096, std::uint64_t seed = 0);

/// exp(-log_prob(y) / |y|) under `scorer`, |y| counting the eos token.
std::vector<double> perplexity(const TabularPolicy& scorer, ContextId context, std::span<const Sequence> sequences);

}  // namespace dmvr
