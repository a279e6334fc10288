#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmvr/json_io.hpp"

namespace dmvr {

using TokenId = std::int32_t;
using Sequence = std::vector<TokenId>;
using OutcomeSubset = std::vector<Sequence>;

/// Ordered, duplicate-free set of token sequences. Outcomes are kept in
/// lexicographic order of their token ids; every summation in the library
/// walks them in that order.
class OutcomeSpace {
 public:
  /// Sorts the outcomes. Labels, when given, must be parallel to `outcomes`
  /// in the order supplied; default labels are the space-joined token ids.
  explicit OutcomeSpace(std::vector<Sequence> outcomes, std::vector<std::string> labels = {});

  std::size_t size() const noexcept { return outcomes_.size(); }
  const Sequence& at(std::size_t i) const { return outcomes_.at(i); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<Sequence>& outcomes() const noexcept { return outcomes_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::optional<std::size_t> find(const Sequence& y) const;
  /// Throws UnknownOutcome.
  std::size_t index_of(const Sequence& y) const;

  bool operator==(const OutcomeSpace& other) const { return outcomes_ == other.outcomes_; }

 private:
  std::vector<Sequence> outcomes_;
  std::vector<std::string> labels_;
  std::map<Sequence, std::size_t> index_;
};

using SpacePtr = std::shared_ptr<const OutcomeSpace>;

SpacePtr make_space(std::vector<Sequence> outcomes, std::vector<std::string> labels = {});

/// Space of n single-token outcomes labelled y1..yn.
SpacePtr make_labelled_space(std::size_t n);

/// Normalized probability vector over an OutcomeSpace. Immutable.
class Distribution {
 public:
  /// Takes already-normalized probabilities; throws DomainError when they do
  /// not sum to one within 1e-12 or contain negative entries.
  Distribution(SpacePtr space, std::vector<double> probs);

  static Distribution normalize(std::span<const double> weights, SpacePtr space);

  const OutcomeSpace& space() const noexcept { return *space_; }
  const SpacePtr& space_ptr() const noexcept { return space_; }
  std::size_t size() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double prob(std::size_t i) const { return probs_.at(i); }
  double prob(const Sequence& y) const { return probs_.at(space_->index_of(y)); }
  /// -inf for zero-probability outcomes.
  double log_prob(std::size_t i) const;

 private:
  struct Unchecked {};
  Distribution(SpacePtr space, std::vector<double> probs, Unchecked);

  SpacePtr space_;
  std::vector<double> probs_;
};

/// Throws SpaceMismatch unless both distributions live on the same outcomes.
void require_same_space(const Distribution& a, const Distribution& b);

OutcomeSubset support(const Distribution& d);
std::vector<bool> support_mask(const Distribution& d);
std::vector<bool> subset_mask(const OutcomeSpace& space, const OutcomeSubset& subset);

double mass(const Distribution& d, const OutcomeSubset& subset);
double mass(const Distribution& d, const std::vector<bool>& mask);

Distribution condition(const Distribution& d, const OutcomeSubset& subset);
Distribution condition(const Distribution& d, const std::vector<bool>& mask);

double total_variation(const Distribution& p, const Distribution& q);

/// {"outcomes": [labels...], "probs": [...]}
Json to_json(const Distribution& d);

}  // namespace dmvr
