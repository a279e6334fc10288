#include "dmvr/discrete_dist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmvr/errors.hpp"
#include "dmvr/numeric.hpp"

namespace dmvr {
namespace {

std::string default_label(const Sequence& y) {
  std::string s;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(y[i]);
  }
  return s;
}

}  // namespace

OutcomeSpace::OutcomeSpace(std::vector<Sequence> outcomes, std::vector<std::string> labels) {
  if (!labels.empty() && labels.size() != outcomes.size()) {
    throw Error(ErrorCode::DomainError, "label count does not match outcome count");
  }
  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return outcomes[a] < outcomes[b]; });
  outcomes_.reserve(outcomes.size());
  labels_.reserve(outcomes.size());
  for (std::size_t i : order) {
    if (!outcomes_.empty() && outcomes_.back() == outcomes[i]) {
      throw Error(ErrorCode::DomainError, "duplicate outcome " + default_label(outcomes[i]));
    }
    labels_.push_back(labels.empty() ? default_label(outcomes[i]) : labels[i]);
    outcomes_.push_back(std::move(outcomes[i]));
  }
  for (std::size_t i = 0; i < outcomes_.size(); ++i) index_.emplace(outcomes_[i], i);
}

std::optional<std::size_t> OutcomeSpace::find(const Sequence& y) const {
  auto it = index_.find(y);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t OutcomeSpace::index_of(const Sequence& y) const {
  auto i = find(y);
  if (!i) throw Error(ErrorCode::UnknownOutcome, "outcome " + default_label(y) + " not in space");
  return *i;
}

SpacePtr make_space(std::vector<Sequence> outcomes, std::vector<std::string> labels) {
  return std::make_shared<const OutcomeSpace>(std::move(outcomes), std::move(labels));
}

SpacePtr make_labelled_space(std::size_t n) {
  std::vector<Sequence> outcomes;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < n; ++i) {
    outcomes.push_back({static_cast<TokenId>(i)});
    labels.push_back("y" + std::to_string(i + 1));
  }
  return make_space(std::move(outcomes), std::move(labels));
}

Distribution::Distribution(SpacePtr space, std::vector<double> probs, Unchecked)
    : space_(std::move(space)), probs_(std::move(probs)) {}

Distribution::Distribution(SpacePtr space, std::vector<double> probs)
    : space_(std::move(space)), probs_(std::move(probs)) {
  if (!space_ || probs_.size() != space_->size()) {
    throw Error(ErrorCode::SpaceMismatch, "probability vector does not match the outcome space");
  }
  for (double p : probs_) {
    if (!(p >= 0.0)) throw Error(ErrorCode::DomainError, "negative or NaN probability");
  }
  const double total = compensated_sum(probs_);
  if (std::abs(total - 1.0) > 1e-12) {
    throw Error(ErrorCode::DomainError, "probabilities sum to " + format17(total));
  }
}

Distribution Distribution::normalize(std::span<const double> weights, SpacePtr space) {
  if (!space || weights.size() != space->size()) {
    throw Error(ErrorCode::SpaceMismatch, "weight vector does not match the outcome space");
  }
  for (double w : weights) {
    if (w < 0.0 || std::isnan(w)) throw Error(ErrorCode::NegativeWeight, "weights must be non-negative");
  }
  const double total = compensated_sum(weights);
  if (!(total > 0.0)) throw Error(ErrorCode::ZeroMass, "weights sum to zero");
  std::vector<double> probs(weights.begin(), weights.end());
  for (double& p : probs) p /= total;
  return Distribution(std::move(space), std::move(probs), Unchecked{});
}

double Distribution::log_prob(std::size_t i) const {
  const double p = probs_.at(i);
  return p > 0.0 ? std::log(p) : kNegInf;
}

void require_same_space(const Distribution& a, const Distribution& b) {
  if (a.space_ptr() == b.space_ptr()) return;
  if (!(a.space() == b.space())) {
    throw Error(ErrorCode::SpaceMismatch, "distributions are defined on different outcome spaces");
  }
}

std::vector<bool> support_mask(const Distribution& d) {
  std::vector<bool> mask(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) mask[i] = d.prob(i) > 0.0;
  return mask;
}

OutcomeSubset support(const Distribution& d) {
  OutcomeSubset out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.prob(i) > 0.0) out.push_back(d.space().at(i));
  }
  return out;
}

std::vector<bool> subset_mask(const OutcomeSpace& space, const OutcomeSubset& subset) {
  std::vector<bool> mask(space.size(), false);
  for (const auto& y : subset) mask[space.index_of(y)] = true;
  return mask;
}

double mass(const Distribution& d, const std::vector<bool>& mask) {
  CompensatedSum acc;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (mask[i]) acc.add(d.prob(i));
  }
  return acc.value();
}

double mass(const Distribution& d, const OutcomeSubset& subset) {
  return mass(d, subset_mask(d.space(), subset));
}

Distribution condition(const Distribution& d, const std::vector<bool>& mask) {
  const double m = mass(d, mask);
  if (!(m > 0.0)) throw Error(ErrorCode::ZeroMass, "conditioning event has zero mass");
  bool covers_support = true;
  for (std::size_t i = 0; i < d.size() && covers_support; ++i) {
    covers_support = mask[i] || d.prob(i) == 0.0;
  }
  if (covers_support) return d;
  std::vector<double> probs(d.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (mask[i]) probs[i] = d.prob(i);
  }
  return Distribution::normalize(probs, d.space_ptr());
}

Distribution condition(const Distribution& d, const OutcomeSubset& subset) {
  return condition(d, subset_mask(d.space(), subset));
}

double total_variation(const Distribution& p, const Distribution& q) {
  require_same_space(p, q);
  CompensatedSum acc;
  for (std::size_t i = 0; i < p.size(); ++i) acc.add(std::abs(p.prob(i) - q.prob(i)));
  return 0.5 * acc.value();
}

Json to_json(const Distribution& d) {
  Json j;
  j["outcomes"] = d.space().labels();
  j["probs"] = std::vector<double>(d.probs().begin(), d.probs().end());
  return j;
}

}  // namespace dmvr
