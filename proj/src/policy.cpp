#include "dmvr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <sstream>
#include <tuple>

#include "dmvr/errors.hpp"
#include "dmvr/numeric.hpp"

namespace dmvr {
namespace {

// hi + lo += d, keeping the rounding error of the addition in lo.
void add_compensated(double& hi, double& lo, double d) {
  if (!std::isfinite(hi)) return;
  const double s = hi + d;
  const double bp = s - hi;
  const double err = (hi - (s - bp)) + (d - bp);
  const double t = lo + err;
  const double h = s + t;
  lo = t - (h - s);
  hi = h;
}

std::string prefix_label(const TabularPolicy& policy, const Sequence& prefix) {
  return policy.format_sequence(prefix);
}

}  // namespace

TokenId Vocabulary::id_of(const std::string& name) const {
  auto it = std::find(tokens.begin(), tokens.end(), name);
  if (it == tokens.end()) throw Error(ErrorCode::MalformedSequence, "unknown token '" + name + "'");
  return static_cast<TokenId>(it - tokens.begin());
}

std::vector<double>& GradientVector::row(const StateKey& state) {
  auto it = rows_.find(state);
  if (it == rows_.end()) it = rows_.emplace(state, std::vector<double>(vocab_size_, 0.0)).first;
  return it->second;
}

double GradientVector::at(const StateKey& state, TokenId token) const {
  auto it = rows_.find(state);
  if (it == rows_.end()) return 0.0;
  return it->second.at(static_cast<std::size_t>(token));
}

void GradientVector::add_scaled(const GradientVector& other, double scale) {
  if (vocab_size_ == 0) vocab_size_ = other.vocab_size_;
  for (const auto& [state, values] : other.rows_) {
    auto& dst = row(state);
    for (std::size_t i = 0; i < values.size(); ++i) dst[i] += scale * values[i];
  }
}

GradientVector& GradientVector::operator+=(const GradientVector& other) {
  add_scaled(other, 1.0);
  return *this;
}

GradientVector& GradientVector::operator*=(double scale) {
  for (auto& [state, values] : rows_) {
    for (double& v : values) v *= scale;
  }
  return *this;
}

bool GradientVector::all_finite() const noexcept {
  for (const auto& [state, values] : rows_) {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

double GradientVector::max_abs() const noexcept {
  double m = 0.0;
  for (const auto& [state, values] : rows_) {
    for (double v : values) m = std::max(m, std::abs(v));
  }
  return m;
}

double GradientVector::max_abs_diff(const GradientVector& other) const {
  double m = 0.0;
  for (const auto& [state, values] : rows_) {
    for (std::size_t t = 0; t < values.size(); ++t) {
      m = std::max(m, std::abs(values[t] - other.at(state, static_cast<TokenId>(t))));
    }
  }
  for (const auto& [state, values] : other.rows_) {
    if (rows_.count(state)) continue;
    for (double v : values) m = std::max(m, std::abs(v));
  }
  return m;
}

TabularPolicy::TabularPolicy(Vocabulary vocab, int max_len, std::vector<std::string> contexts)
    : vocab_(std::move(vocab)), max_len_(max_len), contexts_(std::move(contexts)) {
  if (vocab_.tokens.empty()) throw Error(ErrorCode::InvalidConfig, "vocabulary is empty");
  if (max_len_ < 1) throw Error(ErrorCode::InvalidConfig, "max_len must be positive");
  if (contexts_.empty()) throw Error(ErrorCode::InvalidConfig, "at least one context is required");
  if (vocab_.eos && (*vocab_.eos < 0 || static_cast<std::size_t>(*vocab_.eos) >= vocab_.size())) {
    throw Error(ErrorCode::InvalidConfig, "eos index out of range");
  }
  if (vocab_.eos && vocab_.size() < 2 && max_len_ > 1) {
    // Only eos: the single outcome is "eos". Allowed.
  }
}

ContextId TabularPolicy::context_index(const std::string& name) const {
  auto it = std::find(contexts_.begin(), contexts_.end(), name);
  if (it == contexts_.end()) throw Error(ErrorCode::ContextMismatch, "unknown context '" + name + "'");
  return static_cast<ContextId>(it - contexts_.begin());
}

bool TabularPolicy::is_forced(const Sequence& prefix) const noexcept {
  return eos_mode() && static_cast<int>(prefix.size()) == max_len_ - 1;
}

bool TabularPolicy::is_complete(const Sequence& y) const noexcept {
  if (y.empty()) return false;
  const auto v = static_cast<TokenId>(vocab_.size());
  for (TokenId t : y) {
    if (t < 0 || t >= v) return false;
  }
  if (eos_mode()) {
    if (static_cast<int>(y.size()) > max_len_) return false;
    if (y.back() != *vocab_.eos) return false;
    return std::find(y.begin(), y.end() - 1, *vocab_.eos) == y.end() - 1;
  }
  return static_cast<int>(y.size()) == max_len_;
}

void TabularPolicy::validate_sequence(const Sequence& y) const {
  if (!is_complete(y)) {
    throw Error(ErrorCode::MalformedSequence, "'" + format_sequence(y) + "' is not a complete sequence");
  }
}

const TabularPolicy::Row* TabularPolicy::find_row(ContextId context, const Sequence& prefix) const {
  auto it = table_.find(StateKey{context, prefix});
  return it == table_.end() ? nullptr : &it->second;
}

std::vector<double> TabularPolicy::logits(ContextId context, const Sequence& prefix) const {
  if (const Row* row = find_row(context, prefix)) return row->hi;
  return std::vector<double>(vocab_.size(), 0.0);
}

void TabularPolicy::set_logits(ContextId context, const Sequence& prefix, std::vector<double> logits) {
  if (context >= contexts_.size()) throw Error(ErrorCode::ContextMismatch, "context index out of range");
  if (logits.size() != vocab_.size()) throw Error(ErrorCode::InvalidConfig, "logit vector has the wrong size");
  Row row;
  row.lo.assign(logits.size(), 0.0);
  row.hi = std::move(logits);
  table_[StateKey{context, prefix}] = std::move(row);
}

std::vector<double> TabularPolicy::next_token_log_probs(ContextId context, const Sequence& prefix) const {
  std::vector<double> out(vocab_.size(), kNegInf);
  if (is_forced(prefix)) {
    out[static_cast<std::size_t>(*vocab_.eos)] = 0.0;
    return out;
  }
  const Row* row = find_row(context, prefix);
  if (!row) {
    const double uniform = -std::log(static_cast<double>(vocab_.size()));
    std::fill(out.begin(), out.end(), uniform);
    return out;
  }
  const double lse = log_sum_exp(row->hi);
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = row->hi[t] - lse;
  return out;
}

std::vector<double> TabularPolicy::next_token_probs(ContextId context, const Sequence& prefix) const {
  auto lp = next_token_log_probs(context, prefix);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

double TabularPolicy::log_prob(ContextId context, const Sequence& y) const {
  validate_sequence(y);
  CompensatedSum acc;
  Sequence prefix;
  prefix.reserve(y.size());
  for (TokenId t : y) {
    acc.add(next_token_log_probs(context, prefix)[static_cast<std::size_t>(t)]);
    prefix.push_back(t);
  }
  return acc.value();
}

Sequence TabularPolicy::sample(ContextId context, RngStream& stream) const {
  Sequence y;
  while (!is_complete(y)) {
    const auto probs = next_token_probs(context, y);
    y.push_back(static_cast<TokenId>(stream.categorical(probs)));
  }
  return y;
}

GradientVector TabularPolicy::score_gradient(ContextId context, const Sequence& y) const {
  validate_sequence(y);
  GradientVector g(vocab_.size());
  Sequence prefix;
  for (TokenId t : y) {
    if (!is_forced(prefix)) {
      const auto probs = next_token_probs(context, prefix);
      auto& row = g.row(StateKey{context, prefix});
      for (std::size_t k = 0; k < probs.size(); ++k) {
        row[k] += (static_cast<TokenId>(k) == t ? 1.0 : 0.0) - probs[k];
      }
    }
    prefix.push_back(t);
  }
  return g;
}

TabularPolicy TabularPolicy::apply_update(const GradientVector& g, double lr) const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::DomainError, "learning rate must be positive");
  if (!g.all_finite()) throw Error(ErrorCode::NonFiniteGradient, "gradient has non-finite entries");
  TabularPolicy next = *this;
  for (const auto& [state, values] : g.rows()) {
    if (is_forced(state.prefix)) continue;
    auto it = next.table_.find(state);
    if (it == next.table_.end()) {
      Row row{std::vector<double>(vocab_.size(), 0.0), std::vector<double>(vocab_.size(), 0.0)};
      it = next.table_.emplace(state, std::move(row)).first;
    }
    for (std::size_t k = 0; k < values.size(); ++k) add_compensated(it->second.hi[k], it->second.lo[k], lr * values[k]);
  }
  next.version_ = version_ + 1;
  return next;
}

std::string TabularPolicy::format_sequence(const Sequence& y) const {
  std::string s;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i) s += ' ';
    const auto t = y[i];
    if (t >= 0 && static_cast<std::size_t>(t) < vocab_.size()) {
      s += vocab_.tokens[static_cast<std::size_t>(t)];
    } else {
      s += "<" + std::to_string(t) + ">";
    }
  }
  return s;
}

Sequence TabularPolicy::parse_sequence(const std::string& text) const {
  Sequence y;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) y.push_back(vocab_.id_of(tok));
  return y;
}

Json TabularPolicy::to_checkpoint() const {
  Json j;
  j["vocab"] = vocab_.tokens;
  j["eos"] = vocab_.eos ? Json(vocab_.tokens[static_cast<std::size_t>(*vocab_.eos)]) : Json(nullptr);
  j["max_len"] = max_len_;
  j["contexts"] = contexts_;
  j["version"] = version_;
  Json logits = Json::object();
  Json residuals = Json::object();
  for (const auto& [state, row] : table_) {
    const auto& ctx = contexts_[state.context];
    const auto label = prefix_label(*this, state.prefix);
    logits[ctx][label] = row.hi;
    if (std::any_of(row.lo.begin(), row.lo.end(), [](double v) { return v != 0.0; })) {
      residuals[ctx][label] = row.lo;
    }
  }
  j["logits"] = std::move(logits);
  j["residuals"] = std::move(residuals);
  return j;
}

TabularPolicy TabularPolicy::from_checkpoint(const Json& j) {
  try {
    Vocabulary vocab;
    vocab.tokens = j.at("vocab").get<std::vector<std::string>>();
    if (j.contains("eos") && !j.at("eos").is_null()) vocab.eos = vocab.id_of(j.at("eos").get<std::string>());
    TabularPolicy policy(std::move(vocab), j.at("max_len").get<int>(), j.at("contexts").get<std::vector<std::string>>());
    policy.version_ = j.value("version", std::uint64_t{0});
    auto read_vec = [](const Json& arr) {
      std::vector<double> v;
      for (const auto& e : arr) v.push_back(json_to_double(e));
      return v;
    };
    if (j.contains("logits")) {
      for (auto cit = j.at("logits").begin(); cit != j.at("logits").end(); ++cit) {
        const ContextId ctx = policy.context_index(cit.key());
        for (auto sit = cit.value().begin(); sit != cit.value().end(); ++sit) {
          policy.set_logits(ctx, policy.parse_sequence(sit.key()), read_vec(sit.value()));
        }
      }
    }
    if (j.contains("residuals")) {
      for (auto cit = j.at("residuals").begin(); cit != j.at("residuals").end(); ++cit) {
        const ContextId ctx = policy.context_index(cit.key());
        for (auto sit = cit.value().begin(); sit != cit.value().end(); ++sit) {
          auto it = policy.table_.find(StateKey{ctx, policy.parse_sequence(sit.key())});
          if (it == policy.table_.end()) throw Error(ErrorCode::InvalidConfig, "residual without logits");
          it->second.lo = read_vec(sit.value());
        }
      }
    }
    return policy;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed checkpoint: ") + e.what());
  }
}

bool TabularPolicy::same_logits(const TabularPolicy& other) const {
  if (table_.size() != other.table_.size()) return false;
  auto bits_equal = [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
    }
    return true;
  };
  for (auto a = table_.begin(), b = other.table_.begin(); a != table_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (!bits_equal(a->second.hi, b->second.hi) || !bits_equal(a->second.lo, b->second.lo)) return false;
  }
  return true;
}

SpacePtr enumerate_space(const TabularPolicy& policy, std::size_t budget) {
  const auto& vocab = policy.vocab();
  const std::size_t content = policy.eos_mode() ? vocab.size() - 1 : vocab.size();
  double count = 0.0;
  if (policy.eos_mode()) {
    double level = 1.0;
    for (int k = 0; k < policy.max_len(); ++k, level *= static_cast<double>(content)) count += level;
  } else {
    count = std::pow(static_cast<double>(content), policy.max_len());
  }
  if (count > static_cast<double>(budget)) {
    throw Error(ErrorCode::BudgetExceeded, "sequence space exceeds the outcome budget of " + std::to_string(budget));
  }

  using Key = std::tuple<std::vector<std::string>, int, int>;
  static std::mutex mu;
  static std::map<Key, SpacePtr> cache;
  Key key{vocab.tokens, vocab.eos ? *vocab.eos : -1, policy.max_len()};
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }

  std::vector<Sequence> outcomes;
  outcomes.reserve(static_cast<std::size_t>(count));
  Sequence prefix;
  auto dfs = [&](auto&& self) -> void {
    for (TokenId t = 0; t < static_cast<TokenId>(vocab.size()); ++t) {
      if (policy.is_forced(prefix) && t != *vocab.eos) continue;
      prefix.push_back(t);
      if (policy.is_complete(prefix)) {
        outcomes.push_back(prefix);
      } else if (!(policy.eos_mode() && t == *vocab.eos)) {
        self(self);
      }
      prefix.pop_back();
    }
  };
  dfs(dfs);
  std::vector<std::string> labels;
  labels.reserve(outcomes.size());
  for (const auto& y : outcomes) labels.push_back(policy.format_sequence(y));
  auto space = make_space(std::move(outcomes), std::move(labels));
  std::lock_guard<std::mutex> lock(mu);
  return cache.emplace(std::move(key), std::move(space)).first->second;
}

std::vector<double> sequence_log_probs(const TabularPolicy& policy, ContextId context, const OutcomeSpace& space) {
  std::vector<double> out(space.size());
  // Consecutive outcomes share prefixes; keep per-depth next-token
  // log-probabilities and cumulative sums for the current path.
  std::vector<std::vector<double>> step_lp;
  std::vector<double> cumulative{0.0};
  Sequence path;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const Sequence& y = space.at(i);
    policy.validate_sequence(y);
    std::size_t common = 0;
    while (common < path.size() && common < y.size() && path[common] == y[common]) ++common;
    // Depth d state has prefix y[0..d); valid for d <= common.
    step_lp.resize(std::min(step_lp.size(), common + 1));
    path.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(common));
    cumulative.resize(common + 1);
    for (std::size_t d = common; d < y.size(); ++d) {
      if (step_lp.size() <= d) step_lp.push_back(policy.next_token_log_probs(context, path));
      cumulative.push_back(cumulative.back() + step_lp[d][static_cast<std::size_t>(y[d])]);
      path.push_back(y[d]);
    }
    out[i] = cumulative.back();
    // Depth y.size() has no state; drop the entries the next outcome cannot reuse.
    step_lp.resize(std::min(step_lp.size(), y.size()));
  }
  return out;
}

Distribution sequence_distribution(const TabularPolicy& policy, ContextId context, const SpacePtr& space) {
  auto lp = sequence_log_probs(policy, context, *space);
  for (double& v : lp) v = std::exp(v);
  return Distribution::normalize(lp, space);
}

Distribution sequence_distribution(const TabularPolicy& policy, ContextId context, std::size_t budget) {
  return sequence_distribution(policy, context, enumerate_space(policy, budget));
}

void assign_distribution(TabularPolicy& policy, ContextId context, const Distribution& dist) {
  // Mass flowing through each (prefix, next token).
  std::map<Sequence, std::vector<double>> flow;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const Sequence& y = dist.space().at(i);
    policy.validate_sequence(y);
    Sequence prefix;
    for (TokenId t : y) {
      auto& row = flow[prefix];
      if (row.empty()) row.assign(policy.vocab().size(), 0.0);
      row[static_cast<std::size_t>(t)] += dist.prob(i);
      prefix.push_back(t);
    }
  }
  for (const auto& [prefix, row] : flow) {
    if (policy.is_forced(prefix)) continue;
    const double total = compensated_sum(row);
    if (!(total > 0.0)) continue;
    std::vector<double> logits(row.size());
    for (std::size_t k = 0; k < row.size(); ++k) logits[k] = row[k] > 0.0 ? std::log(row[k] / total) : kNegInf;
    policy.set_logits(context, prefix, std::move(logits));
  }
}

double sequence_entropy_exact(const TabularPolicy& policy, ContextId context, std::size_t budget) {
  const auto space = enumerate_space(policy, budget);
  const auto lp = sequence_log_probs(policy, context, *space);
  CompensatedSum acc;
  for (double v : lp) {
    if (v == kNegInf) continue;
    acc.add(-std::exp(v) * v);
  }
  return acc.value();
}

double sequence_entropy_mc(const TabularPolicy& policy, ContextId context, std::size_t samples, std::uint64_t seed) {
  if (samples == 0) return 0.0;
  CompensatedSum acc;
  for (std::size_t i = 0; i < samples; ++i) {
    RngStream stream(StreamKey{seed, StreamPurpose::evaluation, 0xE27, context, i});
    acc.add(-policy.log_prob(context, policy.sample(context, stream)));
  }
  return acc.value() / static_cast<double>(samples);
}

double sequence_entropy(const TabularPolicy& policy, ContextId context, std::size_t budget, std::size_t mc_samples,
                        std::uint64_t seed) {
  try {
    return sequence_entropy_exact(policy, context, budget);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BudgetExceeded) throw;
    return sequence_entropy_mc(policy, context, mc_samples, seed);
  }
}

std::vector<double> perplexity(const TabularPolicy& scorer, ContextId context, std::span<const Sequence> sequences) {
  std::vector<double> out;
  out.reserve(sequences.size());
  for (const auto& y : sequences) {
    const double lp = scorer.log_prob(context, y);
    out.push_back(std::exp(-lp / static_cast<double>(y.size())));
  }
  return out;
}

}  // namespace dmvr
