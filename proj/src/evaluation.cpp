#include "dmvr/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "dmvr/errors.hpp"
#include "dmvr/numeric.hpp"
#include "dmvr/parallel.hpp"

namespace dmvr {
namespace {

constexpr std::uint64_t kEvalIteration = 1;

// C(n, k) when it is exactly representable as a double, 0 otherwise.
double exact_binomial(std::size_t n, std::size_t k) {
  constexpr unsigned __int128 kLimit = static_cast<unsigned __int128>(1) << 53;
  k = std::min(k, n - k);
  unsigned __int128 c = 1;
  for (std::size_t i = 0; i < k; ++i) {
    c = c * (n - i) / (i + 1);
    if (c >= kLimit) return 0.0;
  }
  return static_cast<double>(c);
}

}  // namespace

std::size_t ContextSamples::c() const noexcept {
  return static_cast<std::size_t>(std::count(correct.begin(), correct.end(), true));
}

SampleSet draw_samples(const TabularPolicy& policy, const Verifier& verifier, std::size_t n, std::uint64_t seed,
                       int workers) {
  const std::size_t n_ctx = policy.contexts().size();
  SampleSet out(n_ctx);
  for (ContextId c = 0; c < n_ctx; ++c) {
    out[c].context = c;
    out[c].sequences.resize(n);
    out[c].correct.resize(n);
  }
  std::vector<std::uint8_t> bits(n_ctx * n);
  parallel_for(n_ctx * n, workers, [&](std::size_t idx) {
    const ContextId c = idx / n;
    const std::size_t i = idx % n;
    RngStream s(StreamKey{seed, StreamPurpose::evaluation, kEvalIteration, c, i});
    out[c].sequences[i] = policy.sample(c, s);
    bits[idx] = verifier(out[c].sequences[i], c) ? 1 : 0;
  });
  for (std::size_t idx = 0; idx < bits.size(); ++idx) out[idx / n].correct[idx % n] = bits[idx] != 0;
  return out;
}

double pass_at_k(std::size_t n, std::size_t c, std::size_t k) {
  if (c > n) throw Error(ErrorCode::DomainError, "correct count exceeds sample count");
  if (k < 1 || k > n) throw Error(ErrorCode::DomainError, "k must lie in [1, n]");
  if (n - c < k) return 1.0;
  // Exact rational when both binomials fit in a double's mantissa.
  const double total = exact_binomial(n, k);
  if (total > 0.0) {
    const double miss = exact_binomial(n - c, k);
    return (total - miss) / total;
  }
  double miss = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    miss *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  }
  return 1.0 - miss;
}

std::vector<double> pass_curve(const SampleSet& samples, std::span<const std::size_t> ks) {
  std::vector<double> out;
  for (std::size_t k : ks) {
    if (samples.empty()) throw Error(ErrorCode::DomainError, "empty sample set");
    CompensatedSum acc;
    for (const auto& s : samples) acc.add(pass_at_k(s.n(), s.c(), k));
    out.push_back(acc.value() / static_cast<double>(samples.size()));
  }
  return out;
}

std::string_view to_string(DifficultyClass d) {
  switch (d) {
    case DifficultyClass::easy: return "easy";
    case DifficultyClass::medium: return "medium";
    case DifficultyClass::hard: return "hard";
    case DifficultyClass::unsolved: return "unsolved";
  }
  return "?";
}

DifficultyClass classify_difficulty(double accuracy) {
  if (accuracy >= 0.8) return DifficultyClass::easy;
  if (accuracy >= 0.2) return DifficultyClass::medium;
  if (accuracy > 0.0) return DifficultyClass::hard;
  return DifficultyClass::unsolved;
}

namespace {

DifficultyClass class_of(const ContextSamples& s) {
  if (s.n() == 0) throw Error(ErrorCode::DomainError, "context has no samples");
  return classify_difficulty(static_cast<double>(s.c()) / static_cast<double>(s.n()));
}

}  // namespace

TransitionMatrix difficulty_transition(const SampleSet& before, const SampleSet& after) {
  if (before.size() != after.size()) throw Error(ErrorCode::ContextMismatch, "sample sets cover different contexts");
  TransitionMatrix m{};
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].context != after[i].context) {
      throw Error(ErrorCode::ContextMismatch, "sample sets cover different contexts");
    }
    ++m[static_cast<std::size_t>(class_of(before[i]))][static_cast<std::size_t>(class_of(after[i]))];
  }
  return m;
}

DiversityReport diversity(const std::map<std::string, std::size_t>& counts) {
  std::size_t total = 0;
  for (const auto& [_, n] : counts) total += n;
  if (total == 0) throw Error(ErrorCode::EmptyCounts, "no category occurrences");
  DiversityReport r;
  CompensatedSum h, sq;
  for (const auto& [_, n] : counts) {
    if (n == 0) continue;
    const double p = static_cast<double>(n) / static_cast<double>(total);
    r.abundances.push_back(p);
    h.add(-p * std::log(p));
    sq.add(p * p);
    ++r.richness;
  }
  r.shannon = std::max(0.0, h.value());
  r.gini_simpson = std::max(0.0, 1.0 - sq.value());
  return r;
}

CategoryExtractor unigram_extractor(const TabularPolicy& shape) {
  const auto vocab = shape.vocab();
  return [vocab](const Sequence& y) {
    std::vector<std::string> out;
    for (TokenId t : y) {
      if (vocab.eos && t == *vocab.eos) continue;
      out.push_back(vocab.tokens.at(static_cast<std::size_t>(t)));
    }
    return out;
  };
}

CategoryExtractor bigram_extractor(const TabularPolicy& shape) {
  const auto vocab = shape.vocab();
  return [vocab](const Sequence& y) {
    std::vector<std::string> names;
    for (TokenId t : y) {
      if (vocab.eos && t == *vocab.eos) continue;
      names.push_back(vocab.tokens.at(static_cast<std::size_t>(t)));
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i + 1 < names.size(); ++i) out.push_back(names[i] + ' ' + names[i + 1]);
    return out;
  };
}

std::map<std::string, std::size_t> category_counts(std::span<const Sequence> sequences,
                                                   const CategoryExtractor& extract) {
  std::map<std::string, std::size_t> counts;
  for (const auto& y : sequences) {
    for (auto& cat : extract(y)) ++counts[std::move(cat)];
  }
  return counts;
}

DiversitySummary mean_diversity(const SampleSet& samples, const CategoryExtractor& extract) {
  CompensatedSum h, d, s;
  std::size_t used = 0;
  for (const auto& ctx : samples) {
    const auto counts = category_counts(ctx.sequences, extract);
    if (counts.empty()) continue;
    const auto r = diversity(counts);
    h.add(r.shannon);
    d.add(r.gini_simpson);
    s.add(static_cast<double>(r.richness));
    ++used;
  }
  if (used == 0) return {};
  const double n = static_cast<double>(used);
  return DiversitySummary{h.value() / n, d.value() / n, s.value() / n};
}

std::vector<std::string> pareto_front(std::span<const ParetoPoint> points) {
  std::vector<ParetoPoint> front;
  for (const auto& p : points) {
    bool dominated = false;
    for (const auto& q : points) {
      if (q.pass1 > p.pass1 && q.pass_k > p.pass_k) {
        dominated = true;
        break;
      }
    }
    if (!dominated) front.push_back(p);
  }
  std::sort(front.begin(), front.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.pass1 != b.pass1) return a.pass1 > b.pass1;
    if (a.pass_k != b.pass_k) return a.pass_k > b.pass_k;
    return a.id < b.id;
  });
  std::vector<std::string> ids;
  for (auto& p : front) ids.push_back(std::move(p.id));
  return ids;
}

Quartiles quartiles(std::vector<double> values) {
  if (values.empty()) return {};
  std::sort(values.begin(), values.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  return Quartiles{at(0.25), at(0.5), at(0.75)};
}

std::vector<PerplexitySummary> perplexity_report(std::span<const NamedPolicy> models, const TabularPolicy& scorer,
                                                 ContextId context, std::size_t n, std::uint64_t seed) {
  std::vector<PerplexitySummary> out;
  for (const auto& m : models) {
    std::vector<Sequence> ys;
    for (std::size_t i = 0; i < n; ++i) {
      RngStream s(StreamKey{seed, StreamPurpose::evaluation, kEvalIteration, context, i});
      ys.push_back(m.policy.sample(context, s));
    }
    PerplexitySummary r;
    r.id = m.id;
    r.self_ppl = perplexity(m.policy, context, ys);
    r.base_ppl = perplexity(scorer, context, ys);
    r.self_q = quartiles(r.self_ppl);
    r.base_q = quartiles(r.base_ppl);
    out.push_back(std::move(r));
  }
  return out;
}

Json EvalSpec::to_json() const {
  Json j;
  j["n"] = n;
  j["ks"] = ks;
  j["seed"] = seed;
  return j;
}

EvalSpec EvalSpec::from_json(const Json& j) {
  EvalSpec s;
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "eval spec must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n") s.n = value.get<std::size_t>();
      else if (key == "ks") s.ks = value.get<std::vector<std::size_t>>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else throw Error(ErrorCode::InvalidConfig, "unknown eval spec key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad eval spec value: ") + e.what());
  }
  return s;
}

std::size_t exact_support_coverage(const TabularPolicy& policy, const Task& task, std::size_t budget) {
  const auto space = enumerate_space(policy, budget);
  std::size_t covered = 0;
  for (ContextId c = 0; c < task.context_count(); ++c) {
    const auto pi = sequence_distribution(policy, c, space);
    std::vector<std::size_t> accepted;
    for (std::size_t i = 0; i < space->size(); ++i) {
      if (task.verifier(space->at(i), c)) accepted.push_back(i);
    }
    if (accepted.empty()) continue;
    const double threshold = 1.0 / (10.0 * static_cast<double>(accepted.size()));
    for (std::size_t i : accepted) {
      if (pi.prob(i) >= threshold) ++covered;
    }
  }
  return covered;
}

double exact_pass1(const TabularPolicy& policy, const Task& task, std::size_t budget) {
  const auto space = enumerate_space(policy, budget);
  CompensatedSum total;
  for (ContextId c = 0; c < task.context_count(); ++c) {
    const auto pi = sequence_distribution(policy, c, space);
    CompensatedSum acc;
    for (std::size_t i = 0; i < space->size(); ++i) {
      if (task.verifier(space->at(i), c)) acc.add(pi.prob(i));
    }
    total.add(acc.value());
  }
  return total.value() / static_cast<double>(task.context_count());
}

namespace {

Json diversity_json(const DiversitySummary& d) {
  Json j;
  j["shannon"] = d.shannon;
  j["gini_simpson"] = d.gini_simpson;
  j["richness"] = d.richness;
  return j;
}

}  // namespace

Json evaluate_policy(const std::string& model_id, const TabularPolicy& policy, const Task& task,
                     const EvalSpec& spec, int workers, std::size_t budget) {
  if (spec.n == 0) throw Error(ErrorCode::InvalidConfig, "eval n must be positive");
  const auto samples = draw_samples(policy, task.verifier, spec.n, spec.seed, workers);
  const auto base_samples = draw_samples(task.base, task.verifier, spec.n, spec.seed, workers);

  Json j;
  j["model_id"] = model_id;
  j["n"] = spec.n;
  j["seed"] = spec.seed;

  std::vector<std::size_t> ks;
  for (std::size_t k : spec.ks) {
    if (k >= 1 && k <= spec.n) ks.push_back(k);
  }
  const auto curve = pass_curve(samples, ks);
  Json pc = Json::array();
  for (std::size_t i = 0; i < ks.size(); ++i) pc.push_back(Json::array({ks[i], curve[i]}));
  j["pass_curve"] = pc;

  bool enumerable = true;
  try {
    enumerate_space(policy, budget);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BudgetExceeded) throw;
    enumerable = false;
  }
  if (enumerable) {
    j["pass1_exact"] = exact_pass1(policy, task, budget);
    j["coverage"] = exact_support_coverage(policy, task, budget);
    CompensatedSum h;
    for (ContextId c = 0; c < task.context_count(); ++c) h.add(sequence_entropy_exact(policy, c, budget));
    j["entropy_exact"] = h.value() / static_cast<double>(task.context_count());
  }

  Json div;
  div["unigram"] = diversity_json(mean_diversity(samples, unigram_extractor(policy)));
  div["bigram"] = diversity_json(mean_diversity(samples, bigram_extractor(policy)));
  j["diversity"] = div;

  Json per = Json::array();
  for (const auto& s : samples) {
    Json c;
    c["context"] = task.base.contexts().at(s.context);
    c["n"] = s.n();
    c["c"] = s.c();
    const double acc = static_cast<double>(s.c()) / static_cast<double>(s.n());
    c["accuracy"] = acc;
    c["difficulty"] = std::string(to_string(classify_difficulty(acc)));
    per.push_back(c);
  }
  j["per_context"] = per;

  const auto m = difficulty_transition(base_samples, samples);
  Json tm = Json::array();
  for (const auto& row : m) tm.push_back(Json(std::vector<std::size_t>(row.begin(), row.end())));
  j["transition_matrix"] = tm;
  j["transition_from"] = "base";
  return j;
}

}  // namespace dmvr
