#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dmvr/json_io.hpp"
#include "dmvr/policy.hpp"
#include "dmvr/task.hpp"
#include "dmvr/verifier.hpp"

namespace dmvr {

struct ContextSamples {
  ContextId context = 0;
  std::vector<Sequence> sequences;
  std::vector<bool> correct;
  std::size_t n() const noexcept { return sequences.size(); }
  std::size_t c() const noexcept;
};

using SampleSet = std::vector<ContextSamples>;

/// n draws per context from evaluation streams keyed by (seed, context, i).
SampleSet draw_samples(const TabularPolicy& policy, const Verifier& verifier, std::size_t n, std::uint64_t seed,
                       int workers = 1);

/// 1 - C(n-c, k) / C(n, k) as a running product. DomainError unless
/// 0 <= c <= n and 1 <= k <= n.
double pass_at_k(std::size_t n, std::size_t c, std::size_t k);

/// Mean over contexts of pass_at_k, one value per k.
std::vector<double> pass_curve(const SampleSet& samples, std::span<const std::size_t> ks);

enum class DifficultyClass { easy = 0, medium = 1, hard = 2, unsolved = 3 };
std::string_view to_string(DifficultyClass d);
DifficultyClass classify_difficulty(double accuracy);

using TransitionMatrix = std::array<std::array<std::size_t, 4>, 4>;

/// Row = class before, column = class after, order easy, medium, hard,
/// unsolved. ContextMismatch unless both sets cover the same contexts.
TransitionMatrix difficulty_transition(const SampleSet& before, const SampleSet& after);

struct DiversityReport {
  double shannon = 0.0;
  double gini_simpson = 0.0;
  std::size_t richness = 0;
  std::vector<double> abundances;
};

/// EmptyCounts when the total count is zero.
DiversityReport diversity(const std::map<std::string, std::size_t>& counts);

using CategoryExtractor = std::function<std::vector<std::string>(const Sequence&)>;
/// Token names, eos excluded.
CategoryExtractor unigram_extractor(const TabularPolicy& shape);
/// Adjacent token-name pairs, eos excluded.
CategoryExtractor bigram_extractor(const TabularPolicy& shape);
std::map<std::string, std::size_t> category_counts(std::span<const Sequence> sequences,
                                                   const CategoryExtractor& extract);

/// Indices computed per context, then averaged over contexts with at least
/// one category occurrence.
struct DiversitySummary {
  double shannon = 0.0;
  double gini_simpson = 0.0;
  double richness = 0.0;
};
DiversitySummary mean_diversity(const SampleSet& samples, const CategoryExtractor& extract);

struct ParetoPoint {
  std::string id;
  double pass1 = 0.0;
  double pass_k = 0.0;
};

/// Ids not strictly dominated in both coordinates, sorted by pass1
/// descending (ties by pass_k descending, then id).
std::vector<std::string> pareto_front(std::span<const ParetoPoint> points);

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double iqr() const noexcept { return q3 - q1; }
};
/// Linear interpolation between order statistics.
Quartiles quartiles(std::vector<double> values);

struct NamedPolicy {
  std::string id;
  TabularPolicy policy;
};

struct PerplexitySummary {
  std::string id;
  std::vector<double> self_ppl;
  std::vector<double> base_ppl;
  Quartiles self_q;
  Quartiles base_q;
};

/// Draws n samples per model and scores each with the model itself and
/// with `scorer`.
std::vector<PerplexitySummary> perplexity_report(std::span<const NamedPolicy> models, const TabularPolicy& scorer,
                                                 ContextId context, std::size_t n, std::uint64_t seed);

struct EvalSpec {
  std::size_t n = 256;
  std::vector<std::size_t> ks = {1, 2, 4, 8, 16, 32, 64, 128, 256};
  std::uint64_t seed = 0;

  Json to_json() const;
  static EvalSpec from_json(const Json& j);
};

/// Accepted sequences whose policy probability is at least
/// 1 / (10 |accepted set|), summed over contexts.
std::size_t exact_support_coverage(const TabularPolicy& policy, const Task& task,
                                   std::size_t budget = kDefaultOutcomeBudget);

/// Mean over contexts of the exact probability of acceptance.
double exact_pass1(const TabularPolicy& policy, const Task& task, std::size_t budget = kDefaultOutcomeBudget);

/// Full evaluation of one policy: sampled pass@k curve, exact pass@1,
/// coverage and entropy, diversity, per-context accuracy and the difficulty
/// transition from the base model.
Json evaluate_policy(const std::string& model_id, const TabularPolicy& policy, const Task& task,
                     const EvalSpec& spec, int workers = 1, std::size_t budget = kDefaultOutcomeBudget);

}  // namespace dmvr
