#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmvr/divergence.hpp"
#include "dmvr/evaluation.hpp"
#include "dmvr/json_io.hpp"
#include "dmvr/task.hpp"
#include "dmvr/trainers.hpp"

namespace dmvr {

/// Variants x seeds grid over one task. The seed list overrides each
/// variant's own seed field.
struct ExperimentPlan {
  std::string task = "skewed-multi-answer";
  std::vector<TrainerConfig> variants;
  EvalSpec eval;
  std::vector<std::uint64_t> seeds = {0};
  std::filesystem::path out_dir = "out";

  Json to_json() const;
  /// Accepts "variants": [...] and/or "alpha_grid": {"base": {...},
  /// "alphas": [...]}, which appends one alpha_dpg variant per alpha.
  /// A relative task path is resolved against `base_dir`.
  static ExperimentPlan from_json(const Json& j, const std::filesystem::path& base_dir = {});
};

struct RunArtifact {
  std::string run_id;
  std::filesystem::path dir;
  TrainerConfig config;
  bool reused = false;
  /// Non-empty when the run failed; its directory then holds error.txt only.
  std::string error;
  Json manifest;
};

struct RunOptions {
  /// Concurrent runs.
  int workers = 1;
  bool force = false;
  std::size_t budget = kDefaultOutcomeBudget;
};

/// Content hash of the resolved task definition, variants, eval spec and seeds.
std::string plan_hash(const ExperimentPlan& plan, const Task& task);
/// Content hash of (task definition, config with seed, eval spec).
std::string run_id(const Task& task, const TrainerConfig& config, const EvalSpec& eval);

/// Trains and evaluates every (variant, seed) into
/// out_dir/<plan-hash>/<run-id>/{manifest.json, runlog.csv, checkpoint.json,
/// eval.json}. Runs whose manifest already exists are reused unless forced.
/// A failing run is reported in its artifact and leaves the others intact.
std::vector<RunArtifact> run_plan(const ExperimentPlan& plan, const RunOptions& options = {});

/// Runs found under a plan directory, in run-id order.
std::vector<RunArtifact> load_artifacts(const std::filesystem::path& plan_dir);

/// Writes the figure bundles into out_dir and returns the written paths.
/// MissingReport when an artifact has no eval report.
std::vector<std::filesystem::path> emit_figures(const std::vector<RunArtifact>& artifacts,
                                                const std::filesystem::path& out_dir);

/// Static plan checks; empty when the plan is runnable. Never throws.
std::vector<std::string> validate_plan(const ExperimentPlan& plan, std::size_t budget = kDefaultOutcomeBudget);

/// Target p = (0.5, 0, 0.5) and the three reference policies used for the
/// alpha-sweep curves.
struct ToyTriple {
  Distribution target;
  std::vector<NamedDistribution> policies;
};
ToyTriple toy_alpha_triple();
/// 0, 0.01, ..., 1 plus 0.999.
std::vector<double> default_alpha_grid();

}  // namespace dmvr
