// dmvr: command-line front end for training, evaluation, sweeps and figure data.
//
// Exit codes: 0 success, 1 validation failure, 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dmvr/divergence.hpp"
#include "dmvr/errors.hpp"
#include "dmvr/evaluation.hpp"
#include "dmvr/json_io.hpp"
#include "dmvr/oracle.hpp"
#include "dmvr/runner.hpp"
#include "dmvr/task.hpp"
#include "dmvr/trainers.hpp"

namespace fs = std::filesystem;
using namespace dmvr;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 1;
  bool force = false;
};

fs::path out_root(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("DMVR_OUT"); env && *env) return env;
  return "out";
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
    std::cerr << "wrote " << out << '\n';
  }
}

int report_runs(const std::vector<RunArtifact>& runs) {
  int failed = 0;
  for (const auto& r : runs) {
    if (!r.error.empty()) {
      std::cerr << "run " << r.run_id << " failed: " << r.error << '\n';
      ++failed;
    } else {
      std::cout << r.run_id << (r.reused ? " reused " : " done ") << r.dir.string() << '\n';
    }
  }
  return failed ? kRuntime : kOk;
}

ExperimentPlan load_plan(const Common& c) {
  if (c.config.empty()) throw Error(ErrorCode::InvalidConfig, "--config <plan.json> is required");
  auto plan = ExperimentPlan::from_json(read_json_file(c.config), fs::path(c.config).parent_path());
  if (c.seed) plan.seeds = {*c.seed};
  if (!c.out.empty() || !plan.out_dir.is_absolute()) {
    if (!c.out.empty() || std::getenv("DMVR_OUT")) plan.out_dir = out_root(c);
  }
  return plan;
}

void add_common(CLI::App* app, Common& c, bool with_config = true) {
  if (with_config) app->add_option("--config", c.config, "JSON config file");
  app->add_option("--seed", c.seed, "Random seed");
  app->add_option("--out", c.out, "Output location (defaults to $DMVR_OUT, then ./out)");
  app->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  app->add_flag("--force", c.force, "Recompute completed runs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributional matching with verifiable rewards: desk-scale lab"};
  app.require_subcommand(1);

  Common train_c, eval_c, sweep_c, curves_c, fig_c, val_c, dump_c;
  std::string train_task = "skewed-multi-answer";
  std::string eval_task = "skewed-multi-answer", eval_checkpoint;
  std::size_t eval_n = 256;
  std::string dump_task = "skewed-multi-answer", dump_context;

  auto* train_cmd = app.add_subcommand("train", "Train one configuration and evaluate it");
  add_common(train_cmd, train_c);
  train_cmd->add_option("--task", train_task, "Built-in task name or task JSON file");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval_cmd, eval_c, false);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint.json")->required();
  eval_cmd->add_option("--task", eval_task, "Built-in task name or task JSON file");
  eval_cmd->add_option("--n", eval_n, "Samples per context")->check(CLI::PositiveNumber);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment plan and emit its figure data");
  add_common(sweep_cmd, sweep_c);

  auto* curves_cmd = app.add_subcommand("alpha-curves", "Alpha-divergence sweep CSV");
  add_common(curves_cmd, curves_c);

  auto* fig_cmd = app.add_subcommand("figures", "Figure bundles from a completed plan directory");
  add_common(fig_cmd, fig_c, false);
  std::string fig_dir;
  fig_cmd->add_option("--plan-dir", fig_dir, "out/<plan-hash> directory")->required();

  auto* val_cmd = app.add_subcommand("validate", "Static checks on an experiment plan");
  add_common(val_cmd, val_c);

  auto* dump_cmd = app.add_subcommand("oracle-dump", "Enumerated (y, pi_base, v, p_x) table as CSV");
  add_common(dump_cmd, dump_c, false);
  dump_cmd->add_option("--task", dump_task, "Built-in task name or task JSON file");
  dump_cmd->add_option("--context", dump_context, "Context name (default: first)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*train_cmd) {
      ExperimentPlan plan;
      plan.task = train_task;
      plan.variants = {train_c.config.empty() ? TrainerConfig{} : TrainerConfig::from_json(read_json_file(train_c.config))};
      plan.seeds = {train_c.seed.value_or(plan.variants.front().seed)};
      plan.out_dir = out_root(train_c);
      for (const auto& d : validate_plan(plan)) {
        std::cerr << "invalid: " << d << '\n';
        return kInvalid;
      }
      return report_runs(run_plan(plan, RunOptions{1, train_c.force}));
    }
    if (*eval_cmd) {
      const auto task = resolve_task(eval_task);
      const auto policy = TabularPolicy::from_checkpoint(read_json_file(eval_checkpoint));
      EvalSpec spec;
      spec.n = eval_n;
      spec.seed = eval_c.seed.value_or(0);
      const auto report =
          evaluate_policy(fs::path(eval_checkpoint).parent_path().filename().string(), policy, task, spec, eval_c.workers);
      emit(dump_json(report) + '\n', eval_c.out);
      return kOk;
    }
    if (*sweep_cmd) {
      const auto plan = load_plan(sweep_c);
      const auto diags = validate_plan(plan);
      for (const auto& d : diags) std::cerr << "invalid: " << d << '\n';
      if (!diags.empty()) return kInvalid;
      const auto runs = run_plan(plan, RunOptions{sweep_c.workers, sweep_c.force});
      const int status = report_runs(runs);
      if (status == kOk && !runs.empty()) {
        const auto dir = runs.front().dir.parent_path() / "figures";
        for (const auto& p : emit_figures(runs, dir)) std::cout << "figure " << p.string() << '\n';
      }
      return status;
    }
    if (*curves_cmd) {
      if (curves_c.config.empty()) {
        const auto toy = toy_alpha_triple();
        emit(alpha_sweep_csv(toy.policies, toy.target, default_alpha_grid()), curves_c.out);
        return kOk;
      }
      // {"target": [...], "policies": {"id": [...]}, "alphas": [...]}
      const auto j = read_json_file(curves_c.config);
      const auto target_probs = j.at("target").get<std::vector<double>>();
      const auto space = make_labelled_space(target_probs.size());
      const Distribution target(space, target_probs);
      std::vector<NamedDistribution> policies;
      for (const auto& [id, probs] : j.at("policies").items()) {
        policies.push_back({id, Distribution(space, probs.get<std::vector<double>>())});
      }
      std::vector<double> alphas = default_alpha_grid();
      if (j.contains("alphas")) {
        alphas.clear();
        for (const auto& a : j.at("alphas")) alphas.push_back(json_to_double(a));
      }
      emit(alpha_sweep_csv(policies, target, alphas), curves_c.out);
      return kOk;
    }
    if (*fig_cmd) {
      const auto runs = load_artifacts(fig_dir);
      const fs::path dest = fig_c.out.empty() ? fs::path(fig_dir) / "figures" : fs::path(fig_c.out);
      for (const auto& p : emit_figures(runs, dest)) std::cout << "figure " << p.string() << '\n';
      return kOk;
    }
    if (*val_cmd) {
      const auto plan = load_plan(val_c);
      const auto diags = validate_plan(plan);
      for (const auto& d : diags) std::cout << d << '\n';
      if (diags.empty()) std::cout << "ok\n";
      return diags.empty() ? kOk : kInvalid;
    }
    if (*dump_cmd) {
      const auto task = resolve_task(dump_task);
      const ContextId ctx = dump_context.empty() ? 0 : task.base.context_index(dump_context);
      emit(oracle_dump_csv(enumerate_env(task.base, task.verifier, ctx)), dump_c.out);
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::InvalidConfig ? kInvalid : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
