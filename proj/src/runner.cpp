#include "dmvr/runner.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <sstream>

#include "dmvr/errors.hpp"
#include "dmvr/numeric.hpp"
#include "dmvr/parallel.hpp"

namespace fs = std::filesystem;

namespace dmvr {

Json ExperimentPlan::to_json() const {
  Json j;
  j["task"] = task;
  Json vs = Json::array();
  for (const auto& v : variants) vs.push_back(v.to_json());
  j["variants"] = vs;
  j["eval"] = eval.to_json();
  j["seeds"] = seeds;
  j["out_dir"] = out_dir.string();
  return j;
}

ExperimentPlan ExperimentPlan::from_json(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "plan must be a JSON object");
  ExperimentPlan plan;
  plan.variants.clear();
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "task") {
        plan.task = value.get<std::string>();
      } else if (key == "variants") {
        for (const auto& v : value) plan.variants.push_back(TrainerConfig::from_json(v));
      } else if (key == "alpha_grid") {
        // Handled below so the grid lands after explicit variants.
      } else if (key == "eval") {
        plan.eval = EvalSpec::from_json(value);
      } else if (key == "seeds") {
        plan.seeds = value.get<std::vector<std::uint64_t>>();
      } else if (key == "out_dir") {
        plan.out_dir = value.get<std::string>();
      } else {
        throw Error(ErrorCode::InvalidConfig, "unknown plan key '" + key + "'");
      }
    }
    if (j.contains("alpha_grid")) {
      const auto& grid = j.at("alpha_grid");
      const auto base = TrainerConfig::from_json(grid.value("base", Json::object()));
      for (const auto& a : grid.at("alphas")) {
        auto c = base;
        c.algorithm = Algorithm::alpha_dpg;
        c.alpha = json_to_double(a);
        plan.variants.push_back(c);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad plan value: ") + e.what());
  }
  if (!base_dir.empty() && plan.task.ends_with(".json") && fs::path(plan.task).is_relative()) {
    plan.task = (base_dir / plan.task).string();
  }
  return plan;
}

std::string plan_hash(const ExperimentPlan& plan, const Task& task) {
  Json j;
  j["task"] = task.definition;
  Json vs = Json::array();
  for (const auto& v : plan.variants) vs.push_back(v.to_json());
  j["variants"] = vs;
  j["eval"] = plan.eval.to_json();
  j["seeds"] = plan.seeds;
  return content_hash(dump_json(j, -1));
}

std::string run_id(const Task& task, const TrainerConfig& config, const EvalSpec& eval) {
  Json j;
  j["task"] = task.definition;
  j["config"] = config.to_json();
  j["eval"] = eval.to_json();
  return content_hash(dump_json(j, -1));
}

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

RunArtifact execute_run(const Task& task, const TrainerConfig& config, const EvalSpec& eval, const fs::path& dir,
                        const std::string& id, const std::string& phash, const RunOptions& options) {
  RunArtifact art{id, dir, config, false, {}, {}};
  const auto manifest_path = dir / "manifest.json";
  if (!options.force && fs::exists(manifest_path)) {
    art.reused = true;
    art.manifest = read_json_file(manifest_path);
    return art;
  }
  try {
    fs::remove(manifest_path);
    fs::remove(dir / "error.txt");
    const auto t0 = std::chrono::steady_clock::now();
    const auto log = train(config, task, TrainOptions{1, options.budget});
    const double train_ms = ms_since(t0);
    const auto t1 = std::chrono::steady_clock::now();
    const auto report = evaluate_policy(id, log.final_policy, task, eval, 1, options.budget);
    const double eval_ms = ms_since(t1);

    const auto runlog = runlog_csv(log);
    const auto checkpoint = dump_json(log.final_policy.to_checkpoint());
    const auto eval_text = dump_json(report);
    write_file_atomic(dir / "runlog.csv", runlog);
    write_file_atomic(dir / "timings.csv", runlog_csv(log, true));
    write_file_atomic(dir / "checkpoint.json", checkpoint);
    write_file_atomic(dir / "eval.json", eval_text);

    Json m;
    m["run_id"] = id;
    m["plan_hash"] = phash;
    m["task"] = task.name;
    m["task_hash"] = content_hash(dump_json(task.definition, -1));
    m["config"] = config.to_json();
    m["config_hash"] = content_hash(dump_json(config.to_json(), -1));
    m["seed"] = config.seed;
    m["z_mode"] = std::string(to_string(config.z_mode));
    m["z_used"] = log.z_used;
    m["checkpoint"] = "checkpoint.json";
    Json hashes;
    hashes["runlog.csv"] = content_hash(runlog);
    hashes["checkpoint.json"] = content_hash(checkpoint);
    hashes["eval.json"] = content_hash(eval_text);
    m["hashes"] = hashes;
    // Wall times live outside the manifest so it stays byte-reproducible.
    Json timings;
    timings["train_ms"] = train_ms;
    timings["eval_ms"] = eval_ms;
    write_file_atomic(dir / "timings.json", dump_json(timings));
    // The manifest is written last: its presence marks the run complete.
    write_file_atomic(manifest_path, dump_json(m));
    art.manifest = m;
  } catch (const std::exception& e) {
    art.error = e.what();
    try {
      write_file_atomic(dir / "error.txt", art.error + "\n");
    } catch (...) {
    }
  }
  return art;
}

}  // namespace

std::vector<RunArtifact> run_plan(const ExperimentPlan& plan, const RunOptions& options) {
  if (plan.variants.empty()) return {};
  const auto task = resolve_task(plan.task);
  const auto phash = plan_hash(plan, task);
  const fs::path plan_dir = plan.out_dir / phash;
  fs::create_directories(plan_dir);
  write_file_atomic(plan_dir / "plan.json", dump_json(plan.to_json()));

  struct Job {
    TrainerConfig config;
    std::string id;
  };
  std::vector<Job> jobs;
  for (const auto& v : plan.variants) {
    for (auto seed : plan.seeds) {
      auto c = v;
      c.seed = seed;
      jobs.push_back(Job{c, run_id(task, c, plan.eval)});
    }
  }
  std::vector<RunArtifact> out(jobs.size());
  parallel_for(jobs.size(), options.workers, [&](std::size_t i) {
    out[i] = execute_run(task, jobs[i].config, plan.eval, plan_dir / jobs[i].id, jobs[i].id, phash, options);
  });
  return out;
}

std::vector<RunArtifact> load_artifacts(const fs::path& plan_dir) {
  std::vector<RunArtifact> out;
  if (!fs::is_directory(plan_dir)) throw Error(ErrorCode::IoError, "no such plan directory: " + plan_dir.string());
  for (const auto& entry : fs::directory_iterator(plan_dir)) {
    if (!entry.is_directory()) continue;
    RunArtifact art;
    art.run_id = entry.path().filename().string();
    art.dir = entry.path();
    art.reused = true;
    const auto manifest = entry.path() / "manifest.json";
    if (fs::exists(manifest)) {
      art.manifest = read_json_file(manifest);
      art.config = TrainerConfig::from_json(art.manifest.at("config"));
    } else if (fs::exists(entry.path() / "error.txt")) {
      art.error = read_text_file(entry.path() / "error.txt");
    }
    out.push_back(std::move(art));
  }
  std::sort(out.begin(), out.end(), [](const RunArtifact& a, const RunArtifact& b) { return a.run_id < b.run_id; });
  return out;
}

namespace {

// Missing values (NaN) are written as empty cells.
std::string csv_number(double x) { return std::isnan(x) ? std::string() : format17(x); }

struct SummaryKey {
  std::string algorithm;
  double alpha;
  auto operator<=>(const SummaryKey&) const = default;
};

struct SummaryAcc {
  CompensatedSum pass1, pass_k, pass1_exact, coverage, entropy, reward;
  std::size_t n = 0;
};

}  // namespace

std::vector<fs::path> emit_figures(const std::vector<RunArtifact>& artifacts, const fs::path& out_dir) {
  struct Loaded {
    const RunArtifact* art;
    Json eval;
    std::string runlog;
  };
  std::vector<Loaded> runs;
  for (const auto& a : artifacts) {
    const auto path = a.dir / "eval.json";
    if (!a.error.empty() || !fs::exists(path)) {
      throw Error(ErrorCode::MissingReport, "run " + a.run_id + " has no eval report");
    }
    runs.push_back(Loaded{&a, read_json_file(path), read_text_file(a.dir / "runlog.csv")});
  }

  std::string scatter = "run_id,algorithm,alpha,seed,pass1,pass_k,k,pass1_exact,coverage,on_front\n";
  std::string curves = "run_id,k,pass_at_k\n";
  std::string difficulty = "run_id,from,to,count\n";
  std::string training = "run_id,iteration,reward,entropy,divergence\n";
  std::vector<ParetoPoint> points;
  std::map<SummaryKey, SummaryAcc> summary;
  const char* classes[] = {"easy", "medium", "hard", "unsolved"};

  for (const auto& r : runs) {
    const auto& curve = r.eval.at("pass_curve");
    if (curve.empty()) throw Error(ErrorCode::MissingReport, "run " + r.art->run_id + " has an empty pass curve");
    const double p1 = json_to_double(curve.front().at(1));
    const double pk = json_to_double(curve.back().at(1));
    points.push_back(ParetoPoint{r.art->run_id, p1, pk});
    for (const auto& kv : curve) {
      curves += r.art->run_id + ',' + std::to_string(kv.at(0).get<std::size_t>()) + ',' +
                format17(json_to_double(kv.at(1))) + '\n';
    }
    const auto& tm = r.eval.at("transition_matrix");
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t k = 0; k < 4; ++k) {
        difficulty += r.art->run_id + ',' + classes[i] + ',' + classes[k] + ',' +
                      std::to_string(tm.at(i).at(k).get<std::size_t>()) + '\n';
      }
    }
    std::istringstream lines(r.runlog);
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
      if (!line.empty()) training += r.art->run_id + ',' + line + '\n';
    }
  }
  const auto front = pareto_front(points);

  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    const auto& c = r.art->config;
    const auto& curve = r.eval.at("pass_curve");
    const bool on_front = std::find(front.begin(), front.end(), r.art->run_id) != front.end();
    const double p1x = r.eval.contains("pass1_exact") ? json_to_double(r.eval.at("pass1_exact")) : kNaN;
    const double cov = r.eval.contains("coverage") ? json_to_double(r.eval.at("coverage")) : kNaN;
    const double ent = r.eval.contains("entropy_exact") ? json_to_double(r.eval.at("entropy_exact")) : kNaN;
    const double alpha = c.algorithm == Algorithm::alpha_dpg ? c.alpha : kNaN;
    scatter += r.art->run_id + ',' + std::string(to_string(c.algorithm)) + ',' + csv_number(alpha) + ',' +
               std::to_string(c.seed) + ',' + format17(points[i].pass1) + ',' + format17(points[i].pass_k) + ',' +
               std::to_string(curve.back().at(0).get<std::size_t>()) + ',' + csv_number(p1x) + ',' + csv_number(cov) +
               ',' + (on_front ? "1" : "0") + '\n';
    auto& acc = summary[SummaryKey{std::string(to_string(c.algorithm)), alpha}];
    acc.pass1.add(points[i].pass1);
    acc.pass_k.add(points[i].pass_k);
    acc.pass1_exact.add(p1x);
    acc.coverage.add(cov);
    acc.entropy.add(ent);
    ++acc.n;
  }

  std::string sum = "algorithm,alpha,runs,pass1,pass_k,pass1_exact,coverage,entropy_exact\n";
  for (const auto& [key, acc] : summary) {
    const double n = static_cast<double>(acc.n);
    sum += key.algorithm + ',' + csv_number(key.alpha) + ',' + std::to_string(acc.n) + ',' +
           format17(acc.pass1.value() / n) + ',' + format17(acc.pass_k.value() / n) + ',' +
           csv_number(acc.pass1_exact.value() / n) + ',' + csv_number(acc.coverage.value() / n) + ',' +
           csv_number(acc.entropy.value() / n) + '\n';
  }

  const auto toy = toy_alpha_triple();
  const auto sweep = alpha_sweep_csv(toy.policies, toy.target, default_alpha_grid());

  Json pareto;
  pareto["front"] = front;
  Json pts = Json::array();
  for (const auto& p : points) {
    Json q;
    q["run_id"] = p.id;
    q["pass1"] = p.pass1;
    q["pass_k"] = p.pass_k;
    pts.push_back(q);
  }
  pareto["points"] = pts;

  const std::vector<std::pair<std::string, std::string>> files = {
      {"precision_coverage.csv", scatter}, {"pareto.json", dump_json(pareto)}, {"pass_curves.csv", curves},
      {"difficulty.csv", difficulty},      {"training_curves.csv", training},  {"summary.csv", sum},
      {"alpha_sweep.csv", sweep}};
  std::vector<fs::path> written;
  for (const auto& [name, text] : files) {
    write_file_atomic(out_dir / name, text);
    written.push_back(out_dir / name);
  }
  return written;
}

std::vector<std::string> validate_plan(const ExperimentPlan& plan, std::size_t budget) {
  std::vector<std::string> out;
  try {
    const auto task = resolve_task(plan.task);
    bool enumerable = true;
    try {
      enumerate_space(task.base, budget);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BudgetExceeded) throw;
      enumerable = false;
    }
    for (std::size_t i = 0; i < plan.variants.size(); ++i) {
      for (const auto& d : plan.variants[i].diagnostics()) out.push_back("variant " + std::to_string(i) + ": " + d);
      if (!enumerable && plan.variants[i].z_mode == ZMode::exact) {
        out.push_back("variant " + std::to_string(i) + ": z_mode exact needs an enumerable task (budget " +
                      std::to_string(budget) + ")");
      }
    }
  } catch (const std::exception& e) {
    out.push_back(std::string("task: ") + e.what());
  }
  if (plan.eval.n == 0) out.push_back("eval: n must be positive");
  for (std::size_t k : plan.eval.ks) {
    if (k == 0) out.push_back("eval: k must be positive");
    else if (k > plan.eval.n) out.push_back("eval: k exceeds n (k=" + std::to_string(k) + ", n=" + std::to_string(plan.eval.n) + ")");
  }
  if (plan.seeds.empty() && !plan.variants.empty()) out.push_back("seeds: at least one seed is required");
  return out;
}

ToyTriple toy_alpha_triple() {
  auto space = make_labelled_space(3);
  ToyTriple t{Distribution(space, {0.5, 0.0, 0.5}), {}};
  t.policies.push_back({"pi1", Distribution(space, {0.33, 0.34, 0.33})});
  t.policies.push_back({"pi2", Distribution(space, {0.8, 0.1, 0.1})});
  t.policies.push_back({"pi3", Distribution(space, {0.01, 0.1, 0.89})});
  return t;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 100; ++i) grid.push_back(i / 100.0);
  grid.insert(grid.end() - 1, 0.999);
  return grid;
}

}  // namespace dmvr
