#include "mrss/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <tuple>

#include "mrss/error.hpp"

#ifndef MRSS_VERSION
#define MRSS_VERSION "dev"
#endif

namespace mrss {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::vector<CurvePoint> reward_curve(const std::vector<RoundRecord>& rounds) {
  std::vector<CurvePoint> c;
  for (const auto& r : rounds) c.push_back({r.env_steps, r.mean_reward});
  return c;
}

std::vector<double> moving_average(std::span<const CurvePoint> curve, int window) {
  if (window < 1) throw InvalidArgument("window must be >= 1");
  std::vector<double> ma(curve.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    sum += curve[i].value;
    if (i >= std::size_t(window)) sum -= curve[i - window].value;
    ma[i] = sum / double(std::min<std::size_t>(i + 1, window));
  }
  return ma;
}

std::optional<long long> convergence_steps(std::span<const CurvePoint> curve, int window,
                                           double fraction) {
  if (curve.empty()) throw InvalidArgument("convergence of an empty curve");
  if (!(fraction > 0 && fraction <= 1)) throw InvalidArgument("fraction must lie in (0,1]");
  const auto ma = moving_average(curve, window);
  const double plateau = ma.back();
  if (!(plateau > 0)) return std::nullopt;
  const double level = fraction * plateau;
  std::size_t first = ma.size() - 1;
  while (first > 0 && ma[first - 1] >= level) --first;
  return curve[first].steps;
}

std::optional<long long> steps_to_target(std::span<const CurvePoint> curve, double target,
                                         int window) {
  const auto ma = moving_average(curve, window);
  for (std::size_t i = 0; i < ma.size(); ++i)
    if (ma[i] >= target) return curve[i].steps;
  return std::nullopt;
}

StopRule target_stop(double target, int window) {
  return [target, window](const std::vector<RoundRecord>& rounds) {
    const auto c = reward_curve(rounds);
    return moving_average(c, window).back() >= target;
  };
}

MetricsRecord metrics_record(const std::string& method, std::uint64_t seed, int task, int round,
                             const RoundRecord& r) {
  MetricsRecord m;
  m.method = method;
  m.seed = seed;
  m.task = task;
  m.round = round;
  m.env_steps = r.env_steps;
  m.mean_reward = r.mean_reward;
  m.kind_reward = r.kind_reward;
  m.success_rate = r.success_rate;
  m.loss = r.stats.policy_loss;
  return m;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

}  // namespace

struct MetricsWriter::Impl {
  std::ofstream metrics;
  std::ofstream timing;
  std::map<std::tuple<std::string, std::uint64_t, int>, long long> last;
};

MetricsWriter::MetricsWriter(const std::string& dir) : impl_(std::make_shared<Impl>()) {
  impl_->metrics = open_out(fs::path(dir) / "metrics.csv");
  impl_->timing = open_out(fs::path(dir) / "timing.csv");
  impl_->metrics << "method,seed,task,round,env_steps,mean_reward,reward_wheeled,"
                    "reward_quadcopter,success_rate,loss\n";
  impl_->timing << "method,seed,task,round,env_steps,wall_clock_s\n";
}

void MetricsWriter::append(const MetricsRecord& r) {
  auto key = std::make_tuple(r.method, r.seed, r.task);
  auto it = impl_->last.find(key);
  if (it != impl_->last.end() && r.env_steps <= it->second)
    throw std::logic_error("metrics rows must increase in env steps within (method, seed, task)");
  impl_->last[key] = r.env_steps;
  impl_->metrics << r.method << ',' << r.seed << ',' << r.task << ',' << r.round << ','
                 << r.env_steps << ',' << num(r.mean_reward) << ',' << num(r.kind_reward[0]) << ','
                 << num(r.kind_reward[1]) << ',' << num(r.success_rate) << ',' << num(r.loss)
                 << '\n';
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", r.wall_clock);
  impl_->timing << r.method << ',' << r.seed << ',' << r.task << ',' << r.round << ','
                << r.env_steps << ',' << buf << '\n';
}

void MetricsWriter::flush() {
  impl_->metrics.flush();
  impl_->timing.flush();
  if (!impl_->metrics || !impl_->timing) throw std::runtime_error("failed writing metrics");
}

TaskSpec four_cube_scene(const Roster& roster, int edge) {
  if (edge < 2) throw InvalidArgument("cube edge must be >= 2");
  const int e = edge;
  TaskSpec t;
  t.arena = {{0, 0, 0}, {5.0 * e, 5.0 * e, e + 2.0}};
  for (Int3 o : {Int3{e, e, 0}, Int3{3 * e, e, 0}, Int3{e, 3 * e, 0}, Int3{3 * e, 3 * e, 0}}) {
    ObjectDesc d;
    d.origin = o;
    d.edge = e;
    d.shape = ShapeKind::Cube;
    d.parts = {Cuboid{{0, 0, 0}, {e, e, e}}};
    t.objects.push_back(d);
  }
  const int n = roster.size();
  const double c = 2.5 * e, r = e / 3.0;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    SpawnPose s;
    s.kind = roster.kind_of(i);
    s.position = {c + r * std::cos(a), c + r * std::sin(a),
                  s.kind == RobotKind::Wheeled ? 0.0 : 1.5};
    s.yaw = a;
    t.spawns.push_back(s);
  }
  t.validate();
  return t;
}

TaskSpec ablation_scene(const RunConfig& cfg, const Roster& roster) {
  switch (cfg.ablation.scene) {
    case AblationScene::Desk: return four_cube_scene(roster, 2);
    case AblationScene::Full: return four_cube_scene(roster, 6);
    case AblationScene::Task: break;
  }
  UncertaintyConfig dist = cfg.test_distribution();
  dist.roster = roster;
  return test_task(dist, 0);
}

CurveStats curve_stats(const ArmCurves& arm, std::span<const long long> grid) {
  if (arm.trials.empty()) throw InvalidArgument("arm has no trials");
  CurveStats s;
  s.grid.assign(grid.begin(), grid.end());
  std::vector<std::vector<double>> v;
  for (const auto& t : arm.trials) v.push_back(resample_curve(t, grid));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    for (const auto& t : v) sum += t[g];
    const double mean = sum / double(v.size());
    double sq = 0.0;
    for (const auto& t : v) sq += (t[g] - mean) * (t[g] - mean);
    s.mean.push_back(mean);
    s.stddev.push_back(std::sqrt(sq / double(v.size())));
  }
  return s;
}

std::string hyperparameter_header(const RunConfig& cfg) {
  const auto& t = cfg.train.trainer;
  std::ostringstream os;
  os << "# I=" << cfg.meta.iterations << " tau=" << cfg.meta.tasks_per_batch
     << " K=" << cfg.train.trajectories << " beta=" << num(t.entropy_coef)
     << " epsilon=" << num(t.clip) << " lambda=" << num(t.gae_lambda) << " epoch=" << t.epochs
     << " gamma=" << num(t.gamma) << " lr=" << num(t.learning_rate)
     << " minibatch=" << t.minibatch << " horizon=" << cfg.train.episode.horizon
     << " dt=" << num(cfg.train.episode.dt);
  return os.str();
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& outputs) {
  nlohmann::json m = {{"version", MRSS_VERSION},
                      {"command", command},
                      {"seed", cfg.seed},
                      {"config", to_json(cfg)},
                      {"outputs", outputs}};
  auto os = open_out(fs::path(cfg.out) / "manifest.json");
  os << m.dump(2) << '\n';
  if (!os) throw std::runtime_error("failed writing manifest");
}

namespace {

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

std::uint64_t task_seed(std::uint64_t seed, int task) {
  return derive_seed(seed, {kStreamHarness, std::uint64_t(task)});
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Observes training progress through the stop-rule hook so each round gets a
// wall-clock stamp.
StopRule stamp_rounds(std::vector<double>& stamps, Clock::time_point t0) {
  return [&stamps, t0](const std::vector<RoundRecord>&) {
    stamps.push_back(seconds_since(t0));
    return false;
  };
}

void append_curve(MetricsWriter& w, const std::string& method, std::uint64_t seed, int task,
                  const std::vector<RoundRecord>& curve, const std::vector<double>& stamps) {
  for (std::size_t r = 0; r < curve.size(); ++r) {
    auto m = metrics_record(method, seed, task, int(r), curve[r]);
    m.wall_clock = r < stamps.size() ? stamps[r] : 0.0;
    w.append(m);
  }
}

void save_team(const fs::path& p, const TeamParams& team) {
  auto os = open_out(p);
  os << "mrss-team 1\n";
  for (int k = 0; k < kKindCount; ++k) {
    os << "kind " << k << "\n";
    write_params(os, team.by_kind[k]);
  }
  os << "end\n";
  if (!os) throw std::runtime_error("failed writing " + p.string());
}

TeamParams load_policy(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string head;
  is >> head;
  is.seekg(0);
  if (head == "mrss-meta") return read_meta_state(is).params;
  if (head != "mrss-team") throw ParseError(1, path + " is neither a meta checkpoint nor a team file");
  TeamParams team;
  std::string tok;
  is >> tok >> tok;
  for (int k = 0; k < kKindCount; ++k) {
    int kind = -1;
    if (!(is >> tok >> kind) || tok != "kind" || kind != k) throw ParseError(0, "bad team file");
    team.by_kind[k] = read_params(is);
  }
  if (!(is >> tok) || tok != "end") throw ParseError(0, "bad team file");
  return team;
}

void check_compatible(const TeamParams& team, const RunConfig& cfg, const std::string& what) {
  const TeamParams fresh = init_team(cfg.train, 0);
  for (int k = 0; k < kKindCount; ++k)
    if (fresh.by_kind[k].size() != team.by_kind[k].size() ||
        (!fresh.by_kind[k].empty() && !(fresh.by_kind[k].config() == team.by_kind[k].config())))
      throw ConfigError(what + " does not match the configured roster, scheme and architecture");
}

struct EvalWriter {
  std::ofstream summary;
  std::ofstream episodes;
  explicit EvalWriter(const fs::path& dir)
      : summary(open_out(dir / "eval.csv")), episodes(open_out(dir / "episodes.csv")) {
    summary << "method,seed,task,episodes,mean_reward,reward_wheeled,reward_quadcopter,"
               "success_rate,mean_coverage\n";
    episodes << "method,seed,task,episode,reward,coverage,success,steps,collisions\n";
  }
  void add(const std::string& method, std::uint64_t seed, int task, const EvalResult& r) {
    summary << method << ',' << seed << ',' << task << ',' << r.episodes << ','
            << num(r.mean_reward) << ',' << num(r.kind_reward[0]) << ',' << num(r.kind_reward[1])
            << ',' << num(r.success_rate) << ',' << num(r.mean_coverage) << '\n';
    for (std::size_t e = 0; e < r.per_episode.size(); ++e) {
      const auto& m = r.per_episode[e];
      episodes << method << ',' << seed << ',' << task << ',' << e << ',' << m.total_reward << ','
               << num(m.coverage) << ',' << (m.success ? 1 : 0) << ',' << m.steps << ','
               << m.total_collisions << '\n';
    }
  }
  void close() {
    summary.flush();
    episodes.flush();
    if (!summary || !episodes) throw std::runtime_error("failed writing evaluation results");
  }
};

std::string eval_line(int task, const EvalResult& r) {
  std::ostringstream os;
  os << "task " << task << ": success " << num(r.success_rate) << " mean reward "
     << num(r.mean_reward) << " over " << r.episodes << " episodes";
  return os.str();
}

}  // namespace

void cmd_gen_tasks(const RunConfig& cfg, int n, const std::string& split, std::ostream* log) {
  if (n < 1) throw ConfigError("gen-tasks needs n >= 1");
  if (split != "train" && split != "test") throw ConfigError("split must be train or test");
  write_manifest(cfg, "gen-tasks");
  std::vector<std::string> outputs;
  const fs::path dir = fs::path(cfg.out) / "tasks";
  fs::create_directories(dir);
  for (int i = 0; i < n; ++i) {
    TaskSpec t = split == "train" ? train_task(cfg.tasks, i) : test_task(cfg.test_distribution(), i);
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04d.task", split.c_str(), i);
    save_task((dir / name).string(), t);
    outputs.push_back((fs::path("tasks") / name).string());
  }
  write_manifest(cfg, "gen-tasks", outputs);
  say(log, "wrote " + std::to_string(n) + " " + split + " tasks to " + dir.string());
}

void cmd_train(const RunConfig& cfg, std::ostream* log) {
  if (cfg.method == Method::MetaMrss)
    throw ConfigError("method meta_mrss is trained with meta-train and adapt");
  const std::string method = method_name(cfg.method);
  write_manifest(cfg, "train");
  const auto t0 = Clock::now();
  const fs::path out(cfg.out);
  MetricsWriter metrics(cfg.out);
  EvalWriter evals(out);
  std::vector<std::string> outputs{"metrics.csv", "timing.csv", "eval.csv", "episodes.csv"};
  for (int i = 0; i < cfg.budget.test_tasks; ++i) {
    const TaskSpec task = test_task(cfg.test_distribution(), i);
    const std::uint64_t s = task_seed(cfg.seed, i);
    std::vector<double> stamps;
    MethodResult res;
    switch (cfg.method) {
      case Method::Standard:
        res.train = baseline_standard(task, cfg.train, cfg.budget.train, s, stamp_rounds(stamps, t0));
        res.eval = evaluate(res.train.params, task, cfg.train.episode, cfg.budget.eval_episodes, s);
        break;
      case Method::DomainRand: {
        TaskSampler sampler = [&](int r) { return train_task(cfg.tasks, r); };
        res = baseline_domain_randomization(sampler, task, cfg.train, cfg.budget.train,
                                            cfg.budget.eval_episodes, s);
        break;
      }
      case Method::Transfer: {
        std::vector<TaskSpec> pool;
        for (int j = 0; j < cfg.budget.train_tasks; ++j) pool.push_back(train_task(cfg.tasks, j));
        res = baseline_transfer(pool, task, cfg.train, cfg.budget.pretrain, cfg.budget.train,
                                cfg.budget.eval_episodes, s);
        break;
      }
      case Method::MetaMrss: break;
    }
    append_curve(metrics, method, cfg.seed, i, res.train.curve, stamps);
    metrics.flush();
    evals.add(method, cfg.seed, i, res.eval);
    const std::string params = "params/" + method + "_task" + std::to_string(i) + ".team";
    save_team(out / params, res.train.params);
    outputs.push_back(params);
    say(log, method + " " + eval_line(i, res.eval));
  }
  evals.close();
  write_manifest(cfg, "train", outputs);
}

void cmd_meta_train(const RunConfig& cfg, const std::string& resume, std::ostream* log) {
  const MetaSetup setup = cfg.meta_setup();
  MetaState state = meta_init(setup, cfg.seed);
  if (!resume.empty()) {
    state = load_meta_state(resume);
    check_compatible(state.params, cfg, "checkpoint " + resume);
    if (state.iteration > cfg.meta.iterations)
      throw ConfigError("checkpoint is past the configured number of iterations");
  }
  write_manifest(cfg, "meta-train");
  const fs::path out(cfg.out);
  const fs::path ckdir = out / "checkpoints";
  fs::create_directories(ckdir);
  std::vector<std::string> outputs{"metrics.csv", "timing.csv", "checkpoints/latest.ckpt"};
  std::vector<double> stamps(state.iteration, std::numeric_limits<double>::quiet_NaN());
  const auto t0 = Clock::now();

  // metrics.csv is rebuilt from the state history, so a resumed run writes the
  // same file as an uninterrupted one.
  auto dump_metrics = [&] {
    MetricsWriter w(cfg.out);
    for (int it = 0; it < state.iteration; ++it) {
      MetricsRecord m;
      m.method = "meta_mrss";
      m.seed = cfg.seed;
      m.task = -1;
      m.round = it;
      m.env_steps = state.steps[it];
      m.mean_reward = state.rewards[it];
      m.kind_reward = {std::nan(""), std::nan("")};
      m.success_rate = std::nan("");
      m.loss = state.losses[it];
      m.wall_clock = stamps[it];
      w.append(m);
    }
    w.flush();
  };
  bool wrote = false;
  auto checkpoint = [&] {
    wrote = true;
    char name[64];
    std::snprintf(name, sizeof name, "meta_%05d.ckpt", state.iteration);
    save_meta_state((ckdir / name).string(), state);
    save_meta_state((ckdir / "latest.ckpt").string(), state);
    outputs.push_back((fs::path("checkpoints") / name).string());
    dump_metrics();
    write_manifest(cfg, "meta-train", outputs);
  };

  while (state.iteration < cfg.meta.iterations) {
    meta_step(setup, state, cfg.seed);
    stamps.push_back(seconds_since(t0));
    std::ostringstream line;
    line << "iteration " << state.iteration << " steps " << state.env_steps << " loss "
         << num(state.losses.back()) << " reward " << num(state.rewards.back());
    say(log, line.str());
    if (state.iteration % cfg.meta.checkpoint_every == 0 ||
        state.iteration == cfg.meta.iterations)
      checkpoint();
  }
  if (!wrote) checkpoint();
}

void cmd_adapt(const RunConfig& cfg, const std::string& checkpoint, std::ostream* log) {
  const std::string path = checkpoint.empty() ? cfg.checkpoint : checkpoint;
  if (path.empty()) throw ConfigError("adapt needs a meta checkpoint (--resume or \"checkpoint\")");
  const TeamParams meta = load_policy(path);
  check_compatible(meta, cfg, "checkpoint " + path);
  write_manifest(cfg, "adapt");
  const auto t0 = Clock::now();
  const fs::path out(cfg.out);
  MetricsWriter metrics(cfg.out);
  EvalWriter evals(out);
  std::vector<std::string> outputs{"metrics.csv", "timing.csv", "eval.csv", "episodes.csv"};
  for (int i = 0; i < cfg.budget.test_tasks; ++i) {
    const TaskSpec task = test_task(cfg.test_distribution(), i);
    const std::uint64_t s = task_seed(cfg.seed, i);
    std::vector<double> stamps;
    InnerResult res = adapt(meta, task, cfg.train, cfg.budget.train, s, stamp_rounds(stamps, t0));
    EvalResult ev = evaluate(res.params, task, cfg.train.episode, cfg.budget.eval_episodes, s);
    append_curve(metrics, "meta_mrss", cfg.seed, i, res.curve, stamps);
    metrics.flush();
    evals.add("meta_mrss", cfg.seed, i, ev);
    const std::string params = "params/meta_mrss_task" + std::to_string(i) + ".team";
    save_team(out / params, res.params);
    outputs.push_back(params);
    say(log, "meta_mrss " + eval_line(i, ev));
  }
  evals.close();
  write_manifest(cfg, "adapt", outputs);
}

void cmd_eval(const RunConfig& cfg, const std::string& checkpoint, std::ostream* log) {
  const std::string path = checkpoint.empty() ? cfg.checkpoint : checkpoint;
  TeamParams team;
  std::string label = "untrained";
  if (path.empty()) {
    team = init_team(cfg.train, cfg.seed);
  } else {
    team = load_policy(path);
    check_compatible(team, cfg, "policy " + path);
    label = fs::path(path).stem().string();
  }
  write_manifest(cfg, "eval");
  EvalWriter evals{fs::path(cfg.out)};
  for (int i = 0; i < cfg.budget.test_tasks; ++i) {
    const TaskSpec task = test_task(cfg.test_distribution(), i);
    EvalResult ev =
        evaluate(team, task, cfg.train.episode, cfg.budget.eval_episodes, task_seed(cfg.seed, i));
    evals.add(label, cfg.seed, i, ev);
    say(log, label + " " + eval_line(i, ev));
  }
  evals.close();
  write_manifest(cfg, "eval", {"eval.csv", "episodes.csv"});
}

namespace {

struct Arm {
  std::string name;
  TrainSetup setup;
};

std::vector<long long> arm_grid(const TrainSetup& setup, long long budget) {
  std::vector<long long> grid;
  const long long cost = round_cost(setup);
  for (long long s = cost; s <= budget; s += cost) grid.push_back(s);
  if (grid.empty()) throw ConfigError("ablation.budget is smaller than one training round");
  return grid;
}

// Runs every arm for every trial seed on its scene; all arms share the seeds
// and the step budget.
std::vector<ArmCurves> run_arms(const RunConfig& cfg, const std::vector<Arm>& arms, int trials,
                                MetricsWriter& metrics, Clock::time_point t0, std::ostream* log) {
  for (const auto& a : arms)
    if (round_cost(a.setup) != round_cost(arms.front().setup))
      throw std::logic_error("ablation arms must share the per-round step budget");
  std::vector<ArmCurves> out;
  for (const auto& a : arms) {
    ArmCurves curves{a.name, {}};
    const TaskSpec scene = ablation_scene(cfg, a.setup.roster);
    for (int t = 0; t < trials; ++t) {
      const std::uint64_t s = task_seed(cfg.seed, t);
      std::vector<double> stamps;
      InnerResult r = train_budget(scene, init_team(a.setup, s), a.setup, cfg.ablation.budget, s,
                                   0, stamp_rounds(stamps, t0));
      append_curve(metrics, a.name, s, 0, r.curve, stamps);
      metrics.flush();
      say(log, a.name + " trial " + std::to_string(t) + ": final reward " +
                   num(r.curve.empty() ? 0.0 : r.curve.back().mean_reward));
      curves.trials.push_back(std::move(r.curve));
    }
    out.push_back(std::move(curves));
  }
  return out;
}

void write_comparison(const RunConfig& cfg, const std::vector<ArmCurves>& arms,
                      std::span<const long long> grid) {
  const fs::path out(cfg.out);
  std::vector<CurveStats> stats;
  for (const auto& a : arms) stats.push_back(curve_stats(a, grid));

  auto curves = open_out(out / "curves.csv");
  curves << hyperparameter_header(cfg) << '\n' << "env_steps";
  for (const auto& a : arms) curves << ',' << a.name << "_mean," << a.name << "_std";
  curves << '\n';
  for (std::size_t g = 0; g < grid.size(); ++g) {
    curves << grid[g];
    for (const auto& s : stats) curves << ',' << num(s.mean[g]) << ',' << num(s.stddev[g]);
    curves << '\n';
  }

  auto summary = open_out(out / "summary.csv");
  summary << hyperparameter_header(cfg) << '\n'
          << "arm,trials,final_mean,final_std,converged_trials,median_convergence_steps\n";
  for (std::size_t i = 0; i < arms.size(); ++i) {
    std::vector<long long> conv;
    for (const auto& t : arms[i].trials) {
      const auto c = reward_curve(t);
      if (auto s = convergence_steps(c, cfg.convergence.window, cfg.convergence.fraction))
        conv.push_back(*s);
    }
    std::sort(conv.begin(), conv.end());
    summary << arms[i].name << ',' << arms[i].trials.size() << ',' << num(stats[i].mean.back())
            << ',' << num(stats[i].stddev.back()) << ',' << conv.size() << ','
            << (conv.empty() ? std::string("none") : std::to_string(conv[conv.size() / 2]))
            << '\n';
  }
  if (!curves || !summary) throw std::runtime_error("failed writing comparison outputs");
}

}  // namespace

void cmd_ablate(const RunConfig& cfg, Ablation which, std::ostream* log) {
  const std::string command = "ablate " + ablation_name(which);
  write_manifest(cfg, command);
  const auto t0 = Clock::now();
  MetricsWriter metrics(cfg.out);
  const fs::path out(cfg.out);
  std::vector<Arm> arms;

  if (which == Ablation::CommSchemes) {
    for (int k = 1; k <= 7; ++k) {
      Arm a{"scheme" + std::to_string(k), cfg.train};
      a.setup.episode.scheme = scheme_from_index(k);
      arms.push_back(a);
    }
    const auto grid = arm_grid(cfg.train, cfg.ablation.budget);
    auto runs = run_arms(cfg, arms, 1, metrics, t0, log);
    auto table = open_out(out / "comm_schemes.csv");
    table << "scheme,wheeled_positions,wheeled_velocity,quad_positions,quad_velocity,converged,"
             "convergence_steps,final_reward\n";
    for (int k = 1; k <= 7; ++k) {
      const CommScheme s = scheme_from_index(k);
      const auto c = reward_curve(runs[k - 1].trials[0]);
      const auto conv = convergence_steps(c, cfg.convergence.window, cfg.convergence.fraction);
      table << k << ',' << s.wheeled_positions << ',' << s.wheeled_velocity << ','
            << s.quad_positions << ',' << s.quad_velocity << ',' << (conv ? "yes" : "no") << ','
            << (conv ? std::to_string(*conv) : std::string("not converged")) << ','
            << num(moving_average(c, cfg.convergence.window).back()) << '\n';
    }
    if (!table) throw std::runtime_error("failed writing comm_schemes.csv");
    write_comparison(cfg, runs, grid);
    write_manifest(cfg, command,
                   {"metrics.csv", "timing.csv", "comm_schemes.csv", "curves.csv", "summary.csv"});
    return;
  }

  if (which == Ablation::HeteroVsHomo) {
    for (auto [name, roster] : {std::pair{"2w+2q", Roster{2, 2}}, std::pair{"4q", Roster{0, 4}}}) {
      Arm a{name, cfg.train};
      a.setup.roster = roster;
      arms.push_back(a);
    }
  } else {
    for (Variant v : {Variant::Poca, Variant::Ppo}) {
      Arm a{v == Variant::Poca ? "poca" : "ppo", cfg.train};
      a.setup.trainer.variant = v;
      arms.push_back(a);
    }
  }
  const auto grid = arm_grid(cfg.train, cfg.ablation.budget);
  auto runs = run_arms(cfg, arms, cfg.ablation.trials, metrics, t0, log);
  write_comparison(cfg, runs, grid);
  write_manifest(cfg, command, {"metrics.csv", "timing.csv", "curves.csv", "summary.csv"});
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e)) return 2;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  return 1;
}

}  // namespace mrss
