#include "mrss/meta.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>
#include <sstream>

#include "mrss/error.hpp"

namespace mrss {

void MetaConfig::validate() const {
  if (iterations < 1) throw InvalidArgument("meta iterations must be >= 1");
  if (tasks_per_batch < 1) throw InvalidArgument("tasks_per_batch must be >= 1");
  if (trajectories < 1) throw InvalidArgument("meta trajectories must be >= 1");
  if (inner_rounds < 0) throw InvalidArgument("inner_rounds must be >= 0");
  if (outer_lr < 0) throw InvalidArgument("outer_lr must be >= 0");
  if (max_grad_norm < 0) throw InvalidArgument("max_grad_norm must be >= 0");
  if (task_pool < 0) throw InvalidArgument("task_pool must be >= 0");
  if (checkpoint_every < 1) throw InvalidArgument("checkpoint_every must be >= 1");
  if (workers < 1) throw InvalidArgument("workers must be >= 1");
}

namespace {

TaskSpec split_task(const UncertaintyConfig& dist, int split, int index) {
  if (index < 0) throw InvalidArgument("task index must be >= 0");
  UncertaintyConfig c = dist;
  c.seed = derive_seed(dist.seed, {kStreamTasks, std::uint64_t(split), std::uint64_t(index)});
  return sample_task(c);
}

TrainSetup inner_setup(const MetaSetup& s) {
  TrainSetup t = s.train;
  t.trajectories = s.meta.trajectories;
  return t;
}

}  // namespace

TaskSpec train_task(const UncertaintyConfig& dist, int index) { return split_task(dist, 0, index); }
TaskSpec test_task(const UncertaintyConfig& dist, int index) { return split_task(dist, 1, index); }

MetaState meta_init(const MetaSetup& setup, std::uint64_t seed) {
  setup.meta.validate();
  MetaState s;
  s.params = init_team(setup.train, seed);
  return s;
}

TaskSeeds meta_task_seeds(std::uint64_t seed, int iteration, int task_index) {
  const std::uint64_t it = std::uint64_t(iteration), ti = std::uint64_t(task_index);
  return {derive_seed(seed, {kStreamRounds, it, ti}), derive_seed(seed, {kStreamValidation, it, ti}),
          derive_seed(seed, {kStreamBaseline, it, ti})};
}

std::vector<TaskSpec> meta_batch(const MetaSetup& setup, int iteration, std::uint64_t seed) {
  const MetaConfig& m = setup.meta;
  std::vector<TaskSpec> tasks;
  if (m.task_pool == 0) {
    for (int i = 0; i < m.tasks_per_batch; ++i)
      tasks.push_back(train_task(setup.tasks, iteration * m.tasks_per_batch + i));
    return tasks;
  }
  std::vector<int> ids(m.task_pool);
  std::iota(ids.begin(), ids.end(), 0);
  if (m.tasks_per_batch < m.task_pool) {
    Rng rng(derive_seed(seed, {kStreamMeta, std::uint64_t(iteration)}));
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(m.tasks_per_batch);
    std::sort(ids.begin(), ids.end());
  }
  for (int id : ids) tasks.push_back(train_task(setup.tasks, id));
  return tasks;
}

MetaGradient meta_outer_gradient(const MetaSetup& setup, const TeamParams& theta,
                                 std::span<const TaskSpec> tasks, int iteration,
                                 std::uint64_t seed) {
  if (tasks.empty()) throw InvalidArgument("meta batch is empty");
  const TrainSetup inner = inner_setup(setup);
  struct TaskOutcome {
    BatchGradient g;
    double reward = 0.0;
    long long env_steps = 0;
  };
  auto run_task = [&](std::size_t i) {
    const TaskSeeds seeds = meta_task_seeds(seed, iteration, int(i));
    TaskOutcome r;
    try {
      InnerResult adapted =
          train_inner(tasks[i], theta, inner, setup.meta.inner_rounds, seeds.inner);
      r.env_steps += adapted.env_steps;
      auto episodes = collect(tasks[i], adapted.params, inner, seeds.validation);
      std::vector<RolloutBuffer> buffers;
      for (auto& e : episodes) {
        r.env_steps += e.metrics.steps;
        r.reward += e.metrics.total_reward;
        buffers.push_back(std::move(e.buffer));
      }
      r.reward /= double(episodes.size());
      PreparedBatch batch = prepare_batch(buffers, adapted.params, inner.trainer, seeds.baseline);
      r.g = batch_gradient(batch, adapted.params, inner.trainer);
    } catch (const NumericError& e) {
      throw NumericError("meta iteration " + std::to_string(iteration) + ", task " +
                         std::to_string(i) + ": " + e.what());
    }
    return r;
  };

  // Tasks are independent; results are reduced in task order so the sum does
  // not depend on the worker count.
  std::vector<TaskOutcome> outcomes(tasks.size());
  const std::size_t workers = std::size_t(std::max(1, setup.meta.workers));
  for (std::size_t start = 0; start < tasks.size(); start += workers) {
    const std::size_t end = std::min(tasks.size(), start + workers);
    std::vector<std::future<TaskOutcome>> running;
    for (std::size_t i = start + 1; i < end; ++i)
      running.push_back(std::async(std::launch::async, run_task, i));
    std::exception_ptr err;
    try {
      outcomes[start] = run_task(start);
    } catch (...) {
      err = std::current_exception();
    }
    for (std::size_t i = start + 1; i < end; ++i) {
      try {
        outcomes[i] = running[i - start - 1].get();
      } catch (...) {
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  }

  MetaGradient out;
  for (int k = 0; k < kKindCount; ++k) out.grad[k].assign(theta.by_kind[k].size(), 0.0);
  for (const auto& r : outcomes) {
    out.env_steps += r.env_steps;
    out.reward += r.reward;
    out.loss += r.g.loss;
    for (int k = 0; k < kKindCount; ++k)
      for (std::size_t j = 0; j < r.g.grad[k].size(); ++j) out.grad[k][j] += r.g.grad[k][j];
  }
  const double n = double(tasks.size());
  for (auto& g : out.grad)
    for (double& v : g) v /= n;
  out.loss /= n;
  out.reward /= n;
  return out;
}

void meta_step(const MetaSetup& setup, MetaState& state, std::uint64_t seed) {
  setup.meta.validate();
  const auto tasks = meta_batch(setup, state.iteration, seed);
  MetaGradient g = meta_outer_gradient(setup, state.params, tasks, state.iteration, seed);
  double sq = 0.0;
  for (const auto& gk : g.grad)
    for (double v : gk) sq += v * v;
  const double norm = std::sqrt(sq);
  const double max = setup.meta.max_grad_norm;
  const double scale = (max > 0 && norm > max) ? max / norm : 1.0;
  AdamConfig adam{setup.meta.outer_lr, 0.9, 0.999, 1e-8};
  for (int k = 0; k < kKindCount; ++k) {
    if (state.params.by_kind[k].empty()) continue;
    if (scale != 1.0)
      for (double& v : g.grad[k]) v *= scale;
    adam_step(state.params.by_kind[k].values(), g.grad[k], state.adam[k], adam);
    if (!state.params.by_kind[k].all_finite())
      throw NumericError("meta iteration " + std::to_string(state.iteration) +
                         ": parameters became non-finite");
  }
  state.losses.push_back(g.loss);
  state.rewards.push_back(g.reward);
  state.env_steps += g.env_steps;
  state.steps.push_back(state.env_steps);
  ++state.iteration;
}

MetaState meta_train(const MetaSetup& setup, MetaState state, std::uint64_t seed,
                     const std::function<void(const MetaState&)>& on_iteration) {
  setup.meta.validate();
  while (state.iteration < setup.meta.iterations) {
    meta_step(setup, state, seed);
    if (on_iteration) on_iteration(state);
  }
  return state;
}

namespace {

std::string token(std::istream& is, const char* what) {
  std::string t;
  if (!(is >> t)) throw ParseError(0, std::string("unexpected end of checkpoint, wanted ") + what);
  return t;
}

void expect_token(std::istream& is, const std::string& want) {
  auto t = token(is, want.c_str());
  if (t != want) throw ParseError(0, "expected '" + want + "', got '" + t + "'");
}

long long integer(std::istream& is, const char* what) {
  auto t = token(is, what);
  try {
    std::size_t used = 0;
    long long v = std::stoll(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw ParseError(0, std::string("bad ") + what + ": '" + t + "'");
  }
}

}  // namespace

void write_meta_state(std::ostream& os, const MetaState& s) {
  os << "mrss-meta 1\n";
  os << "iteration " << s.iteration << "\n";
  os << "env_steps " << s.env_steps << "\n";
  write_vector(os, "losses", s.losses);
  write_vector(os, "rewards", s.rewards);
  write_vector(os, "steps", std::vector<double>(s.steps.begin(), s.steps.end()));
  for (int k = 0; k < kKindCount; ++k) {
    os << "kind " << k << "\n";
    write_params(os, s.params.by_kind[k]);
    os << "adam " << s.adam[k].t << "\n";
    write_vector(os, "m", s.adam[k].m);
    write_vector(os, "v", s.adam[k].v);
  }
  os << "end\n";
}

MetaState read_meta_state(std::istream& is) {
  MetaState s;
  expect_token(is, "mrss-meta");
  if (token(is, "version") != "1") throw ParseError(0, "unsupported meta checkpoint version");
  expect_token(is, "iteration");
  s.iteration = int(integer(is, "iteration"));
  expect_token(is, "env_steps");
  s.env_steps = integer(is, "env_steps");
  s.losses = read_vector(is, "losses");
  s.rewards = read_vector(is, "rewards");
  for (double v : read_vector(is, "steps")) s.steps.push_back((long long)v);
  for (int k = 0; k < kKindCount; ++k) {
    expect_token(is, "kind");
    if (integer(is, "kind") != k) throw ParseError(0, "kinds out of order");
    s.params.by_kind[k] = read_params(is);
    expect_token(is, "adam");
    s.adam[k].t = integer(is, "adam step");
    s.adam[k].m = read_vector(is, "m");
    s.adam[k].v = read_vector(is, "v");
  }
  expect_token(is, "end");
  const std::size_t n = std::size_t(std::max(0, s.iteration));
  if (s.iteration < 0 || s.losses.size() != n || s.rewards.size() != n || s.steps.size() != n)
    throw ParseError(0, "history does not match the iteration counter");
  return s;
}

void save_meta_state(const std::string& path, const MetaState& s) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    write_meta_state(os, s);
    if (!os) throw std::runtime_error("failed writing " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move checkpoint into place at " + path);
}

MetaState load_meta_state(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_meta_state(is);
}

EvalResult evaluate(const TeamParams& params, const TaskSpec& task, const EpisodeConfig& cfg,
                    int episodes, std::uint64_t seed) {
  if (episodes < 1) throw InvalidArgument("evaluation needs at least one episode");
  EvalResult r;
  r.episodes = episodes;
  const Scene fresh(task);
  for (int e = 0; e < episodes; ++e) {
    auto res = run_episode(fresh, params, cfg, derive_seed(seed, {kStreamEval, std::uint64_t(e)}));
    r.mean_reward += res.metrics.total_reward;
    r.mean_coverage += res.metrics.coverage;
    for (int k = 0; k < kKindCount; ++k) r.kind_reward[k] += res.metrics.kind_reward(RobotKind(k));
    r.per_episode.push_back(res.metrics);
  }
  r.mean_reward /= episodes;
  r.mean_coverage /= episodes;
  for (auto& v : r.kind_reward) v /= episodes;
  r.success_rate = success_rate(r.per_episode);
  return r;
}

InnerResult adapt(const TeamParams& meta, const TaskSpec& task, const TrainSetup& setup,
                  long long budget, std::uint64_t seed, const StopRule& stop) {
  if (budget < 1) throw InvalidArgument("adaptation budget must be >= 1");
  return train_budget(task, meta, setup, budget, seed, 0, stop);
}

InnerResult baseline_standard(const TaskSpec& task, const TrainSetup& setup, long long budget,
                              std::uint64_t seed, const StopRule& stop) {
  return train_budget(task, init_team(setup, seed), setup, budget, seed, 0, stop);
}

MethodResult baseline_domain_randomization(const TaskSampler& tasks, const TaskSpec& test,
                                           const TrainSetup& setup, long long budget,
                                           int eval_episodes, std::uint64_t seed) {
  MethodResult r;
  r.train = train_budget(tasks, init_team(setup, seed), setup, budget, seed);
  r.eval = evaluate(r.train.params, test, setup.episode, eval_episodes, seed);
  return r;
}

MethodResult baseline_transfer(std::span<const TaskSpec> train_tasks, const TaskSpec& test,
                               const TrainSetup& setup, long long pretrain_budget,
                               long long finetune_budget, int eval_episodes, std::uint64_t seed) {
  if (train_tasks.empty()) throw InvalidArgument("transfer needs at least one training task");
  std::vector<TaskSpec> pool(train_tasks.begin(), train_tasks.end());
  TaskSampler pooled = [&pool](int round) { return pool[std::size_t(round) % pool.size()]; };
  InnerResult pre = train_budget(pooled, init_team(setup, seed), setup, pretrain_budget,
                                 derive_seed(seed, {kStreamPretrain}));
  MethodResult r;
  r.pretrain_steps = pre.env_steps;
  r.train = train_budget(test, std::move(pre.params), setup, finetune_budget, seed);
  r.eval = evaluate(r.train.params, test, setup.episode, eval_episodes, seed);
  return r;
}

std::vector<double> resample_curve(const std::vector<RoundRecord>& curve,
                                   std::span<const long long> grid) {
  std::vector<double> out;
  out.reserve(grid.size());
  std::size_t j = 0;
  double last = std::numeric_limits<double>::quiet_NaN();
  for (long long g : grid) {
    while (j < curve.size() && curve[j].env_steps <= g) last = curve[j++].mean_reward;
    out.push_back(last);
  }
  return out;
}

}  // namespace mrss
