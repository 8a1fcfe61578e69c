#include "mrss/config.hpp"

#include <cctype>
#include <cstdint>
#include <fstream>
#include <set>

#include "mrss/error.hpp"

namespace mrss {

using nlohmann::json;

std::string method_name(Method m) {
  switch (m) {
    case Method::MetaMrss: return "meta_mrss";
    case Method::Standard: return "standard";
    case Method::DomainRand: return "domain_rand";
    case Method::Transfer: return "transfer";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::MetaMrss, Method::Standard, Method::DomainRand, Method::Transfer})
    if (method_name(m) == s) return m;
  throw ConfigError("unknown method '" + s + "'");
}

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::CommSchemes: return "comm-schemes";
    case Ablation::PocaVsPpo: return "poca-vs-ppo";
    case Ablation::HeteroVsHomo: return "hetero-vs-homo";
  }
  return "?";
}

Ablation parse_ablation(const std::string& s) {
  for (Ablation a : {Ablation::CommSchemes, Ablation::PocaVsPpo, Ablation::HeteroVsHomo})
    if (ablation_name(a) == s) return a;
  throw ConfigError("unknown ablation '" + s + "'");
}

Roster parse_roster(const std::string& s) {
  // "2w+2q", "4q", "1w"
  Roster r{0, 0};
  std::size_t i = 0;
  bool any = false;
  while (i < s.size()) {
    std::size_t j = i;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    if (j == i || j >= s.size()) throw ConfigError("bad roster '" + s + "'");
    int n = std::stoi(s.substr(i, j - i));
    if (s[j] == 'w')
      r.wheeled += n;
    else if (s[j] == 'q')
      r.quadcopter += n;
    else
      throw ConfigError("bad roster '" + s + "'");
    any = true;
    i = j + 1;
    if (i < s.size()) {
      if (s[i] != '+') throw ConfigError("bad roster '" + s + "'");
      ++i;
      if (i == s.size()) throw ConfigError("bad roster '" + s + "'");
    }
  }
  if (!any) throw ConfigError("empty roster");
  return r;
}

std::string roster_name(const Roster& r) {
  std::string s;
  if (r.wheeled > 0) s += std::to_string(r.wheeled) + "w";
  if (r.quadcopter > 0) s += (s.empty() ? "" : "+") + std::to_string(r.quadcopter) + "q";
  return s.empty() ? "0w" : s;
}

namespace {

// Reads one JSON object, remembering which keys were consumed so that the
// leftovers can be reported.
bool non_negative(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* take(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void get(const std::string& key, int& out) {
    if (auto* v = take(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key) + " must be an integer");
      auto x = v->get<long long>();
      if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(at(key) + " is out of range");
      out = int(x);
    }
  }
  void get(const std::string& key, long long& out) {
    if (auto* v = take(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key) + " must be an integer");
      out = v->get<long long>();
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (auto* v = take(key)) {
      if (!non_negative(*v)) throw ConfigError(at(key) + " must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, double& out) {
    if (auto* v = take(key)) {
      if (!v->is_number()) throw ConfigError(at(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (auto* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (auto* v = take(key)) {
      if (!v->is_string()) throw ConfigError(at(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, Vec3& out) {
    if (auto* v = take(key)) {
      if (!v->is_array() || v->size() != 3)
        throw ConfigError(at(key) + " must be an array of 3 numbers");
      for (int a = 0; a < 3; ++a) {
        if (!(*v)[a].is_number()) throw ConfigError(at(key) + " must be an array of 3 numbers");
        (a == 0 ? out.x : a == 1 ? out.y : out.z) = (*v)[a].get<double>();
      }
    }
  }
  void get(const std::string& key, IntRange& out) {
    if (auto* v = take(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_integer() ||
          !(*v)[1].is_number_integer())
        throw ConfigError(at(key) + " must be an array [lo, hi] of integers");
      out.lo = (*v)[0].get<int>();
      out.hi = (*v)[1].get<int>();
    }
  }
  void get(const std::string& key, Box3& out) {
    if (const json* v = take(key)) {
      Reader r(*v, at(key));
      r.get("min", out.min);
      r.get("max", out.max);
      r.finish();
    }
  }
  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (auto* v = take(key)) {
      if (!v->is_array()) throw ConfigError(at(key) + " must be an array of positive integers");
      out.clear();
      for (const auto& e : *v) {
        if (!non_negative(e) || e.get<std::size_t>() == 0)
          throw ConfigError(at(key) + " must be an array of positive integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + at(it.key()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_uncertainty(const json& j, const std::string& path, UncertaintyConfig& c) {
  Reader r(j, path);
  r.get("count", c.count_range);
  r.get("size", c.size_range);
  r.get("position_mean", c.position_mean);
  r.get("position_std", c.position_std);
  r.get("shape_irregularity", c.shape_irregularity);
  r.get("arena", c.arena);
  r.get("spawn_region", c.spawn_region);
  r.get("quad_spawn_height", c.quad_spawn_height);
  r.get("spawn_clearance", c.spawn_clearance);
  r.get("seed", c.seed);
  r.finish();
}

json vec(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
json box(const Box3& b) { return {{"min", vec(b.min)}, {"max", vec(b.max)}}; }

json uncertainty_json(const UncertaintyConfig& c) {
  return {{"count", {c.count_range.lo, c.count_range.hi}},
          {"size", {c.size_range.lo, c.size_range.hi}},
          {"position_mean", vec(c.position_mean)},
          {"position_std", vec(c.position_std)},
          {"shape_irregularity", c.shape_irregularity},
          {"arena", box(c.arena)},
          {"spawn_region", box(c.spawn_region)},
          {"quad_spawn_height", c.quad_spawn_height},
          {"spawn_clearance", c.spawn_clearance},
          {"seed", c.seed}};
}

template <class F>
void rethrow_as_config(const std::string& section, F&& f) {
  try {
    f();
  } catch (const InvalidArgument& e) {
    throw ConfigError(section + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (out.empty()) throw ConfigError("out must not be empty");
  rethrow_as_config("tasks", [&] { tasks.validate(); });
  if (test_tasks) rethrow_as_config("test_tasks", [&] { test_tasks->validate(); });
  if (!(tasks.roster == train.roster) || (test_tasks && !(test_tasks->roster == train.roster)))
    throw ConfigError("task distributions and trainer must share the roster");
  rethrow_as_config("episode", [&] { train.episode.validate(); });
  rethrow_as_config("trainer", [&] { train.trainer.validate(); });
  rethrow_as_config("meta", [&] { meta.validate(); });
  if (train.trajectories < 1) throw ConfigError("trainer.trajectories must be >= 1");
  if (train.arch.hidden < 1 || train.arch.feature < 1)
    throw ConfigError("arch.hidden and arch.feature must be >= 1");
  if (budget.train < 1 || budget.pretrain < 0) throw ConfigError("budget.train must be >= 1");
  if (budget.eval_episodes < 1) throw ConfigError("budget.eval_episodes must be >= 1");
  if (budget.train_tasks < 1 || budget.test_tasks < 1)
    throw ConfigError("budget.train_tasks and budget.test_tasks must be >= 1");
  if (ablation.trials < 1) throw ConfigError("ablation.trials must be >= 1");
  if (ablation.budget < 1) throw ConfigError("ablation.budget must be >= 1");
  if (convergence.window < 1) throw ConfigError("convergence.window must be >= 1");
  if (!(convergence.fraction > 0 && convergence.fraction <= 1))
    throw ConfigError("convergence.fraction must lie in (0,1]");
}

MetaSetup RunConfig::meta_setup() const { return MetaSetup{tasks, train, meta}; }

json to_json(const RunConfig& c) {
  const auto& t = c.train.trainer;
  const auto& e = c.train.episode;
  json doc = {
      {"seed", c.seed},
      {"out", c.out},
      {"method", method_name(c.method)},
      {"roster", {{"wheeled", c.train.roster.wheeled}, {"quadcopter", c.train.roster.quadcopter}}},
      {"tasks", uncertainty_json(c.tasks)},
      {"episode",
       {{"horizon", e.horizon},
        {"dt", e.dt},
        {"success_threshold", e.success_threshold},
        {"scheme", e.scheme.index},
        {"deterministic", e.deterministic}}},
      {"trainer",
       {{"variant", t.variant == Variant::Poca ? "poca" : "ppo"},
        {"clip", t.clip},
        {"entropy_coef", t.entropy_coef},
        {"gae_lambda", t.gae_lambda},
        {"epochs", t.epochs},
        {"gamma", t.gamma},
        {"learning_rate", t.learning_rate},
        {"minibatch", t.minibatch},
        {"value_coef", t.value_coef},
        {"mc_samples", t.mc_samples},
        {"max_grad_norm", t.max_grad_norm},
        {"trajectories", c.train.trajectories}}},
      {"arch",
       {{"hidden", c.train.arch.hidden},
        {"feature", c.train.arch.feature},
        {"critic_hidden", c.train.arch.critic_hidden},
        {"init_log_std", c.train.arch.init_log_std}}},
      {"meta",
       {{"iterations", c.meta.iterations},
        {"tasks_per_batch", c.meta.tasks_per_batch},
        {"trajectories", c.meta.trajectories},
        {"inner_rounds", c.meta.inner_rounds},
        {"outer_lr", c.meta.outer_lr},
        {"max_grad_norm", c.meta.max_grad_norm},
        {"task_pool", c.meta.task_pool},
        {"checkpoint_every", c.meta.checkpoint_every},
        {"workers", c.meta.workers}}},
      {"budget",
       {{"train", c.budget.train},
        {"pretrain", c.budget.pretrain},
        {"eval_episodes", c.budget.eval_episodes},
        {"train_tasks", c.budget.train_tasks},
        {"test_tasks", c.budget.test_tasks}}},
      {"ablation",
       {{"trials", c.ablation.trials},
        {"budget", c.ablation.budget},
        {"scene", c.ablation.scene == AblationScene::Task   ? "task"
                  : c.ablation.scene == AblationScene::Desk ? "desk"
                                                            : "full"}}},
      {"convergence", {{"window", c.convergence.window}, {"fraction", c.convergence.fraction}}},
      {"checkpoint", c.checkpoint}};
  if (c.test_tasks) doc["test_tasks"] = uncertainty_json(*c.test_tasks);
  return doc;
}

RunConfig config_from_json(const json& doc, const RunConfig& base) {
  RunConfig c = base;
  Reader r(doc, "");
  if (const json* p = r.take("preset")) {
    if (!p->is_string()) throw ConfigError("preset must be a string");
    c = preset(p->get<std::string>());
  }
  r.get("seed", c.seed);
  r.get("out", c.out);
  if (r.has("method")) {
    std::string m;
    r.get("method", m);
    c.method = parse_method(m);
  }

  Roster roster = c.train.roster;
  if (const json* v = r.take("roster")) {
    if (v->is_string()) {
      roster = parse_roster(v->get<std::string>());
    } else {
      Reader rr(*v, "roster");
      rr.get("wheeled", roster.wheeled);
      rr.get("quadcopter", roster.quadcopter);
      rr.finish();
    }
  }
  if (const json* v = r.take("tasks")) read_uncertainty(*v, "tasks", c.tasks);
  if (const json* v = r.take("test_tasks")) {
    if (v->is_null()) {
      c.test_tasks.reset();
    } else {
      UncertaintyConfig u = c.test_tasks ? *c.test_tasks : c.tasks;
      read_uncertainty(*v, "test_tasks", u);
      c.test_tasks = u;
    }
  }
  c.train.roster = roster;
  c.tasks.roster = roster;
  if (c.test_tasks) c.test_tasks->roster = roster;

  if (const json* v = r.take("episode")) {
    Reader e(*v, "episode");
    auto& ep = c.train.episode;
    e.get("horizon", ep.horizon);
    e.get("dt", ep.dt);
    e.get("success_threshold", ep.success_threshold);
    int scheme = ep.scheme.index;
    e.get("scheme", scheme);
    if (scheme < 1 || scheme > 7) throw ConfigError("episode.scheme must lie in 1..7");
    ep.scheme = scheme_from_index(scheme);
    e.get("deterministic", ep.deterministic);
    e.finish();
  }
  if (const json* v = r.take("trainer")) {
    Reader t(*v, "trainer");
    auto& tc = c.train.trainer;
    if (t.has("variant")) {
      std::string s;
      t.get("variant", s);
      if (s == "poca")
        tc.variant = Variant::Poca;
      else if (s == "ppo")
        tc.variant = Variant::Ppo;
      else
        throw ConfigError("trainer.variant must be \"poca\" or \"ppo\"");
    }
    t.get("clip", tc.clip);
    t.get("entropy_coef", tc.entropy_coef);
    t.get("gae_lambda", tc.gae_lambda);
    t.get("epochs", tc.epochs);
    t.get("gamma", tc.gamma);
    t.get("learning_rate", tc.learning_rate);
    t.get("minibatch", tc.minibatch);
    t.get("value_coef", tc.value_coef);
    t.get("mc_samples", tc.mc_samples);
    t.get("max_grad_norm", tc.max_grad_norm);
    t.get("trajectories", c.train.trajectories);
    t.finish();
  }
  if (const json* v = r.take("arch")) {
    Reader a(*v, "arch");
    a.get("hidden", c.train.arch.hidden);
    a.get("feature", c.train.arch.feature);
    a.get("critic_hidden", c.train.arch.critic_hidden);
    a.get("init_log_std", c.train.arch.init_log_std);
    a.finish();
  }
  if (const json* v = r.take("meta")) {
    Reader m(*v, "meta");
    m.get("iterations", c.meta.iterations);
    m.get("tasks_per_batch", c.meta.tasks_per_batch);
    m.get("trajectories", c.meta.trajectories);
    m.get("inner_rounds", c.meta.inner_rounds);
    m.get("outer_lr", c.meta.outer_lr);
    m.get("max_grad_norm", c.meta.max_grad_norm);
    m.get("task_pool", c.meta.task_pool);
    m.get("checkpoint_every", c.meta.checkpoint_every);
    m.get("workers", c.meta.workers);
    m.finish();
  }
  if (const json* v = r.take("budget")) {
    Reader b(*v, "budget");
    b.get("train", c.budget.train);
    b.get("pretrain", c.budget.pretrain);
    b.get("eval_episodes", c.budget.eval_episodes);
    b.get("train_tasks", c.budget.train_tasks);
    b.get("test_tasks", c.budget.test_tasks);
    b.finish();
  }
  if (const json* v = r.take("ablation")) {
    Reader a(*v, "ablation");
    a.get("trials", c.ablation.trials);
    a.get("budget", c.ablation.budget);
    if (a.has("scene")) {
      std::string s;
      a.get("scene", s);
      if (s == "task")
        c.ablation.scene = AblationScene::Task;
      else if (s == "desk")
        c.ablation.scene = AblationScene::Desk;
      else if (s == "full")
        c.ablation.scene = AblationScene::Full;
      else
        throw ConfigError("ablation.scene must be \"task\", \"desk\" or \"full\"");
    }
    a.finish();
  }
  if (const json* v = r.take("convergence")) {
    Reader cv(*v, "convergence");
    cv.get("window", c.convergence.window);
    cv.get("fraction", c.convergence.fraction);
    cv.finish();
  }
  r.get("checkpoint", c.checkpoint);
  r.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  // A run manifest carries the resolved config under "config".
  if (doc.is_object() && doc.contains("config") && doc.contains("command")) {
    for (auto it = doc.begin(); it != doc.end(); ++it)
      if (it.key() != "config" && it.key() != "command" && it.key() != "version" &&
          it.key() != "seed" && it.key() != "outputs" && it.key() != "notes")
        throw ConfigError(path + ": unknown manifest key '" + it.key() + "'");
    return config_from_json(doc["config"]);
  }
  return config_from_json(doc);
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  if (name == "micro") {
    c.out = "runs/micro";
    c.train.roster = {1, 1};
    auto& t = c.tasks;
    t.arena = {{0, 0, 0}, {12, 12, 6}};
    t.spawn_region = {{0, 0, 0}, {12, 3, 6}};
    t.position_mean = {6, 6, 0};
    t.position_std = {1.0, 1.0, 0};
    t.count_range = {1, 2};
    t.size_range = {2, 3};
    t.shape_irregularity = 0.0;
    t.seed = 5;
    c.train.episode.horizon = 200;
    c.train.episode.dt = 0.5;
    c.train.trainer.learning_rate = 1e-3;
    c.train.trajectories = 8;
    c.train.arch.hidden = 32;
    c.train.arch.feature = 16;
    c.train.arch.critic_hidden = {32, 32};
    c.meta.iterations = 60;
    c.meta.tasks_per_batch = 5;
    c.meta.trajectories = 4;
    c.meta.inner_rounds = 1;
    c.meta.outer_lr = 1e-2;
    c.meta.task_pool = 10;
    c.meta.checkpoint_every = 10;
    c.budget.train = 32000;
    c.budget.pretrain = 32000;
    c.budget.eval_episodes = 20;
    c.budget.train_tasks = 10;
    c.budget.test_tasks = 3;
    c.ablation.trials = 3;
    c.ablation.budget = 16000;
  } else if (name == "full") {
    c.out = "runs/full";
    c.train.roster = {2, 2};
    auto& t = c.tasks;
    t.arena = {{0, 0, 0}, {40, 40, 10}};
    t.spawn_region = {{0, 0, 0}, {40, 6, 10}};
    t.position_mean = {20, 22, 0};
    t.position_std = {6, 6, 0};
    t.count_range = {1, 4};
    t.size_range = {2, 6};
    t.shape_irregularity = 0.3;
    t.seed = 1;
    c.train.episode.horizon = 1000;
    c.train.episode.dt = 0.1;
    c.train.trainer.learning_rate = 3e-4;
    c.train.trajectories = 20;
    c.meta.iterations = 100;
    c.meta.tasks_per_batch = 10;
    c.meta.trajectories = 20;
    c.meta.outer_lr = 1e-3;
    c.meta.task_pool = 1000;
    c.budget.train = 4000000;
    c.budget.pretrain = 4000000;
    c.budget.eval_episodes = 20;
    c.budget.train_tasks = 1000;
    c.budget.test_tasks = 5;
    c.ablation.budget = 4000000;
    c.ablation.scene = AblationScene::Full;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.tasks.roster = c.train.roster;
  c.validate();
  return c;
}

}  // namespace mrss
