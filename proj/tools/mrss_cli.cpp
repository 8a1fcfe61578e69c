#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mrss/config.hpp"
#include "mrss/error.hpp"
#include "mrss/harness.hpp"

using namespace mrss;

namespace {

struct Common {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string resume;
};

void add_common(CLI::App* sub, Common& c, bool resume) {
  sub->add_option("--config", c.config, "config document or run manifest (JSON)");
  sub->add_option("--preset", c.preset, "built-in config: micro or full");
  sub->add_option("--seed", c.seed, "master seed override");
  sub->add_option("--out", c.out, "output directory override");
  if (resume) sub->add_option("--resume", c.resume, "checkpoint to resume from or adapt");
}

RunConfig resolve(const Common& c) {
  if (!c.config.empty() && !c.preset.empty())
    throw ConfigError("give either --config or --preset, not both");
  if (c.config.empty() && c.preset.empty()) throw ConfigError("--config or --preset is required");
  RunConfig cfg = c.config.empty() ? preset(c.preset) : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heterogeneous multi-robot scanning: training, adaptation and ablations"};
  app.require_subcommand(1);

  Common common;
  int n = 0;
  std::string split = "train";

  auto* gen = app.add_subcommand("gen-tasks", "sample task files");
  add_common(gen, common, false);
  gen->add_option("--n", n, "number of tasks")->required();
  gen->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));

  auto* train = app.add_subcommand("train", "train a baseline on each held-out task");
  add_common(train, common, false);
  auto* meta = app.add_subcommand("meta-train", "meta-train an initialization");
  add_common(meta, common, true);
  auto* adapt = app.add_subcommand("adapt", "fine-tune a meta checkpoint on held-out tasks");
  add_common(adapt, common, true);
  auto* eval = app.add_subcommand("eval", "evaluate a frozen policy on held-out tasks");
  add_common(eval, common, true);

  auto* ablate = app.add_subcommand("ablate", "ablation pipelines");
  ablate->require_subcommand(1);
  std::optional<Ablation> which;
  for (Ablation a : {Ablation::CommSchemes, Ablation::HeteroVsHomo, Ablation::PocaVsPpo}) {
    auto* sub = ablate->add_subcommand(ablation_name(a));
    add_common(sub, common, false);
    sub->callback([&which, a] { which = a; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const RunConfig cfg = resolve(common);
    std::ostream* log = &std::cout;
    if (gen->parsed())
      cmd_gen_tasks(cfg, n, split, log);
    else if (train->parsed())
      cmd_train(cfg, log);
    else if (meta->parsed())
      cmd_meta_train(cfg, common.resume, log);
    else if (adapt->parsed())
      cmd_adapt(cfg, common.resume, log);
    else if (eval->parsed())
      cmd_eval(cfg, common.resume, log);
    else if (which)
      cmd_ablate(cfg, *which, log);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
