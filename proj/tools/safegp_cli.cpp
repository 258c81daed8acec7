#include <CLI11.hpp>

#include "safegp/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"online dynamics learning with probabilistically safe control"};
  app.require_subcommand(1);

  safegp::CommandArgs args;
  long long seed = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "scenario config file")
        ->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", args.out_dir, "output directory");
  };

  CLI::App* fit = app.add_subcommand("fit", "condition the model on a dataset");
  CLI::App* simulate =
      app.add_subcommand("simulate", "run the closed-loop scenario");
  CLI::App* compare =
      app.add_subcommand("compare-gp", "benchmark the GP model variants");
  CLI::App* trigger =
      app.add_subcommand("trigger", "replay a trajectory computing Lipschitz "
                                    "bounds and triggering times");
  for (CLI::App* sub : {fit, simulate, compare, trigger}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? safegp::kExitConfig : safegp::kExitOk;
  }
  if (seed >= 0) args.seed = static_cast<std::uint64_t>(seed);

  if (fit->parsed()) return safegp::cmd_fit(args);
  if (simulate->parsed()) return safegp::cmd_simulate(args);
  if (compare->parsed()) return safegp::cmd_compare_gp(args);
  return safegp::cmd_trigger(args);
}
