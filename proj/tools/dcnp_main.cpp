#include <CLI11.hpp>
#include <iostream>

#include "dcnp/cli.hpp"

namespace {

// Exit codes: 0 success, 1 configuration/validation error, 2 runtime
// numerical failure.
int run(int argc, char** argv) {
  CLI::App app{"Grid-to-site climate downscaling pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  dcnp::Overrides overrides;
  std::uint64_t seed_flag = 0;
  int fold_flag = 0;
  std::string head_flag, topo_flag, out_flag;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "configuration JSON")->required();
    cmd->add_option("--seed", seed_flag, "override the run seed")
        ->each([&](const std::string&) { overrides.seed = seed_flag; });
    cmd->add_option("--fold", fold_flag, "fold id 1..5 (0 uses the day/station split)")
        ->each([&](const std::string&) { overrides.fold = fold_flag; });
    cmd->add_option("--head", head_flag, "gaussian | bg")
        ->each([&](const std::string&) { overrides.head = head_flag; });
    cmd->add_option("--topo", topo_flag, "all | elevation | mtpi | none")
        ->each([&](const std::string&) { overrides.topo = topo_flag; });
    cmd->add_option("--out", out_flag, "output directory")
        ->each([&](const std::string&) { overrides.out = out_flag; });
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  CLI::App* train = app.add_subcommand("train", "train a model on the configured split");
  add_common(train);
  CLI::App* baseline_cmd = app.add_subcommand("baseline", "run the interpolation baseline");
  add_common(baseline_cmd);
  CLI::App* ablate = app.add_subcommand("ablate", "train all four topography arms");
  add_common(ablate);

  CLI::App* predict = app.add_subcommand("predict", "predict at arbitrary sites");
  dcnp::cli::PredictArgs pargs;
  std::string date_from, date_to;
  std::uint64_t predict_seed = 0;
  predict->add_option("--checkpoint", pargs.checkpoint, "checkpoint directory")->required();
  predict->add_option("--grid", pargs.grid, "predictor grid file")->required();
  predict->add_option("--sites", pargs.sites, "sites CSV (id,lon,lat,elev,elev_diff,mtpi)")
      ->required();
  predict->add_option("--out", pargs.out_file, "output CSV")->required();
  predict->add_option("--from", date_from, "first date (YYYY-MM-DD)");
  predict->add_option("--to", date_to, "last date (YYYY-MM-DD)");
  predict->add_option("--samples", pargs.n_samples, "stochastic draws per row");
  predict->add_option("--seed", predict_seed, "sampling seed")
      ->each([&](const std::string&) { pargs.seed = predict_seed; });

  CLI::App* evaluate = app.add_subcommand("evaluate", "score predictions against observations");
  dcnp::cli::EvaluateArgs eargs;
  std::string variable_flag;
  bool use_sample = false;
  evaluate->add_option("--pred", eargs.predictions, "predictions CSV")->required();
  evaluate->add_option("--stations", eargs.stations, "station directory")->required();
  evaluate->add_option("--out", eargs.out_dir, "output directory")->required();
  evaluate->add_flag("--use-sample", use_sample, "score the sampled series instead of det");
  evaluate->add_option("--wet-threshold", eargs.wet_threshold, "wet-day threshold in mm");
  evaluate->add_option("--variable", variable_flag, "tmax | precip");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed() || train->parsed() || baseline_cmd->parsed() || ablate->parsed()) {
      dcnp::RunConfig cfg = dcnp::load_config(config_path);
      dcnp::apply_overrides(cfg, overrides);
      if (synth->parsed()) dcnp::cli::cmd_synth(cfg);
      if (train->parsed()) dcnp::cli::cmd_train(cfg);
      if (baseline_cmd->parsed()) dcnp::cli::cmd_baseline(cfg);
      if (ablate->parsed()) dcnp::cli::cmd_ablate(cfg);
    } else if (predict->parsed()) {
      if (!date_from.empty()) pargs.date_from = dcnp::parse_date(date_from);
      if (!date_to.empty()) pargs.date_to = dcnp::parse_date(date_to);
      dcnp::cli::cmd_predict(pargs);
    } else if (evaluate->parsed()) {
      eargs.use_sample = use_sample;
      if (!variable_flag.empty()) {
        eargs.variable = dcnp::data::variable_from_name(variable_flag);
      }
      dcnp::cli::cmd_evaluate(eargs);
    }
  } catch (const dcnp::numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const dcnp::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
