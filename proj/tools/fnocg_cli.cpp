// Command-line front end: generate | train | evaluate | plot.

#include "fnocg/config.hpp"
#include "fnocg/datagen.hpp"
#include "fnocg/harness.hpp"
#include "fnocg/model_io.hpp"
#include "fnocg/plots.hpp"
#include "fnocg/training.hpp"
#include "fnocg/version.hpp"

#include <CLI11.hpp>
#include <fftw3.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace fnocg;

namespace {

ExperimentConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void write_run_info(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                    nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json j;
  j["command"] = command;
  j["version"] = FNOCG_VERSION_STRING;
  j["fftw"] = std::string(fftw_version);
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  j["compiler"] = __VERSION__;
  j["config_hash"] = config_hash(cfg);
  j["config"] = canonical_text(cfg);
  j["seeds"] = {{"master_seed", cfg.dataset.master_seed}, {"fno_seed", cfg.fno.seed}};
  j["cg_iteration_convention"] = "operator applications inside the CG loop; the initial residual is not counted";
  j.update(extra);
  std::ofstream out(dir / ("run_info_" + command + ".json"));
  out << j.dump(1) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FNO-initialized conjugate gradients for 4D-Var on periodic advection"};
  app.require_subcommand(1);
  std::vector<std::string> overrides;

  auto* gen = app.add_subcommand("generate", "Generate the train/test datasets");
  std::uint64_t seed = 0;
  std::string gen_out, gen_config;
  bool force = false;
  std::uint64_t gen_limit = 0;
  bool with_kappa = false;
  gen->add_option("--seed", seed, "Master seed")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--config", gen_config, "Configuration file");
  gen->add_option("--set", overrides, "Override a setting, e.g. grid.n_x=200");
  gen->add_flag("--force", force, "Overwrite an existing dataset");
  gen->add_option("--limit", gen_limit, "Only generate the first N scenario tuples");
  gen->add_flag("--kappa", with_kappa, "Store the Hessian condition number of every sample");

  auto* tr = app.add_subcommand("train", "Train the neural operator on train.bin");
  std::string tr_data, tr_config, tr_out;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--config", tr_config, "Configuration file")->required();
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--set", overrides, "Override a setting");

  auto* ev = app.add_subcommand("evaluate", "Run CG, FNO and FNO-CG on test.bin");
  std::string ev_data, ev_model, ev_out, ev_config;
  std::size_t ev_limit = 0;
  bool no_wall_time = false;
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--model", ev_model, "Model file")->required();
  ev->add_option("--out", ev_out, "Output directory")->required();
  ev->add_option("--config", ev_config, "Configuration file (solver settings)");
  ev->add_option("--set", overrides, "Override a setting");
  ev->add_option("--limit", ev_limit, "Evaluate only the first N test samples");
  ev->add_flag("--no-wall-time", no_wall_time, "Write wall_time_s = 0 for byte-reproducible records");

  auto* pl = app.add_subcommand("plot", "Render SVG figures from records.csv");
  std::string pl_records, pl_out;
  pl->add_option("--records", pl_records, "records.csv path")->required();
  pl->add_option("--out", pl_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = resolve_config(gen_config, overrides);
      cfg.dataset.master_seed = seed;
      Dataset ds = generate_dataset(cfg.dataset, gen_out, force, gen_limit);
      if (with_kappa) {
        CovarianceCache covs(ds.settings);
        for (auto* part : {&ds.train, &ds.test}) {
          for (auto& s : *part) s.kappa = condition_number(HessianOperator(build_problem(s, ds.settings, covs)));
        }
        write_samples((fs::path(gen_out) / "train.bin").string(), ds.train);
        write_samples((fs::path(gen_out) / "test.bin").string(), ds.test);
      }
      write_run_info(gen_out, "generate", cfg);
      std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size() << " test samples to " << gen_out
                << '\n';
    } else if (tr->parsed()) {
      ExperimentConfig cfg = resolve_config(tr_config, overrides);
      const Dataset ds = load_dataset(tr_data, true, false);
      std::vector<StateVector> inputs, targets;
      for (const auto& s : ds.train) {
        inputs.push_back(s.f);
        targets.push_back(s.u0_true);
      }
      fs::create_directories(tr_out);
      const TrainResult res = train(cfg.fno, inputs, targets, [](const EpochLog& e) {
        std::cout << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " ("
                  << e.wall_time << " s)" << std::endl;
      });
      save_model(res.model, (fs::path(tr_out) / "model.fno").string());
      write_training_log((fs::path(tr_out) / "training_log.csv").string(), res.log);
      write_run_info(tr_out, "train", cfg,
                     {{"best_epoch", res.best_epoch}, {"best_val_loss", res.best_val_loss},
                      {"early_stopped", res.early_stopped}, {"parameter_count", cfg.fno.parameter_count()}});
      std::cout << "best validation loss " << res.best_val_loss << " at epoch " << res.best_epoch << '\n';
    } else if (ev->parsed()) {
      ExperimentConfig cfg = resolve_config(ev_config, overrides);
      const Dataset ds = load_dataset(ev_data, false, true);
      const FnoModel model = load_model(ev_model);
      SuiteOptions opt;
      opt.solver = cfg.solver;
      opt.limit = ev_limit;
      opt.record_wall_time = !no_wall_time;
      opt.curve_seed = cfg.dataset.master_seed;
      const SuiteResult res = run_suite(ds, model, ev_out, opt, [](std::size_t i, std::size_t n) {
        if (i % 500 == 0 || i == n) std::cout << "evaluated " << i << " / " << n << std::endl;
      });
      nlohmann::json ids = res.curve_ids;
      write_run_info(ev_out, "evaluate", cfg, {{"curve_sample_ids", ids}});
      const auto& s = res.summary;
      std::cout << "CG      mean error " << s.cg_mean_error << ", mean iterations " << s.cg_mean_iterations << '\n'
                << "FNO-CG  mean error " << s.fnocg_mean_error << ", mean iterations " << s.fnocg_mean_iterations
                << '\n'
                << "FNO     mean error " << s.fno_mean_error << '\n'
                << "error reduction " << s.error_reduction_pct << " %, iteration reduction "
                << s.iteration_reduction_pct << " %\n";
    } else if (pl->parsed()) {
      for (const auto& p : emit_plots(pl_records, pl_out)) std::cout << "wrote " << p.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
