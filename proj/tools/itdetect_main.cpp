// itdetect: insider-threat detection over CERT-style audit logs.
//
// Pipeline stages are independently rerunnable; every stage reads and writes
// the persisted artifact formats under --out. `run` chains all of them.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "itd/error.hpp"
#include "itd/pipeline.hpp"
#include "itd/synth.hpp"
#include "itd/util.hpp"

namespace {

int exit_code_for(const itd::Error& e) {
  switch (e.category()) {
    case itd::ErrorCategory::Config: return 2;
    case itd::ErrorCategory::Data: return 3;
    case itd::ErrorCategory::Training: return 4;
  }
  return 1;
}

struct CliOptions {
  std::string config_path;
  itd::RunConfig cfg;
};

void add_run_options(CLI::App* cmd, CliOptions& opts, bool need_data, bool need_out) {
  cmd->add_option("--config", opts.config_path, "JSON config file; flags override its values");
  auto* data = cmd->add_option("--data", opts.cfg.data_dir, "input data directory");
  auto* out = cmd->add_option("--out", opts.cfg.out_dir, "artifact output directory");
  if (need_data) data->required(false);
  if (need_out) out->required(false);
  cmd->add_option("--granularity",
                  [&opts](const CLI::results_t& res) {
                    opts.cfg.granularity = itd::granularity_from_name(res[0]);
                    return true;
                  },
                  "week|day|session");
  cmd->add_option("--train-fraction", opts.cfg.train_fraction, "chronological train share");
  cmd->add_option("--tau", opts.cfg.tau, "threshold percentile");
  cmd->add_option("--kappa", opts.cfg.kappa, "user proportion threshold");
  cmd->add_option("--transform-policy", opts.cfg.transform_policy,
                  "geometric|simplified|full|explicit");
  cmd->add_option("--explicit-transforms", opts.cfg.explicit_transforms,
                  "indices into the full 144 enumeration (policy=explicit)");
  cmd->add_flag("--no-prune,!--prune", opts.cfg.prune_transforms,
                "disable/enable transformation pruning")
      ->default_val(true);
  cmd->add_option("--band-lo", opts.cfg.band_lo, "redundancy band lower edge");
  cmd->add_option("--band-hi", opts.cfg.band_hi, "redundancy band upper edge");
  cmd->add_option("--arch",
                  [&opts](const CLI::results_t& res) {
                    opts.cfg.arch = itd::arch_from_name(res[0] == "paper" ? "wrn_10_4" : res[0]);
                    return true;
                  },
                  "tiny|wrn_10_4 (paper scale)");
  cmd->add_flag("--paper-scale",
                [&opts](std::int64_t) {
                  opts.cfg.arch = itd::ArchKind::WideResnet10x4;
                  opts.cfg.epochs = 200;
                },
                "paper-scale settings: wrn_10_4 architecture, 200 epochs");
  cmd->add_option("--epochs", opts.cfg.epochs, "training epochs");
  cmd->add_option("--batch-size", opts.cfg.batch_size, "training batch size");
  cmd->add_option("--seed", opts.cfg.seed, "master seed");
  cmd->add_option("--min-train", opts.cfg.min_train, "minimum training windows per user");
  cmd->add_option("--min-test", opts.cfg.min_test, "minimum test windows per user");
  cmd->add_flag("--no-baselines,!--baselines", opts.cfg.with_baselines,
                "disable/enable baseline comparisons")
      ->default_val(true);
  cmd->add_option("--catalog", opts.cfg.catalog_path, "categorizer override JSON");
}

// Config file first, then command-line overrides on top.
void finalize_config(CLI::App* cmd, CliOptions& opts) {
  if (opts.config_path.empty()) return;
  itd::RunConfig from_file =
      itd::RunConfig::from_json(nlohmann::json::parse(itd::read_file(opts.config_path)));
  itd::RunConfig merged = from_file;
  auto keep_cli = [&](const std::string& flag) { return cmd->count(flag) > 0; };
  if (keep_cli("--data")) merged.data_dir = opts.cfg.data_dir;
  if (keep_cli("--out")) merged.out_dir = opts.cfg.out_dir;
  if (keep_cli("--granularity")) merged.granularity = opts.cfg.granularity;
  if (keep_cli("--train-fraction")) merged.train_fraction = opts.cfg.train_fraction;
  if (keep_cli("--tau")) merged.tau = opts.cfg.tau;
  if (keep_cli("--kappa")) merged.kappa = opts.cfg.kappa;
  if (keep_cli("--transform-policy")) merged.transform_policy = opts.cfg.transform_policy;
  if (keep_cli("--explicit-transforms")) merged.explicit_transforms = opts.cfg.explicit_transforms;
  if (keep_cli("--no-prune") || keep_cli("--prune")) merged.prune_transforms = opts.cfg.prune_transforms;
  if (keep_cli("--band-lo")) merged.band_lo = opts.cfg.band_lo;
  if (keep_cli("--band-hi")) merged.band_hi = opts.cfg.band_hi;
  if (keep_cli("--arch") || keep_cli("--paper-scale")) merged.arch = opts.cfg.arch;
  if (keep_cli("--epochs") || keep_cli("--paper-scale")) merged.epochs = opts.cfg.epochs;
  if (keep_cli("--batch-size")) merged.batch_size = opts.cfg.batch_size;
  if (keep_cli("--seed")) merged.seed = opts.cfg.seed;
  if (keep_cli("--min-train")) merged.min_train = opts.cfg.min_train;
  if (keep_cli("--min-test")) merged.min_test = opts.cfg.min_test;
  if (keep_cli("--no-baselines") || keep_cli("--baselines")) merged.with_baselines = opts.cfg.with_baselines;
  if (keep_cli("--catalog")) merged.catalog_path = opts.cfg.catalog_path;
  opts.cfg = merged;
}

void require(bool cond, itd::ErrorKind kind, const std::string& message) {
  if (!cond) itd::fail(kind, message);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"itdetect: image-based insider threat detection over audit logs"};
  app.require_subcommand(1);

  CliOptions opts;

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic CERT-format corpus");
  std::string synth_out = "synth_data";
  int synth_users = 20, synth_days = 120;
  std::uint64_t synth_seed = 42;
  std::vector<std::string> synth_scenarios;
  synth_cmd->add_option("--out", synth_out, "output directory");
  synth_cmd->add_option("--users", synth_users, "number of users");
  synth_cmd->add_option("--days", synth_days, "number of days");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--scenario", synth_scenarios,
                        "planted scenario user:day_begin:day_end:kind (repeatable)");

  auto* ingest_cmd = app.add_subcommand("ingest", "parse CSVs into normalized events");
  add_run_options(ingest_cmd, opts, true, true);
  auto* feat_cmd = app.add_subcommand("featurize", "extract feature vectors per user/window");
  add_run_options(feat_cmd, opts, false, true);
  auto* select_cmd = app.add_subcommand("select-transforms", "prune the candidate transform set");
  add_run_options(select_cmd, opts, false, true);
  auto* train_cmd = app.add_subcommand("train", "train per-user classifiers + Dirichlet params");
  add_run_options(train_cmd, opts, false, true);
  auto* score_cmd = app.add_subcommand("score", "score test windows and flag instances");
  add_run_options(score_cmd, opts, false, true);
  auto* eval_cmd = app.add_subcommand("evaluate", "emit evaluation reports");
  add_run_options(eval_cmd, opts, false, true);
  auto* run_cmd = app.add_subcommand("run", "all stages end to end");
  add_run_options(run_cmd, opts, true, true);

  auto* sweep_cmd = app.add_subcommand("sweep", "F1 vs tau or kappa without retraining");
  add_run_options(sweep_cmd, opts, false, true);
  std::string sweep_parameter = "kappa";
  std::vector<double> sweep_grid;
  sweep_cmd->add_option("--parameter", sweep_parameter, "tau or kappa");
  sweep_cmd->add_option("--grid", sweep_grid, "explicit grid values");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      itd::ScenarioPlan plan = itd::ScenarioPlan::default_plan();
      plan.n_users = synth_users;
      plan.n_days = synth_days;
      if (!synth_scenarios.empty()) {
        plan.scenarios.clear();
        for (const std::string& s : synth_scenarios) {
          itd::PlantedScenario sc;
          char kind_buf[32] = {0};
          require(std::sscanf(s.c_str(), "%d:%d:%d:%31s", &sc.user_index, &sc.day_begin,
                              &sc.day_end, kind_buf) == 4,
                  itd::ErrorKind::InvalidPlan, "bad --scenario format: " + s);
          sc.kind = itd::scenario_kind_from_name(kind_buf);
          plan.scenarios.push_back(sc);
        }
      }
      const auto result = itd::synth_generate(plan, synth_seed, synth_out);
      std::cout << "wrote " << result.total_events << " events to " << synth_out << "\n";
      return 0;
    }

    CLI::App* active = nullptr;
    for (CLI::App* cmd : {ingest_cmd, feat_cmd, select_cmd, train_cmd, score_cmd, eval_cmd,
                          run_cmd, sweep_cmd}) {
      if (cmd->parsed()) active = cmd;
    }
    finalize_config(active, opts);
    require(!opts.cfg.out_dir.empty(), itd::ErrorKind::ConfigError, "--out is required");

    if (ingest_cmd->parsed()) {
      require(!opts.cfg.data_dir.empty(), itd::ErrorKind::ConfigError, "--data is required");
      const std::size_t n = itd::stage_ingest(opts.cfg);
      std::cout << "ingested " << n << " events\n";
    } else if (feat_cmd->parsed()) {
      itd::stage_featurize(opts.cfg);
      std::cout << "feature store written\n";
    } else if (select_cmd->parsed()) {
      itd::stage_select_transforms(opts.cfg);
      std::cout << "transform set written\n";
    } else if (train_cmd->parsed()) {
      itd::stage_train(opts.cfg);
      std::cout << "models trained\n";
    } else if (score_cmd->parsed()) {
      itd::stage_score(opts.cfg);
      std::cout << "scores written\n";
    } else if (eval_cmd->parsed()) {
      const auto summary = itd::stage_evaluate(opts.cfg);
      require(summary.at("labels_present").get<bool>(), itd::ErrorKind::MissingLabels,
              "evaluation requires ground-truth labels (truth.json)");
      std::cout << "reports written\n";
    } else if (run_cmd->parsed()) {
      require(!opts.cfg.data_dir.empty(), itd::ErrorKind::ConfigError, "--data is required");
      const auto result = itd::run_pipeline(opts.cfg);
      std::cout << "run complete; summary hash " << result.summary_hash << "\n";
    } else if (sweep_cmd->parsed()) {
      std::vector<double> grid = sweep_grid;
      if (grid.empty()) {
        if (sweep_parameter == "kappa") {
          grid = itd::default_kappa_grid();
        } else {
          for (double v = 80.0; v <= 99.0 + 1e-9; v += 2.0) grid.push_back(v);
        }
      }
      const auto rows = itd::sweep(opts.cfg, sweep_parameter, grid);
      const std::string csv = itd::sweep_csv(rows);
      itd::write_file((std::filesystem::path(opts.cfg.out_dir) /
                       ("sweep_" + sweep_parameter + ".csv"))
                          .string(),
                      csv);
      std::cout << csv;
    }
    return 0;
  } catch (const itd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 4;
  }
}
