// Command-line front end: synthetic log generation, training, evaluation,
// lambda sweeps, and the analytic verification suite.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "exum/experiment.hpp"
#include "exum/theory.hpp"

namespace fs = std::filesystem;

namespace {

exum::ExperimentConfig config_or_default(const std::string& path) {
  if (path.empty()) return exum::ExperimentConfig{};
  if (!fs::exists(path))
    throw exum::UsageError("config file not found: " + path);
  return exum::load_config_file(path);
}

int cmd_gen_data(const std::string& config_path, const std::string& out) {
  exum::ExperimentConfig cfg = config_or_default(config_path);
  const exum::Dataset ds = exum::generate_synthetic(cfg.synthetic);
  exum::write_csv_file(out, ds);
  std::cout << "wrote " << ds.records.size() << " records (" << ds.user_vocab
            << " users, " << ds.item_vocab << " items) to " << out << '\n';
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out,
              bool quiet) {
  exum::ExperimentConfig cfg = config_or_default(config_path);
  exum::validate(cfg);
  const exum::Dataset full = exum::load_dataset(cfg);
  const exum::PreparedData prep = exum::prepare(cfg, full);
  std::cout << "train " << prep.train.records.size() << " rows, test "
            << prep.test.records.size() << " rows, "
            << prep.grouping.group_count() << " duration groups\n";
  exum::TrainResult tr =
      exum::train_model(cfg, prep, quiet ? nullptr : &std::cout);

  exum::ModelBundle bundle;
  bundle.cfg = cfg;
  bundle.net = std::move(tr.net);
  bundle.table = std::move(tr.table);
  bundle.grids = prep.grids;
  bundle.grouping = prep.grouping;
  exum::save_model(out, bundle);

  {
    std::ofstream os(fs::path(out) / "curve.csv");
    if (!os) throw exum::DataError("cannot write curve.csv");
    exum::write_curve(os, tr.curve);
  }
  const std::string model_name = cfg.variant + "_" + cfg.backbone;
  const exum::MetricsReport rep = exum::evaluate_model(
      bundle.net, bundle.table, bundle.grids, bundle.grouping,
      cfg.backbone_enum(), prep.test, cfg.xauc_pairs_per_sample, cfg.eval_seed,
      model_name, "test");
  {
    std::ofstream os(fs::path(out) / "metrics.csv");
    if (!os) throw exum::DataError("cannot write metrics.csv");
    os << exum::kMetricsHeader << '\n';
    exum::write_metrics_row(os, rep);
  }
  std::cout << model_name << " test mae " << exum::fmt_g9(rep.mae) << " xauc "
            << exum::fmt_g9(rep.xauc) << '\n';
  std::cout << "model saved to " << out << '\n';
  return 0;
}

int cmd_evaluate(const std::string& model_dir, const std::string& data_path,
                 const std::string& out) {
  if (!fs::exists(model_dir))
    throw exum::UsageError("model directory not found: " + model_dir);
  const exum::ModelBundle bundle = exum::load_model(model_dir);
  const exum::ExperimentConfig& cfg = bundle.cfg;

  exum::Dataset eval_set;
  std::string dataset_name;
  if (!data_path.empty()) {
    eval_set = exum::ingest_log_file(data_path);
    dataset_name = fs::path(data_path).filename().string();
  } else {
    const exum::Dataset full = exum::load_dataset(cfg);
    eval_set = exum::chronological_split(full, cfg.split_timestamp).second;
    dataset_name = "test";
  }
  if (eval_set.records.empty()) throw exum::DataError("evaluate: no records");

  const std::string model_name = cfg.variant + "_" + cfg.backbone;
  const exum::MetricsReport rep = exum::evaluate_model(
      bundle.net, bundle.table, bundle.grids, bundle.grouping,
      cfg.backbone_enum(), eval_set, cfg.xauc_pairs_per_sample, cfg.eval_seed,
      model_name, dataset_name);
  if (!out.empty()) {
    std::ofstream os(out);
    if (!os) throw exum::DataError("cannot write " + out);
    os << exum::kMetricsHeader << '\n';
    exum::write_metrics_row(os, rep);
  }
  std::cout << exum::kMetricsHeader << '\n';
  exum::write_metrics_row(std::cout, rep);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& lambda_list,
              const std::string& out, bool quiet) {
  exum::ExperimentConfig cfg = config_or_default(config_path);
  if (cfg.variant == "plain") cfg.variant = "exum";
  exum::Vec lambdas;
  {
    std::stringstream ss(lambda_list);
    std::string cell;
    while (std::getline(ss, cell, ','))
      if (!cell.empty()) lambdas.push_back(std::stod(cell));
  }
  if (lambdas.empty())
    throw exum::UsageError("sweep-lambda: no lambda values given");
  const std::vector<exum::SweepRow> rows =
      exum::sweep_lambda(cfg, lambdas, quiet ? nullptr : &std::cout);
  {
    std::ofstream os(out);
    if (!os) throw exum::DataError("cannot write " + out);
    exum::write_sweep_csv(os, rows);
  }
  exum::write_sweep_csv(std::cout, rows);
  for (const exum::SweepRow& r : rows)
    if (r.status != "ok") return 1;
  return 0;
}

int cmd_verify_theory(const std::string& out) {
  bool ok = true;
  for (exum::Backbone b : {exum::Backbone::QP, exum::Backbone::OR}) {
    const exum::DegradationReport rep = exum::verify_degradation(b);
    ok = ok && rep.pass;
    std::cout << (rep.pass ? "PASS" : "FAIL") << " degradation "
              << exum::backbone_name(b) << ": " << rep.checked
              << " grid points, " << rep.violations
              << " violations, min gradient " << exum::fmt_g9(rep.min_gradient)
              << '\n';
    const exum::ConfOnlyResult conf = exum::verify_conf_only_training(b);
    ok = ok && conf.non_increasing;
    std::cout << (conf.non_increasing ? "PASS" : "FAIL")
              << " confidence-only training " << exum::backbone_name(b)
              << ": mean c " << exum::fmt_g9(conf.mean_c.front()) << " -> "
              << exum::fmt_g9(conf.mean_c.back()) << ", max rise "
              << exum::fmt_g9(conf.max_rise) << '\n';
  }
  const exum::FixedPointReport fp = exum::verify_fixed_points();
  size_t fp_failures = 0;
  for (const auto& r : fp.rows)
    if (!r.pass) ++fp_failures;
  size_t mono_failures = 0;
  for (const auto& r : fp.monotone_rows)
    if (!r.pass) ++mono_failures;
  ok = ok && fp.pass;
  std::cout << (fp_failures == 0 ? "PASS" : "FAIL") << " fixed points: "
            << fp.rows.size() - fp_failures << "/" << fp.rows.size()
            << " rows ok\n";
  std::cout << (mono_failures == 0 ? "PASS" : "FAIL")
            << " above-bound monotone climb: "
            << fp.monotone_rows.size() - mono_failures << "/"
            << fp.monotone_rows.size() << " rows ok\n";
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream fps(fs::path(out) / "fixed_points.csv");
    exum::write_fixed_point_csv(fps, fp);
    std::ofstream mono(fs::path(out) / "monotone.csv");
    exum::write_monotone_csv(mono, fp);
    std::cout << "reports written to " << out << '\n';
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"explicit-uncertainty watch-time models"};
  app.require_subcommand(1);

  std::string config_path, out_path, model_dir, data_path, lambda_list;
  bool quiet = false;

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic log as CSV");
  gen->add_option("--config", config_path, "experiment config file");
  gen->add_option("--out", out_path, "output CSV path")->required();

  CLI::App* train = app.add_subcommand("train", "train a model and save it");
  train->add_option("--config", config_path, "experiment config file");
  train->add_option("--out", out_path, "output model directory")->required();
  train->add_flag("--quiet", quiet, "suppress per-epoch progress");

  CLI::App* ev = app.add_subcommand("evaluate", "evaluate a saved model");
  ev->add_option("--model", model_dir, "model directory")->required();
  ev->add_option("--data", data_path, "CSV log to evaluate on (default: config test split)");
  ev->add_option("--out", out_path, "metrics CSV path");

  CLI::App* sweep = app.add_subcommand("sweep-lambda",
                                       "train across a list of lambdas");
  sweep->add_option("--config", config_path, "experiment config file");
  sweep->add_option("--lambdas", lambda_list, "comma-separated lambda values")
      ->required();
  sweep->add_option("--out", out_path, "sweep CSV path")->required();
  sweep->add_flag("--quiet", quiet, "suppress per-epoch progress");

  CLI::App* verify = app.add_subcommand("verify-theory",
                                        "check the analytic results numerically");
  verify->add_option("--out", out_path, "directory for CSV reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_path);
    if (train->parsed()) return cmd_train(config_path, out_path, quiet);
    if (ev->parsed()) return cmd_evaluate(model_dir, data_path, out_path);
    if (sweep->parsed())
      return cmd_sweep(config_path, lambda_list, out_path, quiet);
    if (verify->parsed()) return cmd_verify_theory(out_path);
  } catch (const exum::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const exum::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
