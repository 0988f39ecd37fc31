#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "posefront/checkpoint.hpp"
#include "posefront/config.hpp"
#include "posefront/errors.hpp"
#include "posefront/evalproto.hpp"
#include "posefront/fileio.hpp"
#include "posefront/format.hpp"
#include "posefront/gradcheck.hpp"

namespace posefront::cli {

namespace {

namespace fs = std::filesystem;

// Options shared by every verb that reads an ExperimentConfig.
struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  bool no_progressive = false;
  bool fixed_gate = false;
};

std::string flag_name(const std::string& key) {
  std::string out = "--";
  for (char c : key) out += c == '_' ? '-' : c;
  return out;
}

void add_config_options(CLI::App* cmd, ConfigOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key = value configuration file");
  for (const std::string& key : config_keys()) {
    if (key == "use_progressive" || key == "fixed_gate") continue;
    cmd->add_option_function<std::string>(
        flag_name(key), [&opts, key](const std::string& v) { opts.overrides[key] = v; }, "override " + key);
  }
  cmd->add_flag("--no-progressive", opts.no_progressive, "train without the progressive module");
  cmd->add_flag("--fixed-gate", opts.fixed_gate, "force every gate coefficient to 1");
}

// Defaults, then the config file, then command-line overrides; validated as a whole.
ExperimentConfig resolve_config(const ConfigOptions& opts) {
  ExperimentConfig cfg;
  if (!opts.config_path.empty()) apply_config_file(cfg, opts.config_path);
  for (const std::string& key : config_keys()) {
    const auto it = opts.overrides.find(key);
    if (it != opts.overrides.end()) apply_setting(cfg, key, it->second);
  }
  if (opts.no_progressive) cfg.train.use_progressive = false;
  if (opts.fixed_gate) cfg.train.fixed_gate = true;
  cfg.validate();
  return cfg;
}

template <typename Fn>
void write_output(const fs::path& path, Fn&& fill) {
  std::ostringstream buf;
  fill(buf);
  write_file_atomic(path, buf.str());
}

Dataset load_dataset(const fs::path& path) {
  std::istringstream in(read_file(path));
  return read_dataset_csv(in);
}

fs::path prepare_out_dir(const ExperimentConfig& cfg) {
  fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_meta(const fs::path& path, const ExperimentConfig& cfg, const char* split, int first, int last) {
  write_output(path, [&](std::ostream& o) {
    write_synth_metadata(o, cfg.generation_config());
    o << "split=" << split << '\n' << "identities=" << first << ".." << last << '\n';
  });
}

void check_compatible(const Model& model, const Dataset& data) {
  if (data.empty()) throw ValidationError("dataset is empty");
  if (data.front().features.size() != model.encoder.dim_in())
    throw IoError("checkpoint expects " + std::to_string(model.encoder.dim_in()) +
                  "-dimensional features but the dataset has " + std::to_string(data.front().features.size()));
}

void print_summary(std::ostream& out, const char* kind, const MetricSummary& s) {
  out << kind << " accuracy " << format_double(s.acc_mean) << " +- " << format_double(s.acc_std) << "  eer "
      << format_double(s.eer_mean) << "  auc " << format_double(s.auc_mean) << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pose-gated embedding frontalization experiments"};
  app.require_subcommand(1);

  ConfigOptions gen_opts, train_opts, eval_opts, ablate_opts, dump_opts, curve_opts;

  auto* gen = app.add_subcommand("gen-data", "generate train.csv and eval.csv");
  add_config_options(gen, gen_opts);

  auto* train_cmd = app.add_subcommand("train", "train a model; writes checkpoint.bin and metrics.csv");
  add_config_options(train_cmd, train_opts);
  std::string train_data;
  train_cmd->add_option("--dataset", train_data, "training CSV (default <out-dir>/train.csv)");

  auto* eval_cmd = app.add_subcommand("eval", "verification report for a checkpoint");
  add_config_options(eval_cmd, eval_opts);
  std::string eval_ckpt, eval_data;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint (default <out-dir>/checkpoint.bin)");
  eval_cmd->add_option("--dataset", eval_data, "evaluation CSV (default <out-dir>/eval.csv)");

  auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  GradcheckOptions grad_opts;
  grad_cmd->add_option("--trials", grad_opts.trials, "random trials per component")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad_opts.seed, "trial seed");
  grad_cmd->add_flag("--inject-sign-error", grad_opts.inject_sign_error, "negate analytic gradients (self-test)");

  auto* curve_cmd = app.add_subcommand("gate-curve", "gate coefficient against yaw; writes gate_curve.csv");
  add_config_options(curve_cmd, curve_opts);
  double yaw_min = 0.0, yaw_max = 90.0, yaw_step = 1.0;
  curve_cmd->add_option("--yaw-min", yaw_min, "first yaw (degrees)");
  curve_cmd->add_option("--yaw-max", yaw_max, "last yaw (degrees)");
  curve_cmd->add_option("--yaw-step", yaw_step, "yaw increment (degrees)");

  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation matrix; writes ablation_<matrix>.csv and per-seed results");
  add_config_options(ablate_cmd, ablate_opts);
  std::string matrix;
  ablate_cmd->add_option("matrix", matrix, "table1, table2, table3 or lambda")
      ->required()
      ->check(CLI::IsMember({"table1", "table2", "table3", "lambda"}));
  std::string ablate_train, ablate_eval;
  ablate_cmd->add_option("--train-dataset", ablate_train, "training CSV (default: generated from the config)");
  ablate_cmd->add_option("--eval-dataset", ablate_eval, "evaluation CSV (default: generated from the config)");

  auto* dump_cmd = app.add_subcommand("dump", "embeddings.csv and topk.csv for a checkpoint");
  add_config_options(dump_cmd, dump_opts);
  std::string dump_ckpt, dump_data;
  dump_cmd->add_option("--checkpoint", dump_ckpt, "checkpoint (default <out-dir>/checkpoint.bin)");
  dump_cmd->add_option("--dataset", dump_data, "dataset CSV (default <out-dir>/eval.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) {
      const ExperimentConfig cfg = resolve_config(gen_opts);
      const fs::path dir = prepare_out_dir(cfg);
      const auto [train_set, eval_set] = generate_split(cfg);
      write_output(dir / "train.csv", [&](std::ostream& o) { write_dataset_csv(o, train_set); });
      write_meta(dir / "train.csv.meta", cfg, "train", 0, cfg.synth.num_identities - 1);
      write_output(dir / "eval.csv", [&](std::ostream& o) { write_dataset_csv(o, eval_set); });
      write_meta(dir / "eval.csv.meta", cfg, "eval", cfg.synth.num_identities,
                 cfg.synth.num_identities + cfg.eval_identities - 1);
      out << "wrote " << train_set.size() << " training and " << eval_set.size() << " evaluation samples to "
          << dir.string() << '\n';
    } else if (*train_cmd) {
      const ExperimentConfig cfg = resolve_config(train_opts);
      const fs::path dir = prepare_out_dir(cfg);
      const Dataset data = load_dataset(train_data.empty() ? dir / "train.csv" : fs::path(train_data));
      const TrainResult result = train(data, cfg.resolved_train());
      save_checkpoint(dir / "checkpoint.bin", result.model);
      write_output(dir / "metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, result.log); });
      if (result.skipped_pairs > 0)
        err << "warning: " << result.skipped_pairs << " pair terms skipped for all-zero frontal embeddings\n";
      if (!result.log.empty()) {
        const auto& last = result.log.back();
        out << "epoch " << last.epoch << " loss " << format_double(last.loss_total) << " (id "
            << format_double(last.loss_id) << ", pair " << format_double(last.loss_pair) << ")\n";
      }
    } else if (*eval_cmd) {
      const ExperimentConfig cfg = resolve_config(eval_opts);
      const fs::path dir = prepare_out_dir(cfg);
      const Model model = load_checkpoint(eval_ckpt.empty() ? dir / "checkpoint.bin" : fs::path(eval_ckpt));
      const Dataset data = load_dataset(eval_data.empty() ? dir / "eval.csv" : fs::path(eval_data));
      check_compatible(model, data);
      const VerificationReport report = evaluate_model(model, data, protocol_for(cfg, data));
      write_output(dir / "eval_report.csv", [&](std::ostream& o) { write_report_csv(o, report); });
      print_summary(out, "FF", report.frontal_frontal);
      print_summary(out, "FP", report.frontal_profile);
    } else if (*grad_cmd) {
      const std::vector<GradcheckRow> rows = run_gradcheck(grad_opts);
      write_gradcheck_csv(out, rows);
      if (!all_passed(rows)) {
        err << "gradient check failed\n";
        return kExitRuntime;
      }
    } else if (*curve_cmd) {
      const ExperimentConfig cfg = resolve_config(curve_opts);
      const fs::path dir = prepare_out_dir(cfg);
      const GateCurve curve = gate_curve(cfg.train.gate_config(), yaw_min, yaw_max, yaw_step);
      write_output(dir / "gate_curve.csv", [&](std::ostream& o) { curve.write_csv(o); });
      out << "wrote " << curve.rows.size() << " rows to " << (dir / "gate_curve.csv").string() << '\n';
    } else if (*ablate_cmd) {
      const ExperimentConfig cfg = resolve_config(ablate_opts);
      const fs::path dir = prepare_out_dir(cfg);
      Dataset train_set, eval_set;
      if (ablate_train.empty() != ablate_eval.empty())
        throw ValidationError("--train-dataset and --eval-dataset must be given together");
      if (ablate_train.empty()) {
        std::tie(train_set, eval_set) = generate_split(cfg);
      } else {
        train_set = load_dataset(ablate_train);
        eval_set = load_dataset(ablate_eval);
      }
      const TrainConfig base = cfg.resolved_train();
      std::vector<AblationVariant> variants;
      if (matrix == "table1") variants = table1_variants(base);
      else if (matrix == "table2") variants = table2_variants(base);
      else if (matrix == "table3") variants = table3_variants(base);
      else variants = lambda_sweep_variants(base);
      const auto rows = run_ablation(variants, train_set, eval_set, protocol_for(cfg, eval_set), cfg.ablation_seeds);
      const fs::path path = dir / ("ablation_" + matrix + ".csv");
      write_output(path, [&](std::ostream& o) { write_ablation_csv(o, rows); });
      write_output(dir / ("ablation_" + matrix + "_seeds.csv"), [&](std::ostream& o) { write_ablation_seeds_csv(o, rows); });
      for (const auto& r : rows) {
        out << r.variant << "  FP accuracy " << format_double(r.acc_mean) << " +- " << format_double(r.acc_std);
        if (r.converged < r.seeds.size()) out << "  (" << r.seeds.size() - r.converged << " diverged)";
        out << '\n';
      }
    } else if (*dump_cmd) {
      const ExperimentConfig cfg = resolve_config(dump_opts);
      const fs::path dir = prepare_out_dir(cfg);
      const Model model = load_checkpoint(dump_ckpt.empty() ? dir / "checkpoint.bin" : fs::path(dump_ckpt));
      const Dataset data = load_dataset(dump_data.empty() ? dir / "eval.csv" : fs::path(dump_data));
      check_compatible(model, data);
      const auto pairs = select_frontal_profile_pairs(data, static_cast<std::size_t>(cfg.dump_pairs));
      write_output(dir / "embeddings.csv", [&](std::ostream& o) { write_embeddings_csv(o, model, data); });
      write_output(dir / "topk.csv", [&](std::ostream& o) {
        write_topk_csv(o, model, data, pairs, static_cast<std::size_t>(cfg.topk));
      });
      out << "dumped " << data.size() << " embeddings and " << pairs.size() << " frontal-profile pairs\n";
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace posefront::cli
