// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synthetic data generation, teacher training,
// distillation runs, evaluation, diagnostic reports and sweeps, all driven
// by one JSON configuration file. Artifacts land in per-command output
// directories together with a manifest that pins config and input hashes.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msd/artifacts.hpp"
#include "msd/checkpoint.hpp"
#include "msd/config.hpp"
#include "msd/csv.hpp"
#include "msd/data.hpp"
#include "msd/errors.hpp"
#include "msd/reports.hpp"
#include "msd/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::string output_root(const msd::RunConfig& cfg) {
  if (const char* env = std::getenv("MSD_OUTPUT_DIR"); env != nullptr && *env != '\0')
    return env;
  return cfg.output_dir;
}

std::string default_under_root(const msd::RunConfig& cfg, const std::string& leaf) {
  return (fs::path(output_root(cfg)) / leaf).string();
}

std::vector<msd::MultimodalSample> load_data_checked(const std::string& path) {
  std::vector<msd::MultimodalSample> data = msd::load_dataset(path);
  if (data.empty()) throw msd::ParseError("dataset is empty: " + path);
  return data;
}

void print_dataset_summary(const std::vector<msd::MultimodalSample>& data, int num_classes) {
  for (msd::Split split : {msd::Split::kTrain, msd::Split::kMeta, msd::Split::kTest}) {
    std::vector<int> counts(num_classes, 0);
    int total = 0;
    for (const msd::MultimodalSample& s : data)
      if (s.split == split) {
        ++counts[s.label.class_index];
        ++total;
      }
    std::cout << msd::split_name(split) << ": " << total << " samples, per class [";
    for (int c = 0; c < num_classes; ++c) std::cout << (c > 0 ? " " : "") << counts[c];
    std::cout << "]\n";
  }
}

void write_distill_run(const msd::RunConfig& cfg, const msd::StudentRunResult& run,
                       msd::Method method, std::uint64_t seed, const std::string& out_dir,
                       const std::string& data_path, const std::string& teacher_path) {
  fs::create_directories(out_dir);
  msd::save_checkpoint(run.student, (fs::path(out_dir) / "student.json").string());
  msd::save_checkpoint(run.final_student, (fs::path(out_dir) / "student_final.json").string());
  if (run.meta.has_value())
    msd::save_checkpoint(run.meta->body, (fs::path(out_dir) / "meta_net.json").string(),
                         /*sigmoid_output=*/true);
  msd::write_trace_csv((fs::path(out_dir) / "trace.csv").string(), run.trace);

  nlohmann::json summary;
  summary["method"] = msd::method_name(method);
  summary["seed"] = seed;
  summary["best_val_acc"] = run.best_val_acc;
  summary["final_val_acc"] = run.final_val_acc;
  std::ofstream sum(fs::path(out_dir) / "summary.json", std::ios::binary);
  sum << summary.dump(2) << '\n';

  std::map<std::string, std::string> inputs{{"data", data_path}};
  if (!teacher_path.empty()) inputs.emplace("teacher", teacher_path);
  msd::write_manifest(out_dir, "distill --method " + msd::method_name(method),
                      msd::config_to_json(cfg), {seed}, inputs);
}

msd::Method run_dir_method(const std::string& run_dir, std::uint64_t* seed_out) {
  const fs::path summary_path = fs::path(run_dir) / "summary.json";
  std::ifstream in(summary_path, std::ios::binary);
  if (!in) throw msd::MissingInputError("missing run summary: " + summary_path.string());
  nlohmann::json j;
  try {
    in >> j;
    if (seed_out != nullptr) *seed_out = j.at("seed").get<std::uint64_t>();
    return msd::method_from_name(j.at("method").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw msd::ParseError("bad run summary " + summary_path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

int cmd_gen_data(const msd::RunConfig& cfg, const std::string& out) {
  const std::vector<msd::MultimodalSample> data = msd::generate_dataset(cfg.data);
  if (const fs::path parent = fs::path(out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  msd::save_dataset(data, out);
  std::cout << "wrote " << data.size() << " samples to " << out << "\n";
  print_dataset_summary(data, cfg.data.num_classes);
  return 0;
}

int cmd_train_teacher(const msd::RunConfig& cfg, const std::string& data_path,
                      const std::string& out_dir) {
  const std::vector<msd::MultimodalSample> data = load_data_checked(data_path);
  const msd::TeacherResult result = msd::train_teacher(data, cfg.teacher_arch, cfg.teacher_train);
  fs::create_directories(out_dir);
  const std::string teacher_path = (fs::path(out_dir) / "teacher.json").string();
  msd::save_checkpoint(result.teacher, teacher_path);
  msd::write_manifest(out_dir, "train-teacher", msd::config_to_json(cfg),
                      {cfg.teacher_train.seed}, {{"data", data_path}});
  const msd::Metrics m = msd::evaluate_model(result.teacher, data, msd::Split::kTest);
  std::cout << "teacher saved to " << teacher_path << "\n";
  std::cout << "teacher test accuracy " << m.accuracy << " (best val " << result.best_val_acc
            << ")\n";
  return 0;
}

int cmd_distill(const msd::RunConfig& cfg, const std::string& method_str,
                const std::string& data_path, const std::string& teacher_path,
                const std::string& out_dir, std::optional<std::uint64_t> seed_opt) {
  const msd::Method method = msd::method_from_name(method_str);
  const std::vector<msd::MultimodalSample> data = load_data_checked(data_path);
  msd::DenseNet teacher;
  const bool needs_teacher = method != msd::Method::kSmall;
  if (needs_teacher) {
    if (teacher_path.empty()) throw msd::MissingInputError("distill: --teacher is required");
    teacher = msd::load_checkpoint(teacher_path);
  }
  const std::uint64_t seed = seed_opt.value_or(cfg.seeds.front());
  const msd::StudentRunResult run =
      msd::train_student(method, data, needs_teacher ? &teacher : nullptr, cfg, seed);
  write_distill_run(cfg, run, method, seed, out_dir, data_path,
                    needs_teacher ? teacher_path : "");
  const msd::Metrics m = msd::evaluate_model(run.student, data, msd::Split::kTest);
  std::cout << msd::method_name(method) << " seed " << seed << ": test accuracy " << m.accuracy
            << ", best val " << run.best_val_acc << "\n";
  return 0;
}

int cmd_evaluate(const msd::RunConfig& cfg, const std::string& data_path,
                 const std::string& run_dir, const std::string& model_path,
                 std::string method_str, std::optional<std::uint64_t> seed_opt,
                 const std::string& split_str, const std::string& out) {
  const std::vector<msd::MultimodalSample> data = load_data_checked(data_path);
  std::string model_file = model_path;
  std::uint64_t seed = seed_opt.value_or(cfg.seeds.front());
  if (!run_dir.empty()) {
    std::uint64_t run_seed = seed;
    method_str = msd::method_name(run_dir_method(run_dir, &run_seed));
    if (!seed_opt.has_value()) seed = run_seed;
    model_file = (fs::path(run_dir) / "student.json").string();
  } else if (method_str.empty()) {
    throw msd::ConfigError("evaluate: give --run, or --model with --method");
  }
  const msd::DenseNet model = msd::load_checkpoint(model_file);

  std::vector<msd::Split> splits;
  if (split_str == "all")
    splits = {msd::Split::kTrain, msd::Split::kMeta, msd::Split::kTest};
  else
    splits = {msd::split_from_name(split_str)};

  std::vector<msd::MetricsRow> rows;
  for (msd::Split split : splits)
    rows.push_back(
        msd::MetricsRow{method_str, seed, split, msd::evaluate_model(model, data, split)});
  if (const fs::path parent = fs::path(out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  msd::write_metrics_csv(out, rows);
  for (const msd::MetricsRow& r : rows)
    std::cout << r.method << " " << msd::split_name(r.split) << " accuracy "
              << r.metrics.accuracy << "\n";
  return 0;
}

int cmd_report(const msd::RunConfig& cfg, const std::string& kind, const std::string& data_path,
               const std::string& teacher_path, const std::vector<std::string>& run_dirs,
               const std::string& meta_net_path, int label_filter, const std::string& out) {
  if (const fs::path parent = fs::path(out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::map<std::string, std::string> inputs;

  if (kind == "heatmap") {
    if (meta_net_path.empty()) throw msd::MissingInputError("report heatmap: --meta-net required");
    bool sigmoid = false;
    msd::MetaNet meta;
    meta.body = msd::load_checkpoint(meta_net_path, &sigmoid);
    if (!sigmoid) throw msd::ParseError("checkpoint is not a sigmoid-output meta-net");
    msd::write_heatmap_csv(out, msd::heatmap_report(meta));
    inputs.emplace("meta_net", meta_net_path);
  } else if (kind == "curve") {
    // merge per-run traces into one long-form table of eval points
    msd::CsvWriter csv(out, {"method", "seed", "iteration", "test_acc"});
    for (const std::string& dir : run_dirs) {
      std::uint64_t seed = 0;
      const msd::Method method = run_dir_method(dir, &seed);
      const std::string trace_path = (fs::path(dir) / "trace.csv").string();
      std::ifstream in(trace_path, std::ios::binary);
      if (!in) throw msd::MissingInputError("missing trace: " + trace_path);
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        // iteration,student_loss,meta_loss,meta_grad_norm,test_acc
        const std::size_t last_comma = line.rfind(',');
        if (last_comma == std::string::npos || last_comma + 1 == line.size()) continue;
        const std::size_t first_comma = line.find(',');
        csv.cell(msd::method_name(method))
            .cell(static_cast<std::int64_t>(seed))
            .cell(line.substr(0, first_comma))
            .cell(line.substr(last_comma + 1));
        csv.end_row();
      }
      inputs.emplace("trace:" + dir, trace_path);
    }
  } else {
    const std::vector<msd::MultimodalSample> data = load_data_checked(data_path);
    if (teacher_path.empty()) throw msd::MissingInputError("report: --teacher required");
    const msd::DenseNet teacher = msd::load_checkpoint(teacher_path);
    inputs.emplace("data", data_path);
    inputs.emplace("teacher", teacher_path);
    if (kind == "gap") {
      std::vector<std::pair<std::string, msd::GapReport>> rows;
      for (const std::string& dir : run_dirs) {
        const msd::Method method = run_dir_method(dir, nullptr);
        const msd::DenseNet model =
            msd::load_checkpoint((fs::path(dir) / "student.json").string());
        rows.emplace_back(msd::method_name(method), msd::gap_report(teacher, model, data));
      }
      msd::write_gap_csv(out, rows);
    } else if (kind == "density") {
      std::vector<msd::DensityReport> reports;
      reports.push_back(
          msd::density_report("teacher", teacher, data, msd::Split::kTest, label_filter));
      for (const std::string& dir : run_dirs) {
        const msd::Method method = run_dir_method(dir, nullptr);
        const msd::DenseNet model =
            msd::load_checkpoint((fs::path(dir) / "student.json").string());
        reports.push_back(msd::density_report(msd::method_name(method), model, data,
                                              msd::Split::kTest, label_filter));
      }
      msd::write_density_csv(out, reports);
    } else if (kind == "scatter") {
      msd::write_scatter_csv(out, msd::dominance_scatter(teacher, data));
    } else {
      throw msd::ConfigError("unknown report kind '" + kind + "'");
    }
  }
  msd::write_manifest(fs::path(out).parent_path().string(), "report --kind " + kind,
                      msd::config_to_json(cfg), cfg.seeds, inputs);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_sweep(const msd::RunConfig& cfg, const std::string& kind, const std::string& data_path,
              const std::string& teacher_path, const std::string& out_dir, int jobs) {
  const std::vector<msd::MultimodalSample> data = load_data_checked(data_path);
  const msd::DenseNet teacher = msd::load_checkpoint(teacher_path);
  fs::create_directories(out_dir);

  if (kind == "population-grid") {
    const msd::GridSearchResult result = msd::grid_search_population(
        cfg.weighting.grid,
        [&](double w, double wv, double wt) {
          msd::RunConfig cell = cfg;
          cell.weighting.population_w = w;
          cell.weighting.population_w_v = wv;
          cell.weighting.population_w_t = wt;
          const msd::StudentRunResult run = msd::train_student(
              msd::Method::kMsdPopulation, data, &teacher, cell, cfg.seeds.front());
          return run.best_val_acc;
        },
        jobs);
    msd::CsvWriter csv((fs::path(out_dir) / "grid.csv").string(),
                       {"w", "w_v", "w_t", "val_accuracy", "status"});
    for (const msd::GridCellResult& cell : result.table) {
      csv.cell(cell.w).cell(cell.w_v).cell(cell.w_t);
      if (cell.error.empty())
        csv.cell(cell.metric).cell(std::string("ok"));
      else
        csv.cell(std::string("")).cell("failed: " + cell.error);
      csv.end_row();
    }
    nlohmann::json best;
    best["w"] = result.best[0];
    best["w_v"] = result.best[1];
    best["w_t"] = result.best[2];
    best["val_accuracy"] = result.best_metric;
    std::ofstream bj(fs::path(out_dir) / "best.json", std::ios::binary);
    bj << best.dump(2) << '\n';
    std::cout << "best population weights (" << result.best[0] << ", " << result.best[1] << ", "
              << result.best[2] << ") val accuracy " << result.best_metric << "\n";
  } else if (kind == "student-size") {
    const std::vector<msd::SizeSweepRow> rows =
        msd::size_sweep(cfg.sweep_sizes, data, teacher, cfg, cfg.seeds.front());
    msd::CsvWriter csv((fs::path(out_dir) / "size_sweep.csv").string(),
                       {"depth", "method", "accuracy", "auc", "macro_f1", "micro_f1"});
    for (const msd::SizeSweepRow& row : rows) {
      csv.cell(row.depth)
          .cell(msd::method_name(row.method))
          .cell(row.metrics.accuracy)
          .cell(row.metrics.auc)
          .cell(row.metrics.macro_f1)
          .cell(row.metrics.micro_f1);
      csv.end_row();
    }
    std::cout << "wrote " << (fs::path(out_dir) / "size_sweep.csv").string() << "\n";
  } else {
    throw msd::ConfigError("unknown sweep kind '" + kind + "'");
  }
  msd::write_manifest(out_dir, "sweep --kind " + kind, msd::config_to_json(cfg), cfg.seeds,
                      {{"data", data_path}, {"teacher", teacher_path}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modality-specific knowledge distillation experiments"};
  app.require_subcommand(1);

  std::string config_path, data_path, teacher_path, out, out_dir, method, kind, run_dir,
      model_path, meta_net_path, split = "all";
  std::vector<std::string> run_dirs;
  std::optional<std::uint64_t> seed_opt;
  std::uint64_t seed_value = 0;
  int jobs = 1, label_filter = -1;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "run configuration JSON")->required();
  gen->add_option("--out", out, "output JSONL path (.gz for gzip)");

  CLI::App* teach = app.add_subcommand("train-teacher", "train and freeze the teacher");
  teach->add_option("--config", config_path)->required();
  teach->add_option("--data", data_path)->required();
  teach->add_option("--out-dir", out_dir, "artifact directory");

  CLI::App* distill = app.add_subcommand("distill", "train a student");
  distill->add_option("--config", config_path)->required();
  distill->add_option("--data", data_path)->required();
  distill->add_option("--teacher", teacher_path, "teacher checkpoint (all methods except small)");
  distill->add_option("--method", method,
                      "small|kd|msd-population|msd-importance|msd-correctness|msd-meta");
  distill->add_option("--seed", seed_value, "training seed (default: first config seed)");
  distill->add_option("--out-dir", out_dir);

  CLI::App* eval = app.add_subcommand("evaluate", "compute metrics for a checkpoint");
  eval->add_option("--config", config_path)->required();
  eval->add_option("--data", data_path)->required();
  eval->add_option("--run", run_dir, "distill run directory");
  eval->add_option("--model", model_path, "explicit checkpoint path");
  eval->add_option("--method", method, "method label when --model is used");
  eval->add_option("--seed", seed_value, "seed label when --model is used");
  eval->add_option("--split", split, "train|meta|test|all");
  eval->add_option("--out", out, "metrics CSV path");

  CLI::App* report = app.add_subcommand("report", "diagnostic artifacts");
  report->add_option("--config", config_path)->required();
  report->add_option("--kind", kind, "gap|density|heatmap|curve|scatter")->required();
  report->add_option("--data", data_path);
  report->add_option("--teacher", teacher_path);
  report->add_option("--runs", run_dirs, "distill run directories")->delimiter(',');
  report->add_option("--meta-net", meta_net_path, "meta-net checkpoint (heatmap)");
  report->add_option("--label-filter", label_filter, "restrict density to one label");
  report->add_option("--out", out, "output CSV path");

  CLI::App* sweep = app.add_subcommand("sweep", "grid and size sweeps");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--kind", kind, "population-grid|student-size")->required();
  sweep->add_option("--data", data_path)->required();
  sweep->add_option("--teacher", teacher_path)->required();
  sweep->add_option("--out-dir", out_dir);
  sweep->add_option("--jobs", jobs, "parallel cells");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const msd::RunConfig cfg = msd::load_config(config_path);
    if (gen->parsed()) {
      if (out.empty()) out = default_under_root(cfg, "data.jsonl");
      return cmd_gen_data(cfg, out);
    }
    if (teach->parsed()) {
      if (out_dir.empty()) out_dir = default_under_root(cfg, "teacher");
      return cmd_train_teacher(cfg, data_path, out_dir);
    }
    if (distill->parsed()) {
      if (method.empty()) method = cfg.weighting.scheme;
      if (distill->count("--seed") > 0) seed_opt = seed_value;
      if (out_dir.empty())
        out_dir = default_under_root(
            cfg,
            "run-" + method + "-seed" + std::to_string(seed_opt.value_or(cfg.seeds.front())));
      return cmd_distill(cfg, method, data_path, teacher_path, out_dir, seed_opt);
    }
    if (eval->parsed()) {
      if (eval->count("--seed") > 0) seed_opt = seed_value;
      if (out.empty()) out = default_under_root(cfg, "metrics.csv");
      return cmd_evaluate(cfg, data_path, run_dir, model_path, method, seed_opt, split, out);
    }
    if (report->parsed()) {
      if (out.empty()) out = default_under_root(cfg, kind + ".csv");
      return cmd_report(cfg, kind, data_path, teacher_path, run_dirs, meta_net_path,
                        label_filter, out);
    }
    if (sweep->parsed()) {
      if (out_dir.empty()) out_dir = default_under_root(cfg, "sweep-" + kind);
      return cmd_sweep(cfg, kind, data_path, teacher_path, out_dir, jobs);
    }
  } catch (const msd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const msd::ParamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const msd::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const msd::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const msd::NumericError& e) {
    std::cerr << "numeric divergence: " << e.what() << "\n";
    return 3;
  } catch (const msd::MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
