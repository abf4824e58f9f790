// vqanon: synthetic corpus export, training, sweeps and report re-emission.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vqanon/errors.hpp"
#include "vqanon/experiment/sweep.hpp"

namespace fs = std::filesystem;
using namespace vqanon;

namespace {

enum Exit { kOk = 0, kConfigExit = 1, kRuntimeExit = 2, kIoExit = 3 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
  std::size_t jobs = 1;
};

ExperimentConfig load_config(const CommonFlags& f, bool required) {
  if (required && f.config.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : parse_config(fs::path(f.config));
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.format.empty()) cfg.format = parse_format(f.format);
  cfg.finalize();
  return cfg;
}

void print_paths(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) std::cout << p.string() << '\n';
}

int gen_data(const CommonFlags& f) {
  const ExperimentConfig cfg = load_config(f, false);
  fs::create_directories(cfg.output_dir);
  const fs::path path = cfg.output_dir / "corpus.csv";
  export_csv(generate(cfg.data), path);
  std::cout << path.string() << '\n';
  return kOk;
}

int train(const CommonFlags& f, std::size_t codebook_size) {
  const ExperimentConfig cfg = load_config(f, false);
  const ExperimentData data = prepare_data(cfg);
  const TrainedModel model = fit(data.train, cfg.encoder, row_train_config(cfg, codebook_size));
  const fs::path dir = cfg.output_dir / "models" / row_label(codebook_size);
  save_model(model, dir);
  std::ofstream curve(dir / "curve.csv");
  write_curve_csv(model.curve, curve);
  if (!curve) throw IoError("cannot write " + (dir / "curve.csv").string());
  std::cout << dir.string() << '\n';
  return kOk;
}

int sweep(const CommonFlags& f) {
  const ExperimentConfig cfg = load_config(f, true);
  SweepOptions opts;
  opts.jobs = f.jobs;
  opts.artifacts_dir = cfg.output_dir / "raw";
  const TradeoffReport report = run_sweep(cfg, opts);
  for (const auto& r : report.rows) {
    if (r.aborted) std::cerr << "row " << r.label << " aborted: " << r.diagnostic << '\n';
  }
  print_paths(emit_report(report, cfg.output_dir, cfg.format));
  return kOk;
}

int eval(const CommonFlags& f, const std::string& model_dir) {
  const ExperimentConfig cfg = load_config(f, false);
  const TrainedModel model = load_model(model_dir);
  const ExperimentData data = prepare_data(cfg);
  const std::size_t v = model.codebook ? model.codebook->size() : 0;
  BootstrapConfig b = cfg.bootstrap;
  b.seed = cfg.bootstrap_seed(v);
  TradeoffReport report;
  report.rows.push_back(summarize_row(v, evaluate_model(model, data), cfg.seed, b));
  print_paths(emit_report(report, cfg.output_dir, cfg.format));
  return kOk;
}

int report(const CommonFlags& f, std::string from) {
  const fs::path out = f.out.empty() ? fs::path("out") : fs::path(f.out);
  const ReportFormat format = f.format.empty() ? ReportFormat::kBoth : parse_format(f.format);
  if (from.empty()) from = (out / "raw").string();
  print_paths(emit_report(report_from_artifacts(from), out, format));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vector-quantized bottleneck anonymization experiments"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto add_common = [&](CLI::App* sub, bool with_jobs) {
    sub->add_option("--config", flags.config, "Experiment config file");
    sub->add_option("--seed", flags.seed, "Override the config seed");
    sub->add_option("--out", flags.out, "Output directory");
    sub->add_option("--format", flags.format, "Report format: csv, json or both");
    if (with_jobs) sub->add_option("--jobs", flags.jobs, "Rows trained in parallel")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen-data", "Export the synthetic corpus as CSV");
  add_common(gen, false);

  std::size_t codebook_size = 64;
  auto* tr = app.add_subcommand("train", "Train one model and save it");
  add_common(tr, false);
  tr->add_option("--codebook-size", codebook_size, "V; 0 trains the unquantized baseline");

  auto* sw = app.add_subcommand("sweep", "Train and evaluate every codebook size");
  add_common(sw, true);

  std::string model_dir;
  auto* ev = app.add_subcommand("eval", "Re-evaluate a saved model");
  add_common(ev, false);
  ev->add_option("--model", model_dir, "Directory written by train")->required();

  std::string from;
  auto* rp = app.add_subcommand("report", "Re-emit the report from saved raw scores");
  add_common(rp, false);
  rp->add_option("--from", from, "Raw artifacts directory (default <out>/raw)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigExit;
  }

  try {
    if (*gen) return gen_data(flags);
    if (*tr) return train(flags, codebook_size);
    if (*sw) return sweep(flags);
    if (*ev) return eval(flags, model_dir);
    if (*rp) return report(flags, from);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoExit;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeExit;
  }
  return kRuntimeExit;
}
