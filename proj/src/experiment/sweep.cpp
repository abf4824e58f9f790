#include "vqanon/experiment/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include <json.hpp>

#include "vqanon/errors.hpp"
#include "vqanon/io/text.hpp"

namespace vqanon {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCsvHeader =
    "config_label,codebook_size,eer,eer_ci_lo,eer_ci_hi,eer_groupA,eer_groupB,"
    "utility_err,util_ci_lo,util_ci_hi,perplexity,seed";
constexpr const char* kAbortedSuffix = ":aborted";

double rounded(double v) {
  if (std::isnan(v)) return v;
  return io::parse_double(io::sig6(v), "rounded value");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

TradeoffRow aborted_row(std::size_t v, std::uint64_t seed, std::string diagnostic) {
  const double nan = std::nan("");
  TradeoffRow row;
  row.label = row_label(v);
  row.codebook_size = v;
  row.aborted = true;
  row.diagnostic = std::move(diagnostic);
  row.eer = {nan, nan, nan, 0};
  row.eer_group_a = row.eer_group_b = nan;
  row.utility = {nan, nan, nan, 0};
  row.perplexity = nan;
  row.seed = seed;
  return row;
}

struct RowJob {
  std::size_t codebook_size = 0;
  TradeoffRow row;
  std::optional<TrainedModel> model;
  RowEvaluation eval;
};

void write_row_artifacts(const RowJob& job, const fs::path& dir) {
  const fs::path row_dir = dir / job.row.label;
  make_dirs(row_dir);
  if (job.model) {
    save_model(*job.model, row_dir);
    auto curve = open_out(row_dir / "curve.csv");
    write_curve_csv(job.model->curve, curve);
  }
  if (!job.row.aborted) {
    auto scores = open_out(row_dir / "scores.csv");
    write_scores_csv(job.eval.scores, scores);
    auto util = open_out(row_dir / "utility.csv");
    write_utility_csv(job.eval.utility, util);
  }
}

}  // namespace

std::string row_label(std::size_t codebook_size) {
  return codebook_size == 0 ? "no_vq" : "v" + std::to_string(codebook_size);
}

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData d;
  d.corpus = generate(cfg.data);
  d.train = d.corpus.training_part().utterances;
  d.evaluation = d.corpus.evaluation_part();
  d.split = split_enroll_test(d.evaluation, cfg.enroll_frames);
  return d;
}

TrainConfig row_train_config(const ExperimentConfig& cfg, std::size_t codebook_size) {
  TrainConfig t = cfg.train;
  t.vq_enabled = codebook_size != 0;
  if (t.vq_enabled) t.codebook_size = codebook_size;
  t.seed = cfg.train_seed(codebook_size);
  return t;
}

RowEvaluation evaluate_model(const TrainedModel& model, const ExperimentData& data) {
  RowEvaluation out;
  std::map<std::size_t, Matrix> released;
  std::vector<std::size_t> used;
  for (const auto& u : data.evaluation.utterances) {
    Matrix h = encode(u.features, model.params, model.encoder).bottleneck;
    if (model.codebook) {
      QuantizationResult q = quantize(h, *model.codebook);
      used.insert(used.end(), q.indices.begin(), q.indices.end());
      h = std::move(q.quantized);
    }
    released.emplace(u.utterance_id, std::move(h));
  }

  std::vector<Matrix> ef, tf;
  for (const auto& u : data.split.enroll) ef.push_back(released.at(u.utterance_id));
  for (const auto& u : data.split.test) tf.push_back(released.at(u.utterance_id));
  const TrialSet ts =
      build_trials_from_frames(data.evaluation, data.split.enroll, ef, data.split.test, tf);
  out.scores = score_records(ts, score_trials(ts));
  out.utility = utility_errors(model, data.evaluation.utterances);
  out.perplexity = model.codebook ? codebook_perplexity(used, model.codebook->size()) : std::nan("");
  return out;
}

TradeoffRow summarize_row(std::size_t codebook_size, const RowEvaluation& eval,
                          std::uint64_t seed, const BootstrapConfig& bootstrap) {
  TradeoffRow row;
  row.label = row_label(codebook_size);
  row.codebook_size = codebook_size;
  row.seed = seed;
  row.eer = bootstrap_eer(eval.scores, bootstrap);
  row.eer_group_a = group_eer(eval.scores, 'A');
  row.eer_group_b = group_eer(eval.scores, 'B');
  BootstrapConfig util_cfg = bootstrap;
  util_cfg.seed = RngStream(bootstrap.seed).child("utility").seed();
  row.utility = bootstrap_utility(eval.utility, util_cfg);
  row.perplexity = eval.perplexity;
  return row;
}

TradeoffReport run_sweep(const ExperimentConfig& cfg, const SweepOptions& options) {
  std::vector<std::size_t> sizes(cfg.codebook_sizes.begin(), cfg.codebook_sizes.end());
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  if (sizes.empty() && !cfg.include_no_vq_baseline) {
    throw ConfigError("sweep has no codebook sizes and no baseline");
  }
  if (cfg.include_no_vq_baseline) sizes.insert(sizes.begin(), 0);

  const ExperimentData data = prepare_data(cfg);
  std::vector<RowJob> jobs(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) jobs[i].codebook_size = sizes[i];

  auto run_one = [&](RowJob& job) {
    const TrainConfig tcfg = row_train_config(cfg, job.codebook_size);
    try {
      job.model = fit(data.train, cfg.encoder, tcfg);
    } catch (const NumericError& e) {
      job.row = aborted_row(job.codebook_size, cfg.seed, e.what());
      return;
    }
    job.eval = evaluate_model(*job.model, data);
    BootstrapConfig b = cfg.bootstrap;
    b.seed = cfg.bootstrap_seed(job.codebook_size);
    job.row = summarize_row(job.codebook_size, job.eval, cfg.seed, b);
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.jobs, jobs.size()));
  if (workers == 1) {
    for (auto& job : jobs) run_one(job);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
          try {
            run_one(jobs[i]);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  TradeoffReport report;
  for (const auto& job : jobs) report.rows.push_back(job.row);

  if (options.artifacts_dir) {
    const fs::path dir = *options.artifacts_dir;
    make_dirs(dir);
    for (const auto& job : jobs) write_row_artifacts(job, dir);
    auto manifest = open_out(dir / "manifest.txt");
    manifest << "vqanon-sweep 1\n";
    manifest << "bootstrap " << cfg.bootstrap.resamples << ' ' << io::exact(cfg.bootstrap.alpha)
             << '\n';
    for (const auto& job : jobs) {
      manifest << "row " << job.row.label << ' ' << job.codebook_size << ' ' << cfg.seed << ' '
               << cfg.bootstrap_seed(job.codebook_size) << ' '
               << (job.row.aborted ? "aborted" : "ok") << ' ' << io::exact(job.eval.perplexity);
      if (job.row.aborted) manifest << ' ' << job.row.diagnostic;
      manifest << '\n';
    }
    if (!manifest) throw IoError("failed writing sweep manifest");
  }
  return report;
}

void write_report_csv(const TradeoffReport& report, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : report.rows) {
    out << r.label << (r.aborted ? kAbortedSuffix : "") << ',' << r.codebook_size << ','
        << io::sig6(r.eer.value) << ',' << io::sig6(r.eer.ci_low) << ','
        << io::sig6(r.eer.ci_high) << ',' << io::sig6(r.eer_group_a) << ','
        << io::sig6(r.eer_group_b) << ',' << io::sig6(r.utility.value) << ','
        << io::sig6(r.utility.ci_low) << ',' << io::sig6(r.utility.ci_high) << ','
        << io::sig6(r.perplexity) << ',' << r.seed << '\n';
  }
  if (!out) throw IoError("failed writing report CSV");
}

void write_report_json(const TradeoffReport& report, std::ostream& out) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isnan(v)) return nullptr;
    return rounded(v);
  };
  for (const auto& r : report.rows) {
    nlohmann::ordered_json j;
    j["config_label"] = r.label;
    j["codebook_size"] = r.codebook_size;
    j["eer"] = num(r.eer.value);
    j["eer_ci_lo"] = num(r.eer.ci_low);
    j["eer_ci_hi"] = num(r.eer.ci_high);
    j["eer_groupA"] = num(r.eer_group_a);
    j["eer_groupB"] = num(r.eer_group_b);
    j["utility_err"] = num(r.utility.value);
    j["util_ci_lo"] = num(r.utility.ci_low);
    j["util_ci_hi"] = num(r.utility.ci_high);
    j["perplexity"] = num(r.perplexity);
    j["seed"] = r.seed;
    j["aborted"] = r.aborted;
    if (r.aborted) j["diagnostic"] = r.diagnostic;
    rows.push_back(std::move(j));
  }
  nlohmann::ordered_json doc;
  doc["rows"] = std::move(rows);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing report JSON");
}

TradeoffReport read_report_csv(std::istream& in) {
  io::expect_line(in, kCsvHeader);
  TradeoffReport report;
  std::string line;
  while (std::getline(in, line)) {
    if (io::trim(line).empty()) continue;
    const auto c = io::split(io::trim(line), ',');
    if (c.size() != 12) throw FormatError("report CSV row has " + std::to_string(c.size()) + " fields");
    TradeoffRow r;
    r.label = c[0];
    const std::string suffix = kAbortedSuffix;
    if (r.label.size() > suffix.size() &&
        r.label.compare(r.label.size() - suffix.size(), suffix.size(), suffix) == 0) {
      r.aborted = true;
      r.label.resize(r.label.size() - suffix.size());
    }
    r.codebook_size = io::parse_count(c[1], "codebook_size");
    r.eer.value = io::parse_double(c[2], "eer");
    r.eer.ci_low = io::parse_double(c[3], "eer_ci_lo");
    r.eer.ci_high = io::parse_double(c[4], "eer_ci_hi");
    r.eer_group_a = io::parse_double(c[5], "eer_groupA");
    r.eer_group_b = io::parse_double(c[6], "eer_groupB");
    r.utility.value = io::parse_double(c[7], "utility_err");
    r.utility.ci_low = io::parse_double(c[8], "util_ci_lo");
    r.utility.ci_high = io::parse_double(c[9], "util_ci_hi");
    r.perplexity = io::parse_double(c[10], "perplexity");
    r.seed = static_cast<std::uint64_t>(io::parse_count(c[11], "seed"));
    report.rows.push_back(std::move(r));
  }
  return report;
}

TradeoffReport read_report_json(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
  auto num = [](const nlohmann::json& v) {
    return v.is_null() ? std::nan("") : v.get<double>();
  };
  TradeoffReport report;
  try {
    for (const auto& j : doc.at("rows")) {
      TradeoffRow r;
      r.label = j.at("config_label").get<std::string>();
      r.codebook_size = j.at("codebook_size").get<std::size_t>();
      r.eer.value = num(j.at("eer"));
      r.eer.ci_low = num(j.at("eer_ci_lo"));
      r.eer.ci_high = num(j.at("eer_ci_hi"));
      r.eer_group_a = num(j.at("eer_groupA"));
      r.eer_group_b = num(j.at("eer_groupB"));
      r.utility.value = num(j.at("utility_err"));
      r.utility.ci_low = num(j.at("util_ci_lo"));
      r.utility.ci_high = num(j.at("util_ci_hi"));
      r.perplexity = num(j.at("perplexity"));
      r.seed = j.at("seed").get<std::uint64_t>();
      r.aborted = j.value("aborted", false);
      r.diagnostic = j.value("diagnostic", std::string());
      report.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
  return report;
}

std::vector<fs::path> emit_report(const TradeoffReport& report, const fs::path& dir,
                                  ReportFormat format) {
  if (report.rows.empty()) throw ConfigError("emit_report: report has no rows");
  make_dirs(dir);
  std::vector<fs::path> written;
  if (format != ReportFormat::kJson) {
    const fs::path p = dir / "report.csv";
    auto out = open_out(p);
    write_report_csv(report, out);
    written.push_back(p);
  }
  if (format != ReportFormat::kCsv) {
    const fs::path p = dir / "report.json";
    auto out = open_out(p);
    write_report_json(report, out);
    written.push_back(p);
  }
  return written;
}

TradeoffReport report_from_artifacts(const fs::path& artifacts_dir) {
  auto manifest = open_in(artifacts_dir / "manifest.txt");
  io::expect_line(manifest, "vqanon-sweep 1");
  const auto b = io::expect_record(manifest, "bootstrap");
  if (b.size() != 2) throw FormatError("manifest: malformed bootstrap record");
  BootstrapConfig bootstrap;
  bootstrap.resamples = io::parse_count(b[0], "resamples");
  bootstrap.alpha = io::parse_double(b[1], "alpha");

  TradeoffReport report;
  std::string line;
  while (std::getline(manifest, line)) {
    if (io::trim(line).empty()) continue;
    const auto t = io::split(io::trim(line), ' ');
    if (t.size() < 7 || t[0] != "row") throw FormatError("manifest: malformed row '" + line + "'");
    const std::size_t v = io::parse_count(t[2], "codebook_size");
    const auto seed = static_cast<std::uint64_t>(io::parse_count(t[3], "seed"));
    if (t[5] == "aborted") {
      std::string diag;
      for (std::size_t i = 7; i < t.size(); ++i) diag += (i > 7 ? " " : "") + t[i];
      report.rows.push_back(aborted_row(v, seed, diag));
      continue;
    }
    RowEvaluation eval;
    eval.perplexity = io::parse_double(t[6], "perplexity");
    auto scores = open_in(artifacts_dir / t[1] / "scores.csv");
    eval.scores = read_scores_csv(scores);
    auto util = open_in(artifacts_dir / t[1] / "utility.csv");
    eval.utility = read_utility_csv(util);
    bootstrap.seed = static_cast<std::uint64_t>(io::parse_count(t[4], "bootstrap_seed"));
    report.rows.push_back(summarize_row(v, eval, seed, bootstrap));
  }
  if (report.rows.empty()) throw FormatError("manifest lists no rows");
  return report;
}

void save_model(const TrainedModel& model, const fs::path& dir) {
  make_dirs(dir);
  {
    auto out = open_out(dir / "encoder.txt");
    save_params(model.encoder, model.params, out);
  }
  const fs::path cb = dir / "codebook.txt";
  if (model.codebook) {
    auto out = open_out(cb);
    save_codebook(*model.codebook, out);
  } else {
    std::error_code ec;
    fs::remove(cb, ec);
  }
}

TrainedModel load_model(const fs::path& dir) {
  TrainedModel model;
  {
    auto in = open_in(dir / "encoder.txt");
    EncoderSnapshot snap = load_params(in);
    model.encoder = snap.config;
    model.params = std::move(snap.params);
  }
  if (fs::exists(dir / "codebook.txt")) {
    auto in = open_in(dir / "codebook.txt");
    model.codebook = load_codebook(in);
    if (model.codebook->dim() != model.encoder.bottleneck_dim) {
      throw FormatError("codebook dimension does not match the encoder bottleneck");
    }
  }
  return model;
}

}  // namespace vqanon
