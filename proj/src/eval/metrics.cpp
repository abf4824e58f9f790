#include "vqanon/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <string>

#include "vqanon/errors.hpp"
#include "vqanon/io/text.hpp"
#include "vqanon/simd/kernels.hpp"

namespace vqanon {

PooledEmbedding pool_embedding(const Matrix& frames) {
  if (frames.rows() == 0) throw EmptyInputError("pool_embedding: no frames");
  PooledEmbedding out;
  out.vector.assign(frames.cols(), 0.0);
  for (std::size_t j = 0; j < frames.rows(); ++j)
    for (std::size_t c = 0; c < frames.cols(); ++c) out.vector[c] += frames(j, c);
  const double inv = 1.0 / static_cast<double>(frames.rows());
  double norm2 = 0.0;
  for (auto& v : out.vector) {
    v *= inv;
    norm2 += v * v;
  }
  if (norm2 == 0.0) {
    out.zero = true;
    return out;
  }
  const double inv_norm = 1.0 / std::sqrt(norm2);
  for (auto& v : out.vector) v *= inv_norm;
  return out;
}

Matrix released_representation(const TrainedModel& model, const Matrix& features) {
  Matrix h = encode(features, model.params, model.encoder).bottleneck;
  if (!model.codebook) return h;
  return quantize(h, *model.codebook).quantized;
}

const PooledEmbedding& TrialSet::enrollment(std::size_t speaker) const {
  const auto it = std::lower_bound(enrolled_speakers.begin(), enrolled_speakers.end(), speaker);
  if (it == enrolled_speakers.end() || *it != speaker) {
    throw ProtocolError("speaker " + std::to_string(speaker) + " has no enrollment");
  }
  return enroll_embeddings[static_cast<std::size_t>(it - enrolled_speakers.begin())];
}

TrialSet build_trials_from_frames(const Dataset& roster,
                                  std::span<const FrameSequence> enroll,
                                  std::span<const Matrix> enroll_frames,
                                  std::span<const FrameSequence> test,
                                  std::span<const Matrix> test_frames) {
  if (enroll.size() != enroll_frames.size() || test.size() != test_frames.size()) {
    throw ShapeError("build_trials: frames do not match utterances");
  }
  std::set<std::size_t> enroll_ids;
  std::map<std::size_t, std::vector<Matrix>> per_speaker;
  for (std::size_t i = 0; i < enroll.size(); ++i) {
    enroll_ids.insert(enroll[i].utterance_id);
    per_speaker[enroll[i].speaker_id].push_back(enroll_frames[i]);
  }

  TrialSet ts;
  for (const auto& [spk, parts] : per_speaker) {
    ts.enrolled_speakers.push_back(spk);
    ts.enroll_embeddings.push_back(pool_embedding(vstack(parts)));
  }
  for (std::size_t u = 0; u < test.size(); ++u) {
    if (enroll_ids.count(test[u].utterance_id)) {
      throw ProtocolError("utterance " + std::to_string(test[u].utterance_id) +
                          " is in both enrollment and test");
    }
    if (!per_speaker.count(test[u].speaker_id)) {
      throw ProtocolError("test speaker " + std::to_string(test[u].speaker_id) +
                          " has no enrollment");
    }
    ts.test_utterance_ids.push_back(test[u].utterance_id);
    ts.test_embeddings.push_back(pool_embedding(test_frames[u]));
    const SpeakerGroup tg = roster.speaker(test[u].speaker_id).group;
    for (std::size_t spk : ts.enrolled_speakers) {
      ts.trials.push_back({u, spk, spk == test[u].speaker_id, tg, roster.speaker(spk).group});
    }
  }
  return ts;
}

TrialSet build_trials(const TrainedModel& model, const Dataset& roster,
                      std::span<const FrameSequence> enroll,
                      std::span<const FrameSequence> test) {
  std::vector<Matrix> ef, tf;
  for (const auto& u : enroll) ef.push_back(released_representation(model, u.features));
  for (const auto& u : test) tf.push_back(released_representation(model, u.features));
  return build_trials_from_frames(roster, enroll, ef, test, tf);
}

std::vector<double> TrialScores::target_scores(const TrialSet& ts) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < ts.trials.size(); ++i)
    if (ts.trials[i].is_target) out.push_back(scores[i]);
  return out;
}

std::vector<double> TrialScores::impostor_scores(const TrialSet& ts) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < ts.trials.size(); ++i)
    if (!ts.trials[i].is_target) out.push_back(scores[i]);
  return out;
}

TrialScores score_trials(const TrialSet& ts) {
  const auto& k = simd::active();
  TrialScores out;
  out.scores.reserve(ts.trials.size());
  for (const auto& t : ts.trials) {
    const PooledEmbedding& a = ts.test_embeddings.at(t.test_utterance);
    const PooledEmbedding& b = ts.enrollment(t.claimed_speaker);
    if (a.zero || b.zero) {
      out.scores.push_back(0.0);
      ++out.zero_embedding_trials;
      continue;
    }
    const double s = k.dot(a.vector.data(), b.vector.data(), a.vector.size());
    out.scores.push_back(std::clamp(s, -1.0, 1.0));
  }
  return out;
}

double compute_eer(std::span<const double> target_scores,
                   std::span<const double> impostor_scores) {
  if (target_scores.empty() || impostor_scores.empty()) {
    throw EmptyInputError("compute_eer: need at least one target and one impostor score");
  }
  struct Point {
    double score;
    bool target;
  };
  std::vector<Point> pts;
  pts.reserve(target_scores.size() + impostor_scores.size());
  for (double s : target_scores) pts.push_back({s, true});
  for (double s : impostor_scores) pts.push_back({s, false});
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.score < b.score; });

  const double nt = static_cast<double>(target_scores.size());
  const double ni = static_cast<double>(impostor_scores.size());
  // Threshold at the lowest score accepts everything.
  double prev_frr = 0.0;
  double prev_far = 1.0;
  std::size_t targets_below = 0;
  std::size_t impostors_below = 0;
  std::size_t i = 0;
  while (true) {
    double frr = 1.0;
    double far = 0.0;
    // Move past the group of equal scores at the current threshold.
    if (i < pts.size()) {
      const double s = pts[i].score;
      while (i < pts.size() && pts[i].score == s) {
        (pts[i].target ? targets_below : impostors_below) += 1;
        ++i;
      }
      if (i < pts.size()) {
        frr = static_cast<double>(targets_below) / nt;
        far = (ni - static_cast<double>(impostors_below)) / ni;
      }
    }
    const double d_prev = prev_frr - prev_far;
    const double d = frr - far;
    if (d_prev >= 0.0) return prev_frr;
    if (d >= 0.0) {
      if (d == 0.0) return frr;
      const double t = -d_prev / (d - d_prev);
      return prev_frr + t * (frr - prev_frr);
    }
    prev_frr = frr;
    prev_far = far;
  }
}

void BootstrapConfig::validate() const {
  if (resamples == 0) throw ConfigError("bootstrap.resamples must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("bootstrap.alpha must lie in (0, 1)");
}

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw EmptyInputError("percentile: no values");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

MetricWithCI percentile_interval(double value, std::vector<double> stats, double alpha) {
  std::sort(stats.begin(), stats.end());
  MetricWithCI m;
  m.value = value;
  m.num_resamples = stats.size();
  m.ci_low = std::min(value, percentile(stats, alpha / 2.0));
  m.ci_high = std::max(value, percentile(stats, 1.0 - alpha / 2.0));
  return m;
}

MetricWithCI bootstrap_ci(std::size_t sample_size,
                          const std::function<double(std::span<const std::size_t>)>& metric,
                          const BootstrapConfig& cfg) {
  cfg.validate();
  if (sample_size == 0) throw EmptyInputError("bootstrap_ci: empty sample");
  std::vector<std::size_t> idx(sample_size);
  std::iota(idx.begin(), idx.end(), 0);
  const double value = metric(idx);
  const RngStream root(cfg.seed);
  std::vector<double> stats(cfg.resamples);
  for (std::size_t b = 0; b < cfg.resamples; ++b) {
    RngStream rng = root.child("bootstrap", b);
    for (auto& i : idx) i = rng.index(sample_size);
    stats[b] = metric(idx);
  }
  return percentile_interval(value, std::move(stats), cfg.alpha);
}

MetricWithCI bootstrap_eer(std::span<const double> target_scores,
                           std::span<const double> impostor_scores,
                           const BootstrapConfig& cfg) {
  cfg.validate();
  const double value = compute_eer(target_scores, impostor_scores);
  const RngStream root(cfg.seed);
  std::vector<double> tgt(target_scores.size());
  std::vector<double> imp(impostor_scores.size());
  std::vector<double> stats(cfg.resamples);
  for (std::size_t b = 0; b < cfg.resamples; ++b) {
    RngStream rng = root.child("bootstrap", b);
    for (auto& s : tgt) s = target_scores[rng.index(target_scores.size())];
    for (auto& s : imp) s = impostor_scores[rng.index(impostor_scores.size())];
    stats[b] = compute_eer(tgt, imp);
  }
  return percentile_interval(value, std::move(stats), cfg.alpha);
}

std::vector<UtteranceErrors> utility_errors(const TrainedModel& model,
                                            std::span<const FrameSequence> seqs) {
  std::vector<UtteranceErrors> out;
  for (const auto& u : seqs) {
    const Matrix logits = head_logits(released_representation(model, u.features), model.params);
    const auto labels = subsample_labels(u.labels, model.encoder.subsample_factor);
    if (labels.size() != logits.rows()) throw ShapeError("utility_error: label/frame mismatch");
    UtteranceErrors e{u.utterance_id, 0, labels.size()};
    for (std::size_t j = 0; j < logits.rows(); ++j) {
      const auto row = logits.row(j);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best != labels[j]) ++e.errors;
    }
    out.push_back(e);
  }
  return out;
}

double utility_error(std::span<const UtteranceErrors> per_utterance) {
  std::size_t errors = 0, frames = 0;
  for (const auto& e : per_utterance) {
    errors += e.errors;
    frames += e.frames;
  }
  if (frames == 0) throw EmptyInputError("utility_error: no frames");
  return static_cast<double>(errors) / static_cast<double>(frames);
}

double utility_error(const TrainedModel& model, std::span<const FrameSequence> seqs) {
  const auto per = utility_errors(model, seqs);
  return utility_error(per);
}

MetricWithCI bootstrap_utility(std::span<const UtteranceErrors> per_utterance,
                               const BootstrapConfig& cfg) {
  return bootstrap_ci(
      per_utterance.size(),
      [&](std::span<const std::size_t> idx) {
        std::size_t errors = 0, frames = 0;
        for (std::size_t i : idx) {
          errors += per_utterance[i].errors;
          frames += per_utterance[i].frames;
        }
        return static_cast<double>(errors) / static_cast<double>(frames);
      },
      cfg);
}

char trial_group(const Trial& t) {
  if (t.test_group != t.claimed_group || t.test_group == SpeakerGroup::kTrain) return 'X';
  return group_tag(t.test_group);
}

std::vector<ScoreRecord> score_records(const TrialSet& ts, const TrialScores& scores) {
  if (scores.scores.size() != ts.trials.size()) throw ShapeError("score_records: size mismatch");
  std::vector<ScoreRecord> out;
  out.reserve(ts.trials.size());
  for (std::size_t i = 0; i < ts.trials.size(); ++i) {
    const Trial& t = ts.trials[i];
    out.push_back({i, t.claimed_speaker, t.is_target, trial_group(t), scores.scores[i]});
  }
  return out;
}

namespace {

void split_scores(std::span<const ScoreRecord> records, char group,
                  std::vector<double>& tgt, std::vector<double>& imp) {
  for (const auto& r : records) {
    if (group != 0 && r.group != group) continue;
    (r.is_target ? tgt : imp).push_back(r.score);
  }
}

}  // namespace

double pooled_eer(std::span<const ScoreRecord> records) {
  std::vector<double> tgt, imp;
  split_scores(records, 0, tgt, imp);
  return compute_eer(tgt, imp);
}

double group_eer(std::span<const ScoreRecord> records, char group) {
  std::vector<double> tgt, imp;
  split_scores(records, group, tgt, imp);
  if (tgt.empty() || imp.empty()) return std::nan("");
  return compute_eer(tgt, imp);
}

MetricWithCI bootstrap_eer(std::span<const ScoreRecord> records, const BootstrapConfig& cfg) {
  std::vector<double> tgt, imp;
  split_scores(records, 0, tgt, imp);
  return bootstrap_eer(tgt, imp, cfg);
}

void write_scores_csv(std::span<const ScoreRecord> records, std::ostream& out) {
  out << "trial_id,claimed_speaker,is_target,group,score\n";
  for (const auto& r : records) {
    out << r.trial_id << ',' << r.claimed_speaker << ',' << (r.is_target ? 1 : 0) << ','
        << r.group << ',' << io::exact(r.score) << '\n';
  }
  if (!out) throw IoError("failed writing score file");
}

std::vector<ScoreRecord> read_scores_csv(std::istream& in) {
  io::expect_line(in, "trial_id,claimed_speaker,is_target,group,score");
  std::vector<ScoreRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (io::trim(line).empty()) continue;
    const auto c = io::split(io::trim(line), ',');
    if (c.size() != 5 || c[3].size() != 1 || (c[2] != "0" && c[2] != "1")) {
      throw FormatError("malformed score line '" + line + "'");
    }
    out.push_back({io::parse_count(c[0], "trial_id"), io::parse_count(c[1], "claimed_speaker"),
                   c[2] == "1", c[3][0], io::parse_double(c[4], "score")});
  }
  return out;
}

void write_utility_csv(std::span<const UtteranceErrors> rows, std::ostream& out) {
  out << "utterance_id,errors,frames\n";
  for (const auto& r : rows) out << r.utterance_id << ',' << r.errors << ',' << r.frames << '\n';
  if (!out) throw IoError("failed writing utility file");
}

std::vector<UtteranceErrors> read_utility_csv(std::istream& in) {
  io::expect_line(in, "utterance_id,errors,frames");
  std::vector<UtteranceErrors> out;
  std::string line;
  while (std::getline(in, line)) {
    if (io::trim(line).empty()) continue;
    const auto c = io::split(io::trim(line), ',');
    if (c.size() != 3) throw FormatError("malformed utility line '" + line + "'");
    out.push_back({io::parse_count(c[0], "utterance_id"), io::parse_count(c[1], "errors"),
                   io::parse_count(c[2], "frames")});
  }
  return out;
}

}  // namespace vqanon
