#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "vqanon/data/synth.hpp"
#include "vqanon/errors.hpp"

using namespace vqanon;

namespace {

std::vector<double> pooled(const FrameSequence& u) {
  std::vector<double> m(u.features.cols(), 0.0);
  for (std::size_t t = 0; t < u.frames(); ++t)
    for (std::size_t d = 0; d < m.size(); ++d) m[d] += u.features(t, d) / u.frames();
  return m;
}

DatasetSpec small_spec() {
  DatasetSpec s;
  s.num_speakers = 6;
  s.num_train_speakers = 2;
  s.utterances_per_speaker = 4;
  s.frames_per_utterance = 30;
  s.seed = 3;
  return s;
}

}  // namespace

TEST_CASE("generation is deterministic and seed-sensitive") {
  const DatasetSpec s = small_spec();
  const Dataset a = generate(s);
  CHECK(a == generate(s));
  DatasetSpec other = s;
  other.seed = 4;
  CHECK(!(a == generate(other)));
  CHECK(a.utterances.size() == 32);
  CHECK(a.total_frames() == 32 * 30);
}

TEST_CASE("rosters and groups") {
  const Dataset ds = generate(small_spec());
  std::map<SpeakerGroup, int> count;
  for (const auto& s : ds.speakers) ++count[s.group];
  CHECK(count[SpeakerGroup::kA] == 3);
  CHECK(count[SpeakerGroup::kB] == 3);
  CHECK(count[SpeakerGroup::kTrain] == 2);
  const Dataset eval = ds.evaluation_part();
  const Dataset train = ds.training_part();
  CHECK(eval.utterances.size() == 24);
  CHECK(train.utterances.size() == 8);
  for (const auto& u : train.utterances) CHECK(ds.speaker(u.speaker_id).group == SpeakerGroup::kTrain);
  for (const auto& u : eval.utterances) CHECK(ds.speaker(u.speaker_id).group != SpeakerGroup::kTrain);
  CHECK_THROWS_AS(ds.speaker(99), ProtocolError);
  CHECK(parse_group_tag(group_tag(SpeakerGroup::kB)) == SpeakerGroup::kB);
  CHECK_THROWS_AS(parse_group_tag('Z'), FormatError);
}

TEST_CASE("without speaker offsets or noise, frames depend on content only") {
  DatasetSpec s = small_spec();
  s.speaker_strength = 0.0;
  s.noise_sigma = 0.0;
  const Dataset ds = generate(s);
  std::map<std::size_t, std::vector<double>> seen;
  for (const auto& u : ds.utterances)
    for (std::size_t t = 0; t < u.frames(); ++t) {
      const std::vector<double> row(u.features.row(t).begin(), u.features.row(t).end());
      auto [it, fresh] = seen.emplace(u.labels[t], row);
      if (!fresh) CHECK(it->second == row);
    }
}

TEST_CASE("strong speaker offsets are easy to verify from pooled features") {
  DatasetSpec s;
  s.speaker_strength = 2.0;
  s.noise_sigma = 0.1;
  s.num_train_speakers = 0;
  s.seed = 12;
  const Dataset ds = generate(s);
  const EnrollTestSplit split = split_enroll_test(ds, 240);

  // Nearest-class-mean verifier: score = -distance to the claimed speaker's
  // mean enrollment vector.
  std::map<std::size_t, std::vector<double>> means;
  std::map<std::size_t, int> n;
  for (const auto& u : split.enroll) {
    auto p = pooled(u);
    auto& m = means[u.speaker_id];
    m.resize(p.size(), 0.0);
    for (std::size_t d = 0; d < p.size(); ++d) m[d] += p[d];
    ++n[u.speaker_id];
  }
  for (auto& [spk, m] : means)
    for (auto& v : m) v /= n[spk];
  std::vector<double> tgt, imp;
  for (const auto& u : split.test) {
    const auto p = pooled(u);
    for (const auto& [spk, m] : means) {
      const double score = -std::sqrt(oracle::direct_sq_distance(p, m));
      (spk == u.speaker_id ? tgt : imp).push_back(score);
    }
  }
  CHECK(oracle::eer(tgt, imp) < 0.05);
}

TEST_CASE("content labels are independent of the speaker") {
  DatasetSpec s;
  s.num_speakers = 10;
  s.num_train_speakers = 0;
  s.num_content_classes = 5;
  s.utterances_per_speaker = 10;
  s.frames_per_utterance = 100;
  // Unit-length runs make every frame label an independent draw, which the
  // chi-square statistic assumes.
  s.mean_segment_length = 1.0;
  s.seed = 21;
  const Dataset ds = generate(s);
  std::vector<std::vector<double>> table(10, std::vector<double>(5, 0.0));
  for (const auto& u : ds.utterances)
    for (auto l : u.labels) table[u.speaker_id][l] += 1.0;
  const double total = 10000.0;
  std::vector<double> rows(10, 0.0), cols(5, 0.0);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      rows[i] += table[i][j];
      cols[j] += table[i][j];
    }
  double chi2 = 0.0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const double e = rows[i] * cols[j] / total;
      chi2 += (table[i][j] - e) * (table[i][j] - e) / e;
    }
  // 99% quantile of chi-square with 36 dof (Wilson-Hilferty).
  const double df = 36.0, z = 2.3263;
  const double crit = df * std::pow(1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df)), 3.0);
  CHECK(chi2 < crit);
}

TEST_CASE("segment lengths average the configured mean") {
  DatasetSpec s;
  s.num_speakers = 2;
  s.num_train_speakers = 0;
  s.num_content_classes = 50;
  s.utterances_per_speaker = 5;
  s.frames_per_utterance = 3000;
  const Dataset ds = generate(s);
  double runs = 0.0, frames = 0.0;
  for (const auto& u : ds.utterances) {
    runs += 1.0;
    for (std::size_t t = 1; t < u.labels.size(); ++t) runs += u.labels[t] != u.labels[t - 1];
    frames += static_cast<double>(u.labels.size());
  }
  // Adjacent segments share a label with probability 1/P and merge.
  CHECK(std::abs(frames / runs - 3.0 * 50.0 / 49.0) < 0.1);
}

TEST_CASE("speaker separation grows with speaker strength") {
  double last = -1.0;
  for (double alpha : {0.0, 0.5, 1.0, 2.0}) {
    DatasetSpec s = small_spec();
    s.speaker_strength = alpha;
    const Dataset ds = generate(s).evaluation_part();
    std::map<std::size_t, std::vector<double>> spk_mean;
    for (const auto& u : ds.utterances) {
      auto p = pooled(u);
      auto& m = spk_mean[u.speaker_id];
      m.resize(p.size(), 0.0);
      for (std::size_t d = 0; d < p.size(); ++d) m[d] += p[d] / s.utterances_per_speaker;
    }
    double sum = 0.0;
    for (const auto& [a, ma] : spk_mean)
      for (const auto& [b, mb] : spk_mean)
        if (a < b) sum += std::sqrt(oracle::direct_sq_distance(ma, mb));
    CHECK(sum > last);
    last = sum;
  }
}

TEST_CASE("enroll/test split") {
  DatasetSpec s = small_spec();
  s.utterances_per_speaker = 2;
  const Dataset ds = generate(s);
  EnrollTestSplit split = split_enroll_test(ds, s.frames_per_utterance);
  CHECK(split.enroll.size() == 8);
  CHECK(split.test.size() == 8);

  const Dataset big = generate(small_spec());
  for (std::size_t budget : {1u, 30u, 31u, 60u, 75u, 90u}) {
    split = split_enroll_test(big, budget);
    std::set<std::size_t> enroll_ids, test_ids;
    std::map<std::size_t, std::size_t> frames;
    std::map<std::size_t, std::size_t> last_frames;
    for (const auto& u : split.enroll) {
      enroll_ids.insert(u.utterance_id);
      frames[u.speaker_id] += u.frames();
      last_frames[u.speaker_id] = u.frames();
    }
    for (const auto& u : split.test) test_ids.insert(u.utterance_id);
    for (auto id : enroll_ids) CHECK(test_ids.count(id) == 0);
    CHECK(enroll_ids.size() + test_ids.size() == big.utterances.size());
    for (const auto& [spk, f] : frames) {
      CHECK(f >= budget);
      CHECK(f - last_frames[spk] < budget);
    }
  }
  CHECK_THROWS_AS(split_enroll_test(big, 120), ProtocolError);
  CHECK_THROWS_AS(split_enroll_test(big, 0), ProtocolError);
}

TEST_CASE("csv round trip") {
  const Dataset ds = generate(small_spec());
  std::stringstream ss;
  export_csv(ds, ss);
  const std::string text = ss.str();
  CHECK(text.rfind("utterance_id,speaker_id,group,frame_index,content_label,f0,", 0) == 0);
  std::istringstream in(text);
  CHECK(import_csv(in, ds.num_content_classes) == ds);
  std::istringstream bad("utterance_id,speaker\n");
  CHECK_THROWS_AS(import_csv(bad), FormatError);
}

TEST_CASE("spec validation") {
  DatasetSpec s;
  s.utterances_per_speaker = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.noise_sigma = -1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}
