#include "vqanon/data/synth.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>

#include "vqanon/errors.hpp"
#include "vqanon/io/text.hpp"
#include "vqanon/numerics/rng.hpp"

namespace vqanon {

void DatasetSpec::validate() const {
  auto positive = [](std::size_t v, const char* key) {
    if (v == 0) throw ConfigError(std::string("data.") + key + " must be >= 1");
  };
  positive(num_speakers, "num_speakers");
  positive(num_content_classes, "num_content_classes");
  positive(feature_dim, "feature_dim");
  positive(utterances_per_speaker, "utterances_per_speaker");
  positive(frames_per_utterance, "frames_per_utterance");
  if (utterances_per_speaker < 2) {
    throw ConfigError("data.utterances_per_speaker must be >= 2 for enroll/test splits");
  }
  if (!(speaker_strength >= 0.0)) throw ConfigError("data.speaker_strength must be >= 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("data.noise_sigma must be >= 0");
  if (!(mean_segment_length >= 1.0)) {
    throw ConfigError("data.mean_segment_length must be >= 1");
  }
}

char group_tag(SpeakerGroup g) {
  switch (g) {
    case SpeakerGroup::kA:
      return 'A';
    case SpeakerGroup::kB:
      return 'B';
    case SpeakerGroup::kTrain:
      return 'T';
  }
  return '?';
}

SpeakerGroup parse_group_tag(char c) {
  switch (c) {
    case 'A':
      return SpeakerGroup::kA;
    case 'B':
      return SpeakerGroup::kB;
    case 'T':
      return SpeakerGroup::kTrain;
    default:
      throw FormatError(std::string("unknown speaker group '") + c + "'");
  }
}

const Speaker& Dataset::speaker(std::size_t id) const {
  for (const auto& s : speakers)
    if (s.id == id) return s;
  throw ProtocolError("unknown speaker id " + std::to_string(id));
}

namespace {

Dataset filter(const Dataset& ds, bool training) {
  Dataset out;
  out.feature_dim = ds.feature_dim;
  out.num_content_classes = ds.num_content_classes;
  for (const auto& s : ds.speakers)
    if ((s.group == SpeakerGroup::kTrain) == training) out.speakers.push_back(s);
  for (const auto& u : ds.utterances)
    if ((ds.speaker(u.speaker_id).group == SpeakerGroup::kTrain) == training)
      out.utterances.push_back(u);
  return out;
}

}  // namespace

Dataset Dataset::evaluation_part() const { return filter(*this, false); }
Dataset Dataset::training_part() const { return filter(*this, true); }

std::size_t Dataset::total_frames() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.frames();
  return n;
}

Dataset generate(const DatasetSpec& spec) {
  spec.validate();
  const RngStream root(spec.seed);
  const std::size_t f = spec.feature_dim;
  const std::size_t total_speakers = spec.num_speakers + spec.num_train_speakers;

  RngStream content_rng = root.child("content");
  const Matrix content(spec.num_content_classes, f,
                       content_rng.gaussian(spec.num_content_classes * f));
  RngStream speaker_rng = root.child("speakers");
  const Matrix offsets(total_speakers, f, speaker_rng.gaussian(total_speakers * f));

  Dataset ds;
  ds.feature_dim = f;
  ds.num_content_classes = spec.num_content_classes;
  const std::size_t half = (spec.num_speakers + 1) / 2;
  for (std::size_t s = 0; s < total_speakers; ++s) {
    SpeakerGroup g = SpeakerGroup::kTrain;
    if (s < spec.num_speakers) g = s < half ? SpeakerGroup::kA : SpeakerGroup::kB;
    ds.speakers.push_back({s, g});
  }

  // Segment lengths are 1 + Geometric(p) with mean 1 + (1 - p) / p.
  const double stop = 1.0 / spec.mean_segment_length;
  std::size_t uid = 0;
  for (std::size_t s = 0; s < total_speakers; ++s) {
    for (std::size_t u = 0; u < spec.utterances_per_speaker; ++u, ++uid) {
      RngStream rng = root.child("utterance", uid);
      FrameSequence seq;
      seq.speaker_id = s;
      seq.utterance_id = uid;
      seq.labels.resize(spec.frames_per_utterance);
      std::size_t t = 0;
      while (t < spec.frames_per_utterance) {
        const std::size_t label = rng.index(spec.num_content_classes);
        std::size_t len = 1;
        while (rng.uniform() >= stop) ++len;
        for (std::size_t k = 0; k < len && t < spec.frames_per_utterance; ++k)
          seq.labels[t++] = label;
      }
      seq.features = Matrix(spec.frames_per_utterance, f);
      for (std::size_t i = 0; i < spec.frames_per_utterance; ++i) {
        auto row = seq.features.row(i);
        const auto c = content.row(seq.labels[i]);
        const auto o = offsets.row(s);
        for (std::size_t d = 0; d < f; ++d)
          row[d] = c[d] + spec.speaker_strength * o[d] + spec.noise_sigma * rng.gaussian();
      }
      ds.utterances.push_back(std::move(seq));
    }
  }
  return ds;
}

EnrollTestSplit split_enroll_test(const Dataset& ds,
                                  std::size_t enroll_frames_per_speaker) {
  std::map<std::size_t, std::vector<const FrameSequence*>> by_speaker;
  for (const auto& u : ds.utterances) by_speaker[u.speaker_id].push_back(&u);

  EnrollTestSplit split;
  for (auto& [spk, utts] : by_speaker) {
    std::sort(utts.begin(), utts.end(), [](const auto* a, const auto* b) {
      return a->utterance_id < b->utterance_id;
    });
    std::size_t taken = 0;
    std::size_t n = 0;
    while (n < utts.size() && taken < enroll_frames_per_speaker) {
      taken += utts[n]->frames();
      ++n;
    }
    if (taken < enroll_frames_per_speaker || n == 0 || n == utts.size()) {
      throw ProtocolError("speaker " + std::to_string(spk) + " cannot meet an enrollment budget of " +
                          std::to_string(enroll_frames_per_speaker) +
                          " frames and keep a test utterance");
    }
    for (std::size_t i = 0; i < utts.size(); ++i)
      (i < n ? split.enroll : split.test).push_back(*utts[i]);
  }
  return split;
}

void export_csv(const Dataset& ds, std::ostream& out) {
  out << "utterance_id,speaker_id,group,frame_index,content_label";
  for (std::size_t d = 0; d < ds.feature_dim; ++d) out << ",f" << d;
  out << '\n';
  for (const auto& u : ds.utterances) {
    const char g = group_tag(ds.speaker(u.speaker_id).group);
    for (std::size_t t = 0; t < u.frames(); ++t) {
      out << u.utterance_id << ',' << u.speaker_id << ',' << g << ',' << t << ','
          << u.labels[t];
      for (double v : u.features.row(t)) out << ',' << io::exact(v);
      out << '\n';
    }
  }
  if (!out) throw IoError("failed writing dataset CSV");
}

void export_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  export_csv(ds, out);
}

Dataset import_csv(std::istream& in, std::size_t num_content_classes) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset CSV is empty");
  const auto header = io::split(io::trim(line), ',');
  const std::vector<std::string> fixed{"utterance_id", "speaker_id", "group",
                                       "frame_index", "content_label"};
  if (header.size() < fixed.size() ||
      !std::equal(fixed.begin(), fixed.end(), header.begin())) {
    throw FormatError("dataset CSV header does not match the expected schema");
  }
  Dataset ds;
  ds.feature_dim = header.size() - fixed.size();
  for (std::size_t d = 0; d < ds.feature_dim; ++d) {
    if (header[fixed.size() + d] != "f" + std::to_string(d)) {
      throw FormatError("dataset CSV feature column " + std::to_string(d) + " is misnamed");
    }
  }

  std::map<std::size_t, SpeakerGroup> groups;
  std::size_t max_label = 0;
  std::vector<double> values;
  FrameSequence* current = nullptr;
  std::size_t line_no = 1;
  auto finish = [&] {
    if (current == nullptr) return;
    const std::size_t rows = current->labels.size();
    current->features = Matrix(rows, ds.feature_dim, std::move(values));
    values.clear();
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    const auto cells = io::split(io::trim(line), ',');
    if (cells.size() != header.size()) {
      throw FormatError("dataset CSV line " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " fields");
    }
    const std::size_t uid = io::parse_count(cells[0], "utterance_id");
    const std::size_t spk = io::parse_count(cells[1], "speaker_id");
    if (cells[2].size() != 1) throw FormatError("dataset CSV: bad group '" + cells[2] + "'");
    const SpeakerGroup g = parse_group_tag(cells[2][0]);
    const std::size_t frame = io::parse_count(cells[3], "frame_index");
    const std::size_t label = io::parse_count(cells[4], "content_label");

    if (auto it = groups.find(spk); it == groups.end()) {
      groups.emplace(spk, g);
    } else if (it->second != g) {
      throw FormatError("dataset CSV: speaker " + std::to_string(spk) + " changes group");
    }
    if (current == nullptr || current->utterance_id != uid) {
      finish();
      ds.utterances.emplace_back();
      current = &ds.utterances.back();
      current->utterance_id = uid;
      current->speaker_id = spk;
    }
    if (current->speaker_id != spk || frame != current->labels.size()) {
      throw FormatError("dataset CSV line " + std::to_string(line_no) +
                        " breaks utterance ordering");
    }
    current->labels.push_back(label);
    max_label = std::max(max_label, label);
    for (std::size_t d = 0; d < ds.feature_dim; ++d)
      values.push_back(io::parse_double(cells[5 + d], "feature"));
  }
  finish();

  for (const auto& [id, g] : groups) ds.speakers.push_back({id, g});
  ds.num_content_classes = num_content_classes ? num_content_classes : max_label + 1;
  if (max_label >= ds.num_content_classes) {
    throw FormatError("dataset CSV label " + std::to_string(max_label) +
                      " exceeds the class count");
  }
  return ds;
}

Dataset import_csv(const std::filesystem::path& path, std::size_t num_content_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return import_csv(in, num_content_classes);
}

}  // namespace vqanon
