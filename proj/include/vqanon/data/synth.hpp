#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "vqanon/numerics/matrix.hpp"

namespace vqanon {

// Two-factor synthetic corpus: each frame is
//   x_t = C[c_t] + speaker_strength * S[speaker] + noise_sigma * n_t
// with C (P x F) and S (speakers x F) drawn once from the seed. Content labels
// come in runs whose length is 1 + Geometric, mean `mean_segment_length`.
struct DatasetSpec {
  std::size_t num_speakers = 40;        // evaluation roster, split into groups A/B
  std::size_t num_train_speakers = 40;  // disjoint training roster; 0 = none
  std::size_t num_content_classes = 20;
  std::size_t feature_dim = 24;
  std::size_t utterances_per_speaker = 10;
  std::size_t frames_per_utterance = 120;
  double speaker_strength = 1.0;
  double noise_sigma = 0.5;
  double mean_segment_length = 3.0;
  std::uint64_t seed = 1;

  void validate() const;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

enum class SpeakerGroup { kA, kB, kTrain };

char group_tag(SpeakerGroup g);
SpeakerGroup parse_group_tag(char c);

struct Speaker {
  std::size_t id = 0;
  SpeakerGroup group = SpeakerGroup::kA;

  friend bool operator==(const Speaker&, const Speaker&) = default;
};

struct FrameSequence {
  Matrix features;                    // T x F
  std::vector<std::size_t> labels;    // T content class ids
  std::size_t speaker_id = 0;
  std::size_t utterance_id = 0;

  std::size_t frames() const { return features.rows(); }

  friend bool operator==(const FrameSequence&, const FrameSequence&) = default;
};

struct Dataset {
  std::size_t feature_dim = 0;
  std::size_t num_content_classes = 0;
  std::vector<Speaker> speakers;
  std::vector<FrameSequence> utterances;

  const Speaker& speaker(std::size_t id) const;

  // Utterances of the evaluation roster (groups A and B).
  Dataset evaluation_part() const;
  // Utterances of the training roster.
  Dataset training_part() const;

  std::size_t total_frames() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset generate(const DatasetSpec& spec);

struct EnrollTestSplit {
  std::vector<FrameSequence> enroll;
  std::vector<FrameSequence> test;
};

// Per speaker, utterances in id order go to enrollment until the frame budget
// is reached; the rest are test. Throws ProtocolError when a speaker cannot
// meet the budget and still keep a test utterance.
EnrollTestSplit split_enroll_test(const Dataset& ds,
                                  std::size_t enroll_frames_per_speaker);

// CSV: utterance_id,speaker_id,group,frame_index,content_label,f0..f{F-1}
// with group one of A, B, T (training roster).
void export_csv(const Dataset& ds, std::ostream& out);
void export_csv(const Dataset& ds, const std::filesystem::path& path);

// num_content_classes == 0 infers it from the largest label.
Dataset import_csv(std::istream& in, std::size_t num_content_classes = 0);
Dataset import_csv(const std::filesystem::path& path,
                   std::size_t num_content_classes = 0);

}  // namespace vqanon
