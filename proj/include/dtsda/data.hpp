#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dtsda::data {

/// Activity name <-> class index table. Indices are dense, 0..C-1.
class ActivityTable {
 public:
  ActivityTable() = default;
  explicit ActivityTable(std::vector<std::string> names);

  /// Two-column `activity,index` CSV.
  static ActivityTable load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;

  /// standing, walking, sitting, lying -> 0..3
  static ActivityTable oppt();

  int index_of(const std::string& name) const;  // throws DataError
  const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

inline constexpr int kMissingLabel = -1;

struct SensorRecording {
  std::string user_id;
  int segment_id = 0;
  double sampling_rate = 0.0;
  std::vector<double> timestamps;
  std::vector<std::vector<double>> channels;  // [channel][sample]
  std::vector<int> labels;                    // per sample, kMissingLabel when absent
  std::vector<int> states;                    // synthetic ground truth, else empty

  std::size_t num_samples() const { return timestamps.size(); }
  std::size_t num_channels() const { return channels.size(); }
  void validate(std::size_t num_classes) const;
};

/// Rows are `timestamp,user,segment,activity,<channel>...`. One recording per
/// (user, segment) in first-appearance order. When `sampling_rate` is not
/// given it is estimated from the median timestamp step of each segment.
std::vector<SensorRecording> load_recordings_csv(const std::filesystem::path& path,
                                                 const ActivityTable& activities,
                                                 std::optional<double> sampling_rate = {});
void write_recordings_csv(const std::filesystem::path& path,
                          std::span<const SensorRecording> recordings,
                          const ActivityTable& activities);

struct Window {
  std::vector<double> data;  // [channels × window_len], row-major
  int class_label = 0;       // source [0, C), target [C, 2C)
  int true_label = 0;        // evaluation only
  int domain = 0;            // 0 source, 1 target
  std::size_t temporal_index = 0;
  int segment_id = 0;
  int ts = 0;
  int truth_state = -1;  // synthetic ground truth, evaluation only
};

struct WindowGeometry {
  std::size_t window_len = 0;
  std::size_t stride = 0;
};

WindowGeometry window_geometry(double sampling_rate, double window_seconds, double overlap);

/// Windows start at 0, stride, 2·stride, ... Windows containing a label
/// change or a missing label are dropped; survivors get consecutive
/// temporal_index values.
std::vector<Window> segment_windows(const SensorRecording& rec, double window_seconds = 3.0,
                                    double overlap = 0.5);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct WindowedDataset {
  std::size_t num_classes = 0;
  std::size_t num_states = 1;
  std::size_t channels = 0;
  std::size_t window_len = 0;
  std::vector<std::string> activity_names;
  std::vector<Window> windows;
  NormStats norm;
  bool normalized = false;
  std::vector<int> target_permutation;  // true class k -> anonymised C + perm[k]
  std::string source_user;
  std::string target_user;

  /// Window indices per (domain, segment) in temporal order.
  std::vector<std::vector<std::size_t>> segment_groups() const;
  /// Window indices per (domain, class, segment) in temporal order.
  std::vector<std::vector<std::size_t>> class_segment_groups() const;
  std::size_t count_domain(int domain) const;
  void validate() const;
};

int compose_pseudo_label(int ts, int class_label, int num_classes, int num_states);
/// Returns (ts, class_label).
std::pair<int, int> decompose_pseudo_label(int pseudo_label, int num_classes);

struct Anonymization {
  std::vector<int> labels;
  std::vector<int> permutation;
};

std::vector<int> seeded_permutation(int n, std::uint64_t seed);
/// label k -> C + perm[k]
Anonymization anonymize_target_classes(std::span<const int> labels, int num_classes,
                                       std::uint64_t seed);
std::vector<int> deanonymize_target_classes(std::span<const int> labels,
                                            std::span<const int> permutation, int num_classes);

/// Per-channel z-score with statistics from source windows, applied to every
/// window. Throws if the dataset is already normalised.
void normalize(WindowedDataset& dataset);
/// Applies stored statistics to one raw [channels × len] window.
void apply_normalization(std::span<double> window, const NormStats& stats, std::size_t len);

/// Extends every window to the next multiple of 4 samples by repeating the
/// last sample of each channel.
std::vector<double> pad_window(std::span<const double> window, std::size_t channels,
                               std::size_t len, std::size_t padded_len);
std::size_t padded_length(std::size_t len);

struct TaskOptions {
  double window_seconds = 3.0;
  double overlap = 0.5;
  std::uint64_t anonymize_seed = 0;
};

/// Windows both users' recordings, pads, tags domains, anonymises target
/// classes and normalises with source statistics.
WindowedDataset build_task_dataset(std::span<const SensorRecording> recordings,
                                   const std::string& source_user, const std::string& target_user,
                                   const ActivityTable& activities, const TaskOptions& options);

/// CRC over window samples and labels; equal datasets hash equally.
std::uint32_t dataset_hash(const WindowedDataset& dataset);

// ---- synthetic data ------------------------------------------------------

struct SynthSpec {
  int classes = 4;
  int states = 3;
  int channels = 6;
  int users = 2;
  double sampling_rate = 8.0;
  double window_seconds = 3.0;
  double overlap = 0.5;
  int segments_per_activity = 5;
  int windows_per_segment = 100;
  int dwell_min = 5;  // in windows
  int dwell_max = 12;
  double state_separation = 1.5;  // std of state emission means
  double emission_noise = 0.1;    // per-sample noise std around the state mean
  double oscillation = 0.5;       // amplitude of the per-activity periodic component
  double mixing = 0.8;            // max Givens angle (radians) of user channel mixing
  double scale_jitter = 0.3;      // log-scale range of per-channel user gains
  double bias_scale = 1.0;        // std of user channel offsets
  double user_noise = 0.1;        // per-sample noise added after the user transform
  std::uint64_t seed = 1;

  void validate() const;
  static SynthSpec load(const std::filesystem::path& path);  // key,value CSV
};

/// y = mixing · x + bias (+ noise)
struct UserTransform {
  std::vector<double> mixing;  // [channels × channels]
  std::vector<double> bias;
};

struct SynthOutput {
  std::vector<SensorRecording> recordings;
  ActivityTable activities;
  std::vector<std::string> users;
  std::vector<UserTransform> transforms;
  std::vector<std::vector<std::vector<double>>> state_means;  // [activity][state][channel]
};

SynthOutput synthesize_recordings(const SynthSpec& spec);

/// Synthesises, then builds the task dataset for users[source] -> users[target]
/// with ground-truth states on every window.
WindowedDataset synthesize_dataset(const SynthSpec& spec, int source = 0, int target = 1,
                                   std::uint64_t anonymize_seed = 0);

/// Writes recordings.csv, activities.csv and states.csv under `dir`.
void write_dataset_dir(const std::filesystem::path& dir, const SynthOutput& out);

struct DatasetDir {
  std::vector<SensorRecording> recordings;
  ActivityTable activities;
};

/// Reads recordings.csv and activities.csv (and states.csv when present).
DatasetDir read_dataset_dir(const std::filesystem::path& dir,
                            std::optional<double> sampling_rate = {});

}  // namespace dtsda::data
