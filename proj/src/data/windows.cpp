#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "dtsda/data.hpp"
#include "dtsda/error.hpp"
#include "dtsda/io.hpp"

namespace dtsda::data {

WindowGeometry window_geometry(double sampling_rate, double window_seconds, double overlap) {
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("overlap must lie in [0, 1)");
  if (!(window_seconds > 0.0)) throw ConfigError("window length must be positive");
  if (!(sampling_rate > 0.0)) throw DataError("sampling rate must be positive");
  WindowGeometry g;
  g.window_len = static_cast<std::size_t>(std::llround(window_seconds * sampling_rate));
  g.stride = static_cast<std::size_t>(std::llround(static_cast<double>(g.window_len) * (1.0 - overlap)));
  if (g.window_len == 0) throw ConfigError("window shorter than one sample");
  if (g.stride == 0) throw ConfigError("overlap leaves a zero window stride");
  return g;
}

std::vector<Window> segment_windows(const SensorRecording& rec, double window_seconds, double overlap) {
  const auto geo = window_geometry(rec.sampling_rate, window_seconds, overlap);
  const std::size_t n = rec.num_samples();
  if (n < geo.window_len) {
    throw DataError("recording " + rec.user_id + "/" + std::to_string(rec.segment_id) + " has " +
                    std::to_string(n) + " samples, shorter than one window of " +
                    std::to_string(geo.window_len));
  }
  std::vector<Window> out;
  const std::size_t channels = rec.num_channels();
  for (std::size_t start = 0; start + geo.window_len <= n; start += geo.stride) {
    const int label = rec.labels[start];
    const bool clean =
        label != kMissingLabel && std::all_of(rec.labels.begin() + start, rec.labels.begin() + start + geo.window_len,
                                              [label](int l) { return l == label; });
    if (!clean) continue;
    Window w;
    w.data.resize(channels * geo.window_len);
    for (std::size_t c = 0; c < channels; ++c)
      std::copy_n(rec.channels[c].begin() + start, geo.window_len, w.data.begin() + c * geo.window_len);
    w.class_label = label;
    w.true_label = label;
    w.segment_id = rec.segment_id;
    w.temporal_index = out.size();
    if (!rec.states.empty()) w.truth_state = rec.states[start + geo.window_len / 2];
    out.push_back(std::move(w));
  }
  return out;
}

std::size_t padded_length(std::size_t len) { return (len + 3) / 4 * 4; }

std::vector<double> pad_window(std::span<const double> window, std::size_t channels, std::size_t len,
                               std::size_t padded_len) {
  if (window.size() != channels * len || padded_len < len || len == 0) throw ShapeError("pad_window: bad geometry");
  std::vector<double> out(channels * padded_len);
  for (std::size_t c = 0; c < channels; ++c) {
    std::copy_n(window.begin() + c * len, len, out.begin() + c * padded_len);
    std::fill(out.begin() + c * padded_len + len, out.begin() + (c + 1) * padded_len, window[c * len + len - 1]);
  }
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> group_by(const std::vector<Window>& windows, bool by_class) {
  std::map<std::tuple<int, int, int>, std::vector<std::size_t>> groups;
  std::vector<std::tuple<int, int, int>> order;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    const auto key = std::make_tuple(w.domain, by_class ? w.class_label : 0, w.segment_id);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(i);
  }
  std::vector<std::vector<std::size_t>> out;
  out.reserve(order.size());
  for (const auto& key : order) {
    auto idx = std::move(groups[key]);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return windows[a].temporal_index < windows[b].temporal_index;
    });
    out.push_back(std::move(idx));
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> WindowedDataset::segment_groups() const { return group_by(windows, false); }

std::vector<std::vector<std::size_t>> WindowedDataset::class_segment_groups() const {
  return group_by(windows, true);
}

std::size_t WindowedDataset::count_domain(int domain) const {
  return static_cast<std::size_t>(
      std::count_if(windows.begin(), windows.end(), [domain](const Window& w) { return w.domain == domain; }));
}

void WindowedDataset::validate() const {
  const int c = static_cast<int>(num_classes);
  for (const auto& w : windows) {
    if (w.data.size() != channels * window_len) throw DataError("window length differs from dataset geometry");
    if (w.domain != 0 && w.domain != 1) throw DataError("window domain must be 0 or 1");
    const int lo = w.domain == 0 ? 0 : c, hi = w.domain == 0 ? c : 2 * c;
    if (w.class_label < lo || w.class_label >= hi) {
      throw DataError("window class label " + std::to_string(w.class_label) + " outside its domain range");
    }
    if (w.ts < 0 || static_cast<std::size_t>(w.ts) >= num_states) throw DataError("temporal state out of range");
  }
  for (const auto& group : segment_groups())
    for (std::size_t k = 0; k < group.size(); ++k)
      if (windows[group[k]].temporal_index != k) throw DataError("temporal indices are not consecutive");
}

int compose_pseudo_label(int ts, int class_label, int num_classes, int num_states) {
  if (num_classes < 1 || num_states < 1) throw ConfigError("class and state counts must be positive");
  if (ts < 0 || ts >= num_states) throw DataError("temporal state " + std::to_string(ts) + " out of range");
  if (class_label < 0 || class_label >= 2 * num_classes) {
    throw DataError("class label " + std::to_string(class_label) + " out of range");
  }
  return ts * 2 * num_classes + class_label;
}

std::pair<int, int> decompose_pseudo_label(int pseudo_label, int num_classes) {
  if (num_classes < 1) throw ConfigError("class count must be positive");
  if (pseudo_label < 0) throw DataError("pseudo label must be non-negative");
  return {pseudo_label / (2 * num_classes), pseudo_label % (2 * num_classes)};
}

std::vector<int> seeded_permutation(int n, std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the result does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = perm.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

Anonymization anonymize_target_classes(std::span<const int> labels, int num_classes, std::uint64_t seed) {
  Anonymization out;
  out.permutation = seeded_permutation(num_classes, seed);
  out.labels.reserve(labels.size());
  for (int l : labels) {
    if (l < 0 || l >= num_classes) throw DataError("target label " + std::to_string(l) + " outside [0, C)");
    out.labels.push_back(num_classes + out.permutation[static_cast<std::size_t>(l)]);
  }
  return out;
}

std::vector<int> deanonymize_target_classes(std::span<const int> labels, std::span<const int> permutation,
                                            int num_classes) {
  std::vector<int> inverse(permutation.size());
  for (std::size_t k = 0; k < permutation.size(); ++k) inverse[static_cast<std::size_t>(permutation[k])] = static_cast<int>(k);
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    if (l < num_classes || l >= 2 * num_classes) throw DataError("anonymised label outside [C, 2C)");
    out.push_back(inverse[static_cast<std::size_t>(l - num_classes)]);
  }
  return out;
}

void normalize(WindowedDataset& ds) {
  if (ds.normalized) throw DataError("dataset is already normalised");
  const std::size_t ch = ds.channels, len = ds.window_len;
  std::vector<double> sum(ch, 0.0), sumsq(ch, 0.0);
  std::size_t count = 0;
  for (const auto& w : ds.windows) {
    if (w.domain != 0) continue;
    ++count;
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t l = 0; l < len; ++l) sum[c] += w.data[c * len + l];
  }
  if (count == 0) throw DataError("normalisation needs at least one source window");
  const double n = static_cast<double>(count * len);
  NormStats stats;
  stats.mean.resize(ch);
  stats.stddev.resize(ch);
  for (std::size_t c = 0; c < ch; ++c) stats.mean[c] = sum[c] / n;
  for (const auto& w : ds.windows) {
    if (w.domain != 0) continue;
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t l = 0; l < len; ++l) {
        const double d = w.data[c * len + l] - stats.mean[c];
        sumsq[c] += d * d;
      }
  }
  for (std::size_t c = 0; c < ch; ++c) {
    const double sd = std::sqrt(sumsq[c] / n);
    if (sd < 1e-12) {
      io::warn("channel " + std::to_string(c) + " has zero variance in the source domain; centring only");
      stats.stddev[c] = 1.0;
    } else {
      stats.stddev[c] = sd;
    }
  }
  for (auto& w : ds.windows) apply_normalization(w.data, stats, len);
  ds.norm = std::move(stats);
  ds.normalized = true;
}

void apply_normalization(std::span<double> window, const NormStats& stats, std::size_t len) {
  const std::size_t ch = stats.mean.size();
  if (window.size() != ch * len) throw ShapeError("apply_normalization: window size mismatch");
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t l = 0; l < len; ++l) window[c * len + l] = (window[c * len + l] - stats.mean[c]) / stats.stddev[c];
}

WindowedDataset build_task_dataset(std::span<const SensorRecording> recordings, const std::string& source_user,
                                   const std::string& target_user, const ActivityTable& activities,
                                   const TaskOptions& options) {
  if (source_user == target_user) throw ConfigError("source and target user must differ");
  WindowedDataset ds;
  ds.num_classes = activities.size();
  ds.activity_names = activities.names();
  ds.source_user = source_user;
  ds.target_user = target_user;
  if (ds.num_classes == 0) throw DataError("activity table is empty");

  std::size_t raw_len = 0;
  for (int domain : {0, 1}) {
    const std::string& user = domain == 0 ? source_user : target_user;
    bool found = false;
    for (const auto& rec : recordings) {
      if (rec.user_id != user) continue;
      found = true;
      rec.validate(ds.num_classes);
      if (ds.channels == 0) ds.channels = rec.num_channels();
      if (rec.num_channels() != ds.channels) throw DataError("recordings disagree on channel count");
      auto windows = segment_windows(rec, options.window_seconds, options.overlap);
      const auto geo = window_geometry(rec.sampling_rate, options.window_seconds, options.overlap);
      if (raw_len == 0) raw_len = geo.window_len;
      if (geo.window_len != raw_len) throw DataError("recordings disagree on window length (sampling rates differ)");
      for (auto& w : windows) {
        w.domain = domain;
        ds.windows.push_back(std::move(w));
      }
    }
    if (!found) throw DataError("no recordings for user '" + user + "'");
  }
  if (ds.count_domain(0) == 0 || ds.count_domain(1) == 0) throw DataError("a domain has no usable windows");

  ds.window_len = padded_length(raw_len);
  if (ds.window_len != raw_len) {
    for (auto& w : ds.windows) w.data = pad_window(w.data, ds.channels, raw_len, ds.window_len);
  }

  std::vector<int> target_labels;
  for (const auto& w : ds.windows)
    if (w.domain == 1) target_labels.push_back(w.true_label);
  const auto anon = anonymize_target_classes(target_labels, static_cast<int>(ds.num_classes), options.anonymize_seed);
  std::size_t k = 0;
  for (auto& w : ds.windows)
    if (w.domain == 1) w.class_label = anon.labels[k++];
  ds.target_permutation = anon.permutation;

  normalize(ds);
  ds.validate();
  return ds;
}

std::uint32_t dataset_hash(const WindowedDataset& ds) {
  std::uint32_t crc = 0;
  auto feed = [&crc](const void* p, std::size_t n) {
    crc = io::crc32({static_cast<const unsigned char*>(p), n}, crc);
  };
  for (const auto& w : ds.windows) {
    feed(w.data.data(), w.data.size() * sizeof(double));
    const int meta[] = {w.class_label, w.true_label, w.domain, w.segment_id, static_cast<int>(w.temporal_index)};
    feed(meta, sizeof meta);
  }
  return crc;
}

}  // namespace dtsda::data
