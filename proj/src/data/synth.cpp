#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>

#include "dtsda/data.hpp"
#include "dtsda/error.hpp"
#include "dtsda/io.hpp"

namespace dtsda::data {

void SynthSpec::validate() const {
  if (classes < 1) throw ConfigError("synth: classes must be >= 1");
  if (states < 1) throw ConfigError("synth: states must be >= 1");
  if (channels < 1) throw ConfigError("synth: channels must be >= 1");
  if (users < 2) throw ConfigError("synth: at least two users are needed");
  if (segments_per_activity < 1 || windows_per_segment < 1) throw ConfigError("synth: empty segments");
  if (dwell_min < 1 || dwell_max < dwell_min) throw ConfigError("synth: degenerate dwell distribution");
  for (double v : {emission_noise, oscillation, mixing, scale_jitter, bias_scale, user_noise, state_separation}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("synth: scales must be finite and non-negative");
  }
  window_geometry(sampling_rate, window_seconds, overlap);
}

SynthSpec SynthSpec::load(const std::filesystem::path& path) {
  const auto table = io::read_csv(path);
  if (table.column("key") != 0 || table.column("value") != 1) throw ConfigError(path.string() + ": expected columns key,value");
  SynthSpec s;
  const std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"classes", [&](const std::string& v) { s.classes = static_cast<int>(io::parse_int(v, "classes")); }},
      {"states", [&](const std::string& v) { s.states = static_cast<int>(io::parse_int(v, "states")); }},
      {"channels", [&](const std::string& v) { s.channels = static_cast<int>(io::parse_int(v, "channels")); }},
      {"users", [&](const std::string& v) { s.users = static_cast<int>(io::parse_int(v, "users")); }},
      {"sampling_rate", [&](const std::string& v) { s.sampling_rate = io::parse_double(v, "sampling_rate"); }},
      {"window_seconds", [&](const std::string& v) { s.window_seconds = io::parse_double(v, "window_seconds"); }},
      {"overlap", [&](const std::string& v) { s.overlap = io::parse_double(v, "overlap"); }},
      {"segments_per_activity",
       [&](const std::string& v) { s.segments_per_activity = static_cast<int>(io::parse_int(v, "segments_per_activity")); }},
      {"windows_per_segment",
       [&](const std::string& v) { s.windows_per_segment = static_cast<int>(io::parse_int(v, "windows_per_segment")); }},
      {"dwell_min", [&](const std::string& v) { s.dwell_min = static_cast<int>(io::parse_int(v, "dwell_min")); }},
      {"dwell_max", [&](const std::string& v) { s.dwell_max = static_cast<int>(io::parse_int(v, "dwell_max")); }},
      {"state_separation", [&](const std::string& v) { s.state_separation = io::parse_double(v, "state_separation"); }},
      {"emission_noise", [&](const std::string& v) { s.emission_noise = io::parse_double(v, "emission_noise"); }},
      {"oscillation", [&](const std::string& v) { s.oscillation = io::parse_double(v, "oscillation"); }},
      {"mixing", [&](const std::string& v) { s.mixing = io::parse_double(v, "mixing"); }},
      {"scale_jitter", [&](const std::string& v) { s.scale_jitter = io::parse_double(v, "scale_jitter"); }},
      {"bias_scale", [&](const std::string& v) { s.bias_scale = io::parse_double(v, "bias_scale"); }},
      {"user_noise", [&](const std::string& v) { s.user_noise = io::parse_double(v, "user_noise"); }},
      {"seed", [&](const std::string& v) { s.seed = static_cast<std::uint64_t>(io::parse_int(v, "seed")); }},
  };
  for (const auto& row : table.rows) {
    const auto it = setters.find(row[0]);
    if (it == setters.end()) throw ConfigError(path.string() + ": unknown key '" + row[0] + "'");
    try {
      it->second(row[1]);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
  }
  s.validate();
  return s;
}

namespace {

// Product of Givens rotations over every channel pair, then per-channel gains.
UserTransform draw_transform(const SynthSpec& spec, std::mt19937_64& rng) {
  const std::size_t n = static_cast<std::size_t>(spec.channels);
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 1.0;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double angle = spec.mixing * unit(rng);
      const double c = std::cos(angle), s = std::sin(angle);
      for (std::size_t k = 0; k < n; ++k) {
        const double a = m[i * n + k], b = m[j * n + k];
        m[i * n + k] = c * a - s * b;
        m[j * n + k] = s * a + c * b;
      }
    }
  for (std::size_t col = 0; col < n; ++col) {
    const double gain = std::exp(spec.scale_jitter * unit(rng));
    for (std::size_t row = 0; row < n; ++row) m[row * n + col] *= gain;
  }
  UserTransform t;
  t.mixing = std::move(m);
  t.bias.resize(n);
  for (double& b : t.bias) b = spec.bias_scale * normal(rng);
  return t;
}

}  // namespace

SynthOutput synthesize_recordings(const SynthSpec& spec) {
  spec.validate();
  const auto geo = window_geometry(spec.sampling_rate, spec.window_seconds, spec.overlap);
  const std::size_t ch = static_cast<std::size_t>(spec.channels);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthOutput out;
  std::vector<std::string> names;
  for (int a = 0; a < spec.classes; ++a) names.push_back("activity" + std::to_string(a));
  out.activities = ActivityTable(std::move(names));

  // Shared generative structure: state means, periodic components.
  out.state_means.assign(spec.classes, std::vector<std::vector<double>>(spec.states, std::vector<double>(ch)));
  std::vector<std::vector<double>> amplitude(spec.classes, std::vector<double>(ch));
  std::vector<std::vector<double>> phase(spec.classes, std::vector<double>(ch));
  std::vector<double> frequency(spec.classes);
  for (int a = 0; a < spec.classes; ++a) {
    for (int s = 0; s < spec.states; ++s)
      for (auto& v : out.state_means[a][s]) v = spec.state_separation * normal(rng);
    for (std::size_t c = 0; c < ch; ++c) {
      amplitude[a][c] = spec.oscillation * unit(rng);
      phase[a][c] = 2.0 * std::numbers::pi * unit(rng);
    }
    frequency[a] = 0.25 + 0.75 * unit(rng);  // Hz
  }
  for (int u = 0; u < spec.users; ++u) {
    out.users.push_back("U" + std::to_string(u + 1));
    out.transforms.push_back(draw_transform(spec, rng));
  }

  const std::size_t seg_len = (static_cast<std::size_t>(spec.windows_per_segment) - 1) * geo.stride + geo.window_len;
  std::uniform_int_distribution<int> dwell(spec.dwell_min, spec.dwell_max);
  std::vector<double> clean(ch);
  for (int u = 0; u < spec.users; ++u) {
    const auto& tf = out.transforms[u];
    int segment_id = 0;
    for (int a = 0; a < spec.classes; ++a)
      for (int seg = 0; seg < spec.segments_per_activity; ++seg) {
        SensorRecording rec;
        rec.user_id = out.users[u];
        rec.segment_id = segment_id++;
        rec.sampling_rate = spec.sampling_rate;
        rec.channels.assign(ch, std::vector<double>(seg_len));
        rec.labels.assign(seg_len, a);
        rec.states.resize(seg_len);
        rec.timestamps.resize(seg_len);
        // Left-to-right chain 0 -> 1 -> ... -> T-1 -> 0 ..., dwell counted in windows.
        int state = 0;
        std::size_t remaining = static_cast<std::size_t>(dwell(rng)) * geo.stride;
        const double phase_shift = 2.0 * std::numbers::pi * unit(rng);
        for (std::size_t i = 0; i < seg_len; ++i) {
          if (remaining == 0) {
            state = (state + 1) % spec.states;
            remaining = static_cast<std::size_t>(dwell(rng)) * geo.stride;
          }
          --remaining;
          const double t = static_cast<double>(i) / spec.sampling_rate;
          rec.timestamps[i] = t;
          rec.states[i] = state;
          for (std::size_t c = 0; c < ch; ++c) {
            clean[c] = out.state_means[a][state][c] +
                       amplitude[a][c] * std::sin(2.0 * std::numbers::pi * frequency[a] * t + phase[a][c] + phase_shift) +
                       spec.emission_noise * normal(rng);
          }
          for (std::size_t r = 0; r < ch; ++r) {
            double y = tf.bias[r];
            for (std::size_t c = 0; c < ch; ++c) y += tf.mixing[r * ch + c] * clean[c];
            rec.channels[r][i] = y + spec.user_noise * normal(rng);
          }
        }
        out.recordings.push_back(std::move(rec));
      }
  }
  return out;
}

WindowedDataset synthesize_dataset(const SynthSpec& spec, int source, int target, std::uint64_t anonymize_seed) {
  const auto synth = synthesize_recordings(spec);
  if (source < 0 || target < 0 || source >= spec.users || target >= spec.users) throw ConfigError("synth: user index out of range");
  TaskOptions opts;
  opts.window_seconds = spec.window_seconds;
  opts.overlap = spec.overlap;
  opts.anonymize_seed = anonymize_seed;
  return build_task_dataset(synth.recordings, synth.users[source], synth.users[target], synth.activities, opts);
}

}  // namespace dtsda::data
