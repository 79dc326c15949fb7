#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "dtsda/data.hpp"
#include "dtsda/error.hpp"
#include "dtsda/io.hpp"

namespace dtsda::data {

namespace {

constexpr const char* kFixedColumns[] = {"timestamp", "user", "segment", "activity"};

double estimate_sampling_rate(const std::vector<double>& ts, const std::string& where) {
  if (ts.size() < 2) throw DataError(where + ": cannot infer sampling rate from one sample");
  std::vector<double> steps;
  steps.reserve(ts.size() - 1);
  for (std::size_t i = 1; i < ts.size(); ++i) steps.push_back(ts[i] - ts[i - 1]);
  std::nth_element(steps.begin(), steps.begin() + steps.size() / 2, steps.end());
  return 1.0 / steps[steps.size() / 2];
}

}  // namespace

ActivityTable::ActivityTable(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw DataError("activity names must be non-empty");
    if (!seen.insert(n).second) throw DataError("duplicate activity name '" + n + "'");
  }
}

ActivityTable ActivityTable::oppt() { return ActivityTable({"standing", "walking", "sitting", "lying"}); }

ActivityTable ActivityTable::load_csv(const std::filesystem::path& path) {
  const auto table = io::read_csv(path);
  const int name_col = table.column("activity"), index_col = table.column("index");
  if (name_col < 0 || index_col < 0) throw DataError(path.string() + ": expected columns activity,index");
  std::vector<std::string> names(table.rows.size());
  std::vector<bool> filled(table.rows.size(), false);
  for (const auto& row : table.rows) {
    const long long idx = io::parse_int(row[index_col], path.string());
    if (idx < 0 || static_cast<std::size_t>(idx) >= names.size() || filled[idx]) {
      throw DataError(path.string() + ": activity indices must be a permutation of 0..C-1");
    }
    names[idx] = row[name_col];
    filled[idx] = true;
  }
  return ActivityTable(std::move(names));
}

void ActivityTable::save_csv(const std::filesystem::path& path) const {
  std::string out = "activity,index\n";
  for (std::size_t i = 0; i < names_.size(); ++i) out += names_[i] + "," + std::to_string(i) + "\n";
  io::write_text_file(path, out);
}

int ActivityTable::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DataError("unknown activity '" + name + "'");
  return static_cast<int>(it - names_.begin());
}

void SensorRecording::validate(std::size_t num_classes) const {
  const std::string where = "recording " + user_id + "/" + std::to_string(segment_id);
  if (!(sampling_rate > 0.0) || !std::isfinite(sampling_rate)) throw DataError(where + ": sampling rate must be positive");
  if (channels.empty()) throw DataError(where + ": no channels");
  for (const auto& ch : channels)
    if (ch.size() != timestamps.size()) throw DataError(where + ": channel lengths differ");
  if (labels.size() != timestamps.size()) throw DataError(where + ": label count differs from samples");
  if (!states.empty() && states.size() != timestamps.size()) throw DataError(where + ": state count differs");
  for (int l : labels)
    if (l != kMissingLabel && (l < 0 || static_cast<std::size_t>(l) >= num_classes))
      throw DataError(where + ": label " + std::to_string(l) + " outside class range");
}

std::vector<SensorRecording> load_recordings_csv(const std::filesystem::path& path,
                                                 const ActivityTable& activities,
                                                 std::optional<double> sampling_rate) {
  const auto table = io::read_csv(path);
  for (std::size_t i = 0; i < 4; ++i) {
    if (table.header.size() <= i || table.header[i] != kFixedColumns[i]) {
      throw DataError(path.string() + ": column " + std::to_string(i + 1) + " must be '" +
                      kFixedColumns[i] + "'");
    }
  }
  const std::size_t num_channels = table.header.size() - 4;
  if (num_channels == 0) throw DataError(path.string() + ": no sensor channel columns");

  std::vector<SensorRecording> recordings;
  std::map<std::pair<std::string, int>, std::size_t> index;
  std::size_t line = 1;
  for (const auto& row : table.rows) {
    ++line;
    const std::string ctx = path.string() + ":" + std::to_string(line);
    const double t = io::parse_double(row[0], ctx);
    const int segment = static_cast<int>(io::parse_int(row[2], ctx));
    const auto key = std::make_pair(row[1], segment);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, recordings.size()).first;
      SensorRecording rec;
      rec.user_id = row[1];
      rec.segment_id = segment;
      rec.channels.resize(num_channels);
      recordings.push_back(std::move(rec));
    }
    SensorRecording& rec = recordings[it->second];
    if (!rec.timestamps.empty() && !(t > rec.timestamps.back())) {
      throw DataError(ctx + ": timestamps must increase within user " + rec.user_id + " segment " +
                      std::to_string(segment));
    }
    rec.timestamps.push_back(t);
    rec.labels.push_back(row[3].empty() ? kMissingLabel : activities.index_of(row[3]));
    for (std::size_t c = 0; c < num_channels; ++c) rec.channels[c].push_back(io::parse_double(row[4 + c], ctx));
  }
  for (auto& rec : recordings) {
    rec.sampling_rate = sampling_rate ? *sampling_rate
                                      : estimate_sampling_rate(rec.timestamps, rec.user_id + "/" +
                                                                                   std::to_string(rec.segment_id));
    rec.validate(activities.size());
  }
  return recordings;
}

void write_recordings_csv(const std::filesystem::path& path, std::span<const SensorRecording> recordings,
                          const ActivityTable& activities) {
  if (recordings.empty()) throw DataError("no recordings to write");
  std::ostringstream out;
  out << "timestamp,user,segment,activity";
  for (std::size_t c = 0; c < recordings.front().num_channels(); ++c) out << ",ch" << c;
  out << '\n';
  for (const auto& rec : recordings) {
    for (std::size_t i = 0; i < rec.num_samples(); ++i) {
      out << io::format_double(rec.timestamps[i]) << ',' << rec.user_id << ',' << rec.segment_id << ','
          << (rec.labels[i] == kMissingLabel ? std::string() : activities.name(rec.labels[i]));
      for (const auto& ch : rec.channels) out << ',' << io::format_double(ch[i]);
      out << '\n';
    }
  }
  io::write_text_file(path, out.str());
}

void write_dataset_dir(const std::filesystem::path& dir, const SynthOutput& synth) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  write_recordings_csv(dir / "recordings.csv", synth.recordings, synth.activities);
  synth.activities.save_csv(dir / "activities.csv");
  std::ostringstream states;
  states << "state\n";
  for (const auto& rec : synth.recordings)
    for (int s : rec.states) states << s << '\n';
  io::write_text_file(dir / "states.csv", states.str());
}

DatasetDir read_dataset_dir(const std::filesystem::path& dir, std::optional<double> sampling_rate) {
  DatasetDir out;
  out.activities = ActivityTable::load_csv(dir / "activities.csv");
  out.recordings = load_recordings_csv(dir / "recordings.csv", out.activities, sampling_rate);
  const auto states_path = dir / "states.csv";
  if (std::filesystem::exists(states_path)) {
    const auto table = io::read_csv(states_path);
    std::size_t total = 0;
    for (const auto& rec : out.recordings) total += rec.num_samples();
    if (table.rows.size() != total) throw DataError(states_path.string() + ": row count differs from recordings");
    std::size_t row = 0;
    for (auto& rec : out.recordings) {
      rec.states.resize(rec.num_samples());
      for (auto& s : rec.states) s = static_cast<int>(io::parse_int(table.rows[row++][0], states_path.string()));
    }
  }
  return out;
}

}  // namespace dtsda::data
