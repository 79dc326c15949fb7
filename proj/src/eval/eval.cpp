#include "dtsda/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dtsda/error.hpp"
#include "dtsda/io.hpp"

namespace dtsda::eval {

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto& item : io::split_csv_line(text))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string join(const std::vector<std::string>& items, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? std::string(1, sep) : "") + items[i];
  return out;
}

std::vector<std::string> default_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("class" + std::to_string(i));
  return names;
}

std::string file_task(const std::string& task) {
  std::string out = task;
  const auto pos = out.find("->");
  if (pos != std::string::npos) out.replace(pos, 2, "_to_");
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

// ---- confusion matrix -----------------------------------------------------

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::vector<std::string> names)
    : classes_(classes), names_(std::move(names)), counts_(classes * classes, 0) {
  if (names_.empty()) names_ = default_names(classes);
  if (names_.size() != classes_) throw ConfigError("confusion matrix: name table size differs from class count");
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t k = 0; k < classes_; ++k) t += at(k, k);
  return t;
}

std::uint64_t ConfusionMatrix::support(std::size_t truth) const {
  std::uint64_t t = 0;
  for (std::size_t p = 0; p < classes_; ++p) t += at(truth, p);
  return t;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
}

std::vector<double> ConfusionMatrix::recall() const {
  std::vector<double> r(classes_, 0.0);
  for (std::size_t k = 0; k < classes_; ++k) {
    const auto s = support(k);
    if (s) r[k] = static_cast<double>(at(k, k)) / static_cast<double>(s);
  }
  return r;
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream os;
  os << "true\\pred";
  for (const auto& n : names_) os << ',' << n;
  os << '\n';
  for (std::size_t t = 0; t < classes_; ++t) {
    os << names_[t];
    for (std::size_t p = 0; p < classes_; ++p) os << ',' << at(t, p);
    os << '\n';
  }
  return os.str();
}

ConfusionMatrix ConfusionMatrix::parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line))
    if (!line.empty()) rows.push_back(io::split_csv_line(line));
  if (rows.empty() || rows[0].size() < 2) throw DataError("confusion CSV: missing header");
  std::vector<std::string> names(rows[0].begin() + 1, rows[0].end());
  ConfusionMatrix m(names.size(), names);
  if (rows.size() != names.size() + 1) throw DataError("confusion CSV: expected one row per class");
  for (std::size_t t = 0; t < names.size(); ++t) {
    const auto& r = rows[t + 1];
    if (r.size() != names.size() + 1 || r[0] != names[t]) throw DataError("confusion CSV: malformed row " + std::to_string(t));
    for (std::size_t p = 0; p < names.size(); ++p) {
      const auto v = io::parse_int(r[p + 1], "confusion count");
      if (v < 0) throw DataError("confusion CSV: negative count");
      m.at(t, p) = static_cast<std::uint64_t>(v);
    }
  }
  return m;
}

std::string ConfusionMatrix::to_svg(const std::string& title) const {
  constexpr int cell = 48, left = 120, top = 60;
  const int size = static_cast<int>(classes_) * cell;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + size + 20 << "\" height=\"" << top + size + 20
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"" << left << "\" y=\"20\">" << xml_escape(title) << "</text>\n";
  os << "<text x=\"" << left << "\" y=\"40\">predicted</text>\n";
  for (std::size_t t = 0; t < classes_; ++t) {
    const auto s = support(t);
    os << "<text x=\"4\" y=\"" << top + static_cast<int>(t) * cell + cell / 2 + 4 << "\">" << xml_escape(names_[t])
       << "</text>\n";
    for (std::size_t p = 0; p < classes_; ++p) {
      const double share = s ? static_cast<double>(at(t, p)) / static_cast<double>(s) : 0.0;
      auto ramp = [share](int hi, int lo) { return static_cast<int>(std::lround(hi + (lo - hi) * share)); };
      const int x = left + static_cast<int>(p) * cell, y = top + static_cast<int>(t) * cell;
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb("
         << ramp(255, 8) << ',' << ramp(255, 81) << ',' << ramp(255, 156) << ")\" stroke=\"#cccccc\"/>\n";
      os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
         << (share > 0.5 ? "#ffffff" : "#000000") << "\">" << at(t, p) << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

// ---- metrics --------------------------------------------------------------

Evaluation evaluate(std::span<const int> predictions, std::span<const int> truth, std::size_t classes,
                    std::vector<std::string> names) {
  if (predictions.size() != truth.size()) throw DataError("evaluate: predictions and truth differ in length");
  if (truth.empty()) throw DataError("evaluate: empty input");
  if (classes == 0) throw ConfigError("evaluate: no classes");
  Evaluation e;
  e.confusion = ConfusionMatrix(classes, std::move(names));
  const int c = static_cast<int>(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= c || predictions[i] < 0 || predictions[i] >= c) {
      throw DataError("evaluate: label out of range at index " + std::to_string(i));
    }
    ++e.confusion.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(predictions[i]));
  }
  e.accuracy = e.confusion.accuracy();
  e.recall = e.confusion.recall();
  return e;
}

Evaluation evaluate_target(nn::Model& model, const data::WindowedDataset& ds) {
  std::vector<std::size_t> rows;
  std::vector<int> anonymised;
  for (std::size_t i = 0; i < ds.windows.size(); ++i) {
    if (ds.windows[i].domain != 1) continue;
    rows.push_back(i);
    anonymised.push_back(ds.windows[i].class_label);
  }
  if (rows.empty()) throw DataError("evaluate: dataset has no target windows");
  const auto truth =
      data::deanonymize_target_classes(anonymised, ds.target_permutation, static_cast<int>(ds.num_classes));
  std::vector<int> pred;
  constexpr std::size_t chunk = 512;
  for (std::size_t s = 0; s < rows.size(); s += chunk) {
    const std::span<const std::size_t> part(rows.data() + s, std::min(chunk, rows.size() - s));
    const auto p = model.predict(nn::stack_windows(ds, part));
    pred.insert(pred.end(), p.begin(), p.end());
  }
  return evaluate(pred, truth, ds.num_classes, ds.activity_names);
}

Evaluation evaluate_user(nn::Model& model, std::span<const data::SensorRecording> recordings, const std::string& user,
                         const data::ActivityTable& activities, double window_seconds, double overlap) {
  const auto& cfg = model.config();
  if (activities.size() != cfg.classes) {
    throw DataError("activity table has " + std::to_string(activities.size()) + " classes, model expects " +
                    std::to_string(cfg.classes));
  }
  data::WindowedDataset ds;
  ds.num_classes = cfg.classes;
  ds.channels = cfg.channels;
  ds.window_len = cfg.window_len;
  ds.activity_names = activities.names();
  ds.normalized = true;
  bool found = false;
  for (const auto& rec : recordings) {
    if (rec.user_id != user) continue;
    found = true;
    rec.validate(cfg.classes);
    if (rec.num_channels() != cfg.channels) throw DataError("recordings have a different channel count than the model");
    const auto raw_len = data::window_geometry(rec.sampling_rate, window_seconds, overlap).window_len;
    if (data::padded_length(raw_len) != cfg.window_len) {
      throw DataError("window length " + std::to_string(raw_len) + " does not match the model");
    }
    for (auto& w : data::segment_windows(rec, window_seconds, overlap)) {
      if (raw_len != cfg.window_len) w.data = data::pad_window(w.data, cfg.channels, raw_len, cfg.window_len);
      data::apply_normalization(w.data, model.norm, cfg.window_len);
      w.domain = 1;
      ds.windows.push_back(std::move(w));
    }
  }
  if (!found) throw DataError("no recordings for user '" + user + "'");
  if (ds.windows.empty()) throw DataError("user '" + user + "' has no usable windows");
  std::vector<std::size_t> rows(ds.windows.size());
  std::vector<int> truth;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = i;
    truth.push_back(ds.windows[i].true_label);
  }
  const auto pred = model.predict(nn::stack_windows(ds, rows));
  return evaluate(pred, truth, cfg.classes, ds.activity_names);
}

// ---- configuration --------------------------------------------------------

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("methods: at least one method required");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    nn::parse_kind(m);
    if (!seen.insert(m).second) throw ConfigError("methods: duplicate method " + m);
  }
  if (!users.empty() && users.size() < 2) throw ConfigError("users: at least two users required");
  if (std::set<std::string>(users.begin(), users.end()).size() != users.size()) throw ConfigError("users: duplicate user");
  if (!(window_seconds > 0.0)) throw ConfigError("window_seconds must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("overlap must lie in [0, 1)");
  if (sampling_rate && !(*sampling_rate > 0.0)) throw ConfigError("sampling_rate must be positive");
  train.validate();
}

ExperimentConfig ExperimentConfig::from_key_values(const std::map<std::string, std::string>& kv,
                                                   const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  std::map<std::string, std::string> rest;
  try {
    for (const auto& [key, value] : kv) {
      if (key == "data") {
        c.data_dir = value;
        if (c.data_dir.is_relative() && !base_dir.empty()) c.data_dir = base_dir / c.data_dir;
      } else if (key == "methods") c.methods = split_list(value);
      else if (key == "users") c.users = split_list(value);
      else if (key == "seed") {
        const auto s = io::parse_int(value, key);
        if (s < 0) throw ConfigError("seed must be non-negative");
        c.root_seed = static_cast<std::uint64_t>(s);
      } else if (key == "window_seconds") c.window_seconds = io::parse_double(value, key);
      else if (key == "overlap") c.overlap = io::parse_double(value, key);
      else if (key == "sampling_rate") c.sampling_rate = io::parse_double(value, key);
      else if (key == "heatmaps") {
        if (value != "true" && value != "false" && value != "0" && value != "1") throw ConfigError("heatmaps must be true or false");
        c.heatmaps = value == "true" || value == "1";
      } else rest[key] = value;
    }
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  const auto unknown = c.train.apply(rest);
  if (!unknown.empty()) throw ConfigError("unknown config key '" + unknown.front() + "'");
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  try {
    kv = io::read_key_values(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  auto c = from_key_values(kv, path.parent_path());
  if (c.data_dir.empty()) throw ConfigError(path.string() + ": missing 'data' key");
  return c;
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  os << "data=" << data_dir.string() << '\n'
     << "methods=" << join(methods) << '\n'
     << "users=" << join(users) << '\n'
     << "seed=" << root_seed << '\n'
     << "window_seconds=" << io::format_double(window_seconds) << '\n'
     << "overlap=" << io::format_double(overlap) << '\n';
  if (sampling_rate) os << "sampling_rate=" << io::format_double(*sampling_rate) << '\n';
  os << "heatmaps=" << (heatmaps ? "true" : "false") << '\n'
     << "states=" << train.states << '\n'
     << "gamma=" << io::format_double(train.gamma) << '\n'
     << "epochs=" << train.epochs << '\n'
     << "batch_size=" << train.batch_size << '\n'
     << "learning_rate=" << io::format_double(train.learning_rate) << '\n'
     << "lambda_max=" << io::format_double(train.lambda_max) << '\n'
     << "update_extractor_in_phases_2_3=" << (train.update_extractor_in_phases_2_3 ? "true" : "false") << '\n';
  return os.str();
}

// ---- experiment -----------------------------------------------------------

std::vector<std::pair<std::string, std::string>> task_pairs(const std::vector<std::string>& users) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : users)
    for (const auto& t : users)
      if (s != t) out.emplace_back(s, t);
  return out;
}

std::vector<ExperimentResult> run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  if (config.data_dir.empty()) throw ConfigError("experiment: no data directory given");
  return run_experiment(config, data::read_dataset_dir(config.data_dir, config.sampling_rate), progress);
}

std::vector<ExperimentResult> run_experiment(const ExperimentConfig& config, const data::DatasetDir& dir,
                                             const ProgressFn& progress) {
  config.validate();
  auto users = config.users;
  if (users.empty()) {
    for (const auto& rec : dir.recordings)
      if (std::find(users.begin(), users.end(), rec.user_id) == users.end()) users.push_back(rec.user_id);
  }
  if (users.size() < 2) throw DataError("experiment needs recordings from at least two users");

  std::vector<ExperimentResult> results;
  const auto pairs = task_pairs(users);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [source, target] = pairs[i];
    const std::uint64_t seed = config.root_seed + i;
    data::TaskOptions opts{config.window_seconds, config.overlap, seed};
    const auto ds = data::build_task_dataset(dir.recordings, source, target, dir.activities, opts);
    const auto hash = data::dataset_hash(ds);
    for (const auto& method : config.methods) {
      if (data::dataset_hash(ds) != hash) throw DataError("prepared dataset changed between methods");
      auto cfg = config.train;
      cfg.seed = seed;
      const auto t0 = std::chrono::steady_clock::now();
      auto fitted = train::fit(ds, cfg, nn::parse_kind(method));
      const auto ev = evaluate_target(*fitted.model, ds);
      ExperimentResult r;
      r.task = source + "->" + target;
      r.source_user = source;
      r.target_user = target;
      r.method = method;
      r.seed = seed;
      r.dataset_hash = hash;
      r.accuracy = ev.accuracy;
      r.recall = ev.recall;
      r.confusion = ev.confusion;
      r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (progress) progress(r);
      results.push_back(std::move(r));
    }
  }
  return results;
}

// ---- reports --------------------------------------------------------------

std::vector<MethodSummary> summarize(std::span<const ExperimentResult> results) {
  std::vector<MethodSummary> out;
  std::vector<std::vector<double>> acc;
  for (const auto& r : results) {
    auto it = std::find_if(out.begin(), out.end(), [&](const MethodSummary& s) { return s.method == r.method; });
    if (it == out.end()) {
      out.push_back({r.method});
      acc.emplace_back();
      it = out.end() - 1;
    }
    acc[static_cast<std::size_t>(it - out.begin())].push_back(r.accuracy);
  }
  for (std::size_t m = 0; m < out.size(); ++m) {
    const auto& a = acc[m];
    double mean = 0.0;
    for (double v : a) mean += v;
    mean /= static_cast<double>(a.size());
    double var = 0.0;
    for (double v : a) var += (v - mean) * (v - mean);
    out[m].tasks = a.size();
    out[m].mean_accuracy = mean;
    out[m].std_accuracy = std::sqrt(var / static_cast<double>(a.size()));
  }
  return out;
}

std::string results_csv(std::span<const ExperimentResult> results) {
  if (results.empty()) throw DataError("no results to report");
  const auto& names = results.front().confusion.names();
  std::ostringstream os;
  os << "task,source,target,method,seed,dataset_hash,target_supervision,correct,total,accuracy";
  for (const auto& n : names) os << ",recall_" << n;
  os << '\n';
  for (const auto& r : results) {
    if (r.confusion.names() != names) throw DataError("results disagree on the class table");
    os << r.task << ',' << r.source_user << ',' << r.target_user << ',' << r.method << ',' << r.seed << ','
       << r.dataset_hash << ",anonymized_grouping," << r.confusion.trace() << ',' << r.confusion.total() << ','
       << io::format_double(r.accuracy);
    for (double v : r.recall) os << ',' << io::format_double(v);
    os << '\n';
  }
  return os.str();
}

std::vector<ExperimentResult> parse_results_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<ExperimentResult> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = io::split_csv_line(line);
    if (header.empty()) {
      header = cells;
      if (header.size() < 10 || header[0] != "task" || header[9] != "accuracy") throw DataError("results CSV: bad header");
      continue;
    }
    if (cells.size() != header.size()) throw DataError("results CSV: row has wrong number of fields");
    ExperimentResult r;
    r.task = cells[0];
    r.source_user = cells[1];
    r.target_user = cells[2];
    r.method = cells[3];
    r.seed = static_cast<std::uint64_t>(io::parse_int(cells[4], "seed"));
    r.dataset_hash = static_cast<std::uint32_t>(io::parse_int(cells[5], "dataset_hash"));
    r.accuracy = io::parse_double(cells[9], "accuracy");
    for (std::size_t k = 10; k < cells.size(); ++k) r.recall.push_back(io::parse_double(cells[k], header[k]));
    out.push_back(std::move(r));
  }
  if (header.empty()) throw DataError("results CSV: empty");
  return out;
}

std::string summary_csv(std::span<const MethodSummary> summary) {
  std::ostringstream os;
  os << "method,tasks,mean_accuracy,std_accuracy_over_tasks\n";
  for (const auto& s : summary)
    os << s.method << ',' << s.tasks << ',' << io::format_double(s.mean_accuracy) << ','
       << io::format_double(s.std_accuracy) << '\n';
  return os.str();
}

void emit_reports(std::span<const ExperimentResult> results, const std::filesystem::path& out_dir, bool heatmaps,
                  const ExperimentConfig* config) {
  if (results.empty()) throw DataError("no results to report");
  const auto results_text = results_csv(results);
  const auto summary = summarize(results);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  io::write_text_file(out_dir / "results.csv", results_text);
  io::write_text_file(out_dir / "summary.csv", summary_csv(summary));
  std::ostringstream timings;
  timings << "task,method,runtime_seconds\n";
  for (const auto& r : results) {
    timings << r.task << ',' << r.method << ',' << io::format_double(r.runtime_seconds) << '\n';
    const auto stem = "confusion_" + file_task(r.task) + "_" + r.method;
    io::write_text_file(out_dir / (stem + ".csv"), r.confusion.to_csv());
    if (heatmaps) io::write_text_file(out_dir / (stem + ".svg"), r.confusion.to_svg(r.task + " " + r.method));
  }
  io::write_text_file(out_dir / "timings.csv", timings.str());
  if (config) io::write_text_file(out_dir / "config.txt", config->to_text());
}

}  // namespace dtsda::eval
