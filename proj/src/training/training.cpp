#include "dtsda/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dtsda/error.hpp"
#include "dtsda/io.hpp"
#include "dtsda/labeling.hpp"

namespace dtsda::train {

using ad::Graph;
using ad::Mode;
using ad::Shape;
using ad::Value;

void TrainConfig::validate() const {
  if (states < 1) throw ConfigError("states must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be finite and >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(lambda_max >= 0.0) || !std::isfinite(lambda_max)) throw ConfigError("lambda_max must be finite and >= 0");
}

std::vector<std::string> TrainConfig::apply(const std::map<std::string, std::string>& kv) {
  std::vector<std::string> unknown;
  auto as_count = [](const std::string& key, const std::string& v) {
    const auto n = io::parse_int(v, key);
    if (n < 0) throw ConfigError(key + " must be non-negative");
    return static_cast<std::size_t>(n);
  };
  for (const auto& [key, value] : kv) {
    try {
      if (key == "states") states = as_count(key, value);
      else if (key == "gamma") gamma = io::parse_double(value, key);
      else if (key == "epochs") epochs = as_count(key, value);
      else if (key == "batch_size") batch_size = as_count(key, value);
      else if (key == "learning_rate") learning_rate = io::parse_double(value, key);
      else if (key == "lambda_max") lambda_max = io::parse_double(value, key);
      else if (key == "seed") seed = as_count(key, value);
      else if (key == "update_extractor_in_phases_2_3") {
        if (value != "true" && value != "false" && value != "0" && value != "1") {
          throw ConfigError(key + " must be true or false");
        }
        update_extractor_in_phases_2_3 = value == "true" || value == "1";
      } else {
        unknown.push_back(key);
      }
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
  }
  validate();
  return unknown;
}

double lambda_schedule(double progress, double lambda_max) {
  if (!(progress >= 0.0 && progress <= 1.0)) throw ConfigError("lambda_schedule: progress must lie in [0, 1]");
  return lambda_max * (2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0);
}

std::string TrainingLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,lambda,L_f,L_t,L_c,ts_change_fraction,wall_seconds\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << io::format_double(e.lambda) << ',' << io::format_double(e.loss_f) << ','
       << io::format_double(e.loss_t) << ',' << io::format_double(e.loss_c) << ','
       << io::format_double(e.ts_change_fraction) << ',' << io::format_double(e.wall_seconds) << '\n';
  }
  return os.str();
}

namespace {

void check_finite(double loss, const char* phase, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string("non-finite loss in ") + phase + " phase, epoch " + std::to_string(epoch) +
                       ", batch " + std::to_string(batch));
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  // Single-row tail joins the previous batch.
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

template <class F>
std::vector<int> gather(const data::WindowedDataset& ds, std::span<const std::size_t> rows, F field) {
  std::vector<int> out(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) out[k] = field(ds.windows[rows[k]]);
  return out;
}

void check_dataset(const data::WindowedDataset& ds) {
  ds.validate();
  if (!ds.normalized) throw DataError("training requires a normalised dataset");
  if (ds.count_domain(0) == 0) throw DataError("training requires source windows");
  if (ds.count_domain(1) == 0) throw DataError("training requires target windows");
}

}  // namespace

DtsdaTrainer::DtsdaTrainer(const data::WindowedDataset& dataset, TrainConfig config)
    : dataset_(dataset), config_(config), rng_(config.seed + 1) {
  config_.validate();
  check_dataset(dataset_);
  for (auto& w : dataset_.windows) w.ts = 0;
  dataset_.num_states = config_.states;
  nn::ModelConfig mc{nn::ModelKind::Dtsda, dataset_.num_classes, config_.states, dataset_.channels,
                     dataset_.window_len, config_.seed};
  model_ = std::make_unique<nn::DtsdaModel>(mc);
  model_->norm = dataset_.norm;
  const ad::OptimizerConfig oc{config_.learning_rate};
  std::vector<ad::Parameter*> p1, p2, p3;
  model_->extractor().collect(p1);
  model_->fine.collect(p1);
  if (config_.update_extractor_in_phases_2_3) {
    model_->extractor().collect(p2);
    model_->extractor().collect(p3);
  }
  model_->temporal.collect(p2);
  model_->cross.collect(p3);
  opt_fine_ = std::make_unique<ad::Optimizer>(p1, oc);
  opt_temporal_ = std::make_unique<ad::Optimizer>(p2, oc);
  opt_cross_ = std::make_unique<ad::Optimizer>(p3, oc);
}

std::vector<int> DtsdaTrainer::pseudo_labels() const {
  const int C = static_cast<int>(dataset_.num_classes), T = static_cast<int>(dataset_.num_states);
  std::vector<int> out;
  out.reserve(dataset_.windows.size());
  for (const auto& w : dataset_.windows) out.push_back(data::compose_pseudo_label(w.ts, w.class_label, C, T));
  return out;
}

std::unique_ptr<nn::DtsdaModel> DtsdaTrainer::release_model() {
  model_->trained = true;
  return std::move(model_);
}

std::vector<std::vector<std::size_t>> DtsdaTrainer::shuffled_batches() {
  return make_batches(dataset_.windows.size(), config_.batch_size, rng_);
}

Tensor DtsdaTrainer::rows_of(const Tensor& features, std::span<const std::size_t> rows) const {
  const std::size_t dim = features.dim(1);
  Tensor out(Shape{rows.size(), dim});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::copy_n(features.data.begin() + static_cast<std::ptrdiff_t>(rows[k] * dim), dim,
                out.data.begin() + static_cast<std::ptrdiff_t>(k * dim));
  }
  return out;
}

Tensor DtsdaTrainer::extract_all() {
  const std::size_t n = dataset_.windows.size(), dim = model_->extractor().feature_dim();
  Tensor out(Shape{n, dim});
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0; start < n; start += chunk) {
    std::vector<std::size_t> rows(std::min(chunk, n - start));
    std::iota(rows.begin(), rows.end(), start);
    Graph g;
    const auto f = model_->extractor()(g, g.constant(nn::stack_windows(dataset_, rows)), Mode::Eval);
    std::copy(f.data().begin(), f.data().end(), out.data.begin() + static_cast<std::ptrdiff_t>(start * dim));
  }
  return out;
}

double DtsdaTrainer::phase_fine_grained(EpochState& st) {
  const int C = static_cast<int>(dataset_.num_classes), T = static_cast<int>(dataset_.num_states);
  double total = 0.0;
  const auto batches = shuffled_batches();
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& rows = batches[b];
    const auto yhat = gather(dataset_, rows, [&](const data::Window& w) {
      return data::compose_pseudo_label(w.ts, w.class_label, C, T);
    });
    const auto d = gather(dataset_, rows, [](const data::Window& w) { return w.domain; });
    for (int v : d) ++(v == 0 ? st.source_rows : st.target_rows);
    opt_fine_->zero_grad();
    Graph g;
    const Value f = model_->extractor()(g, g.constant(nn::stack_windows(dataset_, rows)), Mode::Train);
    const auto loss = nn::fine_grained_loss(g, model_->fine, f, yhat, d);
    const double value = loss.total.data()[0];
    check_finite(value, "fine-grained", epoch_, b);
    g.backward(loss.total);
    opt_fine_->step();
    total += value;
  }
  return total / static_cast<double>(batches.size());
}

double DtsdaTrainer::phase_temporal(const Tensor& features, double lambda) {
  double total = 0.0;
  const auto batches = shuffled_batches();
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& rows = batches[b];
    const auto ts = gather(dataset_, rows, [](const data::Window& w) { return w.ts; });
    const auto c = gather(dataset_, rows, [](const data::Window& w) { return w.class_label; });
    const auto d = gather(dataset_, rows, [](const data::Window& w) { return w.domain; });
    opt_temporal_->zero_grad();
    Graph g;
    const Value f = config_.update_extractor_in_phases_2_3
                        ? model_->extractor()(g, g.constant(nn::stack_windows(dataset_, rows)), Mode::Train)
                        : g.constant(rows_of(features, rows));
    const auto loss = nn::temporal_component_loss(g, model_->temporal, f, ts, c, d, lambda);
    const double value = loss.total.data()[0];
    check_finite(value, "temporal-state", epoch_, b);
    g.backward(loss.total);
    opt_temporal_->step();
    total += value;
  }
  return total / static_cast<double>(batches.size());
}

double DtsdaTrainer::phase_cross_user(const Tensor& features, double lambda) {
  double total = 0.0;
  const auto batches = shuffled_batches();
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& rows = batches[b];
    const auto ts = gather(dataset_, rows, [](const data::Window& w) { return w.ts; });
    const auto c = gather(dataset_, rows, [](const data::Window& w) { return w.class_label; });
    const auto d = gather(dataset_, rows, [](const data::Window& w) { return w.domain; });
    opt_cross_->zero_grad();
    Graph g;
    const Value f = config_.update_extractor_in_phases_2_3
                        ? model_->extractor()(g, g.constant(nn::stack_windows(dataset_, rows)), Mode::Train)
                        : g.constant(rows_of(features, rows));
    const auto loss = nn::cross_user_loss(g, model_->cross, f, ts, c, d, lambda);
    const double value = loss.total.data()[0];
    check_finite(value, "cross-user", epoch_, b);
    g.backward(loss.total);
    opt_cross_->step();
    total += value;
  }
  return total / static_cast<double>(batches.size());
}

double DtsdaTrainer::relabel(const Tensor& features) {
  const tsl::RowFn feature_fn = [&](std::span<const std::size_t> rows) {
    Graph g;
    return model_->temporal.bottleneck(g, g.constant(rows_of(features, rows)), Mode::Eval).tensor();
  };
  const tsl::RowFn probs_fn = [&](std::span<const std::size_t> rows) {
    Graph g;
    const Value z = model_->temporal.bottleneck(g, g.constant(rows_of(features, rows)), Mode::Eval);
    return ad::softmax_rows(model_->temporal.state(g, z).tensor());
  };
  return tsl::relabel_dataset(dataset_, feature_fn, probs_fn, config_.states, config_.gamma).change_fraction();
}

EpochState DtsdaTrainer::train_epoch() {
  if (!model_) throw ConfigError("trainer no longer owns its model");
  const auto start = std::chrono::steady_clock::now();
  EpochState st;
  st.epoch = epoch_;
  const double progress = config_.epochs ? static_cast<double>(epoch_) / static_cast<double>(config_.epochs) : 0.0;
  st.lambda = lambda_schedule(std::min(progress, 1.0), config_.lambda_max);

  st.loss_f = phase_fine_grained(st);

  const Tensor features = extract_all();
  st.ts_change_fraction = relabel(features);
  st.loss_t = phase_temporal(features, st.lambda);
  st.loss_c = phase_cross_user(features, st.lambda);
  st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ++epoch_;
  return st;
}

TrainingLog DtsdaTrainer::fit() {
  TrainingLog log;
  for (std::size_t e = 0; e < config_.epochs; ++e) log.epochs.push_back(train_epoch());
  return log;
}

FitResult fit_dtsda(const data::WindowedDataset& dataset, const TrainConfig& config) {
  DtsdaTrainer trainer(dataset, config);
  FitResult r;
  r.log = trainer.fit();
  r.model = trainer.release_model();
  return r;
}

FitResult fit_baseline(const data::WindowedDataset& dataset, const TrainConfig& config, nn::ModelKind kind) {
  if (kind == nn::ModelKind::Dtsda) throw ConfigError("fit_baseline: dtsda is not a baseline");
  config.validate();
  check_dataset(dataset);
  nn::ModelConfig mc{kind, dataset.num_classes, 1, dataset.channels, dataset.window_len, config.seed};
  auto model = std::make_unique<nn::BaselineModel>(mc);
  model->norm = dataset.norm;
  ad::Optimizer opt(model->parameters(), ad::OptimizerConfig{config.learning_rate});
  std::mt19937_64 rng(config.seed + 1);
  FitResult r;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochState st;
    st.epoch = epoch;
    st.lambda = kind == nn::ModelKind::SourceOnly
                    ? 0.0
                    : lambda_schedule(static_cast<double>(epoch) / static_cast<double>(config.epochs), config.lambda_max);
    const auto batches = make_batches(dataset.windows.size(), config.batch_size, rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& rows = batches[b];
      std::vector<std::size_t> src;
      std::vector<int> src_c, d;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& w = dataset.windows[rows[k]];
        d.push_back(w.domain);
        if (w.domain == 0) {
          src.push_back(k);
          src_c.push_back(w.class_label);
          ++st.source_rows;
        } else {
          ++st.target_rows;
        }
      }
      opt.zero_grad();
      Graph g;
      const Value z = model->bottleneck(
          g, model->extractor()(g, g.constant(nn::stack_windows(dataset, rows)), Mode::Train), Mode::Train);
      Value loss = ad::softmax_cross_entropy(model->domain_disc(g, ad::gradient_reversal(z, st.lambda), Mode::Train), d);
      if (src.empty()) {
        g.param(model->classifier.weight);
        g.param(model->classifier.bias);
      } else {
        loss = ad::add(ad::softmax_cross_entropy(model->classifier(g, ad::select_rows(z, src)), src_c), loss);
      }
      const double value = loss.data()[0];
      check_finite(value, nn::kind_name(kind), epoch, b);
      g.backward(loss);
      opt.step();
      total += value;
    }
    st.loss_c = total / static_cast<double>(batches.size());
    st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.log.epochs.push_back(st);
  }
  model->trained = true;
  r.model = std::move(model);
  return r;
}

FitResult fit(const data::WindowedDataset& dataset, const TrainConfig& config, nn::ModelKind kind) {
  return kind == nn::ModelKind::Dtsda ? fit_dtsda(dataset, config) : fit_baseline(dataset, config, kind);
}

}  // namespace dtsda::train
