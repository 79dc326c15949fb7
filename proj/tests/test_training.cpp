#include <cmath>

#include "doctest.h"
#include "dtsda/error.hpp"
#include "dtsda/training.hpp"

using namespace dtsda;
using namespace dtsda::train;

namespace {

data::SynthSpec tiny_spec() {
  data::SynthSpec s;
  s.classes = 2;
  s.states = 2;
  s.channels = 3;
  s.segments_per_activity = 2;
  s.windows_per_segment = 16;
  s.seed = 3;
  return s;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.states = 2;
  c.epochs = 2;
  c.batch_size = 32;
  c.seed = 5;
  return c;
}

std::vector<std::vector<double>> snapshot(std::vector<ad::Parameter*> params) {
  std::vector<std::vector<double>> out;
  for (auto* p : params) out.push_back(p->value.data);
  return out;
}

std::vector<ad::Parameter*> extractor_params(nn::Model& m) {
  std::vector<ad::Parameter*> out;
  m.extractor().collect(out);
  return out;
}

double target_accuracy(nn::Model& m, const data::WindowedDataset& ds) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.windows.size(); ++i)
    if (ds.windows[i].domain == 1) rows.push_back(i);
  const auto pred = m.predict(nn::stack_windows(ds, rows));
  std::size_t ok = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) ok += pred[k] == ds.windows[rows[k]].true_label;
  return static_cast<double>(ok) / static_cast<double>(rows.size());
}

}  // namespace

TEST_CASE("lambda schedule") {
  CHECK(lambda_schedule(0.0) == 0.0);
  CHECK(lambda_schedule(1.0, 2.0) == doctest::Approx(2.0 * (2.0 / (1.0 + std::exp(-10.0)) - 1.0)));
  CHECK(lambda_schedule(1.0) == doctest::Approx(0.99991).epsilon(1e-5));
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double v = lambda_schedule(i / 100.0);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK_THROWS_AS(lambda_schedule(1.5), ConfigError);
  CHECK_THROWS_AS(lambda_schedule(-0.1), ConfigError);
}

TEST_CASE("train config keys") {
  TrainConfig c;
  const auto unknown = c.apply({{"states", "4"}, {"gamma", "0.5"}, {"epochs", "7"}, {"data", "x"},
                                {"update_extractor_in_phases_2_3", "true"}});
  CHECK(c.states == 4);
  CHECK(c.gamma == 0.5);
  CHECK(c.epochs == 7);
  CHECK(c.update_extractor_in_phases_2_3);
  CHECK(unknown == std::vector<std::string>{"data"});
  CHECK_THROWS_AS(TrainConfig().apply({{"states", "0"}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig().apply({{"gamma", "-1"}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig().apply({{"epochs", "many"}}), ConfigError);
}

TEST_CASE("initialisation puts every window in state 0") {
  const auto ds = data::synthesize_dataset(tiny_spec(), 0, 1, 2);
  DtsdaTrainer t(ds, tiny_config());
  const auto yhat = t.pseudo_labels();
  for (std::size_t i = 0; i < yhat.size(); ++i) {
    CHECK(t.dataset().windows[i].ts == 0);
    CHECK(yhat[i] == t.dataset().windows[i].class_label);
    CHECK(yhat[i] < 4);
  }
  DtsdaTrainer again(ds, tiny_config());
  CHECK(snapshot(t.model().parameters()) == snapshot(again.model().parameters()));

  auto unnormalized = ds;
  unnormalized.normalized = false;
  CHECK_THROWS_AS(DtsdaTrainer(unnormalized, tiny_config()), DataError);
}

TEST_CASE("zero epochs returns the initial model") {
  const auto ds = data::synthesize_dataset(tiny_spec(), 0, 1, 2);
  auto cfg = tiny_config();
  cfg.epochs = 0;
  const auto r = fit_dtsda(ds, cfg);
  CHECK(r.log.epochs.empty());
  DtsdaTrainer fresh(ds, cfg);
  CHECK(snapshot(r.model->parameters()) == snapshot(fresh.model().parameters()));
}

TEST_CASE("single state never changes") {
  const auto ds = data::synthesize_dataset(tiny_spec(), 0, 1, 2);
  auto cfg = tiny_config();
  cfg.states = 1;
  DtsdaTrainer t(ds, cfg);
  for (int e = 0; e < 2; ++e) CHECK(t.train_epoch().ts_change_fraction == 0.0);
  const auto yhat = t.pseudo_labels();
  for (std::size_t i = 0; i < yhat.size(); ++i) CHECK(yhat[i] == t.dataset().windows[i].class_label);
}

TEST_CASE("training log and determinism") {
  const auto ds = data::synthesize_dataset(tiny_spec(), 0, 1, 2);
  const auto a = fit_dtsda(ds, tiny_config());
  const auto b = fit_dtsda(ds, tiny_config());
  REQUIRE(a.log.epochs.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) {
    const auto& x = a.log.epochs[e];
    const auto& y = b.log.epochs[e];
    CHECK(x.epoch == e);
    CHECK(std::isfinite(x.loss_f));
    CHECK(std::isfinite(x.loss_t));
    CHECK(std::isfinite(x.loss_c));
    CHECK(x.ts_change_fraction >= 0.0);
    CHECK(x.ts_change_fraction <= 1.0);
    CHECK(x.loss_f == y.loss_f);
    CHECK(x.loss_t == y.loss_t);
    CHECK(x.loss_c == y.loss_c);
    CHECK(x.lambda == y.lambda);
    CHECK(x.source_rows + x.target_rows == ds.windows.size());
  }
  CHECK(a.log.epochs[1].lambda >= a.log.epochs[0].lambda);
  CHECK(snapshot(a.model->parameters()) == snapshot(b.model->parameters()));
  const auto csv = a.log.to_csv();
  CHECK(csv.rfind("epoch,lambda,L_f,L_t,L_c,ts_change_fraction,wall_seconds\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("phases two and three leave the extractor untouched") {
  const auto ds = data::synthesize_dataset(tiny_spec(), 0, 1, 2);
  DtsdaTrainer t(ds, tiny_config());
  EpochState st;
  t.phase_fine_grained(st);
  const auto before = snapshot(extractor_params(t.model()));
  const auto features = t.extract_all();
  t.relabel(features);
  const auto temporal_before = snapshot([&] {
    std::vector<ad::Parameter*> p;
    t.model().temporal.collect(p);
    return p;
  }());
  t.phase_temporal(features, 0.5);
  t.phase_cross_user(features, 0.5);
  CHECK(snapshot(extractor_params(t.model())) == before);
  std::vector<ad::Parameter*> p;
  t.model().temporal.collect(p);
  CHECK(snapshot(p) != temporal_before);

  auto cfg = tiny_config();
  cfg.update_extractor_in_phases_2_3 = true;
  DtsdaTrainer u(ds, cfg);
  const auto u_before = snapshot(extractor_params(u.model()));
  u.phase_temporal(u.extract_all(), 0.5);
  CHECK(snapshot(extractor_params(u.model())) != u_before);
}

TEST_CASE("ts changes only at the relabel step") {
  const auto ds = data::synthesize_dataset(tiny_spec(), 0, 1, 2);
  DtsdaTrainer t(ds, tiny_config());
  EpochState st;
  t.phase_fine_grained(st);
  CHECK(t.pseudo_labels() == std::vector<int>([&] {
          std::vector<int> c;
          for (const auto& w : t.dataset().windows) c.push_back(w.class_label);
          return c;
        }()));
  const auto features = t.extract_all();
  t.relabel(features);
  const auto after = t.pseudo_labels();
  t.phase_temporal(features, 0.1);
  t.phase_cross_user(features, 0.1);
  CHECK(t.pseudo_labels() == after);
  for (std::size_t i = 0; i < after.size(); ++i) {
    const auto& w = t.dataset().windows[i];
    CHECK(after[i] == data::compose_pseudo_label(w.ts, w.class_label, 2, 2));
  }
}

TEST_CASE("DANN with lambda 0 is source-only") {
  const auto ds = data::synthesize_dataset(tiny_spec(), 0, 1, 2);
  auto cfg = tiny_config();
  const auto so = fit_baseline(ds, cfg, nn::ModelKind::SourceOnly);
  cfg.lambda_max = 0.0;
  const auto dann = fit_baseline(ds, cfg, nn::ModelKind::Dann);
  std::vector<std::size_t> all(ds.windows.size());
  std::iota(all.begin(), all.end(), 0);
  const auto x = nn::stack_windows(ds, all);
  CHECK(so.model->predict(x) == dann.model->predict(x));
  CHECK(snapshot(so.model->parameters()) == snapshot(dann.model->parameters()));
  const auto again = fit_baseline(ds, tiny_config(), nn::ModelKind::SourceOnly);
  CHECK(snapshot(so.model->parameters()) == snapshot(again.model->parameters()));
  CHECK_THROWS_AS(fit_baseline(ds, cfg, nn::ModelKind::Dtsda), ConfigError);
}

TEST_CASE("source-only solves a shift-free task") {
  auto spec = tiny_spec();
  spec.mixing = 0.0;
  spec.scale_jitter = 0.0;
  spec.bias_scale = 0.0;
  spec.user_noise = 0.0;
  spec.windows_per_segment = 30;
  const auto ds = data::synthesize_dataset(spec, 0, 1, 2);
  auto cfg = tiny_config();
  cfg.epochs = 6;
  const auto r = fit_baseline(ds, cfg, nn::ModelKind::SourceOnly);
  CHECK(target_accuracy(*r.model, ds) >= 0.95);
}
