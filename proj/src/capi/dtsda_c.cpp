#include "dtsda/dtsda.h"

#include <memory>
#include <new>
#include <string>

#include "dtsda/error.hpp"
#include "dtsda/eval.hpp"
#include "dtsda/io.hpp"
#include "dtsda/labeling.hpp"

struct dtsda_model {
  std::unique_ptr<dtsda::nn::Model> model;
};

namespace {

thread_local std::string g_last_error;

template <class F>
int guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return DTSDA_OK;
  } catch (const dtsda::Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DTSDA_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DTSDA_ERR_INTERNAL;
  }
}

const char* require(const char* s, const char* what) {
  if (!s || !*s) throw dtsda::ConfigError(std::string(what) + " is required");
  return s;
}

dtsda::nn::ModelKind method_kind(int method) {
  if (method < DTSDA_METHOD_DTSDA || method > DTSDA_METHOD_SOURCE_ONLY) {
    throw dtsda::ConfigError("unknown method " + std::to_string(method));
  }
  return static_cast<dtsda::nn::ModelKind>(method);
}

dtsda::nn::Model& model_of(const dtsda_model* m) {
  if (!m || !m->model) throw dtsda::ConfigError("model handle is null");
  return *m->model;
}

}  // namespace

extern "C" {

const char* dtsda_version(void) { return "1.0.0"; }

const char* dtsda_last_error(void) { return g_last_error.c_str(); }

int dtsda_synthesize(const char* spec_path, int64_t seed_override, const char* out_dir) {
  return guarded([&] {
    auto spec = spec_path ? dtsda::data::SynthSpec::load(spec_path) : dtsda::data::SynthSpec{};
    if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
    dtsda::data::write_dataset_dir(require(out_dir, "output directory"), dtsda::data::synthesize_recordings(spec));
  });
}

int dtsda_train(const char* data_dir, const char* source_user, const char* target_user, const char* config_path,
                int method, const char* log_csv_path, dtsda_model** out) {
  return guarded([&] {
    if (!out) throw dtsda::ConfigError("output handle pointer is null");
    *out = nullptr;
    const auto kind = method_kind(method);
    std::map<std::string, std::string> kv;
    if (config_path) {
      try {
        kv = dtsda::io::read_key_values(config_path);
      } catch (const dtsda::DataError& e) {
        throw dtsda::ConfigError(e.what());
      }
    }
    const auto cfg = dtsda::eval::ExperimentConfig::from_key_values(kv);
    const auto dir = dtsda::data::read_dataset_dir(require(data_dir, "data directory"), cfg.sampling_rate);
    const dtsda::data::TaskOptions opts{cfg.window_seconds, cfg.overlap, cfg.root_seed};
    const auto ds = dtsda::data::build_task_dataset(dir.recordings, require(source_user, "source user"),
                                                    require(target_user, "target user"), dir.activities, opts);
    auto tc = cfg.train;
    tc.seed = cfg.root_seed;
    auto fitted = dtsda::train::fit(ds, tc, kind);
    if (log_csv_path) dtsda::io::write_text_file(log_csv_path, fitted.log.to_csv());
    *out = new dtsda_model{std::move(fitted.model)};
  });
}

int dtsda_model_save(dtsda_model* model, const char* path) {
  return guarded([&] { dtsda::nn::save_model(model_of(model), require(path, "model path")); });
}

int dtsda_model_load(const char* path, dtsda_model** out) {
  return guarded([&] {
    if (!out) throw dtsda::ConfigError("output handle pointer is null");
    *out = nullptr;
    auto m = dtsda::nn::load_model(require(path, "model path"));
    *out = new dtsda_model{std::move(m)};
  });
}

void dtsda_model_free(dtsda_model* model) { delete model; }

int dtsda_model_info_get(const dtsda_model* model, dtsda_model_info* out) {
  return guarded([&] {
    if (!out) throw dtsda::ConfigError("info pointer is null");
    const auto& c = model_of(model).config();
    *out = {static_cast<int>(c.kind), c.classes, c.states, c.channels, c.window_len, c.seed};
  });
}

int dtsda_model_predict(dtsda_model* model, const double* windows, size_t count, int* out_labels) {
  return guarded([&] {
    auto& m = model_of(model);
    if (count == 0) return;
    if (!windows || !out_labels) throw dtsda::ConfigError("window or label buffer is null");
    const auto& c = m.config();
    const std::size_t per = c.channels * c.window_len;
    dtsda::ad::Tensor x({count, c.channels, c.window_len});
    x.data.assign(windows, windows + count * per);
    for (std::size_t i = 0; i < count; ++i) {
      dtsda::data::apply_normalization(std::span<double>(x.data.data() + i * per, per), m.norm, c.window_len);
    }
    const auto pred = m.predict(x);
    for (std::size_t i = 0; i < count; ++i) out_labels[i] = pred[i];
  });
}

int dtsda_evaluate(dtsda_model* model, const char* data_dir, const char* target_user, const char* out_dir,
                   double* accuracy) {
  return guarded([&] {
    auto& m = model_of(model);
    const auto dir = dtsda::data::read_dataset_dir(require(data_dir, "data directory"));
    const std::string target = require(target_user, "target user");
    const auto ev = dtsda::eval::evaluate_user(m, dir.recordings, target, dir.activities);
    if (accuracy) *accuracy = ev.accuracy;
    if (out_dir) {
      dtsda::eval::ExperimentResult r;
      r.task = "model->" + target;
      r.source_user = "model";
      r.target_user = target;
      r.method = dtsda::nn::kind_name(m.config().kind);
      r.seed = m.config().seed;
      r.accuracy = ev.accuracy;
      r.recall = ev.recall;
      r.confusion = ev.confusion;
      const std::vector<dtsda::eval::ExperimentResult> results{r};
      dtsda::eval::emit_reports(results, out_dir);
    }
  });
}

int dtsda_run_experiment(const char* config_path, const char* out_dir, dtsda_progress_fn progress, void* user) {
  return guarded([&] {
    const auto cfg = dtsda::eval::ExperimentConfig::load(require(config_path, "config path"));
    const std::string out = require(out_dir, "output directory");
    const auto results = dtsda::eval::run_experiment(cfg, [&](const dtsda::eval::ExperimentResult& r) {
      if (progress) progress(r.task.c_str(), r.method.c_str(), r.accuracy, user);
    });
    dtsda::eval::emit_reports(results, out, cfg.heatmaps, &cfg);
  });
}

int dtsda_label(const char* in_csv, const char* out_csv, size_t states, double gamma, uint64_t seed) {
  return guarded([&] {
    dtsda::tsl::label_feature_csv(require(in_csv, "input CSV"), require(out_csv, "output CSV"), states, gamma, seed);
  });
}

}  // extern "C"
