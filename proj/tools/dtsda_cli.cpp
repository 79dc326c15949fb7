#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "dtsda/dtsda.h"

namespace {

int report(int status) {
  if (status != DTSDA_OK) std::fprintf(stderr, "dtsda: error: %s\n", dtsda_last_error());
  return status;
}

int method_code(const std::string& name) {
  if (name == "dtsda") return DTSDA_METHOD_DTSDA;
  if (name == "dann") return DTSDA_METHOD_DANN;
  return DTSDA_METHOD_SOURCE_ONLY;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-user activity recognition with temporal-state domain adaptation"};
  app.set_version_flag("--version", std::string(dtsda_version()));
  app.require_subcommand(1);

  std::string spec, out, data, source, target, config, method = "dtsda", log, model;
  std::string in;
  long long seed = -1;
  std::size_t states = 3;
  double gamma = 0.2;
  bool quiet = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-user dataset directory");
  synth->add_option("--spec", spec, "key,value CSV of generator settings")->check(CLI::ExistingFile);
  synth->add_option("--seed", seed, "Override the generator seed");
  synth->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model for one source -> target pair");
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--source", source, "Source user")->required();
  train->add_option("--target", target, "Target user")->required();
  train->add_option("--config", config, "key=value training config")->check(CLI::ExistingFile);
  train->add_option("--method", method, "dtsda, dann or source_only")
      ->check(CLI::IsMember({"dtsda", "dann", "source_only"}));
  train->add_option("--log", log, "Write the per-epoch training log CSV here");
  train->add_option("--out", out, "Model file")->required();

  auto* eval = app.add_subcommand("eval", "Score a saved model on a user's recordings");
  eval->add_option("--model", model, "Model file")->required();
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--target", target, "User to evaluate")->required();
  eval->add_option("--out", out, "Report directory");

  auto* run = app.add_subcommand("run", "Run every ordered user pair for every configured method");
  run->add_option("--config", config, "key=value experiment config")->required();
  run->add_option("--out", out, "Report directory")->required();
  run->add_flag("--quiet", quiet, "Do not print per-task progress");

  auto* label = app.add_subcommand("label", "Assign pseudo temporal states to a feature CSV");
  label->add_option("--in", in, "CSV with segment, order, feature_* columns")->required();
  label->add_option("--out", out, "Output CSV")->required();
  label->add_option("--states", states, "Number of temporal states")->check(CLI::PositiveNumber);
  label->add_option("--gamma", gamma, "State switch penalty")->check(CLI::NonNegativeNumber);
  label->add_option("--seed", seed, "Seed of the initial state classifier");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : DTSDA_ERR_CONFIG;
  }

  if (*synth) return report(dtsda_synthesize(opt(spec), seed, out.c_str()));

  if (*train) {
    dtsda_model* m = nullptr;
    int s = dtsda_train(data.c_str(), source.c_str(), target.c_str(), opt(config), method_code(method), opt(log), &m);
    if (s == DTSDA_OK) s = dtsda_model_save(m, out.c_str());
    dtsda_model_free(m);
    return report(s);
  }

  if (*eval) {
    dtsda_model* m = nullptr;
    double acc = 0.0;
    int s = dtsda_model_load(model.c_str(), &m);
    if (s == DTSDA_OK) s = dtsda_evaluate(m, data.c_str(), target.c_str(), opt(out), &acc);
    dtsda_model_free(m);
    if (s == DTSDA_OK) std::printf("accuracy %.6f\n", acc);
    return report(s);
  }

  if (*run) {
    auto progress = [](const char* task, const char* name, double acc, void*) {
      std::printf("%-16s %-12s accuracy %.4f\n", task, name, acc);
      std::fflush(stdout);
    };
    return report(dtsda_run_experiment(config.c_str(), out.c_str(), quiet ? nullptr : +progress, nullptr));
  }

  if (*label) {
    return report(dtsda_label(in.c_str(), out.c_str(), states, gamma, seed < 0 ? 0 : static_cast<std::uint64_t>(seed)));
  }
  return DTSDA_ERR_CONFIG;
}
