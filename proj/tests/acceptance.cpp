// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.
//
//   dtsda_acceptance [--only 1,2,...] [--cli path/to/dtsda] [--seeds N]

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dtsda/error.hpp"
#include "dtsda/eval.hpp"
#include "dtsda/io.hpp"
#include "dtsda/labeling.hpp"
#include "dtsda/training.hpp"
#include "support/gradcheck.hpp"

using namespace dtsda;
using ad::Parameter;
using ad::Shape;
using ad::Tensor;
using dtsda::testing::max_relative_error;
using dtsda::testing::random_tensor;
using dtsda::testing::weighted_sum;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1: DP against exhaustive enumeration ----------------------------------

double brute_force_min(const tsl::DistanceMatrix& d, const tsl::PenaltyMatrix& p) {
  const std::size_t t = d.states(), n = d.samples();
  std::vector<int> path(n, 0);
  double best = INFINITY;
  while (true) {
    best = std::min(best, tsl::path_cost(d, p, path));
    std::size_t i = 0;
    while (i < n && ++path[i] == static_cast<int>(t)) path[i++] = 0;
    if (i == n) break;
  }
  return best;
}

Outcome dp_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double gammas[] = {0.0, 0.1, 0.5, 2.0};
  std::size_t bad = 0, instances = 0;
  for (int k = 0; k < 1200; ++k, ++instances) {
    const std::size_t t = 1 + rng() % 4, n = 1 + rng() % 8;
    tsl::DistanceMatrix d{Tensor(Shape{t, n})};
    for (double& v : d.values.data) v = u(rng);
    const auto p = tsl::build_penalty_matrix(t, gammas[k % 4]);
    const auto sp = tsl::min_cost_state_path(d, p);
    const double oracle = brute_force_min(d, p);
    if (sp.total_cost != oracle || tsl::path_cost(d, p, sp.path) != oracle) ++bad;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 10.0, std::to_string(instances) + " instances, " + std::to_string(bad) +
                                       " mismatches, " + fmt("%.2f s", secs)};
}

// ---- 2: gradients -----------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  constexpr int cases = 20;
  std::mt19937_64 rng(2002);
  std::vector<std::pair<std::string, double>> worst;
  auto record = [&](const std::string& name, double err) {
    auto it = std::find_if(worst.begin(), worst.end(), [&](auto& w) { return w.first == name; });
    if (it == worst.end()) worst.emplace_back(name, err);
    else it->second = std::max(it->second, err);
  };
  auto labels = [&](std::size_t n, int k) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
    return y;
  };

  for (int c = 0; c < cases; ++c) {
    const std::size_t b = 2 + rng() % 3, in = 2 + rng() % 4, out = 2 + rng() % 3, len = 6 + rng() % 5;
    {
      Parameter x("x", random_tensor({b, in}, rng)), w("w", random_tensor({out, in}, rng)), bias("b", random_tensor({out}, rng));
      const auto wt = random_tensor({b, out}, rng);
      record("linear", max_relative_error({&x, &w, &bias}, [&](ad::Graph& g) {
               return weighted_sum(ad::linear(g.param(x), g.param(w), g.param(bias)), wt);
             }));
    }
    {
      const std::size_t k = 1 + 2 * (rng() % 3), pad = rng() % 3, stride = 1 + rng() % 2;
      Parameter x("x", random_tensor({b, in, len}, rng)), w("w", random_tensor({out, in, k}, rng)),
          bias("b", random_tensor({out}, rng));
      const std::size_t lout = (len + 2 * pad - k) / stride + 1;
      const auto wt = random_tensor({b, out, lout}, rng);
      record("conv1d", max_relative_error({&x, &w, &bias}, [&](ad::Graph& g) {
               return weighted_sum(ad::conv1d(g.param(x), g.param(w), g.param(bias), stride, pad), wt);
             }));
    }
    {
      const bool three_d = c % 2 == 0;
      const Shape shape = three_d ? Shape{b + 1, in, 4} : Shape{b + 2, in};
      Parameter x("x", random_tensor(shape, rng)), gamma("g", random_tensor({in}, rng, 0.5, 1.5)),
          beta("be", random_tensor({in}, rng));
      const auto wt = random_tensor(shape, rng);
      ad::BatchNormStats stats(in);
      record("batchnorm", max_relative_error({&x, &gamma, &beta}, [&](ad::Graph& g) {
               return weighted_sum(ad::batchnorm(g.param(x), g.param(gamma), g.param(beta), stats, ad::Mode::Train), wt);
             }));
    }
    {
      // Keep inputs away from the kink.
      Tensor xt = random_tensor({b, in}, rng);
      for (double& v : xt.data) v = (v >= 0 ? 0.1 : -0.1) + v;
      Parameter x("x", xt);
      const auto wt = random_tensor({b, in}, rng);
      record("relu", max_relative_error({&x}, [&](ad::Graph& g) { return weighted_sum(ad::relu(g.param(x)), wt); }));
    }
    {
      // Distinct values so no window has a tie.
      Tensor xt({b, in, 8});
      std::vector<double> vals(xt.size());
      std::iota(vals.begin(), vals.end(), 0.0);
      std::shuffle(vals.begin(), vals.end(), rng);
      for (std::size_t i = 0; i < vals.size(); ++i) xt.data[i] = 0.1 * vals[i];
      Parameter x("x", xt);
      const auto wt = random_tensor({b, in, 4}, rng);
      record("maxpool1d",
             max_relative_error({&x}, [&](ad::Graph& g) { return weighted_sum(ad::maxpool1d(g.param(x), 2, 2), wt); }));
    }
    {
      Parameter z("z", random_tensor({b, out}, rng, -3.0, 3.0));
      const auto y = labels(b, static_cast<int>(out));
      record("softmax_cross_entropy",
             max_relative_error({&z}, [&](ad::Graph& g) { return ad::softmax_cross_entropy(g.param(z), y); }));
    }
    {
      // Reversal is checked against the function it differentiates: -lambda x.
      Parameter x("x", random_tensor({b, in}, rng));
      const double lam = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
      const auto wt = random_tensor({b, in}, rng);
      record("gradient_reversal",
             max_relative_error(
                 {&x}, [&](ad::Graph& g) { return weighted_sum(ad::gradient_reversal(g.param(x), lam), wt); }, 1e-5,
                 SIZE_MAX, [&](ad::Graph& g) { return weighted_sum(ad::scale(g.param(x), -lam), wt); }));
    }
    {
      Parameter x("x", random_tensor({b, in, 3}, rng));
      const auto wt = random_tensor({b, in * 3}, rng);
      record("flatten", max_relative_error({&x}, [&](ad::Graph& g) { return weighted_sum(ad::flatten(g.param(x)), wt); }));
    }
    {
      Parameter x("x", random_tensor({b + 2, in}, rng));
      std::vector<std::size_t> rows{0, b + 1, 1, 0};
      const auto wt = random_tensor({rows.size(), in}, rng);
      record("select_rows", max_relative_error({&x}, [&](ad::Graph& g) {
               return weighted_sum(ad::select_rows(g.param(x), rows), wt);
             }));
    }
    {
      Parameter x("x", random_tensor({b, in}, rng)), y("y", random_tensor({b, in}, rng));
      const auto wt = random_tensor({b, in}, rng);
      const double f = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
      record("add", max_relative_error({&x, &y}, [&](ad::Graph& g) { return weighted_sum(ad::add(g.param(x), g.param(y)), wt); }));
      record("mul", max_relative_error({&x, &y}, [&](ad::Graph& g) { return weighted_sum(ad::mul(g.param(x), g.param(y)), wt); }));
      record("scale", max_relative_error({&x}, [&](ad::Graph& g) { return weighted_sum(ad::scale(g.param(x), f), wt); }));
      record("sum", max_relative_error({&x}, [&](ad::Graph& g) { return ad::sum(ad::scale(g.param(x), f)); }));
    }

    // Composite losses; gradient reversal turns the adversarial terms' sign.
    const std::size_t n = 6, dim = 5;
    Parameter feats("features", random_tensor({n, dim}, rng));
    std::vector<int> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = static_cast<int>(i % 2);
    const auto ts = labels(n, 2), cls = labels(n, 4), yhat = labels(n, 8), c_src = labels(n, 2);
    const double lam = 0.6;

    nn::FineGrainedHead fine(dim, 2, 2, rng);
    std::vector<Parameter*> pf{&feats};
    fine.collect(pf);
    record("fine_grained_loss", max_relative_error(pf, [&](ad::Graph& g) {
             return nn::fine_grained_loss(g, fine, g.param(feats), yhat, d).total;
           }, 1e-6, 24));

    nn::TemporalStateHead temporal(dim, 2, 2, rng);
    std::vector<Parameter*> pt{&feats}, pt_disc;
    temporal.bottleneck.collect(pt);
    temporal.state.collect(pt);
    temporal.class_disc.collect(pt_disc);
    temporal.domain_disc.collect(pt_disc);
    const auto temporal_total = [&](ad::Graph& g) {
      return nn::temporal_component_loss(g, temporal, g.param(feats), ts, cls, d, lam).total;
    };
    const double e_t = max_relative_error(pt, temporal_total, 1e-6, 24, [&](ad::Graph& g) {
      const auto z = temporal.bottleneck(g, g.param(feats), ad::Mode::Train);
      const auto adv = ad::add(ad::softmax_cross_entropy(temporal.class_disc(g, z, ad::Mode::Train), cls),
                               ad::softmax_cross_entropy(temporal.domain_disc(g, z, ad::Mode::Train), d));
      return ad::add(ad::softmax_cross_entropy(temporal.state(g, z), ts), ad::scale(adv, -lam));
    });
    record("temporal_component_loss", std::max(e_t, max_relative_error(pt_disc, temporal_total, 1e-6, 24)));

    nn::CrossUserHead cross(dim, 2, 2, rng);
    std::vector<Parameter*> pc{&feats}, pc_disc;
    cross.bottleneck.collect(pc);
    cross.state.collect(pc);
    cross.source_class.collect(pc);
    cross.domain_disc.collect(pc_disc);
    const auto cross_total = [&](ad::Graph& g) {
      return nn::cross_user_loss(g, cross, g.param(feats), ts, c_src, d, lam).total;
    };
    const double e_c = max_relative_error(pc, cross_total, 1e-6, 24, [&](ad::Graph& g) {
      const auto z = cross.bottleneck(g, g.param(feats), ad::Mode::Train);
      const std::vector<std::size_t> src{0, 2, 4};
      const std::vector<int> src_c{c_src[0], c_src[2], c_src[4]};
      const auto l_c = ad::softmax_cross_entropy(cross.source_class(g, ad::select_rows(z, src)), src_c);
      const auto adv = ad::softmax_cross_entropy(cross.domain_disc(g, z, ad::Mode::Train), d);
      return ad::add(ad::add(ad::softmax_cross_entropy(cross.state(g, z), ts), l_c), ad::scale(adv, -lam));
    });
    record("cross_user_loss", std::max(e_c, max_relative_error(pc_disc, cross_total, 1e-6, 24)));
  }

  double overall = 0.0;
  std::string names;
  for (const auto& [name, err] : worst) {
    overall = std::max(overall, err);
    if (err >= 1e-4) names += " " + name;
  }
  const double secs = seconds_since(t0);
  return {overall < 1e-4 && secs < 60.0,
          std::to_string(worst.size()) + " ops/losses x " + std::to_string(cases) + " cases, max rel err " +
              fmt("%.2e", overall) + (names.empty() ? "" : ", failing:" + names) + ", " + fmt("%.1f s", secs)};
}

// ---- 3: gradient reversal contract -------------------------------------------

data::SynthSpec small_spec(std::uint64_t seed) {
  data::SynthSpec s;
  s.classes = 3;
  s.states = 2;
  s.channels = 3;
  s.segments_per_activity = 2;
  s.windows_per_segment = 20;
  s.seed = seed;
  return s;
}

Outcome reversal_contract() {
  std::mt19937_64 rng(3003);
  std::size_t forward_bad = 0, backward_bad = 0;
  for (int k = 0; k < 50; ++k) {
    const Shape shape{1 + rng() % 4, 1 + rng() % 6};
    Parameter x("x", random_tensor(shape, rng, -5.0, 5.0));
    const auto upstream = random_tensor(shape, rng);
    const double lam = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    ad::Graph g;
    const auto y = ad::gradient_reversal(g.param(x), lam);
    if (y.data() != x.value.data) ++forward_bad;
    x.zero_grad();
    g.backward(weighted_sum(y, upstream));
    for (std::size_t i = 0; i < upstream.size(); ++i)
      if (x.grad.data[i] != -lam * upstream.data[i]) ++backward_bad;
  }

  const auto ds = data::synthesize_dataset(small_spec(31), 0, 1, 3);
  train::TrainConfig cfg;
  cfg.states = 2;
  cfg.epochs = 2;
  cfg.seed = 17;
  const auto so = train::fit_baseline(ds, cfg, nn::ModelKind::SourceOnly);
  cfg.lambda_max = 0.0;
  const auto dann = train::fit_baseline(ds, cfg, nn::ModelKind::Dann);
  std::vector<std::size_t> rows(ds.windows.size());
  std::iota(rows.begin(), rows.end(), 0);
  const auto x = nn::stack_windows(ds, rows);
  const bool same = so.model->predict(x) == dann.model->predict(x);
  return {forward_bad == 0 && backward_bad == 0 && same,
          "forward mismatches " + std::to_string(forward_bad) + ", backward mismatches " + std::to_string(backward_bad) +
              ", DANN(lambda=0) == source-only on " + std::to_string(rows.size()) + " windows: " + (same ? "yes" : "no")};
}

// ---- 4: switch monotonicity ----------------------------------------------------

Outcome monotonicity() {
  std::mt19937_64 rng(4004);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double gammas[] = {0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0};
  std::size_t violations = 0, instances = 0;
  for (int k = 0; k < 600; ++k, ++instances) {
    const std::size_t t = 2 + rng() % 4, n = 5 + rng() % 40;
    tsl::DistanceMatrix d{Tensor(Shape{t, n})};
    for (double& v : d.values.data) v = u(rng);
    std::size_t prev = SIZE_MAX;
    for (double gamma : gammas) {
      const auto sp = tsl::min_cost_state_path(d, tsl::build_penalty_matrix(t, gamma));
      if (sp.switch_count > prev) ++violations;
      prev = sp.switch_count;
    }
  }
  return {violations == 0, std::to_string(instances) + " instances x 8 gammas, " + std::to_string(violations) +
                               " increases"};
}

// ---- 5: pseudo-label bijection and epoch-0 invariant -------------------------

Outcome bijection() {
  std::size_t bad = 0, checked = 0;
  for (int t = 1; t <= 5; ++t)
    for (int c = 1; c <= 10; ++c) {
      std::set<int> seen;
      for (int ts = 0; ts < t; ++ts)
        for (int cl = 0; cl < 2 * c; ++cl, ++checked) {
          const int y = data::compose_pseudo_label(ts, cl, c, t);
          if (data::decompose_pseudo_label(y, c) != std::pair{ts, cl} || y < 0 || y >= t * 2 * c) ++bad;
          seen.insert(y);
        }
      if (seen.size() != static_cast<std::size_t>(t * 2 * c)) ++bad;
    }

  std::size_t epoch0_bad = 0, windows = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto ds = data::synthesize_dataset(small_spec(seed), 0, 1, seed);
    ds.num_states = 2;
    for (auto& w : ds.windows) w.ts = 1;  // must be reset by the trainer
    train::TrainConfig cfg;
    cfg.states = 4;
    train::DtsdaTrainer trainer(ds, cfg);
    const auto yhat = trainer.pseudo_labels();
    for (std::size_t i = 0; i < yhat.size(); ++i, ++windows)
      if (yhat[i] != trainer.dataset().windows[i].class_label) ++epoch0_bad;
  }
  return {bad == 0 && epoch0_bad == 0, std::to_string(checked) + " labels round-tripped, " + std::to_string(bad) +
                                           " failures; epoch-0 y_hat != c on " + std::to_string(epoch0_bad) + " of " +
                                           std::to_string(windows) + " windows"};
}

// ---- 6: synthetic state recovery ------------------------------------------------

Tensor mean_features(const data::WindowedDataset& ds, std::span<const std::size_t> rows) {
  Tensor f(Shape{rows.size(), ds.channels});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& w = ds.windows[rows[k]].data;
    for (std::size_t c = 0; c < ds.channels; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < ds.window_len; ++i) s += w[c * ds.window_len + i];
      f.at(k, c) = s / static_cast<double>(ds.window_len);
    }
  }
  return f;
}

Outcome state_recovery() {
  std::vector<double> agreements;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    data::SynthSpec spec;
    spec.classes = 4;
    spec.states = 3;
    spec.segments_per_activity = 2;
    spec.windows_per_segment = 60;
    spec.state_separation = 2.0;
    spec.emission_noise = 0.1;
    spec.user_noise = 0.05;
    spec.oscillation = 0.2;
    spec.dwell_min = 5;
    spec.dwell_max = 12;
    spec.seed = 600 + seed;
    auto ds = data::synthesize_dataset(spec, 0, 1, seed);
    // State posteriors from an untrained, seeded linear state classifier.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(ds.channels)));
    Tensor w(Shape{3, ds.channels});
    for (double& v : w.data) v = normal(rng);
    const tsl::RowFn features = [&](std::span<const std::size_t> rows) { return mean_features(ds, rows); };
    const tsl::RowFn probs = [&](std::span<const std::size_t> rows) {
      const auto f = mean_features(ds, rows);
      Tensor logits(Shape{rows.size(), 3}, 0.0);
      for (std::size_t k = 0; k < rows.size(); ++k)
        for (std::size_t t = 0; t < 3; ++t)
          for (std::size_t c = 0; c < ds.channels; ++c) logits.at(k, t) += w.at(t, c) * f.at(k, c);
      return ad::softmax_rows(logits);
    };
    tsl::relabel_dataset(ds, features, probs, 3, 0.2);
    agreements.push_back(tsl::best_permutation_agreement(ds));
  }
  const double mean = std::accumulate(agreements.begin(), agreements.end(), 0.0) / 5.0;
  std::string per;
  for (double a : agreements) per += fmt(" %.3f", a);
  return {mean >= 0.8, "mean best-permutation agreement " + fmt("%.3f", mean) + " (per seed" + per + ")"};
}

// ---- 7: synthetic cross-user adaptation ------------------------------------------

struct AdaptationSetup {
  data::SynthSpec spec;
  train::TrainConfig train;
};

AdaptationSetup adaptation_setup(std::uint64_t seed) {
  AdaptationSetup s;
  s.spec.classes = 4;
  s.spec.states = 3;
  s.spec.users = 2;
  s.spec.segments_per_activity = 5;
  s.spec.windows_per_segment = 100;  // 2000 windows per user
  s.spec.mixing = 0.3;
  s.spec.bias_scale = 0.8;
  s.spec.scale_jitter = 0.2;
  s.spec.seed = seed;
  s.train.states = 3;
  s.train.epochs = 10;
  s.train.seed = seed;
  return s;
}

Outcome adaptation(int seeds) {
  const auto t0 = Clock::now();
  double sum[3] = {0, 0, 0};
  std::string per;
  const nn::ModelKind kinds[] = {nn::ModelKind::Dtsda, nn::ModelKind::Dann, nn::ModelKind::SourceOnly};
  for (int s = 1; s <= seeds; ++s) {
    const auto setup = adaptation_setup(static_cast<std::uint64_t>(s));
    const auto ds = data::synthesize_dataset(setup.spec, 0, 1, static_cast<std::uint64_t>(s));
    per += " [seed " + std::to_string(s);
    for (int k = 0; k < 3; ++k) {
      auto fitted = train::fit(ds, setup.train, kinds[k]);
      const double acc = eval::evaluate_target(*fitted.model, ds).accuracy;
      sum[k] += acc;
      per += std::string(" ") + nn::kind_name(kinds[k]) + fmt(" %.3f", acc);
    }
    per += "]";
    std::fflush(stdout);
  }
  const double dtsda = sum[0] / seeds, dann = sum[1] / seeds, so = sum[2] / seeds;
  const double secs = seconds_since(t0);
  return {dtsda - so >= 0.10 && dtsda >= dann && secs < 900.0,
          "mean target accuracy dtsda " + fmt("%.3f", dtsda) + ", dann " + fmt("%.3f", dann) + ", source_only " +
              fmt("%.3f", so) + fmt(", margin over source_only %+.1f pp", 100.0 * (dtsda - so)) + ", " +
              fmt("%.0f s;", secs) + per};
}

// ---- 8: determinism of `dtsda run` ------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism(const std::string& cli) {
  if (cli.empty() || !fs::exists(cli)) return {false, "CLI binary not found: '" + cli + "'"};
  const std::string exe = fs::absolute(cli).string();
  const fs::path dir = fs::temp_directory_path() / ("dtsda_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  io::write_text_file(dir / "spec.csv",
                      "key,value\nclasses,3\nstates,2\nchannels,3\nusers,3\nsegments_per_activity,2\n"
                      "windows_per_segment,20\nseed,8\n");
  io::write_text_file(dir / "exp.cfg", "data=data\nmethods=dtsda,dann,source_only\nstates=2\nepochs=2\nseed=42\n");
  const std::string q = "'" + exe + "'";
  const std::string base = "cd '" + dir.string() + "' && ";
  int rc = std::system((base + q + " synth --spec spec.csv --out data >/dev/null").c_str());
  rc |= std::system((base + q + " run --quiet --config exp.cfg --out run1").c_str());
  rc |= std::system((base + q + " run --quiet --config exp.cfg --out run2").c_str());
  const auto a = slurp(dir / "run1" / "results.csv"), b = slurp(dir / "run2" / "results.csv");
  const auto rows = std::count(a.begin(), a.end(), '\n');
  fs::remove_all(dir);
  const bool ok = rc == 0 && !a.empty() && a == b;
  return {ok, "exit status " + std::to_string(rc) + ", results.csv " + std::to_string(rows) + " lines, " +
                  (ok ? "byte-identical" : "not identical")};
}

// ---- 9: windowing geometry ------------------------------------------------------

Outcome windowing() {
  const auto geo = data::window_geometry(30.0, 3.0, 0.5);
  data::SensorRecording rec;
  rec.user_id = "u";
  rec.sampling_rate = 30.0;
  const std::size_t n = 30 * 60;
  rec.channels.assign(1, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    rec.timestamps.push_back(static_cast<double>(i) / 30.0);
    rec.channels[0][i] = static_cast<double>(i);
  }
  rec.labels.assign(n, 0);
  const auto windows = data::segment_windows(rec, 3.0, 0.5);
  bool starts_ok = !windows.empty();
  for (std::size_t k = 0; k < windows.size(); ++k)
    starts_ok = starts_ok && windows[k].data.size() == 90 && windows[k].data[0] == static_cast<double>(45 * k);
  const std::size_t expected = (n - 90) / 45 + 1;
  return {geo.window_len == 90 && geo.stride == 45 && windows.size() == expected && starts_ok,
          "window_len " + std::to_string(geo.window_len) + ", stride " + std::to_string(geo.stride) + ", " +
              std::to_string(windows.size()) + " windows from 60 s (expected " + std::to_string(expected) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  std::string cli;
  int seeds = 5;
  app.add_option("--only", only, "Criteria to run (default all)")->delimiter(',')->check(CLI::Range(1, 9));
  app.add_option("--cli", cli, "Path to the dtsda command-line binary");
  app.add_option("--seeds", seeds, "Seeds for criterion 7")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"DP oracle equivalence", dp_oracle},
      {"gradient correctness", gradients},
      {"gradient reversal contract", reversal_contract},
      {"switch monotonicity", monotonicity},
      {"pseudo-label bijection", bijection},
      {"synthetic state recovery", state_recovery},
      {"synthetic cross-user adaptation", [&] { return adaptation(seeds); }},
      {"determinism of dtsda run", [&] { return determinism(cli); }},
      {"windowing contract", windowing},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
