#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "dtsda/error.hpp"
#include "dtsda/networks.hpp"
#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"

using namespace dtsda;
using namespace dtsda::nn;
using ad::Shape;
using dtsda::testing::random_tensor;

namespace {

// Mean negative log-likelihood evaluated in long double.
double ce_oracle(const Tensor& logits, std::span<const int> labels) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    const auto row = logits.row(i);
    long double m = row[0];
    for (double v : row) m = std::max<long double>(m, v);
    long double s = 0.0L;
    for (double v : row) s += std::exp(static_cast<long double>(v) - m);
    total += m + std::log(s) - row[static_cast<std::size_t>(labels[i])];
  }
  return static_cast<double>(total / static_cast<long double>(logits.dim(0)));
}

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int bound) {
  std::vector<int> out(n);
  for (auto& y : out) y = static_cast<int>(rng() % static_cast<std::uint64_t>(bound));
  return out;
}

std::vector<int> mixed_domains(std::size_t n) {
  std::vector<int> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = static_cast<int>(i % 2);
  return d;
}

void zero(Linear& l) {
  std::fill(l.weight.value.data.begin(), l.weight.value.data.end(), 0.0);
  std::fill(l.bias.value.data.begin(), l.bias.value.data.end(), 0.0);
}

}  // namespace

TEST_CASE("width contracts") {
  const ModelConfig cfg{ModelKind::Dtsda, 4, 3, 6, 24, 1};
  DtsdaModel m(cfg);
  CHECK(m.extractor().feature_dim() == 64 * 6);
  CHECK(m.fine.class_state.out_features() == 3 * 2 * 4);
  CHECK(m.fine.domain.out_features() == 2);
  CHECK(m.temporal.state.out_features() == 3);
  CHECK(m.temporal.class_disc.out.out_features() == 8);
  CHECK(m.temporal.domain_disc.out.out_features() == 2);
  CHECK(m.cross.state.out_features() == 3);
  CHECK(m.cross.source_class.out_features() == 4);
  CHECK(m.cross.domain_disc.out.out_features() == 2);
  BaselineModel b({ModelKind::Dann, 4, 1, 6, 24, 1});
  CHECK(b.classifier.out_features() == 4);
}

TEST_CASE("extractor shape contract") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(FeatureExtractor(6, 90, rng), ConfigError);
  FeatureExtractor e(6, 92, rng);
  CHECK(e.feature_dim() == 64 * 23);
  ad::Graph g;
  CHECK(e(g, g.constant(Tensor(Shape{2, 6, 92}, 0.5)), Mode::Train).shape() == Shape{2, 64 * 23});
  CHECK_THROWS_AS(e(g, g.constant(Tensor(Shape{2, 5, 92}, 0.5)), Mode::Train), ShapeError);
}

TEST_CASE("zero input gives zero features") {
  std::mt19937_64 rng(2);
  FeatureExtractor e(3, 8, rng);
  ad::Graph g;
  const auto out = e(g, g.constant(Tensor(Shape{4, 3, 8}, 0.0)), Mode::Train);
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("identical windows give identical eval features") {
  std::mt19937_64 rng(3);
  FeatureExtractor e(3, 8, rng);
  const Tensor one = random_tensor({1, 3, 8}, rng);
  Tensor batch(Shape{3, 3, 8});
  for (std::size_t b = 0; b < 3; ++b) std::copy(one.data.begin(), one.data.end(), batch.data.begin() + b * 24);
  ad::Graph g;
  const auto& f = e(g, g.constant(batch), Mode::Eval).tensor();
  for (std::size_t b = 1; b < 3; ++b)
    for (std::size_t k = 0; k < f.dim(1); ++k) CHECK(f.at(b, k) == f.at(0, k));
}

TEST_CASE("fine-grained loss: uniform, perfect and CE oracle") {
  std::mt19937_64 rng(4);
  FineGrainedHead head(8, 3, 2, rng);
  const Tensor feats = random_tensor({6, 8}, rng);
  const auto yhat = random_labels(rng, 6, 12);
  const auto d = mixed_domains(6);

  {
    ad::Graph g;
    const auto z = head.bottleneck(g, g.constant(feats), Mode::Train);
    const double expected = ce_oracle(head.class_state(g, z).tensor(), yhat) + ce_oracle(head.domain(g, z).tensor(), d);
    ad::Graph g2;
    const auto loss = fine_grained_loss(g2, head, g2.constant(feats), yhat, d);
    CHECK(loss.total.data()[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(loss.terms.size() == 2);
  }

  zero(head.class_state);
  zero(head.domain);
  {
    ad::Graph g;
    CHECK(fine_grained_loss(g, head, g.constant(feats), yhat, d).total.data()[0] ==
          doctest::Approx(std::log(12.0) + std::log(2.0)).epsilon(1e-12));
  }

  head.class_state.bias.value.data[5] = 60.0;
  head.domain.bias.value.data[1] = 60.0;
  {
    ad::Graph g;
    const std::vector<int> y(6, 5), dom(6, 1);
    CHECK(fine_grained_loss(g, head, g.constant(feats), y, dom).total.data()[0] < 1e-20);
  }
  ad::Graph g;
  CHECK_THROWS_AS(fine_grained_loss(g, head, g.constant(feats), std::vector<int>(6, 12), d), DataError);
}

TEST_CASE("temporal loss: lambda affects only gradients") {
  std::mt19937_64 rng(5);
  TemporalStateHead head(8, 2, 3, rng);
  const Tensor feats = random_tensor({6, 8}, rng);
  const auto ts = random_labels(rng, 6, 3), c = random_labels(rng, 6, 4);
  const auto d = mixed_domains(6);
  double value0 = 0;
  {
    ad::Graph g;
    value0 = temporal_component_loss(g, head, g.constant(feats), ts, c, d, 0.0).total.data()[0];
  }
  ad::Graph g;
  const auto loss = temporal_component_loss(g, head, g.constant(feats), ts, c, d, 0.8);
  CHECK(loss.total.data()[0] == value0);

  ad::Graph g3;
  const auto z = head.bottleneck(g3, g3.constant(feats), Mode::Train);
  const double expected = ce_oracle(head.state(g3, z).tensor(), ts) +
                          ce_oracle(head.class_disc(g3, z, Mode::Train).tensor(), c) +
                          ce_oracle(head.domain_disc(g3, z, Mode::Train).tensor(), d);
  CHECK(value0 == doctest::Approx(expected).epsilon(1e-12));

  ad::Graph g4;
  CHECK_THROWS_AS(temporal_component_loss(g4, head, g4.constant(feats), std::vector<int>(6, 3), c, d, 0.5), DataError);
}

TEST_CASE("temporal loss at lambda 0 sends no adversarial gradient to the bottleneck") {
  std::mt19937_64 rng(6);
  TemporalStateHead head(8, 2, 3, rng);
  const Tensor feats = random_tensor({6, 8}, rng);
  const auto ts = random_labels(rng, 6, 3), c = random_labels(rng, 6, 4);
  const auto d = mixed_domains(6);
  std::vector<Parameter*> bt;
  head.bottleneck.collect(bt);

  for (auto* p : bt) p->zero_grad();
  {
    ad::Graph g;
    g.backward(temporal_component_loss(g, head, g.constant(feats), ts, c, d, 0.0).total);
  }
  std::vector<Tensor> full;
  for (auto* p : bt) full.push_back(p->grad);

  for (auto* p : bt) p->zero_grad();
  {
    ad::Graph g;
    const auto z = head.bottleneck(g, g.constant(feats), Mode::Train);
    g.backward(ad::softmax_cross_entropy(head.state(g, z), ts));
  }
  for (std::size_t k = 0; k < bt.size(); ++k)
    for (std::size_t i = 0; i < full[k].size(); ++i) CHECK(full[k].data[i] == doctest::Approx(bt[k]->grad.data[i]).epsilon(1e-12));
}

TEST_CASE("cross-user loss: three-term oracle and all-target batches") {
  std::mt19937_64 rng(7);
  CrossUserHead head(8, 3, 2, rng);
  const Tensor feats = random_tensor({6, 8}, rng);
  const auto ts = random_labels(rng, 6, 2), c = random_labels(rng, 6, 3);
  const auto d = mixed_domains(6);
  {
    ad::Graph g;
    const auto z = head.bottleneck(g, g.constant(feats), Mode::Train);
    const std::vector<std::size_t> src{0, 2, 4};
    const std::vector<int> src_c{c[0], c[2], c[4]};
    const double expected = ce_oracle(head.state(g, z).tensor(), ts) +
                            ce_oracle(head.source_class(g, ad::select_rows(z, src)).tensor(), src_c) +
                            ce_oracle(head.domain_disc(g, z, Mode::Train).tensor(), d);
    ad::Graph g2;
    CHECK(cross_user_loss(g2, head, g2.constant(feats), ts, c, d, 0.3).total.data()[0] ==
          doctest::Approx(expected).epsilon(1e-12));
  }

  const std::vector<int> target(6, 1);
  std::vector<Parameter*> all;
  head.collect(all);
  for (auto* p : all) p->zero_grad();
  ad::Graph g;
  const auto loss = cross_user_loss(g, head, g.constant(feats), ts, c, target, 0.3);
  CHECK(loss.terms[1] == 0.0);
  CHECK(loss.total.data()[0] == doctest::Approx(loss.terms[0] + loss.terms[2]).epsilon(1e-12));
  g.backward(loss.total);
  CHECK(head.source_class.weight.has_grad);
  for (double v : head.source_class.weight.grad.data) CHECK(v == 0.0);
  for (double v : head.source_class.bias.grad.data) CHECK(v == 0.0);
}

TEST_CASE("composite losses match finite differences") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 6, dim = 5;
    Parameter feats("features", random_tensor({n, dim}, rng));
    const auto d = mixed_domains(n);
    const auto ts = random_labels(rng, n, 2), c = random_labels(rng, n, 4), yhat = random_labels(rng, n, 8);
    const auto c_src = random_labels(rng, n, 2);

    FineGrainedHead fine(dim, 2, 2, rng);
    std::vector<Parameter*> pf{&feats};
    fine.collect(pf);
    CHECK(testing::max_relative_error(pf, [&](ad::Graph& g) {
            return fine_grained_loss(g, fine, g.param(feats), yhat, d).total;
          }, 1e-6, 24) < 1e-4);

    // Reversal scales the adversarial terms' gradient by -lambda, so the
    // analytic gradient is that of L_tt - lambda (L_ct + L_dt).
    TemporalStateHead temporal(dim, 2, 2, rng);
    std::vector<Parameter*> pt{&feats};
    temporal.bottleneck.collect(pt);
    temporal.state.collect(pt);
    const double lam = 0.6;
    CHECK(testing::max_relative_error(
              pt,
              [&](ad::Graph& g) { return temporal_component_loss(g, temporal, g.param(feats), ts, c, d, lam).total; },
              1e-6, 24,
              [&](ad::Graph& g) {
                const auto z = temporal.bottleneck(g, g.param(feats), Mode::Train);
                const auto adv = ad::add(ad::softmax_cross_entropy(temporal.class_disc(g, z, Mode::Train), c),
                                         ad::softmax_cross_entropy(temporal.domain_disc(g, z, Mode::Train), d));
                return ad::add(ad::softmax_cross_entropy(temporal.state(g, z), ts), ad::scale(adv, -lam));
              }) < 1e-4);
    std::vector<Parameter*> discs;
    temporal.class_disc.collect(discs);
    temporal.domain_disc.collect(discs);
    CHECK(testing::max_relative_error(discs, [&](ad::Graph& g) {
            return temporal_component_loss(g, temporal, g.param(feats), ts, c, d, 0.7).total;
          }, 1e-6, 24) < 1e-4);

    CrossUserHead cross(dim, 2, 2, rng);
    std::vector<Parameter*> pc{&feats};
    cross.bottleneck.collect(pc);
    cross.state.collect(pc);
    cross.source_class.collect(pc);
    std::vector<Parameter*> pd;
    cross.domain_disc.collect(pd);
    CHECK(testing::max_relative_error(pd, [&](ad::Graph& g) {
            return cross_user_loss(g, cross, g.param(feats), ts, c_src, d, lam).total;
          }, 1e-6, 24) < 1e-4);
    CHECK(testing::max_relative_error(
              pc,
              [&](ad::Graph& g) { return cross_user_loss(g, cross, g.param(feats), ts, c_src, d, lam).total; },
              1e-6, 24,
              [&](ad::Graph& g) {
                const auto z = cross.bottleneck(g, g.param(feats), Mode::Train);
                const std::vector<std::size_t> src{0, 2, 4};
                const std::vector<int> src_c{c_src[0], c_src[2], c_src[4]};
                const auto l_c = ad::softmax_cross_entropy(cross.source_class(g, ad::select_rows(z, src)), src_c);
                const auto adv = ad::softmax_cross_entropy(cross.domain_disc(g, z, Mode::Train), d);
                return ad::add(ad::add(ad::softmax_cross_entropy(cross.state(g, z), ts), l_c), ad::scale(adv, -lam));
              }) < 1e-4);
  }
}

TEST_CASE("prediction: forced logits, determinism and untrained guard") {
  BaselineModel m({ModelKind::SourceOnly, 4, 1, 3, 8, 2});
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor({5, 3, 8}, rng);
  CHECK_THROWS_AS(m.predict(x), ConfigError);
  m.trained = true;
  const auto a = m.predict(x);
  CHECK(a == m.predict(x));
  zero(m.classifier);
  m.classifier.bias.value.data[2] = 1.0;
  CHECK(m.predict(x) == std::vector<int>(5, 2));
  zero(m.classifier);
  CHECK(m.predict(x) == std::vector<int>(5, 0));
}

TEST_CASE("model files round trip bitwise") {
  testing::TempDir tmp;
  std::mt19937_64 rng(10);
  DtsdaModel m({ModelKind::Dtsda, 3, 2, 4, 8, 11});
  m.trained = true;
  m.norm = {{0.5, 1, 2, 3}, {1, 2, 3, 4}};
  for (auto* p : m.parameters())
    for (double& v : p->value.data) v += 0.01 * std::normal_distribution<double>()(rng);
  m.cross.bottleneck.bn.stats.running_mean.data[3] = 0.25;
  const Tensor x = random_tensor({7, 4, 8}, rng);
  ad::Graph g;
  const Tensor before = m.class_logits(g, m.extractor()(g, g.constant(x), Mode::Eval), Mode::Eval).tensor();
  save_model(m, tmp / "m.bin");

  auto loaded = load_model(tmp / "m.bin");
  CHECK(loaded->config().kind == ModelKind::Dtsda);
  CHECK(loaded->config().states == 2);
  CHECK(loaded->norm.stddev == m.norm.stddev);
  CHECK(loaded->trained);
  ad::Graph g2;
  const Tensor after = loaded->class_logits(g2, loaded->extractor()(g2, g2.constant(x), Mode::Eval), Mode::Eval).tensor();
  CHECK(after.data == before.data);
  CHECK(loaded->predict(x) == m.predict(x));
  CHECK(architecture_hash(*loaded) == architecture_hash(m));
}

TEST_CASE("model files reject mismatches and corruption") {
  testing::TempDir tmp;
  DtsdaModel m({ModelKind::Dtsda, 3, 2, 4, 8, 1});
  save_model(m, tmp / "m.bin");

  DtsdaModel wider({ModelKind::Dtsda, 3, 3, 4, 8, 1});
  try {
    load_model_into(wider, tmp / "m.bin");
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("cf.A.weight") != std::string::npos);
  }
  BaselineModel other({ModelKind::Dann, 3, 1, 4, 8, 1});
  CHECK_THROWS_AS(load_model_into(other, tmp / "m.bin"), DataError);

  const auto bytes = testing::slurp(tmp / "m.bin");
  std::ofstream(tmp / "cut.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  try {
    load_model(tmp / "cut.bin");
    FAIL("expected a checksum error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
  }
  CHECK_THROWS_AS(load_model(tmp / "missing.bin"), DataError);
}
