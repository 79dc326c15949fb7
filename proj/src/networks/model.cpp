#include <algorithm>

#include "dtsda/error.hpp"
#include "dtsda/io.hpp"
#include "dtsda/networks.hpp"

namespace dtsda::nn {

using ad::Shape;

namespace {

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t bound, const char* what) {
  if (labels.size() != rows) throw ShapeError(std::string(what) + ": one label per row required");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= bound) {
      throw DataError(std::string(what) + ": label " + std::to_string(y) + " outside [0, " + std::to_string(bound) + ")");
    }
  }
}

}  // namespace

FineGrainedHead::FineGrainedHead(std::size_t feature_dim, std::size_t classes, std::size_t states,
                                 std::mt19937_64& rng)
    : bottleneck("bf", feature_dim, rng),
      class_state("cf.A", kBottleneckDim, states * 2 * classes, rng),
      domain("cf.B", kBottleneckDim, 2, rng) {}

void FineGrainedHead::collect(std::vector<Parameter*>& out) {
  bottleneck.collect(out);
  class_state.collect(out);
  domain.collect(out);
}

void FineGrainedHead::visit(const StateVisitor& v) {
  bottleneck.visit(v);
  class_state.visit(v);
  domain.visit(v);
}

TemporalStateHead::TemporalStateHead(std::size_t feature_dim, std::size_t classes, std::size_t states,
                                     std::mt19937_64& rng)
    : bottleneck("bt", feature_dim, rng),
      state("ct.C", kBottleneckDim, states, rng),
      class_disc("ct.D", kBottleneckDim, 2 * classes, rng),
      domain_disc("ct.E", kBottleneckDim, 2, rng) {}

void TemporalStateHead::collect(std::vector<Parameter*>& out) {
  bottleneck.collect(out);
  state.collect(out);
  class_disc.collect(out);
  domain_disc.collect(out);
}

void TemporalStateHead::visit(const StateVisitor& v) {
  bottleneck.visit(v);
  state.visit(v);
  class_disc.visit(v);
  domain_disc.visit(v);
}

CrossUserHead::CrossUserHead(std::size_t feature_dim, std::size_t classes, std::size_t states, std::mt19937_64& rng)
    : bottleneck("bc", feature_dim, rng),
      state("cc.F", kBottleneckDim, states, rng),
      source_class("cc.G", kBottleneckDim, classes, rng),
      domain_disc("cc.H", kBottleneckDim, 2, rng) {}

void CrossUserHead::collect(std::vector<Parameter*>& out) {
  bottleneck.collect(out);
  state.collect(out);
  source_class.collect(out);
  domain_disc.collect(out);
}

void CrossUserHead::visit(const StateVisitor& v) {
  bottleneck.visit(v);
  state.visit(v);
  source_class.visit(v);
  domain_disc.visit(v);
}

LossValue fine_grained_loss(Graph& g, FineGrainedHead& head, const Value& features, std::span<const int> pseudo_labels,
                            std::span<const int> domains, Mode mode) {
  const std::size_t n = features.shape()[0];
  check_labels(pseudo_labels, n, head.class_state.out_features(), "fine_grained_loss");
  check_labels(domains, n, 2, "fine_grained_loss domain");
  const Value z = head.bottleneck(g, features, mode);
  const Value l_pcts = ad::softmax_cross_entropy(head.class_state(g, z), pseudo_labels);
  const Value l_d = ad::softmax_cross_entropy(head.domain(g, z), domains);
  return {ad::add(l_pcts, l_d), {l_pcts.data()[0], l_d.data()[0]}};
}

LossValue temporal_component_loss(Graph& g, TemporalStateHead& head, const Value& features, std::span<const int> states,
                                  std::span<const int> classes, std::span<const int> domains, double lambda,
                                  Mode mode) {
  const std::size_t n = features.shape()[0];
  check_labels(states, n, head.state.out_features(), "temporal_component_loss state");
  check_labels(classes, n, head.class_disc.out.out_features(), "temporal_component_loss class");
  check_labels(domains, n, 2, "temporal_component_loss domain");
  const Value z = head.bottleneck(g, features, mode);
  const Value reversed = ad::gradient_reversal(z, lambda);
  const Value l_t = ad::softmax_cross_entropy(head.state(g, z), states);
  const Value l_c = ad::softmax_cross_entropy(head.class_disc(g, reversed, mode), classes);
  const Value l_d = ad::softmax_cross_entropy(head.domain_disc(g, reversed, mode), domains);
  return {ad::add(ad::add(l_t, l_c), l_d), {l_t.data()[0], l_c.data()[0], l_d.data()[0]}};
}

LossValue cross_user_loss(Graph& g, CrossUserHead& head, const Value& features, std::span<const int> states,
                          std::span<const int> classes, std::span<const int> domains, double lambda, Mode mode) {
  const std::size_t n = features.shape()[0];
  check_labels(states, n, head.state.out_features(), "cross_user_loss state");
  check_labels(domains, n, 2, "cross_user_loss domain");
  if (classes.size() != n) throw ShapeError("cross_user_loss: one class label per row required");
  const Value z = head.bottleneck(g, features, mode);
  const Value l_t = ad::softmax_cross_entropy(head.state(g, z), states);
  const Value l_d = ad::softmax_cross_entropy(head.domain_disc(g, ad::gradient_reversal(z, lambda), mode), domains);

  std::vector<std::size_t> source_rows;
  std::vector<int> source_classes;
  for (std::size_t i = 0; i < n; ++i) {
    if (domains[i] == 0) {
      source_rows.push_back(i);
      source_classes.push_back(classes[i]);
    }
  }
  if (source_rows.empty()) {
    g.param(head.source_class.weight);
    g.param(head.source_class.bias);
    return {ad::add(l_t, l_d), {l_t.data()[0], 0.0, l_d.data()[0]}};
  }
  check_labels(source_classes, source_rows.size(), head.source_class.out_features(), "cross_user_loss class");
  const Value logits = head.source_class(g, ad::select_rows(z, source_rows));
  const Value l_c = ad::softmax_cross_entropy(logits, source_classes);
  return {ad::add(ad::add(l_t, l_c), l_d), {l_t.data()[0], l_c.data()[0], l_d.data()[0]}};
}

const char* kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Dtsda: return "dtsda";
    case ModelKind::Dann: return "dann";
    case ModelKind::SourceOnly: return "source_only";
  }
  return "?";
}

ModelKind parse_kind(const std::string& name) {
  if (name == "dtsda") return ModelKind::Dtsda;
  if (name == "dann") return ModelKind::Dann;
  if (name == "source_only") return ModelKind::SourceOnly;
  throw ConfigError("unknown method '" + name + "' (expected dtsda, dann or source_only)");
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  collect(out);
  return out;
}

std::vector<int> Model::predict(const Tensor& x) {
  if (!trained) throw ConfigError("model parameters are untrained");
  Graph g;
  const Value logits = class_logits(g, extractor()(g, g.constant(x), Mode::Eval), Mode::Eval);
  const Tensor& t = logits.tensor();
  std::vector<int> out(t.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = t.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

Model::Model(ModelConfig config) : config_(config), init_rng_(config.seed) {
  if (config.classes < 1 || config.states < 1) throw ConfigError("model needs at least one class and one state");
  extractor_ = std::make_unique<FeatureExtractor>(config.channels, config.window_len, init_rng_);
}

DtsdaModel::DtsdaModel(ModelConfig c)
    : Model(c),
      fine(extractor_->feature_dim(), c.classes, c.states, init_rng_),
      temporal(extractor_->feature_dim(), c.classes, c.states, init_rng_),
      cross(extractor_->feature_dim(), c.classes, c.states, init_rng_) {}

Value DtsdaModel::class_logits(Graph& g, const Value& features, Mode mode) {
  return cross.source_class(g, cross.bottleneck(g, features, mode));
}

void DtsdaModel::collect(std::vector<Parameter*>& out) {
  extractor_->collect(out);
  fine.collect(out);
  temporal.collect(out);
  cross.collect(out);
}

void DtsdaModel::visit(const StateVisitor& v) {
  extractor_->visit(v);
  fine.visit(v);
  temporal.visit(v);
  cross.visit(v);
}

BaselineModel::BaselineModel(ModelConfig c)
    : Model(c),
      bottleneck("b", extractor_->feature_dim(), init_rng_),
      classifier("cls", kBottleneckDim, c.classes, init_rng_),
      domain_disc("disc", kBottleneckDim, 2, init_rng_) {}

Value BaselineModel::class_logits(Graph& g, const Value& features, Mode mode) {
  return classifier(g, bottleneck(g, features, mode));
}

void BaselineModel::collect(std::vector<Parameter*>& out) {
  extractor_->collect(out);
  bottleneck.collect(out);
  classifier.collect(out);
  domain_disc.collect(out);
}

void BaselineModel::visit(const StateVisitor& v) {
  extractor_->visit(v);
  bottleneck.visit(v);
  classifier.visit(v);
  domain_disc.visit(v);
}

std::unique_ptr<Model> make_model(const ModelConfig& config) {
  if (config.kind == ModelKind::Dtsda) return std::make_unique<DtsdaModel>(config);
  return std::make_unique<BaselineModel>(config);
}

Tensor stack_windows(const data::WindowedDataset& dataset, std::span<const std::size_t> rows) {
  const std::size_t per = dataset.channels * dataset.window_len;
  Tensor out(Shape{rows.size(), dataset.channels, dataset.window_len});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& w = dataset.windows.at(rows[k]).data;
    if (w.size() != per) throw ShapeError("stack_windows: window size mismatch");
    std::copy(w.begin(), w.end(), out.data.begin() + static_cast<std::ptrdiff_t>(k * per));
  }
  return out;
}

}  // namespace dtsda::nn
