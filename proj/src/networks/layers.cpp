#include <cmath>

#include "dtsda/error.hpp"
#include "dtsda/networks.hpp"

namespace dtsda::nn {

using ad::Shape;

namespace {

// He-uniform weights, zero bias.
Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = u(rng);
  return t;
}

}  // namespace

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(name + ".weight", he_uniform({out, in}, in, rng)), bias(name + ".bias", Tensor(Shape{out}, 0.0)) {}

Value Linear::operator()(Graph& g, const Value& x) { return ad::linear(x, g.param(weight), g.param(bias)); }

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

void Linear::visit(const StateVisitor& v) {
  v(weight.name, weight.value);
  v(bias.name, bias.value);
}

Conv1d::Conv1d(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t pad,
               std::mt19937_64& rng)
    : weight(name + ".weight", he_uniform({out, in, kernel}, in * kernel, rng)),
      bias(name + ".bias", Tensor(Shape{out}, 0.0)),
      padding(pad) {}

Value Conv1d::operator()(Graph& g, const Value& x) {
  return ad::conv1d(x, g.param(weight), g.param(bias), 1, padding);
}

void Conv1d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

void Conv1d::visit(const StateVisitor& v) {
  v(weight.name, weight.value);
  v(bias.name, bias.value);
}

BatchNorm::BatchNorm(const std::string& n, std::size_t channels)
    : gamma(n + ".gamma", Tensor(Shape{channels}, 1.0)),
      beta(n + ".beta", Tensor(Shape{channels}, 0.0)),
      stats(channels),
      name(n) {}

Value BatchNorm::operator()(Graph& g, const Value& x, Mode mode) {
  return ad::batchnorm(x, g.param(gamma), g.param(beta), stats, mode);
}

void BatchNorm::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

void BatchNorm::visit(const StateVisitor& v) {
  v(gamma.name, gamma.value);
  v(beta.name, beta.value);
  v(name + ".running_mean", stats.running_mean);
  v(name + ".running_var", stats.running_var);
}

FeatureExtractor::FeatureExtractor(std::size_t ch, std::size_t len, std::mt19937_64& rng)
    : conv1("hf.conv1", ch, kConv1Channels, kKernel, kKernel / 2, rng),
      bn1("hf.bn1", kConv1Channels),
      conv2("hf.conv2", kConv1Channels, kConv2Channels, kKernel, kKernel / 2, rng),
      bn2("hf.bn2", kConv2Channels),
      channels(ch),
      window_len(len) {
  if (ch == 0) throw ConfigError("feature extractor: no input channels");
  if (len == 0 || len % 4 != 0) {
    throw ConfigError("feature extractor: window length " + std::to_string(len) + " is not a positive multiple of 4");
  }
}

Value FeatureExtractor::operator()(Graph& g, const Value& x, Mode mode) {
  const auto& s = x.shape();
  if (s.size() != 3 || s[1] != channels || s[2] != window_len) {
    throw ShapeError("feature extractor expects [batch × " + std::to_string(channels) + " × " +
                     std::to_string(window_len) + "], got " + ad::shape_str(s));
  }
  Value h = ad::maxpool1d(ad::relu(bn1(g, conv1(g, x), mode)), 2, 2);
  h = ad::maxpool1d(ad::relu(bn2(g, conv2(g, h), mode)), 2, 2);
  return ad::flatten(h);
}

void FeatureExtractor::collect(std::vector<Parameter*>& out) {
  conv1.collect(out);
  bn1.collect(out);
  conv2.collect(out);
  bn2.collect(out);
}

void FeatureExtractor::visit(const StateVisitor& v) {
  conv1.visit(v);
  bn1.visit(v);
  conv2.visit(v);
  bn2.visit(v);
}

Bottleneck::Bottleneck(const std::string& name, std::size_t in, std::mt19937_64& rng)
    : fc(name + ".fc", in, kBottleneckDim, rng), bn(name + ".bn", kBottleneckDim) {}

Value Bottleneck::operator()(Graph& g, const Value& x, Mode mode) { return bn(g, fc(g, x), mode); }

void Bottleneck::collect(std::vector<Parameter*>& out) {
  fc.collect(out);
  bn.collect(out);
}

void Bottleneck::visit(const StateVisitor& v) {
  fc.visit(v);
  bn.visit(v);
}

Discriminator::Discriminator(const std::string& name, std::size_t in, std::size_t outputs, std::mt19937_64& rng)
    : fc1(name + ".fc1", in, kHiddenDim, rng),
      bn1(name + ".bn1", kHiddenDim),
      fc2(name + ".fc2", kHiddenDim, kHiddenDim, rng),
      bn2(name + ".bn2", kHiddenDim),
      out(name + ".out", kHiddenDim, outputs, rng) {}

Value Discriminator::operator()(Graph& g, const Value& x, Mode mode) {
  Value h = ad::relu(bn1(g, fc1(g, x), mode));
  h = ad::relu(bn2(g, fc2(g, h), mode));
  return out(g, h);
}

void Discriminator::collect(std::vector<Parameter*>& o) {
  fc1.collect(o);
  bn1.collect(o);
  fc2.collect(o);
  bn2.collect(o);
  out.collect(o);
}

void Discriminator::visit(const StateVisitor& v) {
  fc1.visit(v);
  bn1.visit(v);
  fc2.visit(v);
  bn2.visit(v);
  out.visit(v);
}

}  // namespace dtsda::nn
