#pragma once

// Network pieces: a two-block convolutional feature extractor, 64-d
// bottlenecks, classifiers and adversarial discriminators, the three DTSDA
// loss compositions, baseline (DANN / source-only) networks, and a binary
// model container.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dtsda/autodiff.hpp"
#include "dtsda/data.hpp"

namespace dtsda::nn {

using ad::Graph;
using ad::Mode;
using ad::Parameter;
using ad::Tensor;
using ad::Value;

inline constexpr std::size_t kConv1Channels = 32;
inline constexpr std::size_t kConv2Channels = 64;
inline constexpr std::size_t kKernel = 5;
inline constexpr std::size_t kBottleneckDim = 64;
inline constexpr std::size_t kHiddenDim = 64;

// Visits parameters and running statistics by stable name.
using StateVisitor = std::function<void(const std::string& name, Tensor& tensor)>;

struct Linear {
  Parameter weight;  // [out × in]
  Parameter bias;    // [out]
  Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);
  Value operator()(Graph& g, const Value& x);
  std::size_t out_features() const { return weight.value.dim(0); }
  void collect(std::vector<Parameter*>& out);
  void visit(const StateVisitor& v);
};

struct Conv1d {
  Parameter weight;  // [out × in × k]
  Parameter bias;
  std::size_t padding;
  Conv1d(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t padding,
         std::mt19937_64& rng);
  Value operator()(Graph& g, const Value& x);
  void collect(std::vector<Parameter*>& out);
  void visit(const StateVisitor& v);
};

struct BatchNorm {
  Parameter gamma;
  Parameter beta;
  ad::BatchNormStats stats;
  std::string name;
  BatchNorm(const std::string& name, std::size_t channels);
  Value operator()(Graph& g, const Value& x, Mode mode);
  void collect(std::vector<Parameter*>& out);
  void visit(const StateVisitor& v);
};

/// conv(5, pad 2) -> bn -> relu -> maxpool(2) twice, then flatten.
struct FeatureExtractor {
  Conv1d conv1;
  BatchNorm bn1;
  Conv1d conv2;
  BatchNorm bn2;
  std::size_t channels;
  std::size_t window_len;
  FeatureExtractor(std::size_t channels, std::size_t window_len, std::mt19937_64& rng);
  /// x: [batch × channels × window_len]
  Value operator()(Graph& g, const Value& x, Mode mode);
  std::size_t feature_dim() const { return kConv2Channels * (window_len / 4); }
  void collect(std::vector<Parameter*>& out);
  void visit(const StateVisitor& v);
};

/// linear -> batchnorm
struct Bottleneck {
  Linear fc;
  BatchNorm bn;
  Bottleneck(const std::string& name, std::size_t in, std::mt19937_64& rng);
  Value operator()(Graph& g, const Value& x, Mode mode);
  void collect(std::vector<Parameter*>& out);
  void visit(const StateVisitor& v);
};

/// (linear -> bn -> relu) x2 -> linear
struct Discriminator {
  Linear fc1;
  BatchNorm bn1;
  Linear fc2;
  BatchNorm bn2;
  Linear out;
  Discriminator(const std::string& name, std::size_t in, std::size_t outputs, std::mt19937_64& rng);
  Value operator()(Graph& g, const Value& x, Mode mode);
  void collect(std::vector<Parameter*>& out);
  void visit(const StateVisitor& v);
};

/// Component (1): pseudo class-state classifier A (T·2C) and domain
/// classifier B (2) on bottleneck bf.
struct FineGrainedHead {
  Bottleneck bottleneck;
  Linear class_state;
  Linear domain;
  FineGrainedHead(std::size_t feature_dim, std::size_t classes, std::size_t states, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
  void visit(const StateVisitor& v);
};

/// Component (2): state classifier C (T), adversarial class discriminator D
/// (2C) and domain discriminator E (2) on bottleneck bt.
struct TemporalStateHead {
  Bottleneck bottleneck;
  Linear state;
  Discriminator class_disc;
  Discriminator domain_disc;
  TemporalStateHead(std::size_t feature_dim, std::size_t classes, std::size_t states, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
  void visit(const StateVisitor& v);
};

/// Component (3): state classifier F (T), source-class classifier G (C) and
/// adversarial domain discriminator H (2) on bottleneck bc.
struct CrossUserHead {
  Bottleneck bottleneck;
  Linear state;
  Linear source_class;
  Discriminator domain_disc;
  CrossUserHead(std::size_t feature_dim, std::size_t classes, std::size_t states, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
  void visit(const StateVisitor& v);
};

struct LossValue {
  Value total;
  std::vector<double> terms;
};

/// L_f = CE(A(bf(f)), ŷ) + CE(B(bf(f)), d)
LossValue fine_grained_loss(Graph& g, FineGrainedHead& head, const Value& features, std::span<const int> pseudo_labels,
                            std::span<const int> domains, Mode mode = Mode::Train);

/// L_t = CE(C(bt(f)), ts) + CE(D(R(bt(f))), c) + CE(E(R(bt(f))), d)
LossValue temporal_component_loss(Graph& g, TemporalStateHead& head, const Value& features, std::span<const int> states,
                                  std::span<const int> classes, std::span<const int> domains, double lambda,
                                  Mode mode = Mode::Train);

/// L_c = CE(F(bc(f)), ts) + CE(G(bc(f_source)), c_source) + CE(H(R(bc(f))), d).
/// Without source rows the middle term is omitted and G receives a zero
/// gradient.
LossValue cross_user_loss(Graph& g, CrossUserHead& head, const Value& features, std::span<const int> states,
                          std::span<const int> classes, std::span<const int> domains, double lambda,
                          Mode mode = Mode::Train);

enum class ModelKind : std::uint32_t { Dtsda = 0, Dann = 1, SourceOnly = 2 };
const char* kind_name(ModelKind kind);
ModelKind parse_kind(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::Dtsda;
  std::size_t classes = 0;
  std::size_t states = 1;
  std::size_t channels = 0;
  std::size_t window_len = 0;
  std::uint64_t seed = 0;
};

/// A full network whose target prediction is argmax of a C-way source
/// classifier over the extracted features.
class Model {
 public:
  explicit Model(ModelConfig config);
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  FeatureExtractor& extractor() { return *extractor_; }

  /// Source-class logits [batch × C].
  virtual Value class_logits(Graph& g, const Value& features, Mode mode) = 0;
  virtual void collect(std::vector<Parameter*>& out) = 0;
  virtual void visit(const StateVisitor& v) = 0;

  std::vector<Parameter*> parameters();
  /// Eval-mode argmax of class_logits, ties to the lower class. x: [batch × channels × len].
  std::vector<int> predict(const Tensor& x);

  data::NormStats norm;
  bool trained = false;

 protected:
  ModelConfig config_;
  std::mt19937_64 init_rng_;
  std::unique_ptr<FeatureExtractor> extractor_;
};

class DtsdaModel : public Model {
 public:
  explicit DtsdaModel(ModelConfig config);
  Value class_logits(Graph& g, const Value& features, Mode mode) override;
  void collect(std::vector<Parameter*>& out) override;
  void visit(const StateVisitor& v) override;

  FineGrainedHead fine;
  TemporalStateHead temporal;
  CrossUserHead cross;
};

/// Extractor -> bottleneck -> C-way classifier, plus an adversarial domain
/// discriminator on the bottleneck.
class BaselineModel : public Model {
 public:
  explicit BaselineModel(ModelConfig config);
  Value class_logits(Graph& g, const Value& features, Mode mode) override;
  void collect(std::vector<Parameter*>& out) override;
  void visit(const StateVisitor& v) override;

  Bottleneck bottleneck;
  Linear classifier;
  Discriminator domain_disc;
};

std::unique_ptr<Model> make_model(const ModelConfig& config);

/// [batch × channels × len] batch of the given dataset windows.
Tensor stack_windows(const data::WindowedDataset& dataset, std::span<const std::size_t> rows);

/// Hash of every state tensor's name and shape.
std::uint64_t architecture_hash(Model& model);

void save_model(Model& model, const std::filesystem::path& path);
/// Loads parameters into an existing model; names and shapes must match.
void load_model_into(Model& model, const std::filesystem::path& path);
std::unique_ptr<Model> load_model(const std::filesystem::path& path);

}  // namespace dtsda::nn
