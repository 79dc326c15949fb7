#pragma once

// Minimal reverse-mode differentiation over 64-bit tensors. A Graph records
// operations as they execute; backward() walks them in reverse recording
// order, accumulates gradients into the Parameters that were used, and then
// clears the graph.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dtsda/tensor.hpp"

namespace dtsda::ad {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool requires_grad = true;
  bool has_grad = false;

  Parameter() = default;
  Parameter(std::string n, Tensor v);

  void zero_grad();
};

using NodeId = std::size_t;
class Graph;

/// Handle to a node in a Graph. Cheap to copy; only valid until the graph is
/// cleared.
class Value {
 public:
  Value() = default;
  Value(Graph* g, NodeId id) : graph_(g), id_(id) {}

  Graph& graph() const { return *graph_; }
  NodeId id() const { return id_; }
  const Tensor& tensor() const;
  const Shape& shape() const { return tensor().shape; }
  const std::vector<double>& data() const { return tensor().data; }

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

class Graph {
 public:
  // Propagates the node's own gradient into its inputs' gradients.
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  Value constant(Tensor t);
  Value param(Parameter& p);
  Value record(Tensor out, std::vector<NodeId> inputs, BackwardFn fn, const char* op);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  // Zero-initialised on first access.
  std::vector<double>& grad(NodeId id);

  /// Seeds d(loss)/d(loss) = 1, runs every backward rule once in reverse
  /// order, adds leaf gradients into their Parameters and clears the graph.
  /// Parameters recorded in the graph but unreachable from the loss receive a
  /// zero gradient.
  void backward(const Value& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

enum class Mode { Train, Eval };

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  explicit BatchNormStats(std::size_t channels = 0);
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// ---- operations ------------------------------------------------------------

/// y[b,o] = sum_i x[b,i] * weight[o,i] + bias[o]
Value linear(const Value& x, const Value& weight, const Value& bias);

/// Cross-correlation over the last axis of x [batch × C_in × L].
Value conv1d(const Value& x, const Value& kernels, const Value& bias, std::size_t stride,
             std::size_t padding);

/// Per-channel normalisation along axis 1 of a [batch × C] or
/// [batch × C × L] input. Train mode uses biased batch variance for the
/// output and folds the unbiased variance into the running statistics.
Value batchnorm(const Value& x, const Value& gamma, const Value& beta, BatchNormStats& stats,
                Mode mode, double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

Value relu(const Value& x);

/// Window maximum along the last axis; ties send the gradient to the first
/// index of the window.
Value maxpool1d(const Value& x, std::size_t kernel, std::size_t stride);

/// Mean over the batch of -log softmax(logits)[target].
Value softmax_cross_entropy(const Value& logits, std::span<const int> targets);

/// Identity forward; backward multiplies the upstream gradient by -lambda.
Value gradient_reversal(const Value& x, double lambda);

/// [batch × ...] -> [batch × rest]
Value flatten(const Value& x);

/// Gathers rows of a [rows × cols] value.
Value select_rows(const Value& x, std::span<const std::size_t> rows);

Value add(const Value& a, const Value& b);
/// Elementwise product of equal-shape values.
Value mul(const Value& a, const Value& b);
Value scale(const Value& x, double factor);
Value sum(const Value& x);

/// Row-wise softmax of a [rows × cols] tensor, computed with max subtraction.
Tensor softmax_rows(const Tensor& logits);

// ---- optimisation ----------------------------------------------------------

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool plain_sgd = false;
};

/// Adaptive-moment optimiser (or plain SGD) over a fixed parameter list.
class Optimizer {
 public:
  Optimizer(std::vector<Parameter*> params, OptimizerConfig config);

  void zero_grad();
  /// Every requires_grad parameter must carry a gradient.
  void step();

  long long step_count() const { return step_; }
  const OptimizerConfig& config() const { return config_; }
  std::span<Parameter* const> params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  long long step_ = 0;
};

}  // namespace dtsda::ad
