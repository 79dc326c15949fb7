#include <algorithm>
#include <cmath>
#include <limits>

#include "dtsda/autodiff.hpp"
#include "dtsda/error.hpp"

namespace dtsda::ad {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void require_same_graph(const Value& a, const Value& b) {
  require(&a.graph() == &b.graph(), "values belong to different graphs");
}

}  // namespace

BatchNormStats::BatchNormStats(std::size_t channels)
    : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0) {}

Value linear(const Value& x, const Value& weight, const Value& bias) {
  require_same_graph(x, weight);
  require_same_graph(x, bias);
  const Tensor& X = x.tensor();
  const Tensor& W = weight.tensor();
  const Tensor& B = bias.tensor();
  require(X.rank() == 2 && W.rank() == 2 && B.rank() == 1,
          "linear expects x[batch×in], weight[out×in], bias[out]");
  const std::size_t batch = X.dim(0), in = X.dim(1), out = W.dim(0);
  require(W.dim(1) == in, "linear: input width " + std::to_string(in) + " != weight " +
                              shape_str(W.shape));
  require(B.dim(0) == out, "linear: bias " + shape_str(B.shape) + " != " + std::to_string(out));

  Tensor y(Shape{batch, out});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = X.data.data() + b * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = W.data.data() + o * in;
      double acc = B.data[o];
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      y.data[b * out + o] = acc;
    }
  }
  const NodeId xi = x.id(), wi = weight.id(), bi = bias.id();
  return x.graph().record(
      std::move(y), {xi, wi, bi},
      [xi, wi, bi, batch, in, out](Graph& g, NodeId self) {
        const auto& gy = g.grad(self);
        const auto& Xd = g.value(xi).data;
        const auto& Wd = g.value(wi).data;
        if (g.requires_grad(xi)) {
          auto& gx = g.grad(xi);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t o = 0; o < out; ++o) {
              const double go = gy[b * out + o];
              if (go == 0.0) continue;
              const double* wr = Wd.data() + o * in;
              double* gxr = gx.data() + b * in;
              for (std::size_t i = 0; i < in; ++i) gxr[i] += go * wr[i];
            }
        }
        if (g.requires_grad(wi)) {
          auto& gw = g.grad(wi);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t o = 0; o < out; ++o) {
              const double go = gy[b * out + o];
              if (go == 0.0) continue;
              const double* xr = Xd.data() + b * in;
              double* gwr = gw.data() + o * in;
              for (std::size_t i = 0; i < in; ++i) gwr[i] += go * xr[i];
            }
        }
        if (g.requires_grad(bi)) {
          auto& gb = g.grad(bi);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t o = 0; o < out; ++o) gb[o] += gy[b * out + o];
        }
      },
      "linear");
}

Value conv1d(const Value& x, const Value& kernels, const Value& bias, std::size_t stride,
             std::size_t padding) {
  require_same_graph(x, kernels);
  require_same_graph(x, bias);
  const Tensor& X = x.tensor();
  const Tensor& W = kernels.tensor();
  const Tensor& B = bias.tensor();
  require(X.rank() == 3 && W.rank() == 3 && B.rank() == 1,
          "conv1d expects x[batch×C_in×L], kernels[C_out×C_in×K], bias[C_out]");
  require(stride >= 1, "conv1d: stride must be >= 1");
  const std::size_t batch = X.dim(0), cin = X.dim(1), len = X.dim(2);
  const std::size_t cout = W.dim(0), klen = W.dim(2);
  require(W.dim(1) == cin, "conv1d: input channels " + std::to_string(cin) + " != kernels " +
                               shape_str(W.shape));
  require(B.dim(0) == cout, "conv1d: bias size mismatch");
  require(len + 2 * padding >= klen, "conv1d: kernel longer than padded input");
  const std::size_t lout = (len + 2 * padding - klen) / stride + 1;

  // Valid output range for kernel tap k: 0 <= lo*stride + k - padding < len.
  auto range = [=](std::size_t k) {
    const long p = static_cast<long>(padding), kk = static_cast<long>(k);
    const long s = static_cast<long>(stride), l = static_cast<long>(len);
    long lo_begin = p > kk ? (p - kk + s - 1) / s : 0;
    long last = l - 1 - kk + p;
    long lo_end = last < 0 ? 0 : std::min<long>(last / s + 1, static_cast<long>(lout));
    if (lo_begin > lo_end) lo_begin = lo_end;
    return std::pair<std::size_t, std::size_t>(lo_begin, lo_end);
  };

  Tensor y(Shape{batch, cout, lout});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      double* yr = y.data.data() + (b * cout + co) * lout;
      std::fill(yr, yr + lout, B.data[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xr = X.data.data() + (b * cin + ci) * len;
        const double* wr = W.data.data() + (co * cin + ci) * klen;
        for (std::size_t k = 0; k < klen; ++k) {
          const double w = wr[k];
          const auto [lb, le] = range(k);
          for (std::size_t lo = lb; lo < le; ++lo) yr[lo] += w * xr[lo * stride + k - padding];
        }
      }
    }

  const NodeId xi = x.id(), wi = kernels.id(), bi = bias.id();
  return x.graph().record(
      std::move(y), {xi, wi, bi},
      [=](Graph& g, NodeId self) {
        const auto& gy = g.grad(self);
        const auto& Xd = g.value(xi).data;
        const auto& Wd = g.value(wi).data;
        const bool need_x = g.requires_grad(xi), need_w = g.requires_grad(wi);
        std::vector<double>* gx = need_x ? &g.grad(xi) : nullptr;
        std::vector<double>* gw = need_w ? &g.grad(wi) : nullptr;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t co = 0; co < cout; ++co) {
            const double* gyr = gy.data() + (b * cout + co) * lout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const std::size_t xoff = (b * cin + ci) * len;
              const std::size_t woff = (co * cin + ci) * klen;
              for (std::size_t k = 0; k < klen; ++k) {
                const auto [lb, le] = range(k);
                if (need_w) {
                  double acc = 0.0;
                  for (std::size_t lo = lb; lo < le; ++lo)
                    acc += gyr[lo] * Xd[xoff + lo * stride + k - padding];
                  (*gw)[woff + k] += acc;
                }
                if (need_x) {
                  const double w = Wd[woff + k];
                  double* gxr = gx->data() + xoff;
                  for (std::size_t lo = lb; lo < le; ++lo) gxr[lo * stride + k - padding] += w * gyr[lo];
                }
              }
            }
          }
        if (g.requires_grad(bi)) {
          auto& gb = g.grad(bi);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t co = 0; co < cout; ++co) {
              const double* gyr = gy.data() + (b * cout + co) * lout;
              double acc = 0.0;
              for (std::size_t lo = 0; lo < lout; ++lo) acc += gyr[lo];
              gb[co] += acc;
            }
        }
      },
      "conv1d");
}

Value batchnorm(const Value& x, const Value& gamma, const Value& beta, BatchNormStats& stats,
                Mode mode, double eps, double momentum) {
  require_same_graph(x, gamma);
  require_same_graph(x, beta);
  const Tensor& X = x.tensor();
  require(X.rank() == 2 || X.rank() == 3, "batchnorm expects [batch×C] or [batch×C×L]");
  const std::size_t batch = X.dim(0), channels = X.dim(1), len = X.rank() == 3 ? X.dim(2) : 1;
  require(gamma.tensor().size() == channels && beta.tensor().size() == channels,
          "batchnorm: affine parameters must have one entry per channel");
  require(stats.running_mean.size() == channels && stats.running_var.size() == channels,
          "batchnorm: running statistics size mismatch");
  const std::size_t count = batch * len;
  const auto& G = gamma.tensor().data;
  const auto& Bt = beta.tensor().data;

  std::vector<double> mean(channels), invstd(channels);
  if (mode == Mode::Train) {
    if (count < 2) throw ShapeError("batchnorm: train mode needs at least two values per channel");
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t l = 0; l < len; ++l) s += X.data[(b * channels + c) * len + l];
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t l = 0; l < len; ++l) {
          const double d = X.data[(b * channels + c) * len + l] - m;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(count);
      const double unbiased = ss / static_cast<double>(count - 1);
      if (!std::isfinite(m) || !std::isfinite(var)) throw NumericError("batchnorm: non-finite statistics");
      mean[c] = m;
      invstd[c] = 1.0 / std::sqrt(var + eps);
      stats.running_mean.data[c] = (1.0 - momentum) * stats.running_mean.data[c] + momentum * m;
      stats.running_var.data[c] = (1.0 - momentum) * stats.running_var.data[c] + momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = stats.running_mean.data[c];
      invstd[c] = 1.0 / std::sqrt(stats.running_var.data[c] + eps);
    }
  }

  Tensor y(X.shape);
  std::vector<double> xhat(X.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t i = (b * channels + c) * len + l;
        xhat[i] = (X.data[i] - mean[c]) * invstd[c];
        y.data[i] = G[c] * xhat[i] + Bt[c];
      }

  const NodeId xi = x.id(), gi = gamma.id(), bi = beta.id();
  const bool train = mode == Mode::Train;
  return x.graph().record(
      std::move(y), {xi, gi, bi},
      [=, xhat = std::move(xhat), invstd = std::move(invstd)](Graph& g, NodeId self) {
        const auto& gy = g.grad(self);
        const auto& Gd = g.value(gi).data;
        std::vector<double> sum_gy(channels, 0.0), sum_gy_xhat(channels, 0.0);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t l = 0; l < len; ++l) {
              const std::size_t i = (b * channels + c) * len + l;
              sum_gy[c] += gy[i];
              sum_gy_xhat[c] += gy[i] * xhat[i];
            }
        if (g.requires_grad(gi)) {
          auto& gg = g.grad(gi);
          for (std::size_t c = 0; c < channels; ++c) gg[c] += sum_gy_xhat[c];
        }
        if (g.requires_grad(bi)) {
          auto& gb = g.grad(bi);
          for (std::size_t c = 0; c < channels; ++c) gb[c] += sum_gy[c];
        }
        if (g.requires_grad(xi)) {
          auto& gx = g.grad(xi);
          const double m = static_cast<double>(count);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < channels; ++c)
              for (std::size_t l = 0; l < len; ++l) {
                const std::size_t i = (b * channels + c) * len + l;
                if (train) {
                  gx[i] += Gd[c] * invstd[c] / m *
                           (m * gy[i] - sum_gy[c] - xhat[i] * sum_gy_xhat[c]);
                } else {
                  gx[i] += Gd[c] * invstd[c] * gy[i];
                }
              }
        }
      },
      "batchnorm");
}

Value relu(const Value& x) {
  const Tensor& X = x.tensor();
  Tensor y(X.shape);
  for (std::size_t i = 0; i < X.size(); ++i) y.data[i] = X.data[i] > 0.0 ? X.data[i] : 0.0;
  const NodeId xi = x.id();
  return x.graph().record(
      std::move(y), {xi},
      [xi](Graph& g, NodeId self) {
        const auto& gy = g.grad(self);
        const auto& Xd = g.value(xi).data;
        auto& gx = g.grad(xi);
        for (std::size_t i = 0; i < gx.size(); ++i)
          if (Xd[i] > 0.0) gx[i] += gy[i];
      },
      "relu");
}

Value maxpool1d(const Value& x, std::size_t kernel, std::size_t stride) {
  const Tensor& X = x.tensor();
  require(X.rank() == 3, "maxpool1d expects [batch×C×L]");
  require(stride >= 1, "maxpool1d: stride must be >= 1");
  require(kernel >= 1, "maxpool1d: kernel must be >= 1");
  const std::size_t rows = X.dim(0) * X.dim(1), len = X.dim(2);
  require(kernel <= len, "maxpool1d: kernel longer than input");
  const std::size_t lout = (len - kernel) / stride + 1;

  Tensor y(Shape{X.dim(0), X.dim(1), lout});
  std::vector<std::size_t> argmax(rows * lout);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data.data() + r * len;
    for (std::size_t o = 0; o < lout; ++o) {
      std::size_t best = o * stride;
      for (std::size_t k = 1; k < kernel; ++k)
        if (xr[o * stride + k] > xr[best]) best = o * stride + k;
      argmax[r * lout + o] = r * len + best;
      y.data[r * lout + o] = xr[best];
    }
  }
  const NodeId xi = x.id();
  return x.graph().record(
      std::move(y), {xi},
      [xi, argmax = std::move(argmax)](Graph& g, NodeId self) {
        const auto& gy = g.grad(self);
        auto& gx = g.grad(xi);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax[i]] += gy[i];
      },
      "maxpool1d");
}

Tensor softmax_rows(const Tensor& logits) {
  require(logits.rank() == 2, "softmax expects [rows×cols]");
  Tensor p(logits.shape);
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data.data() + r * cols;
    double* pr = p.data.data() + r * cols;
    const double mx = *std::max_element(z, z + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      pr[c] = std::exp(z[c] - mx);
      s += pr[c];
    }
    for (std::size_t c = 0; c < cols; ++c) pr[c] /= s;
  }
  return p;
}

Value softmax_cross_entropy(const Value& logits, std::span<const int> targets) {
  const Tensor& Z = logits.tensor();
  require(Z.rank() == 2, "softmax_cross_entropy expects logits[batch×K]");
  const std::size_t batch = Z.dim(0), k = Z.dim(1);
  if (batch == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  require(targets.size() == batch, "softmax_cross_entropy: one target per row required");
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= k) {
      throw DataError("softmax_cross_entropy: target " + std::to_string(t) + " outside [0," +
                      std::to_string(k) + ")");
    }
  }
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = Z.data.data() + b * k;
    const double mx = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += std::exp(z[c] - mx);
    loss += mx + std::log(s) - z[targets[b]];
  }
  loss /= static_cast<double>(batch);

  std::vector<int> tgt(targets.begin(), targets.end());
  const NodeId zi = logits.id();
  return logits.graph().record(
      Tensor(Shape{1}, std::vector<double>{loss}), {zi},
      [zi, batch, k, tgt = std::move(tgt)](Graph& g, NodeId self) {
        const double up = g.grad(self)[0] / static_cast<double>(batch);
        const Tensor p = softmax_rows(g.value(zi));
        auto& gz = g.grad(zi);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < k; ++c) {
            const double onehot = static_cast<int>(c) == tgt[b] ? 1.0 : 0.0;
            gz[b * k + c] += up * (p.data[b * k + c] - onehot);
          }
      },
      "softmax_cross_entropy");
}

Value gradient_reversal(const Value& x, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("gradient_reversal: lambda must be finite and non-negative");
  }
  const NodeId xi = x.id();
  return x.graph().record(
      x.tensor(), {xi},
      [xi, lambda](Graph& g, NodeId self) {
        const auto& gy = g.grad(self);
        auto& gx = g.grad(xi);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += -lambda * gy[i];
      },
      "gradient_reversal");
}

Value flatten(const Value& x) {
  const Tensor& X = x.tensor();
  require(X.rank() >= 1, "flatten needs a batch axis");
  const std::size_t batch = X.dim(0);
  Tensor y(Shape{batch, batch ? X.size() / batch : 0}, X.data);
  const NodeId xi = x.id();
  return x.graph().record(
      std::move(y), {xi},
      [xi](Graph& g, NodeId self) {
        const auto& gy = g.grad(self);
        auto& gx = g.grad(xi);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
      },
      "flatten");
}

Value select_rows(const Value& x, std::span<const std::size_t> rows) {
  const Tensor& X = x.tensor();
  require(X.rank() == 2, "select_rows expects [rows×cols]");
  const std::size_t cols = X.dim(1);
  Tensor y(Shape{rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] < X.dim(0), "select_rows: row index out of range");
    std::copy_n(X.data.begin() + rows[r] * cols, cols, y.data.begin() + r * cols);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const NodeId xi = x.id();
  return x.graph().record(
      std::move(y), {xi},
      [xi, cols, idx = std::move(idx)](Graph& g, NodeId self) {
        const auto& gy = g.grad(self);
        auto& gx = g.grad(xi);
        for (std::size_t r = 0; r < idx.size(); ++r)
          for (std::size_t c = 0; c < cols; ++c) gx[idx[r] * cols + c] += gy[r * cols + c];
      },
      "select_rows");
}

Value add(const Value& a, const Value& b) {
  require_same_graph(a, b);
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  Tensor y = a.tensor();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.tensor().data[i];
  const NodeId ai = a.id(), bi = b.id();
  return a.graph().record(
      std::move(y), {ai, bi},
      [ai, bi](Graph& g, NodeId self) {
        const auto& gy = g.grad(self);
        for (NodeId in : {ai, bi}) {
          if (!g.requires_grad(in)) continue;
          auto& gi = g.grad(in);
          for (std::size_t i = 0; i < gy.size(); ++i) gi[i] += gy[i];
        }
      },
      "add");
}

Value mul(const Value& a, const Value& b) {
  require_same_graph(a, b);
  require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor y = a.tensor();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= b.tensor().data[i];
  const NodeId ai = a.id(), bi = b.id();
  return a.graph().record(
      std::move(y), {ai, bi},
      [ai, bi](Graph& g, NodeId self) {
        const auto& gy = g.grad(self);
        const auto& A = g.value(ai).data;
        const auto& B = g.value(bi).data;
        if (g.requires_grad(ai)) {
          auto& ga = g.grad(ai);
          for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * B[i];
        }
        if (g.requires_grad(bi)) {
          auto& gb = g.grad(bi);
          for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * A[i];
        }
      },
      "mul");
}

Value scale(const Value& x, double factor) {
  Tensor y = x.tensor();
  for (double& v : y.data) v *= factor;
  const NodeId xi = x.id();
  return x.graph().record(
      std::move(y), {xi},
      [xi, factor](Graph& g, NodeId self) {
        const auto& gy = g.grad(self);
        auto& gx = g.grad(xi);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factor * gy[i];
      },
      "scale");
}

Value sum(const Value& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const NodeId xi = x.id();
  return x.graph().record(
      Tensor(Shape{1}, std::vector<double>{s}), {xi},
      [xi](Graph& g, NodeId self) {
        const double up = g.grad(self)[0];
        auto& gx = g.grad(xi);
        for (double& v : gx) v += up;
      },
      "sum");
}

}  // namespace dtsda::ad
