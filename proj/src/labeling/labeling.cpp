#include "dtsda/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "dtsda/autodiff.hpp"
#include "dtsda/error.hpp"
#include "dtsda/io.hpp"

namespace dtsda::tsl {

using ad::Shape;
using ad::Tensor;

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_distance: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) return 1.0;
  return std::clamp(1.0 - dot / (na * nb), 0.0, 2.0);
}

Centroids soft_init_centroids(const Tensor& features, const Tensor& probs) {
  if (features.rank() != 2 || probs.rank() != 2) throw ShapeError("soft_init_centroids expects 2-D inputs");
  const std::size_t n = features.dim(0), dim = features.dim(1), states = probs.dim(1);
  if (n == 0) throw ShapeError("soft_init_centroids: no samples");
  if (probs.dim(0) != n) throw ShapeError("soft_init_centroids: one probability row per sample required");
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double p : probs.row(i)) {
      if (!(p >= 0.0)) throw DataError("soft_init_centroids: negative probability");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-6) throw DataError("soft_init_centroids: probability rows must sum to 1");
  }
  std::vector<double> global(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) global[d] += features.at(i, d);
  for (double& g : global) g /= static_cast<double>(n);

  Centroids c;
  c.origin = Centroids::Origin::Soft;
  c.u = Tensor(Shape{states, dim});
  for (std::size_t t = 0; t < states; ++t) {
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) mass += probs.at(i, t);
    if (mass < 1e-12) {
      std::copy(global.begin(), global.end(), c.u.data.begin() + t * dim);
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double w = probs.at(i, t);
      for (std::size_t d = 0; d < dim; ++d) c.u.at(t, d) += w * features.at(i, d);
    }
    for (std::size_t d = 0; d < dim; ++d) c.u.at(t, d) /= mass;
  }
  return c;
}

DistanceMatrix build_distance_matrix(const Tensor& features, const Centroids& centroids) {
  if (features.rank() != 2 || features.dim(0) == 0) throw ShapeError("build_distance_matrix: no features");
  if (centroids.u.rank() != 2 || centroids.u.dim(1) != features.dim(1)) {
    throw ShapeError("build_distance_matrix: centroid and feature dimensions differ");
  }
  const std::size_t n = features.dim(0), states = centroids.u.dim(0);
  DistanceMatrix m{Tensor(Shape{states, n})};
  for (std::size_t t = 0; t < states; ++t)
    for (std::size_t i = 0; i < n; ++i) m.values.at(t, i) = cosine_distance(features.row(i), centroids.u.row(t));
  return m;
}

PenaltyMatrix build_penalty_matrix(std::size_t states, double gamma) {
  if (states < 1) throw ConfigError("penalty matrix needs at least one state");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("switch penalty must be finite and non-negative");
  PenaltyMatrix p{Tensor(Shape{states, states}, gamma), gamma};
  for (std::size_t t = 0; t < states; ++t) p.values.at(t, t) = 0.0;
  return p;
}

double path_cost(const DistanceMatrix& distances, const PenaltyMatrix& penalties, std::span<const int> path) {
  if (path.size() != distances.samples()) throw ShapeError("path_cost: path length differs from sample count");
  double cost = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    cost += distances.values.at(static_cast<std::size_t>(path[i]), i);
    if (i + 1 < path.size())
      cost += penalties.values.at(static_cast<std::size_t>(path[i]), static_cast<std::size_t>(path[i + 1]));
  }
  return cost;
}

StatePath min_cost_state_path(const DistanceMatrix& distances, const PenaltyMatrix& penalties) {
  const Tensor& d = distances.values;
  const Tensor& p = penalties.values;
  if (d.rank() != 2 || d.dim(1) == 0) throw ShapeError("min_cost_state_path: no samples");
  if (p.rank() != 2 || p.dim(0) != d.dim(0) || p.dim(1) != d.dim(0)) {
    throw ShapeError("min_cost_state_path: penalty matrix must be T×T for T = " + std::to_string(d.dim(0)));
  }
  if (!d.all_finite() || !p.all_finite()) throw NumericError("min_cost_state_path: non-finite cost entries");
  const std::size_t states = d.dim(0), n = d.dim(1);

  // future(t, i): cheapest cost of samples i+1..N-1 given state t at sample i.
  Tensor future(Shape{states, n}, 0.0);
  for (std::size_t i = n - 1; i-- > 0;) {
    const std::size_t j = i + 1;
    for (std::size_t t = 0; t < states; ++t) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < states; ++s) best = std::min(best, future.at(s, j) + d.at(s, j) + p.at(t, s));
      future.at(t, i) = best;
    }
  }

  StatePath out;
  out.path.assign(n, 0);
  auto argmin = [&](auto&& cost_of) {
    std::size_t best = 0;
    double best_cost = cost_of(0);
    for (std::size_t s = 1; s < states; ++s) {
      const double c = cost_of(s);
      if (c < best_cost) {
        best_cost = c;
        best = s;
      }
    }
    return static_cast<int>(best);
  };
  out.path[0] = argmin([&](std::size_t s) { return future.at(s, 0) + d.at(s, 0); });
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + 1, prev = static_cast<std::size_t>(out.path[i]);
    out.path[j] = argmin([&](std::size_t s) { return future.at(s, j) + d.at(s, j) + p.at(prev, s); });
  }
  out.total_cost = path_cost(distances, penalties, out.path);
  for (std::size_t i = 0; i + 1 < n; ++i) out.switch_count += out.path[i] != out.path[i + 1];
  return out;
}

Centroids hard_centroids(const Tensor& features, std::span<const int> path, const Centroids& prior) {
  if (features.rank() != 2 || path.size() != features.dim(0)) throw ShapeError("hard_centroids: one state per sample required");
  if (prior.u.rank() != 2 || prior.u.dim(1) != features.dim(1)) throw ShapeError("hard_centroids: prior dimension mismatch");
  const std::size_t states = prior.u.dim(0), dim = features.dim(1);
  Centroids c;
  c.origin = Centroids::Origin::Hard;
  c.u = Tensor(Shape{states, dim}, 0.0);
  std::vector<std::size_t> counts(states, 0);
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (path[i] < 0 || static_cast<std::size_t>(path[i]) >= states) throw DataError("hard_centroids: state out of range");
    const auto t = static_cast<std::size_t>(path[i]);
    ++counts[t];
    for (std::size_t d = 0; d < dim; ++d) c.u.at(t, d) += features.at(i, d);
  }
  for (std::size_t t = 0; t < states; ++t) {
    for (std::size_t d = 0; d < dim; ++d) {
      c.u.at(t, d) = counts[t] ? c.u.at(t, d) / static_cast<double>(counts[t]) : prior.u.at(t, d);
    }
  }
  return c;
}

std::vector<int> assign_pseudo_temporal_states(const Tensor& features, const Centroids& centroids) {
  const auto m = build_distance_matrix(features, centroids);
  std::vector<int> out(m.samples(), 0);
  for (std::size_t i = 0; i < m.samples(); ++i) {
    double best = m.values.at(0, i);
    for (std::size_t t = 1; t < m.states(); ++t) {
      if (m.values.at(t, i) < best) {
        best = m.values.at(t, i);
        out[i] = static_cast<int>(t);
      }
    }
  }
  return out;
}

SequenceLabeling label_sequence(const Tensor& features, const Tensor& probs, double gamma) {
  SequenceLabeling out;
  out.soft = soft_init_centroids(features, probs);
  const auto distances = build_distance_matrix(features, out.soft);
  out.path = min_cost_state_path(distances, build_penalty_matrix(out.soft.u.dim(0), gamma));
  out.hard = hard_centroids(features, out.path.path, out.soft);
  out.states = assign_pseudo_temporal_states(features, out.hard);
  return out;
}

RelabelReport relabel_dataset(data::WindowedDataset& dataset, const RowFn& feature_fn, const RowFn& probs_fn,
                              std::size_t states, double gamma) {
  if (states < 1) throw ConfigError("relabel_dataset: at least one state required");
  const auto groups = dataset.class_segment_groups();
  std::vector<std::pair<std::size_t, int>> updates;
  updates.reserve(dataset.windows.size());
  RelabelReport report;
  for (const auto& group : groups) {
    if (group.empty()) {
      io::warn("relabel_dataset: skipping empty group");
      continue;
    }
    const Tensor features = feature_fn(group);
    const Tensor probs = probs_fn(group);
    if (probs.rank() != 2 || probs.dim(1) != states) {
      throw ShapeError("relabel_dataset: probability width must equal the state count");
    }
    const auto labeled = label_sequence(features, probs, gamma);
    for (std::size_t k = 0; k < group.size(); ++k) updates.emplace_back(group[k], labeled.states[k]);
    ++report.groups;
  }
  for (const auto& [index, ts] : updates) {
    auto& w = dataset.windows[index];
    report.changed += w.ts != ts;
    w.ts = ts;
  }
  report.windows = updates.size();
  dataset.num_states = states;
  return report;
}

double best_permutation_agreement(const data::WindowedDataset& dataset) {
  std::size_t agree = 0, total = 0;
  const int states = static_cast<int>(dataset.num_states);
  int truth_states = 0;
  for (const auto& w : dataset.windows) truth_states = std::max(truth_states, w.truth_state + 1);
  const int k = std::max(states, truth_states);
  for (const auto& group : dataset.class_segment_groups()) {
    // counts[pred][truth]
    std::vector<std::size_t> counts(static_cast<std::size_t>(k * k), 0);
    for (std::size_t idx : group) {
      const auto& w = dataset.windows[idx];
      if (w.truth_state < 0) throw DataError("best_permutation_agreement: window without ground-truth state");
      ++counts[static_cast<std::size_t>(w.ts * k + w.truth_state)];
    }
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
      std::size_t hit = 0;
      for (int p = 0; p < k; ++p) hit += counts[static_cast<std::size_t>(p * k + perm[p])];
      best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
    agree += best;
    total += group.size();
  }
  return total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;
}

void label_feature_csv(const std::filesystem::path& in, const std::filesystem::path& out, std::size_t states,
                       double gamma, std::uint64_t seed) {
  if (states < 1) throw ConfigError("label: --states must be >= 1");
  const auto table = io::read_csv(in);
  const int seg_col = table.column("segment"), order_col = table.column("order");
  if (seg_col < 0 || order_col < 0) throw DataError(in.string() + ": expected columns segment,order,feature_0,...");
  std::vector<int> feature_cols;
  for (std::size_t k = 0;; ++k) {
    const int c = table.column("feature_" + std::to_string(k));
    if (c < 0) break;
    feature_cols.push_back(c);
  }
  if (feature_cols.empty()) throw DataError(in.string() + ": no feature_0.. columns");
  const std::size_t dim = feature_cols.size();

  // Untrained state classifier: N(0, 1/dim) weights, zero bias.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  Tensor weights(Shape{states, dim});
  for (double& w : weights.data) w = normal(rng);

  std::map<long long, std::vector<std::pair<long long, std::size_t>>> segments;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto ctx = in.string() + " row " + std::to_string(r + 2);
    segments[io::parse_int(table.rows[r][seg_col], ctx)].emplace_back(io::parse_int(table.rows[r][order_col], ctx), r);
  }
  std::vector<int> assigned(table.rows.size(), 0);
  for (auto& [segment, rows] : segments) {
    std::sort(rows.begin(), rows.end());
    for (std::size_t k = 1; k < rows.size(); ++k)
      if (rows[k].first == rows[k - 1].first) throw DataError("label: duplicate order value in segment " + std::to_string(segment));
    Tensor features(Shape{rows.size(), dim});
    for (std::size_t k = 0; k < rows.size(); ++k)
      for (std::size_t d = 0; d < dim; ++d)
        features.at(k, d) = io::parse_double(table.rows[rows[k].second][feature_cols[d]], in.string());
    Tensor logits(Shape{rows.size(), states}, 0.0);
    for (std::size_t k = 0; k < rows.size(); ++k)
      for (std::size_t t = 0; t < states; ++t)
        for (std::size_t d = 0; d < dim; ++d) logits.at(k, t) += weights.at(t, d) * features.at(k, d);
    const auto labeled = label_sequence(features, ad::softmax_rows(logits), gamma);
    for (std::size_t k = 0; k < rows.size(); ++k) assigned[rows[k].second] = labeled.states[k];
  }

  std::ostringstream os;
  for (std::size_t c = 0; c < table.header.size(); ++c) os << table.header[c] << ',';
  os << "state\n";
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (const auto& field : table.rows[r]) os << field << ',';
    os << assigned[r] << '\n';
  }
  io::write_text_file(out, os.str());
}

}  // namespace dtsda::tsl
