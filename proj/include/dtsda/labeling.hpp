#pragma once

// Pseudo temporal state labeling: soft centroid initialisation from a state
// classifier's probabilities, a cosine distance matrix over temporally
// ordered samples, a minimum-cost state path under a uniform switch penalty,
// hard centroid re-estimation and nearest-centroid label assignment.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "dtsda/data.hpp"
#include "dtsda/tensor.hpp"

namespace dtsda::tsl {

/// 1 - <a,b>/(|a||b|), clamped to [0, 2]. Returns 1 when either norm is
/// below 1e-12.
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// values[t, i] = distance of sample i to state centroid t; [T × N].
struct DistanceMatrix {
  ad::Tensor values;
  std::size_t states() const { return values.dim(0); }
  std::size_t samples() const { return values.dim(1); }
};

/// Zero diagonal, gamma elsewhere; rows are the current state.
struct PenaltyMatrix {
  ad::Tensor values;
  double gamma = 0.0;
  std::size_t states() const { return values.dim(0); }
};

struct StatePath {
  std::vector<int> path;
  double total_cost = 0.0;
  std::size_t switch_count = 0;
};

struct Centroids {
  enum class Origin { Soft, Hard };
  ad::Tensor u;  // [T × dim]
  Origin origin = Origin::Soft;
};

/// u_t = sum_i p[i,t] f_i / sum_i p[i,t]. A state whose probability mass is
/// below 1e-12 falls back to the global feature mean.
Centroids soft_init_centroids(const ad::Tensor& features, const ad::Tensor& probs);

DistanceMatrix build_distance_matrix(const ad::Tensor& features, const Centroids& centroids);

PenaltyMatrix build_penalty_matrix(std::size_t states, double gamma);

/// sum_i D[path_i, i] + sum_i P[path_i, path_i+1], accumulated left to right.
double path_cost(const DistanceMatrix& distances, const PenaltyMatrix& penalties, std::span<const int> path);

/// Backward pass fills the future-cost table, forward pass picks the
/// cheapest state at each step given the previous choice. Ties go to the
/// lower state index.
StatePath min_cost_state_path(const DistanceMatrix& distances, const PenaltyMatrix& penalties);

/// Mean of the features assigned to each state; a state with no samples
/// keeps its centroid from `prior`.
Centroids hard_centroids(const ad::Tensor& features, std::span<const int> path, const Centroids& prior);

/// Nearest centroid by cosine distance, ties to the lower index.
std::vector<int> assign_pseudo_temporal_states(const ad::Tensor& features, const Centroids& centroids);

struct SequenceLabeling {
  Centroids soft;
  StatePath path;
  Centroids hard;
  std::vector<int> states;
};

/// One refinement pass over one temporally ordered sequence.
SequenceLabeling label_sequence(const ad::Tensor& features, const ad::Tensor& probs, double gamma);

/// Rows for the given window indices: features [n × dim] or probabilities [n × T].
using RowFn = std::function<ad::Tensor(std::span<const std::size_t>)>;

struct RelabelReport {
  std::size_t groups = 0;
  std::size_t windows = 0;
  std::size_t changed = 0;
  double change_fraction() const { return windows ? static_cast<double>(changed) / static_cast<double>(windows) : 0.0; }
};

/// Runs label_sequence independently per (domain, class, segment) group and
/// commits every window's ts once all groups are done.
RelabelReport relabel_dataset(data::WindowedDataset& dataset, const RowFn& feature_fn, const RowFn& probs_fn,
                              std::size_t states, double gamma);

/// Fraction of windows whose ts matches truth_state after the best state
/// permutation chosen per (domain, class, segment) group.
double best_permutation_agreement(const data::WindowedDataset& dataset);

/// Labels a feature CSV (segment, order, feature_0..feature_k) and writes it
/// back with a `state` column. Probabilities for the centroid initialisation
/// come from a seeded, untrained linear state classifier.
void label_feature_csv(const std::filesystem::path& in, const std::filesystem::path& out, std::size_t states,
                       double gamma, std::uint64_t seed);

}  // namespace dtsda::tsl
