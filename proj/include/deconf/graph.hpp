#pragma once

#include <string>
#include <vector>

#include "deconf/matrix.hpp"

namespace deconf {

enum class GraphKind { distance, mobility };

/// How mobility log-weights are normalized: against the largest log-flow of
/// the same period, or against the largest over the whole study window.
enum class MobilityNormalization { per_period, global };

struct GraphBuildConfig {
  GraphKind kind = GraphKind::distance;
  double distance_threshold_km = 100.0;  // pairs at or beyond are omitted
  MobilityNormalization mobility_normalization = MobilityNormalization::per_period;
};

struct DistanceEdge {
  std::string unit_i;
  std::string unit_j;
  double distance_km = 0.0;
};

struct MobilityFlow {
  std::string unit_i;
  std::string unit_j;
  int period = 0;
  double volume = 0.0;
};

/// Per-period weighted adjacency plus its precomputed renormalized form.
/// Immutable after construction; safe for concurrent reads. A static graph
/// stores one adjacency and serves it for every period.
struct TemporalGraph {
  GraphKind kind = GraphKind::distance;
  std::vector<std::string> unit_ids;
  bool is_static = true;
  std::vector<Matrix> adjacency;     // size 1 if static, else one per period
  std::vector<Matrix> renormalized;  // same layout

  int n() const { return static_cast<int>(unit_ids.size()); }
  const Matrix& a(int period) const { return adjacency[is_static ? 0 : period]; }
  const Matrix& ahat(int period) const { return renormalized[is_static ? 0 : period]; }
};

/// Symmetric renormalization with added self loops:
/// Ahat = Dtilde^{-1/2} (A + I) Dtilde^{-1/2}, Dtilde_jj = sum_k (A + I)_jk.
/// Requires a square matrix with nonnegative entries.
Matrix renormalize(const Matrix& adjacency);

/// Undirected graph with edge (i,j) present iff distance < threshold, with
/// weight 1/distance. Duplicate listings of a pair keep the smallest
/// distance, so the result does not depend on edge order.
TemporalGraph build_distance_graph(const std::vector<DistanceEdge>& edges,
                                   const std::vector<std::string>& units,
                                   const GraphBuildConfig& config);

/// Per-period graph with weight log(flow)/max log(flow). Opposite directions
/// of a pair are summed before weighting; flows with volume <= 1 are dropped
/// (their log would be nonpositive).
TemporalGraph build_mobility_graph(const std::vector<MobilityFlow>& flows,
                                   const std::vector<std::string>& units, int periods,
                                   const GraphBuildConfig& config);

}  // namespace deconf
