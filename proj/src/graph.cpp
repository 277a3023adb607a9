#include "deconf/graph.hpp"

#include <cmath>
#include <map>
#include <unordered_map>

#include "deconf/error.hpp"

namespace deconf {

namespace {

std::unordered_map<std::string, int> index_units(const std::vector<std::string>& units) {
  std::unordered_map<std::string, int> idx;
  for (int i = 0; i < static_cast<int>(units.size()); ++i) idx[units[i]] = i;
  return idx;
}

int resolve(const std::unordered_map<std::string, int>& idx, const std::string& unit,
            const std::string& context) {
  auto it = idx.find(unit);
  if (it == idx.end()) throw IngestError(context + ": unknown unit id '" + unit + "'");
  return it->second;
}

}  // namespace

Matrix renormalize(const Matrix& adjacency) {
  if (adjacency.rows() != adjacency.cols())
    throw DimensionError("renormalize requires a square matrix, got " + adjacency.shape_str());
  const int n = adjacency.rows();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (adjacency(i, j) < 0.0)
        throw DataError("renormalize: negative adjacency entry at (" + std::to_string(i) + "," +
                        std::to_string(j) + ")");

  std::vector<double> inv_sqrt_degree(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double d = 1.0;  // self loop
    for (int j = 0; j < n; ++j) d += adjacency(i, j);
    inv_sqrt_degree[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(d);
  }
  Matrix out(n, n);
  for (int i = 0; i < n; ++i) {
    const double di = inv_sqrt_degree[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) {
      const double a = adjacency(i, j) + (i == j ? 1.0 : 0.0);
      if (a != 0.0) out(i, j) = di * a * inv_sqrt_degree[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

TemporalGraph build_distance_graph(const std::vector<DistanceEdge>& edges,
                                   const std::vector<std::string>& units,
                                   const GraphBuildConfig& config) {
  if (config.distance_threshold_km <= 0.0)
    throw DataError("distance threshold must be positive");
  const auto idx = index_units(units);
  const int n = static_cast<int>(units.size());

  // Smallest listed distance per unordered pair; keeps the build independent
  // of edge order even when a pair appears in both directions.
  std::map<std::pair<int, int>, double> best;
  int row = 0;
  for (const DistanceEdge& e : edges) {
    ++row;
    const std::string context = "distance edge " + std::to_string(row);
    const int i = resolve(idx, e.unit_i, context);
    const int j = resolve(idx, e.unit_j, context);
    if (e.distance_km <= 0.0)
      throw DataError(context + ": nonpositive distance " + std::to_string(e.distance_km) +
                      " between '" + e.unit_i + "' and '" + e.unit_j + "'");
    if (i == j) continue;
    const auto key = std::minmax(i, j);
    auto it = best.find(key);
    if (it == best.end() || e.distance_km < it->second) best[key] = e.distance_km;
  }

  Matrix a(n, n);
  for (const auto& [key, d] : best) {
    if (d >= config.distance_threshold_km) continue;
    a(key.first, key.second) = 1.0 / d;
    a(key.second, key.first) = 1.0 / d;
  }

  TemporalGraph g;
  g.kind = GraphKind::distance;
  g.unit_ids = units;
  g.is_static = true;
  g.renormalized.push_back(renormalize(a));
  g.adjacency.push_back(std::move(a));
  return g;
}

TemporalGraph build_mobility_graph(const std::vector<MobilityFlow>& flows,
                                   const std::vector<std::string>& units, int periods,
                                   const GraphBuildConfig& config) {
  const auto idx = index_units(units);
  const int n = static_cast<int>(units.size());
  if (periods <= 0) throw DataError("mobility graph needs at least one period");

  // Summed volume per (period, unordered pair).
  std::vector<std::map<std::pair<int, int>, double>> volume(static_cast<std::size_t>(periods));
  int row = 0;
  for (const MobilityFlow& f : flows) {
    ++row;
    const std::string context = "mobility flow " + std::to_string(row);
    const int i = resolve(idx, f.unit_i, context);
    const int j = resolve(idx, f.unit_j, context);
    if (f.period < 0 || f.period >= periods)
      throw IngestError(context + ": period " + std::to_string(f.period) + " outside 0.." +
                        std::to_string(periods - 1));
    if (f.volume < 0.0)
      throw DataError(context + ": negative flow volume " + std::to_string(f.volume));
    if (i == j) continue;
    volume[static_cast<std::size_t>(f.period)][std::minmax(i, j)] += f.volume;
  }

  std::vector<std::map<std::pair<int, int>, double>> logw(static_cast<std::size_t>(periods));
  double global_max = 0.0;
  std::vector<double> period_max(static_cast<std::size_t>(periods), 0.0);
  for (int t = 0; t < periods; ++t) {
    for (const auto& [key, v] : volume[static_cast<std::size_t>(t)]) {
      if (v <= 1.0) continue;  // log(v) <= 0, dropped
      const double lw = std::log(v);
      logw[static_cast<std::size_t>(t)][key] = lw;
      period_max[static_cast<std::size_t>(t)] = std::max(period_max[static_cast<std::size_t>(t)], lw);
      global_max = std::max(global_max, lw);
    }
  }

  TemporalGraph g;
  g.kind = GraphKind::mobility;
  g.unit_ids = units;
  g.is_static = false;
  for (int t = 0; t < periods; ++t) {
    Matrix a(n, n);
    const double denom = config.mobility_normalization == MobilityNormalization::per_period
                             ? period_max[static_cast<std::size_t>(t)]
                             : global_max;
    if (denom > 0.0) {
      for (const auto& [key, lw] : logw[static_cast<std::size_t>(t)]) {
        const double w = lw / denom;
        a(key.first, key.second) = w;
        a(key.second, key.first) = w;
      }
    }
    g.renormalized.push_back(renormalize(a));
    g.adjacency.push_back(std::move(a));
  }
  return g;
}

}  // namespace deconf
