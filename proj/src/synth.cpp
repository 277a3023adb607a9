#include "deconf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "deconf/csv.hpp"
#include "deconf/error.hpp"
#include "deconf/rng.hpp"

namespace deconf {

namespace {

constexpr std::uint64_t kGraphSeedSalt = 0x9e3779b97f4a7c15ull;

std::vector<std::string> make_unit_ids(int n) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids.push_back(std::to_string(10000 + i));
  return ids;
}

std::string state_of(int unit_index) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "S%02d", unit_index / 25);
  return buf;
}

const char* kCategories[3] = {"social_distancing", "reopening", "mask_requirement"};

TemporalGraph draw_geometric_graph(const SynthConfig& cfg) {
  Rng rng(cfg.seed ^ kGraphSeedSalt);
  std::vector<double> px(static_cast<std::size_t>(cfg.n)), py(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000)
        throw DataError("cannot place units with the requested minimum separation");
      const double x = rng.uniform(0.0, cfg.square_side_km);
      const double y = rng.uniform(0.0, cfg.square_side_km);
      bool ok = true;
      for (int j = 0; j < i && ok; ++j) {
        const double dx = x - px[static_cast<std::size_t>(j)];
        const double dy = y - py[static_cast<std::size_t>(j)];
        ok = dx * dx + dy * dy >= cfg.min_separation_km * cfg.min_separation_km;
      }
      if (ok) {
        px[static_cast<std::size_t>(i)] = x;
        py[static_cast<std::size_t>(i)] = y;
        break;
      }
    }
  }

  std::vector<DistanceEdge> edges;
  const std::vector<std::string> ids = make_unit_ids(cfg.n);
  for (int i = 0; i < cfg.n; ++i)
    for (int j = i + 1; j < cfg.n; ++j) {
      const double dx = px[static_cast<std::size_t>(i)] - px[static_cast<std::size_t>(j)];
      const double dy = py[static_cast<std::size_t>(i)] - py[static_cast<std::size_t>(j)];
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d < cfg.radius_km)
        edges.push_back(DistanceEdge{ids[static_cast<std::size_t>(i)],
                                     ids[static_cast<std::size_t>(j)], d});
    }
  GraphBuildConfig gc;
  gc.kind = GraphKind::distance;
  gc.distance_threshold_km = cfg.radius_km;
  return build_distance_graph(edges, ids, gc);
}

// Repeated neighbor averaging ((1-g) I + g N)^rounds applied to an iid
// field, rescaled back to the input's empirical spread. gamma = 0 leaves the
// field untouched, so the confounder path then ignores the edges entirely.
Matrix smooth_field(const Matrix& iid, const Matrix& mixing, double gamma, int rounds) {
  if (gamma <= 0.0 || rounds <= 0) return iid;
  Matrix f = iid;
  for (int r = 0; r < rounds; ++r) {
    const Matrix mixed = multiply(mixing, f);
    for (std::size_t i = 0; i < f.size(); ++i)
      f.data()[i] = (1.0 - gamma) * f.data()[i] + gamma * mixed.data()[i];
  }
  const double sd_in = iid.frobenius_norm();
  const double sd_out = f.frobenius_norm();
  if (sd_out > 0.0) {
    const double rescale = sd_in / sd_out;
    for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] *= rescale;
  }
  return f;
}

Matrix row_normalized(const Matrix& a) {
  Matrix n = a;
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += a(i, j);
    if (s > 0.0)
      for (int j = 0; j < a.cols(); ++j) n(i, j) /= s;
    else
      for (int j = 0; j < a.cols(); ++j) n(i, j) = 0.0;
  }
  return n;
}

std::vector<double> unit_direction(Rng& rng, int d) {
  std::vector<double> w(static_cast<std::size_t>(d));
  double norm = 0.0;
  for (double& v : w) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : w) v /= norm > 0.0 ? norm : 1.0;
  return w;
}

double dot_row(const Matrix& m, int row, const std::vector<double>& w) {
  double s = 0.0;
  for (int j = 0; j < m.cols(); ++j) s += m(row, j) * w[static_cast<std::size_t>(j)];
  return s;
}

SynthPanel generate_impl(const SynthConfig& cfg, TemporalGraph graph) {
  if (cfg.policies.empty()) throw ConfigError("synthetic generator needs at least one policy");
  if (cfg.rho < 0.0 || cfg.rho >= 1.0 || cfg.gamma < 0.0 || cfg.gamma >= 1.0)
    throw ConfigError("rho and gamma must lie in [0, 1)");

  const int n = cfg.n;
  const int T = cfg.periods;
  const int p_count = static_cast<int>(cfg.policies.size());
  Rng rng(cfg.seed);

  // fixed draw order: proxy map, policy directions (+ heterogeneity), drift
  // direction, unit effects, time effects, confounder path, treatments,
  // outcome noise
  Matrix proxy(cfg.d_z, cfg.d_x);
  for (int i = 0; i < cfg.d_z; ++i)
    for (int j = 0; j < cfg.d_x; ++j) proxy(i, j) = rng.normal() / std::sqrt(cfg.d_z);

  std::vector<std::vector<double>> policy_dir;
  std::vector<std::vector<double>> tau_unit(static_cast<std::size_t>(p_count));
  for (int p = 0; p < p_count; ++p) {
    std::vector<double> dir = unit_direction(rng, cfg.d_z);
    for (double& v : dir) v *= cfg.treatment_direction_scale;
    policy_dir.push_back(std::move(dir));
    auto& taus = tau_unit[static_cast<std::size_t>(p)];
    taus.assign(static_cast<std::size_t>(n), cfg.policies[static_cast<std::size_t>(p)].tau);
    if (cfg.heterogeneous_effects)
      for (double& t : taus) t *= 1.0 + 0.5 * rng.uniform(-1.0, 1.0);
  }
  const std::vector<double> drift_dir = unit_direction(rng, cfg.d_z);

  // unit effects follow the same spatial smoothness as the confounders
  Matrix unit_field(n, 1);
  for (int i = 0; i < n; ++i) unit_field(i, 0) = rng.normal(0.0, cfg.sigma_unit);
  std::vector<double> unit_effect(static_cast<std::size_t>(n));
  std::vector<double> time_effect(static_cast<std::size_t>(T));
  for (double& v : time_effect) v = rng.normal(0.0, cfg.sigma_time);

  // latent confounder path with autoregression, neighbor mixing and drift;
  // the initial field and the innovations are spatially smooth (neighboring
  // units share vigilance levels), with the smoothing gated by gamma
  const Matrix mixing = row_normalized(graph.a(0));
  {
    const Matrix smoothed_units = smooth_field(unit_field, mixing, cfg.gamma, cfg.smoothing_rounds);
    for (int i = 0; i < n; ++i) unit_effect[static_cast<std::size_t>(i)] = smoothed_units(i, 0);
  }
  std::vector<Matrix> z(static_cast<std::size_t>(T), Matrix(n, cfg.d_z));
  Matrix innovation(n, cfg.d_z);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < cfg.d_z; ++k) innovation(i, k) = rng.normal(0.0, cfg.sigma_z0);
  z[0] = smooth_field(innovation, mixing, cfg.gamma, cfg.smoothing_rounds);
  for (int t = 1; t < T; ++t) {
    const Matrix mixed = multiply(mixing, z[static_cast<std::size_t>(t - 1)]);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < cfg.d_z; ++k) innovation(i, k) = rng.normal(0.0, cfg.sigma_z);
    const Matrix smoothed = smooth_field(innovation, mixing, cfg.gamma, cfg.smoothing_rounds);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < cfg.d_z; ++k)
        z[static_cast<std::size_t>(t)](i, k) =
            cfg.rho * z[static_cast<std::size_t>(t - 1)](i, k) + cfg.gamma * mixed(i, k) +
            cfg.drift * drift_dir[static_cast<std::size_t>(k)] + smoothed(i, k);
  }

  // proxy covariates
  std::vector<Matrix> x(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    Matrix xt = multiply(z[static_cast<std::size_t>(t)], proxy);
    for (double* v = xt.data(); v != xt.data() + xt.size(); ++v) *v += rng.normal(0.0, cfg.sigma_x);
    x[static_cast<std::size_t>(t)] = std::move(xt);
  }

  // treatments per policy
  std::vector<Matrix> treatment(static_cast<std::size_t>(p_count), Matrix(T, n));
  std::vector<double> bayes(static_cast<std::size_t>(p_count), 0.0);
  for (int p = 0; p < p_count; ++p) {
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < n; ++i) {
        const double logit =
            cfg.kappa * dot_row(z[static_cast<std::size_t>(t)], i,
                                policy_dir[static_cast<std::size_t>(p)]) +
            cfg.treatment_bias;
        const double prob = 1.0 / (1.0 + std::exp(-logit));
        treatment[static_cast<std::size_t>(p)](t, i) = rng.bernoulli(prob) ? 1.0 : 0.0;
        bayes[static_cast<std::size_t>(p)] += std::max(prob, 1.0 - prob);
      }
    bayes[static_cast<std::size_t>(p)] /= static_cast<double>(T) * n;
  }

  // outcomes: quadratic confounder signal aligned with the first policy's
  // treatment direction, plus unit and time effects
  std::vector<double> w_out = policy_dir[0];
  for (double& v : w_out) v /= cfg.treatment_direction_scale;
  Matrix y_base(T, n);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i) {
      const double s = dot_row(z[static_cast<std::size_t>(t)], i, w_out);
      y_base(t, i) = cfg.base_outcome + cfg.lin_scale * s + cfg.quad_scale * s * s +
                     unit_effect[static_cast<std::size_t>(i)] +
                     time_effect[static_cast<std::size_t>(t)] + rng.normal(0.0, cfg.sigma_y);
    }

  // recorded arrays: factual plus both potential outcomes for every policy.
  // The alternative potential outcome is derived from the factual value, so
  // the factual always equals the recorded outcome the assignment selects.
  auto factual_at = [&](int t, int i) {
    double effect_sum = 0.0;
    for (int p = 0; p < p_count; ++p)
      if (treatment[static_cast<std::size_t>(p)](t, i) != 0.0)
        effect_sum += tau_unit[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)];
    return y_base(t, i) + effect_sum;
  };
  // a constant shift on the base keeps every recorded outcome nonnegative
  // without touching any treatment effect
  double lowest = std::numeric_limits<double>::infinity();
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i) {
      const double f = factual_at(t, i);
      lowest = std::min(lowest, f);
      for (int p = 0; p < p_count; ++p) {
        const double tau = tau_unit[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)];
        const double other =
            treatment[static_cast<std::size_t>(p)](t, i) != 0.0 ? f - tau : f + tau;
        lowest = std::min(lowest, other);
      }
    }
  if (lowest < cfg.outcome_floor_margin) {
    const double shift = cfg.outcome_floor_margin - lowest;
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < n; ++i) y_base(t, i) += shift;
  }

  Matrix factual(T, n);
  std::vector<Matrix> y_on(static_cast<std::size_t>(p_count), Matrix(T, n));
  std::vector<Matrix> y_off(static_cast<std::size_t>(p_count), Matrix(T, n));
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i) {
      const double f = factual_at(t, i);
      factual(t, i) = f;
      for (int p = 0; p < p_count; ++p) {
        const double tau = tau_unit[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)];
        if (treatment[static_cast<std::size_t>(p)](t, i) != 0.0) {
          y_on[static_cast<std::size_t>(p)](t, i) = f;
          y_off[static_cast<std::size_t>(p)](t, i) = f - tau;
        } else {
          y_on[static_cast<std::size_t>(p)](t, i) = f + tau;
          y_off[static_cast<std::size_t>(p)](t, i) = f;
        }
      }
    }

  // panel assembly, mirroring the ingestion pipeline
  SynthPanel out;
  out.graph = std::move(graph);
  out.z_star = z;

  PanelDataset& ds = out.dataset;
  ds.unit_ids = make_unit_ids(n);
  ds.calendar = PeriodCalendar(parse_date(cfg.start_date), cfg.period_days, T);
  ds.covariates = x;
  standardize_columns(ds.covariates);
  for (int k = 0; k < cfg.d_x; ++k) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "keyword_%02d", k);
    ds.covariate_names.push_back(buf);
  }
  for (int p = 0; p < p_count; ++p) {
    const std::string& name = cfg.policies[static_cast<std::size_t>(p)].name;
    ds.type_treatments[name] = treatment[static_cast<std::size_t>(p)];
    ds.policy_category[name] = kCategories[p % 3];
  }
  for (const auto& [name, c] : ds.type_treatments) {
    const std::string& cat = ds.policy_category[name];
    auto it = ds.category_treatments.find(cat);
    if (it == ds.category_treatments.end()) {
      ds.category_treatments[cat] = c;
    } else {
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < n; ++i)
          if (c(t, i) != 0.0) it->second(t, i) = 1.0;
    }
  }
  ds.y_confirmed = factual;
  ds.y_deaths = scale(factual, 0.05);
  ds.outcome_mode = OutcomeMode::incident;
  ds.final_cumulative_confirmed.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < T; ++t)
      ds.final_cumulative_confirmed[static_cast<std::size_t>(i)] += factual(t, i);
  ds.validate();

  for (int p = 0; p < p_count; ++p) {
    PolicyGroundTruth truth;
    truth.name = cfg.policies[static_cast<std::size_t>(p)].name;
    truth.tau = cfg.policies[static_cast<std::size_t>(p)].tau;
    truth.bayes_accuracy = bayes[static_cast<std::size_t>(p)];
    truth.tau_unit = tau_unit[static_cast<std::size_t>(p)];
    truth.ite = Matrix(n, T);
    truth.ite_log1p = Matrix(n, T);
    truth.ate.assign(static_cast<std::size_t>(T), 0.0);
    truth.y_treated = Matrix(n, T);
    truth.y_control = Matrix(n, T);
    for (int t = 0; t < T; ++t) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        const double on = y_on[static_cast<std::size_t>(p)](t, i);
        const double off = y_off[static_cast<std::size_t>(p)](t, i);
        truth.y_treated(i, t) = on;
        truth.y_control(i, t) = off;
        truth.ite(i, t) = on - off;
        truth.ite_log1p(i, t) = std::log1p(on) - std::log1p(off);
        sum += on - off;
      }
      truth.ate[static_cast<std::size_t>(t)] = sum / n;
    }
    out.truth.push_back(std::move(truth));
  }

  return out;
}

}  // namespace

const PolicyGroundTruth& SynthPanel::truth_for(const std::string& policy) const {
  for (const PolicyGroundTruth& t : truth)
    if (t.name == policy) return t;
  throw ConfigError("no ground truth for policy '" + policy + "'");
}

SynthPanel generate(const SynthConfig& config) {
  return generate_impl(config, draw_geometric_graph(config));
}

SynthPanel generate_with_graph(const SynthConfig& config, const TemporalGraph& graph) {
  return generate_impl(config, graph);
}

double confounding_bias_oracle(const SynthPanel& panel, const std::string& policy) {
  const PolicyGroundTruth& truth = panel.truth_for(policy);
  const Matrix& y = panel.dataset.y_confirmed;
  const Matrix& c = panel.dataset.type_treatments.at(policy);
  const int T = y.rows();
  const int n = y.cols();
  double bias_sum = 0.0;
  int defined = 0;
  for (int t = 0; t < T; ++t) {
    double st = 0.0, sc = 0.0;
    int nt = 0, nc = 0;
    for (int i = 0; i < n; ++i) {
      if (c(t, i) != 0.0) {
        st += y(t, i);
        ++nt;
      } else {
        sc += y(t, i);
        ++nc;
      }
    }
    if (nt == 0 || nc == 0) continue;
    const double naive = st / nt - sc / nc;
    bias_sum += std::abs(naive - truth.ate[static_cast<std::size_t>(t)]);
    ++defined;
  }
  return defined > 0 ? bias_sum / defined : 0.0;
}

void write_synth_bundle(const SynthPanel& panel, const SynthConfig& config,
                        const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  const PanelDataset& ds = panel.dataset;
  const int n = ds.n();
  const int T = ds.periods();

  {
    CsvWriter w({"unit", "state"});
    for (int i = 0; i < n; ++i)
      w.add_row({ds.unit_ids[static_cast<std::size_t>(i)], state_of(i)});
    w.write_file(directory + "/units.csv");
  }
  {
    CsvWriter w({"unit_i", "unit_j", "distance_km"});
    const Matrix& a = panel.graph.a(0);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (a(i, j) > 0.0)
          w.add_row({ds.unit_ids[static_cast<std::size_t>(i)],
                     ds.unit_ids[static_cast<std::size_t>(j)], CsvWriter::format(1.0 / a(i, j))});
    w.write_file(directory + "/distance_edges.csv");
  }
  {
    // one record per maximal run of treated periods
    CsvWriter w({"unit_or_state", "level", "policy_type", "start_date", "end_date"});
    for (const auto& [name, c] : ds.type_treatments) {
      for (int i = 0; i < n; ++i) {
        int run_start = -1;
        for (int t = 0; t <= T; ++t) {
          const bool active = t < T && c(t, i) != 0.0;
          if (active && run_start < 0) run_start = t;
          if (!active && run_start >= 0) {
            w.add_row({ds.unit_ids[static_cast<std::size_t>(i)], "county", name,
                       format_date(ds.calendar.range(run_start).start),
                       format_date(ds.calendar.range(t - 1).end)});
            run_start = -1;
          }
        }
      }
    }
    w.write_file(directory + "/policies.csv");
  }
  {
    // cumulative counts at each period's last day; ingestion forward-fills.
    // A zero row on the first day anchors the derived study window.
    CsvWriter w({"unit", "date", "confirmed_cumulative", "deaths_cumulative"});
    const bool anchor = ds.calendar.range(0).start != ds.calendar.range(0).end;
    for (int i = 0; i < n; ++i) {
      if (anchor)
        w.add_row({ds.unit_ids[static_cast<std::size_t>(i)],
                   format_date(ds.calendar.range(0).start), "0", "0"});
      double cum_conf = 0.0, cum_dead = 0.0;
      for (int t = 0; t < T; ++t) {
        cum_conf += ds.y_confirmed(t, i);
        cum_dead += ds.y_deaths(t, i);
        w.add_row({ds.unit_ids[static_cast<std::size_t>(i)], format_date(ds.calendar.range(t).end),
                   CsvWriter::format(cum_conf), CsvWriter::format(cum_dead)});
      }
    }
    w.write_file(directory + "/cases.csv");
  }
  {
    // popularity is the covariate affinely mapped into [5, 95] per keyword;
    // standardization during ingestion removes the mapping again
    const int d = ds.dx();
    std::vector<double> lo(static_cast<std::size_t>(d), std::numeric_limits<double>::infinity());
    std::vector<double> hi(static_cast<std::size_t>(d), -std::numeric_limits<double>::infinity());
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) {
          lo[static_cast<std::size_t>(k)] =
              std::min(lo[static_cast<std::size_t>(k)], ds.covariates[static_cast<std::size_t>(t)](i, k));
          hi[static_cast<std::size_t>(k)] =
              std::max(hi[static_cast<std::size_t>(k)], ds.covariates[static_cast<std::size_t>(t)](i, k));
        }
    CsvWriter w({"unit", "date", "keyword", "popularity"});
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < d; ++k) {
          const double span = hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)];
          const double v = ds.covariates[static_cast<std::size_t>(t)](i, k);
          const double pop =
              span > 0.0 ? 5.0 + 90.0 * (v - lo[static_cast<std::size_t>(k)]) / span : 50.0;
          w.add_row({ds.unit_ids[static_cast<std::size_t>(i)],
                     format_date(ds.calendar.range(t).start),
                     ds.covariate_names[static_cast<std::size_t>(k)], CsvWriter::format(pop)});
        }
    w.write_file(directory + "/trends.csv");
  }
  {
    std::ofstream out(directory + "/category_map.txt", std::ios::binary);
    if (!out) throw IngestError("cannot write category map");
    out << "# synthetic policy categories\n";
    for (const auto& [name, cat] : ds.policy_category) out << name << " = " << cat << "\n";
  }
  {
    nlohmann::json j;
    j["format"] = "deconf-ground-truth";
    j["version"] = 1;
    j["seed"] = config.seed;
    j["n"] = n;
    j["periods"] = T;
    j["kappa"] = config.kappa;
    j["rho"] = config.rho;
    j["gamma"] = config.gamma;
    nlohmann::json policies = nlohmann::json::array();
    for (const PolicyGroundTruth& t : panel.truth) {
      nlohmann::json p;
      p["name"] = t.name;
      p["tau"] = t.tau;
      p["tau_unit"] = t.tau_unit;
      p["ate"] = t.ate;
      p["ite"] = t.ite.values();
      p["ite_log1p"] = t.ite_log1p.values();
      policies.push_back(std::move(p));
    }
    j["policies"] = std::move(policies);
    std::ofstream out(directory + "/ground_truth.json", std::ios::binary);
    if (!out) throw IngestError("cannot write ground truth");
    out << j.dump() << '\n';
  }
}

}  // namespace deconf
