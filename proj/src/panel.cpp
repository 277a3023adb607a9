#include "deconf/panel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "deconf/error.hpp"
#include "deconf/rng.hpp"

namespace deconf {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

UnitRoster UnitRoster::from_csv(const CsvTable& units_csv) {
  UnitRoster r;
  const int c_unit = units_csv.column("unit");
  const int c_state = units_csv.column("state");
  for (int i = 0; i < units_csv.row_count(); ++i) {
    const std::string& unit = units_csv.cell(i, c_unit);
    const std::string& state = units_csv.cell(i, c_state);
    if (unit.empty())
      throw IngestError(units_csv.name() + ": empty unit id at line " +
                        std::to_string(units_csv.line_number(i)));
    if (r.unit_state.count(unit))
      throw IngestError(units_csv.name() + ": duplicate unit '" + unit + "' at line " +
                        std::to_string(units_csv.line_number(i)));
    r.units.push_back(unit);
    r.unit_state[unit] = state;
    r.state_units[state].push_back(unit);
  }
  return r;
}

CategoryMap CategoryMap::defaults() {
  CategoryMap m;
  m.add_keyword("gather", "social_distancing");
  m.add_keyword("distanc", "social_distancing");
  m.add_keyword("stay at home", "social_distancing");
  m.add_keyword("emergency", "social_distancing");
  m.add_keyword("nursing", "social_distancing");
  m.add_keyword("childcare", "social_distancing");
  m.add_keyword("quarantine", "social_distancing");
  m.add_keyword("reopen", "reopening");
  m.add_keyword("phase", "reopening");
  m.add_keyword("entertainment", "reopening");
  m.add_keyword("recreation", "reopening");
  m.add_keyword("mask", "mask_requirement");
  m.add_keyword("face cover", "mask_requirement");
  return m;
}

CategoryMap CategoryMap::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open category map '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

CategoryMap CategoryMap::parse(const std::string& content, const std::string& name) {
  CategoryMap m;
  std::istringstream in(content);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw SchemaError(name + ": line " + std::to_string(line_no) +
                        " is not of the form 'policy_type = category'");
    const std::string key = trim(s.substr(0, eq));
    const std::string cat = trim(s.substr(eq + 1));
    if (key.empty() || cat.empty())
      throw SchemaError(name + ": empty key or category at line " + std::to_string(line_no));
    if (key[0] == '~')
      m.add_keyword(trim(key.substr(1)), cat);
    else
      m.add_exact(key, cat);
  }
  return m;
}

void CategoryMap::add_exact(const std::string& policy_type, const std::string& category) {
  exact_[policy_type] = category;
}

void CategoryMap::add_keyword(const std::string& keyword, const std::string& category) {
  keywords_.emplace_back(lower(keyword), category);
}

std::string CategoryMap::categorize(const std::string& policy_type) const {
  auto it = exact_.find(policy_type);
  if (it != exact_.end()) return it->second;
  const std::string lowered = lower(policy_type);
  for (const auto& [kw, cat] : keywords_)
    if (lowered.find(kw) != std::string::npos) return cat;
  return "";
}

PolicyIngestResult ingest_policies(const CsvTable& csv, const UnitRoster& roster,
                                   const CategoryMap& categories) {
  PolicyIngestResult out;
  const int c_unit = csv.column("unit_or_state");
  const int c_level = csv.column("level");
  const int c_type = csv.column("policy_type");
  const int c_start = csv.column("start_date");
  const int c_end = csv.column("end_date");

  for (int i = 0; i < csv.row_count(); ++i) {
    const int line = csv.line_number(i);
    auto fail = [&](const std::string& msg) {
      out.errors.push_back(RowError{csv.name(), line, msg});
    };
    const std::string& level_text = csv.cell(i, c_level);
    const std::string& type = csv.cell(i, c_type);
    if (type.empty()) {
      fail("empty policy_type");
      continue;
    }

    Date start;
    std::optional<Date> end;
    try {
      start = parse_date(csv.cell(i, c_start));
      const std::string& end_text = csv.cell(i, c_end);
      if (!end_text.empty()) end = parse_date(end_text);
    } catch (const DataError& e) {
      fail(e.what());
      continue;
    }
    if (end && *end < start) {
      fail("end date " + format_date(*end) + " before start date " + format_date(start));
      continue;
    }

    PolicyRecord base;
    base.policy_type = type;
    base.category = categories.categorize(type);
    base.start = start;
    base.end = end;

    if (level_text == "state") {
      base.level = PolicyLevel::state;
      const std::string& state = csv.cell(i, c_unit);
      auto it = roster.state_units.find(state);
      if (it == roster.state_units.end())
        throw IngestError(csv.name() + ": line " + std::to_string(line) +
                          ": unknown state code '" + state + "'");
      for (const std::string& unit : it->second) {
        PolicyRecord r = base;
        r.unit_id = unit;
        out.records.push_back(std::move(r));
      }
    } else if (level_text == "county") {
      base.level = PolicyLevel::county;
      const std::string& unit = csv.cell(i, c_unit);
      if (!roster.has_unit(unit)) {
        ++out.skipped_out_of_roster;
        continue;
      }
      base.unit_id = unit;
      out.records.push_back(std::move(base));
    } else {
      fail("unknown level '" + level_text + "', expected 'state' or 'county'");
    }
  }
  return out;
}

std::vector<std::string> filter_policies(const std::vector<PolicyRecord>& records,
                                         const UnitRoster& roster, double min_adoption_fraction) {
  std::map<std::string, std::set<std::string>> adopters;
  for (const PolicyRecord& r : records) adopters[r.policy_type].insert(r.unit_id);
  std::vector<std::string> survivors;
  const double n = static_cast<double>(roster.units.size());
  for (const auto& [type, units] : adopters) {
    if (n > 0.0 && static_cast<double>(units.size()) / n >= min_adoption_fraction)
      survivors.push_back(type);
  }
  return survivors;
}

Matrix binarize_treatment(const std::vector<PolicyRecord>& records,
                          const std::vector<std::string>& units, const PeriodCalendar& calendar,
                          double coverage_threshold) {
  std::unordered_map<std::string, int> idx;
  for (int i = 0; i < static_cast<int>(units.size()); ++i) idx[units[i]] = i;

  const int T = calendar.periods();
  const int n = static_cast<int>(units.size());
  const Date window_start = calendar.start();
  const Date window_end = calendar.end();

  // Merged active intervals per unit, in window-relative day offsets.
  std::vector<std::vector<std::pair<int, int>>> intervals(static_cast<std::size_t>(n));
  for (const PolicyRecord& r : records) {
    auto it = idx.find(r.unit_id);
    if (it == idx.end()) continue;
    Date lo = std::max(r.start, window_start);
    Date hi = std::min(r.end.value_or(window_end), window_end);
    if (hi < lo) continue;
    intervals[static_cast<std::size_t>(it->second)].emplace_back(lo - window_start,
                                                                 hi - window_start);
  }

  Matrix c(T, n);
  for (int u = 0; u < n; ++u) {
    auto& iv = intervals[static_cast<std::size_t>(u)];
    if (iv.empty()) continue;
    std::sort(iv.begin(), iv.end());
    std::vector<std::pair<int, int>> merged;
    for (const auto& seg : iv) {
      if (!merged.empty() && seg.first <= merged.back().second + 1)
        merged.back().second = std::max(merged.back().second, seg.second);
      else
        merged.push_back(seg);
    }
    for (int t = 0; t < T; ++t) {
      const int p_lo = t * calendar.period_days();
      const int p_hi = p_lo + calendar.period_days() - 1;
      int active = 0;
      for (const auto& seg : merged) {
        const int lo = std::max(seg.first, p_lo);
        const int hi = std::min(seg.second, p_hi);
        if (hi >= lo) active += hi - lo + 1;
      }
      if (static_cast<double>(active) >=
          coverage_threshold * static_cast<double>(calendar.period_days()))
        c(t, u) = 1.0;
    }
  }
  return c;
}

OutcomeTables aggregate_outcomes(const CsvTable& cases_csv,
                                 const std::vector<std::string>& roster_units,
                                 const PeriodCalendar& calendar, OutcomeMode mode) {
  OutcomeTables out;
  const int c_unit = cases_csv.column("unit");
  const int c_date = cases_csv.column("date");
  const int c_conf = cases_csv.column("confirmed_cumulative");
  const int c_dead = cases_csv.column("deaths_cumulative");

  std::unordered_map<std::string, int> roster_idx;
  for (int i = 0; i < static_cast<int>(roster_units.size()); ++i) roster_idx[roster_units[i]] = i;

  // observation day -> (confirmed, deaths); day offsets relative to the
  // window start, pre-window observations keep their negative offset so the
  // most recent one seeds the forward fill.
  struct Series {
    std::map<int, std::pair<double, double>> obs;
  };
  std::vector<Series> series(roster_units.size());
  std::vector<bool> seen(roster_units.size(), false);

  const Date window_start = calendar.start();
  const Date window_end = calendar.end();

  for (int i = 0; i < cases_csv.row_count(); ++i) {
    const int line = cases_csv.line_number(i);
    auto it = roster_idx.find(cases_csv.cell(i, c_unit));
    if (it == roster_idx.end()) continue;
    try {
      const Date d = parse_date(cases_csv.cell(i, c_date));
      const double conf = parse_double(cases_csv.cell(i, c_conf));
      const double dead = parse_double(cases_csv.cell(i, c_dead));
      if (conf < 0.0 || dead < 0.0) throw DataError("negative cumulative count");
      if (d > window_end) continue;
      const int offset = d - window_start;
      auto& obs = series[static_cast<std::size_t>(it->second)].obs;
      auto existing = obs.find(offset);
      if (existing != obs.end()) {
        if (existing->second != std::make_pair(conf, dead))
          out.errors.push_back(RowError{cases_csv.name(), line,
                                        "conflicting duplicate observation for unit '" +
                                            cases_csv.cell(i, c_unit) + "' on " +
                                            cases_csv.cell(i, c_date)});
        continue;
      }
      obs.emplace(offset, std::make_pair(conf, dead));
      seen[static_cast<std::size_t>(it->second)] = true;
    } catch (const DataError& e) {
      out.errors.push_back(RowError{cases_csv.name(), line, e.what()});
    }
  }

  const int total_days = calendar.periods() * calendar.period_days();
  std::vector<int> kept;
  for (int u = 0; u < static_cast<int>(roster_units.size()); ++u) {
    if (seen[static_cast<std::size_t>(u)])
      kept.push_back(u);
    else
      out.dropped_units.push_back(roster_units[static_cast<std::size_t>(u)]);
  }

  const int n = static_cast<int>(kept.size());
  const int T = calendar.periods();
  out.confirmed = Matrix(T, n);
  out.deaths = Matrix(T, n);
  out.final_cumulative_confirmed.assign(static_cast<std::size_t>(n), 0.0);

  for (int col = 0; col < n; ++col) {
    const Series& s = series[static_cast<std::size_t>(kept[static_cast<std::size_t>(col)])];
    out.units.push_back(roster_units[static_cast<std::size_t>(kept[static_cast<std::size_t>(col)])]);

    std::vector<double> conf(static_cast<std::size_t>(total_days));
    std::vector<double> dead(static_cast<std::size_t>(total_days));
    double last_conf = 0.0, last_dead = 0.0;
    // Latest pre-window observation, if any, seeds the fill value.
    auto first_in_window = s.obs.lower_bound(0);
    if (first_in_window != s.obs.begin()) {
      const auto& pre = *std::prev(first_in_window);
      last_conf = pre.second.first;
      last_dead = pre.second.second;
    }
    const double baseline_conf = last_conf;
    const double baseline_dead = last_dead;
    for (int d = 0; d < total_days; ++d) {
      auto it = s.obs.find(d);
      if (it != s.obs.end()) {
        double c = it->second.first;
        double k = it->second.second;
        if (c < last_conf || k < last_dead) {
          c = std::max(c, last_conf);
          k = std::max(k, last_dead);
          ++out.clamped_values;
        }
        last_conf = c;
        last_dead = k;
      }
      conf[static_cast<std::size_t>(d)] = last_conf;
      dead[static_cast<std::size_t>(d)] = last_dead;
    }

    out.final_cumulative_confirmed[static_cast<std::size_t>(col)] =
        conf[static_cast<std::size_t>(total_days - 1)];

    double prev_conf = baseline_conf, prev_dead = baseline_dead;
    for (int t = 0; t < T; ++t) {
      const int last_day = (t + 1) * calendar.period_days() - 1;
      const double ct = conf[static_cast<std::size_t>(last_day)];
      const double dt = dead[static_cast<std::size_t>(last_day)];
      if (mode == OutcomeMode::cumulative) {
        out.confirmed(t, col) = ct;
        out.deaths(t, col) = dt;
      } else {
        out.confirmed(t, col) = ct - prev_conf;
        out.deaths(t, col) = dt - prev_dead;
      }
      prev_conf = ct;
      prev_dead = dt;
    }
  }
  return out;
}

std::vector<Matrix> covariate_period_means(const CsvTable& trends_csv,
                                           const std::vector<std::string>& units,
                                           const PeriodCalendar& calendar,
                                           std::vector<std::string>& keywords_out,
                                           int& missing_series_out,
                                           std::vector<RowError>& errors_out) {
  const int c_unit = trends_csv.column("unit");
  const int c_date = trends_csv.column("date");
  const int c_keyword = trends_csv.column("keyword");
  const int c_pop = trends_csv.column("popularity");

  std::unordered_map<std::string, int> unit_idx;
  for (int i = 0; i < static_cast<int>(units.size()); ++i) unit_idx[units[i]] = i;

  std::set<std::string> keyword_set;
  for (int i = 0; i < trends_csv.row_count(); ++i) keyword_set.insert(trends_csv.cell(i, c_keyword));
  keywords_out.assign(keyword_set.begin(), keyword_set.end());
  std::unordered_map<std::string, int> keyword_idx;
  for (int k = 0; k < static_cast<int>(keywords_out.size()); ++k)
    keyword_idx[keywords_out[static_cast<std::size_t>(k)]] = k;

  const int n = static_cast<int>(units.size());
  const int d = static_cast<int>(keywords_out.size());
  const Date window_start = calendar.start();
  const Date window_end = calendar.end();

  // (unit, keyword) -> day offset -> value
  std::vector<std::map<int, double>> obs(static_cast<std::size_t>(n) * d);

  for (int i = 0; i < trends_csv.row_count(); ++i) {
    const int line = trends_csv.line_number(i);
    auto uit = unit_idx.find(trends_csv.cell(i, c_unit));
    if (uit == unit_idx.end()) continue;
    try {
      const Date date = parse_date(trends_csv.cell(i, c_date));
      const double pop = parse_double(trends_csv.cell(i, c_pop));
      if (pop < 0.0 || pop > 100.0)
        throw DataError("popularity " + trends_csv.cell(i, c_pop) + " outside [0, 100]");
      if (date > window_end) continue;
      const int offset = date - window_start;
      const int k = keyword_idx.at(trends_csv.cell(i, c_keyword));
      obs[static_cast<std::size_t>(uit->second) * d + k][offset] = pop;
    } catch (const DataError& e) {
      errors_out.push_back(RowError{trends_csv.name(), line, e.what()});
    }
  }

  missing_series_out = 0;
  const int T = calendar.periods();
  std::vector<Matrix> x(static_cast<std::size_t>(T), Matrix(n, d));
  for (int u = 0; u < n; ++u) {
    for (int k = 0; k < d; ++k) {
      const auto& series = obs[static_cast<std::size_t>(u) * d + k];
      if (series.empty()) {
        ++missing_series_out;
        continue;
      }
      double last = 0.0;
      auto first_in_window = series.lower_bound(0);
      if (first_in_window != series.begin()) last = std::prev(first_in_window)->second;
      int day = 0;
      for (int t = 0; t < T; ++t) {
        double sum = 0.0;
        for (int dd = 0; dd < calendar.period_days(); ++dd, ++day) {
          auto it = series.find(day);
          if (it != series.end()) last = it->second;
          sum += last;
        }
        x[static_cast<std::size_t>(t)](u, k) = sum / calendar.period_days();
      }
    }
  }
  return x;
}

void standardize_columns(std::vector<Matrix>& x) {
  if (x.empty()) return;
  const int n = x.front().rows();
  const int d = x.front().cols();
  const double count = static_cast<double>(n) * static_cast<double>(x.size());
  for (int k = 0; k < d; ++k) {
    double mean = 0.0;
    for (const Matrix& m : x)
      for (int i = 0; i < n; ++i) mean += m(i, k);
    mean /= count;
    double var = 0.0;
    for (const Matrix& m : x)
      for (int i = 0; i < n; ++i) {
        const double c = m(i, k) - mean;
        var += c * c;
      }
    var /= count;
    const double sd = std::sqrt(var);
    for (Matrix& m : x)
      for (int i = 0; i < n; ++i) m(i, k) = sd > 0.0 ? (m(i, k) - mean) / sd : 0.0;
  }
}

CovariateTable aggregate_covariates(const CsvTable& trends_csv,
                                    const std::vector<std::string>& units,
                                    const PeriodCalendar& calendar) {
  CovariateTable out;
  out.x = covariate_period_means(trends_csv, units, calendar, out.keywords, out.missing_series,
                                 out.errors);
  standardize_columns(out.x);
  return out;
}

SplitAssignment split_units(int n, std::uint64_t seed) {
  if (n < 5) throw DataError("split_units requires at least 5 units, got " + std::to_string(n));
  Rng rng(seed);
  const std::vector<int> perm = rng.permutation(n);
  const int n_val = n / 5;
  const int n_test = n / 5;
  const int n_train = n - n_val - n_test;

  SplitAssignment s;
  s.seed = seed;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.validation.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test.assign(perm.begin() + n_train + n_val, perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

const Matrix* PanelDataset::find_treatment(const std::string& selector) const {
  auto it = type_treatments.find(selector);
  if (it != type_treatments.end()) return &it->second;
  auto jt = category_treatments.find(selector);
  if (jt != category_treatments.end()) return &jt->second;
  return nullptr;
}

void PanelDataset::validate() const {
  const int units = n();
  const int T = periods();
  if (static_cast<int>(covariates.size()) != T)
    throw DataError("covariate period count " + std::to_string(covariates.size()) +
                    " != calendar periods " + std::to_string(T));
  for (const Matrix& m : covariates)
    if (m.rows() != units)
      throw DataError("covariate row count " + m.shape_str() + " != unit count " +
                      std::to_string(units));
  auto check_outcome = [&](const Matrix& y, const char* what) {
    if (y.rows() != T || y.cols() != units)
      throw DataError(std::string(what) + " shape " + y.shape_str() + " != " +
                      std::to_string(T) + "x" + std::to_string(units));
    require_finite(y, what);
    for (int u = 0; u < units; ++u) {
      double prev = 0.0;
      for (int t = 0; t < T; ++t) {
        if (y(t, u) < 0.0)
          throw DataError(std::string(what) + " negative at period " + std::to_string(t) +
                          ", unit " + unit_ids[static_cast<std::size_t>(u)]);
        if (outcome_mode == OutcomeMode::cumulative && y(t, u) < prev)
          throw DataError(std::string(what) + " decreasing at period " + std::to_string(t) +
                          ", unit " + unit_ids[static_cast<std::size_t>(u)]);
        prev = y(t, u);
      }
    }
  };
  check_outcome(y_confirmed, "confirmed outcomes");
  check_outcome(y_deaths, "death outcomes");

  auto check_treatment = [&](const std::string& name, const Matrix& c) {
    if (c.rows() != T || c.cols() != units)
      throw DataError("treatment '" + name + "' shape " + c.shape_str() + " != " +
                      std::to_string(T) + "x" + std::to_string(units));
    for (double v : c.values())
      if (v != 0.0 && v != 1.0)
        throw DataError("treatment '" + name + "' has non-binary entry " + std::to_string(v));
  };
  for (const auto& [name, c] : type_treatments) check_treatment(name, c);
  for (const auto& [name, c] : category_treatments) check_treatment(name, c);

  if (static_cast<int>(final_cumulative_confirmed.size()) != units)
    throw DataError("final cumulative count size mismatch");
}

TrainingPanel make_training_panel(const PanelDataset& dataset, const std::string& policy_selector,
                                  OutcomeKind kind) {
  const Matrix* c = dataset.find_treatment(policy_selector);
  if (c == nullptr)
    throw ConfigError("no treatment named '" + policy_selector +
                      "' (neither a surviving policy type nor a category)");
  TrainingPanel p;
  p.unit_ids = dataset.unit_ids;
  p.x = dataset.covariates;
  p.c = *c;
  p.y = kind == OutcomeKind::confirmed ? dataset.y_confirmed : dataset.y_deaths;
  p.final_confirmed = dataset.final_cumulative_confirmed;
  p.n = dataset.n();
  p.T = dataset.periods();
  p.d_x = dataset.dx();
  return p;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) return std::nan("");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nan("");
  return sab / std::sqrt(saa * sbb);
}

DependencyReport pearson_dependency_report(const PanelDataset& dataset,
                                           const TemporalGraph* distance_graph,
                                           const TemporalGraph* mobility_graph,
                                           const std::vector<int>& anchors, int bucket_count) {
  const int n = dataset.n();
  const int T = dataset.periods();
  if (T < 2) throw DataError("dependency report requires at least 2 periods");
  if (bucket_count <= 0) throw DataError("bucket count must be positive");

  std::vector<int> anchor_list = anchors;
  if (anchor_list.empty()) {
    anchor_list.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) anchor_list[static_cast<std::size_t>(i)] = i;
  }

  auto outcome_series = [&](int u) {
    std::vector<double> s(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) s[static_cast<std::size_t>(t)] = dataset.y_confirmed(t, u);
    return s;
  };
  const int d = dataset.dx();
  auto covariate_corr = [&](int u, int v) {
    double sum = 0.0;
    int valid = 0;
    std::vector<double> a(static_cast<std::size_t>(T)), b(static_cast<std::size_t>(T));
    for (int k = 0; k < d; ++k) {
      for (int t = 0; t < T; ++t) {
        a[static_cast<std::size_t>(t)] = dataset.covariates[static_cast<std::size_t>(t)](u, k);
        b[static_cast<std::size_t>(t)] = dataset.covariates[static_cast<std::size_t>(t)](v, k);
      }
      const double r = pearson(a, b);
      if (!std::isnan(r)) {
        sum += r;
        ++valid;
      }
    }
    return valid > 0 ? sum / valid : std::nan("");
  };
  auto mean_flow = [&](int u, int v) -> double {
    if (mobility_graph == nullptr) return std::nan("");
    double sum = 0.0;
    bool any = false;
    for (int t = 0; t < T; ++t) {
      const double w = mobility_graph->a(t)(u, v);
      sum += w;
      any = any || w > 0.0;
    }
    return any ? sum / T : std::nan("");
  };
  auto pair_distance = [&](int u, int v) -> double {
    if (distance_graph == nullptr) return std::nan("");
    const double w = distance_graph->a(0)(u, v);
    return w > 0.0 ? 1.0 / w : std::nan("");
  };

  DependencyReport report;
  report.buckets.assign(static_cast<std::size_t>(bucket_count), DependencyBucket{});
  std::vector<int> bucket_anchor_count(static_cast<std::size_t>(bucket_count), 0);
  std::vector<DependencyBucket> totals(static_cast<std::size_t>(bucket_count));

  for (int a : anchor_list) {
    const auto ya = outcome_series(a);
    struct PairRow {
      double outcome_corr;
      int other;
    };
    std::vector<PairRow> ranked;
    for (int v = 0; v < n; ++v) {
      const double r = pearson(ya, outcome_series(v));
      if (std::isnan(r)) {
        ++report.skipped_zero_variance;
        continue;
      }
      ranked.push_back(PairRow{r, v});
    }
    if (ranked.empty()) continue;
    ++report.anchors_used;
    std::sort(ranked.begin(), ranked.end(), [](const PairRow& x, const PairRow& y) {
      return x.outcome_corr < y.outcome_corr || (x.outcome_corr == y.outcome_corr && x.other < y.other);
    });

    const std::size_t L = ranked.size();
    for (int bkt = 0; bkt < bucket_count; ++bkt) {
      const std::size_t lo = L * static_cast<std::size_t>(bkt) / static_cast<std::size_t>(bucket_count);
      const std::size_t hi =
          L * static_cast<std::size_t>(bkt + 1) / static_cast<std::size_t>(bucket_count);
      if (hi <= lo) continue;
      DependencyBucket& tot = totals[static_cast<std::size_t>(bkt)];
      double oc = 0.0, cc = 0.0, dist = 0.0, flow = 0.0;
      int n_cc = 0, n_dist = 0, n_flow = 0;
      for (std::size_t i = lo; i < hi; ++i) {
        oc += ranked[i].outcome_corr;
        const double c = covariate_corr(a, ranked[i].other);
        if (!std::isnan(c)) {
          cc += c;
          ++n_cc;
        }
        const double dk = pair_distance(a, ranked[i].other);
        if (!std::isnan(dk)) {
          dist += dk;
          ++n_dist;
        }
        const double f = mean_flow(a, ranked[i].other);
        if (!std::isnan(f)) {
          flow += f;
          ++n_flow;
        }
      }
      const double count = static_cast<double>(hi - lo);
      tot.mean_outcome_corr += oc / count;
      tot.pairs += static_cast<int>(count);
      if (n_cc > 0) {
        tot.mean_covariate_corr += cc / n_cc;
      }
      if (n_dist > 0) {
        tot.mean_distance_km += dist / n_dist;
        tot.pairs_with_distance += n_dist;
      }
      if (n_flow > 0) {
        tot.mean_flow_weight += flow / n_flow;
        tot.pairs_with_flow += n_flow;
      }
      ++bucket_anchor_count[static_cast<std::size_t>(bkt)];
    }
  }

  for (int bkt = 0; bkt < bucket_count; ++bkt) {
    const int count = bucket_anchor_count[static_cast<std::size_t>(bkt)];
    DependencyBucket& b = report.buckets[static_cast<std::size_t>(bkt)];
    b = totals[static_cast<std::size_t>(bkt)];
    if (count > 0) {
      b.mean_outcome_corr /= count;
      b.mean_covariate_corr /= count;
      b.mean_distance_km /= count;
      b.mean_flow_weight /= count;
    }
  }
  return report;
}

}  // namespace deconf
