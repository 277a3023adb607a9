#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deconf/calendar.hpp"
#include "deconf/csv.hpp"
#include "deconf/graph.hpp"
#include "deconf/matrix.hpp"

namespace deconf {

enum class OutcomeKind { confirmed, deaths };
enum class OutcomeMode { cumulative, incident };
enum class PolicyLevel { state, county };

/// An interval-valued policy, resolved to one county.
struct PolicyRecord {
  std::string unit_id;
  std::string policy_type;
  std::string category;  // empty when no mapping matched
  PolicyLevel level = PolicyLevel::county;
  Date start;
  std::optional<Date> end;  // open-ended when absent
};

struct RowError {
  std::string file;
  int line = 0;
  std::string message;
};

/// County roster with state membership, used to expand state-level policies.
struct UnitRoster {
  std::vector<std::string> units;  // ordered county ids
  std::map<std::string, std::string> unit_state;
  std::map<std::string, std::vector<std::string>> state_units;

  static UnitRoster from_csv(const CsvTable& units_csv);
  bool has_unit(const std::string& id) const { return unit_state.count(id) > 0; }
};

/// Maps policy type names to categories. Exact entries take precedence;
/// entries starting with '~' are lowercase substring keywords, first match
/// wins in file order.
class CategoryMap {
 public:
  static CategoryMap defaults();
  static CategoryMap read_file(const std::string& path);
  static CategoryMap parse(const std::string& content, const std::string& name);

  void add_exact(const std::string& policy_type, const std::string& category);
  void add_keyword(const std::string& keyword, const std::string& category);

  /// Category for a policy type, empty string when unmatched.
  std::string categorize(const std::string& policy_type) const;

 private:
  std::map<std::string, std::string> exact_;
  std::vector<std::pair<std::string, std::string>> keywords_;
};

struct PolicyIngestResult {
  std::vector<PolicyRecord> records;
  std::vector<RowError> errors;
  int skipped_out_of_roster = 0;  // county rows outside the study roster
};

/// Reads `unit_or_state,level,policy_type,start_date,end_date` rows.
/// State-level rows expand to one record per county of that state.
/// Malformed rows are collected, never silently dropped.
PolicyIngestResult ingest_policies(const CsvTable& policies_csv, const UnitRoster& roster,
                                   const CategoryMap& categories);

/// Policy types adopted by at least `min_adoption_fraction` of the roster.
std::vector<std::string> filter_policies(const std::vector<PolicyRecord>& records,
                                         const UnitRoster& roster,
                                         double min_adoption_fraction = 0.10);

/// Period-level binary treatment: 1 iff policies among `records` are active
/// on at least `coverage_threshold` of the days of the period for the unit.
/// Pass the records of one policy type, or of a whole category for
/// category-level treatment (active days are unioned before thresholding).
Matrix binarize_treatment(const std::vector<PolicyRecord>& records,
                          const std::vector<std::string>& units, const PeriodCalendar& calendar,
                          double coverage_threshold = 0.5);  // T x n

struct OutcomeTables {
  std::vector<std::string> units;  // roster units that had any data, in roster order
  Matrix confirmed;                // T x n, in the requested mode
  Matrix deaths;
  std::vector<double> final_cumulative_confirmed;  // per kept unit
  std::vector<std::string> dropped_units;          // roster units with no rows at all
  int clamped_values = 0;  // decreasing cumulative inputs raised to the running max
  std::vector<RowError> errors;
};

/// Reads `unit,date,confirmed_cumulative,deaths_cumulative`; missing days are
/// forward-filled from the last observation (zero before the first one); the
/// per-period value is the cumulative count at the last day of the period,
/// or the within-period increment in incident mode.
OutcomeTables aggregate_outcomes(const CsvTable& cases_csv,
                                 const std::vector<std::string>& roster_units,
                                 const PeriodCalendar& calendar, OutcomeMode mode);

struct CovariateTable {
  std::vector<std::string> keywords;  // sorted distinct keywords = columns
  std::vector<Matrix> x;              // T matrices of n x d, standardized
  int missing_series = 0;             // (unit, keyword) pairs never observed
  std::vector<RowError> errors;
};

/// Per-period daily means per keyword, before standardization.
std::vector<Matrix> covariate_period_means(const CsvTable& trends_csv,
                                           const std::vector<std::string>& units,
                                           const PeriodCalendar& calendar,
                                           std::vector<std::string>& keywords_out,
                                           int& missing_series_out,
                                           std::vector<RowError>& errors_out);

/// Standardizes each column to zero mean and unit variance across all
/// unit-periods (in place). Zero-variance columns become all zeros.
void standardize_columns(std::vector<Matrix>& x);

/// Reads `unit,date,keyword,popularity` and returns standardized per-period
/// covariates. The keyword set (hence d_x) is data-driven.
CovariateTable aggregate_covariates(const CsvTable& trends_csv,
                                    const std::vector<std::string>& units,
                                    const PeriodCalendar& calendar);

struct SplitAssignment {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
  std::uint64_t seed = 0;
};

/// Random 60/20/20 split; validation and test sizes are floor(0.2 n), the
/// remainder goes to train. Deterministic given the seed.
SplitAssignment split_units(int n, std::uint64_t seed);

/// The assembled panel. Immutable and share-safe once built.
struct PanelDataset {
  std::vector<std::string> unit_ids;
  PeriodCalendar calendar;
  std::vector<Matrix> covariates;  // T of n x d_x, standardized
  std::vector<std::string> covariate_names;
  std::map<std::string, Matrix> type_treatments;      // T x n in {0,1}
  std::map<std::string, Matrix> category_treatments;  // T x n in {0,1}
  std::map<std::string, std::string> policy_category;
  Matrix y_confirmed;  // T x n
  Matrix y_deaths;     // T x n
  OutcomeMode outcome_mode = OutcomeMode::cumulative;
  std::vector<double> final_cumulative_confirmed;

  int n() const { return static_cast<int>(unit_ids.size()); }
  int periods() const { return calendar.periods(); }
  int dx() const { return covariates.empty() ? 0 : covariates.front().cols(); }

  /// Treatment matrix by selector: exact policy type first, then category.
  const Matrix* find_treatment(const std::string& selector) const;

  /// Checks the structural invariants; throws DataError on violation.
  void validate() const;
};

/// Flat numeric view of one (policy, outcome) choice, the shape the model,
/// estimator and baselines consume.
struct TrainingPanel {
  std::vector<std::string> unit_ids;
  std::vector<Matrix> x;  // T of n x d_x
  Matrix c;               // T x n binary
  Matrix y;               // T x n, original outcome units
  std::vector<double> final_confirmed;
  int n = 0;
  int T = 0;
  int d_x = 0;
};

TrainingPanel make_training_panel(const PanelDataset& dataset, const std::string& policy_selector,
                                  OutcomeKind kind);

/// Pearson correlation of two equal-length series; returns NaN when either
/// side has zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

struct DependencyBucket {
  double mean_outcome_corr = 0.0;
  double mean_covariate_corr = 0.0;
  double mean_distance_km = 0.0;
  double mean_flow_weight = 0.0;
  int pairs = 0;
  int pairs_with_distance = 0;
  int pairs_with_flow = 0;
};

struct DependencyReport {
  std::vector<DependencyBucket> buckets;
  int anchors_used = 0;
  int skipped_zero_variance = 0;
};

/// For each anchor unit, ranks all units by the Pearson correlation of their
/// outcome series against the anchor (ascending) and averages, per decile
/// bucket, the outcome correlation, covariate correlation, pair distance and
/// pair mobility weight. Bucket rows are then averaged over anchors.
DependencyReport pearson_dependency_report(const PanelDataset& dataset,
                                           const TemporalGraph* distance_graph,
                                           const TemporalGraph* mobility_graph,
                                           const std::vector<int>& anchors = {},
                                           int bucket_count = 10);

}  // namespace deconf
