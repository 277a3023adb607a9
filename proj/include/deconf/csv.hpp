#pragma once

#include <map>
#include <string>
#include <vector>

namespace deconf {

/// Minimal CSV table: comma-separated, first line is a required header,
/// UTF-8, no quoting (none of the ingested formats need it).
class CsvTable {
 public:
  static CsvTable read_file(const std::string& path);
  static CsvTable parse(const std::string& content, const std::string& name);

  /// Column index; throws SchemaError naming the column if absent.
  int column(const std::string& name) const;
  bool has_column(const std::string& name) const;

  int row_count() const { return static_cast<int>(rows_.size()); }
  /// 1-based line number of a data row in the source file (header is line 1).
  int line_number(int row) const { return row + 2; }
  const std::vector<std::string>& row(int i) const { return rows_[static_cast<std::size_t>(i)]; }
  const std::string& cell(int row, int col) const {
    return rows_[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
  }
  const std::vector<std::string>& header() const { return header_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::vector<std::string> header_;
  std::map<std::string, int> column_index_;
  std::vector<std::vector<std::string>> rows_;
};

/// Parses a double; throws DataError with the offending text on failure.
double parse_double(const std::string& text);

/// Buffered CSV writer with deterministic %.17g number formatting, so that
/// round trips through text preserve doubles exactly.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& cells);
  void write_file(const std::string& path) const;
  std::string to_string() const;

  static std::string format(double v);

 private:
  std::vector<std::string> header_;
  std::vector<std::string> lines_;
};

}  // namespace deconf
