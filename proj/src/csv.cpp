#include "deconf/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "deconf/error.hpp"

namespace deconf {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  return out;
}

}  // namespace

CsvTable CsvTable::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

CsvTable CsvTable::parse(const std::string& content, const std::string& name) {
  CsvTable t;
  t.name_ = name;
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(name + ": empty file, header required");
  t.header_ = split_line(line);
  for (int i = 0; i < static_cast<int>(t.header_.size()); ++i)
    t.column_index_[t.header_[static_cast<std::size_t>(i)]] = i;

  const std::size_t width = t.header_.size();
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() != width)
      throw SchemaError(name + ": line " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " fields, header has " +
                        std::to_string(width));
    t.rows_.push_back(std::move(cells));
  }
  return t;
}

int CsvTable::column(const std::string& name) const {
  auto it = column_index_.find(name);
  if (it == column_index_.end())
    throw SchemaError(name_ + ": missing required column '" + name + "'");
  return it->second;
}

bool CsvTable::has_column(const std::string& name) const { return column_index_.count(name) > 0; }

double parse_double(const std::string& text) {
  if (text.empty()) throw DataError("empty numeric field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (errno != 0 || end != text.c_str() + text.size())
    throw DataError("invalid number '" + text + "'");
  return v;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size())
    throw DataError("csv row width " + std::to_string(cells.size()) + " != header width " +
                    std::to_string(header_.size()));
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line.push_back(',');
    line += cells[i];
  }
  lines_.push_back(std::move(line));
}

std::string CsvWriter::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (i) out.push_back(',');
    out += header_[i];
  }
  out.push_back('\n');
  for (const std::string& l : lines_) {
    out += l;
    out.push_back('\n');
  }
  return out;
}

void CsvWriter::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write file '" + path + "'");
  out << to_string();
}

std::string CsvWriter::format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace deconf
