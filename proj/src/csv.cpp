#include "cfms/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cfms/errors.hpp"

namespace cfms {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_field(const std::string& field, const std::string& path, int line_no) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
  if (begin == end) {
    throw usage_error(path + ":" + std::to_string(line_no) + ": empty field (missing data is rejected)");
  }
  double value = 0.0;
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw usage_error(path + ":" + std::to_string(line_no) + ": not a number: '" +
                      std::string(begin, end) + "'");
  }
  return value;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw usage_error(path + ": empty file");
  Dataset out;
  out.item_names = split_line(line);
  const size_t p = out.item_names.size();
  if (p == 0 || out.item_names[0].empty()) throw usage_error(path + ": missing header row");

  std::vector<double> buffer;
  int n = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != p) {
      throw usage_error(path + ":" + std::to_string(line_no) + ": ragged row (" +
                        std::to_string(fields.size()) + " fields, expected " + std::to_string(p) + ")");
    }
    for (const auto& f : fields) buffer.push_back(parse_field(f, path, line_no));
    ++n;
  }
  out.values.resize(n, static_cast<int>(p));
  for (int i = 0; i < n; ++i)
    for (size_t j = 0; j < p; ++j) out.values(i, static_cast<int>(j)) = buffer[i * p + j];
  out.validate();
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Trim to the shortest representation that round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[40];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(shorter, "%lf", &back);
    if (back == v) return shorter;
  }
  return buf;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw usage_error("cannot write dataset file: " + path);
  for (size_t j = 0; j < data.item_names.size(); ++j) {
    if (j) out << ',';
    out << data.item_names[j];
  }
  out << '\n';
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.p(); ++j) {
      if (j) out << ',';
      out << format_double(data.values(i, j));
    }
    out << '\n';
  }
  if (!out) throw usage_error("write failed: " + path);
}

void write_table_csv(const std::string& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw usage_error("cannot write file: " + path);
  for (size_t j = 0; j < header.size(); ++j) {
    if (j) out << ',';
    out << header[j];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << format_double(row[j]);
    }
    out << '\n';
  }
  if (!out) throw usage_error("write failed: " + path);
}

}  // namespace cfms
