#include "cfms/identify.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cfms/csv.hpp"
#include "cfms/errors.hpp"

namespace cfms::ident {

namespace {

// Kuhn augmenting-path matching; sizes here are tiny (p x m).
struct Matcher {
  int n_right;
  std::vector<std::vector<int>> adj;  // left -> right candidates
  std::vector<int> match_right;
  std::vector<char> visited;

  explicit Matcher(int left, int right) : n_right(right), adj(left), match_right(right, -1) {}

  bool try_augment(int u) {
    for (int v : adj[u]) {
      if (visited[v]) continue;
      visited[v] = 1;
      if (match_right[v] < 0 || try_augment(match_right[v])) {
        match_right[v] = u;
        return true;
      }
    }
    return false;
  }

  int max_matching() {
    int matched = 0;
    for (size_t u = 0; u < adj.size(); ++u) {
      visited.assign(n_right, 0);
      if (try_augment(static_cast<int>(u))) ++matched;
    }
    return matched;
  }
};

bool structurally_nonzero(const Cell& c) {
  return c.kind == CellKind::Free || c.kind == CellKind::PositiveAnchor ||
         (c.kind == CellKind::FixedValue && c.value != 0.0);
}

}  // namespace

int structural_rank_of_zero_block(const PatternMatrix& pattern, int column) {
  const std::vector<int> rows = pattern.zero_rows_of_column(column);
  std::vector<int> cols;
  for (int j = 0; j < pattern.m(); ++j)
    if (j != column) cols.push_back(j);
  Matcher matcher(static_cast<int>(rows.size()), static_cast<int>(cols.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < cols.size(); ++c) {
      if (structurally_nonzero(pattern.at(rows[r], cols[c]))) {
        matcher.adj[r].push_back(static_cast<int>(c));
      }
    }
  }
  return matcher.max_matching();
}

IdentificationReport check_ucfm(const PatternMatrix& pattern) {
  pattern.validate();
  const int p = pattern.p();
  const int m = pattern.m();
  IdentificationReport report;

  report.c1_scaling.pass = true;
  report.c1_scaling.note = "factor scale fixed by the unit-diagonal correlation metric";

  for (int j = 0; j < m; ++j) {
    const auto zeros = pattern.zero_rows_of_column(j);
    if (static_cast<int>(zeros.size()) < m - 1) {
      report.c2_zero_count.pass = false;
      report.c2_zero_count.violating_columns.push_back(j + 1);
    }
    if (structural_rank_of_zero_block(pattern, j) < m - 1) {
      report.c3_rank.pass = false;
      report.c3_rank.violating_columns.push_back(j + 1);
    }
    const auto anchors = pattern.anchor_rows_of_column(j);
    if (anchors.size() != 1) {
      report.c4_anchors.pass = false;
      report.c4_anchors.violating_columns.push_back(j + 1);
    }
  }
  report.c2_zero_count.note = "each column needs at least m-1 fixed zeros";
  report.c3_rank.note = "zero-row block of each column must have structural rank m-1";
  report.c4_anchors.note = "each column needs exactly one positive anchor among its free cells";

  // Permutation amendment: at the minimal zero count, two columns sharing the
  // same zero-row set leave a column swap that preserves the pattern.
  for (int j = 0; j < m; ++j) {
    for (int k = j + 1; k < m; ++k) {
      const auto zj = pattern.zero_rows_of_column(j);
      const auto zk = pattern.zero_rows_of_column(k);
      if (zj == zk && static_cast<int>(zj.size()) == m - 1 && m > 1) {
        report.distinct_row_sets.pass = false;
        report.distinct_row_sets.violating_columns.push_back(j + 1);
        report.distinct_row_sets.violating_columns.push_back(k + 1);
      }
    }
  }
  std::sort(report.distinct_row_sets.violating_columns.begin(),
            report.distinct_row_sets.violating_columns.end());
  report.distinct_row_sets.violating_columns.erase(
      std::unique(report.distinct_row_sets.violating_columns.begin(),
                  report.distinct_row_sets.violating_columns.end()),
      report.distinct_row_sets.violating_columns.end());
  report.distinct_row_sets.note =
      "columns at the minimal zero count must use distinct zero-row sets";

  report.free_parameter_count = pattern.free_cell_count() + p + m * (m - 1) / 2;
  report.covariance_dof = p * (p + 1) / 2;
  report.ledermann_warning = report.free_parameter_count > report.covariance_dof;

  report.overall = report.c1_scaling.pass && report.c2_zero_count.pass && report.c3_rank.pass &&
                   report.c4_anchors.pass && report.distinct_row_sets.pass;
  return report;
}

PatternMatrix read_pattern_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open pattern file: " + path);
  std::vector<std::vector<Cell>> grid;
  std::string line;
  int line_no = 0;
  size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::vector<Cell> row;
    std::string tok;
    while (ls >> tok) {
      Cell cell;
      if (tok == "*") {
        cell.kind = CellKind::Free;
      } else if (tok == "+") {
        cell.kind = CellKind::PositiveAnchor;
      } else {
        try {
          size_t used = 0;
          const double v = std::stod(tok, &used);
          if (used != tok.size()) throw std::invalid_argument("trailing");
          if (v == 0.0) {
            cell.kind = CellKind::FixedZero;
          } else {
            cell.kind = CellKind::FixedValue;
            cell.value = v;
          }
        } catch (...) {
          throw usage_error(path + ":" + std::to_string(line_no) + ": bad pattern token '" + tok + "'");
        }
      }
      row.push_back(cell);
    }
    if (row.empty()) continue;
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw usage_error(path + ":" + std::to_string(line_no) + ": ragged pattern row");
    }
    grid.push_back(std::move(row));
  }
  if (grid.empty()) throw usage_error(path + ": empty pattern file");
  PatternMatrix pattern(static_cast<int>(grid.size()), static_cast<int>(width));
  for (size_t i = 0; i < grid.size(); ++i)
    for (size_t j = 0; j < width; ++j) pattern.at(static_cast<int>(i), static_cast<int>(j)) = grid[i][j];
  pattern.validate();
  return pattern;
}

void write_pattern_file(const PatternMatrix& pattern, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw usage_error("cannot write pattern file: " + path);
  for (int i = 0; i < pattern.p(); ++i) {
    for (int j = 0; j < pattern.m(); ++j) {
      if (j) out << ' ';
      const Cell& c = pattern.at(i, j);
      switch (c.kind) {
        case CellKind::Free: out << '*'; break;
        case CellKind::FixedZero: out << '0'; break;
        case CellKind::PositiveAnchor: out << '+'; break;
        case CellKind::FixedValue: out << format_double(c.value); break;
      }
    }
    out << '\n';
  }
}

}  // namespace cfms::ident
