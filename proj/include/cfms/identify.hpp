#pragma once

#include <string>
#include <vector>

#include "cfms/core.hpp"

namespace cfms::ident {

struct ConditionResult {
  bool pass = true;
  std::vector<int> violating_columns;  // 1-based
  std::string note;
};

// Rotational-uniqueness check for an oblique UCFM pattern. C1 scaling is
// fixed by the unit-diagonal correlation metric; C2/C3 are the classical
// per-column zero-count and rank conditions evaluated structurally; C4 plus
// the distinct-zero-row-set requirement remove the reflection and
// column-permutation ambiguities that the classical set leaves open.
struct IdentificationReport {
  ConditionResult c1_scaling;
  ConditionResult c2_zero_count;
  ConditionResult c3_rank;
  ConditionResult c4_anchors;
  ConditionResult distinct_row_sets;
  int free_parameter_count = 0;
  int covariance_dof = 0;
  bool ledermann_warning = false;
  bool overall = false;
};

IdentificationReport check_ucfm(const PatternMatrix& pattern);

// Generic rank of the pattern submatrix (rows with a fixed zero in column j,
// all columns except j) over numeric realizations of the free cells.
int structural_rank_of_zero_block(const PatternMatrix& pattern, int column);

// Pattern grid files: one row per item, whitespace-separated tokens
// '*' (free), '0' (fixed zero), '+' (positive anchor), or a numeric literal
// (fixed value). '#' starts a comment.
PatternMatrix read_pattern_file(const std::string& path);
void write_pattern_file(const PatternMatrix& pattern, const std::string& path);

}  // namespace cfms::ident
