#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cfms/core.hpp"

// The .fcs constraint language: one relation per line, '#' comments, an
// optional leading "model <name>" line. Relations place inequality,
// absolute-value and approximate-equality restrictions on loading cells;
// plain equalities are structural and must coincide with fixed cells of the
// base pattern they are bound against.

namespace cfms::constraints {

struct CellRef {
  int item = 0;    // 1-based
  int factor = 0;  // 1-based
};

struct Term {
  enum class Kind { Literal, Cell, Neg, Abs };
  Kind kind = Kind::Literal;
  double literal = 0.0;
  CellRef cell;
  std::shared_ptr<const Term> inner;

  static Term make_literal(double v);
  static Term make_cell(CellRef c);
  static Term make_neg(Term t);
  static Term make_abs(Term t);

  // Depth of the Neg/Abs wrapper chain; the grammar caps it at 2 (-|x|).
  int wrapper_depth() const;
  bool contains_cell() const;
  // Value of a cell-free term, or nullopt.
  std::optional<double> fold_constant() const;
};

enum class RelOp { LT, GT, EQ, Approx };

struct Relation {
  Term lhs;
  RelOp op = RelOp::LT;
  double delta = 0.0;  // Approx tolerance
  Term rhs;
  int line = 0;
};

struct ConstraintSystem {
  std::string model_name;
  std::vector<Relation> relations;
  std::string source_text;
};

struct ParseError {
  int line = 0;
  int column = 0;
  std::string message;
};

using ParseResult = std::variant<ConstraintSystem, ParseError>;

ParseResult parse(const std::string& text);
ParseResult parse_file(const std::string& path);

// Canonical text form; parse(print(parse(x))) == parse(x).
std::string print(const ConstraintSystem& system);
std::string print(const Term& term);
std::string print(const Relation& relation);

struct BindError {
  int line = 0;
  std::string message;
};

// A system attached to a base pattern: mass relations (inequalities and
// approximate equalities, checked against posterior/prior draws) separated
// from structural equalities (absorbed by the pattern itself).
struct BoundSystem {
  std::string name;
  int p = 0;
  int m = 0;
  std::vector<Relation> mass_relations;
  std::vector<Relation> structural_relations;
  std::string source_text;

  // Stable serialization for content-addressed seeding.
  std::string fingerprint() const;
};

using BindResult = std::variant<BoundSystem, BindError>;

BindResult bind(const ConstraintSystem& system, const PatternMatrix& pattern);

double evaluate_term(const Term& term, const Matrix& loadings);

// True iff every mass relation holds with strict semantics (ties are false).
bool evaluate(const BoundSystem& bound, const Matrix& loadings);

// Minimal margin by which the mass relations hold; negative when violated,
// +infinity for an empty system. Perturbing every loading by less than half
// the slack cannot change a satisfied system.
double slack(const BoundSystem& bound, const Matrix& loadings);

constexpr double kDefaultApproxDelta = 0.1;

}  // namespace cfms::constraints
