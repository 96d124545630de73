#include "cfms/constraints.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "cfms/csv.hpp"
#include "cfms/errors.hpp"

namespace cfms::constraints {

Term Term::make_literal(double v) {
  Term t;
  t.kind = Kind::Literal;
  t.literal = v;
  return t;
}

Term Term::make_cell(CellRef c) {
  Term t;
  t.kind = Kind::Cell;
  t.cell = c;
  return t;
}

Term Term::make_neg(Term inner) {
  Term t;
  t.kind = Kind::Neg;
  t.inner = std::make_shared<const Term>(std::move(inner));
  return t;
}

Term Term::make_abs(Term inner) {
  Term t;
  t.kind = Kind::Abs;
  t.inner = std::make_shared<const Term>(std::move(inner));
  return t;
}

int Term::wrapper_depth() const {
  if (kind == Kind::Neg || kind == Kind::Abs) return 1 + inner->wrapper_depth();
  return 0;
}

bool Term::contains_cell() const {
  if (kind == Kind::Cell) return true;
  if (inner) return inner->contains_cell();
  return false;
}

std::optional<double> Term::fold_constant() const {
  switch (kind) {
    case Kind::Literal: return literal;
    case Kind::Cell: return std::nullopt;
    case Kind::Neg: {
      auto v = inner->fold_constant();
      if (v) return -*v;
      return std::nullopt;
    }
    case Kind::Abs: {
      auto v = inner->fold_constant();
      if (v) return std::abs(*v);
      return std::nullopt;
    }
  }
  return std::nullopt;
}

namespace {

// ---------------------------------------------------------------------------
// Lexer. Line-oriented: each relation occupies one line, so the tokenizer is
// re-run per line with 1-based column tracking.
// ---------------------------------------------------------------------------

struct Token {
  enum class Kind { Name, Number, Op, LBracket, RBracket, LParen, RParen, Comma, Pipe, Minus, End };
  Kind kind = Kind::End;
  std::string text;
  double number = 0.0;
  int column = 0;
};

class LineLexer {
 public:
  LineLexer(const std::string& line, int line_no) : line_(line), line_no_(line_no) {}

  Token next() {
    skip_space();
    Token t;
    t.column = static_cast<int>(pos_) + 1;
    if (pos_ >= line_.size() || line_[pos_] == '#') {
      t.kind = Token::Kind::End;
      return t;
    }
    const char c = line_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < line_.size() &&
             (std::isalnum(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '_' ||
              line_[pos_] == '-')) {
        // names admit '-' so model identifiers like two-factor work, but a
        // bare "L" followed by '[' must stop before the bracket
        if (line_[pos_] == '-' && pos_ + 1 < line_.size() && line_[pos_ + 1] == '|') break;
        ++pos_;
      }
      t.kind = Token::Kind::Name;
      t.text = line_.substr(start, pos_ - start);
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      size_t start = pos_;
      while (pos_ < line_.size() &&
             (std::isdigit(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '.' ||
              line_[pos_] == 'e' || line_[pos_] == 'E' ||
              ((line_[pos_] == '+' || line_[pos_] == '-') && pos_ > start &&
               (line_[pos_ - 1] == 'e' || line_[pos_ - 1] == 'E')))) {
        ++pos_;
      }
      t.kind = Token::Kind::Number;
      t.text = line_.substr(start, pos_ - start);
      try {
        size_t used = 0;
        t.number = std::stod(t.text, &used);
        if (used != t.text.size()) throw std::invalid_argument("trailing");
      } catch (...) {
        throw_error(t.column, "malformed number '" + t.text + "'");
      }
      return t;
    }
    if (c == '<' || c == '>' || c == '=' || c == '~') {
      size_t start = pos_;
      while (pos_ < line_.size() && (line_[pos_] == '<' || line_[pos_] == '>' || line_[pos_] == '=' ||
                                     line_[pos_] == '~')) {
        ++pos_;
      }
      t.kind = Token::Kind::Op;
      t.text = line_.substr(start, pos_ - start);
      return t;
    }
    ++pos_;
    switch (c) {
      case '[': t.kind = Token::Kind::LBracket; return t;
      case ']': t.kind = Token::Kind::RBracket; return t;
      case '(': t.kind = Token::Kind::LParen; return t;
      case ')': t.kind = Token::Kind::RParen; return t;
      case ',': t.kind = Token::Kind::Comma; return t;
      case '|': t.kind = Token::Kind::Pipe; return t;
      case '-': t.kind = Token::Kind::Minus; return t;
      default: throw_error(t.column, std::string("unexpected character '") + c + "'");
    }
    return t;  // unreachable
  }

  [[noreturn]] void throw_error(int column, const std::string& msg) const {
    throw ParseError{line_no_, column, msg};
  }

 private:
  void skip_space() {
    while (pos_ < line_.size() && (line_[pos_] == ' ' || line_[pos_] == '\t')) ++pos_;
  }
  const std::string& line_;
  int line_no_;
  size_t pos_ = 0;
};

class LineParser {
 public:
  LineParser(const std::string& line, int line_no) : lexer_(line, line_no), line_no_(line_no) {
    advance();
  }

  bool at_end() const { return cur_.kind == Token::Kind::End; }
  const Token& current() const { return cur_; }

  Relation parse_relation() {
    Relation rel;
    rel.line = line_no_;
    rel.lhs = parse_term();
    parse_op(rel);
    rel.rhs = parse_term();
    if (!at_end()) fail("unexpected trailing input");
    check_depth(rel.lhs);
    check_depth(rel.rhs);
    return rel;
  }

  std::string parse_model_header() {
    // caller has checked the leading "model" name token
    advance();
    if (cur_.kind != Token::Kind::Name) fail("expected model name");
    std::string name = cur_.text;
    advance();
    if (!at_end()) fail("unexpected input after model name");
    return name;
  }

 private:
  void advance() { cur_ = lexer_.next(); }

  [[noreturn]] void fail(const std::string& msg) const { lexer_.throw_error(cur_.column, msg); }

  void check_depth(const Term& t) const {
    if (t.wrapper_depth() > 2) {
      lexer_.throw_error(1, "negation/absolute-value nesting deeper than -|x| is not supported");
    }
  }

  Term parse_term() {
    if (cur_.kind == Token::Kind::Minus) {
      advance();
      return Term::make_neg(parse_atom());
    }
    return parse_atom();
  }

  Term parse_atom() {
    if (cur_.kind == Token::Kind::Pipe) {
      advance();
      Term inner = parse_abs_inner();
      if (cur_.kind != Token::Kind::Pipe) fail("expected closing '|'");
      advance();
      return Term::make_abs(std::move(inner));
    }
    return parse_leaf_or_neg(false);
  }

  Term parse_abs_inner() { return parse_leaf_or_neg(true); }

  Term parse_leaf_or_neg(bool allow_neg) {
    if (allow_neg && cur_.kind == Token::Kind::Minus) {
      advance();
      return Term::make_neg(parse_leaf());
    }
    return parse_leaf();
  }

  Term parse_leaf() {
    if (cur_.kind == Token::Kind::Number) {
      Term t = Term::make_literal(cur_.number);
      advance();
      return t;
    }
    if (cur_.kind == Token::Kind::Name && cur_.text == "L") {
      advance();
      if (cur_.kind != Token::Kind::LBracket) fail("expected '[' after L");
      advance();
      CellRef ref;
      ref.item = parse_int("item index");
      if (cur_.kind != Token::Kind::Comma) fail("expected ',' in cell reference");
      advance();
      ref.factor = parse_int("factor index");
      if (cur_.kind != Token::Kind::RBracket) fail("expected ']' in cell reference");
      advance();
      return Term::make_cell(ref);
    }
    fail("expected a number, cell reference or |...|");
  }

  int parse_int(const char* what) {
    if (cur_.kind != Token::Kind::Number) fail(std::string("expected ") + what);
    const double v = cur_.number;
    const int i = static_cast<int>(v);
    if (v != i || i < 1) fail(std::string(what) + " must be a positive integer");
    advance();
    return i;
  }

  void parse_op(Relation& rel) {
    if (cur_.kind != Token::Kind::Op) fail("expected a relation operator");
    const std::string op = cur_.text;
    const int op_col = cur_.column;
    if (op == "<") {
      rel.op = RelOp::LT;
    } else if (op == ">") {
      rel.op = RelOp::GT;
    } else if (op == "=") {
      rel.op = RelOp::EQ;
    } else if (op == "~=") {
      rel.op = RelOp::Approx;
      rel.delta = kDefaultApproxDelta;
    } else {
      lexer_.throw_error(op_col, "unknown operator '" + op + "'");
    }
    advance();
    if (rel.op == RelOp::Approx && cur_.kind == Token::Kind::LParen) {
      advance();
      if (cur_.kind != Token::Kind::Number) fail("expected tolerance after '~=('");
      rel.delta = cur_.number;
      if (!(rel.delta > 0.0)) fail("approximate-equality tolerance must be positive");
      advance();
      if (cur_.kind != Token::Kind::RParen) fail("expected ')' after tolerance");
      advance();
    }
  }

  LineLexer lexer_;
  int line_no_;
  Token cur_;
};

// Semantic pass: equality/approx shape rules and contradictory duplicates.
void check_semantics(const ConstraintSystem& system) {
  std::map<std::pair<std::string, std::string>, int> lt_seen;  // (lesser, greater) -> line
  std::map<std::string, std::pair<double, int>> eq_seen;       // cell -> (value, line)
  for (const Relation& rel : system.relations) {
    const bool lhs_const = !rel.lhs.contains_cell();
    const bool rhs_const = !rel.rhs.contains_cell();
    if (lhs_const && rhs_const) {
      throw ParseError{rel.line, 1, "relation references no loading cell"};
    }
    if (rel.op == RelOp::EQ || rel.op == RelOp::Approx) {
      if (!lhs_const && !rhs_const) {
        throw ParseError{rel.line, 1,
                         rel.op == RelOp::EQ ? "equality requires a literal on one side"
                                             : "approximate equality requires a literal on one side"};
      }
    }
    if (rel.op == RelOp::EQ) {
      // the cell side must be a bare (possibly negated) cell so it can be
      // matched against a fixed pattern cell
      const Term& cell_side = lhs_const ? rel.rhs : rel.lhs;
      const Term* t = &cell_side;
      if (t->kind == Term::Kind::Neg) t = t->inner.get();
      if (t->kind != Term::Kind::Cell) {
        throw ParseError{rel.line, 1, "equality must constrain a single loading cell"};
      }
      const double value = *(lhs_const ? rel.lhs.fold_constant() : rel.rhs.fold_constant());
      const double signed_value = cell_side.kind == Term::Kind::Neg ? -value : value;
      std::ostringstream key;
      key << "L[" << t->cell.item << "," << t->cell.factor << "]";
      auto it = eq_seen.find(key.str());
      if (it != eq_seen.end() && it->second.first != signed_value) {
        throw ParseError{rel.line, 1,
                         "contradicts equality on " + key.str() + " at line " +
                             std::to_string(it->second.second)};
      }
      eq_seen[key.str()] = {signed_value, rel.line};
    }
    if (rel.op == RelOp::LT || rel.op == RelOp::GT) {
      const std::string a = print(rel.lhs);
      const std::string b = print(rel.rhs);
      const auto key = rel.op == RelOp::LT ? std::make_pair(a, b) : std::make_pair(b, a);
      const auto flipped = std::make_pair(key.second, key.first);
      auto it = lt_seen.find(flipped);
      if (it != lt_seen.end()) {
        throw ParseError{rel.line, 1,
                         "contradicts the relation between the same terms at line " +
                             std::to_string(it->second)};
      }
      lt_seen.emplace(key, rel.line);
    }
  }
}

}  // namespace

ParseResult parse(const std::string& text) {
  ConstraintSystem system;
  system.source_text = text;
  try {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool saw_relation = false;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      LineParser parser(line, line_no);
      if (parser.at_end()) continue;  // blank or comment
      if (parser.current().kind == Token::Kind::Name && parser.current().text == "model") {
        if (saw_relation || !system.model_name.empty()) {
          throw ParseError{line_no, parser.current().column,
                           "model header must be the first non-comment line"};
        }
        system.model_name = parser.parse_model_header();
        continue;
      }
      system.relations.push_back(parser.parse_relation());
      saw_relation = true;
    }
    check_semantics(system);
  } catch (const ParseError& err) {
    return err;
  }
  return system;
}

ParseResult parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) return ParseError{0, 0, "cannot open constraint file: " + path};
  std::ostringstream buffer;
  buffer << in.rdbuf();
  ParseResult res = parse(buffer.str());
  if (auto* sys = std::get_if<ConstraintSystem>(&res); sys && sys->model_name.empty()) {
    // default the model name to the file stem
    std::string stem = path;
    if (auto slash = stem.find_last_of('/'); slash != std::string::npos) stem = stem.substr(slash + 1);
    if (auto dot = stem.find_last_of('.'); dot != std::string::npos) stem = stem.substr(0, dot);
    sys->model_name = stem;
  }
  return res;
}

std::string print(const Term& term) {
  switch (term.kind) {
    case Term::Kind::Literal: return format_double(term.literal);
    case Term::Kind::Cell:
      return "L[" + std::to_string(term.cell.item) + "," + std::to_string(term.cell.factor) + "]";
    case Term::Kind::Neg: return "-" + print(*term.inner);
    case Term::Kind::Abs: return "|" + print(*term.inner) + "|";
  }
  return "?";
}

std::string print(const Relation& rel) {
  std::string op;
  switch (rel.op) {
    case RelOp::LT: op = " < "; break;
    case RelOp::GT: op = " > "; break;
    case RelOp::EQ: op = " = "; break;
    case RelOp::Approx: op = " ~=(" + format_double(rel.delta) + ") "; break;
  }
  return print(rel.lhs) + op + print(rel.rhs);
}

std::string print(const ConstraintSystem& system) {
  std::ostringstream os;
  if (!system.model_name.empty()) os << "model " << system.model_name << "\n";
  for (const Relation& rel : system.relations) os << print(rel) << "\n";
  return os.str();
}

namespace {

void collect_cells(const Term& t, std::vector<CellRef>& out) {
  if (t.kind == Term::Kind::Cell) out.push_back(t.cell);
  if (t.inner) collect_cells(*t.inner, out);
}

}  // namespace

BindResult bind(const ConstraintSystem& system, const PatternMatrix& pattern) {
  BoundSystem bound;
  bound.name = system.model_name;
  bound.p = pattern.p();
  bound.m = pattern.m();
  bound.source_text = system.source_text;
  for (const Relation& rel : system.relations) {
    std::vector<CellRef> cells;
    collect_cells(rel.lhs, cells);
    collect_cells(rel.rhs, cells);
    for (const CellRef& c : cells) {
      if (c.item < 1 || c.item > pattern.p() || c.factor < 1 || c.factor > pattern.m()) {
        return BindError{rel.line, "L[" + std::to_string(c.item) + "," + std::to_string(c.factor) +
                                       "] is out of range for a " + std::to_string(pattern.p()) + "x" +
                                       std::to_string(pattern.m()) + " pattern"};
      }
    }
    if (rel.op == RelOp::EQ) {
      const bool lhs_const = !rel.lhs.contains_cell();
      const Term& cell_side = lhs_const ? rel.rhs : rel.lhs;
      const double value = *(lhs_const ? rel.lhs : rel.rhs).fold_constant();
      const Term* t = &cell_side;
      double sign = 1.0;
      if (t->kind == Term::Kind::Neg) {
        sign = -1.0;
        t = t->inner.get();
      }
      const double target = sign * value;  // cell must equal this
      const Cell& pc = pattern.at(t->cell.item - 1, t->cell.factor - 1);
      const bool matches =
          (pc.kind == CellKind::FixedZero && target == 0.0) ||
          (pc.kind == CellKind::FixedValue && std::abs(pc.value - target) <= 1e-12);
      if (!matches) {
        return BindError{rel.line,
                         "equality constraints must be part of the base UCFM pattern (L[" +
                             std::to_string(t->cell.item) + "," + std::to_string(t->cell.factor) +
                             "] is not fixed to " + format_double(target) + ")"};
      }
      bound.structural_relations.push_back(rel);
    } else {
      bound.mass_relations.push_back(rel);
    }
  }
  return bound;
}

std::string BoundSystem::fingerprint() const {
  std::ostringstream os;
  os << "bound:" << name << ";" << p << "x" << m << ";";
  for (const Relation& rel : mass_relations) os << print(rel) << ";";
  for (const Relation& rel : structural_relations) os << "s:" << print(rel) << ";";
  return os.str();
}

double evaluate_term(const Term& term, const Matrix& loadings) {
  switch (term.kind) {
    case Term::Kind::Literal: return term.literal;
    case Term::Kind::Cell: return loadings(term.cell.item - 1, term.cell.factor - 1);
    case Term::Kind::Neg: return -evaluate_term(*term.inner, loadings);
    case Term::Kind::Abs: return std::abs(evaluate_term(*term.inner, loadings));
  }
  return 0.0;
}

namespace {

double relation_margin(const Relation& rel, const Matrix& loadings) {
  const double l = evaluate_term(rel.lhs, loadings);
  const double r = evaluate_term(rel.rhs, loadings);
  switch (rel.op) {
    case RelOp::LT: return r - l;
    case RelOp::GT: return l - r;
    case RelOp::Approx: return rel.delta - std::abs(l - r);
    case RelOp::EQ: return 0.0;  // structural, never evaluated as mass
  }
  return 0.0;
}

}  // namespace

bool evaluate(const BoundSystem& bound, const Matrix& loadings) {
  for (const Relation& rel : bound.mass_relations) {
    if (!(relation_margin(rel, loadings) > 0.0)) return false;
  }
  return true;
}

double slack(const BoundSystem& bound, const Matrix& loadings) {
  double min_margin = std::numeric_limits<double>::infinity();
  for (const Relation& rel : bound.mass_relations) {
    min_margin = std::min(min_margin, relation_margin(rel, loadings));
  }
  return min_margin;
}

}  // namespace cfms::constraints
