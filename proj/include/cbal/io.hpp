#pragma once
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cbal/config.hpp"
#include "cbal/problem.hpp"
#include "cbal/solver.hpp"
#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// Text formats: the problem document, the flat key-value config file, and
// the delimited trace table. Parse errors carry line and column.
// =======================================================================

struct ParseError : SolverError {
  int line = 0, col = 0;
  ParseError(int line_, int col_, const std::string& msg)
      : SolverError("line " + std::to_string(line_) + ", column " +
                    std::to_string(col_) + ": " + msg),
        line(line_),
        col(col_) {}
};

namespace detail {

struct Token {
  std::string text;
  int line = 0, col = 0;
};

// Tokenize with '#' comments; every token remembers its position.
inline std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::string cur;
  int tline = 0, tcol = 0;
  bool comment = false;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back({cur, tline, tcol});
      cur.clear();
    }
  };
  for (char ch : text) {
    if (ch == '\n') {
      flush();
      comment = false;
      ++line;
      col = 1;
      continue;
    }
    if (comment) {
      ++col;
      continue;
    }
    if (ch == '#') {
      flush();
      comment = true;
      ++col;
      continue;
    }
    if (ch == ' ' || ch == '\t' || ch == '\r') {
      flush();
    } else {
      if (cur.empty()) {
        tline = line;
        tcol = col;
      }
      cur.push_back(ch);
    }
    ++col;
  }
  flush();
  return out;
}

class TokenReader {
 public:
  explicit TokenReader(std::vector<Token> toks) : toks_(std::move(toks)) {}

  bool done() const { return pos_ >= toks_.size(); }

  const Token& peek() const {
    if (done()) throw ParseError(last_line(), 1, "unexpected end of input");
    return toks_[pos_];
  }

  Token next() {
    const Token t = peek();
    ++pos_;
    return t;
  }

  double number(const char* what) {
    const Token t = next();
    char* end = nullptr;
    const double v = std::strtod(t.text.c_str(), &end);
    if (end != t.text.c_str() + t.text.size())
      throw ParseError(t.line, t.col, std::string("expected ") + what +
                                          ", got '" + t.text + "'");
    return v;
  }

  long integer(const char* what) {
    const Token t = peek();
    char* end = nullptr;
    const long v = std::strtol(t.text.c_str(), &end, 10);
    if (end != t.text.c_str() + t.text.size())
      throw ParseError(t.line, t.col, std::string("expected ") + what +
                                          ", got '" + t.text + "'");
    ++pos_;
    return v;
  }

  void expect(const char* lit) {
    const Token t = next();
    if (t.text != lit)
      throw ParseError(t.line, t.col, std::string("expected '") + lit +
                                          "', got '" + t.text + "'");
  }

  int last_line() const {
    return toks_.empty() ? 1 : toks_.back().line;
  }

 private:
  std::vector<Token> toks_;
  size_t pos_ = 0;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Problem document: one record per line (comments with '#').
//   n <dim>
//   f <n reals>                     (required once)
//   u <n reals>                     (required once)
//   G <n weights> | <offset>        (affine inequality, repeatable)
//   H <n weights> | <offset>        (affine equality, repeatable)
//   F sumsquare a <affine> c <affine>
//   F productform a <affine> b <affine> c <affine>
// where <affine> is n weights, '|', then the offset.
inline Problem parse_problem(const std::string& text) {
  detail::TokenReader rd(detail::tokenize(text));
  Problem p;
  bool have_n = false, have_f = false, have_u = false;

  auto read_vec = [&](const char* what) {
    Vec v(p.n);
    for (int j = 0; j < p.n; ++j) v[j] = rd.number(what);
    return v;
  };
  auto read_affine = [&](const char* what) {
    AffineForm a;
    a.weights = read_vec(what);
    rd.expect("|");
    a.offset = rd.number("offset");
    return a;
  };
  auto need_n = [&](const detail::Token& t) {
    if (!have_n)
      throw ParseError(t.line, t.col,
                       "the dimension record 'n' must come first");
  };

  while (!rd.done()) {
    const detail::Token t = rd.next();
    if (t.text == "n") {
      if (have_n)
        throw ParseError(t.line, t.col, "duplicate dimension record 'n'");
      const long n = rd.integer("dimension");
      if (n < 1)
        throw ParseError(t.line, t.col, "dimension must be positive");
      p.n = static_cast<int>(n);
      have_n = true;
    } else if (t.text == "f") {
      need_n(t);
      if (have_f) throw ParseError(t.line, t.col, "duplicate cost record");
      p.f = read_vec("cost entry");
      have_f = true;
    } else if (t.text == "u") {
      need_n(t);
      if (have_u) throw ParseError(t.line, t.col, "duplicate bound record");
      p.u = read_vec("bound entry");
      have_u = true;
    } else if (t.text == "G") {
      need_n(t);
      p.G.rows.push_back(read_affine("inequality weight"));
    } else if (t.text == "H") {
      need_n(t);
      p.H.rows.push_back(read_affine("equality weight"));
    } else if (t.text == "F") {
      need_n(t);
      const detail::Token kind = rd.next();
      QuadraticConstraint q;
      if (kind.text == "sumsquare") {
        q.kind = QuadKind::SumSquare;
        rd.expect("a");
        q.a = read_affine("form a weight");
        rd.expect("c");
        q.c = read_affine("form c weight");
        q.b.weights = Vec::Zero(p.n);
      } else if (kind.text == "productform") {
        q.kind = QuadKind::ProductForm;
        rd.expect("a");
        q.a = read_affine("form a weight");
        rd.expect("b");
        q.b = read_affine("form b weight");
        rd.expect("c");
        q.c = read_affine("form c weight");
      } else {
        throw ParseError(kind.line, kind.col,
                         "unknown quadratic constraint kind '" + kind.text +
                             "' (expected sumsquare or productform)");
      }
      p.F.push_back(std::move(q));
    } else {
      throw ParseError(t.line, t.col,
                       "unknown record '" + t.text +
                           "' (expected n, f, u, F, G, or H)");
    }
  }
  if (!have_n) throw ParseError(rd.last_line(), 1, "missing dimension record");
  if (!have_f) throw ParseError(rd.last_line(), 1, "missing cost record");
  if (!have_u) throw ParseError(rd.last_line(), 1, "missing bound record");
  return p;
}

inline std::string serialize_problem(const Problem& p) {
  std::ostringstream os;
  auto put_vec = [&](const Vec& v) {
    for (int j = 0; j < v.size(); ++j)
      os << (j ? " " : "") << detail::format_double(v[j]);
  };
  auto put_affine = [&](const AffineForm& a) {
    put_vec(a.weights);
    os << " | " << detail::format_double(a.offset);
  };
  os << "n " << p.n << "\n";
  os << "f ";
  put_vec(p.f);
  os << "\nu ";
  put_vec(p.u);
  os << "\n";
  for (const auto& q : p.F) {
    os << "F " << quad_kind_name(q.kind) << " a ";
    put_affine(q.a);
    if (q.kind == QuadKind::ProductForm) {
      os << " b ";
      put_affine(q.b);
    }
    os << " c ";
    put_affine(q.c);
    os << "\n";
  }
  for (const auto& g : p.G.rows) {
    os << "G ";
    put_affine(g);
    os << "\n";
  }
  for (const auto& h : p.H.rows) {
    os << "H ";
    put_affine(h);
    os << "\n";
  }
  return os.str();
}

// Flat key-value config file; '#' comments; unknown keys are errors.
inline void parse_config_into(const std::string& text, SolverConfig& cfg) {
  detail::TokenReader rd(detail::tokenize(text));
  auto family_index = [](const std::string& key, const char* prefix) {
    const std::string suffix = key.substr(std::string(prefix).size());
    for (int fam = 0; fam < FAM_COUNT; ++fam) {
      std::string name = kFamilyNames[fam];
      for (char& ch : name) ch = static_cast<char>(std::tolower(ch));
      if (suffix == name) return fam;
    }
    return -1;
  };
  while (!rd.done()) {
    const detail::Token key = rd.next();
    const std::string& k = key.text;
    if (k == "rho") cfg.rho = rd.number("value");
    else if (k == "margin") cfg.margin = rd.number("value");
    else if (k == "big_gamma") cfg.big_gamma = rd.number("value");
    else if (k == "lambda_z") cfg.lambda_z = rd.number("value");
    else if (k == "dual_upper_mult") cfg.dual_upper_mult = rd.number("value");
    else if (k == "eps_slack") cfg.eps_slack = rd.number("value");
    else if (k == "cap_scale") cfg.cap_scale = rd.number("value");
    else if (k == "tau0") cfg.tau0 = rd.number("value");
    else if (k == "gamma0") cfg.gamma0 = rd.number("value");
    else if (k == "sigma2_0") cfg.sigma2_0 = rd.number("value");
    else if (k == "f_curvature_bound")
      cfg.f_curvature_bound = rd.number("value");
    else if (k == "target_range") cfg.target_range = rd.number("value");
    else if (k == "tol") cfg.tol = rd.number("value");
    else if (k == "max_iter") cfg.max_iter = rd.integer("value");
    else if (k == "inner_tol") cfg.inner_tol = rd.number("value");
    else if (k == "inner_cap")
      cfg.inner_cap = static_cast<int>(rd.integer("value"));
    else if (k == "scale") {
      const detail::Token v = rd.next();
      if (v.text == "true" || v.text == "1") cfg.scale = true;
      else if (v.text == "false" || v.text == "0") cfg.scale = false;
      else
        throw ParseError(v.line, v.col,
                         "expected true/false, got '" + v.text + "'");
    } else if (k == "mode") {
      const detail::Token v = rd.next();
      if (v.text == "seq") cfg.mode = ExecMode::Sequential;
      else if (v.text == "par") cfg.mode = ExecMode::ParallelBlocks;
      else
        throw ParseError(v.line, v.col,
                         "expected seq or par, got '" + v.text + "'");
    } else if (k.rfind("lambda_", 0) == 0 &&
               family_index(k, "lambda_") >= 0) {
      cfg.lambda[family_index(k, "lambda_")] = rd.number("value");
    } else if (k.rfind("alpha_", 0) == 0 && family_index(k, "alpha_") >= 0) {
      cfg.alpha[family_index(k, "alpha_")] = rd.number("value");
    } else if (k.rfind("dual_upper_", 0) == 0 &&
               family_index(k, "dual_upper_") >= 0) {
      cfg.dual_upper[family_index(k, "dual_upper_")] = rd.number("value");
    } else {
      throw ParseError(key.line, key.col, "unknown config key '" + k + "'");
    }
  }
}

// Delimited trace table. Column set and formatting are a documented
// contract: identical runs must produce byte-identical tables, so the
// wall-time field stays out.
inline std::string trace_csv(const std::vector<IterationTrace>& rows) {
  std::ostringstream os;
  os << "k,L,r_pX,r_nX,r_F,r_G,r_pH,r_nH,D,P,J,sigma1_active,slope\n";
  for (const IterationTrace& t : rows) {
    os << t.k << ',' << detail::format_double(t.L);
    for (int fam = 0; fam < FAM_COUNT; ++fam)
      os << ',' << detail::format_double(t.r[fam]);
    os << ',' << detail::format_double(t.D) << ','
       << detail::format_double(t.P) << ',' << detail::format_double(t.J)
       << ',' << t.sigma1_active << ',' << detail::format_double(t.slope)
       << '\n';
  }
  return os.str();
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SolverError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text_file(const std::string& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SolverError("cannot write file: " + path);
  out << content;
}

}  // namespace cbal
