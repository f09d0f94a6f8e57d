#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "absred/errors.hpp"
#include "absred/state_space.hpp"

namespace absred {

// ============================================================================
// Shared repo-wide StateSpace text format:
//   header line  `ss n m p`
//   then A, B, C, D as whitespace-separated row-major blocks
//   `#` starts a comment (rest of line ignored)
// Round-trips losslessly at 17 significant digits.
// ============================================================================

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

// Token stream that skips `#` comments.
class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string next() {
    std::string tok;
    while (tok.empty()) {
      if (!(in_ >> tok)) throw ParseError("statespace format: unexpected end of input");
      if (!tok.empty() && tok[0] == '#') {
        std::string rest;
        std::getline(in_, rest);
        tok.clear();
      }
    }
    return tok;
  }

  bool try_next(std::string& tok) {
    tok.clear();
    while (tok.empty()) {
      if (!(in_ >> tok)) return false;
      if (!tok.empty() && tok[0] == '#') {
        std::string rest;
        std::getline(in_, rest);
        tok.clear();
      }
    }
    return true;
  }

  double next_double() {
    std::string tok = next();
    try {
      std::size_t pos = 0;
      double v = std::stod(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      throw ParseError("statespace format: expected a number, got '" + tok + "'");
    }
  }

  long next_index() {
    std::string tok = next();
    try {
      std::size_t pos = 0;
      long v = std::stol(tok, &pos);
      if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      throw ParseError("statespace format: expected a nonnegative integer, got '" + tok + "'");
    }
  }

 private:
  std::istream& in_;
};

inline Matrix read_matrix(TokenReader& tr, Eigen::Index rows, Eigen::Index cols) {
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = tr.next_double();
  return M;
}

inline void write_matrix(std::ostream& out, const Matrix& M, const char* name) {
  out << "# " << name << " (" << M.rows() << "x" << M.cols() << ")\n";
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) out << ' ';
      out << format_double(M(i, j));
    }
    out << '\n';
  }
}

}  // namespace detail

inline void write_statespace(std::ostream& out, const StateSpace& sys) {
  out << "ss " << sys.n() << ' ' << sys.m() << ' ' << sys.p() << '\n';
  detail::write_matrix(out, sys.A, "A");
  detail::write_matrix(out, sys.B, "B");
  detail::write_matrix(out, sys.C, "C");
  detail::write_matrix(out, sys.D, "D");
}

inline StateSpace read_statespace(std::istream& in) {
  detail::TokenReader tr(in);
  std::string head = tr.next();
  if (head != "ss") throw ParseError("statespace format: expected header 'ss', got '" + head + "'");
  const Eigen::Index n = tr.next_index();
  const Eigen::Index m = tr.next_index();
  const Eigen::Index p = tr.next_index();
  Matrix A = detail::read_matrix(tr, n, n);
  Matrix B = detail::read_matrix(tr, n, m);
  Matrix C = detail::read_matrix(tr, p, n);
  Matrix D = detail::read_matrix(tr, p, m);
  return StateSpace(std::move(A), std::move(B), std::move(C), std::move(D));
}

inline void save_statespace(const std::string& path, const StateSpace& sys) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  write_statespace(out, sys);
}

inline StateSpace load_statespace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path);
  return read_statespace(in);
}

}  // namespace absred
