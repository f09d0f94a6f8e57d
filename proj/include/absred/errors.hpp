#pragma once

#include <stdexcept>
#include <string>

namespace absred {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// sI - A (or a loop matrix) is numerically singular at the requested point.
class SingularResolvent : public Error {
 public:
  SingularResolvent(const std::string& what, double s_real, double s_imag)
      : Error(what), s_real(s_real), s_imag(s_imag) {}
  double s_real;
  double s_imag;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// A has an eigenvalue with nonnegative real part where a Hurwitz matrix is required.
class NotHurwitz : public Error {
 public:
  NotHurwitz(const std::string& what, double max_real_part)
      : Error(what), max_real_part(max_real_part) {}
  double max_real_part;
};

class NearSingularGramian : public Error {
 public:
  using Error::Error;
};

class BadOrder : public Error {
 public:
  using Error::Error;
};

/// Hankel singular values tie exactly at the requested truncation split.
class TieAtSplit : public Error {
 public:
  using Error::Error;
};

class SingularA22 : public Error {
 public:
  using Error::Error;
};

/// Feedthrough loop matrix of an LFT is singular beyond tolerance.
class NotWellPosed : public Error {
 public:
  NotWellPosed(const std::string& what, double sigma_ratio)
      : Error(what), sigma_ratio(sigma_ratio) {}
  double sigma_ratio;  // smallest/largest singular value of the loop matrix
};

class SingularWeight : public Error {
 public:
  using Error::Error;
};

class UnstableNominal : public Error {
 public:
  using Error::Error;
};

class ScaleNotPD : public Error {
 public:
  using Error::Error;
};

class NotScalarForm : public Error {
 public:
  using Error::Error;
};

class BisectionStall : public Error {
 public:
  using Error::Error;
};

class Infeasible : public Error {
 public:
  Infeasible(const std::string& what, double margin, double omega)
      : Error(what), margin(margin), omega(omega) {}
  double margin;  // worst constraint value (feasible would be <= 1)
  double omega;   // frequency of the worst offender
};

class BudgetInfeasible : public Error {
 public:
  using Error::Error;
};

class OrderSearchExhausted : public Error {
 public:
  using Error::Error;
};

class UnstableScenario : public Error {
 public:
  using Error::Error;
};

/// File / flag / config parsing failure.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace absred
