#pragma once

#include <stdexcept>
#include <string>

namespace masec {

/// Machine-readable failure category. The CLI maps these onto exit codes.
enum class ErrorCode {
  invalid_input,
  divergence,
  degenerate,
  solver_stalled,
  open_section,
  out_of_stencil,
  cascade_hypothesis,
  resolution_exhausted,
  io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

class InvalidInput : public Error {
public:
  explicit InvalidInput(const std::string& what)
      : Error(ErrorCode::invalid_input, what) {}
};

/// An improper integral whose partial sums did not settle.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, double partial)
      : Error(ErrorCode::divergence, what), partial_(partial) {}
  double partial_value() const noexcept { return partial_; }

private:
  double partial_;
};

class DegenerateError : public Error {
public:
  explicit DegenerateError(const std::string& what)
      : Error(ErrorCode::degenerate, what) {}
};

class SolverStalled : public Error {
public:
  SolverStalled(const std::string& what, double residual)
      : Error(ErrorCode::solver_stalled, what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

class OpenSection : public Error {
public:
  explicit OpenSection(const std::string& what)
      : Error(ErrorCode::open_section, what) {}
};

class OutOfStencil : public Error {
public:
  explicit OutOfStencil(const std::string& what)
      : Error(ErrorCode::out_of_stencil, what) {}
};

/// A Lemma-8 style hypothesis failed at step `index`; `which` names the inequality.
class CascadeHypothesisError : public Error {
public:
  CascadeHypothesisError(const std::string& which, int index)
      : Error(ErrorCode::cascade_hypothesis,
              "cascade hypothesis '" + which + "' violated at step " +
                  std::to_string(index)),
        which_(which), index_(index) {}
  const std::string& which() const noexcept { return which_; }
  int index() const noexcept { return index_; }

private:
  std::string which_;
  int index_;
};

class ResolutionExhausted : public Error {
public:
  explicit ResolutionExhausted(const std::string& what)
      : Error(ErrorCode::resolution_exhausted, what) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

}  // namespace masec
