#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <gmpxx.h>

#include "tsynth/refinement.hpp"

namespace tsynth {

// Solver crashed, could not be started or answered something unreadable.
struct SolverTransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SExprError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SExpr {
  std::string atom;  // empty for lists
  std::vector<SExpr> list;
  bool is_atom() const { return !atom.empty(); }
};

// Every top-level expression of `text`; comments and string literals are
// handled as in SMT-LIB 2.
std::vector<SExpr> parse_sexprs(std::string_view text);
std::string to_string(const SExpr& e);

// Numeral, decimal, (/ a b) or (- a).
mpq_class eval_real(const SExpr& e);

std::string speed_name(std::size_t slot, std::int64_t k);
std::string position_name(std::size_t slot, std::int64_t k);

// QF_LRA document: speed declarations, position macros, one assert per
// constraint, check-sat and get-value over all speeds.
std::string emit_smtlib(const ConstraintSet& cs);

struct SmtAnswer {
  enum Status : std::uint8_t { Sat, Unsat, Unknown, Timeout } status = Unknown;
  std::map<std::string, mpq_class> values;
};

// Reads "sat"/"unsat"/"unknown"/"timeout" followed by a get-value block.
SmtAnswer parse_solver_output(std::string_view output);

class SmtSolver {
 public:
  virtual ~SmtSolver() = default;
  virtual SmtAnswer check(const std::string& document, std::optional<std::chrono::duration<double>> timeout) = 0;
};

// Runs an SMT-LIB 2 solver executable on a temporary file with the z3
// command line convention ("-smt2", "-T:<seconds>", then `extra_args`, for
// instance "rlimit=5000000" for a deterministic budget).
class ExternalSmtSolver : public SmtSolver {
 public:
  explicit ExternalSmtSolver(std::string executable = default_executable(), std::vector<std::string> extra_args = {});
  SmtAnswer check(const std::string& document, std::optional<std::chrono::duration<double>> timeout) override;

  // $TSYNTH_SMT_SOLVER, else "z3".
  static std::string default_executable();
  const std::string& executable() const { return executable_; }

 private:
  std::string executable_;
  std::vector<std::string> extra_args_;
};

// Turns a model into a plan matrix; missing speeds are a transport error.
RefinedPlan plan_from_answer(const SmtAnswer& answer, const ConstraintSet& cs);

}  // namespace tsynth
