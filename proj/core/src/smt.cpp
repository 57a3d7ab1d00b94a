#include "tsynth/smt.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tsynth {

namespace {

class SExprReader {
 public:
  explicit SExprReader(std::string_view text) : text_(text) {}

  std::vector<SExpr> all() {
    std::vector<SExpr> out;
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) return out;
      out.push_back(read());
    }
  }

 private:
  void skip_space() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  SExpr read() {
    skip_space();
    if (pos_ >= text_.size()) throw SExprError("unexpected end of input");
    char c = text_[pos_];
    if (c == ')') throw SExprError("unbalanced ')' at offset " + std::to_string(pos_));
    SExpr e;
    if (c == '(') {
      ++pos_;
      for (;;) {
        skip_space();
        if (pos_ >= text_.size()) throw SExprError("missing ')'");
        if (text_[pos_] == ')') {
          ++pos_;
          return e;
        }
        e.list.push_back(read());
      }
    }
    std::size_t start = pos_;
    if (c == '"') {
      ++pos_;
      for (;;) {
        if (pos_ >= text_.size()) throw SExprError("unterminated string literal");
        if (text_[pos_] == '"') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '"') {
            pos_ += 2;
            continue;
          }
          ++pos_;
          break;
        }
        ++pos_;
      }
    } else if (c == '|') {
      pos_ = text_.find('|', pos_ + 1);
      if (pos_ == std::string_view::npos) throw SExprError("unterminated quoted symbol");
      ++pos_;
    } else {
      while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '(' &&
             text_[pos_] != ')' && text_[pos_] != ';') {
        ++pos_;
      }
    }
    e.atom = std::string(text_.substr(start, pos_ - start));
    return e;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

mpq_class parse_decimal(const std::string& s) {
  auto dot = s.find('.');
  std::string digits = s;
  std::string den = "1";
  if (dot != std::string::npos) {
    digits = s.substr(0, dot) + s.substr(dot + 1);
    den += std::string(s.size() - dot - 1, '0');
  }
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
    throw SExprError("not a number: " + s);
  }
  mpq_class q{mpz_class(digits), mpz_class(den)};
  q.canonicalize();
  return q;
}

std::string real_literal(const mpq_class& q) {
  auto pos = [](const mpq_class& a) {
    if (a.get_den() == 1) return a.get_num().get_str() + ".0";
    return "(/ " + a.get_num().get_str() + ".0 " + a.get_den().get_str() + ".0)";
  };
  if (q < 0) return "(- " + pos(-q) + ")";
  return pos(q);
}

std::string var_name(const VarRef& v) {
  return v.kind == VarRef::Speed ? speed_name(v.car, v.step) : position_name(v.car, v.step);
}

void emit_atom(std::ostream& out, const Atom& a) {
  static constexpr std::array<const char*, 5> ops{"<", "<=", "=", ">=", ">"};
  out << "(" << ops[static_cast<std::size_t>(a.cmp)] << " ";
  if (a.expr.terms.size() == 1 && a.expr.terms[0].second == 1) {
    out << var_name(a.expr.terms[0].first);
  } else {
    out << "(+";
    for (const auto& [v, c] : a.expr.terms) {
      if (c == 1) {
        out << " " << var_name(v);
      } else {
        out << " (* " << real_literal(c) << " " << var_name(v) << ")";
      }
    }
    if (a.expr.terms.empty()) out << " 0.0";
    out << ")";
  }
  out << " " << real_literal(-a.expr.constant) << ")";
}

void emit_junction(std::ostream& out, const char* op, const std::vector<Atom>& atoms) {
  if (atoms.size() == 1) {
    emit_atom(out, atoms[0]);
    return;
  }
  out << "(" << op;
  for (const Atom& a : atoms) {
    out << " ";
    emit_atom(out, a);
  }
  out << ")";
}

}  // namespace

std::vector<SExpr> parse_sexprs(std::string_view text) { return SExprReader(text).all(); }

std::string to_string(const SExpr& e) {
  if (e.is_atom()) return e.atom;
  std::string out = "(";
  for (std::size_t i = 0; i < e.list.size(); ++i) {
    if (i) out += " ";
    out += to_string(e.list[i]);
  }
  return out + ")";
}

mpq_class eval_real(const SExpr& e) {
  if (e.is_atom()) return parse_decimal(e.atom);
  if (e.list.size() == 2 && e.list[0].atom == "-") return -eval_real(e.list[1]);
  if (e.list.size() == 3 && e.list[0].atom == "/") {
    mpq_class den = eval_real(e.list[2]);
    if (den == 0) throw SExprError("division by zero in " + to_string(e));
    return eval_real(e.list[1]) / den;
  }
  throw SExprError("not a real constant: " + to_string(e));
}

std::string speed_name(std::size_t slot, std::int64_t k) {
  return "v_" + std::to_string(slot) + "_" + std::to_string(k);
}
std::string position_name(std::size_t slot, std::int64_t k) {
  return "p_" + std::to_string(slot) + "_" + std::to_string(k);
}

std::string emit_smtlib(const ConstraintSet& cs) {
  std::ostringstream out;
  out << "(set-option :produce-models true)\n(set-logic QF_LRA)\n";
  for (std::size_t c = 0; c < cs.cars; ++c) {
    for (std::int64_t k = 0; k < cs.steps; ++k) out << "(declare-fun " << speed_name(c, k) << " () Real)\n";
  }
  for (std::size_t c = 0; c < cs.cars; ++c) {
    out << "(define-fun " << position_name(c, 0) << " () Real " << real_literal(cs.initial_offsets[c]) << ")\n";
    for (std::int64_t k = 1; k <= cs.steps; ++k) {
      out << "(define-fun " << position_name(c, k) << " () Real (+ " << position_name(c, k - 1) << " "
          << speed_name(c, k - 1) << "))\n";
    }
  }
  for (const Constraint& c : cs.constraints) {
    out << "(assert ";
    if (!c.premises.empty()) {
      out << "(=> ";
      emit_junction(out, "and", c.premises);
      out << " ";
    }
    if (c.conclusion.empty()) {
      out << "false";
    } else {
      emit_junction(out, "or", c.conclusion);
    }
    if (!c.premises.empty()) out << ")";
    out << ")\n";
  }
  out << "(check-sat)\n";
  if (cs.variable_count() > 0) {
    out << "(get-value (";
    for (std::size_t c = 0; c < cs.cars; ++c) {
      for (std::int64_t k = 0; k < cs.steps; ++k) out << (c || k ? " " : "") << speed_name(c, k);
    }
    out << "))\n";
  }
  return out.str();
}

SmtAnswer parse_solver_output(std::string_view output) {
  std::vector<SExpr> items;
  try {
    items = parse_sexprs(output);
  } catch (const SExprError& e) {
    throw SolverTransportError(std::string("unreadable solver output: ") + e.what());
  }
  SmtAnswer answer;
  std::size_t i = 0;
  for (; i < items.size(); ++i) {
    const SExpr& e = items[i];
    if (e.is_atom()) break;
    if (!e.list.empty() && e.list[0].atom == "error") throw SolverTransportError("solver error: " + to_string(e));
  }
  if (i == items.size()) throw SolverTransportError("solver gave no answer");
  const std::string& word = items[i].atom;
  if (word == "sat") {
    answer.status = SmtAnswer::Sat;
  } else if (word == "unsat") {
    answer.status = SmtAnswer::Unsat;
    return answer;
  } else if (word == "unknown") {
    answer.status = SmtAnswer::Unknown;
    return answer;
  } else if (word == "timeout") {
    answer.status = SmtAnswer::Timeout;
    return answer;
  } else {
    throw SolverTransportError("unexpected solver answer: " + word);
  }
  for (++i; i < items.size(); ++i) {
    const SExpr& block = items[i];
    if (!block.list.empty() && block.list[0].atom == "error") {
      throw SolverTransportError("solver error: " + to_string(block));
    }
    for (const SExpr& pair : block.list) {
      if (pair.list.size() != 2 || !pair.list[0].is_atom()) {
        throw SolverTransportError("malformed model entry: " + to_string(pair));
      }
      try {
        answer.values[pair.list[0].atom] = eval_real(pair.list[1]);
      } catch (const SExprError& e) {
        throw SolverTransportError(e.what());
      }
    }
  }
  return answer;
}

ExternalSmtSolver::ExternalSmtSolver(std::string executable, std::vector<std::string> extra_args)
    : executable_(std::move(executable)), extra_args_(std::move(extra_args)) {}

std::string ExternalSmtSolver::default_executable() {
  const char* env = std::getenv("TSYNTH_SMT_SOLVER");
  return env && *env ? env : "z3";
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

struct TempFile {
  std::filesystem::path path;
  ~TempFile() {
    std::error_code ec;
    if (!path.empty()) std::filesystem::remove(path, ec);
  }
};

}  // namespace

SmtAnswer ExternalSmtSolver::check(const std::string& document,
                                   std::optional<std::chrono::duration<double>> timeout) {
  std::string pattern = (std::filesystem::temp_directory_path() / "tsynth-XXXXXX.smt2").string();
  int fd = mkstemps(pattern.data(), 5);
  if (fd < 0) throw SolverTransportError("cannot create a temporary file");
  TempFile tmp{pattern};
  {
    std::size_t done = 0;
    while (done < document.size()) {
      ssize_t n = ::write(fd, document.data() + done, document.size() - done);
      if (n <= 0) {
        ::close(fd);
        throw SolverTransportError("cannot write " + pattern);
      }
      done += static_cast<std::size_t>(n);
    }
    ::close(fd);
  }
  std::string cmd = shell_quote(executable_) + " -smt2";
  if (timeout) {
    auto secs = static_cast<long long>(std::ceil(std::max(1.0, timeout->count())));
    cmd += " -T:" + std::to_string(secs);
  }
  for (const auto& a : extra_args_) cmd += " " + shell_quote(a);
  cmd += " " + shell_quote(pattern) + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw SolverTransportError("cannot start " + executable_);
  std::string output;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) output.append(buf.data(), n);
  int status = ::pclose(pipe);
  if (status == -1 || (WIFEXITED(status) && WEXITSTATUS(status) == 127)) {
    throw SolverTransportError("cannot run " + executable_ + ": " + output);
  }
  if (WIFSIGNALED(status)) throw SolverTransportError(executable_ + " killed by signal " + std::to_string(WTERMSIG(status)));
  return parse_solver_output(output);
}

RefinedPlan plan_from_answer(const SmtAnswer& answer, const ConstraintSet& cs) {
  if (answer.status != SmtAnswer::Sat) throw SolverTransportError("no model in a non-sat answer");
  RefinedPlan plan;
  plan.steps = cs.steps;
  plan.speeds.assign(cs.cars, std::vector<mpq_class>(static_cast<std::size_t>(cs.steps)));
  for (std::size_t c = 0; c < cs.cars; ++c) {
    for (std::int64_t k = 0; k < cs.steps; ++k) {
      auto it = answer.values.find(speed_name(c, k));
      if (it == answer.values.end()) throw SolverTransportError("model lacks " + speed_name(c, k));
      plan.speeds[c][static_cast<std::size_t>(k)] = it->second;
    }
  }
  return plan;
}

}  // namespace tsynth
