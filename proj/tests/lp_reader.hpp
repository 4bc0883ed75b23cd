#pragma once

// Minimal CPLEX-LP reader written against the file format itself, with no
// shared code from the exporter. Throws std::runtime_error on malformed input.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lp_reader {

struct Row {
  std::string name;
  std::map<std::string, double> terms;
  std::string sense; // "<=", ">=", "="
  double rhs = 0.0;
};

struct Model {
  bool minimize = true;
  std::map<std::string, double> objective;
  std::vector<Row> rows;
  std::map<std::string, std::pair<double, double>> bounds;
  std::set<std::string> generals;
  std::set<std::string> binaries;
  std::set<std::string> variables; // every name seen anywhere

  [[nodiscard]] double lower(const std::string& v) const {
    if (binaries.count(v)) return 0.0;
    auto it = bounds.find(v);
    return it == bounds.end() ? 0.0 : it->second.first;
  }
  [[nodiscard]] double upper(const std::string& v) const {
    if (binaries.count(v)) return 1.0;
    auto it = bounds.find(v);
    return it == bounds.end() ? std::numeric_limits<double>::infinity() : it->second.second;
  }
};

namespace detail {

inline std::string lower_case(std::string s) {
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

inline bool is_number(const std::string& t) {
  if (t.empty()) return false;
  char* end = nullptr;
  std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

inline bool is_operator(const std::string& t) {
  return t == "<=" || t == ">=" || t == "=" || t == "<" || t == ">" || t == "=<" || t == "=>";
}

inline std::string norm_op(const std::string& t) {
  if (t == "<" || t == "=<") return "<=";
  if (t == ">" || t == "=>") return ">=";
  return t;
}

inline bool valid_name(const std::string& t) {
  if (t.empty() || std::isdigit(static_cast<unsigned char>(t[0])) || t[0] == '.') return false;
  return std::all_of(t.begin(), t.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || std::string("_!\"#$%&()/,.;?@'`{}|~").find(ch) != std::string::npos;
  });
}

// Splits a statement into tokens, separating operators and signs.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char ch = text[i];
    if (std::isspace(static_cast<unsigned char>(ch))) {
      ++i;
    } else if (ch == '<' || ch == '>' || ch == '=') {
      std::string op(1, ch);
      if (i + 1 < text.size() && (text[i + 1] == '=' || text[i + 1] == '<' || text[i + 1] == '>')) op += text[++i];
      out.push_back(op);
      ++i;
    } else if (ch == '+' || ch == '-') {
      out.emplace_back(1, ch);
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != '<' &&
             text[j] != '>' && text[j] != '=' && text[j] != '+' && text[j] != '-') {
        // exponent sign inside a number: 1e-05
        ++j;
        if (j < text.size() && (text[j] == '+' || text[j] == '-') && (text[j - 1] == 'e' || text[j - 1] == 'E') &&
            is_number(text.substr(i, j - i - 1)) && j - i >= 2) {
          ++j;
        }
      }
      out.push_back(text.substr(i, j - i));
      i = j;
    }
  }
  return out;
}

// Parses "[sign] [coef] name ..." into terms; stops at an operator.
inline std::size_t parse_expr(const std::vector<std::string>& tok, std::size_t k, std::map<std::string, double>& terms,
                              std::set<std::string>& vars, double* constant) {
  double sign = 1.0;
  bool have_coef = false;
  double coef = 1.0;
  bool expect_term = true;
  while (k < tok.size() && !is_operator(tok[k])) {
    const std::string& t = tok[k];
    if (t == "+" || t == "-") {
      if (have_coef && constant) {
        *constant += sign * coef;
        have_coef = false;
        coef = 1.0;
        sign = 1.0;
      } else if (have_coef) {
        throw std::runtime_error("number without a variable");
      }
      if (t == "-") sign = -sign;
      expect_term = true;
    } else if (is_number(t)) {
      if (have_coef) throw std::runtime_error("two numbers in a row: " + t);
      coef = std::strtod(t.c_str(), nullptr);
      have_coef = true;
    } else {
      if (!valid_name(t)) throw std::runtime_error("bad variable name '" + t + "'");
      if (!expect_term) throw std::runtime_error("missing operator before '" + t + "'");
      terms[t] += sign * coef;
      vars.insert(t);
      sign = 1.0;
      coef = 1.0;
      have_coef = false;
      expect_term = false;
      ++k;
      continue;
    }
    ++k;
  }
  if (have_coef) {
    if (!constant) throw std::runtime_error("dangling number");
    *constant += sign * coef;
  }
  return k;
}

inline double parse_value(const std::vector<std::string>& tok, std::size_t& k) {
  double sign = 1.0;
  while (k < tok.size() && (tok[k] == "+" || tok[k] == "-")) {
    if (tok[k] == "-") sign = -sign;
    ++k;
  }
  if (k >= tok.size()) throw std::runtime_error("missing number");
  const std::string t = lower_case(tok[k++]);
  if (t == "inf" || t == "infinity") return sign * std::numeric_limits<double>::infinity();
  if (!is_number(t)) throw std::runtime_error("expected a number, got '" + t + "'");
  return sign * std::strtod(t.c_str(), nullptr);
}

} // namespace detail

inline Model read(std::istream& in) {
  using namespace detail;
  enum class Sec { None, Objective, Constraints, Bounds, Generals, Binaries, End } sec = Sec::None;
  Model model;
  std::string line;
  std::string pending; // statement being accumulated
  std::vector<std::string> statements;
  std::vector<Sec> statement_sec;

  const auto flush = [&](Sec s) {
    if (pending.find_first_not_of(" \t") != std::string::npos) {
      statements.push_back(pending);
      statement_sec.push_back(s);
    }
    pending.clear();
  };

  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto cut = line.find('\\'); cut != std::string::npos) line.erase(cut);
    std::string key = lower_case(line);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t\r") + 1);
    Sec next = sec;
    if (key == "minimize" || key == "minimum" || key == "min") next = Sec::Objective, model.minimize = true;
    else if (key == "maximize" || key == "maximum" || key == "max") next = Sec::Objective, model.minimize = false;
    else if (key == "subject to" || key == "such that" || key == "st" || key == "s.t.") next = Sec::Constraints;
    else if (key == "bounds" || key == "bound") next = Sec::Bounds;
    else if (key == "generals" || key == "general" || key == "gen") next = Sec::Generals;
    else if (key == "binaries" || key == "binary" || key == "bin") next = Sec::Binaries;
    else if (key == "end") next = Sec::End;
    if (next != sec || key == "end") {
      flush(sec);
      sec = next;
      continue;
    }
    if (key.empty()) continue;
    if (sec == Sec::None) throw std::runtime_error("line " + std::to_string(lineno) + ": text before any section");
    if (sec == Sec::End) throw std::runtime_error("line " + std::to_string(lineno) + ": text after End");
    // Labelled lines start a row; unlabelled lines continue it. Each bound is one line.
    if (sec == Sec::Bounds || ((sec == Sec::Objective || sec == Sec::Constraints) && line.find(':') != std::string::npos)) {
      flush(sec);
    }
    pending += " " + line;
  }
  flush(sec);
  if (sec != Sec::End) throw std::runtime_error("missing End");

  std::set<std::string> row_names;
  for (std::size_t s = 0; s < statements.size(); ++s) {
    std::string text = statements[s];
    const Sec where = statement_sec[s];
    std::string label;
    if (where == Sec::Objective || where == Sec::Constraints) {
      if (auto colon = text.find(':'); colon != std::string::npos) {
        label = text.substr(0, colon);
        label.erase(0, label.find_first_not_of(" \t"));
        label.erase(label.find_last_not_of(" \t") + 1);
        text = text.substr(colon + 1);
      }
    }
    const auto tok = tokenize(text);
    if (where == Sec::Objective) {
      double constant = 0.0;
      const std::size_t k = parse_expr(tok, 0, model.objective, model.variables, &constant);
      if (k != tok.size()) throw std::runtime_error("objective: trailing tokens");
    } else if (where == Sec::Constraints) {
      Row row;
      row.name = label;
      if (label.empty()) throw std::runtime_error("unnamed constraint");
      if (!row_names.insert(label).second) throw std::runtime_error("duplicate constraint " + label);
      std::size_t k = parse_expr(tok, 0, row.terms, model.variables, nullptr);
      if (k >= tok.size()) throw std::runtime_error(label + ": missing operator");
      row.sense = norm_op(tok[k++]);
      row.rhs = parse_value(tok, k);
      if (k != tok.size()) throw std::runtime_error(label + ": trailing tokens");
      model.rows.push_back(std::move(row));
    } else if (where == Sec::Bounds) {
      std::size_t k = 0;
      if (tok.size() == 2 && lower_case(tok[1]) == "free") {
        model.bounds[tok[0]] = {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
        model.variables.insert(tok[0]);
        continue;
      }
      if (is_number(tok[0]) || tok[0] == "-" || tok[0] == "+") {
        const double lo = parse_value(tok, k);
        if (k >= tok.size() || norm_op(tok[k]) != "<=") throw std::runtime_error("bad bound: " + text);
        ++k;
        const std::string v = tok.at(k++);
        if (!valid_name(v)) throw std::runtime_error("bad bound variable " + v);
        double hi = std::numeric_limits<double>::infinity();
        if (k < tok.size()) {
          if (norm_op(tok[k]) != "<=") throw std::runtime_error("bad bound: " + text);
          ++k;
          hi = parse_value(tok, k);
        }
        model.bounds[v] = {lo, hi};
        model.variables.insert(v);
      } else {
        const std::string v = tok[k++];
        if (!valid_name(v) || k >= tok.size()) throw std::runtime_error("bad bound: " + text);
        const std::string op = norm_op(tok[k++]);
        const double val = parse_value(tok, k);
        auto& b = model.bounds.try_emplace(v, 0.0, std::numeric_limits<double>::infinity()).first->second;
        if (op == "<=") b.second = val;
        else if (op == ">=") b.first = val;
        else b = {val, val};
        model.variables.insert(v);
      }
      if (k != tok.size()) throw std::runtime_error("bad bound: " + text);
    } else if (where == Sec::Generals || where == Sec::Binaries) {
      for (const auto& t : tok) {
        if (!valid_name(t)) throw std::runtime_error("bad name in integer section: " + t);
        (where == Sec::Generals ? model.generals : model.binaries).insert(t);
        model.variables.insert(t);
      }
    }
  }
  return model;
}

// Largest violation of rows, bounds and integrality under `values` (missing = 0).
inline double max_violation(const Model& model, const std::map<std::string, double>& values) {
  const auto get = [&](const std::string& v) {
    auto it = values.find(v);
    return it == values.end() ? 0.0 : it->second;
  };
  double worst = 0.0;
  for (const Row& row : model.rows) {
    double lhs = 0.0;
    for (const auto& [v, a] : row.terms) lhs += a * get(v);
    const double d = row.sense == "<=" ? lhs - row.rhs : row.sense == ">=" ? row.rhs - lhs : std::abs(lhs - row.rhs);
    worst = std::max(worst, d);
  }
  for (const auto& v : model.variables) {
    const double x = get(v);
    worst = std::max({worst, model.lower(v) - x, x - model.upper(v)});
    if (model.generals.count(v) || model.binaries.count(v)) worst = std::max(worst, std::abs(x - std::round(x)));
  }
  return worst;
}

inline double objective(const Model& model, const std::map<std::string, double>& values) {
  double total = 0.0;
  for (const auto& [v, a] : model.objective) {
    auto it = values.find(v);
    if (it != values.end()) total += a * it->second;
  }
  return total;
}

} // namespace lp_reader
