#pragma once

#include "latent_verify/common.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace lv::ltl {

enum class Op { True, False, Prop, Not, And, Or, Next, Until, Release, Eventually, Always };

struct Node;
using Formula = std::shared_ptr<const Node>;

struct Node {
  Op op;
  std::string name;  // Prop only
  Formula lhs, rhs;
};

inline Formula make(Op op, Formula a = nullptr, Formula b = nullptr) {
  return std::make_shared<const Node>(Node{op, {}, std::move(a), std::move(b)});
}
inline Formula tt() { return make(Op::True); }
inline Formula ff() { return make(Op::False); }
inline Formula prop(std::string name) { return std::make_shared<const Node>(Node{Op::Prop, std::move(name), {}, {}}); }
inline Formula neg(Formula a) { return make(Op::Not, std::move(a)); }
inline Formula conj(Formula a, Formula b) { return make(Op::And, std::move(a), std::move(b)); }
inline Formula disj(Formula a, Formula b) { return make(Op::Or, std::move(a), std::move(b)); }
inline Formula next(Formula a) { return make(Op::Next, std::move(a)); }
inline Formula until(Formula a, Formula b) { return make(Op::Until, std::move(a), std::move(b)); }
inline Formula release(Formula a, Formula b) { return make(Op::Release, std::move(a), std::move(b)); }
inline Formula eventually(Formula a) { return make(Op::Eventually, std::move(a)); }
inline Formula always(Formula a) { return make(Op::Always, std::move(a)); }

inline bool is_binary(Op op) { return op == Op::And || op == Op::Or || op == Op::Until || op == Op::Release; }
inline bool is_unary(Op op) { return op == Op::Not || op == Op::Next || op == Op::Eventually || op == Op::Always; }

// Fully parenthesized text; parse(to_string(f)) reproduces f. Doubles as a
// canonical key.
inline std::string to_string(const Formula& f) {
  switch (f->op) {
    case Op::True: return "true";
    case Op::False: return "false";
    case Op::Prop: return f->name;
    case Op::Not: return "!" + to_string(f->lhs);
    case Op::Next: return "X " + to_string(f->lhs);
    case Op::Eventually: return "F " + to_string(f->lhs);
    case Op::Always: return "G " + to_string(f->lhs);
    case Op::And: return "(" + to_string(f->lhs) + " & " + to_string(f->rhs) + ")";
    case Op::Or: return "(" + to_string(f->lhs) + " | " + to_string(f->rhs) + ")";
    case Op::Until: return "(" + to_string(f->lhs) + " U " + to_string(f->rhs) + ")";
    case Op::Release: return "(" + to_string(f->lhs) + " R " + to_string(f->rhs) + ")";
  }
  return {};
}

inline bool equal(const Formula& a, const Formula& b) {
  if (a->op != b->op || a->name != b->name) return false;
  if (a->lhs && !equal(a->lhs, b->lhs)) return false;
  if (a->rhs && !equal(a->rhs, b->rhs)) return false;
  return true;
}

inline int depth(const Formula& f) {
  int d = 0;
  if (f->lhs) d = std::max(d, depth(f->lhs));
  if (f->rhs) d = std::max(d, depth(f->rhs));
  return f->lhs ? d + 1 : 0;
}

inline void collect_props(const Formula& f, std::set<std::string>& out) {
  if (f->op == Op::Prop) out.insert(f->name);
  if (f->lhs) collect_props(f->lhs, out);
  if (f->rhs) collect_props(f->rhs, out);
}

// ---------------------------------------------------------------------------
// Parser. Precedence from loosest: |, &, U/R (right associative), unary.

namespace detail {

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) { advance(); }

  Formula parse_all() {
    Formula f = parse_or();
    if (tok_ != Tok::End) throw SyntaxError("unexpected '" + text_ + "'", start_);
    return f;
  }

 private:
  enum class Tok { End, Ident, Not, And, Or, LParen, RParen, X, U, R, F, G, True, False };

  void advance() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    start_ = pos_;
    if (pos_ == s_.size()) {
      tok_ = Tok::End;
      text_ = "end of input";
      return;
    }
    const char c = s_[pos_];
    auto single = [&](Tok t) {
      tok_ = t;
      text_ = std::string(1, c);
      ++pos_;
    };
    switch (c) {
      case '!': return single(Tok::Not);
      case '&': return single(Tok::And);
      case '|': return single(Tok::Or);
      case '(': return single(Tok::LParen);
      case ')': return single(Tok::RParen);
      default: break;
    }
    if (!(std::isalpha(static_cast<unsigned char>(c)) || c == '_'))
      throw SyntaxError(std::string("invalid character '") + c + "'", pos_);
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    text_ = s_.substr(start_, pos_ - start_);
    if (text_ == "X") tok_ = Tok::X;
    else if (text_ == "U") tok_ = Tok::U;
    else if (text_ == "R") tok_ = Tok::R;
    else if (text_ == "F") tok_ = Tok::F;
    else if (text_ == "G") tok_ = Tok::G;
    else if (text_ == "true") tok_ = Tok::True;
    else if (text_ == "false") tok_ = Tok::False;
    else tok_ = Tok::Ident;
  }

  Formula parse_or() {
    Formula f = parse_and();
    while (tok_ == Tok::Or) {
      advance();
      f = disj(f, parse_and());
    }
    return f;
  }

  Formula parse_and() {
    Formula f = parse_binary_temporal();
    while (tok_ == Tok::And) {
      advance();
      f = conj(f, parse_binary_temporal());
    }
    return f;
  }

  Formula parse_binary_temporal() {
    Formula f = parse_unary();
    if (tok_ == Tok::U) {
      advance();
      return until(f, parse_binary_temporal());
    }
    if (tok_ == Tok::R) {
      advance();
      return release(f, parse_binary_temporal());
    }
    return f;
  }

  Formula parse_unary() {
    switch (tok_) {
      case Tok::Not: advance(); return neg(parse_unary());
      case Tok::X: advance(); return next(parse_unary());
      case Tok::F: advance(); return eventually(parse_unary());
      case Tok::G: advance(); return always(parse_unary());
      default: return parse_atom();
    }
  }

  Formula parse_atom() {
    switch (tok_) {
      case Tok::Ident: {
        Formula f = prop(text_);
        advance();
        return f;
      }
      case Tok::True: advance(); return tt();
      case Tok::False: advance(); return ff();
      case Tok::LParen: {
        advance();
        Formula f = parse_or();
        if (tok_ != Tok::RParen) throw SyntaxError("expected ')' but found '" + text_ + "'", start_);
        advance();
        return f;
      }
      default: throw SyntaxError("expected a formula but found '" + text_ + "'", start_);
    }
  }

  const std::string& s_;
  std::size_t pos_ = 0, start_ = 0;
  Tok tok_ = Tok::End;
  std::string text_;
};

}  // namespace detail

inline Formula parse(const std::string& text) { return detail::Parser(text).parse_all(); }

// ---------------------------------------------------------------------------
// Negation normal form.

inline Formula to_nnf(const Formula& f);

inline Formula nnf_negated(const Formula& f) {
  switch (f->op) {
    case Op::True: return ff();
    case Op::False: return tt();
    case Op::Prop: return neg(f);
    case Op::Not: return to_nnf(f->lhs);
    case Op::Or: return conj(nnf_negated(f->lhs), nnf_negated(f->rhs));
    case Op::And: return disj(nnf_negated(f->lhs), nnf_negated(f->rhs));
    case Op::Next: return next(nnf_negated(f->lhs));
    case Op::Until: return release(nnf_negated(f->lhs), nnf_negated(f->rhs));
    case Op::Release: return until(nnf_negated(f->lhs), nnf_negated(f->rhs));
    case Op::Eventually: return always(nnf_negated(f->lhs));
    case Op::Always: return eventually(nnf_negated(f->lhs));
  }
  return f;
}

inline Formula to_nnf(const Formula& f) {
  switch (f->op) {
    case Op::True:
    case Op::False:
    case Op::Prop: return f;
    case Op::Not: return nnf_negated(f->lhs);
    default: return make(f->op, to_nnf(f->lhs), f->rhs ? to_nnf(f->rhs) : nullptr);
  }
}

inline bool is_nnf(const Formula& f) {
  if (f->op == Op::Not) return f->lhs->op == Op::Prop;
  if (f->lhs && !is_nnf(f->lhs)) return false;
  if (f->rhs && !is_nnf(f->rhs)) return false;
  return true;
}

inline bool negation_free(const Formula& f) {
  if (f->op == Op::Not) return false;
  return (!f->lhs || negation_free(f->lhs)) && (!f->rhs || negation_free(f->rhs));
}

inline std::string negated_prop(const std::string& p) { return "n_" + p; }

// Replaces each !p of an NNF formula with the proposition n_p. Every
// proposition, before and after renaming, must belong to ap.
inline Formula relabel_negations(const Formula& f, const std::vector<std::string>& ap) {
  auto known = [&](const std::string& p) {
    if (std::find(ap.begin(), ap.end(), p) == ap.end()) throw UnknownProposition("'" + p + "'");
  };
  switch (f->op) {
    case Op::True:
    case Op::False: return f;
    case Op::Prop: known(f->name); return f;
    case Op::Not:
      if (f->lhs->op != Op::Prop) throw DomainError("relabel_negations expects a formula in NNF");
      known(f->lhs->name);
      known(negated_prop(f->lhs->name));
      return prop(negated_prop(f->lhs->name));
    default:
      return make(f->op, relabel_negations(f->lhs, ap), f->rhs ? relabel_negations(f->rhs, ap) : nullptr);
  }
}

// ---------------------------------------------------------------------------
// Semantics on ultimately periodic traces u v^omega. A letter is the set of
// true propositions.

using Letter = std::set<std::string>;

struct LassoTrace {
  std::vector<Letter> stem;
  std::vector<Letter> loop;  // non-empty
};

namespace detail {

// Truth value per position of the flattened lasso stem ++ loop.
inline std::vector<char> evaluate_positions(const Formula& f, const LassoTrace& t) {
  const std::size_t k = t.stem.size(), m = k + t.loop.size();
  auto letter = [&](std::size_t i) -> const Letter& { return i < k ? t.stem[i] : t.loop[i - k]; };
  auto succ = [&](std::size_t i) { return i + 1 < m ? i + 1 : k; };
  std::vector<char> out(m);
  switch (f->op) {
    case Op::True: std::fill(out.begin(), out.end(), 1); return out;
    case Op::False: return out;
    case Op::Prop:
      for (std::size_t i = 0; i < m; ++i) out[i] = letter(i).count(f->name) > 0;
      return out;
    default: break;
  }
  const auto a = evaluate_positions(f->lhs, t);
  std::vector<char> b;
  if (f->rhs) b = evaluate_positions(f->rhs, t);
  switch (f->op) {
    case Op::Not:
      for (std::size_t i = 0; i < m; ++i) out[i] = !a[i];
      return out;
    case Op::And:
      for (std::size_t i = 0; i < m; ++i) out[i] = a[i] && b[i];
      return out;
    case Op::Or:
      for (std::size_t i = 0; i < m; ++i) out[i] = a[i] || b[i];
      return out;
    case Op::Next:
      for (std::size_t i = 0; i < m; ++i) out[i] = a[succ(i)];
      return out;
    default: break;
  }
  // Fixpoints of  x_i = b_i or (a_i and x_succ)  (U, least) and
  // x_i = b_i and (a_i or x_succ)  (R, greatest); F and G are the unary cases.
  const bool least = f->op == Op::Until || f->op == Op::Eventually;
  std::vector<char> lhs, rhs;
  switch (f->op) {
    case Op::Until: lhs = a; rhs = b; break;
    case Op::Release: lhs = a; rhs = b; break;
    case Op::Eventually: lhs.assign(m, 1); rhs = a; break;
    case Op::Always: lhs.assign(m, 0); rhs = a; break;
    default: break;
  }
  std::fill(out.begin(), out.end(), least ? 0 : 1);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t r = m; r-- > 0;) {
      const char v = least ? (rhs[r] || (lhs[r] && out[succ(r)])) : (rhs[r] && (lhs[r] || out[succ(r)]));
      if (v != out[r]) {
        out[r] = v;
        changed = true;
      }
    }
  }
  return out;
}

}  // namespace detail

inline bool evaluate(const Formula& f, const LassoTrace& t) {
  if (t.loop.empty()) throw DomainError("lasso trace needs a non-empty loop");
  return detail::evaluate_positions(f, t)[0];
}

}  // namespace lv::ltl
