#pragma once

#include "latent_verify/ltl/formula.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace lv::ltl {

// State-labeled Buchi automaton: a run q0 q1 ... reads letter i at state q_i,
// which requires the letter to satisfy the literals of q_i.
struct BuchiAutomaton {
  struct Literal {
    std::string prop;
    bool positive = true;
  };
  std::vector<std::vector<Literal>> guard;   // conjunction per state
  std::vector<std::vector<std::size_t>> succ;
  std::vector<std::size_t> initial;
  std::vector<char> accepting;

  std::size_t size() const { return guard.size(); }

  bool admits(std::size_t q, const Letter& l) const {
    for (const auto& lit : guard[q])
      if ((l.count(lit.prop) > 0) != lit.positive) return false;
    return true;
  }

  // Accepts u v^omega iff some run visits an accepting state infinitely often.
  // Explores (state, position) pairs of the lasso.
  bool accepts(const LassoTrace& t) const;
};

namespace detail {

inline Formula desugar(const Formula& f) {
  switch (f->op) {
    case Op::Eventually: return until(tt(), desugar(f->lhs));
    case Op::Always: return release(ff(), desugar(f->lhs));
    case Op::True:
    case Op::False:
    case Op::Prop:
    case Op::Not: return f;
    default: return make(f->op, desugar(f->lhs), f->rhs ? desugar(f->rhs) : nullptr);
  }
}

inline bool is_literal(const Formula& f) {
  return f->op == Op::True || f->op == Op::False || f->op == Op::Prop || f->op == Op::Not;
}

class Tableau {
 public:
  struct TNode {
    std::set<int> incoming;  // -1 is the pre-initial marker
    std::set<std::string> pending, old, next;
  };

  explicit Tableau(const Formula& f) {
    TNode root;
    root.incoming = {-1};
    root.pending = {key(f)};
    expand(std::move(root));
  }

  std::vector<TNode> nodes;
  std::map<std::string, Formula> table;

 private:
  std::string key(const Formula& f) {
    auto k = to_string(f);
    table.emplace(k, f);
    return k;
  }

  static std::string negation_key(const Formula& lit) {
    return lit->op == Op::Prop ? "!" + lit->name : lit->lhs->name;
  }

  void expand(TNode n) {
    if (n.pending.empty()) {
      for (auto& m : nodes)
        if (m.old == n.old && m.next == n.next) {
          m.incoming.insert(n.incoming.begin(), n.incoming.end());
          return;
        }
      const int id = static_cast<int>(nodes.size());
      nodes.push_back(n);
      TNode child;
      child.incoming = {id};
      child.pending = n.next;
      expand(std::move(child));
      return;
    }
    const std::string k = *n.pending.begin();
    n.pending.erase(n.pending.begin());
    const Formula f = table.at(k);
    if (is_literal(f)) {
      if (f->op == Op::False) return;
      if (f->op == Op::True) return expand(std::move(n));
      if (n.old.count(negation_key(f))) return;
      n.old.insert(k);
      expand(std::move(n));
      return;
    }
    auto add_pending = [&](TNode& t, const Formula& g) {
      const std::string gk = key(g);
      if (!t.old.count(gk)) t.pending.insert(gk);
    };
    switch (f->op) {
      case Op::And: {
        add_pending(n, f->lhs);
        add_pending(n, f->rhs);
        n.old.insert(k);
        expand(std::move(n));
        return;
      }
      case Op::Next: {
        n.old.insert(k);
        n.next.insert(key(f->lhs));
        expand(std::move(n));
        return;
      }
      case Op::Or:
      case Op::Until:
      case Op::Release: {
        TNode a = n, b = n;
        a.old.insert(k);
        b.old.insert(k);
        if (f->op == Op::Or) {
          add_pending(a, f->lhs);
          add_pending(b, f->rhs);
        } else if (f->op == Op::Until) {
          add_pending(a, f->lhs);
          a.next.insert(k);
          add_pending(b, f->rhs);
        } else {
          add_pending(a, f->rhs);
          a.next.insert(k);
          add_pending(b, f->lhs);
          add_pending(b, f->rhs);
        }
        expand(std::move(a));
        expand(std::move(b));
        return;
      }
      default: throw DomainError("tableau expects a formula in negation normal form");
    }
  }
};

}  // namespace detail

// Tableau construction to a generalized automaton (one acceptance set per
// until subformula), then counter degeneralization.
inline BuchiAutomaton ltl_to_buchi(const Formula& f) {
  if (!is_nnf(f)) throw DomainError("ltl_to_buchi expects a formula in negation normal form");
  detail::Tableau tab(detail::desugar(f));
  const auto& nodes = tab.nodes;
  const std::size_t n = nodes.size();

  std::vector<std::pair<std::string, std::string>> untils;  // (a U b, b)
  for (const auto& [k, g] : tab.table)
    if (g->op == Op::Until) untils.emplace_back(k, to_string(g->rhs));
  const std::size_t K = untils.size();

  std::vector<std::vector<char>> in_set(n, std::vector<char>(std::max<std::size_t>(K, 1), 1));
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t i = 0; i < K; ++i)
      in_set[q][i] = !nodes[q].old.count(untils[i].first) || nodes[q].old.count(untils[i].second) ||
                     untils[i].second == "true";  // true is never stored

  std::vector<std::vector<std::size_t>> gsucc(n);
  std::vector<std::size_t> ginit;
  for (std::size_t q = 0; q < n; ++q)
    for (int src : nodes[q].incoming) {
      if (src < 0) ginit.push_back(q);
      else gsucc[src].push_back(q);
    }

  std::vector<std::vector<BuchiAutomaton::Literal>> guards(n);
  for (std::size_t q = 0; q < n; ++q)
    for (const auto& k : nodes[q].old) {
      const Formula& g = tab.table.at(k);
      if (g->op == Op::Prop) guards[q].push_back({g->name, true});
      else if (g->op == Op::Not) guards[q].push_back({g->lhs->name, false});
    }

  // Degeneralize: state (q, i) waits for acceptance set i.
  const std::size_t layers = std::max<std::size_t>(K, 1);
  BuchiAutomaton a;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> id;
  std::vector<std::pair<std::size_t, std::size_t>> work;
  auto get = [&](std::size_t q, std::size_t i) {
    auto [it, fresh] = id.emplace(std::make_pair(q, i), a.size());
    if (fresh) {
      a.guard.push_back(guards[q]);
      a.succ.emplace_back();
      a.accepting.push_back(K == 0 || (i == 0 && in_set[q][0]));
      work.emplace_back(q, i);
    }
    return it->second;
  };
  std::sort(ginit.begin(), ginit.end());
  for (auto q : ginit) a.initial.push_back(get(q, 0));
  while (!work.empty()) {
    const auto [q, i] = work.back();
    work.pop_back();
    const std::size_t from = id.at({q, i});
    const std::size_t j = K == 0 ? 0 : (in_set[q][i] ? (i + 1) % layers : i);
    std::vector<std::size_t> out;
    for (auto r : gsucc[q]) out.push_back(get(r, j));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    a.succ[from] = std::move(out);
  }
  return a;
}

// Adds a non-accepting sink so that every state has a successor for every
// letter. Does not change the language.
inline BuchiAutomaton complete(BuchiAutomaton a) {
  const std::size_t sink = a.size();
  a.guard.emplace_back();
  a.accepting.push_back(0);
  a.succ.push_back({sink});
  for (std::size_t q = 0; q < sink; ++q) a.succ[q].push_back(sink);
  return a;
}

inline bool BuchiAutomaton::accepts(const LassoTrace& t) const {
  const std::size_t k = t.stem.size(), m = k + t.loop.size();
  if (t.loop.empty()) throw DomainError("lasso trace needs a non-empty loop");
  auto letter = [&](std::size_t i) -> const Letter& { return i < k ? t.stem[i] : t.loop[i - k]; };
  auto nextpos = [&](std::size_t i) { return i + 1 < m ? i + 1 : k; };
  const std::size_t n = size();
  auto node = [&](std::size_t q, std::size_t i) { return q * m + i; };
  // Graph over (state, position) with admitted letters.
  std::vector<char> ok(n * m, 0);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t i = 0; i < m; ++i) ok[node(q, i)] = admits(q, letter(i));
  auto succ_of = [&](std::size_t v, std::vector<std::size_t>& out) {
    out.clear();
    const std::size_t q = v / m, i = v % m;
    for (auto r : succ[q])
      if (ok[node(r, nextpos(i))]) out.push_back(node(r, nextpos(i)));
  };
  std::vector<char> reach(n * m, 0);
  std::vector<std::size_t> stack, buf;
  for (auto q : initial)
    if (ok[node(q, 0)] && !reach[node(q, 0)]) {
      reach[node(q, 0)] = 1;
      stack.push_back(node(q, 0));
    }
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    succ_of(v, buf);
    for (auto w : buf)
      if (!reach[w]) {
        reach[w] = 1;
        stack.push_back(w);
      }
  }
  // An accepting reachable node lying on a cycle.
  for (std::size_t v = 0; v < n * m; ++v) {
    if (!reach[v] || !accepting[v / m]) continue;
    std::vector<char> seen(n * m, 0);
    succ_of(v, buf);
    stack.assign(buf.begin(), buf.end());
    while (!stack.empty()) {
      const auto w = stack.back();
      stack.pop_back();
      if (w == v) return true;
      if (seen[w]) continue;
      seen[w] = 1;
      succ_of(w, buf);
      stack.insert(stack.end(), buf.begin(), buf.end());
    }
  }
  return false;
}

}  // namespace lv::ltl
