#pragma once

#include "latent_verify/ltl/buchi.hpp"
#include "latent_verify/nts.hpp"

#include <algorithm>
#include <vector>

namespace lv::ltl {

struct CheckResult {
  std::vector<std::size_t> yes, no, maybe;  // sorted state ids

  enum class Verdict { Yes, No, Maybe };
  Verdict verdict(std::size_t q) const {
    if (std::binary_search(yes.begin(), yes.end(), q)) return Verdict::Yes;
    if (std::binary_search(no.begin(), no.end(), q)) return Verdict::No;
    return Verdict::Maybe;
  }
};

inline bool operator==(const CheckResult& a, const CheckResult& b) {
  return a.yes == b.yes && a.no == b.no && a.maybe == b.maybe;
}

namespace detail {

inline CheckResult classify(const std::vector<char>& can_satisfy, const std::vector<char>& can_violate) {
  CheckResult r;
  for (std::size_t q = 0; q < can_satisfy.size(); ++q) {
    if (!can_violate[q]) r.yes.push_back(q);
    else if (!can_satisfy[q]) r.no.push_back(q);
    else r.maybe.push_back(q);
  }
  return r;
}

// For each NTS state, whether some path from it is accepted by the automaton.
// Tarjan's SCC algorithm over the product, iterative, visiting roots and
// successors in increasing (state, automaton state) order. SCCs are emitted
// in reverse topological order, so "can reach an accepting cycle" is decided
// when the SCC closes.
inline std::vector<char> accepting_path_exists(const Nts& nts, const BuchiAutomaton& a) {
  const std::size_t S = nts.size(), B = a.size();
  // compat[b * S + s]: state s's label satisfies b's guard
  std::vector<char> compat(B * S, 1);
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::pair<std::size_t, bool>> lits;
    for (const auto& l : a.guard[b]) {
      const auto it = std::find(nts.ap.begin(), nts.ap.end(), l.prop);
      if (it == nts.ap.end()) throw UnknownProposition("'" + l.prop + "' is not in the NTS alphabet");
      lits.emplace_back(it - nts.ap.begin(), l.positive);
    }
    for (std::size_t s = 0; s < S; ++s)
      for (const auto& [i, pos] : lits)
        if (nts.labels[s][i] != pos) {
          compat[b * S + s] = 0;
          break;
        }
  }
  const std::size_t N = S * B;
  auto pid = [&](std::size_t s, std::size_t b) { return s * B + b; };
  constexpr std::size_t unvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(N, unvisited), low(N, 0), comp(N, unvisited);
  std::vector<char> on_stack(N, 0), good_comp;
  std::vector<std::size_t> scc_stack;
  struct Frame {
    std::size_t v, si = 0, bi = 0;
  };
  std::vector<Frame> call;
  std::size_t counter = 0;

  // Advances the frame's successor cursor; returns the next product successor.
  auto next_succ = [&](Frame& f) -> std::size_t {
    const std::size_t s = f.v / B, b = f.v % B;
    while (f.si < nts.succ[s].size()) {
      const std::size_t s2 = nts.succ[s][f.si];
      while (f.bi < a.succ[b].size()) {
        const std::size_t b2 = a.succ[b][f.bi++];
        if (compat[b2 * S + s2]) return pid(s2, b2);
      }
      ++f.si;
      f.bi = 0;
    }
    return unvisited;
  };

  auto visit = [&](std::size_t root) {
    index[root] = low[root] = counter++;
    scc_stack.push_back(root);
    on_stack[root] = 1;
    call.push_back({root});
    while (!call.empty()) {
      Frame& f = call.back();
      const std::size_t w = next_succ(f);
      if (w != unvisited) {
        if (index[w] == unvisited) {
          index[w] = low[w] = counter++;
          scc_stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      const std::size_t v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] != index[v]) continue;
      // v roots an SCC.
      const std::size_t c = good_comp.size();
      std::vector<std::size_t> members;
      std::size_t u;
      do {
        u = scc_stack.back();
        scc_stack.pop_back();
        on_stack[u] = 0;
        comp[u] = c;
        members.push_back(u);
      } while (u != v);
      bool accepting = false, good = false;
      for (auto m : members) accepting = accepting || a.accepting[m % B];
      for (auto m : members) {
        Frame g{m};
        for (std::size_t w2; (w2 = next_succ(g)) != unvisited;) {
          if (comp[w2] == c) {
            if (accepting) good = true;  // SCC has an edge inside, so a cycle
          } else if (good_comp[comp[w2]]) {
            good = true;
          }
          if (good) break;
        }
        if (good) break;
      }
      good_comp.push_back(good);
    }
  };

  std::vector<char> out(S, 0);
  for (std::size_t s = 0; s < S; ++s)
    for (auto b : a.initial) {
      if (!compat[b * S + s]) continue;
      const std::size_t v = pid(s, b);
      if (index[v] == unvisited) visit(v);
      if (good_comp[comp[v]]) out[s] = 1;
    }
  return out;
}

}  // namespace detail

// Three-valued check of a negation-free formula: Q_yes when no path violates
// it, Q_no when no path satisfies it.
inline CheckResult check(const Nts& nts, const Formula& phi_bar) {
  if (!negation_free(phi_bar)) throw DomainError("check expects a negation-free formula");
  nts.validate();
  const auto sat = detail::accepting_path_exists(nts, ltl_to_buchi(to_nnf(phi_bar)));
  const auto vio = detail::accepting_path_exists(nts, ltl_to_buchi(to_nnf(neg(phi_bar))));
  return detail::classify(sat, vio);
}

struct OracleBound {
  std::size_t stem = 0;  // 0 means |Q|
  std::size_t loop = 0;
};

// Enumerates every lasso path of bounded stem and loop from each state and
// evaluates the formula on its trace.
inline CheckResult brute_force_check(const Nts& nts, const Formula& phi_bar, OracleBound bound = {}) {
  const std::size_t S = nts.size();
  if (S > 8) throw TooLarge("brute-force check supports at most 8 states, got " + std::to_string(S));
  nts.validate();
  const std::size_t max_stem = bound.stem ? bound.stem : S, max_loop = bound.loop ? bound.loop : S;
  std::vector<Letter> letters(S);
  for (std::size_t q = 0; q < S; ++q)
    for (std::size_t i = 0; i < nts.ap.size(); ++i)
      if (nts.labels[q][i]) letters[q].insert(nts.ap[i]);

  std::vector<char> sat(S, 0), vio(S, 0);
  std::vector<std::size_t> path;
  LassoTrace t;
  auto evaluate_lassos_ending_here = [&](std::size_t start) {
    const std::size_t m = path.size();
    const std::size_t last = path.back();
    for (std::size_t k = m > max_loop ? m - max_loop : 0; k <= std::min(max_stem, m - 1); ++k) {
      if (!nts.has_edge(last, path[k])) continue;
      t.stem.clear();
      t.loop.clear();
      for (std::size_t i = 0; i < k; ++i) t.stem.push_back(letters[path[i]]);
      for (std::size_t i = k; i < m; ++i) t.loop.push_back(letters[path[i]]);
      (evaluate(phi_bar, t) ? sat : vio)[start] = 1;
      if (sat[start] && vio[start]) return;
    }
  };
  auto dfs = [&](auto&& self, std::size_t start) -> void {
    evaluate_lassos_ending_here(start);
    if ((sat[start] && vio[start]) || path.size() == max_stem + max_loop) return;
    for (auto s : nts.succ[path.back()]) {
      path.push_back(s);
      self(self, start);
      path.pop_back();
      if (sat[start] && vio[start]) return;
    }
  };
  for (std::size_t q = 0; q < S; ++q) {
    path = {q};
    dfs(dfs, q);
  }
  return detail::classify(sat, vio);
}

}  // namespace lv::ltl
