#pragma once

#include "latent_verify/common.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace lv {

// Finite transition system with boolean state labels. Transitions are kept as
// sorted successor lists (a sparse form of the boolean matrix T).
struct Nts {
  std::vector<std::string> ap;
  std::vector<std::vector<std::size_t>> succ;
  std::vector<std::vector<bool>> labels;  // per state, per ap entry

  std::size_t size() const { return succ.size(); }

  bool has_edge(std::size_t a, std::size_t b) const {
    return std::binary_search(succ[a].begin(), succ[a].end(), b);
  }

  std::size_t num_transitions() const {
    std::size_t n = 0;
    for (const auto& s : succ) n += s.size();
    return n;
  }

  void validate() const {
    if (labels.size() != succ.size()) throw DomainError("NTS label table does not match the state count");
    for (std::size_t q = 0; q < size(); ++q) {
      if (succ[q].empty()) throw DomainError("NTS state " + std::to_string(q) + " has no successor");
      if (!std::is_sorted(succ[q].begin(), succ[q].end()) ||
          std::adjacent_find(succ[q].begin(), succ[q].end()) != succ[q].end())
        throw DomainError("NTS successor lists must be sorted and unique");
      if (succ[q].back() >= size()) throw DomainError("NTS successor out of range");
      if (labels[q].size() != ap.size()) throw DomainError("NTS label row has the wrong width");
    }
  }
};

// Text format:
//   nts <states> <ap count>
//   ap <name> ...
//   <q>: <succ> ...          one line per state
//   label <q>: <name> ...    one line per state
inline void write_nts(std::ostream& os, const Nts& n) {
  os << "nts " << n.size() << ' ' << n.ap.size() << "\nap";
  for (const auto& a : n.ap) os << ' ' << a;
  os << '\n';
  for (std::size_t q = 0; q < n.size(); ++q) {
    os << q << ':';
    for (auto s : n.succ[q]) os << ' ' << s;
    os << '\n';
  }
  for (std::size_t q = 0; q < n.size(); ++q) {
    os << "label " << q << ':';
    for (std::size_t a = 0; a < n.ap.size(); ++a)
      if (n.labels[q][a]) os << ' ' << n.ap[a];
    os << '\n';
  }
}

inline Nts read_nts(std::istream& is) {
  auto fail = [](const std::string& m) { throw FormatError("NTS: " + m); };
  std::string line, word;
  std::size_t states = 0, naps = 0;
  if (!std::getline(is, line)) fail("empty input");
  {
    std::istringstream ls(line);
    if (!(ls >> word >> states >> naps) || word != "nts") fail("bad header");
  }
  Nts n;
  if (!std::getline(is, line)) fail("missing ap line");
  {
    std::istringstream ls(line);
    ls >> word;
    if (word != "ap") fail("missing ap line");
    while (ls >> word) n.ap.push_back(word);
    if (n.ap.size() != naps) fail("ap count mismatch");
  }
  n.succ.resize(states);
  n.labels.assign(states, std::vector<bool>(naps, false));
  for (std::size_t q = 0; q < states; ++q) {
    if (!std::getline(is, line)) fail("truncated transitions");
    std::istringstream ls(line);
    std::size_t id = 0;
    char colon = 0;
    if (!(ls >> id >> colon) || id != q || colon != ':') fail("bad transition line " + std::to_string(q));
    std::size_t s = 0;
    while (ls >> s) n.succ[q].push_back(s);
  }
  for (std::size_t q = 0; q < states; ++q) {
    if (!std::getline(is, line)) fail("truncated labels");
    std::istringstream ls(line);
    std::size_t id = 0;
    char colon = 0;
    if (!(ls >> word >> id >> colon) || word != "label" || id != q || colon != ':') fail("bad label line");
    while (ls >> word) {
      const auto it = std::find(n.ap.begin(), n.ap.end(), word);
      if (it == n.ap.end()) fail("unknown label " + word);
      n.labels[q][it - n.ap.begin()] = true;
    }
  }
  try {
    n.validate();
  } catch (const DomainError& e) {
    fail(e.what());
  }
  return n;
}

}  // namespace lv
