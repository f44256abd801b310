#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "fpesc/errors.hpp"

namespace fpesc {

// Index bookkeeping for symmetric rank-2 and fully symmetric rank-3 tensors
// stored by unique multi-index entry.
class SymLayout {
 public:
  explicit SymLayout(int d) : d_(d) {
    if (d < 1) throw ConfigError("dimension must be >= 1");
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) pairs_.push_back({i, j});
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j)
        for (int k = j; k < d; ++k) triples_.push_back({i, j, k});
    idx2_.assign(d * d, -1);
    for (int s = 0; s < n2(); ++s) {
      auto [i, j] = pairs_[s];
      idx2_[i * d + j] = s;
      idx2_[j * d + i] = s;
    }
    idx3_.assign(d * d * d, -1);
    for (int s = 0; s < n3(); ++s) {
      auto [i, j, k] = triples_[s];
      int v[3] = {i, j, k};
      std::sort(v, v + 3);
      do {
        idx3_[(v[0] * d + v[1]) * d + v[2]] = s;
      } while (std::next_permutation(v, v + 3));
      idx3_[(i * d + j) * d + k] = s;
    }
    mult2_.resize(n2());
    for (int s = 0; s < n2(); ++s)
      mult2_[s] = (pairs_[s][0] == pairs_[s][1]) ? 1 : 2;
    mult3_.resize(n3());
    for (int s = 0; s < n3(); ++s) {
      auto [i, j, k] = triples_[s];
      if (i == j && j == k) mult3_[s] = 1;
      else if (i == j || j == k || i == k) mult3_[s] = 3;
      else mult3_[s] = 6;
    }
  }

  int dim() const { return d_; }
  int n2() const { return static_cast<int>(pairs_.size()); }
  int n3() const { return static_cast<int>(triples_.size()); }

  int idx2(int i, int j) const { return idx2_[i * d_ + j]; }
  int idx3(int i, int j, int k) const { return idx3_[(i * d_ + j) * d_ + k]; }

  const std::array<int, 2>& pair(int slot) const { return pairs_[slot]; }
  const std::array<int, 3>& triple(int slot) const { return triples_[slot]; }

  // orbit size of the unique entry in the full tensor
  int multiplicity2(int slot) const { return mult2_[slot]; }
  int multiplicity3(int slot) const { return mult3_[slot]; }

  // distinct permutations of the slot's triple
  std::vector<std::array<int, 3>> orbit3(int slot) const {
    auto [i, j, k] = triples_[slot];
    int v[3] = {i, j, k};
    std::sort(v, v + 3);
    std::vector<std::array<int, 3>> out;
    do {
      out.push_back({v[0], v[1], v[2]});
    } while (std::next_permutation(v, v + 3));
    return out;
  }

 private:
  int d_;
  std::vector<std::array<int, 2>> pairs_;
  std::vector<std::array<int, 3>> triples_;
  std::vector<int> idx2_, idx3_, mult2_, mult3_;
};

}  // namespace fpesc
