// ============================================================================
//  coalsis/state.hpp
//
//  Type-count configurations and genealogy moves for the finite-alleles
//  coalescent.  A configuration n records how many sampled lineages carry
//  each allele type.  Storage is a sorted sparse (type, count) list so the
//  same code serves d = 2 toy models and the 2^20-type site benchmark, where
//  at most ||n|| types are ever occupied.
// ============================================================================
#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/mutation_model.hpp"

namespace coalsis {

class TypeCounts {
 public:
  TypeCounts() = default;

  // Dense construction: counts[i] lineages of type i.
  static TypeCounts from_dense(const std::vector<int>& counts) {
    TypeCounts n;
    for (size_t i = 0; i < counts.size(); ++i) {
      check(counts[i] >= 0, "TypeCounts: negative count");
      if (counts[i] > 0) n.entries_.emplace_back(static_cast<type_id>(i), counts[i]);
      n.total_ += counts[i];
    }
    return n;
  }

  std::vector<int> to_dense(int d) const {
    std::vector<int> out(d, 0);
    for (auto [t, c] : entries_) {
      check(static_cast<int>(t) < d, "TypeCounts: type id exceeds requested dimension");
      out[t] = static_cast<int>(c);
    }
    return out;
  }

  int64_t size() const { return total_; }                   // ||n||_1
  int distinct_types() const { return static_cast<int>(entries_.size()); }
  const std::vector<std::pair<type_id, uint32_t>>& entries() const { return entries_; }

  int count_of(type_id t) const {
    auto it = find(t);
    return it != entries_.end() && it->first == t ? static_cast<int>(it->second) : 0;
  }

  // Adds delta (possibly negative) lineages of type t, keeping the list
  // sorted and free of zero entries.
  void add(type_id t, int delta) {
    if (delta == 0) return;
    auto it = find(t);
    if (it != entries_.end() && it->first == t) {
      int64_t next = static_cast<int64_t>(it->second) + delta;
      check(next >= 0, format_msg("TypeCounts: count of type %u would become negative", t));
      if (next == 0)
        entries_.erase(it);
      else
        it->second = static_cast<uint32_t>(next);
    } else {
      check(delta > 0, format_msg("TypeCounts: removing from absent type %u", t));
      entries_.insert(it, {t, static_cast<uint32_t>(delta)});
    }
    total_ += delta;
  }

  bool operator==(const TypeCounts& o) const {
    return total_ == o.total_ && entries_ == o.entries_;
  }

 private:
  std::vector<std::pair<type_id, uint32_t>>::iterator find(type_id t) {
    return std::lower_bound(entries_.begin(), entries_.end(), t,
                            [](const auto& e, type_id v) { return e.first < v; });
  }
  std::vector<std::pair<type_id, uint32_t>>::const_iterator find(type_id t) const {
    return std::lower_bound(entries_.begin(), entries_.end(), t,
                            [](const auto& e, type_id v) { return e.first < v; });
  }

  std::vector<std::pair<type_id, uint32_t>> entries_;  // sorted by type id
  int64_t total_ = 0;
};

// A backward (leaves-to-root) genealogy move from configuration n:
//  * Coalescence: two lineages of type `child` merge; n -> n - e_child.
//  * Mutation:    one `child` lineage is the product of a forward mutation
//                 parent -> child; n -> n - e_child + e_parent.  parent may
//                 equal child when the matrix has self-loop mass.
struct BackwardMove {
  enum class Kind : uint8_t { Coalescence, Mutation };
  Kind kind;
  type_id child;
  type_id parent;  // meaningful for Kind::Mutation only

  static BackwardMove coalescence(type_id j) { return {Kind::Coalescence, j, j}; }
  static BackwardMove mutation(type_id parent, type_id child) {
    return {Kind::Mutation, child, parent};
  }
};

inline void apply_backward(TypeCounts& n, const BackwardMove& m) {
  if (m.kind == BackwardMove::Kind::Coalescence) {
    check(n.count_of(m.child) >= 2, "apply_backward: coalescence needs two lineages of the type");
    n.add(m.child, -1);
  } else {
    check(n.count_of(m.child) >= 1, "apply_backward: mutation removes an absent type");
    if (m.parent != m.child) {
      n.add(m.child, -1);
      n.add(m.parent, +1);
    }
    // Self-loop mutation: the configuration is unchanged but a step occurred.
  }
}

}  // namespace coalsis
