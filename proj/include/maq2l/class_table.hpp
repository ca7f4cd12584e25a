#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace maq2l {

struct ClassEntry {
  std::string code;
  std::string description;
  double ciw = 0.0;  // class-importance weight
  bool bottleneck = false;
};

// Ordered defect classes. Row n of every per-class tensor refers to entry n.
class ClassTable {
 public:
  ClassTable() = default;
  explicit ClassTable(std::vector<ClassEntry> entries);

  // The 17 Sewer-ML classes with their CIW values, bottleneck set
  // {RB, IS, FO, OS}.
  static const ClassTable& sewer_ml();
  // Entries matching the codes, in the order given. Unknown codes throw
  // SchemaError.
  ClassTable subset(const std::vector<std::string>& codes) const;
  ClassTable first(std::size_t n) const;

  std::size_t size() const { return entries_.size(); }
  const ClassEntry& operator[](std::size_t i) const { return entries_.at(i); }
  const std::vector<ClassEntry>& entries() const { return entries_; }
  std::optional<std::size_t> index_of(std::string_view code) const;
  std::vector<std::string> codes() const;
  std::vector<std::size_t> bottleneck_indices() const;
  double ciw_sum() const;

 private:
  std::vector<ClassEntry> entries_;
};

}  // namespace maq2l
