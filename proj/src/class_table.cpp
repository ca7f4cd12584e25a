#include "maq2l/class_table.hpp"

#include <set>

#include "maq2l/error.hpp"

namespace maq2l {

ClassTable::ClassTable(std::vector<ClassEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.code.empty()) throw SchemaError("class code must not be empty");
    if (!seen.insert(e.code).second) throw SchemaError("duplicate class code " + e.code);
    if (e.ciw < 0.0 || e.ciw > 1.0) throw SchemaError("CIW of " + e.code + " outside [0, 1]");
  }
}

const ClassTable& ClassTable::sewer_ml() {
  static const ClassTable table({
      {"RB", "Cracks, breaks, and collapses", 1.0000, true},
      {"OS", "Lateral reinstatement cuts", 0.9009, true},
      {"FS", "Displaced joint", 0.6419, false},
      {"OB", "Surface damage", 0.5518, false},
      {"OK", "Connection with construction changes", 0.4396, false},
      {"PH", "Chiseled connection", 0.4167, false},
      {"PB", "Drilled connection", 0.4167, false},
      {"OP", "Connection with transition profile", 0.3829, false},
      {"RO", "Roots", 0.3559, false},
      {"IN", "Infiltration", 0.3131, false},
      {"PF", "Production error", 0.2896, false},
      {"FO", "Obstacle", 0.2477, true},
      {"BE", "Attached deposits", 0.2275, false},
      {"IS", "Intruding sealing material", 0.1847, true},
      {"DE", "Deformation", 0.1622, false},
      {"GR", "Branch pipe", 0.0901, false},
      {"AF", "Settled deposits", 0.0811, false},
  });
  return table;
}

ClassTable ClassTable::subset(const std::vector<std::string>& codes) const {
  std::vector<ClassEntry> picked;
  for (const auto& c : codes) {
    auto idx = index_of(c);
    if (!idx) throw SchemaError("unknown class code " + c);
    picked.push_back(entries_[*idx]);
  }
  return ClassTable(std::move(picked));
}

ClassTable ClassTable::first(std::size_t n) const {
  if (n > entries_.size()) {
    throw ConfigError("requested " + std::to_string(n) + " classes from a table of " + std::to_string(entries_.size()));
  }
  return ClassTable(std::vector<ClassEntry>(entries_.begin(), entries_.begin() + static_cast<long>(n)));
}

std::optional<std::size_t> ClassTable::index_of(std::string_view code) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].code == code) return i;
  return std::nullopt;
}

std::vector<std::string> ClassTable::codes() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.code);
  return out;
}

std::vector<std::size_t> ClassTable::bottleneck_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].bottleneck) out.push_back(i);
  return out;
}

double ClassTable::ciw_sum() const {
  double s = 0.0;
  for (const auto& e : entries_) s += e.ciw;
  return s;
}

}  // namespace maq2l
