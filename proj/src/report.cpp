#include "mulform/report.hpp"

#include <cmath>

namespace mulform {

CheckEntry& CheckReport::add(std::string name, double residual, double tolerance, std::vector<double> worst_point,
                             std::string note) {
  CheckEntry e;
  e.name = std::move(name);
  e.residual = residual;
  e.tolerance = tolerance;
  e.pass = std::isfinite(residual) && residual < tolerance;
  e.worst_point = std::move(worst_point);
  e.note = std::move(note);
  entries_.push_back(std::move(e));
  return entries_.back();
}

CheckEntry& CheckReport::add_margin(std::string name, double value, double minimum, std::vector<double> worst_point,
                                    std::string note) {
  CheckEntry& e = add(std::move(name), value, minimum, std::move(worst_point), std::move(note));
  e.lower_bound = true;
  e.pass = std::isfinite(value) && value >= minimum;
  return e;
}

CheckEntry& CheckReport::add_skipped(std::string name, std::string note) {
  CheckEntry e;
  e.name = std::move(name);
  e.skipped = true;
  e.pass = true;
  e.residual = std::nan("");
  e.note = std::move(note);
  entries_.push_back(std::move(e));
  return entries_.back();
}

void CheckReport::merge(const CheckReport& other, const std::string& prefix) {
  for (CheckEntry e : other.entries_) {
    if (!prefix.empty()) e.name = prefix + "." + e.name;
    entries_.push_back(std::move(e));
  }
}

bool CheckReport::passed() const {
  for (const auto& e : entries_)
    if (!e.pass) return false;
  return true;
}

const CheckEntry* CheckReport::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

}  // namespace mulform
