#pragma once

#include <string>
#include <vector>

namespace mulform {

/// One named residual with its tolerance. For margin checks (`lower_bound`)
/// the value must be at least the tolerance instead of below it.
struct CheckEntry {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool lower_bound = false;
  bool pass = true;
  bool skipped = false;
  std::vector<double> worst_point;
  std::string note;
};

class CheckReport {
 public:
  CheckEntry& add(std::string name, double residual, double tolerance, std::vector<double> worst_point = {},
                  std::string note = {});
  CheckEntry& add_margin(std::string name, double value, double minimum, std::vector<double> worst_point = {},
                         std::string note = {});
  CheckEntry& add_skipped(std::string name, std::string note);

  /// Appends the entries of `other`, prefixing their names.
  void merge(const CheckReport& other, const std::string& prefix = {});

  bool passed() const;
  const std::vector<CheckEntry>& entries() const { return entries_; }
  const CheckEntry* find(const std::string& name) const;

 private:
  std::vector<CheckEntry> entries_;
};

/// Running maximum of a residual together with the sample that produced it.
struct WorstCase {
  double value = 0.0;
  std::vector<double> point;

  void update(double v, const std::vector<double>& at) {
    if (!(v <= value)) {  // NaN always wins, so it cannot hide
      value = v;
      point = at;
    }
  }
};

/// Running minimum, for margins.
struct BestCase {
  double value = 1e300;
  std::vector<double> point;

  void update(double v, const std::vector<double>& at) {
    if (!(v >= value)) {
      value = v;
      point = at;
    }
  }
};

}  // namespace mulform
