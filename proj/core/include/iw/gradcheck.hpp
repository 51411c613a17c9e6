#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace iw::gradcheck {

struct Item {
  std::string name;
  int cases = 0;
  int entries = 0;       // gradient entries compared
  int failures = 0;
  double worst_err = 0;  // worst |analytic - fd| / max(|analytic|, |fd|, 1)
};

struct Report {
  std::vector<Item> items;
  bool all_ok() const;
};

/// Central finite-difference comparison (h = 1e-5, fp64) of every
/// differentiable operation against its recorded backward pass, at relative
/// tolerance 1e-4. Heavier networks compare a deterministic sample of their
/// parameter entries.
Report run_all(std::uint64_t seed = 7, int cases_per_op = 20);

void print(const Report& report, std::ostream& os);

}  // namespace iw::gradcheck
