#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtc/model.hpp"

namespace dtc {

// What is recorded once per Floquet cycle.
enum class ObservableKind { GlobalZ, LocalZ, GlobalX };

struct Observable {
  ObservableKind kind = ObservableKind::GlobalZ;
  int site = 0;  // LocalZ only

  std::string label() const {
    switch (kind) {
      case ObservableKind::GlobalZ: return "globalZ";
      case ObservableKind::LocalZ: return "localZ(" + std::to_string(site) + ")";
      case ObservableKind::GlobalX: return "globalX";
    }
    return "?";
  }
};

// Observable values sampled once per cycle (after the pulse), normalized so
// values[0] = 1 at the initial polarization.
struct TimeTrace {
  Protocol protocol = Protocol::ToyModel;
  double epsilon = 0.0;
  double period = 0.0;
  uint64_t seed = 0;
  Observable observable;
  std::vector<double> values;
};

}  // namespace dtc
