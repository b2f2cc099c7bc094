#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace mmsada {

/// One multi-modal input: per modality a row-major window_len x input_dim matrix.
struct WindowSample {
  std::size_t window_len = 0;
  std::vector<std::vector<double>> modalities;
};

/// A training example with its domain bit d (1 = source), correspondence bit
/// c (1 = modalities from the same action) and, for labelled source
/// examples only, the class index y.
struct LabeledExample {
  WindowSample window;
  std::optional<std::size_t> y;
  int d = 1;
  int c = 1;
};

}  // namespace mmsada
