#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mufuru/cells.hpp"

namespace mufuru {

/// A saved model: the cell plus any named auxiliary matrices (classifier or
/// language-model heads, embedding tables). Matrices are stored row-major as
/// 64-bit floats in declared order; load(save(c)) round-trips bit-exactly.
struct Checkpoint {
  Cell cell;
  std::vector<std::pair<std::string, Tensor>> extras;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mufuru
