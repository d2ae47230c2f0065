#pragma once

// Binary tensor blobs: little-endian u32 rank, u32 extents, then row-major
// float32 values.

#include <iosfwd>

#include "dense/tensor.hpp"

namespace dense {

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

}  // namespace dense
