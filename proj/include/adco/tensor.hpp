// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adco/error.hpp"

namespace adco {

enum class DType { F32, I8 };

const char* dtype_name(DType d);
DType dtype_from_name(const std::string& s);

inline int dtype_byte_size(DType d) { return d == DType::F32 ? 4 : 1; }

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);
std::string shape_str(const std::vector<std::int64_t>& shape);
std::vector<std::int64_t> row_major_strides(const std::vector<std::int64_t>& shape);

// NumPy-style broadcast of two shapes; fails with a validation error if the
// shapes are incompatible. `what` names the offender in the message.
std::vector<std::int64_t> broadcast_shapes(const std::vector<std::int64_t>& a,
                                           const std::vector<std::int64_t>& b,
                                           const std::string& what);

// Dense row-major tensor. Values are held as f64 regardless of declared
// dtype; I8 tensors hold integer-valued doubles.
struct DenseTensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;
    DType dtype = DType::F32;

    bool operator==(const DenseTensor&) const = default;

    std::int64_t numel() const { return shape_numel(shape); }
    int rank() const { return static_cast<int>(shape.size()); }

    static DenseTensor zeros(std::vector<std::int64_t> shape, DType dtype = DType::F32);
    static DenseTensor scalar(double v);
    static DenseTensor from_flat(std::vector<std::int64_t> shape, std::vector<double> values,
                                 DType dtype = DType::F32);
};

}  // namespace adco
