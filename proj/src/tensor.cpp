// SPDX-License-Identifier: Apache-2.0
#include "adco/tensor.hpp"

#include <sstream>

namespace adco {

const char* dtype_name(DType d) { return d == DType::F32 ? "f32" : "i8"; }

DType dtype_from_name(const std::string& s) {
    if (s == "f32") return DType::F32;
    if (s == "i8") return DType::I8;
    fail_validation("unknown dtype '" + s + "'");
}

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<std::int64_t> row_major_strides(const std::vector<std::int64_t>& shape) {
    std::vector<std::int64_t> strides(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        strides[i] = strides[i + 1] * shape[i + 1];
    return strides;
}

std::vector<std::int64_t> broadcast_shapes(const std::vector<std::int64_t>& a,
                                           const std::vector<std::int64_t>& b,
                                           const std::string& what) {
    const std::size_t rank = std::max(a.size(), b.size());
    std::vector<std::int64_t> out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1)
            fail_validation(what + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                            " are not broadcastable");
        out[rank - 1 - i] = std::max(da, db);
    }
    return out;
}

DenseTensor DenseTensor::zeros(std::vector<std::int64_t> shape, DType dtype) {
    DenseTensor t;
    t.dtype = dtype;
    t.data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    t.shape = std::move(shape);
    return t;
}

DenseTensor DenseTensor::scalar(double v) {
    DenseTensor t;
    t.shape = {1};
    t.data = {v};
    return t;
}

DenseTensor DenseTensor::from_flat(std::vector<std::int64_t> shape, std::vector<double> values,
                                   DType dtype) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
        fail_validation("tensor data size " + std::to_string(values.size()) +
                        " does not match shape " + shape_str(shape));
    DenseTensor t;
    t.shape = std::move(shape);
    t.data = std::move(values);
    t.dtype = dtype;
    return t;
}

}  // namespace adco
