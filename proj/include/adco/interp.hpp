// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "adco/graph.hpp"

namespace adco {

using TensorMap = std::map<std::string, DenseTensor>;

// Evaluate one node on already-bound input values. Exposed so constant
// folding can reuse the interpreter kernels.
DenseTensor eval_node(const Graph& g, const Node& n,
                      const std::vector<const DenseTensor*>& inputs);

// Reference execution. All arithmetic is f64 internally; graph outputs are
// cast to f32 precision on return. Deterministic: identical inputs produce
// bit-identical outputs.
TensorMap interpret(const Graph& g, const TensorMap& inputs);

// Same walk, but returns every tensor in the graph (inputs, constants,
// intermediates, outputs). Used by calibration.
TensorMap interpret_all(const Graph& g, const TensorMap& inputs);

}  // namespace adco
