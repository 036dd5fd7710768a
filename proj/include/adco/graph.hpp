// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "adco/tensor.hpp"

namespace adco {

// Operator inventory. Fused* and Quantize/Dequantize never appear in freshly
// parsed model files; only passes introduce them.
enum class NodeKind {
    Constant,
    MatMul,
    Conv2d,
    Add,
    Mul,
    Relu,
    Softmax,
    Scale,
    LayerNorm,
    Transpose,
    Reshape,
    GridSample,
    Rotate,
    Inverse,
    ModulatedDeformConv2d,
    FusedMHA,
    FusedMSDA,
    FusedConvAdd,
    FusedMatMulAdd,
    Quantize,
    Dequantize,
};

enum class ModuleTag { Backbone, BevEncoder, Track, Map, Motion, Occ, Seg, Planner, Other };

const char* node_kind_name(NodeKind k);
NodeKind node_kind_from_name(const std::string& s);
const char* module_tag_name(ModuleTag t);
ModuleTag module_tag_from_name(const std::string& s);

constexpr int kModuleTagCount = 9;

using AttrValue = std::variant<std::int64_t, double, std::vector<std::int64_t>>;
using AttrMap = std::map<std::string, AttrValue>;

struct TensorSpec {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::int64_t> shape;

    bool operator==(const TensorSpec&) const = default;
};

struct Node {
    std::string id;
    NodeKind kind = NodeKind::Constant;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    AttrMap attrs;
    ModuleTag tag = ModuleTag::Other;

    bool operator==(const Node&) const = default;

    std::int64_t attr_int(const std::string& key, std::int64_t fallback) const;
    double attr_double(const std::string& key, double fallback) const;
    const std::vector<std::int64_t>* attr_ints(const std::string& key) const;
};

// DAG of typed operator nodes. Tensors in `constants` are bound values: either
// bare initializers (no producer) or the outputs of Constant nodes. Immutable
// by convention once validated; passes copy and rewrite.
struct Graph {
    std::vector<Node> nodes;
    std::map<std::string, TensorSpec> tensors;
    std::vector<std::string> graph_inputs;
    std::vector<std::string> graph_outputs;
    std::map<std::string, DenseTensor> constants;

    bool operator==(const Graph&) const = default;

    const Node* find_node(const std::string& id) const;
    const TensorSpec& tensor_spec(const std::string& name) const;
    bool is_constant(const std::string& name) const { return constants.count(name) > 0; }
};

// Index over a fixed graph: producers and consumers by tensor name, node
// lookup by id. Invalidated by any graph mutation.
struct GraphIndex {
    explicit GraphIndex(const Graph& g);

    const Graph* graph;
    std::map<std::string, int> node_index;               // id -> position in g.nodes
    std::map<std::string, int> producer;                 // tensor -> producing node position
    std::map<std::string, std::vector<int>> consumers;   // tensor -> consuming node positions

    const Node* producer_of(const std::string& tensor) const;
    int consumer_count(const std::string& tensor) const;
};

// Per-kind arity contract: {min_inputs, max_inputs, outputs}. max_inputs of -1
// means "validated by a kind-specific rule" (FusedMHA: 3 or 6; FusedMSDA: 3k).
struct ArityRule {
    int min_inputs;
    int max_inputs;
    int outputs;
};
ArityRule arity_rule(NodeKind k);

// Throws a validation error naming the offending node/tensor if any graph
// invariant is violated (dangling tensors, arity, double producers, cycles,
// shape inconsistencies).
void validate_graph(const Graph& g);

// Deterministic topological order: ready nodes are emitted in lexicographic
// node-id order. Throws listing the cycle's node ids if the graph is cyclic.
std::vector<std::string> topo_sort(const Graph& g);

// Output specs (dtype + shape) implied by the node's inputs and attributes.
// Used by validation and by passes that create new tensors.
std::vector<TensorSpec> infer_output_specs(const Graph& g, const Node& n);

}  // namespace adco
