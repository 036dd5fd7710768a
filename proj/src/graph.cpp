// SPDX-License-Identifier: Apache-2.0
#include "adco/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

namespace adco {

namespace {

struct KindInfo {
    NodeKind kind;
    const char* name;
    ArityRule arity;
};

// clang-format off
constexpr KindInfo kKindTable[] = {
    {NodeKind::Constant,              "Constant",              {0, 0, 1}},
    {NodeKind::MatMul,                "MatMul",                {2, 2, 1}},
    {NodeKind::Conv2d,                "Conv2d",                {2, 2, 1}},
    {NodeKind::Add,                   "Add",                   {2, 2, 1}},
    {NodeKind::Mul,                   "Mul",                   {2, 2, 1}},
    {NodeKind::Relu,                  "Relu",                  {1, 1, 1}},
    {NodeKind::Softmax,               "Softmax",               {1, 1, 1}},
    {NodeKind::Scale,                 "Scale",                 {1, 1, 1}},
    {NodeKind::LayerNorm,             "LayerNorm",             {3, 3, 1}},
    {NodeKind::Transpose,             "Transpose",             {1, 1, 1}},
    {NodeKind::Reshape,               "Reshape",               {1, 1, 1}},
    {NodeKind::GridSample,            "GridSample",            {2, 2, 1}},
    {NodeKind::Rotate,                "Rotate",                {1, 1, 1}},
    {NodeKind::Inverse,               "Inverse",               {1, 1, 1}},
    {NodeKind::ModulatedDeformConv2d, "ModulatedDeformConv2d", {4, 4, 1}},
    {NodeKind::FusedMHA,              "FusedMHA",              {3, 6, 1}},
    {NodeKind::FusedMSDA,             "FusedMSDA",             {6, -1, 1}},
    {NodeKind::FusedConvAdd,          "FusedConvAdd",          {3, 3, 1}},
    {NodeKind::FusedMatMulAdd,        "FusedMatMulAdd",        {3, 3, 1}},
    {NodeKind::Quantize,              "Quantize",              {1, 1, 1}},
    {NodeKind::Dequantize,            "Dequantize",            {1, 1, 1}},
};

constexpr const char* kTagNames[kModuleTagCount] = {
    "backbone", "bev_encoder", "track", "map", "motion", "occ", "seg", "planner", "other",
};
// clang-format on

const KindInfo& kind_info(NodeKind k) { return kKindTable[static_cast<int>(k)]; }

}  // namespace

const char* node_kind_name(NodeKind k) { return kind_info(k).name; }

NodeKind node_kind_from_name(const std::string& s) {
    for (const auto& info : kKindTable)
        if (s == info.name) return info.kind;
    fail_validation("unknown node kind '" + s + "'");
}

const char* module_tag_name(ModuleTag t) { return kTagNames[static_cast<int>(t)]; }

ModuleTag module_tag_from_name(const std::string& s) {
    for (int i = 0; i < kModuleTagCount; ++i)
        if (s == kTagNames[i]) return static_cast<ModuleTag>(i);
    fail_validation("unknown module tag '" + s + "'");
}

ArityRule arity_rule(NodeKind k) { return kind_info(k).arity; }

std::int64_t Node::attr_int(const std::string& key, std::int64_t fallback) const {
    auto it = attrs.find(key);
    if (it == attrs.end()) return fallback;
    if (auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
    fail_validation("node '" + id + "': attribute '" + key + "' is not an integer");
}

double Node::attr_double(const std::string& key, double fallback) const {
    auto it = attrs.find(key);
    if (it == attrs.end()) return fallback;
    if (auto* v = std::get_if<double>(&it->second)) return *v;
    if (auto* v = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*v);
    fail_validation("node '" + id + "': attribute '" + key + "' is not numeric");
}

const std::vector<std::int64_t>* Node::attr_ints(const std::string& key) const {
    auto it = attrs.find(key);
    if (it == attrs.end()) return nullptr;
    if (auto* v = std::get_if<std::vector<std::int64_t>>(&it->second)) return v;
    fail_validation("node '" + id + "': attribute '" + key + "' is not an int list");
}

const Node* Graph::find_node(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

const TensorSpec& Graph::tensor_spec(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail_validation("tensor '" + name + "' is not declared");
    return it->second;
}

GraphIndex::GraphIndex(const Graph& g) : graph(&g) {
    for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) {
        const Node& n = g.nodes[i];
        node_index.emplace(n.id, i);
        for (const auto& out : n.outputs) producer.emplace(out, i);
        for (const auto& in : n.inputs) consumers[in].push_back(i);
    }
}

const Node* GraphIndex::producer_of(const std::string& tensor) const {
    auto it = producer.find(tensor);
    return it == producer.end() ? nullptr : &graph->nodes[it->second];
}

int GraphIndex::consumer_count(const std::string& tensor) const {
    auto it = consumers.find(tensor);
    return it == consumers.end() ? 0 : static_cast<int>(it->second.size());
}

namespace {

void check_arity(const Node& n) {
    const ArityRule rule = arity_rule(n.kind);
    const int nin = static_cast<int>(n.inputs.size());
    const int nout = static_cast<int>(n.outputs.size());
    bool ok = nin >= rule.min_inputs && (rule.max_inputs < 0 || nin <= rule.max_inputs);
    if (n.kind == NodeKind::FusedMHA) ok = (nin == 3 || nin == 6);
    if (n.kind == NodeKind::FusedMSDA) ok = (nin >= 6 && nin % 3 == 0);
    if (!ok)
        fail_validation("node '" + n.id + "' (" + node_kind_name(n.kind) + "): bad input arity " +
                        std::to_string(nin));
    if (nout != rule.outputs)
        fail_validation("node '" + n.id + "' (" + node_kind_name(n.kind) + "): bad output arity " +
                        std::to_string(nout));
}

std::vector<std::string> find_cycle(const Graph& g, const GraphIndex& idx,
                                    const std::vector<bool>& emitted) {
    // DFS over the nodes Kahn could not emit; returns one concrete cycle.
    const int n = static_cast<int>(g.nodes.size());
    std::vector<int> color(n, 0);  // 0 white, 1 gray, 2 black
    std::vector<int> stack, cycle;

    auto dfs = [&](auto&& self, int u) -> bool {
        color[u] = 1;
        stack.push_back(u);
        for (const auto& out : g.nodes[u].outputs) {
            auto it = idx.consumers.find(out);
            if (it == idx.consumers.end()) continue;
            for (int v : it->second) {
                if (emitted[v]) continue;
                if (color[v] == 1) {
                    auto pos = std::find(stack.begin(), stack.end(), v);
                    cycle.assign(pos, stack.end());
                    return true;
                }
                if (color[v] == 0 && self(self, v)) return true;
            }
        }
        color[u] = 2;
        stack.pop_back();
        return false;
    };

    for (int i = 0; i < n; ++i)
        if (!emitted[i] && color[i] == 0 && dfs(dfs, i)) break;

    std::vector<std::string> ids;
    for (int i : cycle) ids.push_back(g.nodes[i].id);
    return ids;
}

}  // namespace

std::vector<std::string> topo_sort(const Graph& g) {
    GraphIndex idx(g);
    const int n = static_cast<int>(g.nodes.size());
    std::vector<int> indegree(n, 0);
    for (int i = 0; i < n; ++i)
        for (const auto& in : g.nodes[i].inputs)
            if (idx.producer.count(in)) ++indegree[i];

    // min-heap on node id for the deterministic tie-break
    auto cmp = [&](int a, int b) { return g.nodes[a].id > g.nodes[b].id; };
    std::priority_queue<int, std::vector<int>, decltype(cmp)> ready(cmp);
    for (int i = 0; i < n; ++i)
        if (indegree[i] == 0) ready.push(i);

    std::vector<std::string> order;
    std::vector<bool> emitted(n, false);
    while (!ready.empty()) {
        const int u = ready.top();
        ready.pop();
        emitted[u] = true;
        order.push_back(g.nodes[u].id);
        for (const auto& out : g.nodes[u].outputs) {
            auto it = idx.consumers.find(out);
            if (it == idx.consumers.end()) continue;
            for (int v : it->second)
                if (--indegree[v] == 0) ready.push(v);
        }
    }
    if (static_cast<int>(order.size()) != n) {
        auto cycle = find_cycle(g, idx, emitted);
        std::ostringstream os;
        os << "graph contains a cycle:";
        for (const auto& id : cycle) os << " '" << id << "'";
        fail_validation(os.str());
    }
    return order;
}

namespace {

using Shape = std::vector<std::int64_t>;

Shape conv_out_shape(const Node& n, const Shape& x, const Shape& w) {
    if (x.size() != 4 || w.size() != 4)
        fail_validation("node '" + n.id + "': conv expects 4-d input and weight, got " +
                        shape_str(x) + " and " + shape_str(w));
    const std::int64_t stride = n.attr_int("stride", 1);
    const std::int64_t pad = n.attr_int("padding", 0);
    if (stride < 1 || pad < 0) fail_validation("node '" + n.id + "': bad stride/padding");
    if (x[1] != w[1])
        fail_validation("node '" + n.id + "': channel mismatch " + shape_str(x) + " vs " +
                        shape_str(w));
    const std::int64_t ho = (x[2] + 2 * pad - w[2]) / stride + 1;
    const std::int64_t wo = (x[3] + 2 * pad - w[3]) / stride + 1;
    if (ho < 1 || wo < 1) fail_validation("node '" + n.id + "': kernel larger than padded input");
    return {x[0], w[0], ho, wo};
}

Shape matmul_out_shape(const Node& n, const Shape& a, const Shape& b) {
    if (a.size() < 2 || b.size() < 2)
        fail_validation("node '" + n.id + "': matmul operands must have rank >= 2");
    const std::int64_t m = a[a.size() - 2], k = a[a.size() - 1];
    const std::int64_t k2 = b[b.size() - 2], p = b[b.size() - 1];
    if (k != k2)
        fail_validation("node '" + n.id + "': inner dims disagree, " + shape_str(a) + " x " +
                        shape_str(b));
    Shape abatch(a.begin(), a.end() - 2), bbatch(b.begin(), b.end() - 2);
    Shape batch = broadcast_shapes(abatch, bbatch, "node '" + n.id + "' batch dims");
    batch.push_back(m);
    batch.push_back(p);
    return batch;
}

}  // namespace

std::vector<TensorSpec> infer_output_specs(const Graph& g, const Node& n) {
    auto in_spec = [&](int i) -> const TensorSpec& { return g.tensor_spec(n.inputs[i]); };
    auto in_shape = [&](int i) -> const Shape& { return in_spec(i).shape; };
    auto out = [&](Shape shape, DType dt = DType::F32) {
        return std::vector<TensorSpec>{TensorSpec{n.outputs[0], dt, std::move(shape)}};
    };

    // dtype discipline: Quantize consumes f32 and yields i8, Dequantize the
    // reverse; every other compute kind is f32 end to end.
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const DType dt = g.tensor_spec(n.inputs[i]).dtype;
        const DType want = n.kind == NodeKind::Dequantize ? DType::I8 : DType::F32;
        if (dt != want)
            fail_validation("node '" + n.id + "': input '" + n.inputs[i] + "' has dtype " +
                            dtype_name(dt) + ", expected " + dtype_name(want));
    }

    switch (n.kind) {
        case NodeKind::Constant: {
            auto it = g.constants.find(n.outputs[0]);
            if (it == g.constants.end())
                fail_validation("Constant node '" + n.id + "': output '" + n.outputs[0] +
                                "' has no bound value");
            return out(it->second.shape, it->second.dtype);
        }
        case NodeKind::MatMul:
            return out(matmul_out_shape(n, in_shape(0), in_shape(1)));
        case NodeKind::Conv2d:
            return out(conv_out_shape(n, in_shape(0), in_shape(1)));
        case NodeKind::Add:
        case NodeKind::Mul:
            return out(broadcast_shapes(in_shape(0), in_shape(1), "node '" + n.id + "'"));
        case NodeKind::Relu:
        case NodeKind::Rotate:
            return out(in_shape(0));
        case NodeKind::Softmax: {
            const auto& s = in_shape(0);
            std::int64_t axis = n.attr_int("axis", -1);
            if (axis < 0) axis += static_cast<std::int64_t>(s.size());
            if (axis < 0 || axis >= static_cast<std::int64_t>(s.size()))
                fail_validation("node '" + n.id + "': softmax axis out of range");
            return out(s);
        }
        case NodeKind::Scale:
            if (!n.attrs.count("value"))
                fail_validation("node '" + n.id + "': Scale requires a 'value' attribute");
            return out(in_shape(0));
        case NodeKind::LayerNorm: {
            const auto& x = in_shape(0);
            const std::int64_t c = x.back();
            if (in_shape(1) != Shape{c} || in_shape(2) != Shape{c})
                fail_validation("node '" + n.id + "': LayerNorm gamma/beta must have shape [" +
                                std::to_string(c) + "]");
            return out(x);
        }
        case NodeKind::Transpose: {
            const auto& x = in_shape(0);
            const auto* perm = n.attr_ints("perm");
            if (!perm || perm->size() != x.size())
                fail_validation("node '" + n.id + "': Transpose perm must match rank " +
                                std::to_string(x.size()));
            std::vector<bool> seen(x.size(), false);
            Shape shape(x.size());
            for (std::size_t i = 0; i < perm->size(); ++i) {
                const std::int64_t p = (*perm)[i];
                if (p < 0 || p >= static_cast<std::int64_t>(x.size()) || seen[p])
                    fail_validation("node '" + n.id + "': perm is not a permutation");
                seen[p] = true;
                shape[i] = x[p];
            }
            return out(shape);
        }
        case NodeKind::Reshape: {
            const auto* shape = n.attr_ints("shape");
            if (!shape) fail_validation("node '" + n.id + "': Reshape requires 'shape'");
            for (auto d : *shape)
                if (d < 1) fail_validation("node '" + n.id + "': reshape dims must be >= 1");
            if (shape_numel(*shape) != shape_numel(in_shape(0)))
                fail_validation("node '" + n.id + "': reshape element count mismatch, " +
                                shape_str(in_shape(0)) + " -> " + shape_str(*shape));
            return out(*shape);
        }
        case NodeKind::GridSample: {
            const auto& x = in_shape(0);
            const auto& grid = in_shape(1);
            if (x.size() != 4 || grid.size() != 4 || grid[3] != 2 || grid[0] != x[0])
                fail_validation("node '" + n.id + "': GridSample expects x [N,C,H,W], grid " +
                                "[N,Hg,Wg,2]; got " + shape_str(x) + " and " + shape_str(grid));
            return out({x[0], x[1], grid[1], grid[2]});
        }
        case NodeKind::Inverse: {
            const auto& x = in_shape(0);
            if (x.size() < 2 || x[x.size() - 1] != x[x.size() - 2])
                fail_validation("node '" + n.id + "': Inverse needs square trailing dims, got " +
                                shape_str(x));
            return out(x);
        }
        case NodeKind::ModulatedDeformConv2d: {
            Shape base = conv_out_shape(n, in_shape(0), in_shape(1));
            const auto& w = in_shape(1);
            const std::int64_t taps = w[2] * w[3];
            const Shape want_off = {base[0], 2 * taps, base[2], base[3]};
            const Shape want_mask = {base[0], taps, base[2], base[3]};
            if (in_shape(2) != want_off)
                fail_validation("node '" + n.id + "': offset shape " + shape_str(in_shape(2)) +
                                ", expected " + shape_str(want_off));
            if (in_shape(3) != want_mask)
                fail_validation("node '" + n.id + "': mask shape " + shape_str(in_shape(3)) +
                                ", expected " + shape_str(want_mask));
            return out(base);
        }
        case NodeKind::FusedMHA: {
            Shape q, kt, v;
            if (n.inputs.size() == 3) {
                q = in_shape(0);
                kt = in_shape(1);
                v = in_shape(2);
            } else {
                q = matmul_out_shape(n, in_shape(0), in_shape(1));
                kt = matmul_out_shape(n, in_shape(2), in_shape(3));
                v = matmul_out_shape(n, in_shape(4), in_shape(5));
            }
            Shape attn = matmul_out_shape(n, q, kt);
            return out(matmul_out_shape(n, attn, v));
        }
        case NodeKind::FusedMSDA: {
            const int branches = static_cast<int>(n.inputs.size()) / 3;
            Shape acc;
            for (int b = 0; b < branches; ++b) {
                const auto& x = in_shape(3 * b);
                const auto& grid = in_shape(3 * b + 1);
                if (x.size() != 4 || grid.size() != 4 || grid[3] != 2 || grid[0] != x[0])
                    fail_validation("node '" + n.id + "': bad sampling branch " +
                                    std::to_string(b));
                Shape s = {x[0], x[1], grid[1], grid[2]};
                s = broadcast_shapes(s, in_shape(3 * b + 2), "node '" + n.id + "' weights");
                acc = b == 0 ? s : broadcast_shapes(acc, s, "node '" + n.id + "' branches");
            }
            return out(acc);
        }
        case NodeKind::FusedConvAdd: {
            Shape base = conv_out_shape(n, in_shape(0), in_shape(1));
            return out(broadcast_shapes(base, in_shape(2), "node '" + n.id + "' bias"));
        }
        case NodeKind::FusedMatMulAdd: {
            Shape base = matmul_out_shape(n, in_shape(0), in_shape(1));
            return out(broadcast_shapes(base, in_shape(2), "node '" + n.id + "' bias"));
        }
        case NodeKind::Quantize:
            return out(in_shape(0), DType::I8);
        case NodeKind::Dequantize:
            return out(in_shape(0), DType::F32);
    }
    fail_validation("node '" + n.id + "': unhandled kind");
}

void validate_graph(const Graph& g) {
    // tensor declarations
    for (const auto& [name, spec] : g.tensors) {
        if (name != spec.name)
            fail_validation("tensor map key '" + name + "' disagrees with spec name '" +
                            spec.name + "'");
        if (spec.shape.empty()) fail_validation("tensor '" + name + "': empty shape");
        for (auto d : spec.shape)
            if (d < 1) fail_validation("tensor '" + name + "': non-positive dim in " +
                                       shape_str(spec.shape));
    }

    std::set<std::string> ids;
    std::map<std::string, const Node*> producer;
    for (const auto& n : g.nodes) {
        if (n.id.empty()) fail_validation("node with empty id");
        if (!ids.insert(n.id).second) fail_validation("duplicate node id '" + n.id + "'");
        check_arity(n);
        for (const auto& t : n.inputs)
            if (!g.tensors.count(t))
                fail_validation("node '" + n.id + "' consumes undeclared tensor '" + t + "'");
        for (const auto& t : n.outputs) {
            if (!g.tensors.count(t))
                fail_validation("node '" + n.id + "' produces undeclared tensor '" + t + "'");
            if (!producer.emplace(t, &n).second)
                fail_validation("tensor '" + t + "' has more than one producer");
            if (n.kind == NodeKind::Constant) {
                if (!g.constants.count(t))
                    fail_validation("Constant node '" + n.id + "': no value bound for '" + t +
                                    "'");
            } else if (g.constants.count(t)) {
                fail_validation("tensor '" + t + "' is both a constant and the output of node '" +
                                n.id + "'");
            }
        }
    }

    for (const auto& [name, value] : g.constants) {
        auto it = g.tensors.find(name);
        if (it == g.tensors.end()) fail_validation("constant '" + name + "' is not declared");
        if (value.shape != it->second.shape)
            fail_validation("constant '" + name + "': value shape " + shape_str(value.shape) +
                            " disagrees with declared " + shape_str(it->second.shape));
        if (value.dtype != it->second.dtype)
            fail_validation("constant '" + name + "': value dtype disagrees with declaration");
        if (value.numel() != static_cast<std::int64_t>(value.data.size()))
            fail_validation("constant '" + name + "': data size mismatch");
    }

    std::set<std::string> seen_inputs;
    for (const auto& t : g.graph_inputs) {
        if (!g.tensors.count(t)) fail_validation("graph input '" + t + "' is not declared");
        if (!seen_inputs.insert(t).second) fail_validation("duplicate graph input '" + t + "'");
        if (producer.count(t)) fail_validation("graph input '" + t + "' is produced by a node");
        if (g.constants.count(t)) fail_validation("graph input '" + t + "' is also a constant");
        if (g.tensor_spec(t).dtype != DType::F32)
            fail_validation("graph input '" + t + "' must be f32");
    }

    std::set<std::string> seen_outputs;
    for (const auto& t : g.graph_outputs) {
        if (!g.tensors.count(t)) fail_validation("graph output '" + t + "' is not declared");
        if (!seen_outputs.insert(t).second) fail_validation("duplicate graph output '" + t + "'");
        if (!producer.count(t)) fail_validation("graph output '" + t + "' has no producer node");
    }

    for (const auto& n : g.nodes)
        for (const auto& t : n.inputs)
            if (!producer.count(t) && !g.constants.count(t) &&
                std::find(g.graph_inputs.begin(), g.graph_inputs.end(), t) ==
                    g.graph_inputs.end())
                fail_validation("node '" + n.id + "': input '" + t +
                                "' is not a graph input, constant, or node output");

    topo_sort(g);  // throws on cycles

    // shape/dtype consistency, in dependency order
    GraphIndex idx(g);
    for (const auto& id : topo_sort(g)) {
        const Node& n = g.nodes[idx.node_index.at(id)];
        const auto specs = infer_output_specs(g, n);
        for (const auto& spec : specs) {
            const TensorSpec& declared = g.tensor_spec(spec.name);
            if (declared.shape != spec.shape)
                fail_validation("node '" + n.id + "': output '" + spec.name + "' declared " +
                                shape_str(declared.shape) + " but computes " +
                                shape_str(spec.shape));
            if (declared.dtype != spec.dtype)
                fail_validation("node '" + n.id + "': output '" + spec.name +
                                "' has wrong declared dtype");
        }
    }
}

}  // namespace adco
