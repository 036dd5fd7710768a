// SPDX-License-Identifier: Apache-2.0
#include "adco/passes.hpp"

#include <algorithm>
#include <cstring>
#include <functional>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "adco/interp.hpp"

namespace adco {

using nlohmann::json;

int PassReport::accounted_delta() const {
    int d = 0;
    for (const auto& r : rewrites)
        d += static_cast<int>(r.removed.size()) - static_cast<int>(r.added.size());
    return d;
}

std::string pass_report_to_json(const PassReport& r) {
    json j = {{"pass", r.pass_name},
              {"nodes_before", r.nodes_before},
              {"nodes_after", r.nodes_after}};
    json rewrites = json::array();
    for (const auto& rw : r.rewrites)
        rewrites.push_back({{"pattern", rw.pattern}, {"removed", rw.removed}, {"added", rw.added}});
    j["rewrites"] = std::move(rewrites);
    return j.dump(1);
}

std::string pass_reports_to_json(const std::vector<PassReport>& rs) {
    json arr = json::array();
    for (const auto& r : rs) arr.push_back(json::parse(pass_report_to_json(r)));
    return arr.dump(1);
}

namespace {

// Drop tensor declarations and constant values no node or interface refers to.
void gc_tensors(Graph& g) {
    std::set<std::string> live(g.graph_inputs.begin(), g.graph_inputs.end());
    live.insert(g.graph_outputs.begin(), g.graph_outputs.end());
    for (const auto& n : g.nodes) {
        live.insert(n.inputs.begin(), n.inputs.end());
        live.insert(n.outputs.begin(), n.outputs.end());
    }
    std::erase_if(g.tensors, [&](const auto& kv) { return !live.count(kv.first); });
    std::erase_if(g.constants, [&](const auto& kv) { return !live.count(kv.first); });
}

std::map<std::string, int> topo_positions(const Graph& g) {
    std::map<std::string, int> pos;
    int i = 0;
    for (const auto& id : topo_sort(g)) pos[id] = i++;
    return pos;
}

void erase_node(Graph& g, const std::string& id) {
    std::erase_if(g.nodes, [&](const Node& n) { return n.id == id; });
}

Node* node_by_id(Graph& g, const std::string& id) {
    for (auto& n : g.nodes)
        if (n.id == id) return &n;
    return nullptr;
}

bool is_graph_output(const Graph& g, const std::string& t) {
    return std::find(g.graph_outputs.begin(), g.graph_outputs.end(), t) != g.graph_outputs.end();
}

std::optional<double> scalar_const_value(const Graph& g, const std::string& t) {
    auto it = g.constants.find(t);
    if (it == g.constants.end() || it->second.numel() != 1) return std::nullopt;
    return it->second.data[0];
}

std::string attr_key(const AttrMap& attrs) {
    std::ostringstream os;
    for (const auto& [k, v] : attrs) {
        os << k << '=';
        if (auto* i = std::get_if<std::int64_t>(&v)) os << 'i' << *i;
        if (auto* d = std::get_if<double>(&v)) {
            std::uint64_t bits;
            std::memcpy(&bits, d, 8);
            os << 'd' << bits;
        }
        if (auto* l = std::get_if<std::vector<std::int64_t>>(&v)) {
            os << 'l';
            for (auto x : *l) os << x << ',';
        }
        os << ';';
    }
    return os.str();
}

std::string value_digest(const DenseTensor& t) {
    // FNV-1a over shape and value bits; only used to group duplicate constants
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](std::uint64_t x) {
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    for (auto d : t.shape) mix(static_cast<std::uint64_t>(d));
    for (double v : t.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        mix(bits);
    }
    return std::to_string(h);
}

void replace_input_refs(Graph& g, const std::string& from, const std::string& to) {
    for (auto& n : g.nodes)
        for (auto& in : n.inputs)
            if (in == from) in = to;
}

}  // namespace

std::pair<Graph, PassReport> fold_constants(const Graph& g) {
    Graph out = g;
    PassReport rep{"fold_constants", static_cast<int>(g.nodes.size()), 0, {}};

    TensorMap values;
    for (const auto& [name, v] : out.constants) values.emplace(name, v);

    for (const auto& id : topo_sort(out)) {
        Node* n = node_by_id(out, id);
        if (n->kind == NodeKind::Constant) continue;
        bool all_const = !n->inputs.empty();
        for (const auto& t : n->inputs)
            if (!values.count(t)) {
                all_const = false;
                break;
            }
        if (!all_const) continue;

        std::vector<const DenseTensor*> in;
        for (const auto& t : n->inputs) in.push_back(&values.at(t));
        DenseTensor v = eval_node(out, *n, in);
        const std::string& tname = n->outputs[0];
        out.tensors.at(tname).dtype = v.dtype;
        out.constants[tname] = v;
        values[tname] = std::move(v);
        n->kind = NodeKind::Constant;
        n->inputs.clear();
        n->attrs.clear();
        rep.rewrites.push_back({"fold", {id}, {id}});
    }

    gc_tensors(out);
    rep.nodes_after = static_cast<int>(out.nodes.size());
    validate_graph(out);
    return {std::move(out), std::move(rep)};
}

std::pair<Graph, PassReport> eliminate_dead_nodes(const Graph& g) {
    Graph out = g;
    PassReport rep{"eliminate_dead_nodes", static_cast<int>(g.nodes.size()), 0, {}};

    // common-subexpression merge: same kind, inputs and attrs (and value, for
    // Constant nodes); the earliest node in topo order survives
    bool changed = true;
    while (changed) {
        changed = false;
        std::map<std::string, std::string> canon;  // structural key -> kept node id
        for (const auto& id : topo_sort(out)) {
            const Node& n = *node_by_id(out, id);
            std::ostringstream key;
            key << node_kind_name(n.kind) << '|';
            for (const auto& t : n.inputs) key << t << ',';
            key << '|' << attr_key(n.attrs);
            if (n.kind == NodeKind::Constant)
                key << '|' << value_digest(out.constants.at(n.outputs[0]));

            auto [it, inserted] = canon.emplace(key.str(), id);
            if (inserted) continue;
            if (is_graph_output(out, n.outputs[0])) continue;  // observable, keep

            const Node& kept = *node_by_id(out, it->second);
            replace_input_refs(out, n.outputs[0], kept.outputs[0]);
            erase_node(out, id);
            rep.rewrites.push_back({"dedup", {id}, {}});
            changed = true;
            break;  // indexes are stale; rescan
        }
    }

    // dead-node removal: reverse reachability from the graph outputs
    {
        GraphIndex idx(out);
        std::set<std::string> needed(out.graph_outputs.begin(), out.graph_outputs.end());
        auto order = topo_sort(out);
        std::set<std::string> live_nodes;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const Node& n = out.nodes[idx.node_index.at(*it)];
            bool live = false;
            for (const auto& t : n.outputs)
                if (needed.count(t)) live = true;
            if (!live) continue;
            live_nodes.insert(n.id);
            needed.insert(n.inputs.begin(), n.inputs.end());
        }
        std::vector<std::string> dead;
        for (const auto& n : out.nodes)
            if (!live_nodes.count(n.id)) dead.push_back(n.id);
        for (const auto& id : dead) {
            erase_node(out, id);
            rep.rewrites.push_back({"dce", {id}, {}});
        }
    }

    gc_tensors(out);
    rep.nodes_after = static_cast<int>(out.nodes.size());
    validate_graph(out);
    return {std::move(out), std::move(rep)};
}

std::pair<Graph, PassReport> fuse_basic(const Graph& g) {
    Graph out = g;
    PassReport rep{"fuse_basic", static_cast<int>(g.nodes.size()), 0, {}};

    bool found = true;
    while (found) {
        found = false;
        GraphIndex idx(out);
        for (const auto& id : topo_sort(out)) {
            const Node& a = out.nodes[idx.node_index.at(id)];
            if (a.kind != NodeKind::Conv2d && a.kind != NodeKind::MatMul) continue;
            const std::string t = a.outputs[0];
            if (is_graph_output(out, t) || idx.consumer_count(t) != 1) continue;
            const Node& b = out.nodes[idx.consumers.at(t)[0]];
            if (b.kind != NodeKind::Add) continue;
            if (b.inputs[0] == t && b.inputs[1] == t) continue;  // Add(t, t): t stays observable
            const std::string bias = b.inputs[0] == t ? b.inputs[1] : b.inputs[0];

            Node fused;
            fused.id = b.id;
            fused.kind =
                a.kind == NodeKind::Conv2d ? NodeKind::FusedConvAdd : NodeKind::FusedMatMulAdd;
            fused.inputs = {a.inputs[0], a.inputs[1], bias};
            fused.outputs = b.outputs;
            fused.attrs = a.attrs;
            fused.tag = b.tag;

            const std::string pattern = a.kind == NodeKind::Conv2d ? "conv_add" : "matmul_add";
            rep.rewrites.push_back({pattern, {a.id, b.id}, {fused.id}});
            *node_by_id(out, b.id) = std::move(fused);
            erase_node(out, a.id);
            found = true;
            break;
        }
    }

    gc_tensors(out);
    rep.nodes_after = static_cast<int>(out.nodes.size());
    validate_graph(out);
    return {std::move(out), std::move(rep)};
}

namespace {

// Matches MatMul -> (Scale | Mul-by-scalar-constant) -> Softmax -> MatMul with
// every intermediate single-consumer and unobservable. Fills the rewrite in
// `out` and returns true on success.
bool try_fuse_mha(Graph& out, PassReport& rep) {
    GraphIndex idx(out);
    for (const auto& id : topo_sort(out)) {
        const Node& sm = out.nodes[idx.node_index.at(id)];
        if (sm.kind != NodeKind::Softmax) continue;
        const auto& in_shape = out.tensor_spec(sm.inputs[0]).shape;
        std::int64_t axis = sm.attr_int("axis", -1);
        if (axis < 0) axis += static_cast<std::int64_t>(in_shape.size());
        if (axis != static_cast<std::int64_t>(in_shape.size()) - 1) continue;

        const std::string sm_in = sm.inputs[0];
        if (is_graph_output(out, sm_in) || idx.consumer_count(sm_in) != 1) continue;
        const Node* scale_node = idx.producer_of(sm_in);
        if (!scale_node) continue;

        double scale = 1.0;
        std::string qk_out;
        if (scale_node->kind == NodeKind::Scale) {
            scale = scale_node->attr_double("value", 1.0);
            qk_out = scale_node->inputs[0];
        } else if (scale_node->kind == NodeKind::Mul) {
            auto s0 = scalar_const_value(out, scale_node->inputs[0]);
            auto s1 = scalar_const_value(out, scale_node->inputs[1]);
            if (s1) {
                scale = *s1;
                qk_out = scale_node->inputs[0];
            } else if (s0) {
                scale = *s0;
                qk_out = scale_node->inputs[1];
            } else {
                continue;
            }
        } else {
            continue;
        }

        if (is_graph_output(out, qk_out) || idx.consumer_count(qk_out) != 1) continue;
        const Node* qk = idx.producer_of(qk_out);
        if (!qk || qk->kind != NodeKind::MatMul) continue;

        const std::string sm_out = sm.outputs[0];
        if (is_graph_output(out, sm_out) || idx.consumer_count(sm_out) != 1) continue;
        const Node* av = &out.nodes[idx.consumers.at(sm_out)[0]];
        if (av->kind != NodeKind::MatMul || av->inputs[0] != sm_out) continue;

        const std::string q = qk->inputs[0], kt = qk->inputs[1], v = av->inputs[1];

        // optionally absorb the three projection MatMuls feeding Q, K^T and V
        auto absorbable = [&](const std::string& t) -> const Node* {
            if (is_graph_output(out, t) || idx.consumer_count(t) != 1) return nullptr;
            const Node* p = idx.producer_of(t);
            return p && p->kind == NodeKind::MatMul ? p : nullptr;
        };
        const Node* pq = absorbable(q);
        const Node* pk = absorbable(kt);
        const Node* pv = absorbable(v);
        const bool absorb = pq && pk && pv && pq != pk && pk != pv && pq != pv;

        Node fused;
        fused.id = av->id;
        fused.kind = NodeKind::FusedMHA;
        fused.outputs = av->outputs;
        fused.attrs = {{"scale", scale}};
        fused.tag = av->tag;

        Rewrite rw{"mha", {}, {fused.id}};
        if (absorb) {
            fused.inputs = {pq->inputs[0], pq->inputs[1], pk->inputs[0],
                            pk->inputs[1], pv->inputs[0], pv->inputs[1]};
            rw.removed = {pq->id, pk->id, pv->id};
        } else {
            fused.inputs = {q, kt, v};
        }
        rw.removed.insert(rw.removed.end(), {qk->id, scale_node->id, sm.id, av->id});

        std::vector<std::string> to_erase = {qk->id, scale_node->id, sm.id};
        if (absorb) to_erase.insert(to_erase.end(), {pq->id, pk->id, pv->id});
        *node_by_id(out, av->id) = std::move(fused);
        for (const auto& e : to_erase) erase_node(out, e);
        rep.rewrites.push_back(std::move(rw));
        return true;
    }
    return false;
}

// Matches a tree of Adds over Mul(GridSample(v, g), w) branches; every
// intermediate single-consumer and unobservable.
bool try_fuse_msda(Graph& out, PassReport& rep) {
    GraphIndex idx(out);
    auto absorbed_add = [&](const std::string& t) -> const Node* {
        if (is_graph_output(out, t) || idx.consumer_count(t) != 1) return nullptr;
        const Node* p = idx.producer_of(t);
        return p && p->kind == NodeKind::Add ? p : nullptr;
    };

    for (const auto& id : topo_sort(out)) {
        const Node& root = out.nodes[idx.node_index.at(id)];
        if (root.kind != NodeKind::Add) continue;
        // roots are Adds not themselves absorbable into a consumer Add
        const std::string rt = root.outputs[0];
        if (!is_graph_output(out, rt) && idx.consumer_count(rt) == 1) {
            const auto& c = out.nodes[idx.consumers.at(rt)[0]];
            if (c.kind == NodeKind::Add) continue;
        }

        std::vector<std::string> leaves;
        std::vector<std::string> inner_adds;
        std::function<void(const Node&)> expand = [&](const Node& n) {
            for (const auto& t : n.inputs) {
                if (const Node* p = absorbed_add(t)) {
                    inner_adds.push_back(p->id);
                    expand(*p);
                } else {
                    leaves.push_back(t);
                }
            }
        };
        expand(root);
        if (leaves.size() < 2) continue;

        struct Branch {
            std::string v, grid, w, mul_id, gs_id;
        };
        std::vector<Branch> branches;
        bool ok = true;
        for (const auto& leaf : leaves) {
            if (is_graph_output(out, leaf) || idx.consumer_count(leaf) != 1) {
                ok = false;
                break;
            }
            const Node* mul = idx.producer_of(leaf);
            if (!mul || mul->kind != NodeKind::Mul) {
                ok = false;
                break;
            }
            auto sampled = [&](const std::string& t) -> const Node* {
                if (is_graph_output(out, t) || idx.consumer_count(t) != 1) return nullptr;
                const Node* p = idx.producer_of(t);
                return p && p->kind == NodeKind::GridSample ? p : nullptr;
            };
            const Node* gs = sampled(mul->inputs[0]);
            std::string w = mul->inputs[1];
            if (!gs) {
                gs = sampled(mul->inputs[1]);
                w = mul->inputs[0];
            }
            if (!gs) {
                ok = false;
                break;
            }
            branches.push_back({gs->inputs[0], gs->inputs[1], w, mul->id, gs->id});
        }
        if (!ok) continue;

        Node fused;
        fused.id = root.id;
        fused.kind = NodeKind::FusedMSDA;
        fused.outputs = root.outputs;
        fused.attrs = {{"branches", static_cast<std::int64_t>(branches.size())}};
        fused.tag = root.tag;
        Rewrite rw{"msda", {}, {fused.id}};
        for (const auto& b : branches) {
            fused.inputs.insert(fused.inputs.end(), {b.v, b.grid, b.w});
            rw.removed.insert(rw.removed.end(), {b.gs_id, b.mul_id});
        }
        rw.removed.insert(rw.removed.end(), inner_adds.begin(), inner_adds.end());
        rw.removed.push_back(root.id);

        std::vector<std::string> to_erase;
        for (const auto& b : branches) to_erase.insert(to_erase.end(), {b.gs_id, b.mul_id});
        to_erase.insert(to_erase.end(), inner_adds.begin(), inner_adds.end());
        *node_by_id(out, root.id) = std::move(fused);
        for (const auto& e : to_erase) erase_node(out, e);
        rep.rewrites.push_back(std::move(rw));
        return true;
    }
    return false;
}

}  // namespace

std::pair<Graph, PassReport> fuse_attention(const Graph& g) {
    Graph out = g;
    PassReport rep{"fuse_attention", static_cast<int>(g.nodes.size()), 0, {}};
    while (try_fuse_mha(out, rep)) {
    }
    while (try_fuse_msda(out, rep)) {
    }
    gc_tensors(out);
    rep.nodes_after = static_cast<int>(out.nodes.size());
    validate_graph(out);
    return {std::move(out), std::move(rep)};
}

void validate_prune_spec(const PruneSpec& spec) {
    for (ModuleTag t : {ModuleTag::Backbone, ModuleTag::BevEncoder, ModuleTag::Planner})
        if (spec.remove.count(t))
            fail_validation(std::string("prune spec: module '") + module_tag_name(t) +
                            "' carries a core pathway and may not be removed");
}

std::pair<Graph, PassReport> prune_modules(const Graph& g, const PruneSpec& spec) {
    validate_prune_spec(spec);
    Graph out = g;
    PassReport rep{"prune_modules", static_cast<int>(g.nodes.size()),
                   static_cast<int>(g.nodes.size()), {}};

    std::set<std::string> removed_ids;
    for (const auto& n : g.nodes)
        if (spec.remove.count(n.tag)) removed_ids.insert(n.id);
    if (removed_ids.empty()) return {std::move(out), std::move(rep)};

    GraphIndex idx(g);
    const auto pos = topo_positions(g);
    auto producer_pos = [&](const std::string& t) -> int {
        const Node* p = idx.producer_of(t);
        return p ? pos.at(p->id) : -1;
    };
    auto survives = [&](const std::string& t) {
        const Node* p = idx.producer_of(t);
        if (p) return !removed_ids.count(p->id);
        return true;  // graph input or bare constant
    };

    // Rewire surviving consumers of removed tensors to the nearest surviving
    // upstream tensor of identical shape along the deleted path.
    for (auto& n : out.nodes) {
        if (removed_ids.count(n.id)) continue;
        for (std::size_t slot = 0; slot < n.inputs.size(); ++slot) {
            const std::string t = n.inputs[slot];
            if (survives(t)) continue;
            if (!spec.rewire_to_planner)
                fail_infeasible("prune: node '" + n.id + "' consumes removed tensor '" + t +
                                "' and rewiring is disabled");

            const TensorSpec& want = g.tensor_spec(t);
            std::set<std::string> visited;
            std::queue<std::string> work;
            work.push(idx.producer_of(t)->id);
            std::vector<std::string> candidates;
            while (!work.empty()) {
                const std::string cur = work.front();
                work.pop();
                if (!visited.insert(cur).second) continue;
                const Node& rn = g.nodes[idx.node_index.at(cur)];
                for (const auto& u : rn.inputs) {
                    if (survives(u))
                        candidates.push_back(u);
                    else
                        work.push(idx.producer_of(u)->id);
                }
            }
            std::sort(candidates.begin(), candidates.end());
            candidates.erase(std::unique(candidates.begin(), candidates.end()),
                             candidates.end());

            std::string best;
            int best_pos = -2;
            for (const auto& u : candidates) {
                const TensorSpec& s = g.tensor_spec(u);
                if (s.shape != want.shape || s.dtype != want.dtype) continue;
                const int p = producer_pos(u);
                const bool better =
                    p > best_pos ||
                    (p == best_pos && (best.empty() || u < best));
                if (better) {
                    best = u;
                    best_pos = p;
                }
            }
            if (best.empty())
                fail_infeasible("prune: no surviving upstream tensor with shape " +
                                shape_str(want.shape) + " to rewire input '" + t +
                                "' of node '" + n.id + "'");
            n.inputs[slot] = best;
            rep.rewrites.push_back({"rewire " + t + " -> " + best, {n.id}, {n.id}});
        }
    }

    for (const auto& id : removed_ids) {
        erase_node(out, id);
        rep.rewrites.push_back({"prune", {id}, {}});
    }
    std::erase_if(out.graph_outputs, [&](const std::string& t) {
        const Node* p = idx.producer_of(t);
        return p && removed_ids.count(p->id);
    });

    gc_tensors(out);
    rep.nodes_after = static_cast<int>(out.nodes.size());
    validate_graph(out);

    // core pathway check: planner-produced outputs must still see the backbone
    {
        GraphIndex oidx(out);
        std::set<std::string> reach;
        for (const auto& n : out.nodes)
            if (n.tag == ModuleTag::Backbone)
                for (const auto& t : n.outputs) reach.insert(t);
        for (const auto& id : topo_sort(out)) {
            const Node& n = out.nodes[oidx.node_index.at(id)];
            for (const auto& t : n.inputs)
                if (reach.count(t)) {
                    for (const auto& o : n.outputs) reach.insert(o);
                    break;
                }
        }
        for (const auto& t : out.graph_outputs) {
            const Node* p = oidx.producer_of(t);
            if (p && p->tag == ModuleTag::Planner && !reach.count(t))
                fail_infeasible("prune: planner output '" + t +
                                "' is no longer reachable from the backbone");
        }
    }

    return {std::move(out), std::move(rep)};
}

std::vector<PassStep> default_pipeline() {
    return {{"fold", {}}, {"dce", {}}, {"fuse_basic", {}}, {"fuse_attention", {}}};
}

std::pair<Graph, std::vector<PassReport>> optimize_pipeline(const Graph& g,
                                                            const std::vector<PassStep>& steps) {
    Graph cur = g;
    std::vector<PassReport> reports;
    for (const auto& step : steps) {
        std::pair<Graph, PassReport> r;
        if (step.name == "fold" || step.name == "fold_constants") {
            r = fold_constants(cur);
        } else if (step.name == "dce" || step.name == "eliminate_dead_nodes") {
            r = eliminate_dead_nodes(cur);
        } else if (step.name == "fuse_basic") {
            r = fuse_basic(cur);
        } else if (step.name == "fuse_attention") {
            r = fuse_attention(cur);
        } else if (step.name == "prune" || step.name == "prune_modules") {
            if (!step.prune) fail_validation("pipeline: prune step without a prune spec");
            r = prune_modules(cur, *step.prune);
        } else {
            fail_validation("pipeline: unknown pass '" + step.name + "'");
        }
        cur = std::move(r.first);
        reports.push_back(std::move(r.second));
    }
    return {std::move(cur), std::move(reports)};
}

}  // namespace adco
