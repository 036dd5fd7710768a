// SPDX-License-Identifier: Apache-2.0
#include "adco/quant.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "adco/interp.hpp"

namespace adco {

using nlohmann::json;

const char* quant_scheme_name(QuantScheme s) {
    switch (s) {
        case QuantScheme::Full: return "full";
        case QuantScheme::FeatureExt: return "feature_ext";
        case QuantScheme::Prediction: return "prediction";
    }
    return "?";
}

QuantScheme quant_scheme_from_name(const std::string& s) {
    if (s == "full") return QuantScheme::Full;
    if (s == "feature_ext") return QuantScheme::FeatureExt;
    if (s == "prediction") return QuantScheme::Prediction;
    fail_validation("unknown quantization scheme '" + s + "'");
}

const char* exclusion_reason_name(ExclusionReason r) {
    switch (r) {
        case ExclusionReason::LongSeqMHA: return "long_seq_mha";
        case ExclusionReason::GEMVDegenerate: return "gemv_degenerate";
        case ExclusionReason::UnsupportedKind: return "unsupported_kind";
    }
    return "?";
}

namespace {

ExclusionReason exclusion_reason_from_name(const std::string& s) {
    if (s == "long_seq_mha") return ExclusionReason::LongSeqMHA;
    if (s == "gemv_degenerate") return ExclusionReason::GEMVDegenerate;
    if (s == "unsupported_kind") return ExclusionReason::UnsupportedKind;
    fail_validation("unknown exclusion reason '" + s + "'");
}

constexpr double kScaleFloor = 0x1.0p-24;

}  // namespace

int quantize_value(double x, const QuantParams& p) {
    // round half away from zero, then saturate
    const double q = std::round(x / p.scale) + p.zero_point;
    return static_cast<int>(
        std::clamp(q, static_cast<double>(p.q_min), static_cast<double>(p.q_max)));
}

double dequantize_value(int q, const QuantParams& p) {
    return p.scale * static_cast<double>(q - p.zero_point);
}

QuantParams compute_scale(const TensorRange& r, int bits) {
    if (bits != 8) fail_validation("compute_scale: only 8-bit quantization is supported");
    if (!(r.x_min <= r.x_max) || !std::isfinite(r.x_min) || !std::isfinite(r.x_max))
        fail_validation("compute_scale: bad range for tensor '" + r.tensor + "'");
    QuantParams p;
    if (r.x_max == r.x_min) {
        p.scale = kScaleFloor;
        p.degenerate = true;
    } else {
        p.scale = (r.x_max - r.x_min) / static_cast<double>(p.q_max - p.q_min);
    }
    return p;
}

std::map<std::string, TensorRange> calibrate(const Graph& g, const CalibrationSet& calib,
                                             int jobs) {
    calib.validate_against(g);
    const int n = calib.count();
    if (n == 0) fail_validation("calibrate: empty calibration set");

    // per-frame tensor ranges, computed independently
    std::vector<std::map<std::string, TensorRange>> per_frame(n);
    auto work = [&](int frame) {
        TensorMap values = interpret_all(g, calib.frames[frame]);
        auto& out = per_frame[frame];
        for (const auto& [name, t] : values) {
            TensorRange r{name, t.data[0], t.data[0]};
            for (double v : t.data) {
                r.x_min = std::min(r.x_min, v);
                r.x_max = std::max(r.x_max, v);
            }
            out.emplace(name, r);
        }
    };

    jobs = std::max(1, jobs);
    if (jobs == 1) {
        for (int f = 0; f < n; ++f) work(f);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back([&] {
                for (int f = next.fetch_add(1); f < n; f = next.fetch_add(1)) work(f);
            });
        for (auto& t : pool) t.join();
    }

    // ordered reduction keeps the result independent of thread scheduling
    std::map<std::string, TensorRange> ranges = per_frame[0];
    for (int f = 1; f < n; ++f)
        for (const auto& [name, r] : per_frame[f]) {
            auto& acc = ranges.at(name);
            acc.x_min = std::min(acc.x_min, r.x_min);
            acc.x_max = std::max(acc.x_max, r.x_max);
        }
    return ranges;
}

namespace {

bool is_scalar_constant(const Graph& g, const std::string& t) {
    auto it = g.constants.find(t);
    return it != g.constants.end() && it->second.numel() == 1;
}

// Does this matmul feed a Softmax, possibly through scaling nodes? That makes
// it the query-key product of an attention block.
bool feeds_softmax(const Graph& g, const GraphIndex& idx, const Node& m, int depth = 3) {
    if (depth < 0) return false;
    const std::string& t = m.outputs[0];
    auto it = idx.consumers.find(t);
    if (it == idx.consumers.end()) return false;
    for (int ci : it->second) {
        const Node& c = g.nodes[ci];
        if (c.kind == NodeKind::Softmax) return true;
        const bool scaling =
            c.kind == NodeKind::Scale ||
            (c.kind == NodeKind::Mul && (is_scalar_constant(g, c.inputs[0]) ||
                                         is_scalar_constant(g, c.inputs[1])));
        if (scaling && feeds_softmax(g, idx, c, depth - 1)) return true;
    }
    return false;
}

bool consumes_softmax(const GraphIndex& idx, const Node& m) {
    const Node* p = idx.producer_of(m.inputs[0]);
    return p && p->kind == NodeKind::Softmax;
}

}  // namespace

NodeSelection select_nodes(const Graph& g, const SelectionRules& rules) {
    static const std::set<NodeKind> kQuantizable = {
        NodeKind::MatMul, NodeKind::Conv2d, NodeKind::FusedConvAdd, NodeKind::FusedMatMulAdd,
        NodeKind::FusedMHA};

    NodeSelection sel;
    GraphIndex idx(g);
    for (const Node& n : g.nodes) {
        if (!kQuantizable.count(n.kind)) {
            sel.excluded.emplace(n.id, ExclusionReason::UnsupportedKind);
            continue;
        }

        // stage 1: attention matmuls with a long sequence dimension
        std::int64_t seq = -1;
        if (n.kind == NodeKind::MatMul &&
            (feeds_softmax(g, idx, n) || consumes_softmax(idx, n))) {
            const auto& s = g.tensor_spec(n.inputs[0]).shape;
            seq = s[s.size() - 2];
        } else if (n.kind == NodeKind::FusedMHA) {
            const auto& s = g.tensor_spec(n.inputs[0]).shape;
            seq = s[s.size() - 2];  // with projections, Q keeps the first operand's rows
        }
        if (seq > rules.long_seq_threshold) {
            sel.excluded.emplace(n.id, ExclusionReason::LongSeqMHA);
            continue;
        }

        // stage 2: output collapsed to a vector loses the GEMM parallelism
        if (n.kind == NodeKind::MatMul || n.kind == NodeKind::FusedMatMulAdd) {
            const auto& o = g.tensor_spec(n.outputs[0]).shape;
            if (o[o.size() - 1] == 1 || o[o.size() - 2] == 1) {
                sel.excluded.emplace(n.id, ExclusionReason::GEMVDegenerate);
                continue;
            }
        }

        sel.candidates.insert(n.id);
    }
    return sel;
}

QuantizationPlan plan(const Graph& g, QuantScheme scheme,
                      const std::map<std::string, TensorRange>& ranges,
                      const SelectionRules& rules) {
    const NodeSelection sel = select_nodes(g, rules);
    QuantizationPlan p;
    p.scheme = scheme;
    p.excluded_nodes = sel.excluded;

    auto in_scheme = [&](ModuleTag tag) {
        const bool feat = tag == ModuleTag::Backbone || tag == ModuleTag::BevEncoder;
        switch (scheme) {
            case QuantScheme::Full: return true;
            case QuantScheme::FeatureExt: return feat;
            case QuantScheme::Prediction: return !feat;
        }
        return false;
    };

    for (const Node& n : g.nodes) {
        if (!sel.candidates.count(n.id) || !in_scheme(n.tag)) continue;
        TensorRange merged{n.id, 0.0, 0.0};
        bool first = true;
        for (const auto& t : n.inputs) {
            auto it = ranges.find(t);
            if (it == ranges.end())
                fail_validation("plan: no calibrated range for tensor '" + t +
                                "' consumed by node '" + n.id + "'");
            if (first) {
                merged.x_min = it->second.x_min;
                merged.x_max = it->second.x_max;
                first = false;
            } else {
                merged.x_min = std::min(merged.x_min, it->second.x_min);
                merged.x_max = std::max(merged.x_max, it->second.x_max);
            }
        }
        p.quantized_nodes.insert(n.id);
        p.params.emplace(n.id, compute_scale(merged));
    }
    return p;
}

Graph apply_plan(const Graph& g, const QuantizationPlan& plan) {
    for (const auto& n : g.nodes)
        if (n.kind == NodeKind::Quantize || n.kind == NodeKind::Dequantize)
            fail_validation("apply_plan: graph already carries quantization nodes (node '" +
                            n.id + "')");
    for (const auto& id : plan.quantized_nodes) {
        if (!g.find_node(id)) fail_validation("apply_plan: plan names unknown node '" + id + "'");
        if (!plan.params.count(id))
            fail_validation("apply_plan: no params for quantized node '" + id + "'");
        if (plan.excluded_nodes.count(id))
            fail_validation("apply_plan: node '" + id + "' is both quantized and excluded");
    }

    Graph out = g;
    std::vector<Node> inserted;
    std::map<std::string, std::string> i8_names;  // source constant -> int8 twin

    auto attr_of = [](const QuantParams& p) {
        return AttrMap{{"scale", p.scale},
                       {"zero_point", static_cast<std::int64_t>(p.zero_point)},
                       {"q_min", static_cast<std::int64_t>(p.q_min)},
                       {"q_max", static_cast<std::int64_t>(p.q_max)}};
    };

    for (const auto& id : topo_sort(g)) {
        if (!plan.quantized_nodes.count(id)) continue;
        const QuantParams& p = plan.params.at(id);
        Node* n = nullptr;
        for (auto& cand : out.nodes)
            if (cand.id == id) n = &cand;

        for (std::size_t slot = 0; slot < n->inputs.size(); ++slot) {
            const std::string t = n->inputs[slot];
            const TensorSpec& spec = out.tensor_spec(t);
            const std::string stem = id + ".in" + std::to_string(slot);

            if (g.is_constant(t)) {
                // weights: store int8 once, restore with a Dequantize
                auto [it, fresh] = i8_names.emplace(t, t + ".i8");
                if (fresh) {
                    DenseTensor q = DenseTensor::zeros(spec.shape, DType::I8);
                    const DenseTensor& src = g.constants.at(t);
                    for (std::int64_t i = 0; i < src.numel(); ++i)
                        q.data[i] = static_cast<double>(quantize_value(src.data[i], p));
                    out.constants.emplace(it->second, std::move(q));
                    out.tensors.emplace(it->second,
                                        TensorSpec{it->second, DType::I8, spec.shape});
                }
                Node dq;
                dq.id = "dq:" + stem;
                dq.kind = NodeKind::Dequantize;
                dq.inputs = {it->second};
                dq.outputs = {stem + ".dq"};
                dq.attrs = attr_of(p);
                dq.tag = n->tag;
                out.tensors.emplace(dq.outputs[0], TensorSpec{dq.outputs[0], DType::F32,
                                                              spec.shape});
                inserted.push_back(std::move(dq));
            } else {
                Node q;
                q.id = "q:" + stem;
                q.kind = NodeKind::Quantize;
                q.inputs = {t};
                q.outputs = {stem + ".q8"};
                q.attrs = attr_of(p);
                q.tag = n->tag;
                out.tensors.emplace(q.outputs[0],
                                    TensorSpec{q.outputs[0], DType::I8, spec.shape});

                Node dq;
                dq.id = "dq:" + stem;
                dq.kind = NodeKind::Dequantize;
                dq.inputs = {q.outputs[0]};
                dq.outputs = {stem + ".dq"};
                dq.attrs = attr_of(p);
                dq.tag = n->tag;
                out.tensors.emplace(dq.outputs[0], TensorSpec{dq.outputs[0], DType::F32,
                                                              spec.shape});
                inserted.push_back(std::move(q));
                inserted.push_back(std::move(dq));
            }
            n->inputs[slot] = stem + ".dq";
        }
    }

    for (auto& n : inserted) out.nodes.push_back(std::move(n));

    // fp32 weight copies with no remaining consumer go away
    std::set<std::string> live(out.graph_inputs.begin(), out.graph_inputs.end());
    live.insert(out.graph_outputs.begin(), out.graph_outputs.end());
    for (const auto& n : out.nodes) {
        live.insert(n.inputs.begin(), n.inputs.end());
        live.insert(n.outputs.begin(), n.outputs.end());
    }
    std::erase_if(out.tensors, [&](const auto& kv) { return !live.count(kv.first); });
    std::erase_if(out.constants, [&](const auto& kv) { return !live.count(kv.first); });

    validate_graph(out);
    return out;
}

std::string plan_to_json(const QuantizationPlan& p) {
    json j;
    j["scheme"] = quant_scheme_name(p.scheme);
    json quantized = json::array();
    for (const auto& id : p.quantized_nodes) {
        const QuantParams& qp = p.params.at(id);
        quantized.push_back({{"node", id},
                             {"scale", qp.scale},
                             {"zero_point", qp.zero_point},
                             {"q_min", qp.q_min},
                             {"q_max", qp.q_max},
                             {"degenerate_range", qp.degenerate}});
    }
    j["quantized"] = std::move(quantized);
    json excluded = json::array();
    for (const auto& [id, reason] : p.excluded_nodes)
        excluded.push_back({{"node", id}, {"reason", exclusion_reason_name(reason)}});
    j["excluded"] = std::move(excluded);
    return j.dump(1);
}

QuantizationPlan plan_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail_validation(std::string("plan file syntax error: ") + e.what());
    }
    QuantizationPlan p;
    p.scheme = quant_scheme_from_name(j.at("scheme").get<std::string>());
    for (const auto& q : j.at("quantized")) {
        const std::string id = q.at("node").get<std::string>();
        QuantParams qp;
        qp.scale = q.at("scale").get<double>();
        qp.zero_point = q.at("zero_point").get<int>();
        qp.q_min = q.at("q_min").get<int>();
        qp.q_max = q.at("q_max").get<int>();
        qp.degenerate = q.at("degenerate_range").get<bool>();
        p.quantized_nodes.insert(id);
        p.params.emplace(id, qp);
    }
    for (const auto& e : j.at("excluded"))
        p.excluded_nodes.emplace(e.at("node").get<std::string>(),
                                 exclusion_reason_from_name(e.at("reason").get<std::string>()));
    return p;
}

}  // namespace adco
