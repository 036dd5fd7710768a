// SPDX-License-Identifier: Apache-2.0
#include "adco/cost.hpp"

#include <algorithm>
#include <cmath>

#include "adco/rng.hpp"

namespace adco {

void validate_profile(const HardwareProfile& hw) {
    auto pos = [](double v, const char* what) {
        if (!(v > 0.0)) fail_validation(std::string("hardware profile: ") + what +
                                        " must be positive");
    };
    pos(hw.flops_per_second_f32, "flops_per_second_f32");
    pos(hw.int8_speedup, "int8_speedup");
    pos(hw.launch_overhead_s, "launch_overhead_s");
    pos(hw.bytes_per_second, "bytes_per_second");
    pos(hw.joules_per_flop, "joules_per_flop");
    pos(hw.joules_per_byte, "joules_per_byte");
    if (hw.idle_power_w < 0.0) fail_validation("hardware profile: idle_power_w must be >= 0");
}

void validate_spike_rule(const SpikeRule& r) {
    if (r.trigger == SpikeRule::Trigger::Probability &&
        (r.probability < 0.0 || r.probability > 1.0))
        fail_validation("spike rule: probability must be in [0, 1]");
    if (r.added_latency_s < 0.0) fail_validation("spike rule: added latency must be >= 0");
}

namespace {

using Shape = std::vector<std::int64_t>;

std::int64_t matmul_flops(const Shape& a, const Shape& b) {
    // 2·M·K·N per batched matrix product
    const std::int64_t k = a[a.size() - 1];
    const std::int64_t m = a[a.size() - 2];
    const std::int64_t n = b[b.size() - 1];
    Shape abatch(a.begin(), a.end() - 2), bbatch(b.begin(), b.end() - 2);
    const Shape batch = broadcast_shapes(abatch, bbatch, "flops");
    return 2 * shape_numel(batch) * m * k * n;
}

std::int64_t conv_flops(const Shape& x, const Shape& w, const Shape& out) {
    // 2·Kh·Kw·Cin multiplies per output element
    (void)x;
    return 2 * w[1] * w[2] * w[3] * shape_numel(out);
}

std::int64_t sampling_flops(const Shape& out) { return 8 * shape_numel(out); }

}  // namespace

std::int64_t node_flops(const Graph& g, const Node& n) {
    auto shape = [&](const std::string& t) -> const Shape& { return g.tensor_spec(t).shape; };
    auto out_elems = [&] { return shape_numel(shape(n.outputs[0])); };

    switch (n.kind) {
        case NodeKind::Constant:
        case NodeKind::Transpose:
        case NodeKind::Reshape:
            return 0;
        case NodeKind::MatMul:
            return matmul_flops(shape(n.inputs[0]), shape(n.inputs[1]));
        case NodeKind::Conv2d:
            return conv_flops(shape(n.inputs[0]), shape(n.inputs[1]), shape(n.outputs[0]));
        case NodeKind::Add:
        case NodeKind::Mul:
        case NodeKind::Relu:
        case NodeKind::Softmax:
        case NodeKind::Scale:
        case NodeKind::LayerNorm:
        case NodeKind::Quantize:
        case NodeKind::Dequantize:
            return out_elems();
        case NodeKind::GridSample:
        case NodeKind::Rotate:
            return sampling_flops(shape(n.outputs[0]));
        case NodeKind::Inverse: {
            const Shape& x = shape(n.inputs[0]);
            const std::int64_t d = x[x.size() - 1];
            const std::int64_t mats = shape_numel(x) / (d * d);
            return mats * (2 * d * d * d) / 3;
        }
        case NodeKind::ModulatedDeformConv2d: {
            const Shape& w = shape(n.inputs[1]);
            const Shape& out = shape(n.outputs[0]);
            const std::int64_t gather =
                8 * w[1] * w[2] * w[3] * (shape_numel(out) / out[1]);  // per out pixel, per cin
            return conv_flops(shape(n.inputs[0]), w, out) + gather;
        }
        case NodeKind::FusedConvAdd:
            return conv_flops(shape(n.inputs[0]), shape(n.inputs[1]), shape(n.outputs[0])) +
                   out_elems();
        case NodeKind::FusedMatMulAdd:
            return matmul_flops(shape(n.inputs[0]), shape(n.inputs[1])) + out_elems();
        case NodeKind::FusedMHA: {
            Shape q, kt, v;
            std::int64_t proj = 0;
            if (n.inputs.size() == 3) {
                q = shape(n.inputs[0]);
                kt = shape(n.inputs[1]);
                v = shape(n.inputs[2]);
            } else {
                auto mm_shape = [&](const Shape& a, const Shape& b) {
                    Shape ab(a.begin(), a.end() - 2), bb(b.begin(), b.end() - 2);
                    Shape s = broadcast_shapes(ab, bb, "flops");
                    s.push_back(a[a.size() - 2]);
                    s.push_back(b[b.size() - 1]);
                    return s;
                };
                proj += matmul_flops(shape(n.inputs[0]), shape(n.inputs[1]));
                proj += matmul_flops(shape(n.inputs[2]), shape(n.inputs[3]));
                proj += matmul_flops(shape(n.inputs[4]), shape(n.inputs[5]));
                q = mm_shape(shape(n.inputs[0]), shape(n.inputs[1]));
                kt = mm_shape(shape(n.inputs[2]), shape(n.inputs[3]));
                v = mm_shape(shape(n.inputs[4]), shape(n.inputs[5]));
            }
            Shape qb(q.begin(), q.end() - 2), kb(kt.begin(), kt.end() - 2);
            Shape attn = broadcast_shapes(qb, kb, "flops");
            attn.push_back(q[q.size() - 2]);
            attn.push_back(kt[kt.size() - 1]);
            const std::int64_t attn_elems = shape_numel(attn);
            // qk product + scale + softmax + weighted sum, as if unfused
            return proj + matmul_flops(q, kt) + 2 * attn_elems + matmul_flops(attn, v);
        }
        case NodeKind::FusedMSDA: {
            const int branches = static_cast<int>(n.inputs.size()) / 3;
            std::int64_t total = 0;
            Shape acc;
            for (int b = 0; b < branches; ++b) {
                const Shape& x = shape(n.inputs[3 * b]);
                const Shape& grid = shape(n.inputs[3 * b + 1]);
                Shape sampled = {x[0], x[1], grid[1], grid[2]};
                total += 8 * shape_numel(sampled);
                Shape weighted = broadcast_shapes(sampled, shape(n.inputs[3 * b + 2]), "flops");
                total += shape_numel(weighted);  // the Mul
                if (b == 0) {
                    acc = weighted;
                } else {
                    acc = broadcast_shapes(acc, weighted, "flops");
                    total += shape_numel(acc);  // the Add
                }
            }
            return total;
        }
    }
    return 0;
}

std::int64_t node_memory_bytes(const Graph& g, const Node& n) {
    // Constants are weights assumed resident; Reshape is a view.
    if (n.kind == NodeKind::Constant || n.kind == NodeKind::Reshape) return 0;
    std::int64_t bytes = 0;
    for (const auto& t : n.inputs) {
        const TensorSpec& s = g.tensor_spec(t);
        bytes += shape_numel(s.shape) * dtype_byte_size(s.dtype);
    }
    for (const auto& t : n.outputs) {
        const TensorSpec& s = g.tensor_spec(t);
        bytes += shape_numel(s.shape) * dtype_byte_size(s.dtype);
    }
    return bytes;
}

bool is_int8_node(const Graph& g, const GraphIndex& idx, const Node& n) {
    if (n.inputs.empty()) return false;
    if (n.kind == NodeKind::Quantize || n.kind == NodeKind::Dequantize) return false;
    for (const auto& t : n.inputs) {
        const Node* p = idx.producer_of(t);
        if (!p || p->kind != NodeKind::Dequantize) return false;
    }
    (void)g;
    return true;
}

double estimate_graph_latency(const Graph& g, const HardwareProfile& hw) {
    validate_profile(hw);
    GraphIndex idx(g);
    double total = 0.0;
    for (const auto& n : g.nodes) {
        const double speedup = is_int8_node(g, idx, n) ? hw.int8_speedup : 1.0;
        const double compute =
            static_cast<double>(node_flops(g, n)) / (hw.flops_per_second_f32 * speedup);
        const double memory = static_cast<double>(node_memory_bytes(g, n)) / hw.bytes_per_second;
        total += std::max(compute, memory);
    }
    total += hw.launch_overhead_s * static_cast<double>(g.nodes.size());
    return total;
}

namespace {

double compute_traffic_energy(const Graph& g, const HardwareProfile& hw) {
    GraphIndex idx(g);
    double joules = 0.0;
    for (const auto& n : g.nodes) {
        const double speedup = is_int8_node(g, idx, n) ? hw.int8_speedup : 1.0;
        joules += static_cast<double>(node_flops(g, n)) * hw.joules_per_flop / speedup;
        joules += static_cast<double>(node_memory_bytes(g, n)) * hw.joules_per_byte;
    }
    return joules;
}

}  // namespace

double estimate_frame_energy(const Graph& g, const HardwareProfile& hw) {
    validate_profile(hw);
    return compute_traffic_energy(g, hw) + hw.idle_power_w * estimate_graph_latency(g, hw);
}

LatencyTrace generate_latency_trace(const Graph& g, const HardwareProfile& hw, int n_frames,
                                    const std::vector<SpikeRule>& rules,
                                    const std::vector<bool>& trigger_signal,
                                    std::uint64_t seed) {
    for (const auto& r : rules) {
        validate_spike_rule(r);
        if (r.trigger == SpikeRule::Trigger::ObstacleAhead &&
            static_cast<int>(trigger_signal.size()) != n_frames)
            fail_validation("latency trace: obstacle trigger signal must cover every frame");
    }
    const double base = estimate_graph_latency(g, hw);
    LatencyTrace trace;
    trace.seed = seed;
    trace.frame_latencies_s.reserve(n_frames);
    Rng rng(seed);
    for (int f = 0; f < n_frames; ++f) {
        double lat = base;
        bool spiked = false;
        for (const auto& r : rules) {
            bool fired = false;
            if (r.trigger == SpikeRule::Trigger::ObstacleAhead) {
                fired = trigger_signal[f];
            } else {
                fired = rng.bernoulli(r.probability);  // one draw per rule per frame
            }
            if (fired) {
                lat += r.added_latency_s;
                spiked = true;
            }
        }
        trace.frame_latencies_s.push_back(lat);
        if (spiked) trace.spike_frames.insert(f);
    }
    return trace;
}

std::vector<double> per_frame_energies(const Graph& g, const HardwareProfile& hw,
                                       const LatencyTrace& trace) {
    validate_profile(hw);
    const double fixed = compute_traffic_energy(g, hw);
    std::vector<double> out;
    out.reserve(trace.frame_latencies_s.size());
    for (double t : trace.frame_latencies_s) out.push_back(fixed + hw.idle_power_w * t);
    return out;
}

int warmup_frame_count(double warmup_s, double frame_period_s) {
    if (warmup_s <= 0.0) return 0;
    if (frame_period_s <= 0.0) fail_validation("sliding window: frame period must be positive");
    return static_cast<int>(std::ceil(warmup_s / frame_period_s));
}

double sliding_window_energy(const std::vector<double>& per_frame_energies_j, int window,
                             double warmup_s, double frame_period_s) {
    if (window < 1) fail_validation("sliding window: window must be >= 1");
    const int skip = warmup_frame_count(warmup_s, frame_period_s);
    const int n = static_cast<int>(per_frame_energies_j.size());
    const int usable = n - skip;
    const int n_windows = usable > 0 ? usable / window : 0;
    if (n_windows < 1)
        fail_runtime("sliding window: " + std::to_string(n) + " frames cannot cover the " +
                     std::to_string(skip) + "-frame warm-up plus one " + std::to_string(window) +
                     "-frame window");
    double mean_of_windows = 0.0;
    for (int w = 0; w < n_windows; ++w) {
        double e_win = 0.0;
        for (int i = 0; i < window; ++i) e_win += per_frame_energies_j[skip + w * window + i];
        mean_of_windows += e_win / static_cast<double>(window);
    }
    return mean_of_windows / static_cast<double>(n_windows);
}

}  // namespace adco
