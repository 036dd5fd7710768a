// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <string>

#include "adco/graph.hpp"
#include "adco/serialize.hpp"

namespace adco {

struct TensorRange {
    std::string tensor;
    double x_min = 0.0;
    double x_max = 0.0;
};

// Symmetric int8 parameters: zero point pinned at 0, range-derived scale.
struct QuantParams {
    double scale = 1.0;
    int zero_point = 0;
    int q_min = -128;
    int q_max = 127;
    bool degenerate = false;  // range collapsed to a point; scale floored

    bool operator==(const QuantParams&) const = default;
};

enum class QuantScheme { Full, FeatureExt, Prediction };
const char* quant_scheme_name(QuantScheme s);
QuantScheme quant_scheme_from_name(const std::string& s);

enum class ExclusionReason { LongSeqMHA, GEMVDegenerate, UnsupportedKind };
const char* exclusion_reason_name(ExclusionReason r);

struct SelectionRules {
    std::int64_t long_seq_threshold = 512;
};

struct NodeSelection {
    std::map<std::string, ExclusionReason> excluded;
    std::set<std::string> candidates;
};

struct QuantizationPlan {
    QuantScheme scheme = QuantScheme::Full;
    std::set<std::string> quantized_nodes;
    std::map<std::string, ExclusionReason> excluded_nodes;
    std::map<std::string, QuantParams> params;
};

int quantize_value(double x, const QuantParams& p);
double dequantize_value(int q, const QuantParams& p);

// Scale from the observed range; degenerate ranges floor the scale at 2^-24.
QuantParams compute_scale(const TensorRange& r, int bits = 8);

// Elementwise min/max of every tensor over all calibration frames. Frames are
// interpreted independently and may fan out over `jobs` threads.
std::map<std::string, TensorRange> calibrate(const Graph& g, const CalibrationSet& calib,
                                             int jobs = 1);

// Two-stage node filter: attention matmuls whose sequence dim exceeds the
// threshold, then matmuls that degenerate to GEMV; kinds outside the
// quantizable set are excluded wholesale. Every node lands in exactly one of
// `candidates` or `excluded`.
NodeSelection select_nodes(const Graph& g, const SelectionRules& rules = {});

QuantizationPlan plan(const Graph& g, QuantScheme scheme,
                      const std::map<std::string, TensorRange>& ranges,
                      const SelectionRules& rules = {});

// Wraps each planned node for fake-quant execution: activation inputs pass
// through a Quantize/Dequantize pair, constant weights are stored as int8 and
// restored by a Dequantize node. Rejects graphs that already carry
// quantization nodes.
Graph apply_plan(const Graph& g, const QuantizationPlan& plan);

std::string plan_to_json(const QuantizationPlan& p);
QuantizationPlan plan_from_json(const std::string& text);

}  // namespace adco
