// SPDX-License-Identifier: Apache-2.0
#include "adco/interp.hpp"

#include <algorithm>
#include <cmath>

namespace adco {

namespace {

using Shape = std::vector<std::int64_t>;

// Strides with 0 on broadcast (size-1) dims, right-aligned against `out`.
std::vector<std::int64_t> bcast_strides(const Shape& shape, const Shape& out) {
    const auto strides = row_major_strides(shape);
    std::vector<std::int64_t> r(out.size(), 0);
    const std::size_t off = out.size() - shape.size();
    for (std::size_t i = 0; i < shape.size(); ++i)
        r[off + i] = shape[i] == 1 ? 0 : strides[i];
    return r;
}

template <typename F>
DenseTensor broadcast_binary(const DenseTensor& a, const DenseTensor& b, F&& f) {
    const Shape out_shape = broadcast_shapes(a.shape, b.shape, "eval");
    DenseTensor out = DenseTensor::zeros(out_shape);
    const auto sa = bcast_strides(a.shape, out_shape);
    const auto sb = bcast_strides(b.shape, out_shape);
    const std::size_t rank = out_shape.size();
    std::vector<std::int64_t> coord(rank, 0);
    const std::int64_t n = out.numel();
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        out.data[i] = f(a.data[ia], b.data[ib]);
        for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
            ia += sa[d];
            ib += sb[d];
            if (++coord[d] < out_shape[d]) break;
            coord[d] = 0;
            ia -= sa[d] * out_shape[d];
            ib -= sb[d] * out_shape[d];
        }
    }
    return out;
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
    const std::int64_t m = a.shape[a.rank() - 2], k = a.shape[a.rank() - 1];
    const std::int64_t n = b.shape[b.rank() - 1];
    Shape abatch(a.shape.begin(), a.shape.end() - 2);
    Shape bbatch(b.shape.begin(), b.shape.end() - 2);
    Shape batch = broadcast_shapes(abatch, bbatch, "matmul batch");
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    DenseTensor out = DenseTensor::zeros(out_shape);

    const std::int64_t nbatch = shape_numel(batch);
    const auto sa = bcast_strides(abatch, batch);
    const auto sb = bcast_strides(bbatch, batch);
    std::vector<std::int64_t> coord(batch.size(), 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t bi = 0; bi < nbatch; ++bi) {
        const double* pa = a.data.data() + ia * m * k;
        const double* pb = b.data.data() + ib * k * n;
        double* po = out.data.data() + bi * m * n;
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const double av = pa[i * k + kk];
                const double* pbr = pb + kk * n;
                double* por = po + i * n;
                for (std::int64_t j = 0; j < n; ++j) por[j] += av * pbr[j];
            }
        for (int d = static_cast<int>(batch.size()) - 1; d >= 0; --d) {
            ia += sa[d];
            ib += sb[d];
            if (++coord[d] < batch[d]) break;
            coord[d] = 0;
            ia -= sa[d] * batch[d];
            ib -= sb[d] * batch[d];
        }
    }
    return out;
}

DenseTensor conv2d(const Node& node, const DenseTensor& x, const DenseTensor& w) {
    const std::int64_t stride = node.attr_int("stride", 1);
    const std::int64_t pad = node.attr_int("padding", 0);
    const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::int64_t Co = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const std::int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const std::int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    DenseTensor out = DenseTensor::zeros({N, Co, Ho, Wo});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t co = 0; co < Co; ++co)
            for (std::int64_t ci = 0; ci < C; ++ci) {
                const double* px = x.data.data() + (n * C + ci) * H * W;
                const double* pw = w.data.data() + (co * C + ci) * kh * kw;
                double* po = out.data.data() + (n * Co + co) * Ho * Wo;
                for (std::int64_t oy = 0; oy < Ho; ++oy)
                    for (std::int64_t ox = 0; ox < Wo; ++ox) {
                        double acc = 0.0;
                        for (std::int64_t ky = 0; ky < kh; ++ky) {
                            const std::int64_t iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= W) continue;
                                acc += px[iy * W + ix] * pw[ky * kw + kx];
                            }
                        }
                        po[oy * Wo + ox] += acc;
                    }
            }
    return out;
}

DenseTensor softmax(const DenseTensor& x, std::int64_t axis) {
    if (axis < 0) axis += x.rank();
    DenseTensor out = DenseTensor::zeros(x.shape);
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= x.shape[i];
    for (std::int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape[i];
    const std::int64_t len = x.shape[axis];
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * len * inner + in;
            double mx = -HUGE_VAL;
            for (std::int64_t i = 0; i < len; ++i) mx = std::max(mx, x.data[base + i * inner]);
            double sum = 0.0;
            for (std::int64_t i = 0; i < len; ++i) {
                const double e = std::exp(x.data[base + i * inner] - mx);
                out.data[base + i * inner] = e;
                sum += e;
            }
            for (std::int64_t i = 0; i < len; ++i) out.data[base + i * inner] /= sum;
        }
    return out;
}

DenseTensor layer_norm(const DenseTensor& x, const DenseTensor& gamma, const DenseTensor& beta,
                       double eps) {
    DenseTensor out = DenseTensor::zeros(x.shape);
    const std::int64_t c = x.shape.back();
    const std::int64_t rows = x.numel() / c;
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* px = x.data.data() + r * c;
        double* po = out.data.data() + r * c;
        double mean = 0.0;
        for (std::int64_t i = 0; i < c; ++i) mean += px[i];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::int64_t i = 0; i < c; ++i) var += (px[i] - mean) * (px[i] - mean);
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::int64_t i = 0; i < c; ++i)
            po[i] = (px[i] - mean) * inv * gamma.data[i] + beta.data[i];
    }
    return out;
}

DenseTensor transpose(const DenseTensor& x, const std::vector<std::int64_t>& perm) {
    Shape out_shape(x.rank());
    for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = x.shape[perm[i]];
    DenseTensor out = DenseTensor::zeros(out_shape);
    const auto in_strides = row_major_strides(x.shape);
    std::vector<std::int64_t> coord(x.rank(), 0);
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t src = 0;
        for (std::size_t d = 0; d < perm.size(); ++d) src += coord[d] * in_strides[perm[d]];
        out.data[i] = x.data[src];
        for (int d = static_cast<int>(out_shape.size()) - 1; d >= 0; --d) {
            if (++coord[d] < out_shape[d]) break;
            coord[d] = 0;
        }
    }
    return out;
}

// Bilinear sample with border clamping on one [H,W] plane.
double sample_border(const double* p, std::int64_t H, std::int64_t W, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(H - 1));
    x = std::clamp(x, 0.0, static_cast<double>(W - 1));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
    const std::int64_t y1 = std::min(y0 + 1, H - 1);
    const std::int64_t x1 = std::min(x0 + 1, W - 1);
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    const double a = p[y0 * W + x0], b = p[y0 * W + x1];
    const double c = p[y1 * W + x0], d = p[y1 * W + x1];
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx;
}

// Bilinear sample with zero padding outside the plane.
double sample_zero(const double* p, std::int64_t H, std::int64_t W, double y, double x) {
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    auto at = [&](std::int64_t yy, std::int64_t xx) -> double {
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
        return p[yy * W + xx];
    };
    return at(y0, x0) * (1 - fy) * (1 - fx) + at(y0, x0 + 1) * (1 - fy) * fx +
           at(y0 + 1, x0) * fy * (1 - fx) + at(y0 + 1, x0 + 1) * fy * fx;
}

// Grid coordinates are in [-1, 1], align-corners convention, border padding.
DenseTensor grid_sample(const DenseTensor& x, const DenseTensor& grid) {
    const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::int64_t Hg = grid.shape[1], Wg = grid.shape[2];
    DenseTensor out = DenseTensor::zeros({N, C, Hg, Wg});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t gy = 0; gy < Hg; ++gy)
            for (std::int64_t gx = 0; gx < Wg; ++gx) {
                const double* pg = grid.data.data() + ((n * Hg + gy) * Wg + gx) * 2;
                const double sx = (pg[0] + 1.0) * 0.5 * static_cast<double>(W - 1);
                const double sy = (pg[1] + 1.0) * 0.5 * static_cast<double>(H - 1);
                for (std::int64_t c = 0; c < C; ++c) {
                    const double* px = x.data.data() + (n * C + c) * H * W;
                    out.data[((n * C + c) * Hg + gy) * Wg + gx] = sample_border(px, H, W, sy, sx);
                }
            }
    return out;
}

// Rotation of the trailing two axes about the plane centre, inverse-mapped
// with bilinear interpolation and border clamping.
DenseTensor rotate(const DenseTensor& x, double angle) {
    const std::int64_t H = x.shape[x.rank() - 2], W = x.shape[x.rank() - 1];
    const std::int64_t planes = x.numel() / (H * W);
    DenseTensor out = DenseTensor::zeros(x.shape);
    const double cy = static_cast<double>(H - 1) / 2.0, cx = static_cast<double>(W - 1) / 2.0;
    const double c = std::cos(angle), s = std::sin(angle);
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* px = x.data.data() + p * H * W;
        double* po = out.data.data() + p * H * W;
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t xx = 0; xx < W; ++xx) {
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(xx) - cx;
                const double sy = cy + c * dy - s * dx;
                const double sx = cx + s * dy + c * dx;
                po[y * W + xx] = sample_border(px, H, W, sy, sx);
            }
    }
    return out;
}

// Gauss-Jordan with partial pivoting over the trailing square matrices.
DenseTensor inverse(const std::string& node_id, const DenseTensor& x) {
    const std::int64_t n = x.shape[x.rank() - 1];
    const std::int64_t mats = x.numel() / (n * n);
    DenseTensor out = DenseTensor::zeros(x.shape);
    std::vector<double> a(static_cast<std::size_t>(n * n));
    for (std::int64_t m = 0; m < mats; ++m) {
        std::copy_n(x.data.data() + m * n * n, n * n, a.data());
        double* inv = out.data.data() + m * n * n;
        for (std::int64_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
        for (std::int64_t col = 0; col < n; ++col) {
            std::int64_t piv = col;
            for (std::int64_t r = col + 1; r < n; ++r)
                if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
            if (a[piv * n + col] == 0.0)
                fail_runtime("node '" + node_id + "': singular matrix in Inverse");
            if (piv != col) {
                for (std::int64_t j = 0; j < n; ++j) {
                    std::swap(a[piv * n + j], a[col * n + j]);
                    std::swap(inv[piv * n + j], inv[col * n + j]);
                }
            }
            const double d = a[col * n + col];
            for (std::int64_t j = 0; j < n; ++j) {
                a[col * n + j] /= d;
                inv[col * n + j] /= d;
            }
            for (std::int64_t r = 0; r < n; ++r) {
                if (r == col) continue;
                const double f = a[r * n + col];
                if (f == 0.0) continue;
                for (std::int64_t j = 0; j < n; ++j) {
                    a[r * n + j] -= f * a[col * n + j];
                    inv[r * n + j] -= f * inv[col * n + j];
                }
            }
        }
    }
    return out;
}

// Reference-quality gather implementation; offsets are (dy, dx) pairs per
// kernel tap, samples outside the input contribute zero.
DenseTensor deform_conv(const Node& node, const DenseTensor& x, const DenseTensor& w,
                        const DenseTensor& offset, const DenseTensor& mask) {
    const std::int64_t stride = node.attr_int("stride", 1);
    const std::int64_t pad = node.attr_int("padding", 0);
    const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::int64_t Co = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const std::int64_t taps = kh * kw;
    const std::int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const std::int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    DenseTensor out = DenseTensor::zeros({N, Co, Ho, Wo});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox)
                for (std::int64_t t = 0; t < taps; ++t) {
                    const std::int64_t ky = t / kw, kx = t % kw;
                    const double dy =
                        offset.data[((n * 2 * taps + 2 * t) * Ho + oy) * Wo + ox];
                    const double dx =
                        offset.data[((n * 2 * taps + 2 * t + 1) * Ho + oy) * Wo + ox];
                    const double mk = mask.data[((n * taps + t) * Ho + oy) * Wo + ox];
                    const double sy = static_cast<double>(oy * stride - pad + ky) + dy;
                    const double sx = static_cast<double>(ox * stride - pad + kx) + dx;
                    for (std::int64_t ci = 0; ci < C; ++ci) {
                        const double* px = x.data.data() + (n * C + ci) * H * W;
                        const double v = sample_zero(px, H, W, sy, sx) * mk;
                        if (v == 0.0) continue;
                        for (std::int64_t co = 0; co < Co; ++co)
                            out.data[((n * Co + co) * Ho + oy) * Wo + ox] +=
                                v * w.data[((co * C + ci) * kh + ky) * kw + kx];
                    }
                }
    return out;
}

double round_half_away(double x) { return std::round(x); }

DenseTensor quantize(const Node& n, const DenseTensor& x) {
    const double s = n.attr_double("scale", 1.0);
    const double zp = static_cast<double>(n.attr_int("zero_point", 0));
    const double qmin = static_cast<double>(n.attr_int("q_min", -128));
    const double qmax = static_cast<double>(n.attr_int("q_max", 127));
    DenseTensor out = DenseTensor::zeros(x.shape, DType::I8);
    for (std::int64_t i = 0; i < x.numel(); ++i)
        out.data[i] = std::clamp(round_half_away(x.data[i] / s) + zp, qmin, qmax);
    return out;
}

DenseTensor dequantize(const Node& n, const DenseTensor& q) {
    const double s = n.attr_double("scale", 1.0);
    const double zp = static_cast<double>(n.attr_int("zero_point", 0));
    DenseTensor out = DenseTensor::zeros(q.shape);
    for (std::int64_t i = 0; i < q.numel(); ++i) out.data[i] = s * (q.data[i] - zp);
    return out;
}

}  // namespace

DenseTensor eval_node(const Graph& g, const Node& n,
                      const std::vector<const DenseTensor*>& in) {
    switch (n.kind) {
        case NodeKind::Constant: {
            auto it = g.constants.find(n.outputs[0]);
            if (it == g.constants.end())
                fail_runtime("Constant node '" + n.id + "' has no bound value");
            return it->second;
        }
        case NodeKind::MatMul:
            return matmul(*in[0], *in[1]);
        case NodeKind::Conv2d:
            return conv2d(n, *in[0], *in[1]);
        case NodeKind::Add:
            return broadcast_binary(*in[0], *in[1], [](double a, double b) { return a + b; });
        case NodeKind::Mul:
            return broadcast_binary(*in[0], *in[1], [](double a, double b) { return a * b; });
        case NodeKind::Relu: {
            DenseTensor out = *in[0];
            for (auto& v : out.data) v = std::max(0.0, v);
            return out;
        }
        case NodeKind::Softmax:
            return softmax(*in[0], n.attr_int("axis", -1));
        case NodeKind::Scale: {
            const double s = n.attr_double("value", 1.0);
            DenseTensor out = *in[0];
            for (auto& v : out.data) v *= s;
            return out;
        }
        case NodeKind::LayerNorm:
            return layer_norm(*in[0], *in[1], *in[2], n.attr_double("epsilon", 1e-5));
        case NodeKind::Transpose:
            return transpose(*in[0], *n.attr_ints("perm"));
        case NodeKind::Reshape: {
            DenseTensor out = *in[0];
            out.shape = *n.attr_ints("shape");
            return out;
        }
        case NodeKind::GridSample:
            return grid_sample(*in[0], *in[1]);
        case NodeKind::Rotate:
            return rotate(*in[0], n.attr_double("angle", 0.0));
        case NodeKind::Inverse:
            return inverse(n.id, *in[0]);
        case NodeKind::ModulatedDeformConv2d:
            return deform_conv(n, *in[0], *in[1], *in[2], *in[3]);
        case NodeKind::FusedMHA: {
            DenseTensor q, kt, v;
            const DenseTensor *pq, *pkt, *pv;
            if (n.inputs.size() == 3) {
                pq = in[0];
                pkt = in[1];
                pv = in[2];
            } else {
                q = matmul(*in[0], *in[1]);
                kt = matmul(*in[2], *in[3]);
                v = matmul(*in[4], *in[5]);
                pq = &q;
                pkt = &kt;
                pv = &v;
            }
            DenseTensor attn = matmul(*pq, *pkt);
            const double s = n.attr_double("scale", 1.0);
            for (auto& x : attn.data) x *= s;
            return matmul(softmax(attn, -1), *pv);
        }
        case NodeKind::FusedMSDA: {
            const int branches = static_cast<int>(n.inputs.size()) / 3;
            DenseTensor acc;
            for (int b = 0; b < branches; ++b) {
                DenseTensor sampled = grid_sample(*in[3 * b], *in[3 * b + 1]);
                DenseTensor weighted = broadcast_binary(
                    sampled, *in[3 * b + 2], [](double a, double w) { return a * w; });
                acc = b == 0 ? std::move(weighted)
                             : broadcast_binary(acc, weighted,
                                                [](double a, double c) { return a + c; });
            }
            return acc;
        }
        case NodeKind::FusedConvAdd: {
            DenseTensor base = conv2d(n, *in[0], *in[1]);
            return broadcast_binary(base, *in[2], [](double a, double b) { return a + b; });
        }
        case NodeKind::FusedMatMulAdd: {
            DenseTensor base = matmul(*in[0], *in[1]);
            return broadcast_binary(base, *in[2], [](double a, double b) { return a + b; });
        }
        case NodeKind::Quantize:
            return quantize(n, *in[0]);
        case NodeKind::Dequantize:
            return dequantize(n, *in[0]);
    }
    fail_runtime("node '" + n.id + "': unhandled kind in eval");
}

namespace {

TensorMap run(const Graph& g, const TensorMap& inputs, bool keep_all) {
    for (const auto& name : g.graph_inputs) {
        auto it = inputs.find(name);
        if (it == inputs.end()) fail_validation("interpret: graph input '" + name + "' unbound");
        const TensorSpec& spec = g.tensor_spec(name);
        if (it->second.shape != spec.shape)
            fail_validation("interpret: input '" + name + "' has shape " +
                            shape_str(it->second.shape) + ", expected " + shape_str(spec.shape));
    }

    TensorMap values;
    for (const auto& name : g.graph_inputs) values[name] = inputs.at(name);
    for (const auto& [name, v] : g.constants) values[name] = v;

    GraphIndex idx(g);
    for (const auto& id : topo_sort(g)) {
        const Node& n = g.nodes[idx.node_index.at(id)];
        std::vector<const DenseTensor*> in;
        in.reserve(n.inputs.size());
        for (const auto& t : n.inputs) {
            auto it = values.find(t);
            if (it == values.end())
                fail_runtime("interpret: node '" + n.id + "': input '" + t + "' has no value");
            in.push_back(&it->second);
        }
        values[n.outputs[0]] = eval_node(g, n, in);
    }

    auto cast_f32 = [](DenseTensor& t) {
        if (t.dtype == DType::F32)
            for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
    };

    if (keep_all) {
        for (const auto& name : g.graph_outputs) cast_f32(values[name]);
        return values;
    }
    TensorMap outs;
    for (const auto& name : g.graph_outputs) {
        auto it = values.find(name);
        if (it == values.end()) fail_runtime("interpret: output '" + name + "' was not produced");
        cast_f32(it->second);
        outs[name] = std::move(it->second);
    }
    return outs;
}

}  // namespace

TensorMap interpret(const Graph& g, const TensorMap& inputs) { return run(g, inputs, false); }

TensorMap interpret_all(const Graph& g, const TensorMap& inputs) { return run(g, inputs, true); }

}  // namespace adco
