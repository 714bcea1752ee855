#include "cfpl/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cfpl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct AxisView {
    std::size_t outer = 1;
    std::size_t n = 1;
    std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw std::invalid_argument("axis " + std::to_string(axis) + " invalid for shape " + shape_str(shape));
    }
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
    v.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
    return v;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (ea != eb && ea != 1 && eb != 1) {
            throw std::invalid_argument("shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
        }
        out[i] = std::max(ea, eb);
    }
    return out;
}

// For each flat index of `out`, the flat index of the broadcast source `in`.
std::vector<std::size_t> broadcast_map(const Shape& in, const Shape& out) {
    const std::size_t rank = out.size();
    const std::size_t offset = rank - in.size();
    std::vector<std::size_t> in_stride(rank, 0);
    std::size_t stride = 1;
    for (std::size_t i = in.size(); i-- > 0;) {
        in_stride[i + offset] = in[i] == 1 ? 0 : stride;
        stride *= in[i];
    }
    const std::size_t total = numel_of(out);
    std::vector<std::size_t> map(total);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        map[flat] = src;
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            src += in_stride[ax];
            if (idx[ax] < out[ax]) break;
            src -= in_stride[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    return map;
}

template <typename Fwd, typename Da, typename Db>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
    const std::size_t total = numel_of(out_shape);
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(total);
    const bool a_same = a.shape() == out_shape;
    const bool b_same = b.shape() == out_shape;
    std::vector<std::size_t> amap = a_same ? std::vector<std::size_t>{} : broadcast_map(a.shape(), out_shape);
    std::vector<std::size_t> bmap = b_same ? std::vector<std::size_t>{} : broadcast_map(b.shape(), out_shape);
    for (std::size_t i = 0; i < total; ++i) {
        out[i] = fwd(av[a_same ? i : amap[i]], bv[b_same ? i : bmap[i]]);
    }
    return Tensor::make_result(out_shape, std::move(out), {a, b},
                               [a, b, amap = std::move(amap), bmap = std::move(bmap), a_same, b_same, da, db](detail::Node& self) {
                                   auto av = a.values();
                                   auto bv = b.values();
                                   auto ga = grad_buffer(a);
                                   auto gb = grad_buffer(b);
                                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                       const std::size_t ia = a_same ? i : amap[i];
                                       const std::size_t ib = b_same ? i : bmap[i];
                                       const double g = self.grad[i];
                                       if (!ga.empty()) ga[ia] += g * da(av[ia], bv[ib]);
                                       if (!gb.empty()) gb[ib] += g * db(av[ia], bv[ib]);
                                   }
                               });
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& x, Fwd fwd, Deriv deriv) {
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    return Tensor::make_result(x.shape(), std::move(out), {x}, [x, deriv](detail::Node& self) {
        auto xv = x.values();
        auto gx = grad_buffer(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * deriv(xv[i], self.data[i]);
    });
}

// Shared kernel for matmul / matmul_nt.
Tensor matmul_impl(const Tensor& a, const Tensor& b, bool trans_b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() < 2 || bs.size() < 2) throw std::invalid_argument("matmul needs rank >= 2 operands");
    const std::size_t m = as[as.size() - 2];
    const std::size_t k = as.back();
    const std::size_t bk = trans_b ? bs.back() : bs[bs.size() - 2];
    const std::size_t n = trans_b ? bs[bs.size() - 2] : bs.back();
    if (k != bk) {
        throw std::invalid_argument("matmul inner extents differ: " + shape_str(as) + " vs " + shape_str(bs));
    }
    Shape out_shape(as.begin(), as.end() - 1);
    out_shape.push_back(n);
    const bool shared_b = bs.size() == 2;
    std::size_t batch = 1;
    if (!shared_b) {
        if (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) {
            throw std::invalid_argument("matmul batch extents differ: " + shape_str(as) + " vs " + shape_str(bs));
        }
        for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];
    }
    std::vector<double> out(numel_of(out_shape), 0.0);
    auto av = a.values();
    auto bv = b.values();
    if (shared_b) {
        const auto rows = static_cast<Eigen::Index>(numel_of(as) / k);
        ConstMap A(av.data(), rows, k);
        MutMap C(out.data(), rows, n);
        if (trans_b) {
            C.noalias() = A * ConstMap(bv.data(), n, k).transpose();
        } else {
            C.noalias() = A * ConstMap(bv.data(), k, n);
        }
    } else {
        for (std::size_t i = 0; i < batch; ++i) {
            ConstMap A(av.data() + i * m * k, m, k);
            MutMap C(out.data() + i * m * n, m, n);
            if (trans_b) {
                C.noalias() = A * ConstMap(bv.data() + i * n * k, n, k).transpose();
            } else {
                C.noalias() = A * ConstMap(bv.data() + i * k * n, k, n);
            }
        }
    }
    return Tensor::make_result(out_shape, std::move(out), {a, b}, [a, b, m, k, n, batch, shared_b, trans_b](detail::Node& self) {
        auto av = a.values();
        auto bv = b.values();
        auto ga = grad_buffer(a);
        auto gb = grad_buffer(b);
        const double* g = self.grad.data();
        if (shared_b) {
            const auto rows = static_cast<Eigen::Index>(a.numel() / k);
            ConstMap G(g, rows, n);
            ConstMap A(av.data(), rows, k);
            if (trans_b) {
                ConstMap B(bv.data(), n, k);
                if (!ga.empty()) MutMap(ga.data(), rows, k).noalias() += G * B;
                if (!gb.empty()) MutMap(gb.data(), n, k).noalias() += G.transpose() * A;
            } else {
                ConstMap B(bv.data(), k, n);
                if (!ga.empty()) MutMap(ga.data(), rows, k).noalias() += G * B.transpose();
                if (!gb.empty()) MutMap(gb.data(), k, n).noalias() += A.transpose() * G;
            }
            return;
        }
        for (std::size_t i = 0; i < batch; ++i) {
            ConstMap G(g + i * m * n, m, n);
            ConstMap A(av.data() + i * m * k, m, k);
            if (trans_b) {
                ConstMap B(bv.data() + i * n * k, n, k);
                if (!ga.empty()) MutMap(ga.data() + i * m * k, m, k).noalias() += G * B;
                if (!gb.empty()) MutMap(gb.data() + i * n * k, n, k).noalias() += G.transpose() * A;
            } else {
                ConstMap B(bv.data() + i * k * n, k, n);
                if (!ga.empty()) MutMap(ga.data() + i * m * k, m, k).noalias() += G * B.transpose();
                if (!gb.empty()) MutMap(gb.data() + i * k * n, k, n).noalias() += A.transpose() * G;
            }
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& x, double c) {
    return unary_op(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
    return unary_op(x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor exp(const Tensor& x) {
    return unary_op(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    return unary_op(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
    return unary_op(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
    return unary_op(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
    return unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double k = 0.044715;
    return unary_op(
        x, [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + k * v * v * v))); },
        [](double v, double) {
            const double t = std::tanh(c * (v + k * v * v * v));
            return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * k * v * v);
        });
}

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim) {
    const AxisView v = axis_view(x.shape(), axis);
    Shape out_shape = x.shape();
    if (keepdim) {
        out_shape[axis] = 1;
    } else {
        out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
        if (out_shape.empty()) out_shape.push_back(1);
    }
    auto xv = x.values();
    std::vector<double> out(v.outer * v.inner, 0.0);
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t j = 0; j < v.n; ++j) {
            const double* src = xv.data() + (o * v.n + j) * v.inner;
            double* dst = out.data() + o * v.inner;
            for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
        }
    }
    return Tensor::make_result(out_shape, std::move(out), {x}, [x, v](detail::Node& self) {
        auto gx = grad_buffer(x);
        for (std::size_t o = 0; o < v.outer; ++o) {
            for (std::size_t j = 0; j < v.n; ++j) {
                double* dst = gx.data() + (o * v.n + j) * v.inner;
                const double* g = self.grad.data() + o * v.inner;
                for (std::size_t i = 0; i < v.inner; ++i) dst[i] += g[i];
            }
        }
    });
}

Tensor mean(const Tensor& x, std::size_t axis, bool keepdim) {
    const double n = static_cast<double>(x.size(axis));
    return mul_scalar(sum(x, axis, keepdim), 1.0 / n);
}

Tensor sum_all(const Tensor& x) {
    auto xv = x.values();
    double total = 0.0;
    for (double v : xv) total += v;
    return Tensor::make_result({1}, {total}, {x}, [x](detail::Node& self) {
        auto gx = grad_buffer(x);
        for (double& g : gx) g += self.grad[0];
    });
}

Tensor mean_all(const Tensor& x) { return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel_of(shape) != x.numel()) {
        throw std::invalid_argument("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    auto xv = x.values();
    return Tensor::make_result(std::move(shape), std::vector<double>(xv.begin(), xv.end()), {x}, [x](detail::Node& self) {
        auto gx = grad_buffer(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
    const Shape& in = x.shape();
    const std::size_t rank = in.size();
    if (order.size() != rank) throw std::invalid_argument("permute order rank mismatch");
    std::vector<bool> seen(rank, false);
    for (auto o : order) {
        if (o >= rank || seen[o]) throw std::invalid_argument("permute order is not a permutation");
        seen[o] = true;
    }
    std::vector<std::size_t> in_stride(rank, 1);
    for (std::size_t i = rank - 1; i-- > 0;) in_stride[i] = in_stride[i + 1] * in[i + 1];
    Shape out_shape(rank);
    std::vector<std::size_t> stride(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = in[order[i]];
        stride[i] = in_stride[order[i]];
    }
    const std::size_t total = x.numel();
    std::vector<std::size_t> map(total);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        map[flat] = src;
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            src += stride[ax];
            if (idx[ax] < out_shape[ax]) break;
            src -= stride[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    auto xv = x.values();
    std::vector<double> out(total);
    for (std::size_t i = 0; i < total; ++i) out[i] = xv[map[i]];
    return Tensor::make_result(out_shape, std::move(out), {x}, [x, map = std::move(map)](detail::Node& self) {
        auto gx = grad_buffer(x);
        for (std::size_t i = 0; i < map.size(); ++i) gx[map[i]] += self.grad[i];
    });
}

Tensor transpose(const Tensor& x, std::size_t a, std::size_t b) {
    std::vector<std::size_t> order(x.dim());
    std::iota(order.begin(), order.end(), 0);
    if (a >= order.size() || b >= order.size()) throw std::invalid_argument("transpose axis out of range");
    std::swap(order[a], order[b]);
    return permute(x, order);
}

Tensor unsqueeze(const Tensor& x, std::size_t axis) {
    Shape s = x.shape();
    if (axis > s.size()) throw std::invalid_argument("unsqueeze axis out of range");
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    return reshape(x, s);
}

Tensor expand(const Tensor& x, const Shape& shape) {
    if (broadcast_shapes(x.shape(), shape) != shape) {
        throw std::invalid_argument("cannot expand " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    auto map = broadcast_map(x.shape(), shape);
    auto xv = x.values();
    std::vector<double> out(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = xv[map[i]];
    return Tensor::make_result(shape, std::move(out), {x}, [x, map = std::move(map)](detail::Node& self) {
        auto gx = grad_buffer(x);
        for (std::size_t i = 0; i < map.size(); ++i) gx[map[i]] += self.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
    Shape out_shape = parts.front().shape();
    if (axis >= out_shape.size()) throw std::invalid_argument("concat axis out of range");
    std::size_t total_axis = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != out_shape.size()) throw std::invalid_argument("concat rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != axis && s[i] != out_shape[i]) {
                throw std::invalid_argument("concat extent mismatch: " + shape_str(s) + " vs " + shape_str(out_shape));
            }
        }
        total_axis += s[axis];
    }
    out_shape[axis] = total_axis;
    const AxisView ov = axis_view(out_shape, axis);
    std::vector<double> out(numel_of(out_shape));
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t len = p.shape()[axis];
        auto pv = p.values();
        for (std::size_t o = 0; o < ov.outer; ++o) {
            std::copy_n(pv.data() + o * len * ov.inner, len * ov.inner, out.data() + (o * ov.n + offset) * ov.inner);
        }
        offset += len;
    }
    return Tensor::make_result(out_shape, std::move(out), parts, [parts, ov, axis](detail::Node& self) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            const std::size_t len = p.shape()[axis];
            auto gp = grad_buffer(p);
            if (!gp.empty()) {
                for (std::size_t o = 0; o < ov.outer; ++o) {
                    const double* src = self.grad.data() + (o * ov.n + offset) * ov.inner;
                    double* dst = gp.data() + o * len * ov.inner;
                    for (std::size_t i = 0; i < len * ov.inner; ++i) dst[i] += src[i];
                }
            }
            offset += len;
        }
    });
}

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
    const AxisView v = axis_view(x.shape(), axis);
    if (length == 0 || start + length > v.n) throw std::invalid_argument("narrow range out of bounds");
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    auto xv = x.values();
    std::vector<double> out(v.outer * length * v.inner);
    for (std::size_t o = 0; o < v.outer; ++o) {
        std::copy_n(xv.data() + (o * v.n + start) * v.inner, length * v.inner, out.data() + o * length * v.inner);
    }
    return Tensor::make_result(out_shape, std::move(out), {x}, [x, v, start, length](detail::Node& self) {
        auto gx = grad_buffer(x);
        for (std::size_t o = 0; o < v.outer; ++o) {
            const double* src = self.grad.data() + o * length * v.inner;
            double* dst = gx.data() + (o * v.n + start) * v.inner;
            for (std::size_t i = 0; i < length * v.inner; ++i) dst[i] += src[i];
        }
    });
}

Tensor index_select(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices) {
    const AxisView v = axis_view(x.shape(), axis);
    if (indices.empty()) throw std::invalid_argument("index_select with no indices");
    for (auto i : indices) {
        if (i >= v.n) throw std::out_of_range("index_select index " + std::to_string(i) + " out of range");
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    Shape out_shape = x.shape();
    out_shape[axis] = idx.size();
    auto xv = x.values();
    std::vector<double> out(v.outer * idx.size() * v.inner);
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
            std::copy_n(xv.data() + (o * v.n + idx[j]) * v.inner, v.inner, out.data() + (o * idx.size() + j) * v.inner);
        }
    }
    return Tensor::make_result(out_shape, std::move(out), {x}, [x, v, idx = std::move(idx)](detail::Node& self) {
        auto gx = grad_buffer(x);
        for (std::size_t o = 0; o < v.outer; ++o) {
            for (std::size_t j = 0; j < idx.size(); ++j) {
                const double* src = self.grad.data() + (o * idx.size() + j) * v.inner;
                double* dst = gx.data() + (o * v.n + idx[j]) * v.inner;
                for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
            }
        }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false); }
Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true); }

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (weight.dim() != 2) throw std::invalid_argument("linear weight must be 2-D");
    const std::size_t out_features = weight.size(0);
    if (bias.defined() && (bias.dim() != 1 || bias.size(0) != out_features)) {
        throw std::invalid_argument("linear bias shape " + shape_str(bias.shape()) + " does not match weight " +
                                    shape_str(weight.shape()));
    }
    Tensor y = matmul_nt(x, weight);
    return bias.defined() ? add(y, bias) : y;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const AxisView v = axis_view(x.shape(), axis);
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.n * v.inner + i;
            double mx = xv[base];
            for (std::size_t j = 1; j < v.n; ++j) mx = std::max(mx, xv[base + j * v.inner]);
            double total = 0.0;
            for (std::size_t j = 0; j < v.n; ++j) {
                const double e = std::exp(xv[base + j * v.inner] - mx);
                out[base + j * v.inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < v.n; ++j) out[base + j * v.inner] /= total;
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [x, v](detail::Node& self) {
        auto gx = grad_buffer(x);
        const auto& y = self.data;
        const auto& g = self.grad;
        for (std::size_t o = 0; o < v.outer; ++o) {
            for (std::size_t i = 0; i < v.inner; ++i) {
                const std::size_t base = o * v.n * v.inner + i;
                double dot = 0.0;
                for (std::size_t j = 0; j < v.n; ++j) dot += g[base + j * v.inner] * y[base + j * v.inner];
                for (std::size_t j = 0; j < v.n; ++j) {
                    const std::size_t p = base + j * v.inner;
                    gx[p] += y[p] * (g[p] - dot);
                }
            }
        }
    });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
    const AxisView v = axis_view(x.shape(), axis);
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.n * v.inner + i;
            double mx = xv[base];
            for (std::size_t j = 1; j < v.n; ++j) mx = std::max(mx, xv[base + j * v.inner]);
            double total = 0.0;
            for (std::size_t j = 0; j < v.n; ++j) total += std::exp(xv[base + j * v.inner] - mx);
            const double lse = mx + std::log(total);
            for (std::size_t j = 0; j < v.n; ++j) out[base + j * v.inner] = xv[base + j * v.inner] - lse;
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [x, v](detail::Node& self) {
        auto gx = grad_buffer(x);
        const auto& y = self.data;
        const auto& g = self.grad;
        for (std::size_t o = 0; o < v.outer; ++o) {
            for (std::size_t i = 0; i < v.inner; ++i) {
                const std::size_t base = o * v.n * v.inner + i;
                double total = 0.0;
                for (std::size_t j = 0; j < v.n; ++j) total += g[base + j * v.inner];
                for (std::size_t j = 0; j < v.n; ++j) {
                    const std::size_t p = base + j * v.inner;
                    gx[p] += g[p] - std::exp(y[p]) * total;
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("layer_norm eps must be positive");
    const std::size_t d = x.shape().back();
    if (gain.numel() != d || bias.numel() != d || gain.dim() != 1 || bias.dim() != 1) {
        throw std::invalid_argument("layer_norm gain/bias must have extent " + std::to_string(d));
    }
    const std::size_t rows = x.numel() / d;
    auto xv = x.values();
    auto gv = gain.values();
    auto bv = bias.values();
    std::vector<double> out(xv.size());
    std::vector<double> xhat(xv.size());
    std::vector<double> rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (row[j] - mu) * rstd[r];
            xhat[r * d + j] = h;
            out[r * d + j] = h * gv[j] + bv[j];
        }
    }
    return Tensor::make_result(
        x.shape(), std::move(out), {x, gain, bias},
        [x, gain, bias, d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node& self) {
            auto gx = grad_buffer(x);
            auto gg = grad_buffer(gain);
            auto gb = grad_buffer(bias);
            auto gv = gain.values();
            const auto& g = self.grad;
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gr = g.data() + r * d;
                const double* hr = xhat.data() + r * d;
                if (!gg.empty()) {
                    for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * hr[j];
                }
                if (!gb.empty()) {
                    for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
                }
                if (!gx.empty()) {
                    double mean_dh = 0.0;
                    double mean_dh_h = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = gr[j] * gv[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                    }
                    mean_dh *= inv_d;
                    mean_dh_h *= inv_d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = gr[j] * gv[j];
                        gx[r * d + j] += rstd[r] * (dh - mean_dh - hr[j] * mean_dh_h);
                    }
                }
            }
        });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.dim() != 2) throw std::invalid_argument("cross_entropy expects [B x K] logits");
    const std::size_t batch = logits.size(0);
    const std::size_t classes = logits.size(1);
    if (classes < 2) throw std::invalid_argument("cross_entropy needs at least two classes");
    if (labels.size() != batch) throw std::invalid_argument("cross_entropy label count differs from batch");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw std::out_of_range("label " + std::to_string(y) + " outside [0," + std::to_string(classes) + ")");
        }
    }
    auto lv = logits.values();
    std::vector<double> probs(lv.size());
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = lv.data() + b * classes;
        const double mx = *std::max_element(row, row + classes);
        double total = 0.0;
        for (std::size_t k = 0; k < classes; ++k) total += std::exp(row[k] - mx);
        const double lse = mx + std::log(total);
        for (std::size_t k = 0; k < classes; ++k) probs[b * classes + k] = std::exp(row[k] - lse);
        loss += lse - row[labels[b]];
    }
    loss /= static_cast<double>(batch);
    std::vector<int> y(labels.begin(), labels.end());
    return Tensor::make_result({1}, {loss}, {logits},
                               [logits, probs = std::move(probs), y = std::move(y), batch, classes](detail::Node& self) {
                                   auto gl = grad_buffer(logits);
                                   const double scale = self.grad[0] / static_cast<double>(batch);
                                   for (std::size_t b = 0; b < batch; ++b) {
                                       for (std::size_t k = 0; k < classes; ++k) {
                                           const double target = static_cast<int>(k) == y[b] ? 1.0 : 0.0;
                                           gl[b * classes + k] += scale * (probs[b * classes + k] - target);
                                       }
                                   }
                               });
}

}  // namespace cfpl
