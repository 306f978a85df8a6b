#include "ietnet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ietnet {

namespace {

template <typename T>
Tensor<T>& grad_slot(GradientMap<T>& gm, NodeId id, const Shape& shape) {
    Tensor<T>& g = gm.slot(id);
    if (g.data.empty()) g = Tensor<T>::zeros(shape);
    return g;
}

// True when `suffix` equals the trailing extents of `shape`.
bool is_suffix(const Shape& shape, const Shape& suffix) {
    if (suffix.size() > shape.size()) return false;
    const std::size_t off = shape.size() - suffix.size();
    for (std::size_t i = 0; i < suffix.size(); ++i) {
        if (shape[off + i] != suffix[i]) return false;
    }
    return true;
}

void check_axis(const Shape& shape, std::int64_t axis, const char* op) {
    if (axis < 0 || axis >= static_cast<std::int64_t>(shape.size())) {
        throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                    " out of range for shape " + shape_str(shape));
    }
}

struct MatmulDims {
    std::int64_t batch;  // product of batch extents (1 for rank-2)
    std::int64_t m, k, n;
    bool b_broadcast;  // b is rank-2, shared across the batch
};

MatmulDims matmul_dims(const Shape& a, const Shape& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw std::invalid_argument("matmul: operands must have rank >= 2, got " + shape_str(a) + " and " +
                                    shape_str(b));
    }
    MatmulDims d{};
    d.m = a[a.size() - 2];
    d.k = a[a.size() - 1];
    d.n = b[b.size() - 1];
    if (b[b.size() - 2] != d.k) {
        throw std::invalid_argument("matmul: inner dimensions disagree between " + shape_str(a) + " and " +
                                    shape_str(b));
    }
    d.batch = 1;
    for (std::size_t i = 0; i + 2 < a.size(); ++i) d.batch *= a[i];
    if (b.size() == 2) {
        d.b_broadcast = true;
    } else {
        if (a.size() != b.size() ||
            !std::equal(a.begin(), a.end() - 2, b.begin())) {
            throw std::invalid_argument("matmul: batch dimensions disagree between " + shape_str(a) + " and " +
                                        shape_str(b));
        }
        d.b_broadcast = false;
    }
    return d;
}

}  // namespace

template <typename T>
NodeId Graph<T>::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
NodeId Graph<T>::input(Tensor<T> v) {
    Node n;
    n.op = "input";
    n.value = std::move(v);
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::param(Tensor<T> v) {
    Node n;
    n.op = "param";
    n.value = std::move(v);
    n.trainable = true;
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::add(NodeId a, NodeId b) {
    const Tensor<T>& x = in(a);
    const Tensor<T>& y = in(b);
    Node n;
    n.op = "add";
    n.inputs = {a, b};
    if (x.shape == y.shape) {
        Tensor<T> out(x.shape);
        for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
        n.value = std::move(out);
        n.backward = [a, b](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
            Tensor<T>& ga = grad_slot(gm, a, g.value(a).shape);
            Tensor<T>& gb = grad_slot(gm, b, g.value(b).shape);
            for (std::int64_t i = 0; i < go.size(); ++i) {
                ga[i] += go[i];
                gb[i] += go[i];
            }
        };
    } else if (is_suffix(x.shape, y.shape)) {
        // Broadcast y over the leading axes of x (bias patterns).
        const std::int64_t block = y.size();
        const std::int64_t reps = x.size() / block;
        Tensor<T> out(x.shape);
        for (std::int64_t r = 0; r < reps; ++r) {
            const std::int64_t base = r * block;
            for (std::int64_t i = 0; i < block; ++i) out[base + i] = x[base + i] + y[i];
        }
        n.value = std::move(out);
        n.backward = [a, b, block, reps](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
            Tensor<T>& ga = grad_slot(gm, a, g.value(a).shape);
            Tensor<T>& gb = grad_slot(gm, b, g.value(b).shape);
            for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            for (std::int64_t r = 0; r < reps; ++r) {
                const std::int64_t base = r * block;
                for (std::int64_t i = 0; i < block; ++i) gb[i] += go[base + i];
            }
        };
    } else {
        throw std::invalid_argument("add: incompatible shapes " + shape_str(x.shape) + " and " +
                                    shape_str(y.shape));
    }
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::mul(NodeId a, NodeId b) {
    const Tensor<T>& x = in(a);
    const Tensor<T>& y = in(b);
    if (x.shape != y.shape) {
        throw std::invalid_argument("mul: incompatible shapes " + shape_str(x.shape) + " and " +
                                    shape_str(y.shape));
    }
    Tensor<T> out(x.shape);
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    Node n;
    n.op = "mul";
    n.inputs = {a, b};
    n.value = std::move(out);
    n.backward = [a, b](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        const Tensor<T>& x = g.value(a);
        const Tensor<T>& y = g.value(b);
        Tensor<T>& ga = grad_slot(gm, a, x.shape);
        Tensor<T>& gb = grad_slot(gm, b, y.shape);
        for (std::int64_t i = 0; i < go.size(); ++i) {
            ga[i] += go[i] * y[i];
            gb[i] += go[i] * x[i];
        }
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::scale(NodeId a, T c) {
    const Tensor<T>& x = in(a);
    Tensor<T> out(x.shape);
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] * c;
    Node n;
    n.op = "scale";
    n.inputs = {a};
    n.value = std::move(out);
    n.backward = [a, c](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        Tensor<T>& ga = grad_slot(gm, a, g.value(a).shape);
        for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c;
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::relu(NodeId a) {
    const Tensor<T>& x = in(a);
    Tensor<T> out(x.shape);
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    Node n;
    n.op = "relu";
    n.inputs = {a};
    n.value = std::move(out);
    // Subgradient at exactly 0 is fixed to 0.
    n.backward = [a](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        const Tensor<T>& x = g.value(a);
        Tensor<T>& ga = grad_slot(gm, a, x.shape);
        for (std::int64_t i = 0; i < go.size(); ++i) {
            if (x[i] > T(0)) ga[i] += go[i];
        }
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::log_clamped(NodeId a, T floor) {
    const Tensor<T>& x = in(a);
    Tensor<T> out(x.shape);
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = std::log(std::max(x[i], floor));
    Node n;
    n.op = "log_clamped";
    n.inputs = {a};
    n.value = std::move(out);
    n.backward = [a, floor](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        const Tensor<T>& x = g.value(a);
        Tensor<T>& ga = grad_slot(gm, a, x.shape);
        for (std::int64_t i = 0; i < go.size(); ++i) {
            if (x[i] > floor) ga[i] += go[i] / x[i];
        }
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::softmax(NodeId a, std::int64_t axis) {
    const Tensor<T>& x = in(a);
    check_axis(x.shape, axis, "softmax");
    const std::int64_t extent = x.shape[static_cast<std::size_t>(axis)];
    std::int64_t inner = 1;
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < x.shape.size(); ++i) inner *= x.shape[i];
    const std::int64_t outer = x.size() / (extent * inner);

    Tensor<T> out(x.shape);
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            const std::int64_t base = o * extent * inner + i;
            T mx = x[base];
            for (std::int64_t e = 1; e < extent; ++e) mx = std::max(mx, x[base + e * inner]);
            T sum = T(0);
            for (std::int64_t e = 0; e < extent; ++e) {
                const T v = std::exp(x[base + e * inner] - mx);
                out[base + e * inner] = v;
                sum += v;
            }
            const T inv = T(1) / sum;
            for (std::int64_t e = 0; e < extent; ++e) out[base + e * inner] *= inv;
        }
    }

    Node n;
    n.op = "softmax";
    n.inputs = {a};
    n.value = std::move(out);
    const NodeId self = static_cast<NodeId>(nodes_.size());
    n.backward = [a, self, extent, inner, outer](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        const Tensor<T>& y = g.value(self);
        Tensor<T>& ga = grad_slot(gm, a, g.value(a).shape);
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t i = 0; i < inner; ++i) {
                const std::int64_t base = o * extent * inner + i;
                T dot = T(0);
                for (std::int64_t e = 0; e < extent; ++e) {
                    dot += go[base + e * inner] * y[base + e * inner];
                }
                for (std::int64_t e = 0; e < extent; ++e) {
                    const std::int64_t idx = base + e * inner;
                    ga[idx] += y[idx] * (go[idx] - dot);
                }
            }
        }
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::mean(NodeId a, std::vector<std::int64_t> axes) {
    const Tensor<T>& x = in(a);
    std::sort(axes.begin(), axes.end());
    if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) {
        throw std::invalid_argument("mean: duplicate reduction axes");
    }
    if (axes.empty()) {
        throw std::invalid_argument("mean: empty reduction axis set");
    }
    for (auto ax : axes) check_axis(x.shape, ax, "mean");

    Shape out_shape;
    std::int64_t count = 1;
    std::vector<bool> reduced(x.shape.size(), false);
    for (auto ax : axes) reduced[static_cast<std::size_t>(ax)] = true;
    for (std::size_t i = 0; i < x.shape.size(); ++i) {
        if (reduced[i]) {
            count *= x.shape[i];
        } else {
            out_shape.push_back(x.shape[i]);
        }
    }
    if (out_shape.empty()) out_shape.push_back(1);  // scalar result
    const T inv = T(1) / static_cast<T>(count);

    // Fast path: reducing a trailing contiguous block.
    const std::size_t n_trailing = axes.size();
    bool trailing = true;
    for (std::size_t i = 0; i < n_trailing; ++i) {
        if (static_cast<std::size_t>(axes[i]) != x.shape.size() - n_trailing + i) trailing = false;
    }

    Node n;
    n.op = "mean";
    n.inputs = {a};
    if (trailing) {
        const std::int64_t rows = x.size() / count;
        Tensor<T> out(out_shape);
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* p = x.data.data() + r * count;
            T acc = T(0);
            for (std::int64_t i = 0; i < count; ++i) acc += p[i];
            out[r] = acc * inv;
        }
        n.value = std::move(out);
        n.backward = [a, count, inv](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
            Tensor<T>& ga = grad_slot(gm, a, g.value(a).shape);
            const std::int64_t rows = go.size();
            for (std::int64_t r = 0; r < rows; ++r) {
                const T v = go[r] * inv;
                T* p = ga.data.data() + r * count;
                for (std::int64_t i = 0; i < count; ++i) p[i] += v;
            }
        };
    } else {
        // Generic path: map each input element to its output slot.
        const auto in_strides = row_major_strides(x.shape);
        const auto out_strides = row_major_strides(out_shape);
        std::vector<std::int64_t> out_stride_of_axis(x.shape.size(), 0);
        std::size_t oi = 0;
        for (std::size_t i = 0; i < x.shape.size(); ++i) {
            if (!reduced[i]) out_stride_of_axis[i] = out_strides[oi++];
        }
        auto out_index = [in_strides, out_stride_of_axis](std::int64_t flat) {
            std::int64_t o = 0;
            for (std::size_t i = 0; i < in_strides.size(); ++i) {
                const std::int64_t coord = flat / in_strides[i];
                flat -= coord * in_strides[i];
                o += coord * out_stride_of_axis[i];
            }
            return o;
        };
        Tensor<T> out(out_shape);
        for (std::int64_t i = 0; i < x.size(); ++i) out[out_index(i)] += x[i] * inv;
        n.value = std::move(out);
        n.backward = [a, inv, out_index](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
            Tensor<T>& ga = grad_slot(gm, a, g.value(a).shape);
            for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += go[out_index(i)] * inv;
        };
    }
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::matmul(NodeId a, NodeId b) {
    const Tensor<T>& x = in(a);
    const Tensor<T>& y = in(b);
    const MatmulDims d = matmul_dims(x.shape, y.shape);

    Shape out_shape(x.shape.begin(), x.shape.end() - 1);
    out_shape.push_back(d.n);
    Tensor<T> out(out_shape);

    const std::int64_t a_block = d.m * d.k;
    const std::int64_t b_block = d.b_broadcast ? 0 : d.k * d.n;
    const std::int64_t o_block = d.m * d.n;
    for (std::int64_t bt = 0; bt < d.batch; ++bt) {
        const T* A = x.data.data() + bt * a_block;
        const T* B = y.data.data() + bt * b_block;
        T* C = out.data.data() + bt * o_block;
        for (std::int64_t i = 0; i < d.m; ++i) {
            T* crow = C + i * d.n;
            for (std::int64_t k = 0; k < d.k; ++k) {
                const T av = A[i * d.k + k];
                const T* brow = B + k * d.n;
                for (std::int64_t j = 0; j < d.n; ++j) crow[j] += av * brow[j];
            }
        }
    }

    Node n;
    n.op = "matmul";
    n.inputs = {a, b};
    n.value = std::move(out);
    n.backward = [a, b, d, a_block, b_block, o_block](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        const Tensor<T>& x = g.value(a);
        const Tensor<T>& y = g.value(b);
        Tensor<T>& ga = grad_slot(gm, a, x.shape);
        Tensor<T>& gb = grad_slot(gm, b, y.shape);
        for (std::int64_t bt = 0; bt < d.batch; ++bt) {
            const T* A = x.data.data() + bt * a_block;
            const T* B = y.data.data() + bt * b_block;
            const T* G = go.data.data() + bt * o_block;
            T* dA = ga.data.data() + bt * a_block;
            T* dB = gb.data.data() + bt * b_block;
            // dA = G * B^T
            for (std::int64_t i = 0; i < d.m; ++i) {
                for (std::int64_t k = 0; k < d.k; ++k) {
                    T acc = T(0);
                    const T* grow = G + i * d.n;
                    const T* brow = B + k * d.n;
                    for (std::int64_t j = 0; j < d.n; ++j) acc += grow[j] * brow[j];
                    dA[i * d.k + k] += acc;
                }
            }
            // dB = A^T * G
            for (std::int64_t k = 0; k < d.k; ++k) {
                T* dbrow = dB + k * d.n;
                for (std::int64_t i = 0; i < d.m; ++i) {
                    const T av = A[i * d.k + k];
                    const T* grow = G + i * d.n;
                    for (std::int64_t j = 0; j < d.n; ++j) dbrow[j] += av * grow[j];
                }
            }
        }
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::transpose_last2(NodeId a) {
    const Tensor<T>& x = in(a);
    if (x.rank() < 2) {
        throw std::invalid_argument("transpose_last2: rank must be >= 2, got shape " + shape_str(x.shape));
    }
    const std::int64_t r = x.shape[x.shape.size() - 2];
    const std::int64_t c = x.shape[x.shape.size() - 1];
    const std::int64_t batch = x.size() / (r * c);
    Shape out_shape = x.shape;
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);

    auto transpose_into = [r, c, batch](const Tensor<T>& src, Tensor<T>& dst, bool accumulate) {
        for (std::int64_t bt = 0; bt < batch; ++bt) {
            const T* S = src.data.data() + bt * r * c;
            T* D = dst.data.data() + bt * r * c;
            for (std::int64_t i = 0; i < r; ++i) {
                for (std::int64_t j = 0; j < c; ++j) {
                    if (accumulate) {
                        D[j * r + i] += S[i * c + j];
                    } else {
                        D[j * r + i] = S[i * c + j];
                    }
                }
            }
        }
    };

    Tensor<T> out(out_shape);
    transpose_into(x, out, false);

    Node n;
    n.op = "transpose_last2";
    n.inputs = {a};
    n.value = std::move(out);
    n.backward = [a, r, c, batch](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        Tensor<T>& ga = grad_slot(gm, a, g.value(a).shape);
        // go has shape (..., c, r); transpose back.
        for (std::int64_t bt = 0; bt < batch; ++bt) {
            const T* G = go.data.data() + bt * r * c;
            T* D = ga.data.data() + bt * r * c;
            for (std::int64_t j = 0; j < c; ++j) {
                for (std::int64_t i = 0; i < r; ++i) {
                    D[i * c + j] += G[j * r + i];
                }
            }
        }
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::reshape(NodeId a, Shape new_shape) {
    const Tensor<T>& x = in(a);
    if (numel(new_shape) != x.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape) + " as " +
                                    shape_str(new_shape));
    }
    Node n;
    n.op = "reshape";
    n.inputs = {a};
    n.value = Tensor<T>(new_shape, x.data);
    n.backward = [a](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        Tensor<T>& ga = grad_slot(gm, a, g.value(a).shape);
        for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::slice_last(NodeId a, std::int64_t lo, std::int64_t hi) {
    const Tensor<T>& x = in(a);
    const std::int64_t last = x.shape.back();
    if (lo < 0 || hi > last || lo >= hi) {
        throw std::invalid_argument("slice_last: range [" + std::to_string(lo) + "," + std::to_string(hi) +
                                    ") invalid for shape " + shape_str(x.shape));
    }
    const std::int64_t width = hi - lo;
    const std::int64_t rows = x.size() / last;
    Shape out_shape = x.shape;
    out_shape.back() = width;
    Tensor<T> out(out_shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = x.data.data() + r * last + lo;
        T* dst = out.data.data() + r * width;
        std::copy(src, src + width, dst);
    }
    Node n;
    n.op = "slice_last";
    n.inputs = {a};
    n.value = std::move(out);
    n.backward = [a, lo, width, last, rows](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        Tensor<T>& ga = grad_slot(gm, a, g.value(a).shape);
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* src = go.data.data() + r * width;
            T* dst = ga.data.data() + r * last + lo;
            for (std::int64_t i = 0; i < width; ++i) dst[i] += src[i];
        }
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::concat_last(const std::vector<NodeId>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_last: no inputs");
    }
    const Tensor<T>& first = in(parts[0]);
    Shape lead(first.shape.begin(), first.shape.end() - 1);
    std::int64_t total = 0;
    std::vector<std::int64_t> widths;
    for (NodeId p : parts) {
        const Tensor<T>& t = in(p);
        if (Shape(t.shape.begin(), t.shape.end() - 1) != lead) {
            throw std::invalid_argument("concat_last: leading dimensions disagree between " +
                                        shape_str(first.shape) + " and " + shape_str(t.shape));
        }
        widths.push_back(t.shape.back());
        total += t.shape.back();
    }
    Shape out_shape = lead;
    out_shape.push_back(total);
    const std::int64_t rows = numel(lead);
    Tensor<T> out(out_shape);
    std::int64_t off = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const Tensor<T>& t = in(parts[pi]);
        const std::int64_t w = widths[pi];
        for (std::int64_t r = 0; r < rows; ++r) {
            std::copy(t.data.data() + r * w, t.data.data() + (r + 1) * w,
                      out.data.data() + r * total + off);
        }
        off += w;
    }
    Node n;
    n.op = "concat_last";
    n.inputs = parts;
    n.value = std::move(out);
    n.backward = [parts, widths, rows, total](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        std::int64_t off = 0;
        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
            const std::int64_t w = widths[pi];
            Tensor<T>& gp = grad_slot(gm, parts[pi], g.value(parts[pi]).shape);
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* src = go.data.data() + r * total + off;
                T* dst = gp.data.data() + r * w;
                for (std::int64_t i = 0; i < w; ++i) dst[i] += src[i];
            }
            off += w;
        }
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::conv1d_causal(NodeId xid, NodeId kid, NodeId bid, std::int64_t dilation) {
    const Tensor<T>& x = in(xid);
    const Tensor<T>& k = in(kid);
    const Tensor<T>& bias = in(bid);
    if (x.rank() != 3 || k.rank() != 3) {
        throw std::invalid_argument("conv1d_causal: expected x (N,C,T) and kernel (F,C,K), got " +
                                    shape_str(x.shape) + " and " + shape_str(k.shape));
    }
    const std::int64_t N = x.shape[0], C = x.shape[1], L = x.shape[2];
    const std::int64_t F = k.shape[0], KC = k.shape[1], K = k.shape[2];
    if (C != KC) {
        throw std::invalid_argument("conv1d_causal: input has " + std::to_string(C) +
                                    " channels but kernel expects " + std::to_string(KC));
    }
    if (bias.shape != Shape{F}) {
        throw std::invalid_argument("conv1d_causal: bias shape " + shape_str(bias.shape) +
                                    " does not match " + std::to_string(F) + " filters");
    }
    if (dilation < 1 || K < 1) {
        throw std::invalid_argument("conv1d_causal: kernel size and dilation must be >= 1");
    }

    // out[n,f,t] = bias[f] + sum_{c,j} kernel[f,c,j] * x[n,c,t-(K-1-j)*d],
    // with out-of-range inputs treated as zero (left padding). restrict
    // qualifiers let the saxpy loops vectorize; out and x never alias.
    Tensor<T> out({N, F, L});
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t f = 0; f < F; ++f) {
            T* __restrict orow = out.data.data() + (n * F + f) * L;
            const T bv = bias[f];
            for (std::int64_t t = 0; t < L; ++t) orow[t] = bv;
            for (std::int64_t c = 0; c < C; ++c) {
                const T* __restrict xrow = x.data.data() + (n * C + c) * L;
                for (std::int64_t j = 0; j < K; ++j) {
                    const std::int64_t off = (K - 1 - j) * dilation;
                    if (off >= L) continue;
                    const T w = k[(f * C + c) * K + j];
                    for (std::int64_t t = off; t < L; ++t) orow[t] += w * xrow[t - off];
                }
            }
        }
    }

    Node n;
    n.op = "conv1d_causal";
    n.inputs = {xid, kid, bid};
    n.value = std::move(out);
    n.backward = [xid, kid, bid, dilation, N, C, L, F, K](const Graph& g, const Tensor<T>& go,
                                                          GradientMap<T>& gm) {
        const Tensor<T>& x = g.value(xid);
        const Tensor<T>& k = g.value(kid);
        Tensor<T>& gx = grad_slot(gm, xid, x.shape);
        Tensor<T>& gk = grad_slot(gm, kid, k.shape);
        Tensor<T>& gb = grad_slot(gm, bid, g.value(bid).shape);
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t f = 0; f < F; ++f) {
                const T* __restrict grow = go.data.data() + (n * F + f) * L;
                T acc = T(0);
                for (std::int64_t t = 0; t < L; ++t) acc += grow[t];
                gb[f] += acc;
                for (std::int64_t c = 0; c < C; ++c) {
                    const T* __restrict xrow = x.data.data() + (n * C + c) * L;
                    T* __restrict gxrow = gx.data.data() + (n * C + c) * L;
                    for (std::int64_t j = 0; j < K; ++j) {
                        const std::int64_t off = (K - 1 - j) * dilation;
                        if (off >= L) continue;
                        // dK[f,c,j] = sum_t go[t] * x[t-off]; four partial
                        // sums so the reduction can run in simd lanes.
                        T k0 = T(0), k1 = T(0), k2 = T(0), k3 = T(0);
                        const std::int64_t len = L - off;
                        const T* __restrict ga = grow + off;
                        std::int64_t t = 0;
                        for (; t + 4 <= len; t += 4) {
                            k0 += ga[t + 0] * xrow[t + 0];
                            k1 += ga[t + 1] * xrow[t + 1];
                            k2 += ga[t + 2] * xrow[t + 2];
                            k3 += ga[t + 3] * xrow[t + 3];
                        }
                        for (; t < len; ++t) k0 += ga[t] * xrow[t];
                        gk[(f * C + c) * K + j] += ((k0 + k1) + (k2 + k3));
                        // dX[t-off] += kernel[f,c,j] * go[t]
                        const T w = k[(f * C + c) * K + j];
                        for (std::int64_t u = 0; u < len; ++u) gxrow[u] += w * ga[u];
                    }
                }
            }
        }
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::dropout(NodeId xid, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
    }
    const Tensor<T>& x = in(xid);
    // Identity outside training: no node, no copy.
    if (!training || rate == 0.0) return xid;

    Node n;
    n.op = "dropout";
    n.inputs = {xid};
    const T inv_keep = static_cast<T>(1.0 / (1.0 - rate));
    // One 64-bit draw covers two elements; each half is compared against
    // rate scaled to 32 bits (off by at most 2^-32 from the exact rate).
    const std::uint64_t threshold = static_cast<std::uint64_t>(rate * 4294967296.0);
    std::vector<T> mask(static_cast<std::size_t>(x.size()));
    Tensor<T> out(x.shape);
    for (std::int64_t i = 0; i < x.size(); i += 2) {
        const std::uint64_t bits = rng.next_u64();
        mask[static_cast<std::size_t>(i)] = (bits & 0xffffffffULL) < threshold ? T(0) : inv_keep;
        if (i + 1 < x.size()) {
            mask[static_cast<std::size_t>(i + 1)] = (bits >> 32) < threshold ? T(0) : inv_keep;
        }
    }
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[static_cast<std::size_t>(i)];
    n.value = std::move(out);
    n.backward = [xid, mask = std::move(mask)](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        Tensor<T>& ga = grad_slot(gm, xid, g.value(xid).shape);
        for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * mask[static_cast<std::size_t>(i)];
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::layer_norm(NodeId xid, NodeId gid, NodeId bid, T eps) {
    const Tensor<T>& x = in(xid);
    const Tensor<T>& gain = in(gid);
    const Tensor<T>& bias = in(bid);
    const std::int64_t D = x.shape.back();
    if (gain.shape != Shape{D} || bias.shape != Shape{D}) {
        throw std::invalid_argument("layer_norm: gain/bias must have shape (" + std::to_string(D) +
                                    "), got " + shape_str(gain.shape) + " and " + shape_str(bias.shape));
    }
    const std::int64_t rows = x.size() / D;

    std::vector<T> xhat(static_cast<std::size_t>(x.size()));
    std::vector<T> invstd(static_cast<std::size_t>(rows));
    Tensor<T> out(x.shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xr = x.data.data() + r * D;
        T mu = T(0);
        for (std::int64_t i = 0; i < D; ++i) mu += xr[i];
        mu /= static_cast<T>(D);
        T var = T(0);
        for (std::int64_t i = 0; i < D; ++i) {
            const T d = xr[i] - mu;
            var += d * d;
        }
        var /= static_cast<T>(D);
        const T is = T(1) / std::sqrt(var + eps);
        invstd[static_cast<std::size_t>(r)] = is;
        T* xh = xhat.data() + r * D;
        T* orow = out.data.data() + r * D;
        for (std::int64_t i = 0; i < D; ++i) {
            xh[i] = (xr[i] - mu) * is;
            orow[i] = xh[i] * gain[i] + bias[i];
        }
    }

    Node n;
    n.op = "layer_norm";
    n.inputs = {xid, gid, bid};
    n.value = std::move(out);
    n.backward = [xid, gid, bid, D, rows, xhat = std::move(xhat), invstd = std::move(invstd)](
                     const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        const Tensor<T>& gain = g.value(gid);
        Tensor<T>& gx = grad_slot(gm, xid, g.value(xid).shape);
        Tensor<T>& gg = grad_slot(gm, gid, gain.shape);
        Tensor<T>& gb = grad_slot(gm, bid, g.value(bid).shape);
        const T invD = T(1) / static_cast<T>(D);
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* grow = go.data.data() + r * D;
            const T* xh = xhat.data() + r * D;
            T* gxr = gx.data.data() + r * D;
            T sum_h = T(0), sum_hx = T(0);
            for (std::int64_t i = 0; i < D; ++i) {
                const T h = grow[i] * gain[i];
                sum_h += h;
                sum_hx += h * xh[i];
                gg[i] += grow[i] * xh[i];
                gb[i] += grow[i];
            }
            const T mh = sum_h * invD;
            const T mhx = sum_hx * invD;
            const T is = invstd[static_cast<std::size_t>(r)];
            for (std::int64_t i = 0; i < D; ++i) {
                const T h = grow[i] * gain[i];
                gxr[i] += is * (h - mh - xh[i] * mhx);
            }
        }
    };
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::select_index(NodeId xid, const std::vector<int>& index) {
    const Tensor<T>& x = in(xid);
    if (x.rank() != 2) {
        throw std::invalid_argument("select_index: expected rank-2 input, got " + shape_str(x.shape));
    }
    const std::int64_t N = x.shape[0], K = x.shape[1];
    if (static_cast<std::int64_t>(index.size()) != N) {
        throw std::invalid_argument("select_index: " + std::to_string(index.size()) + " indices for " +
                                    std::to_string(N) + " rows");
    }
    for (std::int64_t i = 0; i < N; ++i) {
        if (index[static_cast<std::size_t>(i)] < 0 || index[static_cast<std::size_t>(i)] >= K) {
            throw std::invalid_argument("select_index: index " +
                                        std::to_string(index[static_cast<std::size_t>(i)]) + " at row " +
                                        std::to_string(i) + " out of range [0," + std::to_string(K) + ")");
        }
    }
    Tensor<T> out({N});
    for (std::int64_t i = 0; i < N; ++i) out[i] = x[i * K + index[static_cast<std::size_t>(i)]];
    Node n;
    n.op = "select_index";
    n.inputs = {xid};
    n.value = std::move(out);
    n.backward = [xid, index, K](const Graph& g, const Tensor<T>& go, GradientMap<T>& gm) {
        Tensor<T>& ga = grad_slot(gm, xid, g.value(xid).shape);
        for (std::int64_t i = 0; i < go.size(); ++i) {
            ga[i * K + index[static_cast<std::size_t>(i)]] += go[i];
        }
    };
    return push(std::move(n));
}

template <typename T>
GradientMap<T> Graph<T>::backward(NodeId loss) const {
    if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size()) {
        throw std::invalid_argument("backward: unknown node " + std::to_string(loss));
    }
    const Tensor<T>& lv = value(loss);
    if (lv.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(lv.shape));
    }
    GradientMap<T> gm(nodes_.size());
    gm.slot(loss) = Tensor<T>::ones(lv.shape);
    for (NodeId id = loss; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.backward || !gm.has(id)) continue;
        n.backward(*this, gm.at(id), gm);
    }
    return gm;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace ietnet
