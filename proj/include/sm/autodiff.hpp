#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <unordered_set>
#include <vector>

#include "sm/kernels.hpp"
#include "sm/tensor.hpp"

namespace sm {

// Reverse-mode autodiff over dense tensors. Graphs are built dynamically by
// the op functions below; backward() walks the tape once and then frees it
// iteratively (long chains must not unwind through recursive destructors).

namespace detail {
inline thread_local bool grad_enabled = true;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = prev; }
};

inline bool grad_enabled() { return detail::grad_enabled; }

template <typename T>
struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // allocated on first accumulation
    bool needs_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> back;

    Tensor<T>& ensure_grad() {
        if (grad.data.size() != val.data.size()) grad = Tensor<T>::zeros(val.shape);
        return grad;
    }
};

template <typename T>
class Value {
public:
    Value() = default;
    explicit Value(Tensor<T> t, bool requires_grad = false) : n_(std::make_shared<Node<T>>()) {
        n_->val = std::move(t);
        n_->needs_grad = requires_grad && detail::grad_enabled;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor<T>& val() const { return n_->val; }
    Tensor<T>& mutable_val() { return n_->val; }
    const Tensor<T>& grad() const { return n_->grad; }
    bool needs_grad() const { return n_ && n_->needs_grad; }
    std::shared_ptr<Node<T>> node() const { return n_; }

    void zero_grad() {
        if (!n_) return;
        n_->grad = Tensor<T>();
    }

    /// New leaf sharing no graph history (value copied).
    Value detach() const {
        Value v;
        v.n_ = std::make_shared<Node<T>>();
        v.n_->val = n_->val;
        v.n_->needs_grad = false;
        return v;
    }

    static Value from_node(std::shared_ptr<Node<T>> n) {
        Value v;
        v.n_ = std::move(n);
        return v;
    }

private:
    std::shared_ptr<Node<T>> n_;
};

template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
    // Iterative postorder over nodes that participate in grad flow.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    if (!root->needs_grad) return order;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        bool descended = false;
        while (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx++].get();
            if (p->needs_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
            order.push_back(stack.back().first);
            stack.pop_back();
        }
    }
    return order;
}

/// Frees a graph without recursive shared_ptr destruction.
template <typename T>
void release_graph(Value<T>& root) {
    if (!root.defined()) return;
    std::vector<std::shared_ptr<Node<T>>> all;
    std::unordered_set<Node<T>*> seen;
    all.push_back(root.node());
    seen.insert(root.node().get());
    for (std::size_t i = 0; i < all.size(); ++i) {
        for (auto& p : all[i]->parents)
            if (seen.insert(p.get()).second) all.push_back(p);
    }
    for (auto& n : all) {
        n->parents.clear();
        n->back = nullptr;
    }
}

/// Backpropagates from a scalar root. Leaf gradients accumulate; call
/// zero_grad on parameters between steps. The tape is torn down afterwards
/// unless keep_graph is set.
template <typename T>
void backward(Value<T>& root, bool keep_graph = false) {
    Node<T>* r = root.node().get();
    if (r->val.numel() != 1) throw ShapeError("backward requires a scalar root, got " + shape_str(r->val.shape));
    if (!r->needs_grad) return;
    auto order = topo_order(r);
    r->ensure_grad();
    r->grad.data[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->back) n->back(*n);
    }
    if (!keep_graph) release_graph(root);
}

// ---- construction helpers ----------------------------------------------

template <typename T>
Value<T> make_op(Tensor<T> out, std::vector<Value<T>> parents, std::function<void(Node<T>&)> back) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(out);
    if (detail::grad_enabled) {
        bool any = false;
        for (auto& p : parents) any = any || p.needs_grad();
        if (any) {
            n->needs_grad = true;
            n->parents.reserve(parents.size());
            for (auto& p : parents) n->parents.push_back(p.node());
            n->back = std::move(back);
        }
    }
    return Value<T>::from_node(std::move(n));
}

template <typename T>
void axpy(Tensor<T>& dst, const Tensor<T>& src, T a = T(1)) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += a * src.data[i];
}

// Broadcast classification for elementwise binary ops: b may be the same
// shape as a, a single scalar, a row vector (matching a's column count), or
// a column vector (rows x 1).
enum class Bcast { Same, Scalar, Row, Col };

template <typename T>
Bcast bcast_kind(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape == b.shape) return Bcast::Same;
    if (b.numel() == 1) return Bcast::Scalar;
    std::size_t R = a.rows(), C = a.cols();
    if (b.numel() == C && (b.rank() == 1 || (b.rank() == 2 && b.shape[0] == 1))) return Bcast::Row;
    if (b.rank() == 2 && b.shape[0] == R && b.shape[1] == 1) return Bcast::Col;
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

template <typename T>
std::size_t bcast_index(Bcast k, std::size_t i, std::size_t C) {
    switch (k) {
        case Bcast::Same: return i;
        case Bcast::Scalar: return 0;
        case Bcast::Row: return i % C;
        case Bcast::Col: return i / C;
    }
    return 0;
}

template <typename T>
void bcast_accumulate(Tensor<T>& bg, Bcast k, const Tensor<T>& g, std::size_t C, const T* scalefac = nullptr) {
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        T v = g.data[i];
        if (scalefac) v *= scalefac[i];
        bg.data[bcast_index<T>(k, i, C)] += v;
    }
}

// ---- elementwise ops ---------------------------------------------------

template <typename T>
Value<T> add(const Value<T>& a, const Value<T>& b) {
    Bcast k = bcast_kind(a.val(), b.val(), "add");
    Tensor<T> out = a.val();
    std::size_t C = a.val().cols();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.val().data[bcast_index<T>(k, i, C)];
    return make_op<T>(std::move(out), {a, b}, [k, C](Node<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.needs_grad) axpy(pa.ensure_grad(), n.grad);
        if (pb.needs_grad) bcast_accumulate(pb.ensure_grad(), k, n.grad, C);
    });
}

template <typename T>
Value<T> sub(const Value<T>& a, const Value<T>& b) {
    Bcast k = bcast_kind(a.val(), b.val(), "sub");
    Tensor<T> out = a.val();
    std::size_t C = a.val().cols();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.val().data[bcast_index<T>(k, i, C)];
    return make_op<T>(std::move(out), {a, b}, [k, C](Node<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.needs_grad) axpy(pa.ensure_grad(), n.grad);
        if (pb.needs_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                g.data[bcast_index<T>(k, i, C)] -= n.grad.data[i];
        }
    });
}

template <typename T>
Value<T> mul(const Value<T>& a, const Value<T>& b) {
    Bcast k = bcast_kind(a.val(), b.val(), "mul");
    Tensor<T> out = a.val();
    std::size_t C = a.val().cols();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.val().data[bcast_index<T>(k, i, C)];
    return make_op<T>(std::move(out), {a, b}, [k, C](Node<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.needs_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                g.data[i] += n.grad.data[i] * pb.val.data[bcast_index<T>(k, i, C)];
        }
        if (pb.needs_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                g.data[bcast_index<T>(k, i, C)] += n.grad.data[i] * pa.val.data[i];
        }
    });
}

template <typename T>
Value<T> divv(const Value<T>& a, const Value<T>& b) {
    Bcast k = bcast_kind(a.val(), b.val(), "div");
    Tensor<T> out = a.val();
    std::size_t C = a.val().cols();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= b.val().data[bcast_index<T>(k, i, C)];
    return make_op<T>(std::move(out), {a, b}, [k, C](Node<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.needs_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                g.data[i] += n.grad.data[i] / pb.val.data[bcast_index<T>(k, i, C)];
        }
        if (pb.needs_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
                std::size_t bi = bcast_index<T>(k, i, C);
                T bv = pb.val.data[bi];
                g.data[bi] -= n.grad.data[i] * pa.val.data[i] / (bv * bv);
            }
        }
    });
}

template <typename T>
Value<T> scale(const Value<T>& a, T c) {
    Tensor<T> out = a.val();
    for (auto& v : out.data) v *= c;
    return make_op<T>(std::move(out), {a}, [c](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (pa.needs_grad) axpy(pa.ensure_grad(), n.grad, c);
    });
}

template <typename T>
Value<T> add_const(const Value<T>& a, T c) {
    Tensor<T> out = a.val();
    for (auto& v : out.data) v += c;
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (pa.needs_grad) axpy(pa.ensure_grad(), n.grad);
    });
}

template <typename T>
Value<T> neg(const Value<T>& a) {
    return scale(a, T(-1));
}

template <typename T>
Value<T> relu(const Value<T>& a) {
    Tensor<T> out = a.val();
    for (auto& v : out.data)
        if (v < T(0)) v = T(0);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            if (pa.val.data[i] > T(0)) g.data[i] += n.grad.data[i];
    });
}

template <typename T>
Value<T> leaky_relu(const Value<T>& a, T slope) {
    Tensor<T> out = a.val();
    for (auto& v : out.data)
        if (v < T(0)) v *= slope;
    return make_op<T>(std::move(out), {a}, [slope](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            g.data[i] += n.grad.data[i] * (pa.val.data[i] > T(0) ? T(1) : slope);
    });
}

template <typename T>
Value<T> vexp(const Value<T>& a) {
    Tensor<T> out = a.val();
    for (auto& v : out.data) v = std::exp(v);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) g.data[i] += n.grad.data[i] * n.val.data[i];
    });
}

template <typename T>
Value<T> vlog(const Value<T>& a) {
    Tensor<T> out = a.val();
    for (auto& v : out.data) v = std::log(v);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) g.data[i] += n.grad.data[i] / pa.val.data[i];
    });
}

template <typename T>
Value<T> vsqrt(const Value<T>& a) {
    Tensor<T> out = a.val();
    for (auto& v : out.data) v = std::sqrt(v);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) g.data[i] += n.grad.data[i] / (T(2) * n.val.data[i]);
    });
}

template <typename T>
Value<T> sigmoid(const Value<T>& a) {
    Tensor<T> out = a.val();
    for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            T s = n.val.data[i];
            g.data[i] += n.grad.data[i] * s * (T(1) - s);
        }
    });
}

/// Clamp; gradient passes only where the input is strictly inside [lo, hi].
template <typename T>
Value<T> clampv(const Value<T>& a, T lo, T hi) {
    Tensor<T> out = a.val();
    for (auto& v : out.data) v = std::min(std::max(v, lo), hi);
    return make_op<T>(std::move(out), {a}, [lo, hi](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            T x = pa.val.data[i];
            if (x > lo && x < hi) g.data[i] += n.grad.data[i];
        }
    });
}

// ---- reductions --------------------------------------------------------

template <typename T>
Value<T> sum_all(const Value<T>& a) {
    T s{};
    for (auto v : a.val().data) s += v;
    return make_op<T>(Tensor<T>::scalar(s), {a}, [](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        T go = n.grad.data[0];
        for (auto& v : g.data) v += go;
    });
}

template <typename T>
Value<T> mean_all(const Value<T>& a) {
    return scale(sum_all(a), T(1) / static_cast<T>(a.val().numel()));
}

/// Mean along the last axis: R x C -> R x 1.
template <typename T>
Value<T> row_mean(const Value<T>& a) {
    std::size_t R = a.val().rows(), C = a.val().cols();
    Tensor<T> out({R, 1});
    for (std::size_t r = 0; r < R; ++r) {
        T s{};
        for (std::size_t c = 0; c < C; ++c) s += a.val().data[r * C + c];
        out.data[r] = s / static_cast<T>(C);
    }
    return make_op<T>(std::move(out), {a}, [R, C](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t r = 0; r < R; ++r) {
            T go = n.grad.data[r] / static_cast<T>(C);
            for (std::size_t c = 0; c < C; ++c) g.data[r * C + c] += go;
        }
    });
}

/// Column-wise max over rows: R x C -> 1 x C (point-set pooling).
template <typename T>
Value<T> col_max(const Value<T>& a) {
    std::size_t R = a.val().rows(), C = a.val().cols();
    Tensor<T> out({1, C});
    auto argmax = std::make_shared<std::vector<std::size_t>>(C);
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = 0;
        T bv = a.val().data[c];
        for (std::size_t r = 1; r < R; ++r) {
            T v = a.val().data[r * C + c];
            if (v > bv) {
                bv = v;
                best = r;
            }
        }
        out.data[c] = bv;
        (*argmax)[c] = best;
    }
    return make_op<T>(std::move(out), {a}, [C, argmax](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t c = 0; c < C; ++c) g.data[(*argmax)[c] * C + c] += n.grad.data[c];
    });
}

// ---- shape ops ---------------------------------------------------------

template <typename T>
Value<T> reshape(const Value<T>& a, std::vector<std::size_t> sh) {
    if (Tensor<T>::numel_of(sh) != a.val().numel())
        throw ShapeError("reshape: numel mismatch " + shape_str(a.val().shape) + " -> " + shape_str(sh));
    Tensor<T> out(sh, a.val().data);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (pa.needs_grad) axpy(pa.ensure_grad(), n.grad);
    });
}

template <typename T>
Value<T> transpose(const Value<T>& a) {
    std::size_t R = a.val().rows(), C = a.val().cols();
    Tensor<T> out({C, R});
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out.data[c * R + r] = a.val().data[r * C + c];
    return make_op<T>(std::move(out), {a}, [R, C](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) g.data[r * C + c] += n.grad.data[c * R + r];
    });
}

template <typename T>
Value<T> slice_rows(const Value<T>& a, std::size_t r0, std::size_t nrows) {
    std::size_t R = a.val().rows(), C = a.val().cols();
    if (r0 + nrows > R) throw ShapeError("slice_rows out of range on " + shape_str(a.val().shape));
    Tensor<T> out({nrows, C});
    std::copy(a.val().data.begin() + r0 * C, a.val().data.begin() + (r0 + nrows) * C, out.data.begin());
    return make_op<T>(std::move(out), {a}, [r0, nrows, C](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t i = 0; i < nrows * C; ++i) g.data[r0 * C + i] += n.grad.data[i];
    });
}

template <typename T>
Value<T> slice_cols(const Value<T>& a, std::size_t c0, std::size_t ncols) {
    std::size_t R = a.val().rows(), C = a.val().cols();
    if (c0 + ncols > C) throw ShapeError("slice_cols out of range on " + shape_str(a.val().shape));
    Tensor<T> out({R, ncols});
    for (std::size_t r = 0; r < R; ++r)
        std::copy(a.val().data.begin() + r * C + c0, a.val().data.begin() + r * C + c0 + ncols,
                  out.data.begin() + r * ncols);
    return make_op<T>(std::move(out), {a}, [c0, ncols, R, C](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < ncols; ++c) g.data[r * C + c0 + c] += n.grad.data[r * ncols + c];
    });
}

template <typename T>
Value<T> concat_rows(const std::vector<Value<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty list");
    std::size_t C = parts[0].val().cols(), R = 0;
    for (auto& p : parts) {
        if (p.val().cols() != C)
            throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].val().shape) + " vs " +
                             shape_str(p.val().shape));
        R += p.val().rows();
    }
    Tensor<T> out({R, C});
    std::size_t off = 0;
    std::vector<std::size_t> offsets;
    for (auto& p : parts) {
        offsets.push_back(off);
        std::copy(p.val().data.begin(), p.val().data.end(), out.data.begin() + off);
        off += p.val().numel();
    }
    return make_op<T>(std::move(out), parts, [offsets](Node<T>& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            auto& p = *n.parents[i];
            if (!p.needs_grad) continue;
            auto& g = p.ensure_grad();
            for (std::size_t j = 0; j < g.data.size(); ++j) g.data[j] += n.grad.data[offsets[i] + j];
        }
    });
}

template <typename T>
Value<T> concat_cols(const std::vector<Value<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty list");
    std::size_t R = parts[0].val().rows(), C = 0;
    for (auto& p : parts) {
        if (p.val().rows() != R)
            throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].val().shape) + " vs " +
                             shape_str(p.val().shape));
        C += p.val().cols();
    }
    Tensor<T> out({R, C});
    std::size_t coff = 0;
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> widths;
    for (auto& p : parts) {
        offsets.push_back(coff);
        widths.push_back(p.val().cols());
        for (std::size_t r = 0; r < R; ++r)
            std::copy(p.val().data.begin() + r * p.val().cols(), p.val().data.begin() + (r + 1) * p.val().cols(),
                      out.data.begin() + r * C + coff);
        coff += p.val().cols();
    }
    return make_op<T>(std::move(out), parts, [offsets, widths, R, C](Node<T>& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            auto& p = *n.parents[i];
            if (!p.needs_grad) continue;
            auto& g = p.ensure_grad();
            std::size_t w = widths[i];
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < w; ++c) g.data[r * w + c] += n.grad.data[r * C + offsets[i] + c];
        }
    });
}

// ---- matmul ------------------------------------------------------------

template <typename T>
Value<T> matmul(const Value<T>& a, const Value<T>& b) {
    std::size_t m = a.val().rows(), k = a.val().cols();
    std::size_t k2 = b.val().rows(), n = b.val().cols();
    if (k != k2)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.val().shape) + " x " +
                         shape_str(b.val().shape));
    Tensor<T> out({m, n});
    kernels::gemm(a.val().data.data(), b.val().data.data(), out.data.data(), m, k, n);
    return make_op<T>(std::move(out), {a, b}, [m, k, n](Node<T>& n_) {
        auto& pa = *n_.parents[0];
        auto& pb = *n_.parents[1];
        if (pa.needs_grad) {
            auto& g = pa.ensure_grad();
            kernels::gemm_bt(n_.grad.data.data(), pb.val.data.data(), g.data.data(), m, n, k, true);
        }
        if (pb.needs_grad) {
            auto& g = pb.ensure_grad();
            kernels::gemm_at(pa.val.data.data(), n_.grad.data.data(), g.data.data(), k, m, n, true);
        }
    });
}

// ---- softmax -----------------------------------------------------------

/// Row-wise softmax with the usual max-shift; rejects non-finite input.
template <typename T>
Value<T> softmax_rows(const Value<T>& a) {
    std::size_t R = a.val().rows(), C = a.val().cols();
    Tensor<T> out({R, C});
    for (std::size_t r = 0; r < R; ++r) {
        const T* x = a.val().data.data() + r * C;
        T* y = out.data.data() + r * C;
        T mx = x[0];
        for (std::size_t c = 0; c < C; ++c) {
            if (!std::isfinite(static_cast<double>(x[c]))) throw std::invalid_argument("softmax: non-finite input");
            mx = std::max(mx, x[c]);
        }
        T sum{};
        for (std::size_t c = 0; c < C; ++c) {
            y[c] = std::exp(x[c] - mx);
            sum += y[c];
        }
        for (std::size_t c = 0; c < C; ++c) y[c] /= sum;
    }
    return make_op<T>(std::move(out), {a}, [R, C](Node<T>& n) {
        auto& pa = *n.parents[0];
        if (!pa.needs_grad) return;
        auto& g = pa.ensure_grad();
        for (std::size_t r = 0; r < R; ++r) {
            const T* p = n.val.data.data() + r * C;
            const T* go = n.grad.data.data() + r * C;
            T dot{};
            for (std::size_t c = 0; c < C; ++c) dot += p[c] * go[c];
            for (std::size_t c = 0; c < C; ++c) g.data[r * C + c] += p[c] * (go[c] - dot);
        }
    });
}

// ---- layer norm --------------------------------------------------------

/// Row-wise layer normalization with affine output: per row, subtract the
/// mean, divide by sqrt(var + eps), then scale by gain and shift by bias.
template <typename T>
Value<T> layer_norm(const Value<T>& x, const Value<T>& gain, const Value<T>& bias, T eps) {
    std::size_t R = x.val().rows(), C = x.val().cols();
    if (gain.val().numel() != C || bias.val().numel() != C)
        throw ShapeError("layer_norm: gain/bias must match last axis " + shape_str(x.val().shape));
    Tensor<T> out({R, C});
    auto stats = std::make_shared<std::vector<T>>(2 * R);  // mean, rstd per row
    for (std::size_t r = 0; r < R; ++r) {
        const T* xr = x.val().data.data() + r * C;
        T mean{};
        for (std::size_t c = 0; c < C; ++c) mean += xr[c];
        mean /= static_cast<T>(C);
        T var{};
        for (std::size_t c = 0; c < C; ++c) {
            T d = xr[c] - mean;
            var += d * d;
        }
        var /= static_cast<T>(C);
        T rstd = T(1) / std::sqrt(var + eps);
        (*stats)[2 * r] = mean;
        (*stats)[2 * r + 1] = rstd;
        for (std::size_t c = 0; c < C; ++c)
            out.data[r * C + c] = (xr[c] - mean) * rstd * gain.val().data[c] + bias.val().data[c];
    }
    return make_op<T>(std::move(out), {x, gain, bias}, [R, C, stats](Node<T>& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        auto& pb = *n.parents[2];
        for (std::size_t r = 0; r < R; ++r) {
            const T mean = (*stats)[2 * r];
            const T rstd = (*stats)[2 * r + 1];
            const T* xr = px.val.data.data() + r * C;
            const T* go = n.grad.data.data() + r * C;
            if (pg.needs_grad || pb.needs_grad) {
                auto& gg = pg.ensure_grad();
                auto& gb = pb.ensure_grad();
                for (std::size_t c = 0; c < C; ++c) {
                    T xhat = (xr[c] - mean) * rstd;
                    if (pg.needs_grad) gg.data[c] += go[c] * xhat;
                    if (pb.needs_grad) gb.data[c] += go[c];
                }
            }
            if (px.needs_grad) {
                auto& gx = px.ensure_grad();
                T sum_gy{}, sum_gy_xhat{};
                for (std::size_t c = 0; c < C; ++c) {
                    T gy = go[c] * pg.val.data[c];
                    T xhat = (xr[c] - mean) * rstd;
                    sum_gy += gy;
                    sum_gy_xhat += gy * xhat;
                }
                sum_gy /= static_cast<T>(C);
                sum_gy_xhat /= static_cast<T>(C);
                for (std::size_t c = 0; c < C; ++c) {
                    T gy = go[c] * pg.val.data[c];
                    T xhat = (xr[c] - mean) * rstd;
                    gx.data[r * C + c] += rstd * (gy - sum_gy - xhat * sum_gy_xhat);
                }
            }
        }
    });
}

// ---- fused multi-head attention ----------------------------------------

/// Scaled dot-product attention over `batch` independent frames packed along
/// the row axis. q: (batch*fq) x d, k/v: (batch*fkv) x d, d split across
/// `heads`. The attention weights are kept for backward.
template <typename T>
Value<T> mha_attention(const Value<T>& q, const Value<T>& k, const Value<T>& v, std::size_t heads, std::size_t batch,
                       std::size_t fq, std::size_t fkv) {
    std::size_t D = q.val().cols();
    if (D % heads != 0) throw ShapeError("attention: heads must divide model width");
    if (k.val().cols() != D || v.val().cols() != D)
        throw ShapeError("attention: q/k/v width mismatch " + shape_str(q.val().shape) + " vs " +
                         shape_str(k.val().shape) + " vs " + shape_str(v.val().shape));
    if (q.val().rows() != batch * fq || k.val().rows() != batch * fkv || v.val().rows() != batch * fkv)
        throw ShapeError("attention: sequence length mismatch between k " + shape_str(k.val().shape) + " and v " +
                         shape_str(v.val().shape));
    std::size_t dh = D / heads;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    Tensor<T> out({batch * fq, D});
    auto probs = std::make_shared<Tensor<T>>(std::vector<std::size_t>{batch * heads * fq, fkv});

    const T* Q = q.val().data.data();
    const T* K = k.val().data.data();
    const T* V = v.val().data.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            T* P = probs->data.data() + (b * heads + h) * fq * fkv;
            for (std::size_t i = 0; i < fq; ++i) {
                const T* qr = Q + (b * fq + i) * D + h * dh;
                T* pr = P + i * fkv;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < fkv; ++j) {
                    const T* kr = K + (b * fkv + j) * D + h * dh;
                    T s{};
                    for (std::size_t c = 0; c < dh; ++c) s += qr[c] * kr[c];
                    pr[j] = s * inv_sqrt;
                    mx = std::max(mx, pr[j]);
                }
                T sum{};
                for (std::size_t j = 0; j < fkv; ++j) {
                    pr[j] = std::exp(pr[j] - mx);
                    sum += pr[j];
                }
                T* orow = out.data.data() + (b * fq + i) * D + h * dh;
                for (std::size_t c = 0; c < dh; ++c) orow[c] = T{};
                for (std::size_t j = 0; j < fkv; ++j) {
                    pr[j] /= sum;
                    const T* vr = V + (b * fkv + j) * D + h * dh;
                    for (std::size_t c = 0; c < dh; ++c) orow[c] += pr[j] * vr[c];
                }
            }
        }
    }
    return make_op<T>(std::move(out), {q, k, v}, [heads, batch, fq, fkv, D, dh, inv_sqrt, probs](Node<T>& n) {
        auto& pq = *n.parents[0];
        auto& pk = *n.parents[1];
        auto& pv = *n.parents[2];
        Tensor<T>* gq = pq.needs_grad ? &pq.ensure_grad() : nullptr;
        Tensor<T>* gk = pk.needs_grad ? &pk.ensure_grad() : nullptr;
        Tensor<T>* gv = pv.needs_grad ? &pv.ensure_grad() : nullptr;
        std::vector<T> dp(fkv);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                const T* P = probs->data.data() + (b * heads + h) * fq * fkv;
                for (std::size_t i = 0; i < fq; ++i) {
                    const T* pr = P + i * fkv;
                    const T* gor = n.grad.data.data() + (b * fq + i) * D + h * dh;
                    // dV and dP
                    T dot{};
                    for (std::size_t j = 0; j < fkv; ++j) {
                        const T* vr = pv.val.data.data() + (b * fkv + j) * D + h * dh;
                        T d{};
                        for (std::size_t c = 0; c < dh; ++c) d += gor[c] * vr[c];
                        dp[j] = d;
                        dot += d * pr[j];
                        if (gv) {
                            T* gvr = gv->data.data() + (b * fkv + j) * D + h * dh;
                            for (std::size_t c = 0; c < dh; ++c) gvr[c] += pr[j] * gor[c];
                        }
                    }
                    if (!gq && !gk) continue;
                    const T* qr = pq.val.data.data() + (b * fq + i) * D + h * dh;
                    for (std::size_t j = 0; j < fkv; ++j) {
                        T ds = pr[j] * (dp[j] - dot) * inv_sqrt;
                        const T* kr = pk.val.data.data() + (b * fkv + j) * D + h * dh;
                        if (gq) {
                            T* gqr = gq->data.data() + (b * fq + i) * D + h * dh;
                            for (std::size_t c = 0; c < dh; ++c) gqr[c] += ds * kr[c];
                        }
                        if (gk) {
                            T* gkr = gk->data.data() + (b * fkv + j) * D + h * dh;
                            for (std::size_t c = 0; c < dh; ++c) gkr[c] += ds * qr[c];
                        }
                    }
                }
            }
        }
    });
}

// ---- embedding ---------------------------------------------------------

template <typename T>
Value<T> embedding(const Value<T>& table, const Tensor<std::int32_t>& idx) {
    std::size_t V = table.val().rows(), D = table.val().cols(), N = idx.numel();
    Tensor<T> out({N, D});
    auto indices = std::make_shared<std::vector<std::int32_t>>(idx.data);
    for (std::size_t i = 0; i < N; ++i) {
        std::int32_t id = idx.data[i];
        if (id < 0 || static_cast<std::size_t>(id) >= V)
            throw std::out_of_range("embedding: label " + std::to_string(id) + " outside vocabulary of " +
                                    std::to_string(V));
        std::copy(table.val().data.begin() + id * D, table.val().data.begin() + (id + 1) * D, out.data.begin() + i * D);
    }
    return make_op<T>(std::move(out), {table}, [D, indices](Node<T>& n) {
        auto& pt = *n.parents[0];
        if (!pt.needs_grad) return;
        auto& g = pt.ensure_grad();
        for (std::size_t i = 0; i < indices->size(); ++i) {
            std::size_t id = static_cast<std::size_t>((*indices)[i]);
            for (std::size_t c = 0; c < D; ++c) g.data[id * D + c] += n.grad.data[i * D + c];
        }
    });
}

// ---- conv1d ------------------------------------------------------------

/// Valid (unpadded) 1-D convolution along the time axis.
/// x: cin x t, w: cout x cin x ksize, b: cout. Output: cout x tout.
template <typename T>
Value<T> conv1d(const Value<T>& x, const Value<T>& w, const Value<T>& b, std::size_t stride) {
    if (w.val().rank() != 3) throw ShapeError("conv1d: weight must be rank 3, got " + shape_str(w.val().shape));
    std::size_t cin = x.val().rows(), tin = x.val().cols();
    std::size_t cout = w.val().shape[0], wcin = w.val().shape[1], ksize = w.val().shape[2];
    if (wcin != cin)
        throw ShapeError("conv1d: channel mismatch, input " + shape_str(x.val().shape) + " vs weight " +
                         shape_str(w.val().shape));
    if (tin < ksize)
        throw ShapeError("conv1d: input length " + std::to_string(tin) + " shorter than kernel " +
                         std::to_string(ksize));
    std::size_t tout = (tin - ksize) / stride + 1;
    Tensor<T> out({cout, tout});
    kernels::conv1d(x.val().data.data(), w.val().data.data(), b.val().data.data(), out.data.data(), cin, tin, cout,
                    ksize, stride, tout);
    return make_op<T>(std::move(out), {x, w, b}, [cin, tin, cout, ksize, stride, tout](Node<T>& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        auto& pb = *n.parents[2];
        for (std::size_t oc = 0; oc < cout; ++oc) {
            for (std::size_t t = 0; t < tout; ++t) {
                T go = n.grad.data[oc * tout + t];
                if (pb.needs_grad) pb.ensure_grad().data[oc] += go;
                for (std::size_t ic = 0; ic < cin; ++ic) {
                    for (std::size_t j = 0; j < ksize; ++j) {
                        std::size_t xi = ic * tin + t * stride + j;
                        std::size_t wi = (oc * cin + ic) * ksize + j;
                        if (px.needs_grad) px.ensure_grad().data[xi] += pw.val.data[wi] * go;
                        if (pw.needs_grad) pw.ensure_grad().data[wi] += px.val.data[xi] * go;
                    }
                }
            }
        }
    });
}

}  // namespace sm
