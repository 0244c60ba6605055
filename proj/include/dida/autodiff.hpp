#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_set>
#include <utility>

#include "dida/tensor.hpp"

namespace dida {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatRM>;
using ConstMatMap = Eigen::Map<const MatRM>;

inline MatMap as_matrix(Tensor& t, int rows, int cols) {
    return MatMap(t.data(), rows, cols);
}
inline ConstMatMap as_matrix(const Tensor& t, int rows, int cols) {
    return ConstMatMap(t.data(), rows, cols);
}

/// Node of the dynamically built computation graph. Leaves hold parameters or
/// inputs; interior nodes capture their backward rule as a closure.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand, same shape as value
    // Full-precision payload for scalar nodes whose forward accumulates in
    // float64 (reductions, fused losses). Keeps finite-difference checks and
    // metrics out of float32 quantization noise.
    std::optional<double> value64;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // accumulates this->grad into parents

    void ensure_grad() {
        if (grad.empty() && value.size() > 0) grad = Tensor(value.shape());
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.values().begin(), grad.values().end(), 0.0f);
    }
};

using NodePtr = std::shared_ptr<Node>;

/// Value-semantic handle on a graph node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : n_(std::move(n)) {}

    static Var leaf(Tensor value, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }
    static Var constant(Tensor value) { return leaf(std::move(value), false); }

    bool valid() const { return n_ != nullptr; }
    const Tensor& value() const { return n_->value; }
    Tensor& mutable_value() { return n_->value; }
    const Tensor& grad() const { return n_->grad; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    const NodePtr& node() const { return n_; }

    /// Scalar payload of a shape-{1} tensor.
    float scalar() const {
        if (n_->value.size() != 1)
            throw std::logic_error("var: scalar() on tensor " + n_->value.shape_str());
        return n_->value[0];
    }

    /// Scalar payload at full precision where the op recorded one.
    double scalar64() const {
        if (n_->value.size() != 1)
            throw std::logic_error("var: scalar64() on tensor " + n_->value.shape_str());
        return n_->value64 ? *n_->value64 : static_cast<double>(n_->value[0]);
    }

private:
    NodePtr n_;
};

namespace detail {

inline Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const Var& p : parents) {
        n->parents.push_back(p.node());
        n->requires_grad = n->requires_grad || p.requires_grad();
    }
    if (n->requires_grad) n->backprop = std::move(backprop);
    return Var(std::move(n));
}

inline void accumulate(Node& parent, const Tensor& delta) {
    parent.ensure_grad();
    float* g = parent.grad.data();
    const float* d = delta.data();
    for (int64_t i = 0, n = delta.size(); i < n; ++i) g[i] += d[i];
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace detail

/// Reverse-mode sweep from a scalar root. Seeds d(root)/d(root) = 1 and walks
/// the graph in reverse topological order.
inline void backward(const Var& root) {
    if (!root.valid()) throw std::logic_error("backward: empty var");
    Node* r = root.node().get();
    if (r->value.size() != 1)
        throw std::logic_error("backward: root must be scalar, got " + r->value.shape_str());
    if (!r->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{r, 0}};
    seen.insert(r);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    r->ensure_grad();
    r->grad[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    detail::check_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const float* bd = b.value().data();
    for (int64_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    Var r = detail::make_op(std::move(out), {a, b}, [](Node& n) {
        for (auto& p : n.parents)
            if (p->requires_grad) detail::accumulate(*p, n.grad);
    });
    if (r.value().size() == 1)
        r.node()->value64 = a.scalar64() + b.scalar64();
    return r;
}

inline Var sub(const Var& a, const Var& b) {
    detail::check_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const float* bd = b.value().data();
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    Var r = detail::make_op(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) detail::accumulate(*n.parents[0], n.grad);
        Node& pb = *n.parents[1];
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
        }
    });
    if (r.value().size() == 1)
        r.node()->value64 = a.scalar64() - b.scalar64();
    return r;
}

inline Var mul(const Var& a, const Var& b) {
    detail::check_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const float* bd = b.value().data();
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    return detail::make_op(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int64_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
        }
    });
}

inline Var scale(const Var& a, float c) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= c;
    Var r = detail::make_op(std::move(out), {a}, [c](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) p.grad[i] += c * n.grad[i];
    });
    if (r.value().size() == 1)
        r.node()->value64 = static_cast<double>(c) * a.scalar64();
    return r;
}

inline Var add_scalar(const Var& a, float c) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] += c;
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        if (n.parents[0]->requires_grad) detail::accumulate(*n.parents[0], n.grad);
    });
}

inline Var relu(const Var& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0f ? out[i] : 0.0f;
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i)
            if (p.value[i] > 0.0f) p.grad[i] += n.grad[i];
    });
}

inline Var sigmoid(const Var& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0f / (1.0f + std::exp(-out[i]));
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) {
            float y = n.value[i];
            p.grad[i] += n.grad[i] * y * (1.0f - y);
        }
    });
}

inline Var exp_elem(const Var& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * n.value[i];
    });
}

/// max(a, m) elementwise; gradient passes where the input was not clamped.
inline Var clamp_min(const Var& a, float m) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > m ? out[i] : m;
    return detail::make_op(std::move(out), {a}, [m](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i)
            if (p.value[i] >= m) p.grad[i] += n.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Var reshape(const Var& a, std::vector<int> new_shape) {
    if (element_count(new_shape) != a.value().size())
        throw std::invalid_argument("reshape: cannot view " + a.value().shape_str() + " as " +
                                    Tensor::shape_str(new_shape));
    Tensor out(std::move(new_shape), std::vector<float>(a.value().values().begin(),
                                                        a.value().values().end()));
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

/// [B,C,H,W] -> [B, C*H*W]
inline Var flatten(const Var& a) {
    const auto& s = a.value().shape();
    if (s.size() < 2) throw std::invalid_argument("flatten: rank must be >= 2, got " + a.value().shape_str());
    int64_t rest = 1;
    for (size_t i = 1; i < s.size(); ++i) rest *= s[i];
    return reshape(a, {s[0], static_cast<int>(rest)});
}

inline Var transpose(const Var& a) {
    int r = a.value().rows(), c = a.value().cols();
    Tensor out({c, r});
    as_matrix(out, c, r) = as_matrix(a.value(), r, c).transpose();
    return detail::make_op(std::move(out), {a}, [r, c](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        as_matrix(p.grad, r, c) += as_matrix(n.grad, c, r).transpose();
    });
}

/// Rows [r0, r0+count) of a rank-2 tensor.
inline Var slice_rows(const Var& a, int r0, int count) {
    int r = a.value().rows(), c = a.value().cols();
    if (r0 < 0 || count < 0 || r0 + count > r)
        throw std::invalid_argument("slice_rows: range [" + std::to_string(r0) + "," +
                                    std::to_string(r0 + count) + ") out of " + std::to_string(r) + " rows");
    Tensor out({count, c});
    std::copy_n(a.value().data() + static_cast<int64_t>(r0) * c, static_cast<int64_t>(count) * c, out.data());
    return detail::make_op(std::move(out), {a}, [r0, c](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        float* dst = p.grad.data() + static_cast<int64_t>(r0) * c;
        const float* src = n.grad.data();
        for (int64_t i = 0, m = n.grad.size(); i < m; ++i) dst[i] += src[i];
    });
}

inline Var concat_cols(const Var& a, const Var& b) {
    int r = a.value().rows();
    if (b.value().rows() != r)
        throw std::invalid_argument("concat_cols: row mismatch " + a.value().shape_str() + " vs " +
                                    b.value().shape_str());
    int ca = a.value().cols(), cb = b.value().cols();
    Tensor out({r, ca + cb});
    for (int i = 0; i < r; ++i) {
        std::copy_n(a.value().data() + static_cast<int64_t>(i) * ca, ca,
                    out.data() + static_cast<int64_t>(i) * (ca + cb));
        std::copy_n(b.value().data() + static_cast<int64_t>(i) * cb, cb,
                    out.data() + static_cast<int64_t>(i) * (ca + cb) + ca);
    }
    return detail::make_op(std::move(out), {a, b}, [r, ca, cb](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int i = 0; i < r; ++i) {
            const float* g = n.grad.data() + static_cast<int64_t>(i) * (ca + cb);
            if (pa.requires_grad)
                for (int j = 0; j < ca; ++j) pa.grad[static_cast<int64_t>(i) * ca + j] += g[j];
            if (pb.requires_grad)
                for (int j = 0; j < cb; ++j) pb.grad[static_cast<int64_t>(i) * cb + j] += g[ca + j];
        }
    });
}

/// Stacks two batches along the leading dimension. Trailing dims must match.
inline Var concat_rows(const Var& a, const Var& b) {
    const auto& sa = a.value().shape();
    const auto& sb = b.value().shape();
    if (sa.size() != sb.size() || sa.empty() ||
        !std::equal(sa.begin() + 1, sa.end(), sb.begin() + 1))
        throw std::invalid_argument("concat_rows: shape mismatch " + a.value().shape_str() +
                                    " vs " + b.value().shape_str());
    std::vector<int> shape = sa;
    shape[0] = sa[0] + sb[0];
    Tensor out(std::move(shape));
    const int64_t na = a.value().size(), nb = b.value().size();
    std::copy_n(a.value().data(), na, out.data());
    std::copy_n(b.value().data(), nb, out.data() + na);
    return detail::make_op(std::move(out), {a, b}, [na, nb](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int64_t i = 0; i < na; ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t i = 0; i < nb; ++i) pb.grad[i] += n.grad[na + i];
        }
    });
}

/// Stop-gradient: copies the value into a fresh constant leaf.
inline Var detach(const Var& a) { return Var::leaf(a.value(), false); }

// ---------------------------------------------------------------------------
// Reductions and broadcasts
// ---------------------------------------------------------------------------

/// Sum of all elements (float64 accumulation), shape {1}.
inline Var sum_all(const Var& a) {
    double acc = 0.0;
    for (float v : a.value().values()) acc += v;
    Var r = detail::make_op(Tensor::scalar(static_cast<float>(acc)), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        float g = n.grad[0];
        for (int64_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
    });
    r.node()->value64 = acc;
    return r;
}

inline Var mean_all(const Var& a) {
    if (a.value().size() == 0) throw std::invalid_argument("mean_all: empty tensor");
    double acc = 0.0;
    for (float v : a.value().values()) acc += v;
    int64_t count = a.value().size();
    acc /= static_cast<double>(count);
    Var r = detail::make_op(Tensor::scalar(static_cast<float>(acc)), {a}, [count](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        float g = n.grad[0] / static_cast<float>(count);
        for (int64_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
    });
    r.node()->value64 = acc;
    return r;
}

/// Column means of [B,N] -> [N] (float64 accumulation).
inline Var mean_rows(const Var& a) {
    int r = a.value().rows(), c = a.value().cols();
    if (r == 0) throw std::invalid_argument("mean_rows: zero rows");
    std::vector<double> acc(static_cast<size_t>(c), 0.0);
    const float* d = a.value().data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) acc[static_cast<size_t>(j)] += d[static_cast<int64_t>(i) * c + j];
    Tensor out({c});
    for (int j = 0; j < c; ++j) out[j] = static_cast<float>(acc[static_cast<size_t>(j)] / r);
    return detail::make_op(std::move(out), {a}, [r, c](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                p.grad[static_cast<int64_t>(i) * c + j] += n.grad[j] / static_cast<float>(r);
    });
}

/// a[i,:] - v for [B,N] and [N].
inline Var sub_rowvec(const Var& a, const Var& v) {
    int r = a.value().rows(), c = a.value().cols();
    if (v.value().size() != c)
        throw std::invalid_argument("sub_rowvec: vector " + v.value().shape_str() + " vs cols " +
                                    std::to_string(c));
    Tensor out = a.value();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[static_cast<int64_t>(i) * c + j] -= v.value()[j];
    return detail::make_op(std::move(out), {a, v}, [r, c](Node& n) {
        Node& pa = *n.parents[0];
        Node& pv = *n.parents[1];
        if (pa.requires_grad) detail::accumulate(pa, n.grad);
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) pv.grad[j] -= n.grad[static_cast<int64_t>(i) * c + j];
        }
    });
}

/// a[i,:] + v for [B,N] and [N] (bias add).
inline Var add_rowvec(const Var& a, const Var& v) {
    int r = a.value().rows(), c = a.value().cols();
    if (v.value().size() != c)
        throw std::invalid_argument("add_rowvec: vector " + v.value().shape_str() + " vs cols " +
                                    std::to_string(c));
    Tensor out = a.value();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[static_cast<int64_t>(i) * c + j] += v.value()[j];
    return detail::make_op(std::move(out), {a, v}, [r, c](Node& n) {
        Node& pa = *n.parents[0];
        Node& pv = *n.parents[1];
        if (pa.requires_grad) detail::accumulate(pa, n.grad);
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) pv.grad[j] += n.grad[static_cast<int64_t>(i) * c + j];
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
    int m = a.value().rows(), k = a.value().cols();
    int k2 = b.value().rows(), n = b.value().cols();
    if (k != k2)
        throw std::invalid_argument("matmul: inner dims " + a.value().shape_str() + " x " +
                                    b.value().shape_str());
    Tensor out({m, n});
    as_matrix(out, m, n).noalias() = as_matrix(a.value(), m, k) * as_matrix(b.value(), k, n);
    return detail::make_op(std::move(out), {a, b}, [m, k, n](Node& nd) {
        Node& pa = *nd.parents[0];
        Node& pb = *nd.parents[1];
        auto g = as_matrix(nd.grad, m, n);
        if (pa.requires_grad) {
            pa.ensure_grad();
            as_matrix(pa.grad, m, k).noalias() += g * as_matrix(pb.value, k, n).transpose();
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            as_matrix(pb.grad, k, n).noalias() += as_matrix(pa.value, m, k).transpose() * g;
        }
    });
}

/// Row-wise softmax of [B,K]; max-subtracted for stability.
inline Var softmax_rows(const Var& a) {
    int r = a.value().rows(), c = a.value().cols();
    Tensor out = a.value();
    for (int i = 0; i < r; ++i) {
        float* row = out.data() + static_cast<int64_t>(i) * c;
        float mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            denom += row[j];
        }
        for (int j = 0; j < c; ++j) row[j] = static_cast<float>(row[j] / denom);
    }
    return detail::make_op(std::move(out), {a}, [r, c](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < r; ++i) {
            const float* y = n.value.data() + static_cast<int64_t>(i) * c;
            const float* g = n.grad.data() + static_cast<int64_t>(i) * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += static_cast<double>(g[j]) * y[j];
            float* out_g = p.grad.data() + static_cast<int64_t>(i) * c;
            for (int j = 0; j < c; ++j) out_g[j] += y[j] * (g[j] - static_cast<float>(dot));
        }
    });
}

/// D[i,j] = ||x_i - y_j||^2 for X [n,d], Y [m,d]; clamped at 0 against rounding.
inline Var pairwise_sqdist(const Var& x, const Var& y) {
    int n = x.value().rows(), d = x.value().cols();
    int m = y.value().rows();
    if (y.value().cols() != d)
        throw std::invalid_argument("pairwise_sqdist: feature dims " + x.value().shape_str() + " vs " +
                                    y.value().shape_str());
    auto X = as_matrix(x.value(), n, d);
    auto Y = as_matrix(y.value(), m, d);
    Tensor out({n, m});
    auto D = as_matrix(out, n, m);
    D.noalias() = -2.0f * (X * Y.transpose());
    Eigen::VectorXf xn = X.rowwise().squaredNorm();
    Eigen::VectorXf yn = Y.rowwise().squaredNorm();
    D.colwise() += xn;
    D.rowwise() += yn.transpose();
    D = D.cwiseMax(0.0f);
    return detail::make_op(std::move(out), {x, y}, [n, d, m](Node& nd) {
        Node& px = *nd.parents[0];
        Node& py = *nd.parents[1];
        auto G = as_matrix(nd.grad, n, m);
        auto X = as_matrix(px.value, n, d);
        auto Y = as_matrix(py.value, m, d);
        if (px.requires_grad) {
            px.ensure_grad();
            Eigen::VectorXf rs = G.rowwise().sum();
            as_matrix(px.grad, n, d).noalias() += 2.0f * (rs.asDiagonal() * X - G * Y);
        }
        if (py.requires_grad) {
            py.ensure_grad();
            Eigen::VectorXf cs = G.colwise().sum();
            as_matrix(py.grad, m, d).noalias() += 2.0f * (cs.asDiagonal() * Y - G.transpose() * X);
        }
    });
}

// ---------------------------------------------------------------------------
// Gradient reversal
// ---------------------------------------------------------------------------

/// Identity forward; backward multiplies the upstream gradient by -lambda.
inline Var gradient_reversal(const Var& a, float lambda) {
    if (lambda < 0.0f)
        throw std::invalid_argument("gradient_reversal: lambda must be >= 0, got " + std::to_string(lambda));
    Tensor out = a.value();
    return detail::make_op(std::move(out), {a}, [lambda](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) p.grad[i] += -lambda * n.grad[i];
    });
}

}  // namespace dida
