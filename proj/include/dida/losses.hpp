#pragma once

#include <array>
#include <map>
#include <span>

#include "dida/autodiff.hpp"

namespace dida {

// clamp before any log; both value and gradient paths divide in float64 so
// the floor stays meaningful (1 - 1e-12 is not float32-representable)
constexpr double kProbFloor = 1e-12;

/// Scalar objective with its named term breakdown (terms recombine to value).
struct LossValue {
    double value = 0.0;
    std::map<std::string, double> terms;
};

namespace detail {

inline void check_labels(int64_t batch, int classes, std::span<const int> labels, const char* op) {
    if (static_cast<int64_t>(labels.size()) != batch)
        throw std::invalid_argument(std::string(op) + ": " + std::to_string(labels.size()) +
                                    " labels for batch " + std::to_string(batch));
    for (int y : labels)
        if (y < 0 || y >= classes)
            throw std::invalid_argument(std::string(op) + ": label " + std::to_string(y) +
                                        " outside [0," + std::to_string(classes) + ")");
}

using MatXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline MatXd to_double(const Tensor& t, int rows, int cols) {
    return ConstMatMap(t.data(), rows, cols).cast<double>();
}

/// Adds a double matrix into a node's float32 gradient, scaled by the
/// upstream scalar gradient.
inline void add_scaled(Node& p, const MatXd& g, float upstream) {
    p.ensure_grad();
    float* dst = p.grad.data();
    const double u = upstream;
    for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j)
            dst[static_cast<int64_t>(i) * g.cols() + j] += static_cast<float>(u * g(i, j));
}

}  // namespace detail

/// Mean negative log-likelihood of simplex predictions [B,K] at integer labels.
/// Forward runs in float64; the full-precision value rides on the node.
inline Var class_nll(const Var& probs, std::span<const int> labels) {
    const int b = probs.value().rows(), k = probs.value().cols();
    detail::check_labels(b, k, labels, "class_nll");
    std::vector<int> ys(labels.begin(), labels.end());
    double acc = 0.0;
    for (int i = 0; i < b; ++i) {
        const double p = std::max(
            static_cast<double>(probs.value()[static_cast<int64_t>(i) * k + ys[static_cast<size_t>(i)]]),
            kProbFloor);
        acc -= std::log(p);
    }
    acc /= b;
    Var r = detail::make_op(Tensor::scalar(static_cast<float>(acc)), {probs},
                            [b, k, ys = std::move(ys)](Node& n) {
                                Node& p = *n.parents[0];
                                if (!p.requires_grad) return;
                                p.ensure_grad();
                                const double g =
                                    static_cast<double>(n.grad[0]) / static_cast<double>(b);
                                for (int i = 0; i < b; ++i) {
                                    const int64_t idx =
                                        static_cast<int64_t>(i) * k + ys[static_cast<size_t>(i)];
                                    // double division with the value-path floor keeps the
                                    // softmax cancellation exact through deep saturation
                                    const double pd = std::max(
                                        static_cast<double>(p.value[idx]), kProbFloor);
                                    p.grad[idx] -= static_cast<float>(g / pd);
                                }
                            });
    r.node()->value64 = acc;
    return r;
}

/// Mean binary cross-entropy of probabilities (any shape, elementwise) against
/// 0/1 domain labels. Sits downstream of gradient_reversal in the DANN path.
inline Var dann_domain_loss(const Var& probs, std::span<const int> domain_labels) {
    const int64_t n = probs.value().size();
    if (static_cast<int64_t>(domain_labels.size()) != n)
        throw std::invalid_argument("dann_domain_loss: " + std::to_string(domain_labels.size()) +
                                    " labels for " + std::to_string(n) + " probabilities");
    std::vector<int> ys(domain_labels.begin(), domain_labels.end());
    for (int y : ys)
        if (y != 0 && y != 1)
            throw std::invalid_argument("dann_domain_loss: domain label must be 0 or 1");
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double p = std::clamp(static_cast<double>(probs.value()[i]), kProbFloor,
                                    1.0 - kProbFloor);
        acc -= ys[static_cast<size_t>(i)] ? std::log(p) : std::log(1.0 - p);
    }
    acc /= static_cast<double>(n);
    Var r = detail::make_op(Tensor::scalar(static_cast<float>(acc)), {probs},
                            [n, ys = std::move(ys)](Node& nd) {
                                Node& p = *nd.parents[0];
                                if (!p.requires_grad) return;
                                p.ensure_grad();
                                const double g =
                                    static_cast<double>(nd.grad[0]) / static_cast<double>(n);
                                for (int64_t i = 0; i < n; ++i) {
                                    // double division with the value-path floor keeps the
                                    // sigmoid cancellation exact through deep saturation
                                    const double pv = std::clamp(static_cast<double>(p.value[i]),
                                                                 kProbFloor, 1.0 - kProbFloor);
                                    if (ys[static_cast<size_t>(i)])
                                        p.grad[i] -= static_cast<float>(g / pv);
                                    else
                                        p.grad[i] += static_cast<float>(g / (1.0 - pv));
                                }
                            });
    r.node()->value64 = acc;
    return r;
}

/// ||Cov(F_s) - Cov(F_t)||_F^2 / (4 d^2), covariances 1/(n-1) on centered rows.
/// Fused: float64 forward, analytic backward dL/dX = +-Xc (Cs-Ct) / ((n-1) d^2).
inline Var coral_loss(const Var& fs, const Var& ft) {
    const int ns = fs.value().rows(), nt = ft.value().rows();
    const int d = fs.value().cols();
    if (ft.value().cols() != d)
        throw std::invalid_argument("coral_loss: feature dims " + fs.value().shape_str() + " vs " +
                                    ft.value().shape_str());
    if (ns < 2 || nt < 2)
        throw std::invalid_argument("coral_loss: needs >= 2 rows per domain, got " +
                                    std::to_string(ns) + "/" + std::to_string(nt));
    using detail::MatXd;
    auto cache = std::make_shared<std::array<MatXd, 3>>();  // Xs centered, Xt centered, Cs - Ct
    MatXd xs = detail::to_double(fs.value(), ns, d);
    MatXd xt = detail::to_double(ft.value(), nt, d);
    xs.rowwise() -= xs.colwise().mean();
    xt.rowwise() -= xt.colwise().mean();
    MatXd cs = xs.transpose() * xs / static_cast<double>(ns - 1);
    MatXd ct = xt.transpose() * xt / static_cast<double>(nt - 1);
    (*cache)[0] = std::move(xs);
    (*cache)[1] = std::move(xt);
    (*cache)[2] = cs - ct;
    const double value = (*cache)[2].squaredNorm() / (4.0 * static_cast<double>(d) * d);
    Var r = detail::make_op(Tensor::scalar(static_cast<float>(value)), {fs, ft},
                            [cache, ns, nt, d](Node& n) {
                                const MatXd& diff = (*cache)[2];
                                const double dd = static_cast<double>(d) * d;
                                if (n.parents[0]->requires_grad) {
                                    MatXd g = (*cache)[0] * diff / ((ns - 1) * dd);
                                    detail::add_scaled(*n.parents[0], g, n.grad[0]);
                                }
                                if (n.parents[1]->requires_grad) {
                                    MatXd g = (*cache)[1] * diff / (-(nt - 1) * dd);
                                    detail::add_scaled(*n.parents[1], g, n.grad[0]);
                                }
                            });
    r.node()->value64 = value;
    return r;
}

/// Biased-estimator squared MMD with an RBF kernel sum over bandwidths:
/// mean k(s,s) + mean k(t,t) - 2 mean k(s,t), k(x,y) = exp(-||x-y||^2 / (2 sigma^2)).
/// Fused: float64 forward, analytic backward via kernel-weighted row sums.
inline Var mmd_loss(const Var& fs, const Var& ft, std::span<const float> bandwidths) {
    const int ns = fs.value().rows(), nt = ft.value().rows();
    const int d = fs.value().cols();
    if (ft.value().cols() != d)
        throw std::invalid_argument("mmd_loss: feature dims " + fs.value().shape_str() + " vs " +
                                    ft.value().shape_str());
    if (ns < 1 || nt < 1) throw std::invalid_argument("mmd_loss: both sample sets must be nonempty");
    if (bandwidths.empty()) throw std::invalid_argument("mmd_loss: no bandwidths");
    for (float s : bandwidths)
        if (!(s > 0.0f)) throw std::invalid_argument("mmd_loss: bandwidth must be > 0");

    using detail::MatXd;
    struct MmdCache {
        MatXd s, t;           // inputs at float64
        MatXd dss, dtt, dst;  // pairwise squared distances
        std::vector<double> sigmas;
    };
    auto c = std::make_shared<MmdCache>();
    c->s = detail::to_double(fs.value(), ns, d);
    c->t = detail::to_double(ft.value(), nt, d);
    for (float s : bandwidths) c->sigmas.push_back(static_cast<double>(s));

    auto sqdist = [](const MatXd& a, const MatXd& b) {
        MatXd out = -2.0 * a * b.transpose();
        out.colwise() += a.rowwise().squaredNorm();
        out.rowwise() += b.rowwise().squaredNorm().transpose();
        return MatXd(out.cwiseMax(0.0));
    };
    c->dss = sqdist(c->s, c->s);
    c->dtt = sqdist(c->t, c->t);
    c->dst = sqdist(c->s, c->t);

    double value = 0.0;
    for (double sigma : c->sigmas) {
        const double k = -0.5 / (sigma * sigma);
        value += (c->dss * k).array().exp().mean() + (c->dtt * k).array().exp().mean() -
                 2.0 * (c->dst * k).array().exp().mean();
    }

    Var r = detail::make_op(
        Tensor::scalar(static_cast<float>(value)), {fs, ft}, [c, ns, nt](Node& n) {
            const bool need_s = n.parents[0]->requires_grad;
            const bool need_t = n.parents[1]->requires_grad;
            if (!need_s && !need_t) return;
            MatXd gs = MatXd::Zero(c->s.rows(), c->s.cols());
            MatXd gt = MatXd::Zero(c->t.rows(), c->t.cols());
            for (double sigma : c->sigmas) {
                const double k = -0.5 / (sigma * sigma);
                const double inv = 1.0 / (sigma * sigma);
                MatXd wss = (c->dss * k).array().exp();
                MatXd wtt = (c->dtt * k).array().exp();
                MatXd wst = (c->dst * k).array().exp();
                if (need_s) {
                    // within-domain: -(2 inv / ns^2) (rowsum(W) s_a - (W S)_a); cross flips sign
                    gs += (-2.0 * inv / (static_cast<double>(ns) * ns)) *
                          (wss.rowwise().sum().asDiagonal() * c->s - wss * c->s);
                    gs += (2.0 * inv / (static_cast<double>(ns) * nt)) *
                          (wst.rowwise().sum().asDiagonal() * c->s - wst * c->t);
                }
                if (need_t) {
                    gt += (-2.0 * inv / (static_cast<double>(nt) * nt)) *
                          (wtt.rowwise().sum().asDiagonal() * c->t - wtt * c->t);
                    gt += (2.0 * inv / (static_cast<double>(ns) * nt)) *
                          (wst.colwise().sum().asDiagonal() * c->t - wst.transpose() * c->s);
                }
            }
            if (need_s) detail::add_scaled(*n.parents[0], gs, n.grad[0]);
            if (need_t) detail::add_scaled(*n.parents[1], gt, n.grad[0]);
        });
    r.node()->value64 = value;
    return r;
}

/// {0.5, 1, 2, 4} x median pairwise distance over the pooled rows.
inline std::vector<float> median_heuristic_bandwidths(const Tensor& fs, const Tensor& ft) {
    const int d = fs.cols();
    std::vector<const float*> rows;
    for (int i = 0; i < fs.rows(); ++i) rows.push_back(fs.data() + static_cast<int64_t>(i) * d);
    for (int i = 0; i < ft.rows(); ++i) rows.push_back(ft.data() + static_cast<int64_t>(i) * d);
    std::vector<double> dists;
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = i + 1; j < rows.size(); ++j) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) {
                const double diff = static_cast<double>(rows[i][c]) - rows[j][c];
                s += diff * diff;
            }
            dists.push_back(std::sqrt(s));
        }
    double med = 1.0;
    if (!dists.empty()) {
        std::nth_element(dists.begin(), dists.begin() + static_cast<int64_t>(dists.size() / 2),
                         dists.end());
        med = dists[dists.size() / 2];
    }
    if (med <= 1e-12) med = 1.0;
    return {0.5f * static_cast<float>(med), static_cast<float>(med), 2.0f * static_cast<float>(med),
            4.0f * static_cast<float>(med)};
}

/// Mean squared error over all elements (float64 forward).
inline Var recon_mse(const Var& x, const Var& x_hat) {
    detail::check_same_shape(x.value(), x_hat.value(), "recon_mse");
    const int64_t count = x.value().size();
    double acc = 0.0;
    for (int64_t i = 0; i < count; ++i) {
        const double diff = static_cast<double>(x.value()[i]) - x_hat.value()[i];
        acc += diff * diff;
    }
    acc /= static_cast<double>(count);
    Var r = detail::make_op(Tensor::scalar(static_cast<float>(acc)), {x, x_hat}, [count](Node& n) {
        Node& px = *n.parents[0];
        Node& ph = *n.parents[1];
        const float g = 2.0f * n.grad[0] / static_cast<float>(count);
        if (px.requires_grad) px.ensure_grad();
        if (ph.requires_grad) ph.ensure_grad();
        for (int64_t i = 0; i < count; ++i) {
            const float diff = px.value[i] - ph.value[i];
            if (px.requires_grad) px.grad[i] += g * diff;
            if (ph.requires_grad) ph.grad[i] -= g * diff;
        }
    });
    r.node()->value64 = acc;
    return r;
}

/// Stage composite with its reporting breakdown.
struct CompositeLoss {
    Var total;
    LossValue value;
};

/// L_DA = L_class + alpha * L_domain.
inline CompositeLoss da_total(const Var& l_class, const Var& l_domain, float alpha) {
    CompositeLoss out;
    out.total = add(l_class, scale(l_domain, alpha));
    out.value.terms["class"] = l_class.scalar64();
    out.value.terms["domain"] = l_domain.scalar64();
    out.value.terms["alpha"] = alpha;
    out.value.value = out.total.scalar64();
    return out;
}

/// L_Di = L_rec - beta * L_AClass.
inline CompositeLoss di_total(const Var& l_rec, const Var& l_aclass, float beta) {
    CompositeLoss out;
    out.total = sub(l_rec, scale(l_aclass, beta));
    out.value.terms["recon"] = l_rec.scalar64();
    out.value.terms["aclass"] = l_aclass.scalar64();
    out.value.terms["beta"] = beta;
    out.value.value = out.total.scalar64();
    return out;
}

}  // namespace dida
