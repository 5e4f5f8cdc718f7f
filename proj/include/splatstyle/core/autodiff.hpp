// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "splatstyle/core/errors.hpp"

namespace splatstyle::ad {

using Mat = Eigen::MatrixXf;
using RowVec = Eigen::RowVectorXf;

// Reverse-mode tape over dense float matrices. Small by intent: only the
// operations the feature backbone, attention math, and losses actually use.

struct Node {
    Mat value;
    Mat grad; // lazily allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backfn; // propagates this->grad into parents

    void accumulate(const Mat& g) {
        if (!requires_grad) return;
        if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
        grad += g;
    }
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Var leaf(Mat v) {
        auto n = std::make_shared<Node>();
        n->value = std::move(v);
        n->requires_grad = true;
        return Var(n);
    }
    static Var constant(Mat v) {
        auto n = std::make_shared<Node>();
        n->value = std::move(v);
        return Var(n);
    }

    bool valid() const { return node_ != nullptr; }
    const Mat& value() const { return node_->value; }
    const Mat& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    std::shared_ptr<Node> node() const { return node_; }

    /// Value-only copy, cut off from the tape.
    Var detach() const { return constant(node_->value); }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {
inline Var make_op(Mat value, std::vector<Var> parents, std::function<void(Node&)> backfn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (auto& p : parents) {
        n->parents.push_back(p.node());
        n->requires_grad = n->requires_grad || p.node()->requires_grad;
    }
    if (n->requires_grad) n->backfn = std::move(backfn);
    return Var(n);
}
} // namespace detail

inline Var add(const Var& a, const Var& b) {
    return detail::make_op(a.value() + b.value(), {a, b}, [a, b](Node& n) {
        a.node()->accumulate(n.grad);
        b.node()->accumulate(n.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    return detail::make_op(a.value() - b.value(), {a, b}, [a, b](Node& n) {
        a.node()->accumulate(n.grad);
        b.node()->accumulate(-n.grad);
    });
}

inline Var cmul(const Var& a, const Var& b) {
    return detail::make_op(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Node& n) {
        a.node()->accumulate(n.grad.cwiseProduct(b.value()));
        b.node()->accumulate(n.grad.cwiseProduct(a.value()));
    });
}

inline Var scale(const Var& a, float s) {
    return detail::make_op(a.value() * s, {a},
                           [a, s](Node& n) { a.node()->accumulate(n.grad * s); });
}

inline Var matmul(const Var& a, const Var& b) {
    return detail::make_op(a.value() * b.value(), {a, b}, [a, b](Node& n) {
        a.node()->accumulate(n.grad * b.value().transpose());
        b.node()->accumulate(a.value().transpose() * n.grad);
    });
}

/// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
    return detail::make_op(a.value() * b.value().transpose(), {a, b}, [a, b](Node& n) {
        a.node()->accumulate(n.grad * b.value());
        b.node()->accumulate(n.grad.transpose() * a.value());
    });
}

/// rows of a plus a 1xC bias row.
inline Var add_rowvec(const Var& a, const Var& b) {
    Mat v = a.value();
    v.rowwise() += RowVec(b.value().row(0));
    return detail::make_op(std::move(v), {a, b}, [a, b](Node& n) {
        a.node()->accumulate(n.grad);
        b.node()->accumulate(n.grad.colwise().sum());
    });
}

inline Var tanh(const Var& a) {
    Mat v = a.value().array().tanh().matrix();
    return detail::make_op(v, {a}, [a, v](Node& n) {
        a.node()->accumulate(n.grad.cwiseProduct((1.f - v.array().square()).matrix()));
    });
}

/// Row-wise softmax of (logits + bias), bias broadcast over rows. The bias is
/// a fixed attention mask, not a differentiable input; -inf entries zero out
/// the corresponding keys. Every row must keep at least one finite logit.
inline Var softmax_rows(const Var& logits, const RowVec& bias = RowVec()) {
    Mat z = logits.value();
    if (bias.size() > 0) {
        if (bias.size() != z.cols()) throw FormatError("softmax bias width mismatch");
        z.rowwise() += bias;
    }
    Mat p(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const float m = z.row(r).maxCoeff();
        if (!std::isfinite(m)) throw NumericalError("softmax row fully masked");
        Eigen::ArrayXf e = (z.row(r).array() - m).exp();
        p.row(r) = (e / e.sum()).matrix();
    }
    return detail::make_op(p, {logits}, [logits, p](Node& n) {
        Mat g(p.rows(), p.cols());
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            const float dot = n.grad.row(r).dot(p.row(r));
            g.row(r) = (p.row(r).array() * (n.grad.row(r).array() - dot)).matrix();
        }
        logits.node()->accumulate(g);
    });
}

inline Var vconcat(const std::vector<Var>& parts) {
    Eigen::Index rows = 0;
    const Eigen::Index cols = parts.front().value().cols();
    for (const auto& p : parts) rows += p.value().rows();
    Mat v(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        v.middleRows(r, p.value().rows()) = p.value();
        r += p.value().rows();
    }
    return detail::make_op(std::move(v), parts, [parts](Node& n) {
        Eigen::Index r = 0;
        for (const auto& p : parts) {
            p.node()->accumulate(n.grad.middleRows(r, p.value().rows()));
            r += p.value().rows();
        }
    });
}

inline Var hconcat(const std::vector<Var>& parts) {
    Eigen::Index cols = 0;
    const Eigen::Index rows = parts.front().value().rows();
    for (const auto& p : parts) cols += p.value().cols();
    Mat v(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        v.middleCols(c, p.value().cols()) = p.value();
        c += p.value().cols();
    }
    return detail::make_op(std::move(v), parts, [parts](Node& n) {
        Eigen::Index c = 0;
        for (const auto& p : parts) {
            p.node()->accumulate(n.grad.middleCols(c, p.value().cols()));
            c += p.value().cols();
        }
    });
}

inline Var slice_cols(const Var& a, Eigen::Index c0, Eigen::Index n) {
    return detail::make_op(a.value().middleCols(c0, n), {a}, [a, c0, n](Node& nd) {
        Mat g = Mat::Zero(a.value().rows(), a.value().cols());
        g.middleCols(c0, n) = nd.grad;
        a.node()->accumulate(g);
    });
}

inline Var slice_rows(const Var& a, Eigen::Index r0, Eigen::Index n) {
    return detail::make_op(a.value().middleRows(r0, n), {a}, [a, r0, n](Node& nd) {
        Mat g = Mat::Zero(a.value().rows(), a.value().cols());
        g.middleRows(r0, n) = nd.grad;
        a.node()->accumulate(g);
    });
}

/// Fixed sparse linear combination of input rows: out[r] = sum_i w_i * in[src_i].
/// Covers bilinear warps, pooling, and spatial filter banks.
struct RowMap {
    struct Entry {
        Eigen::Index src;
        float weight;
    };
    std::vector<std::vector<Entry>> rows; // one entry list per output row
};

inline Var apply_row_map(const Var& a, const std::shared_ptr<const RowMap>& map) {
    Mat v = Mat::Zero(static_cast<Eigen::Index>(map->rows.size()), a.value().cols());
    for (size_t r = 0; r < map->rows.size(); ++r)
        for (const auto& e : map->rows[r]) v.row(r) += e.weight * a.value().row(e.src);
    return detail::make_op(std::move(v), {a}, [a, map](Node& n) {
        Mat g = Mat::Zero(a.value().rows(), a.value().cols());
        for (size_t r = 0; r < map->rows.size(); ++r)
            for (const auto& e : map->rows[r]) g.row(e.src) += e.weight * n.grad.row(r);
        a.node()->accumulate(g);
    });
}

/// Per-row centering followed by L2 normalization with an eps in the
/// denominator; constant rows map to (near) zero vectors.
inline Var center_normalize_rows(const Var& a, float eps = 1e-8f) {
    const Mat& x = a.value();
    Mat c = x;
    c.colwise() -= x.rowwise().mean();
    Eigen::VectorXf norms = c.rowwise().norm();
    Mat y = c.array().colwise() / (norms.array() + eps);
    return detail::make_op(y, {a}, [a, c, norms, eps](Node& n) {
        const Eigen::Index d = c.cols();
        Mat g(c.rows(), d);
        for (Eigen::Index r = 0; r < c.rows(); ++r) {
            const float nr = norms(r);
            const float denom = nr + eps;
            // d/dc of c/(||c||+eps)
            Eigen::RowVectorXf gc = n.grad.row(r) / denom;
            if (nr > 1e-20f)
                gc -= c.row(r) * (c.row(r).dot(n.grad.row(r)) / (nr * denom * denom));
            // d/dx of centering: subtract the mean of the gradient
            g.row(r) = gc.array() - gc.mean();
        }
        a.node()->accumulate(g);
    });
}

/// Sum of all entries, as a 1x1 var.
inline Var sum(const Var& a) {
    Mat v(1, 1);
    v(0, 0) = a.value().sum();
    return detail::make_op(v, {a}, [a](Node& n) {
        a.node()->accumulate(Mat::Constant(a.value().rows(), a.value().cols(), n.grad(0, 0)));
    });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.f / static_cast<float>(a.value().size())); }

/// Runs reverse-mode accumulation from a 1x1 root.
inline void backward(const Var& root) {
    if (root.value().size() != 1) throw NumericalError("backward() expects a scalar root");
    // topological order via iterative post-order DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack{{root.node().get(), 0}};
    visited.insert(root.node().get());
    while (!stack.empty()) {
        Node* n = stack.back().first;
        const size_t i = stack.back().second;
        if (i < n->parents.size()) {
            ++stack.back().second;
            Node* p = n->parents[i].get();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root.node()->grad = Mat::Constant(1, 1, 1.f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backfn && n->grad.size() > 0) n->backfn(*n);
    }
}

} // namespace splatstyle::ad
