#pragma once

// Minimal tape-based reverse-mode differentiation over dense Eigen matrices.
// Values are double precision throughout. A Tape records one forward pass;
// Tape::backward then propagates adjoints from a scalar root.

#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace earn::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// A trainable tensor. Gradients live on the Tape, not here.
struct Parameter {
    Matrix value;
};

class Tape;

class Var {
public:
    Var() = default;

    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    double scalar() const { return value()(0, 0); }
    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Matrix&)>;

    Tape() { nodes_.reserve(1024); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

    Var parameter(const Parameter& p) {
        if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
        Var v = push(p.value, true, nullptr);
        param_ids_.emplace(&p, v.id());
        return v;
    }

    /// Records an op. `backward` receives the output adjoint and must
    /// accumulate into its inputs through Tape::accumulate.
    Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
        bool needs = false;
        for (const Var& in : inputs) needs = needs || requires_grad(in);
        return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
    }

    Var record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
        bool needs = false;
        for (const Var& in : inputs) needs = needs || requires_grad(in);
        return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
    }

    const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(const Var& v) const {
        return nodes_[static_cast<std::size_t>(v.id())].requires_grad;
    }

    void accumulate(const Var& v, const Matrix& g) {
        Node& n = nodes_[static_cast<std::size_t>(v.id())];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    void accumulate_block(const Var& v, Index row, Index col, const Matrix& g) {
        Node& n = nodes_[static_cast<std::size_t>(v.id())];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
        n.grad.block(row, col, g.rows(), g.cols()) += g;
    }

    void backward(const Var& root) {
        if (root.tape() != this) throw std::logic_error("backward root belongs to another tape");
        if (root.rows() != 1 || root.cols() != 1) throw std::logic_error("backward root must be a scalar");
        Node& r = nodes_[static_cast<std::size_t>(root.id())];
        if (!r.requires_grad) return;
        r.grad = Matrix::Ones(1, 1);
        for (int id = root.id(); id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (!n.backward || n.grad.size() == 0) continue;
            // Copy so the callback may safely accumulate into the node vector.
            const Matrix g = n.grad;
            n.backward(*this, g);
        }
    }

    /// Gradient of the last backward root w.r.t. `p`; zeros if `p` was unused.
    Matrix gradient(const Parameter& p) const {
        auto it = param_ids_.find(&p);
        if (it == param_ids_.end()) return Matrix::Zero(p.value.rows(), p.value.cols());
        const Node& n = nodes_[static_cast<std::size_t>(it->second)];
        if (n.grad.size() == 0) return Matrix::Zero(p.value.rows(), p.value.cols());
        return n.grad;
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backward backward;
    };

    Var push(Matrix value, bool requires_grad, Backward backward) {
        nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward)});
        return Var(this, static_cast<int>(nodes_.size() - 1));
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_ids_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

namespace detail {

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                                    "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                    "x" + std::to_string(b.cols()));
    }
}

}  // namespace detail

inline Var constant(Tape& t, Matrix m) { return t.constant(std::move(m)); }

inline Var scalar_constant(Tape& t, double x) { return t.constant(Matrix::Constant(1, 1, x)); }

inline Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    Tape& t = *a.tape();
    return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
        if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
    });
}

inline Var transpose(const Var& a) {
    Tape& t = *a.tape();
    return t.record(a.value().transpose(), {a},
                    [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

inline Var add(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "add");
    Tape& t = *a.tape();
    return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "sub");
    Tape& t = *a.tape();
    return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

inline Var hadamard(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "hadamard");
    Tape& t = *a.tape();
    return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
        if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
    });
}

inline Var scale(const Var& a, double s) {
    Tape& t = *a.tape();
    return t.record(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

/// a * s where s is a 1x1 Var.
inline Var scale_by(const Var& a, const Var& s) {
    if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("scale_by: factor must be 1x1");
    Tape& t = *a.tape();
    return t.record(a.value() * s.scalar(), {a, s}, [a, s](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, g * s.scalar());
        if (t.requires_grad(s)) t.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
    });
}

/// Adds a 1 x m row to every row of an n x m matrix.
inline Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
    Tape& t = *a.tape();
    Matrix v = a.value().rowwise() + row.value().row(0);
    return t.record(std::move(v), {a, row}, [a, row](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
    });
}

/// Repeats a 1 x m row n times.
inline Var repeat_rows(const Var& row, Index n) {
    if (row.rows() != 1) throw std::invalid_argument("repeat_rows: expects a row vector");
    Tape& t = *row.tape();
    return t.record(row.value().replicate(n, 1), {row},
                    [row](Tape& t, const Matrix& g) { t.accumulate(row, g.colwise().sum()); });
}

inline Var relu(const Var& a) {
    Tape& t = *a.tape();
    return t.record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Matrix& g) {
        t.accumulate(a, (a.value().array() > 0.0).cast<double>().matrix().cwiseProduct(g));
    });
}

inline Var sigmoid(const Var& a) {
    Tape& t = *a.tape();
    Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    return t.record(y, {a}, [a, y](Tape& t, const Matrix& g) {
        t.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
    });
}

inline Var tanh(const Var& a) {
    Tape& t = *a.tape();
    Matrix y = a.value().array().tanh().matrix();
    return t.record(y, {a}, [a, y](Tape& t, const Matrix& g) {
        t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
    });
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const Index rows = parts.front().rows();
    Index cols = 0;
    for (const Var& p : parts) {
        if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
        cols += p.cols();
    }
    Matrix v(rows, cols);
    Index c = 0;
    for (const Var& p : parts) {
        v.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    Tape& t = *parts.front().tape();
    return t.record(std::move(v), parts, [parts](Tape& t, const Matrix& g) {
        Index c = 0;
        for (const Var& p : parts) {
            if (t.requires_grad(p)) t.accumulate(p, g.middleCols(c, p.cols()));
            c += p.cols();
        }
    });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    const Index cols = parts.front().cols();
    Index rows = 0;
    for (const Var& p : parts) {
        if (p.cols() != cols) throw std::invalid_argument("concat_rows: column count mismatch");
        rows += p.rows();
    }
    Matrix v(rows, cols);
    Index r = 0;
    for (const Var& p : parts) {
        v.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    Tape& t = *parts.front().tape();
    return t.record(std::move(v), parts, [parts](Tape& t, const Matrix& g) {
        Index r = 0;
        for (const Var& p : parts) {
            if (t.requires_grad(p)) t.accumulate(p, g.middleRows(r, p.rows()));
            r += p.rows();
        }
    });
}

inline Var slice_cols(const Var& a, Index start, Index count) {
    if (start < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
    Tape& t = *a.tape();
    return t.record(a.value().middleCols(start, count), {a}, [a, start](Tape& t, const Matrix& g) {
        t.accumulate_block(a, 0, start, g);
    });
}

inline Var slice_rows(const Var& a, Index start, Index count) {
    if (start < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows");
    Tape& t = *a.tape();
    return t.record(a.value().middleRows(start, count), {a}, [a, start](Tape& t, const Matrix& g) {
        t.accumulate_block(a, start, 0, g);
    });
}

/// Rows of `table` selected by `ids`, in order (embedding lookup).
inline Var gather_rows(const Var& table, const std::vector<int>& ids) {
    Matrix v(static_cast<Index>(ids.size()), table.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || ids[r] >= table.rows()) throw std::out_of_range("gather_rows: id out of range");
        v.row(static_cast<Index>(r)) = table.value().row(ids[r]);
    }
    Tape& t = *table.tape();
    return t.record(std::move(v), {table}, [table, ids](Tape& t, const Matrix& g) {
        for (std::size_t r = 0; r < ids.size(); ++r) {
            t.accumulate_block(table, ids[r], 0, g.row(static_cast<Index>(r)));
        }
    });
}

inline Var sum(const Var& a) {
    Tape& t = *a.tape();
    return t.record(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](Tape& t, const Matrix& g) {
        t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Sum of 1x1 Vars.
inline Var add_n(const std::vector<Var>& terms) {
    if (terms.empty()) throw std::invalid_argument("add_n: no terms");
    double s = 0.0;
    for (const Var& v : terms) s += v.scalar();
    Tape& t = *terms.front().tape();
    return t.record(Matrix::Constant(1, 1, s), terms, [terms](Tape& t, const Matrix& g) {
        for (const Var& v : terms) t.accumulate(v, g);
    });
}

/// Softmax over all entries of `a` (vector-shaped). Entries with mask == false
/// are excluded and come out exactly zero. An all-false mask is an error.
inline Var masked_softmax(const Var& a, const std::vector<bool>& mask) {
    const Index n = a.value().size();
    if (static_cast<Index>(mask.size()) != n) throw std::invalid_argument("masked_softmax: mask size mismatch");
    double mx = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
        if (mask[static_cast<std::size_t>(i)]) mx = std::max(mx, a.value()(i));
    }
    if (!std::isfinite(mx)) throw std::invalid_argument("masked_softmax: empty support");
    Matrix y = Matrix::Zero(a.rows(), a.cols());
    double z = 0.0;
    for (Index i = 0; i < n; ++i) {
        if (mask[static_cast<std::size_t>(i)]) {
            y(i) = std::exp(a.value()(i) - mx);
            z += y(i);
        }
    }
    y /= z;
    Tape& t = *a.tape();
    return t.record(y, {a}, [a, y](Tape& t, const Matrix& g) {
        // Masked entries have y == 0 and therefore zero adjoint.
        const double dot = y.cwiseProduct(g).sum();
        t.accumulate(a, (y.array() * (g.array() - dot)).matrix());
    });
}

inline Var softmax(const Var& a) { return masked_softmax(a, std::vector<bool>(a.value().size(), true)); }

/// a / sum(a); the sum must be positive.
inline Var normalize_sum(const Var& a) {
    const double s = a.value().sum();
    if (!(s > 0.0)) throw std::invalid_argument("normalize_sum: non-positive total");
    Matrix y = a.value() / s;
    Tape& t = *a.tape();
    return t.record(y, {a}, [a, y, s](Tape& t, const Matrix& g) {
        const double dot = y.cwiseProduct(g).sum();
        t.accumulate(a, ((g.array() - dot) / s).matrix());
    });
}

/// Row-wise log-softmax of an n x k matrix.
inline Var log_softmax_rows(const Var& a) {
    Matrix y(a.rows(), a.cols());
    for (Index r = 0; r < a.rows(); ++r) {
        const double mx = a.value().row(r).maxCoeff();
        const double lse = mx + std::log((a.value().row(r).array() - mx).exp().sum());
        y.row(r) = a.value().row(r).array() - lse;
    }
    Tape& t = *a.tape();
    return t.record(y, {a}, [a, y](Tape& t, const Matrix& g) {
        Matrix p = y.array().exp().matrix();
        Matrix ga = g - (p.array().colwise() * g.rowwise().sum().array()).matrix();
        t.accumulate(a, ga);
    });
}

/// Sum over rows r of a(r, cols[r]).
inline Var pick_sum(const Var& a, const std::vector<int>& cols) {
    if (static_cast<Index>(cols.size()) != a.rows()) throw std::invalid_argument("pick_sum: one column per row");
    double s = 0.0;
    for (Index r = 0; r < a.rows(); ++r) s += a.value()(r, cols[static_cast<std::size_t>(r)]);
    Tape& t = *a.tape();
    return t.record(Matrix::Constant(1, 1, s), {a}, [a, cols](Tape& t, const Matrix& g) {
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        for (Index r = 0; r < a.rows(); ++r) ga(r, cols[static_cast<std::size_t>(r)]) = g(0, 0);
        t.accumulate(a, ga);
    });
}

/// Mean squared error over all entries.
inline Var mse(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "mse");
    const Matrix d = a.value() - b.value();
    const double n = static_cast<double>(d.size());
    Tape& t = *a.tape();
    return t.record(Matrix::Constant(1, 1, d.squaredNorm() / n), {a, b}, [a, b, d, n](Tape& t, const Matrix& g) {
        const Matrix gd = d * (2.0 * g(0, 0) / n);
        t.accumulate(a, gd);
        t.accumulate(b, -gd);
    });
}

/// Weighted binary cross-entropy with logits clamped to [-clip, clip],
/// averaged over entries: mean_j w_j * BCE(sigmoid(z_j), y_j).
inline Var weighted_bce_with_logits(const Var& logits, const Matrix& targets, const Matrix& weights,
                                    double clip = 30.0) {
    if (targets.rows() != logits.rows() || targets.cols() != logits.cols() ||
        weights.rows() != logits.rows() || weights.cols() != logits.cols()) {
        throw std::invalid_argument("weighted_bce_with_logits: shape mismatch");
    }
    const Matrix& z0 = logits.value();
    const Matrix z = z0.cwiseMax(-clip).cwiseMin(clip);
    const double n = static_cast<double>(z.size());
    // softplus(z) - y*z, computed stably
    const Matrix softplus = (z.array().max(0.0) + (-z.array().abs()).exp().log1p()).matrix();
    const double loss = (weights.array() * (softplus.array() - targets.array() * z.array())).sum() / n;
    Tape& t = *logits.tape();
    return t.record(Matrix::Constant(1, 1, loss), {logits},
                    [logits, z0, z, targets, weights, clip, n](Tape& t, const Matrix& g) {
                        const Matrix p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
                        Matrix gl = (weights.array() * (p.array() - targets.array())).matrix() * (g(0, 0) / n);
                        for (Index i = 0; i < gl.size(); ++i) {
                            if (z0(i) > clip || z0(i) < -clip) gl(i) = 0.0;
                        }
                        t.accumulate(logits, gl);
                    });
}

}  // namespace earn::ad
