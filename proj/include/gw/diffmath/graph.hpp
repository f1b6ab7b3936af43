#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gw/common/error.hpp"
#include "gw/diffmath/matrix.hpp"

namespace gw::diff {

// A trainable (or frozen) tensor owned outside any graph.
struct Parameter {
    std::string name;
    Matrix value;
    bool frozen = false;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;
};

// Tape-based reverse-mode differentiation. Nodes are appended in evaluation
// order, which is a topological order, so backward() is a single reverse sweep.
// Every forward result is checked for finiteness.
class Graph {
public:
    explicit Graph(bool track_gradients = true) : track_(track_gradients) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool tracking() const noexcept { return track_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    Var constant(Matrix value) { return push(std::move(value), false, {}, nullptr); }
    Var scalar_constant(double v) { return constant(Matrix(1, 1, v)); }

    // Leaf bound to an external parameter, read in place: the parameter must
    // outlive the graph and stay unchanged while it is in use. Repeated calls
    // return the same node so gradients from every use accumulate in one place.
    Var param(const Parameter& p) {
        if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
        if (!p.value.all_finite()) throw NumericError("non-finite parameter " + p.name, nodes_.size());
        Node n;
        n.external = &p.value;
        n.param = &p;
        n.requires_grad = track_ && !p.frozen;
        nodes_.push_back(std::move(n));
        param_nodes_.emplace(&p, nodes_.size() - 1);
        return {this, nodes_.size() - 1};
    }

    const Matrix& value(Var v) const { return nodes_.at(v.id).get(); }
    double scalar(Var v) const {
        const Matrix& m = value(v);
        require(m.size() == 1, "scalar(): node is not 1x1");
        return m[0];
    }

    // Gradient of the last backward() root with respect to `v`; zero-filled if
    // `v` did not influence the root.
    const Matrix& grad(Var v) const {
        require(has_backward_, "grad(): backward() has not run");
        return nodes_.at(v.id).grad;
    }

    // Gradient per parameter, aligned with `params`. Parameters absent from the
    // graph get a zero gradient of their own shape.
    std::vector<Matrix> gradients(std::span<const Parameter* const> params) const {
        std::vector<Matrix> out;
        out.reserve(params.size());
        for (const Parameter* p : params) {
            auto it = param_nodes_.find(p);
            if (it == param_nodes_.end()) {
                out.emplace_back(p->value.rows(), p->value.cols());
            } else {
                out.push_back(grad({const_cast<Graph*>(this), it->second}));
            }
        }
        return out;
    }

    void backward(Var loss) {
        require(track_, "backward() on a graph built without gradient tracking");
        require(loss.id < nodes_.size(), "backward(): unknown node");
        require(nodes_[loss.id].get().size() == 1, "backward(): loss node is not scalar");
        for (Node& n : nodes_) n.grad = Matrix();
        nodes_[loss.id].grad = Matrix(1, 1, 1.0);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
            n.backward(*this, n.grad);
        }
        for (Node& n : nodes_)
            if (n.grad.empty()) n.grad = Matrix(n.get().rows(), n.get().cols());
        has_backward_ = true;
    }

    // ---- operators -------------------------------------------------------

    // a[m,k] * b[k,n]
    Var matmul(Var a, Var b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        require(A.cols() == B.rows(), "matmul: inner dimensions differ");
        Matrix C(A.rows(), B.cols());
        as_eigen(C).noalias() = as_eigen(A) * as_eigen(B);
        return push(std::move(C), any_grad({a, b}), {a.id, b.id}, [a, b](Graph& g, const Matrix& dC) {
            if (g.needs(a)) {
                Matrix dA(g.value(a).rows(), g.value(a).cols());
                as_eigen(dA).noalias() = as_eigen(dC) * as_eigen(g.value(b)).transpose();
                g.accumulate(a, std::move(dA));
            }
            if (g.needs(b)) {
                Matrix dB(g.value(b).rows(), g.value(b).cols());
                as_eigen(dB).noalias() = as_eigen(g.value(a)).transpose() * as_eigen(dC);
                g.accumulate(b, std::move(dB));
            }
        });
    }

    // a[m,k] * b[n,k]^T; the usual layout for x * W^T with W stored [out, in].
    Var matmul_t(Var a, Var b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        require(A.cols() == B.cols(), "matmul_t: inner dimensions differ");
        Matrix C(A.rows(), B.rows());
        as_eigen(C).noalias() = as_eigen(A) * as_eigen(B).transpose();
        return push(std::move(C), any_grad({a, b}), {a.id, b.id}, [a, b](Graph& g, const Matrix& dC) {
            if (g.needs(a)) {
                Matrix dA(g.value(a).rows(), g.value(a).cols());
                as_eigen(dA).noalias() = as_eigen(dC) * as_eigen(g.value(b));
                g.accumulate(a, std::move(dA));
            }
            if (g.needs(b)) {
                Matrix dB(g.value(b).rows(), g.value(b).cols());
                as_eigen(dB).noalias() = as_eigen(dC).transpose() * as_eigen(g.value(a));
                g.accumulate(b, std::move(dB));
            }
        });
    }

    // x[m,n] + bias[1,n] broadcast over rows.
    Var add_bias(Var x, Var bias) {
        const Matrix& X = value(x);
        const Matrix& b = value(bias);
        require(b.rows() == 1 && b.cols() == X.cols(), "add_bias: bias must be 1 x cols(x)");
        Matrix Y = X;
        as_eigen(Y).rowwise() += as_eigen(b).row(0);
        return push(std::move(Y), any_grad({x, bias}), {x.id, bias.id}, [x, bias](Graph& g, const Matrix& dY) {
            if (g.needs(x)) g.accumulate(x, dY);
            if (g.needs(bias)) {
                Matrix db(1, dY.cols());
                as_eigen(db) = as_eigen(dY).colwise().sum();
                g.accumulate(bias, std::move(db));
            }
        });
    }

    Var tanh(Var x) {
        Matrix Y = value(x);
        for (double& v : Y.values()) v = std::tanh(v);
        const std::size_t out = nodes_.size();
        return push(std::move(Y), any_grad({x}), {x.id}, [x, out](Graph& g, const Matrix& dY) {
            const Matrix& Yv = g.nodes_[out].get();
            Matrix dX(Yv.rows(), Yv.cols());
            for (std::size_t i = 0; i < dX.size(); ++i) dX[i] = dY[i] * (1.0 - Yv[i] * Yv[i]);
            g.accumulate(x, std::move(dX));
        });
    }

    Var relu(Var x) {
        Matrix Y = value(x);
        for (double& v : Y.values()) v = v > 0.0 ? v : 0.0;
        return push(std::move(Y), any_grad({x}), {x.id}, [x](Graph& g, const Matrix& dY) {
            const Matrix& X = g.value(x);
            Matrix dX(X.rows(), X.cols());
            for (std::size_t i = 0; i < dX.size(); ++i) dX[i] = X[i] > 0.0 ? dY[i] : 0.0;
            g.accumulate(x, std::move(dX));
        });
    }

    Var add(Var a, Var b) { return elementwise(a, b, +1.0); }
    Var sub(Var a, Var b) { return elementwise(a, b, -1.0); }

    Var mul(Var a, Var b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        require(A.same_shape(B), "mul: shape mismatch");
        Matrix C(A.rows(), A.cols());
        for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] * B[i];
        return push(std::move(C), any_grad({a, b}), {a.id, b.id}, [a, b](Graph& g, const Matrix& dC) {
            if (g.needs(a)) {
                const Matrix& Bv = g.value(b);
                Matrix dA(dC.rows(), dC.cols());
                for (std::size_t i = 0; i < dA.size(); ++i) dA[i] = dC[i] * Bv[i];
                g.accumulate(a, std::move(dA));
            }
            if (g.needs(b)) {
                const Matrix& Av = g.value(a);
                Matrix dB(dC.rows(), dC.cols());
                for (std::size_t i = 0; i < dB.size(); ++i) dB[i] = dC[i] * Av[i];
                g.accumulate(b, std::move(dB));
            }
        });
    }

    // scale * x + shift, elementwise with constants.
    Var affine(Var x, double scale, double shift = 0.0) {
        Matrix Y = value(x);
        for (double& v : Y.values()) v = scale * v + shift;
        return push(std::move(Y), any_grad({x}), {x.id}, [x, scale](Graph& g, const Matrix& dY) {
            Matrix dX = dY;
            for (double& v : dX.values()) v *= scale;
            g.accumulate(x, std::move(dX));
        });
    }
    Var scale(Var x, double s) { return affine(x, s, 0.0); }

    Var log(Var x) {
        Matrix Y = value(x);
        for (double& v : Y.values()) v = std::log(v);
        return push(std::move(Y), any_grad({x}), {x.id}, [x](Graph& g, const Matrix& dY) {
            const Matrix& X = g.value(x);
            Matrix dX(X.rows(), X.cols());
            for (std::size_t i = 0; i < dX.size(); ++i) dX[i] = dY[i] / X[i];
            g.accumulate(x, std::move(dX));
        });
    }

    // Identity inside [lo, hi], constant (zero gradient) outside.
    Var clamp(Var x, double lo, double hi) {
        require(lo <= hi, "clamp: lo > hi");
        Matrix Y = value(x);
        for (double& v : Y.values()) v = std::clamp(v, lo, hi);
        return push(std::move(Y), any_grad({x}), {x.id}, [x, lo, hi](Graph& g, const Matrix& dY) {
            const Matrix& X = g.value(x);
            Matrix dX(X.rows(), X.cols());
            for (std::size_t i = 0; i < dX.size(); ++i) dX[i] = (X[i] >= lo && X[i] <= hi) ? dY[i] : 0.0;
            g.accumulate(x, std::move(dX));
        });
    }

    Var sum(Var x) {
        const Matrix& X = value(x);
        double s = 0.0;
        for (double v : X.values()) s += v;
        return push(Matrix(1, 1, s), any_grad({x}), {x.id}, [x](Graph& g, const Matrix& dY) {
            const Matrix& Xv = g.value(x);
            g.accumulate(x, Matrix(Xv.rows(), Xv.cols(), dY[0]));
        });
    }

    Var mean(Var x) {
        const std::size_t n = value(x).size();
        require(n > 0, "mean: empty input");
        return scale(sum(x), 1.0 / static_cast<double>(n));
    }

    // Mean over every entry of (pred - target)^2.
    Var mse(Var pred, Var target) {
        const Matrix& P = value(pred);
        const Matrix& T = value(target);
        require(P.same_shape(T), "mse: shape mismatch");
        require(P.size() > 0, "mse: empty input");
        double s = 0.0;
        for (std::size_t i = 0; i < P.size(); ++i) {
            const double d = P[i] - T[i];
            s += d * d;
        }
        const double n = static_cast<double>(P.size());
        return push(Matrix(1, 1, s / n), any_grad({pred, target}), {pred.id, target.id},
                    [pred, target, n](Graph& g, const Matrix& dY) {
                        const Matrix& Pv = g.value(pred);
                        const Matrix& Tv = g.value(target);
                        Matrix d(Pv.rows(), Pv.cols());
                        for (std::size_t i = 0; i < d.size(); ++i) d[i] = 2.0 * (Pv[i] - Tv[i]) / n * dY[0];
                        if (g.needs(pred)) g.accumulate(pred, d);
                        if (g.needs(target)) {
                            for (double& v : d.values()) v = -v;
                            g.accumulate(target, std::move(d));
                        }
                    });
    }

    // Mean over rows of -log softmax(logits)[label].
    Var softmax_cross_entropy(Var logits, std::vector<std::size_t> labels) {
        const Matrix& L = value(logits);
        require(L.rows() == labels.size() && L.rows() > 0, "softmax_cross_entropy: one label per row required");
        Matrix probs(L.rows(), L.cols());
        double total = 0.0;
        for (std::size_t r = 0; r < L.rows(); ++r) {
            require(labels[r] < L.cols(), "softmax_cross_entropy: label out of range");
            auto row = L.row_span(r);
            const double mx = *std::max_element(row.begin(), row.end());
            double z = 0.0;
            for (double v : row) z += std::exp(v - mx);
            const double lse = mx + std::log(z);
            total += lse - row[labels[r]];
            for (std::size_t c = 0; c < L.cols(); ++c) probs(r, c) = std::exp(row[c] - lse);
        }
        const double n = static_cast<double>(L.rows());
        return push(Matrix(1, 1, total / n), any_grad({logits}), {logits.id},
                    [logits, probs = std::move(probs), labels = std::move(labels), n](Graph& g, const Matrix& dY) {
                        Matrix d = probs;
                        for (std::size_t r = 0; r < d.rows(); ++r) d(r, labels[r]) -= 1.0;
                        for (double& v : d.values()) v *= dY[0] / n;
                        g.accumulate(logits, std::move(d));
                    });
    }

    // Per-row Euclidean norm, [m,n] -> [m,1]. Zero rows have zero gradient.
    Var row_norm(Var x) {
        const Matrix& X = value(x);
        Matrix Y(X.rows(), 1);
        for (std::size_t r = 0; r < X.rows(); ++r) Y[r] = norm(X.row_span(r));
        const std::size_t out = nodes_.size();
        return push(std::move(Y), any_grad({x}), {x.id}, [x, out](Graph& g, const Matrix& dY) {
            const Matrix& Xv = g.value(x);
            const Matrix& Yv = g.nodes_[out].get();
            Matrix dX(Xv.rows(), Xv.cols());
            for (std::size_t r = 0; r < Xv.rows(); ++r) {
                if (Yv[r] == 0.0) continue;
                for (std::size_t c = 0; c < Xv.cols(); ++c) dX(r, c) = dY[r] * Xv(r, c) / Yv[r];
            }
            g.accumulate(x, std::move(dX));
        });
    }

    // Per-row dot product, [m,n] x [m,n] -> [m,1].
    Var row_dot(Var a, Var b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        require(A.same_shape(B), "row_dot: shape mismatch");
        Matrix Y(A.rows(), 1);
        for (std::size_t r = 0; r < A.rows(); ++r) Y[r] = dot(A.row_span(r), B.row_span(r));
        return push(std::move(Y), any_grad({a, b}), {a.id, b.id}, [a, b](Graph& g, const Matrix& dY) {
            const Matrix& Av = g.value(a);
            const Matrix& Bv = g.value(b);
            Matrix dA(Av.rows(), Av.cols()), dB(Av.rows(), Av.cols());
            for (std::size_t r = 0; r < Av.rows(); ++r)
                for (std::size_t c = 0; c < Av.cols(); ++c) {
                    dA(r, c) = dY[r] * Bv(r, c);
                    dB(r, c) = dY[r] * Av(r, c);
                }
            if (g.needs(a)) g.accumulate(a, std::move(dA));
            if (g.needs(b)) g.accumulate(b, std::move(dB));
        });
    }

    // Per-row cosine similarity, [m,n] x [m,n] -> [m,1].
    Var cosine(Var a, Var b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        require(A.same_shape(B), "cosine: shape mismatch");
        Matrix Y(A.rows(), 1);
        for (std::size_t r = 0; r < A.rows(); ++r)
            Y[r] = dot(A.row_span(r), B.row_span(r)) / (safe(norm(A.row_span(r))) * safe(norm(B.row_span(r))));
        const std::size_t out = nodes_.size();
        return push(std::move(Y), any_grad({a, b}), {a.id, b.id}, [a, b, out](Graph& g, const Matrix& dY) {
            const Matrix& Av = g.value(a);
            const Matrix& Bv = g.value(b);
            const Matrix& Yv = g.nodes_[out].get();
            Matrix dA(Av.rows(), Av.cols()), dB(Av.rows(), Av.cols());
            for (std::size_t r = 0; r < Av.rows(); ++r) {
                const double na = safe(norm(Av.row_span(r)));
                const double nb = safe(norm(Bv.row_span(r)));
                for (std::size_t c = 0; c < Av.cols(); ++c) {
                    dA(r, c) = dY[r] * (Bv(r, c) / (na * nb) - Yv[r] * Av(r, c) / (na * na));
                    dB(r, c) = dY[r] * (Av(r, c) / (na * nb) - Yv[r] * Bv(r, c) / (nb * nb));
                }
            }
            if (g.needs(a)) g.accumulate(a, std::move(dA));
            if (g.needs(b)) g.accumulate(b, std::move(dB));
        });
    }

    // Pairwise cosine similarities, [m,d] x [n,d] -> [m,n].
    Var cosine_matrix(Var a, Var b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        require(A.cols() == B.cols(), "cosine_matrix: width mismatch");
        Matrix An = normalized_rows(A), Bn = normalized_rows(B);
        Matrix C(A.rows(), B.rows());
        as_eigen(C).noalias() = as_eigen(An) * as_eigen(Bn).transpose();
        return push(std::move(C), any_grad({a, b}), {a.id, b.id},
                    [a, b, An = std::move(An), Bn = std::move(Bn)](Graph& g, const Matrix& dC) {
                        if (g.needs(a)) {
                            Matrix dAn(An.rows(), An.cols());
                            as_eigen(dAn).noalias() = as_eigen(dC) * as_eigen(Bn);
                            g.accumulate(a, unnormalize_grad(g.value(a), An, dAn));
                        }
                        if (g.needs(b)) {
                            Matrix dBn(Bn.rows(), Bn.cols());
                            as_eigen(dBn).noalias() = as_eigen(dC).transpose() * as_eigen(An);
                            g.accumulate(b, unnormalize_grad(g.value(b), Bn, dBn));
                        }
                    });
    }

    Var transpose(Var x) {
        const Matrix& X = value(x);
        Matrix Y(X.cols(), X.rows());
        as_eigen(Y) = as_eigen(X).transpose();
        return push(std::move(Y), any_grad({x}), {x.id}, [x](Graph& g, const Matrix& dY) {
            Matrix dX(dY.cols(), dY.rows());
            as_eigen(dX) = as_eigen(dY).transpose();
            g.accumulate(x, std::move(dX));
        });
    }

    // Columns [begin, begin+count) of x.
    Var slice_cols(Var x, std::size_t begin, std::size_t count) {
        const Matrix& X = value(x);
        require(begin + count <= X.cols(), "slice_cols: range exceeds width");
        Matrix Y(X.rows(), count);
        for (std::size_t r = 0; r < X.rows(); ++r)
            for (std::size_t c = 0; c < count; ++c) Y(r, c) = X(r, begin + c);
        return push(std::move(Y), any_grad({x}), {x.id}, [x, begin, count](Graph& g, const Matrix& dY) {
            const Matrix& Xv = g.value(x);
            Matrix dX(Xv.rows(), Xv.cols());
            for (std::size_t r = 0; r < Xv.rows(); ++r)
                for (std::size_t c = 0; c < count; ++c) dX(r, begin + c) = dY(r, c);
            g.accumulate(x, std::move(dX));
        });
    }

    // Horizontal concatenation; all parts must have the same row count.
    Var concat_cols(std::span<const Var> parts) {
        require(!parts.empty(), "concat_cols: no inputs");
        const std::size_t rows = value(parts[0]).rows();
        std::size_t cols = 0;
        std::vector<std::size_t> parents;
        for (Var p : parts) {
            require(value(p).rows() == rows, "concat_cols: row counts differ");
            cols += value(p).cols();
            parents.push_back(p.id);
        }
        Matrix Y(rows, cols);
        std::size_t off = 0;
        for (Var p : parts) {
            const Matrix& P = value(p);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < P.cols(); ++c) Y(r, off + c) = P(r, c);
            off += P.cols();
        }
        std::vector<Var> ps(parts.begin(), parts.end());
        bool rg = false;
        for (Var p : ps) rg = rg || needs(p);
        return push(std::move(Y), rg, std::move(parents), [ps](Graph& g, const Matrix& dY) {
            std::size_t o = 0;
            for (Var p : ps) {
                const std::size_t w = g.value(p).cols();
                if (g.needs(p)) {
                    Matrix d(dY.rows(), w);
                    for (std::size_t r = 0; r < dY.rows(); ++r)
                        for (std::size_t c = 0; c < w; ++c) d(r, c) = dY(r, o + c);
                    g.accumulate(p, std::move(d));
                }
                o += w;
            }
        });
    }

    // Rows [begin, begin+count) of x.
    Var slice_rows(Var x, std::size_t begin, std::size_t count) {
        const Matrix& X = value(x);
        require(begin + count <= X.rows(), "slice_rows: range exceeds height");
        if (begin == 0 && count == X.rows()) return x;
        const std::size_t w = X.cols();
        Matrix Y(count, w);
        std::copy_n(X.values().begin() + begin * w, count * w, Y.values().begin());
        return push(std::move(Y), any_grad({x}), {x.id}, [x, begin](Graph& g, const Matrix& dY) {
            const Matrix& Xv = g.value(x);
            Matrix dX(Xv.rows(), Xv.cols());
            std::copy(dY.values().begin(), dY.values().end(), dX.values().begin() + begin * Xv.cols());
            g.accumulate(x, std::move(dX));
        });
    }

    // Vertical concatenation; all parts must have the same column count.
    Var concat_rows(std::span<const Var> parts) {
        require(!parts.empty(), "concat_rows: no inputs");
        const std::size_t cols = value(parts[0]).cols();
        std::size_t rows = 0;
        std::vector<std::size_t> parents;
        bool rg = false;
        for (Var p : parts) {
            require(value(p).cols() == cols, "concat_rows: column counts differ");
            rows += value(p).rows();
            parents.push_back(p.id);
            rg = rg || needs(p);
        }
        if (parts.size() == 1) return parts[0];
        Matrix Y(rows, cols);
        auto out = Y.values().begin();
        for (Var p : parts) out = std::copy(value(p).values().begin(), value(p).values().end(), out);
        std::vector<Var> ps(parts.begin(), parts.end());
        return push(std::move(Y), rg, std::move(parents), [ps](Graph& g, const Matrix& dY) {
            auto in = dY.values().begin();
            for (Var p : ps) {
                const Matrix& P = g.value(p);
                if (g.needs(p)) {
                    Matrix d(P.rows(), P.cols());
                    std::copy_n(in, P.size(), d.values().begin());
                    g.accumulate(p, std::move(d));
                }
                in += static_cast<std::ptrdiff_t>(P.size());
            }
        });
    }

    const std::vector<std::size_t>& parents(Var v) const { return nodes_.at(v.id).parents; }

private:
    using Backward = std::function<void(Graph&, const Matrix&)>;

    struct Node {
        Matrix value;
        const Matrix* external = nullptr;
        Matrix grad;
        const Matrix& get() const { return external ? *external : value; }
        std::vector<std::size_t> parents;
        Backward backward;
        const Parameter* param = nullptr;
        bool requires_grad = false;
    };

    static double dot(std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    }
    static double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }
    static double safe(double n) { return n > 1e-12 ? n : 1e-12; }

    static Matrix normalized_rows(const Matrix& X) {
        Matrix Y = X;
        for (std::size_t r = 0; r < X.rows(); ++r) {
            const double n = safe(norm(X.row_span(r)));
            for (double& v : Y.row_span(r)) v /= n;
        }
        return Y;
    }

    // Gradient through x -> x/|x| given the normalized rows and dL/d(normalized).
    static Matrix unnormalize_grad(const Matrix& X, const Matrix& Xn, const Matrix& dXn) {
        Matrix dX(X.rows(), X.cols());
        for (std::size_t r = 0; r < X.rows(); ++r) {
            const double n = safe(norm(X.row_span(r)));
            const double proj = dot(Xn.row_span(r), dXn.row_span(r));
            for (std::size_t c = 0; c < X.cols(); ++c) dX(r, c) = (dXn(r, c) - Xn(r, c) * proj) / n;
        }
        return dX;
    }

    bool needs(Var v) const { return nodes_[v.id].requires_grad; }

    bool any_grad(std::initializer_list<Var> vs) const {
        for (Var v : vs)
            if (needs(v)) return true;
        return false;
    }

    Var elementwise(Var a, Var b, double sign) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        require(A.same_shape(B), "add/sub: shape mismatch");
        Matrix C(A.rows(), A.cols());
        for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] + sign * B[i];
        return push(std::move(C), any_grad({a, b}), {a.id, b.id}, [a, b, sign](Graph& g, const Matrix& dC) {
            if (g.needs(a)) g.accumulate(a, dC);
            if (g.needs(b)) {
                Matrix d = dC;
                if (sign != 1.0)
                    for (double& v : d.values()) v *= sign;
                g.accumulate(b, std::move(d));
            }
        });
    }

    void accumulate(Var v, Matrix d) {
        Node& n = nodes_[v.id];
        if (n.grad.empty()) {
            n.grad = std::move(d);
        } else {
            for (std::size_t i = 0; i < d.size(); ++i) n.grad[i] += d[i];
        }
    }

    Var push(Matrix value, bool requires_grad, std::vector<std::size_t> parents, Backward backward) {
        const std::size_t id = nodes_.size();
        if (!value.all_finite()) throw NumericError("non-finite value in forward pass", id);
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.requires_grad = track_ && requires_grad;
        if (n.requires_grad) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return {this, id};
    }

    bool track_;
    bool has_backward_ = false;
    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline Var operator+(Var a, Var b) { return a.graph->add(a, b); }
inline Var operator-(Var a, Var b) { return a.graph->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.graph->mul(a, b); }

}  // namespace gw::diff
