#include "stshn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stshn/errors.hpp"

namespace stshn {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape));
}

// c += a * b for row-major matrices, i-k-j loop order.
void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c += a^T * b where a is m x k (so result is k x n).
void matmul_at_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c += a * b^T where a is m x k, b is n x k (result m x n).
void matmul_bt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

}  // namespace

Var Tape::push(Node n) {
    if (nodes_.size() >= static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max()))
        throw Error(ErrorCode::generic, "tape overflow");
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_ref(std::int32_t i) {
    Node& n = nodes_[i];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    return n.grad;
}

Var Tape::leaf(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.op = Op::leaf;
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& A = nodes_[a.i].value;
    const Tensor& B = nodes_[b.i].value;
    require_rank2(A, "matmul");
    require_rank2(B, "matmul");
    if (A.cols() != B.rows())
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Node n;
    n.value = Tensor({A.rows(), B.cols()});
    matmul_acc(A.data.data(), B.data.data(), n.value.data.data(), A.rows(), A.cols(), B.cols());
    n.parents = {a.i, b.i};
    n.op = Op::matmul;
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    const Tensor& A = nodes_[a.i].value;
    const Tensor& B = nodes_[b.i].value;
    require_same_shape(A, B, "add");
    Node n;
    n.value = A;
    for (std::size_t i = 0; i < B.numel(); ++i) n.value.data[i] += B.data[i];
    n.parents = {a.i, b.i};
    n.op = Op::add;
    return push(std::move(n));
}

Var Tape::add_n(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("add_n: no operands");
    Node n;
    n.value = nodes_[xs[0].i].value;
    n.parents.push_back(xs[0].i);
    for (std::size_t k = 1; k < xs.size(); ++k) {
        const Tensor& X = nodes_[xs[k].i].value;
        require_same_shape(n.value, X, "add_n");
        for (std::size_t i = 0; i < X.numel(); ++i) n.value.data[i] += X.data[i];
        n.parents.push_back(xs[k].i);
    }
    n.op = Op::add_n;
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    const Tensor& A = nodes_[a.i].value;
    const Tensor& B = nodes_[b.i].value;
    require_same_shape(A, B, "sub");
    Node n;
    n.value = A;
    for (std::size_t i = 0; i < B.numel(); ++i) n.value.data[i] -= B.data[i];
    n.parents = {a.i, b.i};
    n.op = Op::sub;
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    const Tensor& A = nodes_[a.i].value;
    const Tensor& B = nodes_[b.i].value;
    require_same_shape(A, B, "mul");
    Node n;
    n.value = A;
    for (std::size_t i = 0; i < B.numel(); ++i) n.value.data[i] *= B.data[i];
    n.parents = {a.i, b.i};
    n.op = Op::mul;
    return push(std::move(n));
}

Var Tape::scale(Var x, double factor) {
    Node n;
    n.value = nodes_[x.i].value;
    for (double& v : n.value.data) v *= factor;
    n.parents = {x.i};
    n.op = Op::scale;
    n.daux0 = factor;
    return push(std::move(n));
}

Var Tape::add_scalar(Var x, double c) {
    Node n;
    n.value = nodes_[x.i].value;
    for (double& v : n.value.data) v += c;
    n.parents = {x.i};
    n.op = Op::add_scalar;
    n.daux0 = c;
    return push(std::move(n));
}

Var Tape::relu(Var x) {
    Node n;
    n.value = nodes_[x.i].value;
    for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
    n.parents = {x.i};
    n.op = Op::relu;
    return push(std::move(n));
}

Var Tape::sigmoid(Var x) {
    Node n;
    n.value = nodes_[x.i].value;
    for (double& v : n.value.data) {
        if (v >= 0.0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    n.parents = {x.i};
    n.op = Op::sigmoid;
    return push(std::move(n));
}

Var Tape::log(Var x) {
    Node n;
    n.value = nodes_[x.i].value;
    for (double& v : n.value.data) v = std::log(v);
    n.parents = {x.i};
    n.op = Op::log;
    return push(std::move(n));
}

Var Tape::abs(Var x) {
    Node n;
    n.value = nodes_[x.i].value;
    for (double& v : n.value.data) v = std::fabs(v);
    n.parents = {x.i};
    n.op = Op::abs;
    return push(std::move(n));
}

Var Tape::rsqrt(Var x) {
    Node n;
    n.value = nodes_[x.i].value;
    for (double& v : n.value.data) v = 1.0 / std::sqrt(v);
    n.parents = {x.i};
    n.op = Op::rsqrt;
    return push(std::move(n));
}

Var Tape::clamp(Var x, double lo, double hi) {
    Node n;
    n.value = nodes_[x.i].value;
    for (double& v : n.value.data) v = std::min(std::max(v, lo), hi);
    n.parents = {x.i};
    n.op = Op::clamp;
    n.daux0 = lo;
    n.daux1 = hi;
    return push(std::move(n));
}

Var Tape::clamp_min(Var x, double lo) { return clamp(x, lo, std::numeric_limits<double>::infinity()); }

Var Tape::softmax_lastdim(Var x) {
    const Tensor& X = nodes_[x.i].value;
    if (X.rank() == 0 || X.shape.back() < 1) throw ShapeError("softmax_lastdim: empty last dimension");
    return softmax_groups(x, X.shape.back());
}

Var Tape::softmax_groups(Var x, std::size_t group) {
    const Tensor& X = nodes_[x.i].value;
    if (group == 0 || X.numel() % group != 0)
        throw ShapeError("softmax_groups: group " + std::to_string(group) + " does not divide " +
                         std::to_string(X.numel()));
    Node n;
    n.value = X;
    double* d = n.value.data.data();
    const std::size_t k = X.numel() / group;
    for (std::size_t g = 0; g < k; ++g) {
        double* s = d + g * group;
        double mx = s[0];
        for (std::size_t j = 1; j < group; ++j) mx = std::max(mx, s[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < group; ++j) {
            s[j] = std::exp(s[j] - mx);
            sum += s[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < group; ++j) s[j] *= inv;
    }
    n.parents = {x.i};
    n.op = Op::softmax;
    n.iaux = static_cast<std::int32_t>(group);
    return push(std::move(n));
}

Var Tape::concat_lastdim(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_lastdim: no operands");
    const Tensor& first = nodes_[xs[0].i].value;
    if (first.rank() == 0) throw ShapeError("concat_lastdim: rank-0 operand");
    std::vector<std::size_t> lead(first.shape.begin(), first.shape.end() - 1);
    std::size_t total_last = 0;
    for (Var v : xs) {
        const Tensor& t = nodes_[v.i].value;
        std::vector<std::size_t> tl(t.shape.begin(), t.shape.end() - 1);
        if (t.rank() != first.rank() || tl != lead)
            throw ShapeError("concat_lastdim: incompatible shapes " + shape_str(first.shape) + " vs " +
                             shape_str(t.shape));
        total_last += t.shape.back();
    }
    std::vector<std::size_t> out_shape = lead;
    out_shape.push_back(total_last);
    Node n;
    n.value = Tensor(out_shape);
    const std::size_t outer = numel_of(lead);
    std::size_t off = 0;
    for (Var v : xs) {
        const Tensor& t = nodes_[v.i].value;
        const std::size_t w = t.shape.back();
        for (std::size_t r = 0; r < outer; ++r)
            std::copy_n(t.data.data() + r * w, w, n.value.data.data() + r * total_last + off);
        off += w;
        n.parents.push_back(v.i);
    }
    n.op = Op::concat;
    return push(std::move(n));
}

Var Tape::sum_over_axis(Var x, std::size_t axis) {
    const Tensor& X = nodes_[x.i].value;
    if (axis >= X.rank()) throw ShapeError("sum_over_axis: axis out of range for " + shape_str(X.shape));
    std::vector<std::size_t> out_shape;
    for (std::size_t i = 0; i < X.rank(); ++i)
        if (i != axis) out_shape.push_back(X.shape[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= X.shape[i];
    for (std::size_t i = axis + 1; i < X.rank(); ++i) inner *= X.shape[i];
    const std::size_t mid = X.shape[axis];
    Node n;
    n.value = Tensor(out_shape);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t m = 0; m < mid; ++m) {
            const double* src = X.data.data() + (o * mid + m) * inner;
            double* dst = n.value.data.data() + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    n.parents = {x.i};
    n.op = Op::sum_axis;
    n.iaux = static_cast<std::int32_t>(axis);
    return push(std::move(n));
}

Var Tape::sum_all(Var x) {
    const Tensor& X = nodes_[x.i].value;
    double s = 0.0;
    for (double v : X.data) s += v;
    Node n;
    n.value = Tensor::scalar(s);
    n.parents = {x.i};
    n.op = Op::sum_all;
    return push(std::move(n));
}

Var Tape::transpose(Var x) {
    const Tensor& X = nodes_[x.i].value;
    require_rank2(X, "transpose");
    Node n;
    n.value = Tensor({X.cols(), X.rows()});
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) n.value.at(j, i) = X.at(i, j);
    n.parents = {x.i};
    n.op = Op::transpose;
    return push(std::move(n));
}

Var Tape::scale_rows(Var x, Var s) {
    const Tensor& X = nodes_[x.i].value;
    const Tensor& S = nodes_[s.i].value;
    require_rank2(X, "scale_rows");
    if (S.numel() != X.rows())
        throw ShapeError("scale_rows: vector length " + std::to_string(S.numel()) + " vs rows " +
                         std::to_string(X.rows()));
    Node n;
    n.value = X;
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) n.value.at(i, j) *= S.data[i];
    n.parents = {x.i, s.i};
    n.op = Op::scale_rows;
    return push(std::move(n));
}

Var Tape::scale_cols(Var x, Var s) {
    const Tensor& X = nodes_[x.i].value;
    const Tensor& S = nodes_[s.i].value;
    require_rank2(X, "scale_cols");
    if (S.numel() != X.cols())
        throw ShapeError("scale_cols: vector length " + std::to_string(S.numel()) + " vs cols " +
                         std::to_string(X.cols()));
    Node n;
    n.value = X;
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) n.value.at(i, j) *= S.data[j];
    n.parents = {x.i, s.i};
    n.op = Op::scale_cols;
    return push(std::move(n));
}

Var Tape::reshape(Var x, std::vector<std::size_t> new_shape) {
    const Tensor& X = nodes_[x.i].value;
    if (numel_of(new_shape) != X.numel())
        throw ShapeError("reshape: cannot view " + shape_str(X.shape) + " as " + shape_str(new_shape));
    Node n;
    n.value = Tensor(std::move(new_shape), X.data);
    n.parents = {x.i};
    n.op = Op::reshape;
    return push(std::move(n));
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_[v.i];
    if (n.grad.data.empty()) return Tensor(n.value.shape);
    return n.grad;
}

void Tape::backward(Var root) {
    Node& r = nodes_[root.i];
    if (r.value.numel() != 1)
        throw Error(ErrorCode::generic, "backward: root must be scalar, got shape " + shape_str(r.value.shape));
    grad_ref(root.i).data[0] = 1.0;
    for (std::int32_t i = root.i; i >= 0; --i) {
        if (nodes_[i].grad.data.empty()) continue;  // unreachable from root
        backward_step(i);
    }
}

void Tape::backward_step(std::int32_t idx) {
    Node& n = nodes_[idx];
    const Tensor& g = n.grad;
    switch (n.op) {
        case Op::leaf:
            break;
        case Op::matmul: {
            const Tensor& A = nodes_[n.parents[0]].value;
            const Tensor& B = nodes_[n.parents[1]].value;
            Tensor& ga = grad_ref(n.parents[0]);
            Tensor& gb = grad_ref(n.parents[1]);
            // ga += g * B^T ; gb += A^T * g
            matmul_bt_acc(g.data.data(), B.data.data(), ga.data.data(), A.rows(), B.cols(), A.cols());
            matmul_at_acc(A.data.data(), g.data.data(), gb.data.data(), A.rows(), A.cols(), B.cols());
            break;
        }
        case Op::add: {
            for (int k = 0; k < 2; ++k) {
                Tensor& gp = grad_ref(n.parents[k]);
                for (std::size_t i = 0; i < g.numel(); ++i) gp.data[i] += g.data[i];
            }
            break;
        }
        case Op::add_n: {
            for (std::int32_t p : n.parents) {
                Tensor& gp = grad_ref(p);
                for (std::size_t i = 0; i < g.numel(); ++i) gp.data[i] += g.data[i];
            }
            break;
        }
        case Op::sub: {
            Tensor& ga = grad_ref(n.parents[0]);
            Tensor& gb = grad_ref(n.parents[1]);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] -= g.data[i];
            }
            break;
        }
        case Op::mul: {
            const Tensor& A = nodes_[n.parents[0]].value;
            const Tensor& B = nodes_[n.parents[1]].value;
            Tensor& ga = grad_ref(n.parents[0]);
            Tensor& gb = grad_ref(n.parents[1]);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                ga.data[i] += g.data[i] * B.data[i];
                gb.data[i] += g.data[i] * A.data[i];
            }
            break;
        }
        case Op::scale: {
            Tensor& gp = grad_ref(n.parents[0]);
            for (std::size_t i = 0; i < g.numel(); ++i) gp.data[i] += g.data[i] * n.daux0;
            break;
        }
        case Op::add_scalar: {
            Tensor& gp = grad_ref(n.parents[0]);
            for (std::size_t i = 0; i < g.numel(); ++i) gp.data[i] += g.data[i];
            break;
        }
        case Op::relu: {
            const Tensor& X = nodes_[n.parents[0]].value;
            Tensor& gp = grad_ref(n.parents[0]);
            for (std::size_t i = 0; i < g.numel(); ++i)
                if (X.data[i] > 0.0) gp.data[i] += g.data[i];
            break;
        }
        case Op::sigmoid: {
            Tensor& gp = grad_ref(n.parents[0]);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const double y = n.value.data[i];
                gp.data[i] += g.data[i] * y * (1.0 - y);
            }
            break;
        }
        case Op::log: {
            const Tensor& X = nodes_[n.parents[0]].value;
            Tensor& gp = grad_ref(n.parents[0]);
            for (std::size_t i = 0; i < g.numel(); ++i) gp.data[i] += g.data[i] / X.data[i];
            break;
        }
        case Op::abs: {
            const Tensor& X = nodes_[n.parents[0]].value;
            Tensor& gp = grad_ref(n.parents[0]);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                if (X.data[i] > 0.0)
                    gp.data[i] += g.data[i];
                else if (X.data[i] < 0.0)
                    gp.data[i] -= g.data[i];
            }
            break;
        }
        case Op::rsqrt: {
            Tensor& gp = grad_ref(n.parents[0]);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const double y = n.value.data[i];
                gp.data[i] += g.data[i] * (-0.5 * y * y * y);
            }
            break;
        }
        case Op::clamp: {
            const Tensor& X = nodes_[n.parents[0]].value;
            Tensor& gp = grad_ref(n.parents[0]);
            for (std::size_t i = 0; i < g.numel(); ++i)
                if (X.data[i] > n.daux0 && X.data[i] < n.daux1) gp.data[i] += g.data[i];
            break;
        }
        case Op::softmax: {
            Tensor& gp = grad_ref(n.parents[0]);
            const std::size_t group = static_cast<std::size_t>(n.iaux);
            const std::size_t k = g.numel() / group;
            for (std::size_t gi = 0; gi < k; ++gi) {
                const double* y = n.value.data.data() + gi * group;
                const double* go = g.data.data() + gi * group;
                double dot = 0.0;
                for (std::size_t j = 0; j < group; ++j) dot += go[j] * y[j];
                double* dst = gp.data.data() + gi * group;
                for (std::size_t j = 0; j < group; ++j) dst[j] += y[j] * (go[j] - dot);
            }
            break;
        }
        case Op::concat: {
            const std::size_t total_last = n.value.shape.back();
            const std::size_t outer = n.value.numel() / total_last;
            std::size_t off = 0;
            for (std::int32_t p : n.parents) {
                const std::size_t w = nodes_[p].value.shape.back();
                Tensor& gp = grad_ref(p);
                for (std::size_t r = 0; r < outer; ++r) {
                    const double* src = g.data.data() + r * total_last + off;
                    double* dst = gp.data.data() + r * w;
                    for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
                }
                off += w;
            }
            break;
        }
        case Op::sum_axis: {
            const Tensor& X = nodes_[n.parents[0]].value;
            Tensor& gp = grad_ref(n.parents[0]);
            const std::size_t axis = static_cast<std::size_t>(n.iaux);
            std::size_t outer = 1, inner = 1;
            for (std::size_t i = 0; i < axis; ++i) outer *= X.shape[i];
            for (std::size_t i = axis + 1; i < X.rank(); ++i) inner *= X.shape[i];
            const std::size_t mid = X.shape[axis];
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t m = 0; m < mid; ++m) {
                    double* dst = gp.data.data() + (o * mid + m) * inner;
                    const double* src = g.data.data() + o * inner;
                    for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                }
            break;
        }
        case Op::sum_all: {
            Tensor& gp = grad_ref(n.parents[0]);
            const double gv = g.data[0];
            for (double& v : gp.data) v += gv;
            break;
        }
        case Op::transpose: {
            const Tensor& X = nodes_[n.parents[0]].value;
            Tensor& gp = grad_ref(n.parents[0]);
            for (std::size_t i = 0; i < X.rows(); ++i)
                for (std::size_t j = 0; j < X.cols(); ++j) gp.at(i, j) += g.at(j, i);
            break;
        }
        case Op::scale_rows: {
            const Tensor& X = nodes_[n.parents[0]].value;
            const Tensor& S = nodes_[n.parents[1]].value;
            Tensor& gx = grad_ref(n.parents[0]);
            Tensor& gs = grad_ref(n.parents[1]);
            for (std::size_t i = 0; i < X.rows(); ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < X.cols(); ++j) {
                    gx.at(i, j) += g.at(i, j) * S.data[i];
                    acc += g.at(i, j) * X.at(i, j);
                }
                gs.data[i] += acc;
            }
            break;
        }
        case Op::scale_cols: {
            const Tensor& X = nodes_[n.parents[0]].value;
            const Tensor& S = nodes_[n.parents[1]].value;
            Tensor& gx = grad_ref(n.parents[0]);
            Tensor& gs = grad_ref(n.parents[1]);
            for (std::size_t i = 0; i < X.rows(); ++i)
                for (std::size_t j = 0; j < X.cols(); ++j) {
                    gx.at(i, j) += g.at(i, j) * S.data[j];
                    gs.data[j] += g.at(i, j) * X.at(i, j);
                }
            break;
        }
        case Op::reshape: {
            Tensor& gp = grad_ref(n.parents[0]);
            for (std::size_t i = 0; i < g.numel(); ++i) gp.data[i] += g.data[i];
            break;
        }
    }
}

}  // namespace stshn
