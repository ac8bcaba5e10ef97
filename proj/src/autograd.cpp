#include "glen/autograd.hpp"

#include <cmath>
#include <utility>

#include "glen/error.hpp"

namespace glen {

namespace {
constexpr double kGeluA = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluB = 0.044715;
}  // namespace

const Tensor& Tape::empty_tensor() {
    static const Tensor empty;
    return empty;
}

Tape::Id Tape::push(Tensor value, std::function<void()> back) {
    Node node;
    node.value = std::move(value);
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Tape::grad_slot(Id id) {
    Node& n = nodes_[id];
    const Tensor& v = n.external ? *n.external : n.value;
    if (n.grad.rows != v.rows || n.grad.cols != v.cols) n.grad = Tensor(v.rows, v.cols);
    return n.grad;
}

const Tensor& Tape::val(Id id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
}

double Tape::scalar(Id id) const {
    const Tensor& t = val(id);
    if (t.rows != 1 || t.cols != 1) fail("numeric", "scalar() on non-scalar node");
    return t.v[0];
}

const Tensor& Tape::grad(Id id) const {
    return nodes_[id].grad.v.empty() ? empty_tensor() : nodes_[id].grad;
}

Tape::Id Tape::leaf(const Tensor* external) {
    Node node;
    node.external = external;
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::constant(Tensor value) {
    return push(std::move(value), nullptr);
}

Tape::Id Tape::rows(Id matrix, std::vector<int> row_ids) {
    const Tensor& m = val(matrix);
    Tensor out(static_cast<int>(row_ids.size()), m.cols);
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
        const double* src = m.row_ptr(row_ids[i]);
        double* dst = out.row_ptr(static_cast<int>(i));
        for (int j = 0; j < m.cols; ++j) dst[j] = src[j];
    }
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, matrix, out_id, ids = std::move(row_ids)]() {
        const Tensor& g = nodes_[out_id].grad;
        Tensor& gm = grad_slot(matrix);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const double* src = g.row_ptr(static_cast<int>(i));
            double* dst = gm.row_ptr(ids[i]);
            for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
        }
    };
    return out_id;
}

Tape::Id Tape::row(Id matrix, int r) {
    const Tensor& m = val(matrix);
    Tensor out(1, m.cols);
    const double* src = m.row_ptr(r);
    for (int j = 0; j < m.cols; ++j) out.v[j] = src[j];
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, matrix, out_id, r]() {
        const Tensor& g = nodes_[out_id].grad;
        Tensor& gm = grad_slot(matrix);
        double* dst = gm.row_ptr(r);
        for (int j = 0; j < g.cols; ++j) dst[j] += g.v[j];
    };
    return out_id;
}

Tape::Id Tape::concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) fail("numeric", "concat_rows on empty list");
    int cols = val(parts[0]).cols;
    Tensor out(static_cast<int>(parts.size()), cols);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const Tensor& p = val(parts[i]);
        if (p.rows != 1 || p.cols != cols) fail("numeric", "concat_rows shape mismatch");
        double* dst = out.row_ptr(static_cast<int>(i));
        for (int j = 0; j < cols; ++j) dst[j] = p.v[j];
    }
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, out_id, parts]() {
        const Tensor& g = nodes_[out_id].grad;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            Tensor& gp = grad_slot(parts[i]);
            const double* src = g.row_ptr(static_cast<int>(i));
            for (int j = 0; j < g.cols; ++j) gp.v[j] += src[j];
        }
    };
    return out_id;
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) fail("numeric", "add shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += tb.v[i];
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, a, b, out_id]() {
        const Tensor& g = nodes_[out_id].grad;
        Tensor& ga = grad_slot(a);
        Tensor& gb = grad_slot(b);
        for (std::size_t i = 0; i < g.v.size(); ++i) {
            ga.v[i] += g.v[i];
            gb.v[i] += g.v[i];
        }
    };
    return out_id;
}

Tape::Id Tape::add_rowvec(Id a, Id v) {
    const Tensor& ta = val(a);
    const Tensor& tv = val(v);
    if (tv.rows != 1 || tv.cols != ta.cols) fail("numeric", "add_rowvec shape mismatch");
    Tensor out = ta;
    for (int i = 0; i < out.rows; ++i) {
        double* dst = out.row_ptr(i);
        for (int j = 0; j < out.cols; ++j) dst[j] += tv.v[j];
    }
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, a, v, out_id]() {
        const Tensor& g = nodes_[out_id].grad;
        Tensor& ga = grad_slot(a);
        Tensor& gv = grad_slot(v);
        for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
        for (int i = 0; i < g.rows; ++i) {
            const double* src = g.row_ptr(i);
            for (int j = 0; j < g.cols; ++j) gv.v[j] += src[j];
        }
    };
    return out_id;
}

Tape::Id Tape::add_const(Id a, const Tensor& c) {
    const Tensor& ta = val(a);
    if (!ta.same_shape(c)) fail("numeric", "add_const shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += c.v[i];
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, a, out_id]() {
        const Tensor& g = nodes_[out_id].grad;
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    };
    return out_id;
}

Tape::Id Tape::scale(Id a, double k) {
    Tensor out = val(a);
    for (double& x : out.v) x *= k;
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, a, k, out_id]() {
        const Tensor& g = nodes_[out_id].grad;
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += k * g.v[i];
    };
    return out_id;
}

Tape::Id Tape::matmul(Id a, Id b) {
    Tensor out;
    glen::matmul(val(a), val(b), out);
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, a, b, out_id]() {
        const Tensor& g = nodes_[out_id].grad;
        glen::matmul_nt(g, val(b), grad_slot(a), true);  // dA += g * B^T
        glen::matmul_tn(val(a), g, grad_slot(b), true);  // dB += A^T * g
    };
    return out_id;
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
    Tensor out;
    glen::matmul_nt(val(a), val(b), out);
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, a, b, out_id]() {
        const Tensor& g = nodes_[out_id].grad;
        glen::matmul(g, val(b), grad_slot(a), true);     // dA += g * B
        glen::matmul_tn(g, val(a), grad_slot(b), true);  // dB += g^T * A
    };
    return out_id;
}

Tape::Id Tape::rmsnorm(Id x, Id gain, double eps) {
    const Tensor& tx = val(x);
    const Tensor& tg = val(gain);
    if (tg.rows != 1 || tg.cols != tx.cols) fail("numeric", "rmsnorm gain shape mismatch");
    Tensor out(tx.rows, tx.cols);
    std::vector<double> inv_rms(static_cast<std::size_t>(tx.rows));
    for (int i = 0; i < tx.rows; ++i) {
        const double* src = tx.row_ptr(i);
        double ss = 0.0;
        for (int j = 0; j < tx.cols; ++j) ss += src[j] * src[j];
        double inv = 1.0 / std::sqrt(ss / tx.cols + eps);
        inv_rms[static_cast<std::size_t>(i)] = inv;
        double* dst = out.row_ptr(i);
        for (int j = 0; j < tx.cols; ++j) dst[j] = src[j] * inv * tg.v[j];
    }
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, x, gain, out_id, inv = std::move(inv_rms)]() {
        const Tensor& g = nodes_[out_id].grad;
        const Tensor& tx2 = val(x);
        const Tensor& tg2 = val(gain);
        Tensor& gx = grad_slot(x);
        Tensor& gg = grad_slot(gain);
        int cols = tx2.cols;
        for (int i = 0; i < tx2.rows; ++i) {
            const double* xr = tx2.row_ptr(i);
            const double* gr = g.row_ptr(i);
            double* gxr = gx.row_ptr(i);
            double s = inv[static_cast<std::size_t>(i)];
            double inner = 0.0;  // sum_j dy_j * gain_j * x_j
            for (int j = 0; j < cols; ++j) inner += gr[j] * tg2.v[j] * xr[j];
            double coef = s * s * s * inner / cols;
            for (int j = 0; j < cols; ++j) {
                gxr[j] += s * tg2.v[j] * gr[j] - coef * xr[j];
                gg.v[j] += gr[j] * xr[j] * s;
            }
        }
    };
    return out_id;
}

Tape::Id Tape::gelu(Id x) {
    const Tensor& tx = val(x);
    Tensor out(tx.rows, tx.cols);
    for (std::size_t i = 0; i < tx.v.size(); ++i) {
        double v = tx.v[i];
        double u = kGeluA * (v + kGeluB * v * v * v);
        out.v[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, x, out_id]() {
        const Tensor& g = nodes_[out_id].grad;
        const Tensor& tx2 = val(x);
        Tensor& gx = grad_slot(x);
        for (std::size_t i = 0; i < g.v.size(); ++i) {
            double v = tx2.v[i];
            double u = kGeluA * (v + kGeluB * v * v * v);
            double t = std::tanh(u);
            double sech2 = 1.0 - t * t;
            double du = kGeluA * (1.0 + 3.0 * kGeluB * v * v);
            gx.v[i] += g.v[i] * (0.5 * (1.0 + t) + 0.5 * v * sech2 * du);
        }
    };
    return out_id;
}

Tape::Id Tape::softmax_rows(Id x) {
    const Tensor& tx = val(x);
    Tensor out(tx.rows, tx.cols);
    for (int i = 0; i < tx.rows; ++i) {
        const double* src = tx.row_ptr(i);
        double* dst = out.row_ptr(i);
        double mx = src[0];
        for (int j = 1; j < tx.cols; ++j) mx = std::max(mx, src[j]);
        double sum = 0.0;
        for (int j = 0; j < tx.cols; ++j) {
            dst[j] = std::exp(src[j] - mx);
            sum += dst[j];
        }
        double inv = 1.0 / sum;
        for (int j = 0; j < tx.cols; ++j) dst[j] *= inv;
    }
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, x, out_id]() {
        const Tensor& g = nodes_[out_id].grad;
        const Tensor& y = nodes_[out_id].value;
        Tensor& gx = grad_slot(x);
        for (int i = 0; i < y.rows; ++i) {
            const double* yr = y.row_ptr(i);
            const double* gr = g.row_ptr(i);
            double* gxr = gx.row_ptr(i);
            double inner = 0.0;
            for (int j = 0; j < y.cols; ++j) inner += gr[j] * yr[j];
            for (int j = 0; j < y.cols; ++j) gxr[j] += yr[j] * (gr[j] - inner);
        }
    };
    return out_id;
}

Tape::Id Tape::cross_entropy(Id logits, int r, int target) {
    const Tensor& tl = val(logits);
    if (target < 0 || target >= tl.cols) fail("numeric", "cross_entropy target out of range");
    const double* src = tl.row_ptr(r);
    double mx = src[0];
    for (int j = 1; j < tl.cols; ++j) mx = std::max(mx, src[j]);
    std::vector<double> probs(static_cast<std::size_t>(tl.cols));
    double sum = 0.0;
    for (int j = 0; j < tl.cols; ++j) {
        probs[static_cast<std::size_t>(j)] = std::exp(src[j] - mx);
        sum += probs[static_cast<std::size_t>(j)];
    }
    double inv = 1.0 / sum;
    for (double& p : probs) p *= inv;
    double lse = mx + std::log(sum);
    Tensor out(1, 1);
    out.v[0] = lse - src[target];
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, logits, r, target, out_id, p = std::move(probs)]() {
        double g = nodes_[out_id].grad.v[0];
        Tensor& gl = grad_slot(logits);
        double* dst = gl.row_ptr(r);
        for (int j = 0; j < gl.cols; ++j) dst[j] += g * p[static_cast<std::size_t>(j)];
        dst[target] -= g;
    };
    return out_id;
}

Tape::Id Tape::dot(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rows != 1 || tb.rows != 1 || ta.cols != tb.cols) fail("numeric", "dot shape mismatch");
    double s = 0.0;
    for (int j = 0; j < ta.cols; ++j) s += ta.v[j] * tb.v[j];
    Tensor out(1, 1);
    out.v[0] = s;
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, a, b, out_id]() {
        double g = nodes_[out_id].grad.v[0];
        const Tensor& ta2 = val(a);
        const Tensor& tb2 = val(b);
        Tensor& ga = grad_slot(a);
        Tensor& gb = grad_slot(b);
        for (int j = 0; j < ta2.cols; ++j) {
            ga.v[j] += g * tb2.v[j];
            gb.v[j] += g * ta2.v[j];
        }
    };
    return out_id;
}

Tape::Id Tape::stack_scalars(const std::vector<Id>& scalars) {
    Tensor out(1, static_cast<int>(scalars.size()));
    for (std::size_t i = 0; i < scalars.size(); ++i) out.v[i] = scalar(scalars[i]);
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, out_id, scalars]() {
        const Tensor& g = nodes_[out_id].grad;
        for (std::size_t i = 0; i < scalars.size(); ++i) grad_slot(scalars[i]).v[0] += g.v[i];
    };
    return out_id;
}

Tape::Id Tape::sum(const std::vector<Id>& scalars) {
    double s = 0.0;
    for (Id id : scalars) s += scalar(id);
    Tensor out(1, 1);
    out.v[0] = s;
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, out_id, scalars]() {
        double g = nodes_[out_id].grad.v[0];
        for (Id id : scalars) grad_slot(id).v[0] += g;
    };
    return out_id;
}

Tape::Id Tape::s_add(Id a, Id b) { return sum({a, b}); }

Tape::Id Tape::s_mul(Id a, Id b) {
    Tensor out(1, 1);
    out.v[0] = scalar(a) * scalar(b);
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, a, b, out_id]() {
        double g = nodes_[out_id].grad.v[0];
        grad_slot(a).v[0] += g * scalar(b);
        grad_slot(b).v[0] += g * scalar(a);
    };
    return out_id;
}

Tape::Id Tape::s_div(Id a, Id b) {
    double bv = scalar(b);
    Tensor out(1, 1);
    out.v[0] = scalar(a) / bv;
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, a, b, out_id]() {
        double g = nodes_[out_id].grad.v[0];
        double bv2 = scalar(b);
        grad_slot(a).v[0] += g / bv2;
        grad_slot(b).v[0] -= g * scalar(a) / (bv2 * bv2);
    };
    return out_id;
}

Tape::Id Tape::s_sqrt(Id a) {
    double v = std::sqrt(scalar(a));
    Tensor out(1, 1);
    out.v[0] = v;
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, a, out_id, v]() {
        double g = nodes_[out_id].grad.v[0];
        grad_slot(a).v[0] += g * 0.5 / v;
    };
    return out_id;
}

Tape::Id Tape::s_affine(Id a, double k, double c) {
    Tensor out(1, 1);
    out.v[0] = k * scalar(a) + c;
    Id out_id = push(std::move(out), nullptr);
    nodes_[out_id].back = [this, a, k, out_id]() {
        grad_slot(a).v[0] += k * nodes_[out_id].grad.v[0];
    };
    return out_id;
}

void Tape::backward(Id root) {
    const Tensor& rv = val(root);
    if (rv.rows != 1 || rv.cols != 1) fail("numeric", "backward root must be scalar");
    grad_slot(root).v[0] = 1.0;
    for (Id i = root; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.grad.v.empty() || !n.back) continue;
        n.back();
    }
}

}  // namespace glen
