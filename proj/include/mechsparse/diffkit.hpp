#pragma once
// Minimal reverse-mode automatic differentiation over dense 2-D tensors.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mechsparse::diffkit {

template <typename Scalar>
using TensorT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct ParameterT {
    std::string name;
    TensorT<Scalar> value;
    TensorT<Scalar> grad;

    ParameterT() = default;
    ParameterT(std::string n, TensorT<Scalar> v)
        : name(std::move(n)), value(std::move(v)), grad(TensorT<Scalar>::Zero(value.rows(), value.cols())) {}
    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class TapeT;

template <typename Scalar>
struct VarT {
    TapeT<Scalar>* tape = nullptr;
    int id = -1;

    const TensorT<Scalar>& value() const;
    const TensorT<Scalar>& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Scalar scalar() const { return value()(0, 0); }
};

template <typename Scalar>
class TapeT {
public:
    using Tensor = TensorT<Scalar>;
    using Var = VarT<Scalar>;

    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(TapeT&, int)> backward;  // empty for leaves without gradient sink
    };

    Var push(Tensor value, std::function<void(TapeT&, int)> backward = {}) {
        nodes_.push_back(Node{std::move(value), Tensor(), std::move(backward)});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    Var constant(Tensor value) { return push(std::move(value)); }

    Var param(ParameterT<Scalar>& p) {
        ParameterT<Scalar>* ptr = &p;
        return push(p.value, [ptr](TapeT& t, int self) {
            const Tensor& g = t.node(self).grad;
            if (ptr->grad.rows() != g.rows() || ptr->grad.cols() != g.cols())
                ptr->grad = Tensor::Zero(g.rows(), g.cols());
            ptr->grad += g;
        });
    }

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }

    // Adds g to the gradient slot of node id.
    void accumulate(int id, const Tensor& g) {
        Node& n = node(id);
        if (n.grad.size() == 0)
            n.grad = g;
        else
            n.grad += g;
    }
    void accumulate(int id, Tensor&& g) {
        Node& n = node(id);
        if (n.grad.size() == 0)
            n.grad = std::move(g);
        else
            n.grad += g;
    }

    void backward(const Var& loss) {
        if (loss.tape != this) throw std::invalid_argument("backward: variable from another tape");
        const Tensor& v = node(loss.id).value;
        if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
        for (auto& n : nodes_) n.grad.resize(0, 0);
        node(loss.id).grad = Tensor::Ones(1, 1);
        for (int id = loss.id; id >= 0; --id) {
            Node& n = node(id);
            if (n.grad.size() == 0 || !n.backward) continue;
            n.backward(*this, id);
        }
    }

    void clear() { nodes_.clear(); }

private:
    std::vector<Node> nodes_;
};

template <typename Scalar>
const TensorT<Scalar>& VarT<Scalar>::value() const {
    return tape->node(id).value;
}

template <typename Scalar>
const TensorT<Scalar>& VarT<Scalar>::grad() const {
    return tape->node(id).grad;
}

namespace detail {

template <typename Scalar>
TapeT<Scalar>& same_tape(const VarT<Scalar>& a, const VarT<Scalar>& b) {
    if (a.tape != b.tape || a.tape == nullptr) throw std::invalid_argument("diffkit: operands on different tapes");
    return *a.tape;
}

// Broadcast x (1x1, 1xn, mx1 or mxn) up to rows x cols.
template <typename Scalar>
TensorT<Scalar> broadcast(const TensorT<Scalar>& x, Eigen::Index rows, Eigen::Index cols) {
    if (x.rows() == rows && x.cols() == cols) return x;
    if (x.rows() == 1 && x.cols() == 1) return TensorT<Scalar>::Constant(rows, cols, x(0, 0));
    if (x.rows() == 1 && x.cols() == cols) return x.replicate(rows, 1);
    if (x.cols() == 1 && x.rows() == rows) return x.replicate(1, cols);
    throw std::invalid_argument("diffkit: shapes do not broadcast");
}

// x itself when it already has the target shape, otherwise its broadcast copy in storage.
template <typename Scalar>
const TensorT<Scalar>& broadcast_ref(const TensorT<Scalar>& x, Eigen::Index rows, Eigen::Index cols,
                                     TensorT<Scalar>& storage) {
    if (x.rows() == rows && x.cols() == cols) return x;
    storage = broadcast(x, rows, cols);
    return storage;
}

// Sum g back down to the shape of an operand that was broadcast.
template <typename Scalar>
TensorT<Scalar> reduce_to(const TensorT<Scalar>& g, Eigen::Index rows, Eigen::Index cols) {
    if (g.rows() == rows && g.cols() == cols) return g;
    if (rows == 1 && cols == 1) return TensorT<Scalar>::Constant(1, 1, g.sum());
    if (rows == 1) return g.colwise().sum();
    return g.rowwise().sum();
}

// Adds g to node id, summed down to that node's shape.
template <typename Scalar>
void accumulate_reduced(TapeT<Scalar>& tp, int id, const TensorT<Scalar>& g) {
    const auto& v = tp.node(id).value;
    if (v.rows() == g.rows() && v.cols() == g.cols())
        tp.accumulate(id, g);
    else
        tp.accumulate(id, reduce_to(g, v.rows(), v.cols()));
}

template <typename Scalar>
void accumulate_reduced(TapeT<Scalar>& tp, int id, TensorT<Scalar>&& g) {
    const auto& v = tp.node(id).value;
    if (v.rows() == g.rows() && v.cols() == g.cols())
        tp.accumulate(id, std::move(g));
    else
        tp.accumulate(id, reduce_to(g, v.rows(), v.cols()));
}

template <typename Scalar>
void out_shape(const TensorT<Scalar>& a, const TensorT<Scalar>& b, Eigen::Index& r, Eigen::Index& c) {
    r = std::max(a.rows(), b.rows());
    c = std::max(a.cols(), b.cols());
    auto ok = [&](const TensorT<Scalar>& x) {
        return (x.rows() == r || x.rows() == 1) && (x.cols() == c || x.cols() == 1);
    };
    if (!ok(a) || !ok(b)) throw std::invalid_argument("diffkit: shapes do not broadcast");
}

template <typename Scalar, typename Fwd, typename Deriv>
VarT<Scalar> unary(const VarT<Scalar>& a, Fwd fwd, Deriv deriv) {
    TapeT<Scalar>& t = *a.tape;
    const int ia = a.id;
    TensorT<Scalar> out = a.value().unaryExpr(fwd);
    return t.push(std::move(out), [ia, deriv](TapeT<Scalar>& tp, int self) {
        const auto& x = tp.node(ia).value;
        const auto& y = tp.node(self).value;
        TensorT<Scalar> g = tp.node(self).grad.cwiseProduct(x.binaryExpr(y, deriv));
        tp.accumulate(ia, std::move(g));
    });
}

}  // namespace detail

template <typename Scalar>
VarT<Scalar> matmul(const VarT<Scalar>& a, const VarT<Scalar>& b) {
    auto& t = detail::same_tape(a, b);
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    const int ia = a.id, ib = b.id;
    TensorT<Scalar> out(a.rows(), b.cols());
    out.noalias() = a.value() * b.value();
    return t.push(std::move(out), [ia, ib](TapeT<Scalar>& tp, int self) {
        const auto& g = tp.node(self).grad;
        TensorT<Scalar> ga(g.rows(), tp.node(ib).value.rows());
        ga.noalias() = g * tp.node(ib).value.transpose();
        TensorT<Scalar> gb(tp.node(ia).value.cols(), g.cols());
        gb.noalias() = tp.node(ia).value.transpose() * g;
        tp.accumulate(ia, std::move(ga));
        tp.accumulate(ib, std::move(gb));
    });
}

template <typename Scalar>
VarT<Scalar> add(const VarT<Scalar>& a, const VarT<Scalar>& b) {
    auto& t = detail::same_tape(a, b);
    Eigen::Index r, c;
    detail::out_shape(a.value(), b.value(), r, c);
    const int ia = a.id, ib = b.id;
    TensorT<Scalar> sa, sb;
    TensorT<Scalar> out = detail::broadcast_ref(a.value(), r, c, sa) + detail::broadcast_ref(b.value(), r, c, sb);
    return t.push(std::move(out), [ia, ib](TapeT<Scalar>& tp, int self) {
        const auto& g = tp.node(self).grad;
        detail::accumulate_reduced(tp, ia, g);
        detail::accumulate_reduced(tp, ib, g);
    });
}

template <typename Scalar>
VarT<Scalar> sub(const VarT<Scalar>& a, const VarT<Scalar>& b) {
    auto& t = detail::same_tape(a, b);
    Eigen::Index r, c;
    detail::out_shape(a.value(), b.value(), r, c);
    const int ia = a.id, ib = b.id;
    TensorT<Scalar> sa, sb;
    TensorT<Scalar> out = detail::broadcast_ref(a.value(), r, c, sa) - detail::broadcast_ref(b.value(), r, c, sb);
    return t.push(std::move(out), [ia, ib](TapeT<Scalar>& tp, int self) {
        const auto& g = tp.node(self).grad;
        detail::accumulate_reduced(tp, ia, g);
        detail::accumulate_reduced(tp, ib, TensorT<Scalar>(-g));
    });
}

// Element-wise product with broadcasting.
template <typename Scalar>
VarT<Scalar> mul(const VarT<Scalar>& a, const VarT<Scalar>& b) {
    auto& t = detail::same_tape(a, b);
    Eigen::Index r, c;
    detail::out_shape(a.value(), b.value(), r, c);
    const int ia = a.id, ib = b.id;
    TensorT<Scalar> sa, sb;
    TensorT<Scalar> out =
        detail::broadcast_ref(a.value(), r, c, sa).cwiseProduct(detail::broadcast_ref(b.value(), r, c, sb));
    return t.push(std::move(out), [ia, ib, r, c](TapeT<Scalar>& tp, int self) {
        const auto& g = tp.node(self).grad;
        TensorT<Scalar> sa, sb;
        const auto& ab = detail::broadcast_ref(tp.node(ia).value, r, c, sa);
        const auto& bb = detail::broadcast_ref(tp.node(ib).value, r, c, sb);
        detail::accumulate_reduced(tp, ia, TensorT<Scalar>(g.cwiseProduct(bb)));
        detail::accumulate_reduced(tp, ib, TensorT<Scalar>(g.cwiseProduct(ab)));
    });
}

// Element-wise quotient with broadcasting.
template <typename Scalar>
VarT<Scalar> div(const VarT<Scalar>& a, const VarT<Scalar>& b) {
    auto& t = detail::same_tape(a, b);
    Eigen::Index r, c;
    detail::out_shape(a.value(), b.value(), r, c);
    const int ia = a.id, ib = b.id;
    TensorT<Scalar> sa, sb;
    TensorT<Scalar> out =
        detail::broadcast_ref(a.value(), r, c, sa).cwiseQuotient(detail::broadcast_ref(b.value(), r, c, sb));
    return t.push(std::move(out), [ia, ib, r, c](TapeT<Scalar>& tp, int self) {
        const auto& g = tp.node(self).grad;
        TensorT<Scalar> sb;
        const auto& bb = detail::broadcast_ref(tp.node(ib).value, r, c, sb);
        const auto& y = tp.node(self).value;
        detail::accumulate_reduced(tp, ia, TensorT<Scalar>(g.cwiseQuotient(bb)));
        detail::accumulate_reduced(tp, ib, TensorT<Scalar>(-g.cwiseProduct(y).cwiseQuotient(bb)));
    });
}

template <typename Scalar>
VarT<Scalar> scale(const VarT<Scalar>& a, Scalar s) {
    auto& t = *a.tape;
    const int ia = a.id;
    return t.push(a.value() * s, [ia, s](TapeT<Scalar>& tp, int self) { tp.accumulate(ia, tp.node(self).grad * s); });
}

template <typename Scalar>
VarT<Scalar> add_scalar(const VarT<Scalar>& a, Scalar s) {
    auto& t = *a.tape;
    const int ia = a.id;
    TensorT<Scalar> out = a.value().array() + s;
    return t.push(std::move(out), [ia](TapeT<Scalar>& tp, int self) { tp.accumulate(ia, tp.node(self).grad); });
}

template <typename Scalar>
VarT<Scalar> sin(const VarT<Scalar>& a) {
    return detail::unary(a, [](Scalar x) { return std::sin(x); }, [](Scalar x, Scalar) { return std::cos(x); });
}

template <typename Scalar>
VarT<Scalar> cos(const VarT<Scalar>& a) {
    return detail::unary(a, [](Scalar x) { return std::cos(x); }, [](Scalar x, Scalar) { return -std::sin(x); });
}

template <typename Scalar>
VarT<Scalar> exp(const VarT<Scalar>& a) {
    return detail::unary(a, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; });
}

template <typename Scalar>
VarT<Scalar> log(const VarT<Scalar>& a) {
    return detail::unary(a, [](Scalar x) { return std::log(x); }, [](Scalar x, Scalar) { return Scalar(1) / x; });
}

template <typename Scalar>
VarT<Scalar> sqrt(const VarT<Scalar>& a) {
    return detail::unary(a, [](Scalar x) { return std::sqrt(x); },
                         [](Scalar, Scalar y) { return Scalar(0.5) / y; });
}

template <typename Scalar>
VarT<Scalar> tanh(const VarT<Scalar>& a) {
    return detail::unary(a, [](Scalar x) { return std::tanh(x); }, [](Scalar, Scalar y) { return 1 - y * y; });
}

template <typename Scalar>
VarT<Scalar> leaky_relu(const VarT<Scalar>& a, Scalar slope = Scalar(0.2)) {
    return detail::unary(a, [slope](Scalar x) { return x > 0 ? x : slope * x; },
                         [slope](Scalar x, Scalar) { return x > 0 ? Scalar(1) : slope; });
}

template <typename Scalar>
VarT<Scalar> sigmoid(const VarT<Scalar>& a) {
    return detail::unary(
        a,
        [](Scalar x) {
            if (x >= 0) return Scalar(1) / (1 + std::exp(-x));
            const Scalar e = std::exp(x);
            return e / (1 + e);
        },
        [](Scalar, Scalar y) { return y * (1 - y); });
}

template <typename Scalar>
VarT<Scalar> square(const VarT<Scalar>& a) {
    return detail::unary(a, [](Scalar x) { return x * x; }, [](Scalar x, Scalar) { return 2 * x; });
}

template <typename Scalar>
VarT<Scalar> sum(const VarT<Scalar>& a) {
    auto& t = *a.tape;
    const int ia = a.id;
    return t.push(TensorT<Scalar>::Constant(1, 1, a.value().sum()), [ia](TapeT<Scalar>& tp, int self) {
        const auto& v = tp.node(ia).value;
        tp.accumulate(ia, TensorT<Scalar>::Constant(v.rows(), v.cols(), tp.node(self).grad(0, 0)));
    });
}

template <typename Scalar>
VarT<Scalar> mean(const VarT<Scalar>& a) {
    const Scalar n = static_cast<Scalar>(a.value().size());
    if (n == 0) throw std::invalid_argument("mean: empty tensor");
    return scale(sum(a), Scalar(1) / n);
}

// Per-row sums: m x n -> m x 1.
template <typename Scalar>
VarT<Scalar> row_sum(const VarT<Scalar>& a) {
    auto& t = *a.tape;
    const int ia = a.id;
    return t.push(a.value().rowwise().sum(), [ia](TapeT<Scalar>& tp, int self) {
        tp.accumulate(ia, tp.node(self).grad.replicate(1, tp.node(ia).value.cols()));
    });
}

template <typename Scalar>
VarT<Scalar> concat_cols(const std::vector<VarT<Scalar>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: nothing to concatenate");
    auto& t = *parts.front().tape;
    const Eigen::Index r = parts.front().rows();
    Eigen::Index c = 0;
    std::vector<int> ids;
    std::vector<Eigen::Index> widths;
    for (const auto& p : parts) {
        if (p.tape != &t || p.rows() != r) throw std::invalid_argument("concat_cols: incompatible parts");
        ids.push_back(p.id);
        widths.push_back(p.cols());
        c += p.cols();
    }
    TensorT<Scalar> out(r, c);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        out.middleCols(off, p.cols()) = p.value();
        off += p.cols();
    }
    return t.push(std::move(out), [ids, widths](TapeT<Scalar>& tp, int self) {
        Eigen::Index o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            tp.accumulate(ids[k], tp.node(self).grad.middleCols(o, widths[k]));
            o += widths[k];
        }
    });
}

template <typename Scalar>
VarT<Scalar> slice_cols(const VarT<Scalar>& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
    auto& t = *a.tape;
    const int ia = a.id;
    return t.push(a.value().middleCols(start, count), [ia, start, count](TapeT<Scalar>& tp, int self) {
        const auto& v = tp.node(ia).value;
        TensorT<Scalar> g = TensorT<Scalar>::Zero(v.rows(), v.cols());
        g.middleCols(start, count) = tp.node(self).grad;
        tp.accumulate(ia, g);
    });
}

template <typename Scalar>
VarT<Scalar> slice_rows(const VarT<Scalar>& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw std::invalid_argument("slice_rows: out of range");
    auto& t = *a.tape;
    const int ia = a.id;
    return t.push(a.value().middleRows(start, count), [ia, start, count](TapeT<Scalar>& tp, int self) {
        const auto& v = tp.node(ia).value;
        TensorT<Scalar> g = TensorT<Scalar>::Zero(v.rows(), v.cols());
        g.middleRows(start, count) = tp.node(self).grad;
        tp.accumulate(ia, g);
    });
}

template <typename Scalar>
VarT<Scalar> transpose(const VarT<Scalar>& a) {
    auto& t = *a.tape;
    const int ia = a.id;
    return t.push(a.value().transpose(), [ia](TapeT<Scalar>& tp, int self) {
        tp.accumulate(ia, tp.node(self).grad.transpose());
    });
}

// Forward value `hard`, gradient routed unchanged to `soft`.
template <typename Scalar>
VarT<Scalar> straight_through(const VarT<Scalar>& soft, TensorT<Scalar> hard) {
    if (hard.rows() != soft.rows() || hard.cols() != soft.cols())
        throw std::invalid_argument("straight_through: shape mismatch");
    auto& t = *soft.tape;
    const int is = soft.id;
    return t.push(std::move(hard), [is](TapeT<Scalar>& tp, int self) { tp.accumulate(is, tp.node(self).grad); });
}

// x W + b with b a 1 x out row.
template <typename Scalar>
VarT<Scalar> affine(const VarT<Scalar>& x, const VarT<Scalar>& W, const VarT<Scalar>& b) {
    auto& t = detail::same_tape(x, W);
    if (b.tape != &t) throw std::invalid_argument("affine: operands on different tapes");
    if (x.cols() != W.rows()) throw std::invalid_argument("affine: inner dimensions differ");
    if (b.rows() != 1 || b.cols() != W.cols()) throw std::invalid_argument("affine: bias must be 1 x out");
    const int ix = x.id, iw = W.id, ib = b.id;
    TensorT<Scalar> out(x.rows(), W.cols());
    out.noalias() = x.value() * W.value();
    out.rowwise() += b.value().row(0);
    return t.push(std::move(out), [ix, iw, ib](TapeT<Scalar>& tp, int self) {
        const auto& g = tp.node(self).grad;
        TensorT<Scalar> gx(g.rows(), tp.node(iw).value.rows());
        gx.noalias() = g * tp.node(iw).value.transpose();
        TensorT<Scalar> gw(tp.node(ix).value.cols(), g.cols());
        gw.noalias() = tp.node(ix).value.transpose() * g;
        tp.accumulate(ib, TensorT<Scalar>(g.colwise().sum()));
        tp.accumulate(iw, std::move(gw));
        tp.accumulate(ix, std::move(gx));
    });
}

// Relaxed Bernoulli sample: sigmoid((logits + logistic noise) / temperature), thresholded at 1/2
// in the forward pass with straight-through gradients.
template <typename Scalar, typename Rng>
VarT<Scalar> gumbel_sigmoid(const VarT<Scalar>& logits, Scalar temperature, Rng& rng) {
    if (!(temperature > 0)) throw std::invalid_argument("gumbel_sigmoid: temperature must be positive");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    TensorT<Scalar> noise(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < noise.cols(); ++j)
        for (Eigen::Index i = 0; i < noise.rows(); ++i) {
            double u = unif(rng);
            u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
            noise(i, j) = static_cast<Scalar>(std::log(u) - std::log1p(-u));
        }
    auto& t = *logits.tape;
    VarT<Scalar> soft = sigmoid(scale(add(logits, t.constant(noise)), Scalar(1) / temperature));
    TensorT<Scalar> hard = soft.value().unaryExpr([](Scalar v) { return v > Scalar(0.5) ? Scalar(1) : Scalar(0); });
    return straight_through(soft, std::move(hard));
}

template <typename Scalar>
struct AdamStateT {
    std::vector<TensorT<Scalar>> m, v;
    long step = 0;
};

template <typename Scalar>
void zero_grad(const std::vector<ParameterT<Scalar>*>& params) {
    for (auto* p : params) p->zero_grad();
}

template <typename Scalar>
void adam_step(const std::vector<ParameterT<Scalar>*>& params, AdamStateT<Scalar>& state, Scalar lr,
               Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999), Scalar eps = Scalar(1e-8)) {
    if (state.m.empty()) {
        for (auto* p : params) {
            state.m.push_back(TensorT<Scalar>::Zero(p->value.rows(), p->value.cols()));
            state.v.push_back(TensorT<Scalar>::Zero(p->value.rows(), p->value.cols()));
        }
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameters");
    ++state.step;
    const Scalar c1 = 1 - std::pow(beta1, static_cast<Scalar>(state.step));
    const Scalar c2 = 1 - std::pow(beta2, static_cast<Scalar>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        if (state.m[k].rows() != p.value.rows() || state.m[k].cols() != p.value.cols())
            throw std::invalid_argument("adam_step: state shape mismatch for " + p.name);
        const TensorT<Scalar> g = p.grad.size() ? p.grad : TensorT<Scalar>::Zero(p.value.rows(), p.value.cols());
        state.m[k] = beta1 * state.m[k] + (1 - beta1) * g;
        state.v[k] = beta2 * state.v[k] + (1 - beta2) * g.cwiseAbs2();
        const auto mhat = state.m[k].array() / c1;
        const auto vhat = state.v[k].array() / c2;
        p.value.array() -= lr * mhat / (vhat.sqrt() + eps);
    }
}

// Max relative error between reverse-mode gradients and central differences of the scalar
// produced by build(tape). Relative error uses max(|analytic|, |numeric|, floor) as denominator.
template <typename Scalar, typename Build>
Scalar gradcheck(Build build, const std::vector<ParameterT<Scalar>*>& params, Scalar h = Scalar(1e-5),
                 Scalar floor = Scalar(1e-6)) {
    zero_grad(params);
    {
        TapeT<Scalar> tape;
        auto loss = build(tape);
        tape.backward(loss);
    }
    Scalar worst = 0;
    for (auto* p : params) {
        const TensorT<Scalar> analytic = p->grad;
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            const Scalar keep = p->value.data()[i];
            p->value.data()[i] = keep + h;
            TapeT<Scalar> tp;
            const Scalar fp = build(tp).scalar();
            p->value.data()[i] = keep - h;
            TapeT<Scalar> tm;
            const Scalar fm = build(tm).scalar();
            p->value.data()[i] = keep;
            const Scalar numeric = (fp - fm) / (2 * h);
            const Scalar a = analytic.data()[i];
            const Scalar denom = std::max({std::abs(a), std::abs(numeric), floor});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

using Tensor = TensorT<double>;
using Parameter = ParameterT<double>;
using Tape = TapeT<double>;
using Var = VarT<double>;
using AdamState = AdamStateT<double>;

}  // namespace mechsparse::diffkit
