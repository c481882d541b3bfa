#include "fcac/autodiff.hpp"

#include <cmath>
#include <limits>

namespace fcac::ad {

const Matrix& Var::value() const
{
    return tape_->value(id_);
}

Matrix Var::grad() const
{
    const auto& g = tape_->grad_of(id_);
    if (g.size() == 0) return Matrix::Zero(rows(), cols());
    return g;
}

Var Tape::constant(Matrix value)
{
    nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& p, bool trainable)
{
    nodes_.push_back(Node{p.value, {}, {}, {}, trainable ? &p : nullptr, trainable});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::vector<int> parents, Backward backward)
{
    bool needs = false;
    for (int p : parents) needs = needs || nodes_[static_cast<std::size_t>(p)].needs_grad;
    nodes_.push_back(Node{std::move(value), {}, std::move(parents),
                          needs ? std::move(backward) : Backward{}, nullptr, needs});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Var& scalar)
{
    if (scalar.tape() != this || scalar.rows() != 1 || scalar.cols() != 1)
        throw ModelError("backward() requires a 1x1 Var recorded on this tape");
    accumulate(scalar.id(), Matrix::Ones(1, 1));
    for (int id = scalar.id(); id >= 0; --id) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.backward) n.backward(*this, id);
        if (n.param) {
            if (n.param->grad.size() == 0)
                n.param->grad = n.grad;
            else
                n.param->grad += n.grad;
        }
    }
}

namespace {

Tape& same_tape(const Var& a, const Var& b)
{
    if (!a.valid() || a.tape() != b.tape()) throw ModelError("Vars belong to different tapes");
    return *a.tape();
}

void require_shape(bool ok, const char* what)
{
    if (!ok) throw ModelError(std::string("shape mismatch in ") + what);
}

} // namespace

Var matmul(const Var& a, const Var& b)
{
    Tape& t = same_tape(a, b);
    require_shape(a.cols() == b.rows(), "matmul");
    const int ia = a.id(), ib = b.id();
    return t.record(a.value() * b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
        if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
    });
}

Var matmul_nt(const Var& a, const Var& b)
{
    Tape& t = same_tape(a, b);
    require_shape(a.cols() == b.cols(), "matmul_nt");
    const int ia = a.id(), ib = b.id();
    return t.record(a.value() * b.value().transpose(), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib));
        if (t.needs_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
    });
}

Var add(const Var& a, const Var& b)
{
    Tape& t = same_tape(a, b);
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
    const int ia = a.id(), ib = b.id();
    return t.record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
        t.accumulate(ia, t.grad_of(self));
        t.accumulate(ib, t.grad_of(self));
    });
}

Var add_row(const Var& a, const Var& row)
{
    Tape& t = same_tape(a, row);
    require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row");
    const int ia = a.id(), ir = row.id();
    Matrix out = a.value().rowwise() + row.value().row(0);
    return t.record(std::move(out), {ia, ir}, [ia, ir](Tape& t, int self) {
        t.accumulate(ia, t.grad_of(self));
        if (t.needs_grad(ir)) t.accumulate(ir, t.grad_of(self).colwise().sum());
    });
}

Var scale(const Var& a, double s)
{
    const int ia = a.id();
    return a.tape()->record(a.value() * s, {ia},
                            [ia, s](Tape& t, int self) { t.accumulate(ia, t.grad_of(self) * s); });
}

Var relu(const Var& a)
{
    const int ia = a.id();
    return a.tape()->record(a.value().cwiseMax(0.0), {ia}, [ia](Tape& t, int self) {
        const Matrix& x = t.value(ia);
        t.accumulate(ia, (x.array() > 0.0).select(t.grad_of(self), 0.0));
    });
}

Var mask(const Var& a, const Matrix& m)
{
    require_shape(a.rows() == m.rows() && a.cols() == m.cols(), "mask");
    const int ia = a.id();
    return a.tape()->record(a.value().cwiseProduct(m), {ia}, [ia, m](Tape& t, int self) {
        t.accumulate(ia, t.grad_of(self).cwiseProduct(m));
    });
}

Var gather_rows(const Var& a, const std::vector<int>& rows)
{
    const int ia = a.id();
    Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require_shape(rows[i] >= 0 && rows[i] < a.rows(), "gather_rows");
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
    }
    return a.tape()->record(std::move(out), {ia}, [ia, rows](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        Matrix d = Matrix::Zero(t.value(ia).rows(), t.value(ia).cols());
        for (std::size_t i = 0; i < rows.size(); ++i) d.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
        t.accumulate(ia, d);
    });
}

Var concat_rows(const Var& a, const Var& b)
{
    Tape& t = same_tape(a, b);
    require_shape(a.cols() == b.cols(), "concat_rows");
    const int ia = a.id(), ib = b.id();
    const Eigen::Index ra = a.rows(), rb = b.rows();
    Matrix out(ra + rb, a.cols());
    out << a.value(), b.value();
    return t.record(std::move(out), {ia, ib}, [ia, ib, ra, rb](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        if (t.needs_grad(ia)) t.accumulate(ia, g.topRows(ra));
        if (t.needs_grad(ib)) t.accumulate(ib, g.bottomRows(rb));
    });
}

Var pairwise_sum(const Var& a, const Var& c)
{
    Tape& t = same_tape(a, c);
    require_shape(a.cols() == c.cols(), "pairwise_sum");
    const int ia = a.id(), ic = c.id();
    const Eigen::Index nb = a.rows(), nc = c.rows();
    Matrix out(nb * nc, a.cols());
    for (Eigen::Index b = 0; b < nb; ++b)
        out.middleRows(b * nc, nc) = c.value().rowwise() + a.value().row(b);
    return t.record(std::move(out), {ia, ic}, [ia, ic, nb, nc](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        if (t.needs_grad(ia)) {
            Matrix d(nb, g.cols());
            for (Eigen::Index b = 0; b < nb; ++b) d.row(b) = g.middleRows(b * nc, nc).colwise().sum();
            t.accumulate(ia, d);
        }
        if (t.needs_grad(ic)) {
            Matrix d = Matrix::Zero(nc, g.cols());
            for (Eigen::Index b = 0; b < nb; ++b) d += g.middleRows(b * nc, nc);
            t.accumulate(ic, d);
        }
    });
}

Var unflatten(const Var& a, Eigen::Index rows, Eigen::Index cols)
{
    require_shape(a.cols() == 1 && a.rows() == rows * cols, "unflatten");
    const int ia = a.id();
    Matrix out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = a.value()(r * cols + c, 0);
    return a.tape()->record(std::move(out), {ia}, [ia, rows, cols](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        Matrix d(rows * cols, 1);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) d(r * cols + c, 0) = g(r, c);
        t.accumulate(ia, d);
    });
}

namespace {

Matrix softmax_rows(const Matrix& x)
{
    Matrix s = x.colwise() - x.rowwise().maxCoeff();
    s = s.array().exp();
    return s.array().colwise() / s.rowwise().sum().array();
}

} // namespace

Var row_softmax(const Var& a)
{
    const int ia = a.id();
    Matrix s = softmax_rows(a.value());
    return a.tape()->record(s, {ia}, [ia](Tape& t, int self) {
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad_of(self);
        Vector dot = g.cwiseProduct(y).rowwise().sum();
        t.accumulate(ia, y.cwiseProduct(g.colwise() - dot));
    });
}

Var cross_entropy(const Var& logits, const std::vector<int>& targets)
{
    const Matrix& x = logits.value();
    require_shape(static_cast<Eigen::Index>(targets.size()) == x.rows() && x.rows() > 0, "cross_entropy");
    Matrix probs = softmax_rows(x);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int k = targets[static_cast<std::size_t>(i)];
        require_shape(k >= 0 && k < x.cols(), "cross_entropy target");
        const double m = x.row(i).maxCoeff();
        const double lse = m + std::log((x.row(i).array() - m).exp().sum());
        loss += lse - x(i, k);
    }
    const double n = static_cast<double>(x.rows());
    const int il = logits.id();
    return logits.tape()->record(Matrix::Constant(1, 1, loss / n), {il},
                                 [il, probs, targets, n](Tape& t, int self) {
                                     Matrix d = probs;
                                     for (std::size_t i = 0; i < targets.size(); ++i)
                                         d(static_cast<Eigen::Index>(i), targets[i]) -= 1.0;
                                     t.accumulate(il, d * (t.grad_of(self)(0, 0) / n));
                                 });
}

Var sum(const std::vector<Var>& terms)
{
    if (terms.empty()) throw ModelError("sum of no terms");
    Var acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps,
                     RowVector* batch_mean, RowVector* batch_var)
{
    Tape& t = same_tape(x, gamma);
    require_shape(gamma.rows() == 1 && gamma.cols() == x.cols() && beta.cols() == x.cols(),
                  "batch_norm_train");
    const Matrix& v = x.value();
    const double n = static_cast<double>(v.rows());
    RowVector mean = v.colwise().mean();
    Matrix centered = v.rowwise() - mean;
    RowVector var = centered.cwiseAbs2().colwise().sum() / n;
    RowVector inv_std = (var.array() + eps).rsqrt();
    Matrix xhat = centered.array().rowwise() * inv_std.array();
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
                 beta.value().row(0).array();
    if (batch_mean) *batch_mean = mean;
    if (batch_var) *batch_var = var;
    const int ix = x.id(), ig = gamma.id(), ib = beta.id();
    return t.record(std::move(out), {ix, ig, ib},
                    [ix, ig, ib, xhat, inv_std, n](Tape& t, int self) {
                        const Matrix& g = t.grad_of(self);
                        if (t.needs_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                        if (t.needs_grad(ib)) t.accumulate(ib, g.colwise().sum());
                        if (t.needs_grad(ix)) {
                            Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                            RowVector s1 = dxhat.colwise().sum();
                            RowVector s2 = dxhat.cwiseProduct(xhat).colwise().sum();
                            Matrix dx = ((dxhat * n).rowwise() - s1) - (xhat.array().rowwise() * s2.array()).matrix();
                            dx = dx.array().rowwise() * (inv_std.array() / n);
                            t.accumulate(ix, dx);
                        }
                    });
}

Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta, const RowVector& mean,
                    const RowVector& var, double eps)
{
    Tape& t = same_tape(x, gamma);
    require_shape(gamma.cols() == x.cols() && mean.cols() == x.cols() && var.cols() == x.cols(),
                  "batch_norm_eval");
    RowVector inv_std = (var.array() + eps).rsqrt();
    Matrix xhat = (x.value().rowwise() - mean).array().rowwise() * inv_std.array();
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
                 beta.value().row(0).array();
    const int ix = x.id(), ig = gamma.id(), ib = beta.id();
    return t.record(std::move(out), {ix, ig, ib}, [ix, ig, ib, xhat, inv_std](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        if (t.needs_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
        if (t.needs_grad(ib)) t.accumulate(ib, g.colwise().sum());
        if (t.needs_grad(ix))
            t.accumulate(ix, (g.array().rowwise() * (t.value(ig).row(0).array() * inv_std.array())).matrix());
    });
}

Var im2col3x3(const Var& x, const MapShape& s)
{
    require_shape(x.rows() == s.pixels(), "im2col3x3");
    const Eigen::Index c = x.cols();
    const Matrix& v = x.value();
    Matrix out = Matrix::Zero(s.pixels(), 9 * c);
    for (Eigen::Index b = 0; b < s.batch; ++b)
        for (Eigen::Index y = 0; y < s.height; ++y)
            for (Eigen::Index xx = 0; xx < s.width; ++xx) {
                const Eigen::Index row = (b * s.height + y) * s.width + xx;
                for (int ky = -1; ky <= 1; ++ky)
                    for (int kx = -1; kx <= 1; ++kx) {
                        const Eigen::Index sy = y + ky, sx = xx + kx;
                        if (sy < 0 || sy >= s.height || sx < 0 || sx >= s.width) continue;
                        const Eigen::Index src = (b * s.height + sy) * s.width + sx;
                        out.block(row, ((ky + 1) * 3 + (kx + 1)) * c, 1, c) = v.row(src);
                    }
            }
    const int ix = x.id();
    return x.tape()->record(std::move(out), {ix}, [ix, s, c](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        Matrix d = Matrix::Zero(s.pixels(), c);
        for (Eigen::Index b = 0; b < s.batch; ++b)
            for (Eigen::Index y = 0; y < s.height; ++y)
                for (Eigen::Index xx = 0; xx < s.width; ++xx) {
                    const Eigen::Index row = (b * s.height + y) * s.width + xx;
                    for (int ky = -1; ky <= 1; ++ky)
                        for (int kx = -1; kx <= 1; ++kx) {
                            const Eigen::Index sy = y + ky, sx = xx + kx;
                            if (sy < 0 || sy >= s.height || sx < 0 || sx >= s.width) continue;
                            const Eigen::Index src = (b * s.height + sy) * s.width + sx;
                            d.row(src) += g.block(row, ((ky + 1) * 3 + (kx + 1)) * c, 1, c);
                        }
                }
        t.accumulate(ix, d);
    });
}

MapShape pooled(const MapShape& s)
{
    return {s.batch, s.height / 2, s.width / 2};
}

Var max_pool2(const Var& x, const MapShape& s)
{
    require_shape(x.rows() == s.pixels(), "max_pool2");
    const MapShape o = pooled(s);
    require_shape(o.height >= 1 && o.width >= 1, "max_pool2 extent");
    const Eigen::Index c = x.cols();
    const Matrix& v = x.value();
    Matrix out(o.pixels(), c);
    std::vector<Eigen::Index> argmax(static_cast<std::size_t>(o.pixels() * c));
    for (Eigen::Index b = 0; b < s.batch; ++b)
        for (Eigen::Index y = 0; y < o.height; ++y)
            for (Eigen::Index xx = 0; xx < o.width; ++xx) {
                const Eigen::Index orow = (b * o.height + y) * o.width + xx;
                for (Eigen::Index ch = 0; ch < c; ++ch) {
                    double best = -std::numeric_limits<double>::infinity();
                    Eigen::Index arg = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const Eigen::Index src = (b * s.height + 2 * y + dy) * s.width + 2 * xx + dx;
                            if (v(src, ch) > best) {
                                best = v(src, ch);
                                arg = src;
                            }
                        }
                    out(orow, ch) = best;
                    argmax[static_cast<std::size_t>(orow * c + ch)] = arg;
                }
            }
    const int ix = x.id();
    const Eigen::Index in_rows = s.pixels();
    return x.tape()->record(std::move(out), {ix}, [ix, argmax = std::move(argmax), c, in_rows](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        Matrix d = Matrix::Zero(in_rows, c);
        for (Eigen::Index r = 0; r < g.rows(); ++r)
            for (Eigen::Index ch = 0; ch < c; ++ch) d(argmax[static_cast<std::size_t>(r * c + ch)], ch) += g(r, ch);
        t.accumulate(ix, d);
    });
}

Var global_avg_pool(const Var& x, const MapShape& s)
{
    require_shape(x.rows() == s.pixels(), "global_avg_pool");
    const Eigen::Index hw = s.height * s.width;
    Matrix out(s.batch, x.cols());
    for (Eigen::Index b = 0; b < s.batch; ++b) out.row(b) = x.value().middleRows(b * hw, hw).colwise().mean();
    const int ix = x.id();
    return x.tape()->record(std::move(out), {ix}, [ix, s, hw](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        Matrix d(s.pixels(), g.cols());
        for (Eigen::Index b = 0; b < s.batch; ++b)
            d.middleRows(b * hw, hw) = g.row(b).replicate(hw, 1) / static_cast<double>(hw);
        t.accumulate(ix, d);
    });
}

} // namespace fcac::ad
