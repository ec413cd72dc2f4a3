#include "tape.hpp"

#include <cmath>
#include <stdexcept>

namespace pmad {

Tape::Id Tape::push(Matrix val, bool needs_grad, std::vector<Id> parents,
                    std::function<void(Tape&, const Node&)> back) {
    Node n;
    n.val = std::move(val);
    n.needs_grad = needs_grad;
    n.parents = std::move(parents);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

bool Tape::any_needs_grad(const std::vector<Id>& ids) const {
    for (Id id : ids)
        if (nodes_[id].needs_grad) return true;
    return false;
}

Tape::Id Tape::input(Matrix v) { return push(std::move(v), true, {}, nullptr); }
Tape::Id Tape::constant(Matrix v) { return push(std::move(v), false, {}, nullptr); }

const Matrix& Tape::grad(Id id) const {
    const Node& n = nodes_[id];
    if (n.grad.rows == 0 && n.val.rows != 0)
        throw std::runtime_error("Tape::grad: backward has not reached this node");
    return n.grad;
}

static void accumulate(Matrix& dst, const Matrix& src) { add_in_place(dst, src); }

Tape::Id Tape::add(Id a, Id b) {
    return push(pmad::add(value(a), value(b)), any_needs_grad({a, b}), {a, b},
                [](Tape& t, const Node& n) {
                    if (t.nodes_[n.parents[0]].needs_grad) accumulate(t.grad_ref(n.parents[0]), n.grad);
                    if (t.nodes_[n.parents[1]].needs_grad) accumulate(t.grad_ref(n.parents[1]), n.grad);
                });
}

Tape::Id Tape::sub(Id a, Id b) {
    return push(pmad::sub(value(a), value(b)), any_needs_grad({a, b}), {a, b},
                [](Tape& t, const Node& n) {
                    if (t.nodes_[n.parents[0]].needs_grad) accumulate(t.grad_ref(n.parents[0]), n.grad);
                    if (t.nodes_[n.parents[1]].needs_grad)
                        accumulate(t.grad_ref(n.parents[1]), pmad::scale(n.grad, -1.0));
                });
}

Tape::Id Tape::hadamard(Id a, Id b) {
    return push(pmad::hadamard(value(a), value(b)), any_needs_grad({a, b}), {a, b},
                [](Tape& t, const Node& n) {
                    if (t.nodes_[n.parents[0]].needs_grad)
                        accumulate(t.grad_ref(n.parents[0]),
                                   pmad::hadamard(n.grad, t.value(n.parents[1])));
                    if (t.nodes_[n.parents[1]].needs_grad)
                        accumulate(t.grad_ref(n.parents[1]),
                                   pmad::hadamard(n.grad, t.value(n.parents[0])));
                });
}

Tape::Id Tape::scale(Id a, double c) {
    return push(pmad::scale(value(a), c), any_needs_grad({a}), {a},
                [c](Tape& t, const Node& n) {
                    if (t.nodes_[n.parents[0]].needs_grad)
                        accumulate(t.grad_ref(n.parents[0]), pmad::scale(n.grad, c));
                });
}

Tape::Id Tape::matmul(Id a, Id b) {
    return push(pmad::matmul(value(a), value(b)), any_needs_grad({a, b}), {a, b},
                [](Tape& t, const Node& n) {
                    if (t.nodes_[n.parents[0]].needs_grad)
                        accumulate(t.grad_ref(n.parents[0]),
                                   pmad::matmul_nt(n.grad, t.value(n.parents[1])));
                    if (t.nodes_[n.parents[1]].needs_grad)
                        accumulate(t.grad_ref(n.parents[1]),
                                   pmad::matmul_tn(t.value(n.parents[0]), n.grad));
                });
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
    return push(pmad::matmul_nt(value(a), value(b)), any_needs_grad({a, b}), {a, b},
                [](Tape& t, const Node& n) {
                    if (t.nodes_[n.parents[0]].needs_grad)
                        accumulate(t.grad_ref(n.parents[0]),
                                   pmad::matmul(n.grad, t.value(n.parents[1])));
                    if (t.nodes_[n.parents[1]].needs_grad)
                        accumulate(t.grad_ref(n.parents[1]),
                                   pmad::matmul_tn(n.grad, t.value(n.parents[0])));
                });
}

Tape::Id Tape::add_row(Id a, Id bias) {
    const Matrix& av = value(a);
    const Matrix& bv = value(bias);
    if (bv.rows != 1 || bv.cols != av.cols)
        throw std::invalid_argument("add_row: bias must be 1 x cols");
    Matrix out = av;
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) += bv.at(0, c);
    return push(std::move(out), any_needs_grad({a, bias}), {a, bias},
                [](Tape& t, const Node& n) {
                    if (t.nodes_[n.parents[0]].needs_grad) accumulate(t.grad_ref(n.parents[0]), n.grad);
                    if (t.nodes_[n.parents[1]].needs_grad) {
                        Matrix colsum(1, n.grad.cols);
                        for (int r = 0; r < n.grad.rows; ++r)
                            for (int c = 0; c < n.grad.cols; ++c) colsum.at(0, c) += n.grad.at(r, c);
                        accumulate(t.grad_ref(n.parents[1]), colsum);
                    }
                });
}

Tape::Id Tape::row_softmax(Id a, double tau) {
    return push(pmad::row_softmax(value(a), tau), any_needs_grad({a}), {a},
                [tau](Tape& t, const Node& n) {
                    if (!t.nodes_[n.parents[0]].needs_grad) return;
                    const Matrix& s = n.val;
                    Matrix da(s.rows, s.cols);
                    for (int r = 0; r < s.rows; ++r) {
                        double dot = 0.0;
                        for (int c = 0; c < s.cols; ++c) dot += n.grad.at(r, c) * s.at(r, c);
                        for (int c = 0; c < s.cols; ++c)
                            da.at(r, c) = s.at(r, c) * (n.grad.at(r, c) - dot) / tau;
                    }
                    accumulate(t.grad_ref(n.parents[0]), da);
                });
}

Tape::Id Tape::sigmoid(Id a) {
    return push(pmad::sigmoid(value(a)), any_needs_grad({a}), {a},
                [](Tape& t, const Node& n) {
                    if (!t.nodes_[n.parents[0]].needs_grad) return;
                    Matrix da(n.val.rows, n.val.cols);
                    for (size_t i = 0; i < n.val.data.size(); ++i) {
                        const double s = n.val.data[i];
                        da.data[i] = n.grad.data[i] * s * (1.0 - s);
                    }
                    accumulate(t.grad_ref(n.parents[0]), da);
                });
}

Tape::Id Tape::gelu(Id a) {
    return push(pmad::gelu(value(a)), any_needs_grad({a}), {a},
                [](Tape& t, const Node& n) {
                    if (!t.nodes_[n.parents[0]].needs_grad) return;
                    const Matrix& x = t.value(n.parents[0]);
                    constexpr double inv_sqrt2 = 0.7071067811865475244;
                    constexpr double inv_sqrt2pi = 0.3989422804014326779;
                    Matrix da(x.rows, x.cols);
                    for (size_t i = 0; i < x.data.size(); ++i) {
                        const double v = x.data[i];
                        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                        da.data[i] = n.grad.data[i] * (cdf + v * pdf);
                    }
                    accumulate(t.grad_ref(n.parents[0]), da);
                });
}

Tape::Id Tape::l2_normalize_rows(Id a, double eps) {
    return push(pmad::l2_normalize_rows(value(a), eps), any_needs_grad({a}), {a},
                [eps](Tape& t, const Node& n) {
                    if (!t.nodes_[n.parents[0]].needs_grad) return;
                    const Matrix& x = t.value(n.parents[0]);
                    const Matrix& y = n.val;
                    Matrix da(x.rows, x.cols);
                    for (int r = 0; r < x.rows; ++r) {
                        double norm_sq = 0.0;
                        for (int c = 0; c < x.cols; ++c) norm_sq += x.at(r, c) * x.at(r, c);
                        const double norm = std::sqrt(norm_sq);
                        if (norm >= eps) {
                            double dot = 0.0;
                            for (int c = 0; c < x.cols; ++c) dot += n.grad.at(r, c) * y.at(r, c);
                            for (int c = 0; c < x.cols; ++c)
                                da.at(r, c) = (n.grad.at(r, c) - dot * y.at(r, c)) / norm;
                        } else {
                            // Below the guard the map is x / eps, plain linear.
                            for (int c = 0; c < x.cols; ++c) da.at(r, c) = n.grad.at(r, c) / eps;
                        }
                    }
                    accumulate(t.grad_ref(n.parents[0]), da);
                });
}

Tape::Id Tape::layer_norm_rows(Id x, Id gamma, Id beta, double eps) {
    const Matrix& xv = value(x);
    const Matrix& gv = value(gamma);
    const Matrix& bv = value(beta);
    if (gv.rows != 1 || gv.cols != xv.cols || bv.rows != 1 || bv.cols != xv.cols)
        throw std::invalid_argument("layer_norm_rows: gamma/beta must be 1 x cols");
    const int C = xv.cols;
    Matrix out(xv.rows, C);
    for (int r = 0; r < xv.rows; ++r) {
        double mean = 0.0;
        for (int c = 0; c < C; ++c) mean += xv.at(r, c);
        mean /= C;
        double var = 0.0;
        for (int c = 0; c < C; ++c) {
            const double d = xv.at(r, c) - mean;
            var += d * d;
        }
        var /= C;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int c = 0; c < C; ++c)
            out.at(r, c) = gv.at(0, c) * (xv.at(r, c) - mean) * inv + bv.at(0, c);
    }
    return push(std::move(out), any_needs_grad({x, gamma, beta}), {x, gamma, beta},
                [eps](Tape& t, const Node& n) {
                    const Matrix& xv = t.value(n.parents[0]);
                    const Matrix& gv = t.value(n.parents[1]);
                    const int C = xv.cols;
                    Matrix dx(xv.rows, C), dg(1, C), db(1, C);
                    for (int r = 0; r < xv.rows; ++r) {
                        double mean = 0.0;
                        for (int c = 0; c < C; ++c) mean += xv.at(r, c);
                        mean /= C;
                        double var = 0.0;
                        for (int c = 0; c < C; ++c) {
                            const double d = xv.at(r, c) - mean;
                            var += d * d;
                        }
                        var /= C;
                        const double inv = 1.0 / std::sqrt(var + eps);
                        // xhat, then the two row means the gradient needs
                        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                        std::vector<double> xhat(C), dxhat(C);
                        for (int c = 0; c < C; ++c) {
                            xhat[c] = (xv.at(r, c) - mean) * inv;
                            dxhat[c] = n.grad.at(r, c) * gv.at(0, c);
                            mean_dxhat += dxhat[c];
                            mean_dxhat_xhat += dxhat[c] * xhat[c];
                            dg.at(0, c) += n.grad.at(r, c) * xhat[c];
                            db.at(0, c) += n.grad.at(r, c);
                        }
                        mean_dxhat /= C;
                        mean_dxhat_xhat /= C;
                        for (int c = 0; c < C; ++c)
                            dx.at(r, c) = inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                    }
                    if (t.nodes_[n.parents[0]].needs_grad) accumulate(t.grad_ref(n.parents[0]), dx);
                    if (t.nodes_[n.parents[1]].needs_grad) accumulate(t.grad_ref(n.parents[1]), dg);
                    if (t.nodes_[n.parents[2]].needs_grad) accumulate(t.grad_ref(n.parents[2]), db);
                });
}

Tape::Id Tape::concat_cols(Id a, Id b) {
    const int ac = value(a).cols;
    return push(pmad::concat_cols(value(a), value(b)), any_needs_grad({a, b}), {a, b},
                [ac](Tape& t, const Node& n) {
                    if (t.nodes_[n.parents[0]].needs_grad)
                        accumulate(t.grad_ref(n.parents[0]), pmad::slice_cols(n.grad, 0, ac));
                    if (t.nodes_[n.parents[1]].needs_grad)
                        accumulate(t.grad_ref(n.parents[1]),
                                   pmad::slice_cols(n.grad, ac, n.grad.cols - ac));
                });
}

Tape::Id Tape::slice_rows(Id a, int r0, int n_rows) {
    return push(pmad::slice_rows(value(a), r0, n_rows), any_needs_grad({a}), {a},
                [r0](Tape& t, const Node& n) {
                    if (!t.nodes_[n.parents[0]].needs_grad) return;
                    Matrix& da = t.grad_ref(n.parents[0]);
                    for (int r = 0; r < n.grad.rows; ++r)
                        for (int c = 0; c < n.grad.cols; ++c) da.at(r0 + r, c) += n.grad.at(r, c);
                });
}

Tape::Id Tape::slice_cols(Id a, int c0, int n_cols) {
    return push(pmad::slice_cols(value(a), c0, n_cols), any_needs_grad({a}), {a},
                [c0](Tape& t, const Node& n) {
                    if (!t.nodes_[n.parents[0]].needs_grad) return;
                    Matrix& da = t.grad_ref(n.parents[0]);
                    for (int r = 0; r < n.grad.rows; ++r)
                        for (int c = 0; c < n.grad.cols; ++c) da.at(r, c0 + c) += n.grad.at(r, c);
                });
}

Tape::Id Tape::concat_scalars(const std::vector<Id>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_scalars: empty list");
    Matrix out(1, static_cast<int>(xs.size()));
    for (size_t i = 0; i < xs.size(); ++i) {
        const Matrix& v = value(xs[i]);
        if (v.rows != 1 || v.cols != 1)
            throw std::invalid_argument("concat_scalars: entries must be 1 x 1");
        out.at(0, static_cast<int>(i)) = v.at(0, 0);
    }
    return push(std::move(out), any_needs_grad(xs), xs,
                [](Tape& t, const Node& n) {
                    for (size_t i = 0; i < n.parents.size(); ++i) {
                        if (!t.nodes_[n.parents[i]].needs_grad) continue;
                        Matrix g(1, 1);
                        g.at(0, 0) = n.grad.at(0, static_cast<int>(i));
                        accumulate(t.grad_ref(n.parents[i]), g);
                    }
                });
}

Tape::Id Tape::scale_by(Id a, Id s) {
    const Matrix& sv = value(s);
    if (sv.rows != 1 || sv.cols != 1) throw std::invalid_argument("scale_by: scalar must be 1 x 1");
    return push(pmad::scale(value(a), sv.at(0, 0)), any_needs_grad({a, s}), {a, s},
                [](Tape& t, const Node& n) {
                    const double s = t.value(n.parents[1]).at(0, 0);
                    if (t.nodes_[n.parents[0]].needs_grad)
                        accumulate(t.grad_ref(n.parents[0]), pmad::scale(n.grad, s));
                    if (t.nodes_[n.parents[1]].needs_grad) {
                        const Matrix& av = t.value(n.parents[0]);
                        double acc = 0.0;
                        for (size_t i = 0; i < av.data.size(); ++i) acc += n.grad.data[i] * av.data[i];
                        Matrix ds(1, 1);
                        ds.at(0, 0) = acc;
                        accumulate(t.grad_ref(n.parents[1]), ds);
                    }
                });
}

Tape::Id Tape::dot_all(Id a, Id b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("dot_all: shape mismatch");
    Matrix out(1, 1);
    double acc = 0.0;
    for (size_t i = 0; i < av.data.size(); ++i) acc += av.data[i] * bv.data[i];
    out.at(0, 0) = acc;
    return push(std::move(out), any_needs_grad({a, b}), {a, b},
                [](Tape& t, const Node& n) {
                    const double g = n.grad.at(0, 0);
                    if (t.nodes_[n.parents[0]].needs_grad)
                        accumulate(t.grad_ref(n.parents[0]), pmad::scale(t.value(n.parents[1]), g));
                    if (t.nodes_[n.parents[1]].needs_grad)
                        accumulate(t.grad_ref(n.parents[1]), pmad::scale(t.value(n.parents[0]), g));
                });
}

Tape::Id Tape::mean_sq_diff(Id a, Id b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("mean_sq_diff: shape mismatch");
    const double inv_n = 1.0 / static_cast<double>(av.data.size());
    Matrix out(1, 1);
    double acc = 0.0;
    for (size_t i = 0; i < av.data.size(); ++i) {
        const double d = av.data[i] - bv.data[i];
        acc += d * d;
    }
    out.at(0, 0) = acc * inv_n;
    return push(std::move(out), any_needs_grad({a, b}), {a, b},
                [inv_n](Tape& t, const Node& n) {
                    const double g = n.grad.at(0, 0);
                    const Matrix& av = t.value(n.parents[0]);
                    const Matrix& bv = t.value(n.parents[1]);
                    Matrix d(av.rows, av.cols);
                    for (size_t i = 0; i < av.data.size(); ++i)
                        d.data[i] = 2.0 * inv_n * g * (av.data[i] - bv.data[i]);
                    if (t.nodes_[n.parents[0]].needs_grad) accumulate(t.grad_ref(n.parents[0]), d);
                    if (t.nodes_[n.parents[1]].needs_grad)
                        accumulate(t.grad_ref(n.parents[1]), pmad::scale(d, -1.0));
                });
}

void Tape::backward(Id loss) {
    Node& top = nodes_[loss];
    if (top.val.rows != 1 || top.val.cols != 1)
        throw std::invalid_argument("Tape::backward: loss must be 1 x 1");
    for (Node& n : nodes_) {
        if (n.needs_grad) n.grad = Matrix(n.val.rows, n.val.cols);
        n.visited = false;
    }
    if (!top.needs_grad) return;  // constant graph, all gradients zero
    top.grad.at(0, 0) = 1.0;
    top.visited = true;
    // Parents always precede children, so reverse id order is topological.
    for (Id id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.visited || !n.needs_grad) continue;
        for (Id p : n.parents) nodes_[p].visited = true;
        if (n.back) n.back(*this, n);
    }
}

}  // namespace pmad
