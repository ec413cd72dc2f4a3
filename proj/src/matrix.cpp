#include "matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pmad {

Matrix Matrix::full(int r, int c, double v) {
    Matrix m(r, c);
    std::fill(m.data.begin(), m.data.end(), v);
    return m;
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Matrix();
    Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int r = 0; r < m.rows; ++r) {
        if (static_cast<int>(rows[r].size()) != m.cols)
            throw std::invalid_argument("from_rows: ragged rows");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r));
    }
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

static void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Matrix scale(const Matrix& a, double c) {
    Matrix out = a;
    for (double& v : out.data) v *= c;
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) out.at(c, r) = a.at(r, c);
    return out;
}

// Fixed i-k-j loop order: deterministic accumulation, cache-friendly on
// row-major data.
Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    Matrix out(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            orow[j] = acc;
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: inner dimension mismatch");
    Matrix out(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = a.row(k);
        const double* brow = b.row(k);
        for (int i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = out.row(i);
            for (int j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
        }
    }
    return out;
}

Matrix slice_rows(const Matrix& a, int r0, int n) {
    if (r0 < 0 || n < 0 || r0 + n > a.rows) throw std::invalid_argument("slice_rows: out of range");
    Matrix out(n, a.cols);
    std::copy(a.row(r0), a.row(r0) + static_cast<size_t>(n) * a.cols, out.data.begin());
    return out;
}

Matrix slice_cols(const Matrix& a, int c0, int n) {
    if (c0 < 0 || n < 0 || c0 + n > a.cols) throw std::invalid_argument("slice_cols: out of range");
    Matrix out(a.rows, n);
    for (int r = 0; r < a.rows; ++r)
        std::copy(a.row(r) + c0, a.row(r) + c0 + n, out.row(r));
    return out;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw std::invalid_argument("concat_cols: row count mismatch");
    Matrix out(a.rows, a.cols + b.cols);
    for (int r = 0; r < a.rows; ++r) {
        std::copy(a.row(r), a.row(r) + a.cols, out.row(r));
        std::copy(b.row(r), b.row(r) + b.cols, out.row(r) + a.cols);
    }
    return out;
}

void add_in_place(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add_in_place");
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

std::vector<double> softmax(const std::vector<double>& v, double tau) {
    if (v.empty()) throw std::invalid_argument("softmax: empty vector");
    if (!(tau > 0.0)) throw std::invalid_argument("softmax: tau must be positive");
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite input");
    const double mx = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp((v[i] - mx) / tau);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

Matrix row_softmax(const Matrix& a, double tau) {
    if (a.rows == 0 || a.cols == 0) throw std::invalid_argument("row_softmax: empty matrix");
    if (!(tau > 0.0)) throw std::invalid_argument("row_softmax: tau must be positive");
    Matrix out(a.rows, a.cols);
    for (int r = 0; r < a.rows; ++r) {
        const double* in = a.row(r);
        double* o = out.row(r);
        double mx = in[0];
        for (int c = 1; c < a.cols; ++c) mx = std::max(mx, in[c]);
        double sum = 0.0;
        for (int c = 0; c < a.cols; ++c) {
            o[c] = std::exp((in[c] - mx) / tau);
            sum += o[c];
        }
        for (int c = 0; c < a.cols; ++c) o[c] /= sum;
    }
    return out;
}

Matrix sigmoid(const Matrix& a) {
    Matrix out(a.rows, a.cols);
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double x = a.data[i];
        // Split on sign so exp never overflows.
        out.data[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                               : std::exp(x) / (1.0 + std::exp(x));
    }
    return out;
}

Matrix gelu(const Matrix& a) {
    Matrix out(a.rows, a.cols);
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double x = a.data[i];
        out.data[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    return out;
}

Matrix l2_normalize_rows(const Matrix& a, double eps, int* degenerate_rows) {
    if (a.rows == 0 || a.cols == 0) throw std::invalid_argument("l2_normalize_rows: empty matrix");
    Matrix out(a.rows, a.cols);
    int degenerate = 0;
    for (int r = 0; r < a.rows; ++r) {
        const double* in = a.row(r);
        double norm_sq = 0.0;
        for (int c = 0; c < a.cols; ++c) norm_sq += in[c] * in[c];
        const double norm = std::sqrt(norm_sq);
        if (norm < eps) ++degenerate;
        const double denom = std::max(norm, eps);
        double* o = out.row(r);
        for (int c = 0; c < a.cols; ++c) o[c] = in[c] / denom;
    }
    if (degenerate_rows) *degenerate_rows = degenerate;
    return out;
}

Matrix& ParamStore::add(const std::string& name, Matrix m) {
    if (has(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    items_.emplace_back(name, std::move(m));
    return items_.back().second;
}

Matrix& ParamStore::get(const std::string& name) {
    for (auto& [n, m] : items_)
        if (n == name) return m;
    throw std::invalid_argument("ParamStore: unknown name " + name);
}

const Matrix& ParamStore::get(const std::string& name) const {
    for (const auto& [n, m] : items_)
        if (n == name) return m;
    throw std::invalid_argument("ParamStore: unknown name " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [n, m] : items_)
        if (n == name) return true;
    return false;
}

size_t ParamStore::scalar_count() const {
    size_t n = 0;
    for (const auto& [name, m] : items_) n += m.size();
    return n;
}

ParamVector ParamStore::flatten() const {
    ParamVector pv;
    pv.values.reserve(scalar_count());
    for (const auto& [name, m] : items_) {
        pv.layout.push_back({name, m.rows, m.cols, pv.values.size()});
        pv.values.insert(pv.values.end(), m.data.begin(), m.data.end());
    }
    return pv;
}

void ParamStore::assign(const std::vector<double>& values) {
    size_t off = 0;
    for (auto& [name, m] : items_) {
        if (off + m.size() > values.size())
            throw std::invalid_argument("ParamStore::assign: vector too short");
        std::copy(values.begin() + off, values.begin() + off + m.size(), m.data.begin());
        off += m.size();
    }
    if (off != values.size())
        throw std::invalid_argument("ParamStore::assign: vector length mismatch");
}

GradCheckResult grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x,
                           const std::vector<double>& analytic_grad,
                           double h) {
    if (analytic_grad.size() != x.size())
        throw std::invalid_argument("grad_check: gradient length mismatch");
    if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
    GradCheckResult res;
    std::vector<double> probe = x;
    for (size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = f(probe);
        probe[i] = x[i] - h;
        const double fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("grad_check: non-finite value at coordinate " + std::to_string(i));
        const double g_central = (fp - fm) / (2.0 * h);
        const double rel = std::abs(analytic_grad[i] - g_central) / std::max(1.0, std::abs(g_central));
        if (rel > res.max_rel_err) {
            res.max_rel_err = rel;
            res.worst_index = i;
        }
    }
    return res;
}

}  // namespace pmad
