#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace pmad {

// Dense row-major matrix, double precision. All exported operations keep
// entries finite; callers feeding raw data should check all_finite() first.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    static Matrix zeros(int r, int c) { return Matrix(r, c); }
    static Matrix full(int r, int c, double v);
    static Matrix identity(int n);
    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
};

// Elementwise and structural helpers. Dimension mismatches throw
// std::invalid_argument.
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);     // A * B
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // A * B^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // A^T * B
Matrix slice_rows(const Matrix& a, int r0, int n);
Matrix slice_cols(const Matrix& a, int c0, int n);
Matrix concat_cols(const Matrix& a, const Matrix& b);
void add_in_place(Matrix& a, const Matrix& b);

// Numerically stable softmax: exp((v_i - max v) / tau), normalized.
std::vector<double> softmax(const std::vector<double>& v, double tau);

// Each row softmax-normalized independently along the last axis.
Matrix row_softmax(const Matrix& a, double tau);

Matrix sigmoid(const Matrix& a);
Matrix gelu(const Matrix& a);

// row / max(||row||, eps). All-zero rows stay zero; if degenerate_rows is
// non-null it receives the count of rows whose norm fell below eps.
Matrix l2_normalize_rows(const Matrix& a, double eps, int* degenerate_rows = nullptr);

// --- flat parameter view -------------------------------------------------

struct ParamEntry {
    std::string name;
    int rows = 0;
    int cols = 0;
    size_t offset = 0;
};

struct ParamVector {
    std::vector<double> values;
    std::vector<ParamEntry> layout;  // contiguous, non-overlapping, covering
};

// Ordered collection of named tensors. Registration order is the canonical
// order for flattening, optimizer state and checkpoints.
class ParamStore {
public:
    Matrix& add(const std::string& name, Matrix m);
    Matrix& get(const std::string& name);
    const Matrix& get(const std::string& name) const;
    bool has(const std::string& name) const;

    size_t count() const { return items_.size(); }
    size_t scalar_count() const;
    const std::vector<std::pair<std::string, Matrix>>& items() const { return items_; }
    std::vector<std::pair<std::string, Matrix>>& items() { return items_; }

    ParamVector flatten() const;
    void assign(const std::vector<double>& values);  // layout = registration order

private:
    std::vector<std::pair<std::string, Matrix>> items_;
};

// Central-difference gradient verification. Returns the max over coordinates
// of |g_analytic - g_central| / max(1, |g_central|). Throws if f is
// non-finite at any probe point, naming the coordinate.
struct GradCheckResult {
    double max_rel_err = 0.0;
    size_t worst_index = 0;
};

GradCheckResult grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x,
                           const std::vector<double>& analytic_grad,
                           double h);

}  // namespace pmad
