#pragma once

#include <functional>
#include <vector>

#include "matrix.hpp"

namespace pmad {

// Reverse-mode tape over dense matrices. Values are computed eagerly; each
// op records parents and a backward closure. Ops route through the kernels
// in matrix.cpp, so an un-backpropagated tape forward is bit-identical to
// the plain eager computation.
class Tape {
public:
    using Id = int;

    Id input(Matrix v);            // leaf that receives a gradient
    Id constant(Matrix v);         // leaf excluded from differentiation

    const Matrix& value(Id id) const { return nodes_[id].val; }
    const Matrix& grad(Id id) const;

    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id hadamard(Id a, Id b);
    Id scale(Id a, double c);
    Id matmul(Id a, Id b);
    Id matmul_nt(Id a, Id b);      // A * B^T
    Id add_row(Id a, Id bias);     // bias broadcast over rows, bias is 1 x c
    Id row_softmax(Id a, double tau);
    Id sigmoid(Id a);
    Id gelu(Id a);
    Id l2_normalize_rows(Id a, double eps);
    Id layer_norm_rows(Id x, Id gamma, Id beta, double eps);
    Id concat_cols(Id a, Id b);
    Id slice_rows(Id a, int r0, int n);
    Id slice_cols(Id a, int c0, int n);
    Id concat_scalars(const std::vector<Id>& xs);  // 1 x n from 1 x 1 vars
    Id scale_by(Id a, Id s);       // s is 1 x 1
    Id dot_all(Id a, Id b);        // sum of elementwise product, 1 x 1
    Id mean_sq_diff(Id a, Id b);   // mean((a - b)^2), 1 x 1

    // Seeds d(loss) = 1 and propagates to all leaves. loss must be 1 x 1.
    void backward(Id loss);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Matrix val;
        Matrix grad;
        bool needs_grad = false;
        bool visited = false;
        std::vector<Id> parents;
        std::function<void(Tape&, const Node&)> back;
    };

    Id push(Matrix val, bool needs_grad, std::vector<Id> parents,
            std::function<void(Tape&, const Node&)> back);
    bool any_needs_grad(const std::vector<Id>& ids) const;
    Matrix& grad_ref(Id id) { return nodes_[id].grad; }

    std::vector<Node> nodes_;
};

}  // namespace pmad
