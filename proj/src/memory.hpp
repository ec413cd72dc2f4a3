#pragma once

#include <string>
#include <utility>
#include <vector>

#include "matrix.hpp"
#include "tape.hpp"

namespace pmad {

struct MemoryConfig {
    int topk = 3;
    double tau_select = 0.3;  // item-selection softmax only
    double tau_attn = 1.0;    // v and w softmaxes
    bool renormalize_topk = false;
    double eps = 1e-8;
};

// M items of shape N x d. Items are buffers: written by init and by the
// data-driven write-back, never by the optimizer. Every stored row is unit
// norm except rows for patch positions never observed (exactly zero).
struct MemoryBank {
    int M = 0;
    int N = 0;
    int d = 0;
    std::vector<Matrix> items;
    std::vector<int> init_domain;  // diagnostic: domain an item was seeded from
};

struct MemorySelection {
    std::vector<int> indices;         // K ids, descending lambda, ties -> lower id
    std::vector<double> lambdas;      // weights of the selected items
    std::vector<double> full_lambda;  // all M weights (or one-hot when forced)
};

// reps_by_item[j] = encoder outputs (q, P) available for seeding item j;
// item_domain[j] is recorded as init_domain. Per item, min(S, available)
// reps are sampled under a seed derived from (seed, j); each row is the mean
// over sampled reps that observe it, then L2-normalized.
MemoryBank init_memory(const std::vector<std::vector<std::pair<Matrix, int>>>& reps_by_item,
                       const std::vector<int>& item_domain, int max_patches, int d_model,
                       int samples_per_item, uint64_t seed, double eps = 1e-8);

// Item sliced to the query's observed patches.
Matrix align(const MemoryBank& bank, int item, int observed);

// K largest entries, descending, ties broken by lower index.
std::vector<int> topk_indices(const std::vector<double>& v, int k);

// q_hat must already be row-normalized. Flattened dot against each aligned
// item, softmax over items at tau_select.
MemorySelection select_topk(const Matrix& q_hat, const MemoryBank& bank,
                            const MemoryConfig& cfg);

// v = softmax(m q^T); m~ = (1 - psi) ⊙ m + psi ⊙ vq with
// psi = sigmoid(m U + vq W).
Matrix update_item(const Matrix& m, const Matrix& q, const Matrix& u_psi, const Matrix& w_psi,
                   double tau_attn);

// w = softmax(q m~^T); rows of the result are convex combinations of m~ rows.
Matrix refine_query(const Matrix& q, const Matrix& m_tilde, double tau_attn);

struct MemoryForwardResult {
    Matrix q_tilde;
    MemorySelection selection;
    std::vector<Matrix> m_tilde;  // per selected item, aligned rows only
};

// Full module on plain values (inference path; no write-back here).
// forced_item >= 0 replaces selection with that item at lambda = 1.
MemoryForwardResult memory_forward(const Matrix& q, const MemoryBank& bank,
                                   const MemoryConfig& cfg, const Matrix& u_psi,
                                   const Matrix& w_psi, int forced_item = -1);

struct TapeMemoryResult {
    Tape::Id q_tilde = -1;
    MemorySelection selection;
    std::vector<Matrix> m_tilde;  // detached values for the write-back
};

// Same computation on the tape; items enter as constants, u/w as tape nodes
// so their gradients flow. Kernel-for-kernel identical to memory_forward.
TapeMemoryResult memory_forward_tape(Tape& t, Tape::Id q, const MemoryBank& bank,
                                     const MemoryConfig& cfg, Tape::Id u_psi, Tape::Id w_psi,
                                     int forced_item = -1);

// Batched write-back: average m~ per item row over the batch elements that
// selected it, renormalize touched rows.
class WriteBackAccum {
public:
    WriteBackAccum(int items, int max_patches, int d_model);
    void add(int item, const Matrix& m_tilde);
    bool empty() const { return touched_ == 0; }
    void apply(MemoryBank& bank, double eps) const;

private:
    std::vector<Matrix> sum_;
    std::vector<std::vector<int>> count_;
    int touched_ = 0;
};

// acc is (#domains) x M; adds full_lambda onto the true domain's row.
void accumulate_utilization(Matrix& acc, int true_domain, const MemorySelection& sel);

// Rows divided by their sums; rows with sum 0 stay zero and are reported.
Matrix row_normalize_utilization(const Matrix& acc, std::vector<int>* empty_rows = nullptr);

}  // namespace pmad
