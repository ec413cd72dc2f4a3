#include "memory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rng.hpp"

namespace pmad {

MemoryBank init_memory(const std::vector<std::vector<std::pair<Matrix, int>>>& reps_by_item,
                       const std::vector<int>& item_domain, int max_patches, int d_model,
                       int samples_per_item, uint64_t seed, double eps) {
    if (reps_by_item.size() != item_domain.size())
        throw std::invalid_argument("init_memory: reps/domain size mismatch");
    if (samples_per_item < 1) throw std::invalid_argument("init_memory: S must be >= 1");

    MemoryBank bank;
    bank.M = static_cast<int>(reps_by_item.size());
    bank.N = max_patches;
    bank.d = d_model;
    bank.init_domain = item_domain;

    for (int j = 0; j < bank.M; ++j) {
        const auto& reps = reps_by_item[j];
        if (reps.empty())
            throw std::runtime_error("init_memory: no representations for domain " +
                                     std::to_string(item_domain[j]));
        std::vector<size_t> pick(reps.size());
        std::iota(pick.begin(), pick.end(), 0);
        if (static_cast<int>(reps.size()) > samples_per_item) {
            Rng rng(derive_seed(seed, "mem_init/" + std::to_string(j)));
            auto sampled = rng.sample_indices(reps.size(), samples_per_item);
            pick.assign(sampled.begin(), sampled.end());
        }

        Matrix item(max_patches, d_model);
        for (int r = 0; r < max_patches; ++r) {
            int observed = 0;
            for (size_t s : pick) {
                const Matrix& q = reps[s].first;
                const int P = reps[s].second;
                if (q.rows != P || q.cols != d_model)
                    throw std::invalid_argument("init_memory: rep shape mismatch");
                if (r >= P) continue;
                for (int c = 0; c < d_model; ++c) item.at(r, c) += q.at(r, c);
                ++observed;
            }
            if (observed > 0)
                for (int c = 0; c < d_model; ++c) item.at(r, c) /= observed;
        }
        bank.items.push_back(l2_normalize_rows(item, eps));
    }
    return bank;
}

Matrix align(const MemoryBank& bank, int item, int observed) {
    if (item < 0 || item >= bank.M) throw std::invalid_argument("align: item out of range");
    if (observed < 1 || observed > bank.N)
        throw std::invalid_argument("align: observed count out of range");
    return slice_rows(bank.items[item], 0, observed);
}

std::vector<int> topk_indices(const std::vector<double>& v, int k) {
    if (k < 1 || k > static_cast<int>(v.size()))
        throw std::invalid_argument("topk_indices: K out of range");
    std::vector<int> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return v[a] > v[b]; });  // stable: ties -> lower index
    order.resize(k);
    return order;
}

namespace {

std::vector<double> item_logits(const Matrix& q_hat, const MemoryBank& bank) {
    const int P = q_hat.rows;
    std::vector<double> logits(bank.M);
    for (int j = 0; j < bank.M; ++j) {
        Matrix m = align(bank, j, P);
        double acc = 0.0;
        for (size_t k = 0; k < q_hat.data.size(); ++k) acc += q_hat.data[k] * m.data[k];
        logits[j] = acc;
    }
    return logits;
}

MemorySelection forced_selection(int item, int M) {
    MemorySelection sel;
    sel.indices = {item};
    sel.lambdas = {1.0};
    sel.full_lambda.assign(M, 0.0);
    sel.full_lambda[item] = 1.0;
    return sel;
}

}  // namespace

MemorySelection select_topk(const Matrix& q_hat, const MemoryBank& bank,
                            const MemoryConfig& cfg) {
    if (cfg.topk > bank.M)
        throw std::invalid_argument("select_topk: K exceeds item count");
    std::vector<double> logits = item_logits(q_hat, bank);
    MemorySelection sel;
    sel.full_lambda = softmax(logits, cfg.tau_select);
    sel.indices = topk_indices(sel.full_lambda, cfg.topk);
    if (cfg.renormalize_topk) {
        std::vector<double> sub(cfg.topk);
        for (int i = 0; i < cfg.topk; ++i) sub[i] = logits[sel.indices[i]];
        sel.lambdas = softmax(sub, cfg.tau_select);
    } else {
        for (int idx : sel.indices) sel.lambdas.push_back(sel.full_lambda[idx]);
    }
    return sel;
}

Matrix update_item(const Matrix& m, const Matrix& q, const Matrix& u_psi, const Matrix& w_psi,
                   double tau_attn) {
    Matrix v = row_softmax(matmul_nt(m, q), tau_attn);
    Matrix vq = matmul(v, q);
    Matrix psi = sigmoid(add(matmul(m, u_psi), matmul(vq, w_psi)));
    Matrix one_minus = sub(Matrix::full(psi.rows, psi.cols, 1.0), psi);
    return add(hadamard(one_minus, m), hadamard(psi, vq));
}

Matrix refine_query(const Matrix& q, const Matrix& m_tilde, double tau_attn) {
    Matrix w = row_softmax(matmul_nt(q, m_tilde), tau_attn);
    return matmul(w, m_tilde);
}

MemoryForwardResult memory_forward(const Matrix& q, const MemoryBank& bank,
                                   const MemoryConfig& cfg, const Matrix& u_psi,
                                   const Matrix& w_psi, int forced_item) {
    const int P = q.rows;
    Matrix q_hat = l2_normalize_rows(q, cfg.eps);

    MemoryForwardResult out;
    out.selection = forced_item >= 0 ? forced_selection(forced_item, bank.M)
                                     : select_topk(q_hat, bank, cfg);

    bool first = true;
    for (size_t i = 0; i < out.selection.indices.size(); ++i) {
        const int idx = out.selection.indices[i];
        Matrix m_tilde = update_item(align(bank, idx, P), q_hat, u_psi, w_psi, cfg.tau_attn);
        Matrix term = scale(refine_query(q_hat, m_tilde, cfg.tau_attn), out.selection.lambdas[i]);
        out.m_tilde.push_back(std::move(m_tilde));
        if (first) {
            out.q_tilde = std::move(term);
            first = false;
        } else {
            out.q_tilde = add(out.q_tilde, term);
        }
    }
    return out;
}

namespace {

Tape::Id update_item_tape(Tape& t, Tape::Id m, Tape::Id q, Tape::Id u_psi, Tape::Id w_psi,
                          double tau_attn) {
    Tape::Id v = t.row_softmax(t.matmul_nt(m, q), tau_attn);
    Tape::Id vq = t.matmul(v, q);
    Tape::Id psi = t.sigmoid(t.add(t.matmul(m, u_psi), t.matmul(vq, w_psi)));
    const Matrix& pv = t.value(psi);
    Tape::Id one_minus = t.sub(t.constant(Matrix::full(pv.rows, pv.cols, 1.0)), psi);
    return t.add(t.hadamard(one_minus, m), t.hadamard(psi, vq));
}

Tape::Id refine_query_tape(Tape& t, Tape::Id q, Tape::Id m_tilde, double tau_attn) {
    Tape::Id w = t.row_softmax(t.matmul_nt(q, m_tilde), tau_attn);
    return t.matmul(w, m_tilde);
}

}  // namespace

TapeMemoryResult memory_forward_tape(Tape& t, Tape::Id q, const MemoryBank& bank,
                                     const MemoryConfig& cfg, Tape::Id u_psi, Tape::Id w_psi,
                                     int forced_item) {
    const int P = t.value(q).rows;
    Tape::Id q_hat = t.l2_normalize_rows(q, cfg.eps);

    TapeMemoryResult out;
    std::vector<Tape::Id> lambda_used;  // one 1 x 1 node per selected item

    if (forced_item >= 0) {
        out.selection = forced_selection(forced_item, bank.M);
        lambda_used.push_back(t.constant(Matrix::full(1, 1, 1.0)));
    } else {
        if (cfg.topk > bank.M)
            throw std::invalid_argument("memory_forward: K exceeds item count");
        std::vector<Tape::Id> dots(bank.M);
        for (int j = 0; j < bank.M; ++j)
            dots[j] = t.dot_all(q_hat, t.constant(align(bank, j, P)));
        Tape::Id full = t.row_softmax(t.concat_scalars(dots), cfg.tau_select);
        const Matrix& fv = t.value(full);
        out.selection.full_lambda.assign(fv.data.begin(), fv.data.end());
        out.selection.indices = topk_indices(out.selection.full_lambda, cfg.topk);
        if (cfg.renormalize_topk) {
            std::vector<Tape::Id> sub;
            for (int idx : out.selection.indices) sub.push_back(dots[idx]);
            Tape::Id renorm = t.row_softmax(t.concat_scalars(sub), cfg.tau_select);
            for (int i = 0; i < cfg.topk; ++i) {
                lambda_used.push_back(t.slice_cols(renorm, i, 1));
                out.selection.lambdas.push_back(t.value(renorm).at(0, i));
            }
        } else {
            for (int idx : out.selection.indices) {
                lambda_used.push_back(t.slice_cols(full, idx, 1));
                out.selection.lambdas.push_back(out.selection.full_lambda[idx]);
            }
        }
    }

    bool first = true;
    for (size_t i = 0; i < out.selection.indices.size(); ++i) {
        const int idx = out.selection.indices[i];
        Tape::Id m = t.constant(align(bank, idx, P));
        Tape::Id m_tilde = update_item_tape(t, m, q_hat, u_psi, w_psi, cfg.tau_attn);
        Tape::Id term = t.scale_by(refine_query_tape(t, q_hat, m_tilde, cfg.tau_attn),
                                   lambda_used[i]);
        out.m_tilde.push_back(t.value(m_tilde));
        if (first) {
            out.q_tilde = term;
            first = false;
        } else {
            out.q_tilde = t.add(out.q_tilde, term);
        }
    }
    return out;
}

WriteBackAccum::WriteBackAccum(int items, int max_patches, int d_model) {
    sum_.assign(items, Matrix(max_patches, d_model));
    count_.assign(items, std::vector<int>(max_patches, 0));
}

void WriteBackAccum::add(int item, const Matrix& m_tilde) {
    if (item < 0 || item >= static_cast<int>(sum_.size()))
        throw std::invalid_argument("WriteBackAccum: item out of range");
    Matrix& s = sum_[item];
    if (m_tilde.rows > s.rows || m_tilde.cols != s.cols)
        throw std::invalid_argument("WriteBackAccum: shape mismatch");
    for (int r = 0; r < m_tilde.rows; ++r) {
        for (int c = 0; c < m_tilde.cols; ++c) s.at(r, c) += m_tilde.at(r, c);
        ++count_[item][r];
    }
    ++touched_;
}

void WriteBackAccum::apply(MemoryBank& bank, double eps) const {
    if (static_cast<int>(sum_.size()) != bank.M)
        throw std::invalid_argument("WriteBackAccum: bank size mismatch");
    for (int j = 0; j < bank.M; ++j) {
        for (int r = 0; r < bank.N; ++r) {
            if (count_[j][r] == 0) continue;
            double norm = 0.0;
            std::vector<double> avg(bank.d);
            for (int c = 0; c < bank.d; ++c) {
                avg[c] = sum_[j].at(r, c) / count_[j][r];
                norm += avg[c] * avg[c];
            }
            norm = std::sqrt(norm);
            const double denom = std::max(norm, eps);
            for (int c = 0; c < bank.d; ++c) bank.items[j].at(r, c) = avg[c] / denom;
        }
    }
}

void accumulate_utilization(Matrix& acc, int true_domain, const MemorySelection& sel) {
    if (true_domain < 0 || true_domain >= acc.rows)
        throw std::invalid_argument("accumulate_utilization: domain out of range");
    if (static_cast<int>(sel.full_lambda.size()) != acc.cols)
        throw std::invalid_argument("accumulate_utilization: lambda width mismatch");
    for (int c = 0; c < acc.cols; ++c) acc.at(true_domain, c) += sel.full_lambda[c];
}

Matrix row_normalize_utilization(const Matrix& acc, std::vector<int>* empty_rows) {
    Matrix out(acc.rows, acc.cols);
    if (empty_rows) empty_rows->clear();
    for (int r = 0; r < acc.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < acc.cols; ++c) s += acc.at(r, c);
        if (s <= 0.0) {
            if (empty_rows) empty_rows->push_back(r);
            continue;
        }
        for (int c = 0; c < acc.cols; ++c) out.at(r, c) = acc.at(r, c) / s;
    }
    return out;
}

}  // namespace pmad
