#include "model.hpp"

#include <cmath>
#include <stdexcept>

#include "rng.hpp"

namespace pmad {

std::string to_string(MemoryStrategy s) {
    switch (s) {
        case MemoryStrategy::none: return "none";
        case MemoryStrategy::frozen: return "frozen";
        case MemoryStrategy::own_domain: return "own_domain";
        case MemoryStrategy::data_driven: return "data_driven";
    }
    throw std::logic_error("bad strategy");
}

MemoryStrategy strategy_from_string(const std::string& s) {
    if (s == "none") return MemoryStrategy::none;
    if (s == "frozen") return MemoryStrategy::frozen;
    if (s == "own_domain") return MemoryStrategy::own_domain;
    if (s == "data_driven") return MemoryStrategy::data_driven;
    throw std::invalid_argument("unknown memory strategy: " + s);
}

void ModelConfig::validate() const {
    if (patch_len < 1) throw std::invalid_argument("config: patch_len must be >= 1");
    if (max_patches < 1) throw std::invalid_argument("config: max_patches must be >= 1");
    if (window < patch_len) throw std::invalid_argument("config: window shorter than a patch");
    if (window > patch_len * max_patches)
        throw std::invalid_argument("config: window exceeds max_patches * patch_len");
    if (d_model < 1 || d_ff < 1 || d_hidden < 1)
        throw std::invalid_argument("config: widths must be >= 1");
    if (n_layers < 0) throw std::invalid_argument("config: n_layers must be >= 0");
    if (n_heads < 1 || d_model % n_heads != 0)
        throw std::invalid_argument("config: n_heads must divide d_model");
    if (mem_items < 0) throw std::invalid_argument("config: mem_items must be >= 0");
    if (mem.topk < 1) throw std::invalid_argument("config: K must be >= 1");
    if (mem.tau_select <= 0.0 || mem.tau_attn <= 0.0)
        throw std::invalid_argument("config: temperatures must be positive");
    if (eps <= 0.0 || mem.eps <= 0.0) throw std::invalid_argument("config: eps must be positive");
}

namespace {

void fill_xavier(Matrix& m, int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : m.data) x = rng.uniform(-bound, bound);
}

}  // namespace

Model build_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model model;
    model.cfg = cfg;
    ParamStore& ps = model.params;
    Rng rng(derive_seed(seed, "params"));

    auto add_linear = [&](const std::string& w, const std::string& b, int in, int out) {
        Matrix wm(in, out);
        fill_xavier(wm, in, out, rng);
        ps.add(w, std::move(wm));
        ps.add(b, Matrix(1, out));
    };

    add_linear("embed.w", "embed.b", cfg.patch_len, cfg.d_model);
    Matrix pos(cfg.max_patches, cfg.d_model);
    fill_xavier(pos, cfg.max_patches, cfg.d_model, rng);
    ps.add("pos", std::move(pos));

    for (int i = 0; i < cfg.n_layers; ++i) {
        const std::string p = "enc" + std::to_string(i) + ".";
        ps.add(p + "ln1.g", Matrix::full(1, cfg.d_model, 1.0));
        ps.add(p + "ln1.b", Matrix(1, cfg.d_model));
        add_linear(p + "attn.wq", p + "attn.bq", cfg.d_model, cfg.d_model);
        add_linear(p + "attn.wk", p + "attn.bk", cfg.d_model, cfg.d_model);
        add_linear(p + "attn.wv", p + "attn.bv", cfg.d_model, cfg.d_model);
        add_linear(p + "attn.wo", p + "attn.bo", cfg.d_model, cfg.d_model);
        ps.add(p + "ln2.g", Matrix::full(1, cfg.d_model, 1.0));
        ps.add(p + "ln2.b", Matrix(1, cfg.d_model));
        add_linear(p + "ffn.w1", p + "ffn.b1", cfg.d_model, cfg.d_ff);
        add_linear(p + "ffn.w2", p + "ffn.b2", cfg.d_ff, cfg.d_model);
    }

    add_linear("dec.w1", "dec.b1", 2 * cfg.d_model, cfg.d_hidden);
    add_linear("dec.w2", "dec.b2", cfg.d_hidden, cfg.patch_len);

    if (cfg.has_memory()) {
        Matrix u(cfg.d_model, cfg.d_model), w(cfg.d_model, cfg.d_model);
        fill_xavier(u, cfg.d_model, cfg.d_model, rng);
        fill_xavier(w, cfg.d_model, cfg.d_model, rng);
        ps.add("mem.u_psi", std::move(u));
        ps.add("mem.w_psi", std::move(w));
    }
    return model;
}

Tape::Id TapeParams::at(const std::string& name) const {
    for (const auto& [n, id] : ids)
        if (n == name) return id;
    throw std::invalid_argument("TapeParams: unknown name " + name);
}

TapeParams stage_params(Tape& t, const ParamStore& params, bool trainable) {
    TapeParams tp;
    for (const auto& [name, m] : params.items())
        tp.ids.emplace_back(name, trainable ? t.input(m) : t.constant(m));
    return tp;
}

Matrix embed_tokens(const ParamStore& params, const ModelConfig& cfg, const PatchedWindow& pw) {
    if (pw.patches.rows != cfg.max_patches || pw.patches.cols != cfg.patch_len)
        throw std::invalid_argument("embed_tokens: patch shape mismatch");
    Matrix tokens = matmul(pw.patches, params.get("embed.w"));
    const Matrix& b = params.get("embed.b");
    const Matrix& pos = params.get("pos");
    for (int r = 0; r < tokens.rows; ++r) {
        if (pw.mask[r] == 0) {
            for (int c = 0; c < tokens.cols; ++c) tokens.at(r, c) = 0.0;
            continue;
        }
        for (int c = 0; c < tokens.cols; ++c) tokens.at(r, c) += b.at(0, c) + pos.at(r, c);
    }
    return tokens;
}

Tape::Id encode_tape(Tape& t, const TapeParams& tp, const ModelConfig& cfg,
                     const PatchedWindow& pw) {
    const int P = pw.observed;
    if (P < 1 || P > cfg.max_patches) throw std::invalid_argument("encode: bad observed count");
    if (pw.patches.cols != cfg.patch_len) throw std::invalid_argument("encode: patch width");
    for (int r = 0; r < cfg.max_patches; ++r)
        if (pw.mask[r] != (r < P ? 1 : 0))
            throw std::invalid_argument("encode: mask is not a contiguous prefix");

    // The mask is a contiguous prefix, so restricting attention to observed
    // keys is the same as running on the first P rows alone; padded rows
    // can never influence the result.
    Tape::Id x_obs = t.constant(slice_rows(pw.patches, 0, P));
    Tape::Id x = t.add(t.add_row(t.matmul(x_obs, tp.at("embed.w")), tp.at("embed.b")),
                       t.slice_rows(tp.at("pos"), 0, P));

    const int dh = cfg.d_model / cfg.n_heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int i = 0; i < cfg.n_layers; ++i) {
        const std::string p = "enc" + std::to_string(i) + ".";
        Tape::Id norm1 = t.layer_norm_rows(x, tp.at(p + "ln1.g"), tp.at(p + "ln1.b"), 1e-5);
        Tape::Id Q = t.add_row(t.matmul(norm1, tp.at(p + "attn.wq")), tp.at(p + "attn.bq"));
        Tape::Id K = t.add_row(t.matmul(norm1, tp.at(p + "attn.wk")), tp.at(p + "attn.bk"));
        Tape::Id V = t.add_row(t.matmul(norm1, tp.at(p + "attn.wv")), tp.at(p + "attn.bv"));

        Tape::Id heads = -1;
        for (int h = 0; h < cfg.n_heads; ++h) {
            Tape::Id qh = t.slice_cols(Q, h * dh, dh);
            Tape::Id kh = t.slice_cols(K, h * dh, dh);
            Tape::Id vh = t.slice_cols(V, h * dh, dh);
            Tape::Id attn = t.row_softmax(t.scale(t.matmul_nt(qh, kh), inv_sqrt_dh), 1.0);
            Tape::Id oh = t.matmul(attn, vh);
            heads = h == 0 ? oh : t.concat_cols(heads, oh);
        }
        Tape::Id attn_out = t.add_row(t.matmul(heads, tp.at(p + "attn.wo")), tp.at(p + "attn.bo"));
        Tape::Id h1 = t.add(x, attn_out);

        Tape::Id norm2 = t.layer_norm_rows(h1, tp.at(p + "ln2.g"), tp.at(p + "ln2.b"), 1e-5);
        Tape::Id ff = t.add_row(
            t.matmul(t.gelu(t.add_row(t.matmul(norm2, tp.at(p + "ffn.w1")), tp.at(p + "ffn.b1"))),
                     tp.at(p + "ffn.w2")),
            tp.at(p + "ffn.b2"));
        x = t.add(h1, ff);
    }
    return x;
}

Tape::Id decode_tape(Tape& t, const TapeParams& tp, const ModelConfig& cfg, Tape::Id q_cat) {
    if (t.value(q_cat).cols != 2 * cfg.d_model)
        throw std::invalid_argument("decode: input width must be 2 * d_model");
    Tape::Id hidden = t.gelu(t.add_row(t.matmul(q_cat, tp.at("dec.w1")), tp.at("dec.b1")));
    return t.add_row(t.matmul(hidden, tp.at("dec.w2")), tp.at("dec.b2"));
}

ForwardResult model_forward(Tape& t, const TapeParams& tp, const ModelConfig& cfg,
                            const MemoryBank& bank, const PatchedWindow& pw, int forced_item) {
    ForwardResult out;
    out.q = encode_tape(t, tp, cfg, pw);

    Tape::Id q_cat = -1;
    if (cfg.has_memory()) {
        if (bank.M == 0) throw std::invalid_argument("model_forward: memory not initialized");
        TapeMemoryResult mem = memory_forward_tape(t, out.q, bank, cfg.mem, tp.at("mem.u_psi"),
                                                   tp.at("mem.w_psi"), forced_item);
        out.selection = std::move(mem.selection);
        out.m_tilde = std::move(mem.m_tilde);
        q_cat = t.concat_cols(out.q, mem.q_tilde);
    } else {
        q_cat = t.concat_cols(out.q, out.q);
    }

    out.x_hat = decode_tape(t, tp, cfg, q_cat);
    Tape::Id target = t.constant(slice_rows(pw.patches, 0, pw.observed));
    out.loss = t.mean_sq_diff(out.x_hat, target);
    return out;
}

int resolve_forced_item(const ModelConfig& cfg, const MemoryBank& bank, int domain_id) {
    if (cfg.strategy != MemoryStrategy::frozen && cfg.strategy != MemoryStrategy::own_domain)
        return -1;
    for (int j = 0; j < bank.M; ++j)
        if (bank.init_domain[j] == domain_id) return j;
    return -1;  // unknown domain (e.g. leave-one-out eval): dynamic top-K
}

}  // namespace pmad
