#pragma once

#include <string>
#include <vector>

#include "data.hpp"
#include "matrix.hpp"
#include "memory.hpp"
#include "tape.hpp"

namespace pmad {

enum class MemoryStrategy { none, frozen, own_domain, data_driven };

std::string to_string(MemoryStrategy s);
MemoryStrategy strategy_from_string(const std::string& s);

struct ModelConfig {
    int window = 512;
    int patch_len = 8;    // L
    int max_patches = 64;  // N
    int d_model = 64;
    int d_ff = 128;
    int n_layers = 2;
    int n_heads = 4;
    int d_hidden = 128;  // decoder hidden width
    MemoryStrategy strategy = MemoryStrategy::data_driven;
    int mem_items = 0;  // M override; 0 = one item per domain
    MemoryConfig mem;
    double eps = 1e-8;  // standardization / normalization guard

    void validate() const;
    bool has_memory() const { return strategy != MemoryStrategy::none; }
};

struct Model {
    ModelConfig cfg;
    ParamStore params;
    MemoryBank bank;  // empty until init_memory (and always for strategy none)
    DomainIndex domains;
};

// Parameters in registration order, Xavier-uniform weights, zero biases,
// unit layer-norm scales. Bank tensors (mem.u_psi / mem.w_psi) exist only
// when the strategy keeps a memory.
Model build_model(const ModelConfig& cfg, uint64_t seed);

// Parameter tensors staged onto a tape, name -> node.
struct TapeParams {
    std::vector<std::pair<std::string, Tape::Id>> ids;
    Tape::Id at(const std::string& name) const;
};
TapeParams stage_params(Tape& t, const ParamStore& params, bool trainable);

// Plain embedding: all N token rows, masked rows zeroed. Diagnostic view of
// the encoder front end (the tape path slices to observed rows instead).
Matrix embed_tokens(const ParamStore& params, const ModelConfig& cfg, const PatchedWindow& pw);

// q = f_e(x, mask): P x d_model for the observed patches.
Tape::Id encode_tape(Tape& t, const TapeParams& tp, const ModelConfig& cfg,
                     const PatchedWindow& pw);

// x_hat = f_d([q; q~]): row-wise two-layer head, P x L.
Tape::Id decode_tape(Tape& t, const TapeParams& tp, const ModelConfig& cfg, Tape::Id q_cat);

struct ForwardResult {
    Tape::Id q = -1;
    Tape::Id x_hat = -1;
    Tape::Id loss = -1;  // MSE over the observed patches
    MemorySelection selection;    // empty for strategy none
    std::vector<Matrix> m_tilde;  // detached update results for write-back
};

// Full Algorithm-1 pass for one window. forced_item >= 0 pins the memory to
// one item at lambda = 1 (frozen / own-domain strategies); -1 uses top-K.
ForwardResult model_forward(Tape& t, const TapeParams& tp, const ModelConfig& cfg,
                            const MemoryBank& bank, const PatchedWindow& pw,
                            int forced_item = -1);

// Forced item for a window under the strategy, or -1 when selection is
// dynamic (data_driven, or a domain unknown to the bank).
int resolve_forced_item(const ModelConfig& cfg, const MemoryBank& bank, int domain_id);

}  // namespace pmad
