#pragma once

#include <vector>

#include "dictllm/rng.hpp"
#include "dictllm/tape.hpp"
#include "dictllm/tokenizer.hpp"

namespace dictllm {

struct EncoderConfig {
    int num_layers = 4;
    int hidden_dim = 256;
    int num_heads = 4;
    int max_group_pos = 2;
    int vocab_size = 0;
    int mlp_expansion = 4;

    void validate() const;
};

// Additive logit value for masked-out attention entries.
inline constexpr double kMaskedLogit = -1e9;

using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Token-level visibility matrix. Symmetric, diagonal true.
struct HierMask {
    BoolMat visible;

    // 0 where visible, kMaskedLogit where not.
    Mat to_bias() const;
    static HierMask all_true(Eigen::Index n);
};

// Visibility rule: tokens see each other iff they share a dictionary,
// both are special, or either is [CLS]. [SEP]_i carries segment i, so
// segment equality already gives it its own dictionary's tokens.
HierMask build_mask(const EncodedReport& encoded);

struct EncoderLayerParams {
    Param ln_gain, ln_offset;
    Param wq, wk, wv, wo;
    Param mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct EncoderParams {
    EncoderConfig config;
    Param w_emb;    // vocab_size x a
    Param p_table;  // max_group_pos x a
    std::vector<EncoderLayerParams> layers;

    static EncoderParams init(const EncoderConfig& config, Rng& rng);
    std::vector<Param*> all();
};

// h_0 rows: W_emb[token] + P_table[group position].
int embed(Tape& tape, const std::vector<int>& token_ids,
          const std::vector<int>& group_pos_ids, EncoderParams& params);

// Multi-head bidirectional attention with the additive mask bias.
int hier_attn(Tape& tape, int h, const Mat& mask_bias, EncoderLayerParams& layer,
              int num_heads);

// Parallel residual, both branches reading the shared pre-norm of h:
// h + Attn(ln(h)) + MLP(ln(h)).
int hier_enc_layer(Tape& tape, int h, const Mat& mask_bias, EncoderLayerParams& layer,
                   int num_heads);

// tokenize -> mask -> embed -> L x layer. Position ids may be overridden
// (the sequential-position ablation passes 0..n-1).
int encode(Tape& tape, const EncodedReport& encoded, EncoderParams& params,
           const Mat& mask_bias, const std::vector<int>* position_override = nullptr);

}  // namespace dictllm
