#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dictllm/rng.hpp"
#include "dictllm/tape.hpp"

namespace dictllm {

// Whitespace-token vocabulary for the text branch. Reserved: 0 [PAD],
// 1 [BOS], 2 [EOS], 3 [UNK].
class TextVocab {
public:
    static constexpr int kPadId = 0;
    static constexpr int kBosId = 1;
    static constexpr int kEosId = 2;
    static constexpr int kUnkId = 3;

    TextVocab();

    int add(const std::string& token);
    int id_of(const std::string& token) const;  // [UNK] when absent
    const std::string& token_of(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

    void save(const std::string& path) const;
    static TextVocab load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

struct LMConfig {
    int num_layers = 2;
    int embed_dim = 48;  // must equal AlignConfig::target_dim
    int num_heads = 4;
    int text_vocab_size = 0;
    int max_seq_len = 512;
    int max_new_tokens = 24;

    void validate() const;
};

struct LMLayerParams {
    Param ln1_gain, ln1_offset;
    Param wq, wk, wv, wo;
    Param ln2_gain, ln2_offset;
    Param mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct LMParams {
    LMConfig config;
    Param tok_emb;  // V x b
    Param pos_emb;  // max_seq_len x b
    std::vector<LMLayerParams> layers;
    Param final_ln_gain, final_ln_offset;
    Param w_out;  // b x V, zero-initialized so the untrained model is uniform

    static LMParams init(const LMConfig& config, Rng& rng);
    std::vector<Param*> all();
};

class SequenceOverflowError : public std::runtime_error {
public:
    explicit SequenceOverflowError(const std::string& what) : std::runtime_error(what) {}
};

// Causal decoder over pre-built input row embeddings (T x b). Adds
// learned positions over the full concatenated sequence and returns
// logits for every position (T x V).
int lm_forward(Tape& tape, int input_embeddings, LMParams& params);

}  // namespace dictllm
