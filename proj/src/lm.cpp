#include "dictllm/lm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dictllm/metrics.hpp"
#include "json.hpp"

namespace dictllm {

TextVocab::TextVocab() {
    tokens_ = {"[PAD]", "[BOS]", "[EOS]", "[UNK]"};
    for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) ids_[tokens_[i]] = i;
}

int TextVocab::add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    int id = size();
    tokens_.push_back(token);
    ids_[token] = id;
    return id;
}

int TextVocab::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string& TextVocab::token_of(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("text token id out of range");
    return tokens_[id];
}

std::vector<int> TextVocab::encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& tok : whitespace_tokens(text)) ids.push_back(id_of(tok));
    return ids;
}

std::string TextVocab::decode(const std::vector<int>& ids) const {
    std::ostringstream out;
    bool first = true;
    for (int id : ids) {
        if (!first) out << " ";
        first = false;
        out << token_of(id);
    }
    return out.str();
}

void TextVocab::save(const std::string& path) const {
    nlohmann::json j;
    for (int i = 0; i < size(); ++i) j[tokens_[i]] = i;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write text vocabulary file: " + path);
    out << j.dump(2) << "\n";
}

TextVocab TextVocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open text vocabulary file: " + path);
    nlohmann::json j;
    in >> j;
    std::vector<std::string> tokens(j.size());
    for (auto it = j.begin(); it != j.end(); ++it) tokens.at(it.value().get<int>()) = it.key();
    TextVocab vocab;
    for (size_t i = 4; i < tokens.size(); ++i) vocab.add(tokens[i]);
    return vocab;
}

void LMConfig::validate() const {
    if (num_layers < 1) throw std::invalid_argument("lm: num_layers must be >= 1");
    if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0)
        throw std::invalid_argument("lm: embed_dim must be a positive multiple of num_heads");
    if (text_vocab_size <= 0) throw std::invalid_argument("lm: text_vocab_size must be positive");
    if (max_seq_len < 2) throw std::invalid_argument("lm: max_seq_len must be >= 2");
    if (max_new_tokens < 1) throw std::invalid_argument("lm: max_new_tokens must be >= 1");
}

namespace {

Mat normal_init(Eigen::Index rows, Eigen::Index cols, double std, Rng& rng) {
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = std * rng.next_normal();
    return m;
}

}  // namespace

LMParams LMParams::init(const LMConfig& config, Rng& rng) {
    config.validate();
    const int b = config.embed_dim;
    const int f = 4 * b;
    const double std = 0.02;
    LMParams p{config,
               Param("lm.tok_emb", normal_init(config.text_vocab_size, b, std, rng)),
               Param("lm.pos_emb", normal_init(config.max_seq_len, b, std, rng)),
               {},
               Param("lm.final_ln_gain", Mat::Ones(1, b)),
               Param("lm.final_ln_offset", Mat::Zero(1, b)),
               Param("lm.w_out", Mat::Zero(b, config.text_vocab_size))};
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string pre = "lm.layer" + std::to_string(l) + ".";
        p.layers.push_back(LMLayerParams{
            Param(pre + "ln1_gain", Mat::Ones(1, b)),
            Param(pre + "ln1_offset", Mat::Zero(1, b)),
            Param(pre + "wq", normal_init(b, b, std, rng)),
            Param(pre + "wk", normal_init(b, b, std, rng)),
            Param(pre + "wv", normal_init(b, b, std, rng)),
            Param(pre + "wo", normal_init(b, b, std, rng)),
            Param(pre + "ln2_gain", Mat::Ones(1, b)),
            Param(pre + "ln2_offset", Mat::Zero(1, b)),
            Param(pre + "mlp_w1", normal_init(b, f, std, rng)),
            Param(pre + "mlp_b1", Mat::Zero(1, f)),
            Param(pre + "mlp_w2", normal_init(f, b, std, rng)),
            Param(pre + "mlp_b2", Mat::Zero(1, b)),
        });
    }
    return p;
}

std::vector<Param*> LMParams::all() {
    std::vector<Param*> out = {&tok_emb, &pos_emb};
    for (auto& l : layers) {
        for (Param* p : {&l.ln1_gain, &l.ln1_offset, &l.wq, &l.wk, &l.wv, &l.wo,
                         &l.ln2_gain, &l.ln2_offset, &l.mlp_w1, &l.mlp_b1, &l.mlp_w2,
                         &l.mlp_b2})
            out.push_back(p);
    }
    out.push_back(&final_ln_gain);
    out.push_back(&final_ln_offset);
    out.push_back(&w_out);
    return out;
}

int lm_forward(Tape& tape, int input_embeddings, LMParams& params) {
    const Eigen::Index t = tape.value(input_embeddings).rows();
    if (t > params.config.max_seq_len)
        throw SequenceOverflowError("sequence length " + std::to_string(t) +
                                    " exceeds max_seq_len " +
                                    std::to_string(params.config.max_seq_len));
    std::vector<int> positions(t);
    for (Eigen::Index i = 0; i < t; ++i) positions[i] = static_cast<int>(i);
    int h = tape.add(input_embeddings,
                     tape.gather_rows(tape.leaf(params.pos_emb), positions));

    Mat causal = Mat::Zero(t, t);
    for (Eigen::Index i = 0; i < t; ++i)
        for (Eigen::Index j = i + 1; j < t; ++j) causal(i, j) = -1e9;

    const int num_heads = params.config.num_heads;
    const Eigen::Index dh = params.config.embed_dim / num_heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dh));
    for (auto& layer : params.layers) {
        int hn = tape.layernorm_rows(h, tape.leaf(layer.ln1_gain),
                                     tape.leaf(layer.ln1_offset));
        int q = tape.matmul(hn, tape.leaf(layer.wq));
        int k = tape.matmul(hn, tape.leaf(layer.wk));
        int v = tape.matmul(hn, tape.leaf(layer.wv));
        std::vector<int> heads;
        for (int head = 0; head < num_heads; ++head) {
            int qh = tape.slice_cols(q, head * dh, dh);
            int kh = tape.slice_cols(k, head * dh, dh);
            int vh = tape.slice_cols(v, head * dh, dh);
            int scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dk);
            heads.push_back(tape.matmul(tape.softmax_rows(scores, causal), vh));
        }
        h = tape.add(h, tape.matmul(tape.concat_cols(heads), tape.leaf(layer.wo)));
        int hn2 = tape.layernorm_rows(h, tape.leaf(layer.ln2_gain),
                                      tape.leaf(layer.ln2_offset));
        int mlp = tape.add_rowvec(
            tape.matmul(tape.gelu(tape.add_rowvec(
                            tape.matmul(hn2, tape.leaf(layer.mlp_w1)),
                            tape.leaf(layer.mlp_b1))),
                        tape.leaf(layer.mlp_w2)),
            tape.leaf(layer.mlp_b2));
        h = tape.add(h, mlp);
    }
    int hf = tape.layernorm_rows(h, tape.leaf(params.final_ln_gain),
                                 tape.leaf(params.final_ln_offset));
    return tape.matmul(hf, tape.leaf(params.w_out));
}

}  // namespace dictllm
