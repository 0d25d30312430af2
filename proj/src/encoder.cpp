#include "dictllm/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace dictllm {

void EncoderConfig::validate() const {
    if (num_layers < 0) throw std::invalid_argument("num_layers must be >= 0");
    if (hidden_dim <= 0 || num_heads <= 0 || hidden_dim % num_heads != 0)
        throw std::invalid_argument("hidden_dim must be a positive multiple of num_heads");
    if (max_group_pos < 2) throw std::invalid_argument("max_group_pos must be >= 2");
    if (vocab_size <= 0) throw std::invalid_argument("vocab_size must be positive");
    if (mlp_expansion <= 0) throw std::invalid_argument("mlp_expansion must be positive");
}

Mat HierMask::to_bias() const {
    Mat bias = Mat::Zero(visible.rows(), visible.cols());
    for (Eigen::Index i = 0; i < visible.rows(); ++i)
        for (Eigen::Index j = 0; j < visible.cols(); ++j)
            if (!visible(i, j)) bias(i, j) = kMaskedLogit;
    return bias;
}

HierMask HierMask::all_true(Eigen::Index n) {
    return HierMask{BoolMat::Constant(n, n, true)};
}

HierMask build_mask(const EncodedReport& encoded) {
    const Eigen::Index n = static_cast<Eigen::Index>(encoded.size());
    BoolMat m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool spec_i = encoded.is_special[i];
        const bool cls_i = encoded.token_ids[i] == Vocabulary::kClsId;
        for (Eigen::Index j = 0; j < n; ++j) {
            const bool spec_j = encoded.is_special[j];
            const bool cls_j = encoded.token_ids[j] == Vocabulary::kClsId;
            m(i, j) = (spec_i && spec_j) || cls_i || cls_j ||
                      encoded.segment_ids[i] == encoded.segment_ids[j];
        }
    }
    return HierMask{std::move(m)};
}

namespace {

Mat normal_init(Eigen::Index rows, Eigen::Index cols, double std, Rng& rng) {
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = std * rng.next_normal();
    return m;
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config, Rng& rng) {
    config.validate();
    const int a = config.hidden_dim;
    const int f = a * config.mlp_expansion;
    const double std = 0.02;
    EncoderParams p{config,
                    Param("enc.w_emb", normal_init(config.vocab_size, a, std, rng)),
                    Param("enc.p_table", normal_init(config.max_group_pos, a, std, rng)),
                    {}};
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string pre = "enc.layer" + std::to_string(l) + ".";
        p.layers.push_back(EncoderLayerParams{
            Param(pre + "ln_gain", Mat::Ones(1, a)),
            Param(pre + "ln_offset", Mat::Zero(1, a)),
            Param(pre + "wq", normal_init(a, a, std, rng)),
            Param(pre + "wk", normal_init(a, a, std, rng)),
            Param(pre + "wv", normal_init(a, a, std, rng)),
            Param(pre + "wo", normal_init(a, a, std, rng)),
            Param(pre + "mlp_w1", normal_init(a, f, std, rng)),
            Param(pre + "mlp_b1", Mat::Zero(1, f)),
            Param(pre + "mlp_w2", normal_init(f, a, std, rng)),
            Param(pre + "mlp_b2", Mat::Zero(1, a)),
        });
    }
    return p;
}

std::vector<Param*> EncoderParams::all() {
    std::vector<Param*> out = {&w_emb, &p_table};
    for (auto& l : layers) {
        for (Param* p : {&l.ln_gain, &l.ln_offset, &l.wq, &l.wk, &l.wv, &l.wo,
                         &l.mlp_w1, &l.mlp_b1, &l.mlp_w2, &l.mlp_b2})
            out.push_back(p);
    }
    return out;
}

int embed(Tape& tape, const std::vector<int>& token_ids,
          const std::vector<int>& group_pos_ids, EncoderParams& params) {
    int w = tape.leaf(params.w_emb);
    int p = tape.leaf(params.p_table);
    return tape.add(tape.gather_rows(w, token_ids), tape.gather_rows(p, group_pos_ids));
}

int hier_attn(Tape& tape, int h, const Mat& mask_bias, EncoderLayerParams& layer,
              int num_heads) {
    const Eigen::Index a = tape.value(h).cols();
    const Eigen::Index dh = a / num_heads;
    int q = tape.matmul(h, tape.leaf(layer.wq));
    int k = tape.matmul(h, tape.leaf(layer.wk));
    int v = tape.matmul(h, tape.leaf(layer.wv));
    std::vector<int> heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int head = 0; head < num_heads; ++head) {
        int qh = tape.slice_cols(q, head * dh, dh);
        int kh = tape.slice_cols(k, head * dh, dh);
        int vh = tape.slice_cols(v, head * dh, dh);
        int scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dk);
        int probs = tape.softmax_rows(scores, mask_bias);
        heads.push_back(tape.matmul(probs, vh));
    }
    return tape.matmul(tape.concat_cols(heads), tape.leaf(layer.wo));
}

int hier_enc_layer(Tape& tape, int h, const Mat& mask_bias, EncoderLayerParams& layer,
                   int num_heads) {
    int hn = tape.layernorm_rows(h, tape.leaf(layer.ln_gain), tape.leaf(layer.ln_offset));
    int attn = hier_attn(tape, hn, mask_bias, layer, num_heads);
    int mlp = tape.add_rowvec(
        tape.matmul(
            tape.gelu(tape.add_rowvec(tape.matmul(hn, tape.leaf(layer.mlp_w1)),
                                      tape.leaf(layer.mlp_b1))),
            tape.leaf(layer.mlp_w2)),
        tape.leaf(layer.mlp_b2));
    return tape.add(tape.add(h, attn), mlp);
}

int encode(Tape& tape, const EncodedReport& encoded, EncoderParams& params,
           const Mat& mask_bias, const std::vector<int>* position_override) {
    const std::vector<int>& positions =
        position_override ? *position_override : encoded.group_pos_ids;
    int h = embed(tape, encoded.token_ids, positions, params);
    for (auto& layer : params.layers)
        h = hier_enc_layer(tape, h, mask_bias, layer, params.config.num_heads);
    return h;
}

}  // namespace dictllm
