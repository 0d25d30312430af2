#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dictllm/baseline.hpp"
#include "dictllm/encoder.hpp"
#include "dictllm/lm.hpp"
#include "dictllm/metrics.hpp"
#include "dictllm/ot_align.hpp"
#include "dictllm/report.hpp"
#include "dictllm/tokenizer.hpp"

namespace dictllm {

enum class PipelineMode { kDictLLM, kSerialize };

struct AblationFlags {
    bool no_group_pe = false;    // sequential positions instead of P_group
    bool no_attn_bias = false;   // all-true visibility mask
    bool linear_align = false;   // mean-pool + affine instead of OT

    bool any() const { return no_group_pe || no_attn_bias || linear_align; }
};

struct ModelConfig {
    PipelineMode mode = PipelineMode::kDictLLM;
    EncoderConfig encoder;
    AlignConfig align;
    LMConfig lm;
    AblationFlags ablation;
};

// The full trainable pipeline: dict encoder + alignment + toy LM, or the
// text-serialization baseline (toy LM only).
struct Model {
    ModelConfig config;
    Vocabulary vocab;
    TextVocab text_vocab;
    std::optional<EncoderParams> encoder;
    std::optional<AlignParams> align;
    std::optional<LinearAlignParams> lin_align;
    std::optional<LMParams> lm;

    static Model create(ModelConfig config, Vocabulary vocab, TextVocab text_vocab,
                        uint64_t seed);
    std::vector<Param*> all_params();
};

// Builds both vocabularies from the training corpus for the given mode.
Model build_model(ModelConfig config, const std::vector<DiagnosisSample>& corpus,
                  uint64_t seed);

// Report-side LM input: virtual-token embeddings for dictllm, serialized
// token ids for the baseline.
struct ReportInput {
    int embedding_node = -1;        // dictllm: n x b tape node
    std::vector<int> token_ids;     // serialize: whitespace token ids
    int footprint = 0;              // LM positions consumed by the report
    int truncated_pairs = 0;        // serialize: pairs dropped by head-keep truncation
    bool sinkhorn_converged = true;
};

// max_report_tokens < 0 disables truncation (dictllm never truncates).
ReportInput build_report_input(Tape& tape, Model& model, const LabReportSet& report,
                               int max_report_tokens = -1,
                               bool fixed_sinkhorn_iterations = false);

// Causal logits for the concatenation [report part | text | BOS target...].
// Returns the logits node; rows `footprint + |text| ..` predict the
// target sequence (targets + EOS).
struct ForwardOutput {
    int logits = -1;
    int loss = -1;  // 1x1 node, mean cross-entropy over target positions
    ReportInput report;
};

ForwardOutput forward_loss(Tape& tape, Model& model, const DiagnosisSample& sample,
                           bool fixed_sinkhorn_iterations = false);

struct TrainConfig {
    double learning_rate = 2e-5;  // scaled-down backbones keep the published default
    double warmup_ratio = 0.01;
    int epochs = 6;
    int batch_size = 16;
    double weight_decay = 0.01;
    uint64_t seed = 0;

    void validate() const;
};

struct TrainStep {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
};

// Joint teacher-forced training of every component with AdamW and linear
// warmup over warmup_ratio of the total steps. Deterministic given seed.
// NaN loss aborts with step/lr/grad-norm diagnostics.
std::vector<TrainStep> train(Model& model, const std::vector<DiagnosisSample>& dataset,
                             const TrainConfig& config,
                             const std::string& metrics_log_path = "");

struct GenerationResult {
    std::string text;
    int report_footprint = 0;
    int truncated_pairs = 0;
};

// Greedy decoding, deterministic.
GenerationResult generate(Model& model, const LabReportSet& report,
                          const std::string& patient_text);

struct SampleEval {
    PrfScore rouge;
    PrfScore knowledge;
    std::string generated;
    int report_footprint = 0;
};

struct EvalReport {
    std::vector<SampleEval> samples;
    PrfScore mean_rouge;      // macro average
    PrfScore mean_knowledge;  // macro average
    std::optional<double> mean_rc;
    std::vector<double> per_sample_rc;
};

// Greedy evaluation over the corpus. With perturb_seed set, inputs are
// perturbed and RC is reported against the unperturbed generations.
// Worker count comes from the DICTENC_THREADS environment variable
// (default 1); results are ordered by sample index either way.
EvalReport evaluate(Model& model, const std::vector<DiagnosisSample>& samples,
                    std::optional<uint64_t> perturb_seed = std::nullopt);

std::string eval_report_to_json(const EvalReport& report);

// Binary checkpoint (magic/version/shape table + row-major float32
// payload) plus JSON sidecars: <path>.json for the config,
// <path>.vocab.json and <path>.textvocab.json for the vocabularies.
void save_model(Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace dictllm
