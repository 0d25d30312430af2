#include "dictllm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace dictllm {

using nlohmann::json;

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
    if (warmup_ratio < 0.0 || warmup_ratio >= 1.0)
        throw std::invalid_argument("warmup_ratio must be in [0, 1)");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
}

Model Model::create(ModelConfig config, Vocabulary vocab, TextVocab text_vocab,
                    uint64_t seed) {
    config.encoder.vocab_size = vocab.size();
    config.lm.text_vocab_size = text_vocab.size();
    config.align.target_dim = config.lm.embed_dim;
    if (config.ablation.no_group_pe && config.encoder.max_group_pos < 512)
        config.encoder.max_group_pos = 512;  // sequential ids need room

    Model model;
    model.config = config;
    model.vocab = std::move(vocab);
    model.text_vocab = std::move(text_vocab);
    Rng rng(seed ^ 0x5eedf00dULL);
    if (config.mode == PipelineMode::kDictLLM) {
        model.encoder = EncoderParams::init(config.encoder, rng);
        if (config.ablation.linear_align) {
            model.lin_align =
                LinearAlignParams::init(config.encoder.hidden_dim, config.align, rng);
        } else {
            model.align = AlignParams::init(config.encoder.hidden_dim, config.align, rng);
        }
    }
    model.lm = LMParams::init(config.lm, rng);
    return model;
}

std::vector<Param*> Model::all_params() {
    std::vector<Param*> out;
    if (encoder) {
        auto e = encoder->all();
        out.insert(out.end(), e.begin(), e.end());
    }
    if (align) {
        auto a = align->all();
        out.insert(out.end(), a.begin(), a.end());
    }
    if (lin_align) {
        auto a = lin_align->all();
        out.insert(out.end(), a.begin(), a.end());
    }
    auto l = lm->all();
    out.insert(out.end(), l.begin(), l.end());
    return out;
}

Model build_model(ModelConfig config, const std::vector<DiagnosisSample>& corpus,
                  uint64_t seed) {
    std::vector<LabReportSet> reports;
    reports.reserve(corpus.size());
    for (const auto& s : corpus) reports.push_back(s.report);
    Vocabulary vocab = build_vocab(reports);

    TextVocab text_vocab;
    text_vocab.add(",");
    for (const auto& s : corpus) {
        for (const auto& tok : whitespace_tokens(s.patient_text)) text_vocab.add(tok);
        for (const auto& d : s.diagnoses) text_vocab.add(d);
        if (config.mode == PipelineMode::kSerialize) {
            for (const auto& tok : whitespace_tokens(serialize_baseline(s.report)))
                text_vocab.add(tok);
        }
    }
    return Model::create(std::move(config), std::move(vocab), std::move(text_vocab), seed);
}

ReportInput build_report_input(Tape& tape, Model& model, const LabReportSet& report,
                               int max_report_tokens, bool fixed_sinkhorn_iterations) {
    ReportInput out;
    if (model.config.mode == PipelineMode::kSerialize) {
        out.token_ids = model.text_vocab.encode(serialize_baseline(report));
        if (max_report_tokens >= 0 &&
            static_cast<int>(out.token_ids.size()) > max_report_tokens) {
            // Head-keep truncation; dropped pairs show up as dropped
            // "key:LABEL" tokens.
            for (size_t i = max_report_tokens; i < out.token_ids.size(); ++i) {
                const std::string& tok = model.text_vocab.token_of(out.token_ids[i]);
                if (tok.find(':') != std::string::npos) ++out.truncated_pairs;
            }
            out.token_ids.resize(max_report_tokens);
        }
        out.footprint = static_cast<int>(out.token_ids.size());
        return out;
    }

    EncodedReport encoded = tokenize(report, model.vocab);
    Mat mask_bias = model.config.ablation.no_attn_bias
                        ? HierMask::all_true(encoded.size()).to_bias()
                        : build_mask(encoded).to_bias();
    std::vector<int> sequential;
    const std::vector<int>* positions = nullptr;
    if (model.config.ablation.no_group_pe) {
        sequential.resize(encoded.size());
        for (size_t i = 0; i < encoded.size(); ++i) sequential[i] = static_cast<int>(i);
        positions = &sequential;
    }
    int h_last = encode(tape, encoded, *model.encoder, mask_bias, positions);
    if (model.config.ablation.linear_align) {
        out.embedding_node = linear_align(tape, h_last, *model.lin_align, model.config.align);
    } else {
        AlignResult aligned = align(tape, h_last, *model.align, model.config.align,
                                    fixed_sinkhorn_iterations);
        out.embedding_node = aligned.virtual_tokens;
        out.sinkhorn_converged = aligned.converged;
    }
    out.footprint = model.config.align.num_virtual_tokens;
    return out;
}

namespace {

// Rows for [report | text | BOS y_1..y_k]; target predictions are
// y_1..y_k then EOS.
struct SequenceParts {
    std::vector<int> suffix_ids;  // text + BOS + target prefix
    std::vector<int> targets;     // one per predicted position
    int predict_from = 0;         // first predicting row
};

SequenceParts teacher_forced_parts(const Model& model, const ReportInput& report,
                                   const std::vector<int>& text_ids,
                                   const std::vector<int>& target_ids) {
    SequenceParts parts;
    parts.suffix_ids = report.token_ids;  // empty for dictllm
    parts.suffix_ids.insert(parts.suffix_ids.end(), text_ids.begin(), text_ids.end());
    parts.predict_from = report.footprint + static_cast<int>(text_ids.size());
    parts.suffix_ids.push_back(TextVocab::kBosId);
    parts.suffix_ids.insert(parts.suffix_ids.end(), target_ids.begin(), target_ids.end());
    parts.targets = target_ids;
    parts.targets.push_back(TextVocab::kEosId);
    (void)model;
    return parts;
}

std::vector<int> target_token_ids(const Model& model, const DiagnosisSample& sample) {
    std::vector<int> ids;
    bool first = true;
    for (const auto& d : sample.diagnoses) {
        if (!first) ids.push_back(model.text_vocab.id_of(","));
        first = false;
        for (const auto& tok : whitespace_tokens(d))
            ids.push_back(model.text_vocab.id_of(tok));
    }
    return ids;
}

int input_embedding_node(Tape& tape, Model& model, const ReportInput& report,
                         const std::vector<int>& suffix_ids) {
    int tok_emb = tape.leaf(model.lm->tok_emb);
    int suffix = tape.gather_rows(tok_emb, suffix_ids);
    if (report.embedding_node >= 0)
        return tape.concat_rows({report.embedding_node, suffix});
    return suffix;
}

}  // namespace

ForwardOutput forward_loss(Tape& tape, Model& model, const DiagnosisSample& sample,
                           bool fixed_sinkhorn_iterations) {
    std::vector<int> text_ids = model.text_vocab.encode(sample.patient_text);
    std::vector<int> target_ids = target_token_ids(model, sample);

    int budget = -1;
    if (model.config.mode == PipelineMode::kSerialize) {
        budget = model.config.lm.max_seq_len - static_cast<int>(text_ids.size()) -
                 static_cast<int>(target_ids.size()) - 2;
        budget = std::max(budget, 0);
    }
    ForwardOutput out;
    out.report = build_report_input(tape, model, sample.report, budget,
                                    fixed_sinkhorn_iterations);

    SequenceParts parts = teacher_forced_parts(model, out.report, text_ids, target_ids);
    int input = input_embedding_node(tape, model, out.report, parts.suffix_ids);
    out.logits = lm_forward(tape, input, *model.lm);
    int predicted = tape.slice_rows(out.logits, parts.predict_from,
                                    static_cast<Eigen::Index>(parts.targets.size()));
    out.loss = tape.softmax_xent(predicted, parts.targets);
    return out;
}

namespace {

double global_grad_norm(const std::vector<Param*>& params) {
    double sq = 0.0;
    for (const Param* p : params) sq += p->grad.squaredNorm();
    return std::sqrt(sq);
}

void adamw_step(std::vector<Param*>& params, double lr, double weight_decay, int t) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (Param* p : params) {
        p->adam_m = beta1 * p->adam_m + (1.0 - beta1) * p->grad;
        p->adam_v = beta2 * p->adam_v.array() + (1.0 - beta2) * p->grad.array().square();
        Eigen::ArrayXXd mhat = p->adam_m.array() / bc1;
        Eigen::ArrayXXd vhat = p->adam_v.array() / bc2;
        p->value.array() -=
            lr * (mhat / (vhat.sqrt() + eps) + weight_decay * p->value.array());
    }
}

}  // namespace

std::vector<TrainStep> train(Model& model, const std::vector<DiagnosisSample>& dataset,
                             const TrainConfig& config,
                             const std::string& metrics_log_path) {
    config.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    std::vector<Param*> params = model.all_params();

    const int steps_per_epoch =
        (static_cast<int>(dataset.size()) + config.batch_size - 1) / config.batch_size;
    const int total_steps = steps_per_epoch * config.epochs;
    const int warmup_steps =
        std::max(1, static_cast<int>(config.warmup_ratio * total_steps));

    std::ofstream log;
    if (!metrics_log_path.empty()) {
        log.open(metrics_log_path);
        if (!log) throw std::runtime_error("cannot write metrics log: " + metrics_log_path);
    }

    Rng order_rng(config.seed ^ 0x0ddba11ULL);
    std::vector<TrainStep> curve;
    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<size_t> order(dataset.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order);

        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t end = std::min(order.size(),
                                        start + static_cast<size_t>(config.batch_size));
            for (Param* p : params) p->zero_grad();
            double batch_loss = 0.0;
            for (size_t i = start; i < end; ++i) {
                Tape tape;
                ForwardOutput fwd = forward_loss(tape, model, dataset[order[i]]);
                batch_loss += tape.value(fwd.loss)(0, 0);
                tape.backward(fwd.loss);
            }
            const double count = static_cast<double>(end - start);
            batch_loss /= count;
            for (Param* p : params) p->grad /= count;

            ++step;
            const double warm =
                step < warmup_steps ? static_cast<double>(step) / warmup_steps : 1.0;
            const double lr = config.learning_rate * warm;

            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "NaN/Inf loss at step " << step << " (lr " << lr
                    << ", grad norm " << global_grad_norm(params) << ")";
                throw std::runtime_error(msg.str());
            }
            adamw_step(params, lr, config.weight_decay, step);

            curve.push_back({step, batch_loss, lr});
            if (log) {
                log << json{{"step", step}, {"loss", batch_loss}, {"lr", lr}}.dump()
                    << "\n";
            }
        }
    }
    return curve;
}

namespace {

// Precomputed report-side values for repeated decoding steps.
struct ReportValues {
    Mat embedding;  // dictllm virtual tokens (may be empty)
    std::vector<int> token_ids;
    int footprint = 0;
    int truncated_pairs = 0;
};

ReportValues report_values(Model& model, const LabReportSet& report, int budget) {
    Tape tape;
    ReportInput in = build_report_input(tape, model, report, budget);
    ReportValues out;
    if (in.embedding_node >= 0) out.embedding = tape.value(in.embedding_node);
    out.token_ids = std::move(in.token_ids);
    out.footprint = in.footprint;
    out.truncated_pairs = in.truncated_pairs;
    return out;
}

}  // namespace

GenerationResult generate(Model& model, const LabReportSet& report,
                          const std::string& patient_text) {
    std::vector<int> text_ids = model.text_vocab.encode(patient_text);
    int budget = -1;
    if (model.config.mode == PipelineMode::kSerialize) {
        budget = model.config.lm.max_seq_len - static_cast<int>(text_ids.size()) -
                 model.config.lm.max_new_tokens - 1;
        budget = std::max(budget, 0);
    }
    ReportValues rv = report_values(model, report, budget);

    std::vector<int> suffix = rv.token_ids;
    suffix.insert(suffix.end(), text_ids.begin(), text_ids.end());
    suffix.push_back(TextVocab::kBosId);

    std::vector<int> generated;
    for (int i = 0; i < model.config.lm.max_new_tokens; ++i) {
        Tape tape;
        int tok_emb = tape.leaf(model.lm->tok_emb);
        int input = tape.gather_rows(tok_emb, suffix);
        if (rv.embedding.size() > 0)
            input = tape.concat_rows({tape.constant(rv.embedding), input});
        int logits = lm_forward(tape, input, *model.lm);
        const Mat& z = tape.value(logits);
        Eigen::Index next = 0;
        z.row(z.rows() - 1).maxCoeff(&next);
        if (next == TextVocab::kEosId) break;
        generated.push_back(static_cast<int>(next));
        suffix.push_back(static_cast<int>(next));
    }
    GenerationResult out;
    out.text = model.text_vocab.decode(generated);
    out.report_footprint = rv.footprint;
    out.truncated_pairs = rv.truncated_pairs;
    return out;
}

namespace {

int worker_count() {
    const char* env = std::getenv("DICTENC_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return n < 1 ? 1 : n;
}

std::string gold_text(const DiagnosisSample& sample) {
    std::string out;
    bool first = true;
    for (const auto& d : sample.diagnoses) {
        if (!first) out += " , ";
        first = false;
        out += d;
    }
    return out;
}

}  // namespace

EvalReport evaluate(Model& model, const std::vector<DiagnosisSample>& samples,
                    std::optional<uint64_t> perturb_seed) {
    EvalReport report;
    report.samples.resize(samples.size());
    report.per_sample_rc.resize(perturb_seed ? samples.size() : 0);

    auto run_one = [&](size_t i) {
        const DiagnosisSample& sample = samples[i];
        LabReportSet input_report =
            perturb_seed ? perturb(sample.report, *perturb_seed) : sample.report;
        GenerationResult gen = generate(model, input_report, sample.patient_text);
        SampleEval ev;
        ev.generated = gen.text;
        ev.report_footprint = gen.report_footprint;
        ev.rouge = rouge_l(gen.text, gold_text(sample));
        std::set<std::string> gold(sample.diagnoses.begin(), sample.diagnoses.end());
        ev.knowledge = knowledge_f1(extract_diagnoses(gen.text), gold);
        if (perturb_seed) {
            GenerationResult base = generate(model, sample.report, sample.patient_text);
            report.per_sample_rc[i] = relative_change(base.text, gen.text);
        }
        report.samples[i] = std::move(ev);
    };

    const int workers = std::min<int>(worker_count(), std::max<size_t>(samples.size(), 1));
    if (workers <= 1) {
        for (size_t i = 0; i < samples.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (size_t i = w; i < samples.size(); i += workers) run_one(i);
            });
        }
        for (auto& t : pool) t.join();
    }

    const double n = std::max<double>(1.0, static_cast<double>(samples.size()));
    for (const auto& ev : report.samples) {
        report.mean_rouge.precision += ev.rouge.precision / n;
        report.mean_rouge.recall += ev.rouge.recall / n;
        report.mean_rouge.f1 += ev.rouge.f1 / n;
        report.mean_knowledge.precision += ev.knowledge.precision / n;
        report.mean_knowledge.recall += ev.knowledge.recall / n;
        report.mean_knowledge.f1 += ev.knowledge.f1 / n;
    }
    if (perturb_seed) {
        double rc = 0.0;
        for (double r : report.per_sample_rc) rc += r / n;
        report.mean_rc = rc;
    }
    return report;
}

std::string eval_report_to_json(const EvalReport& report) {
    json j;
    auto prf = [](const PrfScore& s) {
        return json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
    };
    j["mean_rouge_l"] = prf(report.mean_rouge);
    j["mean_knowledge"] = prf(report.mean_knowledge);
    if (report.mean_rc) j["mean_rc"] = *report.mean_rc;
    json samples = json::array();
    for (size_t i = 0; i < report.samples.size(); ++i) {
        const auto& ev = report.samples[i];
        json js{{"rouge_l", prf(ev.rouge)},
                {"knowledge", prf(ev.knowledge)},
                {"generated", ev.generated},
                {"report_footprint", ev.report_footprint}};
        if (!report.per_sample_rc.empty()) js["rc"] = report.per_sample_rc[i];
        samples.push_back(std::move(js));
    }
    j["samples"] = std::move(samples);
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

constexpr uint32_t kCkptMagic = 0x444e4345;  // "ECND" little-endian: "DENC" on disk
constexpr uint32_t kCkptVersion = 1;

json config_to_json(const ModelConfig& c) {
    return json{
        {"mode", c.mode == PipelineMode::kDictLLM ? "dictllm" : "serialize"},
        {"encoder",
         {{"num_layers", c.encoder.num_layers},
          {"hidden_dim", c.encoder.hidden_dim},
          {"num_heads", c.encoder.num_heads},
          {"max_group_pos", c.encoder.max_group_pos},
          {"vocab_size", c.encoder.vocab_size},
          {"mlp_expansion", c.encoder.mlp_expansion}}},
        {"align",
         {{"num_virtual_tokens", c.align.num_virtual_tokens},
          {"target_dim", c.align.target_dim},
          {"epsilon", c.align.epsilon},
          {"max_iters", c.align.max_iters},
          {"convergence_tol", c.align.convergence_tol}}},
        {"lm",
         {{"num_layers", c.lm.num_layers},
          {"embed_dim", c.lm.embed_dim},
          {"num_heads", c.lm.num_heads},
          {"text_vocab_size", c.lm.text_vocab_size},
          {"max_seq_len", c.lm.max_seq_len},
          {"max_new_tokens", c.lm.max_new_tokens}}},
        {"ablation",
         {{"no_group_pe", c.ablation.no_group_pe},
          {"no_attn_bias", c.ablation.no_attn_bias},
          {"linear_align", c.ablation.linear_align}}}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.mode = j.at("mode").get<std::string>() == "serialize" ? PipelineMode::kSerialize
                                                            : PipelineMode::kDictLLM;
    const json& e = j.at("encoder");
    c.encoder.num_layers = e.at("num_layers").get<int>();
    c.encoder.hidden_dim = e.at("hidden_dim").get<int>();
    c.encoder.num_heads = e.at("num_heads").get<int>();
    c.encoder.max_group_pos = e.at("max_group_pos").get<int>();
    c.encoder.vocab_size = e.at("vocab_size").get<int>();
    c.encoder.mlp_expansion = e.at("mlp_expansion").get<int>();
    const json& a = j.at("align");
    c.align.num_virtual_tokens = a.at("num_virtual_tokens").get<int>();
    c.align.target_dim = a.at("target_dim").get<int>();
    c.align.epsilon = a.at("epsilon").get<double>();
    c.align.max_iters = a.at("max_iters").get<int>();
    c.align.convergence_tol = a.at("convergence_tol").get<double>();
    const json& l = j.at("lm");
    c.lm.num_layers = l.at("num_layers").get<int>();
    c.lm.embed_dim = l.at("embed_dim").get<int>();
    c.lm.num_heads = l.at("num_heads").get<int>();
    c.lm.text_vocab_size = l.at("text_vocab_size").get<int>();
    c.lm.max_seq_len = l.at("max_seq_len").get<int>();
    c.lm.max_new_tokens = l.at("max_new_tokens").get<int>();
    const json& ab = j.at("ablation");
    c.ablation.no_group_pe = ab.at("no_group_pe").get<bool>();
    c.ablation.no_attn_bias = ab.at("no_attn_bias").get<bool>();
    c.ablation.linear_align = ab.at("linear_align").get<bool>();
    return c;
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("truncated checkpoint file");
    return v;
}

}  // namespace

void save_model(Model& model, const std::string& path) {
    std::vector<Param*> params = model.all_params();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    write_pod(out, kCkptMagic);
    write_pod(out, kCkptVersion);
    write_pod(out, static_cast<uint32_t>(params.size()));
    for (const Param* p : params) {
        write_pod(out, static_cast<uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_pod(out, static_cast<uint64_t>(p->value.rows()));
        write_pod(out, static_cast<uint64_t>(p->value.cols()));
    }
    for (const Param* p : params) {
        const Mat& m = p->value;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                write_pod(out, static_cast<float>(m(r, c)));
    }
    std::ofstream sidecar(path + ".json");
    if (!sidecar) throw std::runtime_error("cannot write checkpoint sidecar: " + path);
    sidecar << config_to_json(model.config).dump(2) << "\n";
    model.vocab.save(path + ".vocab.json");
    model.text_vocab.save(path + ".textvocab.json");
}

Model load_model(const std::string& path) {
    std::ifstream sidecar(path + ".json");
    if (!sidecar) throw std::runtime_error("cannot open checkpoint sidecar: " + path + ".json");
    json j;
    sidecar >> j;
    ModelConfig config = config_from_json(j);
    Vocabulary vocab = Vocabulary::load(path + ".vocab.json");
    TextVocab text_vocab = TextVocab::load(path + ".textvocab.json");
    if (vocab.size() != config.encoder.vocab_size)
        throw std::runtime_error("checkpoint/vocabulary size mismatch");
    if (text_vocab.size() != config.lm.text_vocab_size)
        throw std::runtime_error("checkpoint/text-vocabulary size mismatch");
    Model model = Model::create(config, std::move(vocab), std::move(text_vocab), 0);

    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    if (read_pod<uint32_t>(in) != kCkptMagic)
        throw std::runtime_error("bad checkpoint magic: " + path);
    if (read_pod<uint32_t>(in) != kCkptVersion)
        throw std::runtime_error("unsupported checkpoint version: " + path);
    std::vector<Param*> params = model.all_params();
    const uint32_t count = read_pod<uint32_t>(in);
    if (count != params.size())
        throw std::runtime_error("checkpoint parameter count mismatch: " + path);
    for (Param* p : params) {
        const uint32_t name_len = read_pod<uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rows = static_cast<Eigen::Index>(read_pod<uint64_t>(in));
        const auto cols = static_cast<Eigen::Index>(read_pod<uint64_t>(in));
        if (name != p->name || rows != p->value.rows() || cols != p->value.cols())
            throw std::runtime_error("checkpoint shape-table mismatch at " + name);
    }
    for (Param* p : params) {
        for (Eigen::Index r = 0; r < p->value.rows(); ++r)
            for (Eigen::Index c = 0; c < p->value.cols(); ++c)
                p->value(r, c) = static_cast<double>(read_pod<float>(in));
    }
    return model;
}

}  // namespace dictllm
