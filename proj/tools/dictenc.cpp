// dictenc: batch CLI for the dictionary-encoding pipeline.
//
//   dictenc gen-data   --config synth.json --out corpus.jsonl --rules rules.json
//   dictenc train      --corpus corpus.jsonl --out model.bin [--mode dictllm|serialize]
//                      [--no-group-pe] [--no-attn-bias] [--linear-align]
//                      [--virtual-tokens N] [--config train.json] [--log metrics.jsonl]
//   dictenc eval       --checkpoint model.bin --corpus corpus.jsonl
//                      [--perturb-seed S] [--out report.json]
//   dictenc scale-eval --checkpoint model.bin --config synth.json --rules rules.json
//                      --pairs-list 8,32,128,256 [--samples N] [--out table.json]
//
// Every command is deterministic given its seed arguments and exits 0 on
// success, 1 on failure. Outputs are JSON.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dictllm/pipeline.hpp"
#include "dictllm/synth.hpp"
#include "nlohmann/json.hpp"

using namespace dictllm;
using nlohmann::json;

namespace {

std::vector<int> parse_pairs_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        int v = std::stoi(item);
        if (v <= 0) throw CLI::ValidationError("--pairs-list entries must be positive");
        out.push_back(v);
    }
    if (out.empty()) throw CLI::ValidationError("--pairs-list is empty");
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

struct TrainOptions {
    std::string corpus_path;
    std::string out_path;
    std::string config_path;
    std::string log_path;
    std::string mode = "dictllm";
    bool no_group_pe = false;
    bool no_attn_bias = false;
    bool linear_align = false;
    int virtual_tokens = 64;  // published default for n
    uint64_t seed = 0;
};

// Optional JSON training config; any present key overrides the defaults,
// and explicit CLI flags override the file in turn.
void apply_train_config(const std::string& path, TrainConfig& tc, ModelConfig& mc) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    json j = json::parse(in);
    // Published defaults preserved when absent: lr 2e-5, warmup 0.01, 6 epochs.
    tc.learning_rate = j.value("learning_rate", tc.learning_rate);
    tc.warmup_ratio = j.value("warmup_ratio", tc.warmup_ratio);
    tc.epochs = j.value("epochs", tc.epochs);
    tc.batch_size = j.value("batch_size", tc.batch_size);
    tc.weight_decay = j.value("weight_decay", tc.weight_decay);
    mc.encoder.num_layers = j.value("encoder_layers", mc.encoder.num_layers);
    mc.encoder.hidden_dim = j.value("hidden_dim", mc.encoder.hidden_dim);
    mc.encoder.num_heads = j.value("encoder_heads", mc.encoder.num_heads);
    mc.lm.num_layers = j.value("lm_layers", mc.lm.num_layers);
    mc.lm.embed_dim = j.value("lm_dim", mc.lm.embed_dim);
    mc.lm.num_heads = j.value("lm_heads", mc.lm.num_heads);
    mc.lm.max_seq_len = j.value("max_seq_len", mc.lm.max_seq_len);
    mc.lm.max_new_tokens = j.value("max_new_tokens", mc.lm.max_new_tokens);
    mc.align.epsilon = j.value("epsilon", mc.align.epsilon);
    mc.align.max_iters = j.value("sinkhorn_max_iters", mc.align.max_iters);
}

int cmd_gen_data(const std::string& config_path, const std::string& out_path,
                 const std::string& rules_path) {
    SynthConfig cfg = SynthConfig::from_json_file(config_path);
    cfg.validate();
    std::vector<DiseaseRule> rules = make_rules(cfg);
    std::vector<DiagnosisSample> corpus = generate_corpus(cfg, rules);
    save_corpus(corpus, out_path);
    if (!rules_path.empty()) save_rules(rules, rules_path);
    json summary = {{"samples", corpus.size()},
                    {"diseases", rules.size()},
                    {"corpus", out_path},
                    {"rules", rules_path}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_train(const TrainOptions& opt) {
    if (opt.mode != "dictllm" && opt.mode != "serialize")
        throw std::runtime_error("--mode must be dictllm or serialize");
    const bool serialize = opt.mode == "serialize";
    if (serialize && (opt.no_group_pe || opt.no_attn_bias || opt.linear_align))
        throw std::runtime_error("ablation flags require --mode dictllm");

    ModelConfig mc;
    mc.mode = serialize ? PipelineMode::kSerialize : PipelineMode::kDictLLM;
    mc.ablation.no_group_pe = opt.no_group_pe;
    mc.ablation.no_attn_bias = opt.no_attn_bias;
    mc.ablation.linear_align = opt.linear_align;
    mc.align.num_virtual_tokens = opt.virtual_tokens;
    TrainConfig tc;
    tc.seed = opt.seed;
    if (!opt.config_path.empty()) apply_train_config(opt.config_path, tc, mc);
    tc.validate();

    std::vector<DiagnosisSample> corpus = load_corpus(opt.corpus_path);
    if (corpus.empty()) throw std::runtime_error("training corpus is empty");
    Model model = build_model(mc, corpus, opt.seed);
    std::vector<TrainStep> curve = train(model, corpus, tc, opt.log_path);
    save_model(model, opt.out_path);

    json summary = {{"steps", curve.size()},
                    {"first_loss", curve.empty() ? 0.0 : curve.front().loss},
                    {"final_loss", curve.empty() ? 0.0 : curve.back().loss},
                    {"checkpoint", opt.out_path}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus_path,
             std::optional<uint64_t> perturb_seed, const std::string& out_path) {
    Model model = load_model(checkpoint);
    std::vector<DiagnosisSample> corpus = load_corpus(corpus_path);
    if (corpus.empty()) throw std::runtime_error("eval corpus is empty");
    EvalReport report = evaluate(model, corpus, perturb_seed);
    std::string text = eval_report_to_json(report);
    if (!out_path.empty()) write_text(out_path, text);
    std::cout << text << "\n";
    return 0;
}

int cmd_scale_eval(const std::string& checkpoint, const std::string& config_path,
                   const std::string& rules_path, const std::string& pairs_csv,
                   int samples_per_size, uint64_t seed, const std::string& out_path) {
    Model model = load_model(checkpoint);
    SynthConfig base = SynthConfig::from_json_file(config_path);
    std::vector<DiseaseRule> rules = load_rules(rules_path);
    std::vector<int> sizes = parse_pairs_list(pairs_csv);

    json table = json::array();
    for (size_t idx = 0; idx < sizes.size(); ++idx) {
        const int target_pairs = sizes[idx];
        SynthConfig cfg = base;
        // Fresh reports whose total pair count hits the target: fix the
        // per-dictionary pair count and scale the dictionary count.
        const int per_dict = std::min(base.keys_per_kind, std::max(2, base.max_pairs_per_dict));
        const int dicts = std::max(1, (target_pairs + per_dict - 1) / per_dict);
        cfg.min_pairs_per_dict = std::min(per_dict, target_pairs);
        cfg.max_pairs_per_dict = std::min(per_dict, target_pairs);
        cfg.min_dicts_per_report = dicts;
        cfg.max_dicts_per_report = dicts;
        cfg.num_samples = samples_per_size;
        cfg.seed = seed + idx;
        cfg.validate();
        std::vector<DiagnosisSample> corpus = generate_corpus(cfg, rules);
        EvalReport report = evaluate(model, corpus);

        double mean_pairs = 0.0, mean_tokens = 0.0;
        for (size_t s = 0; s < corpus.size(); ++s) {
            mean_pairs += static_cast<double>(corpus[s].report.total_pairs());
            mean_tokens += static_cast<double>(report.samples[s].report_footprint);
        }
        mean_pairs /= static_cast<double>(corpus.size());
        mean_tokens /= static_cast<double>(corpus.size());
        table.push_back({{"target_pairs", target_pairs},
                         {"mean_total_pairs", mean_pairs},
                         {"mean_report_lm_tokens", mean_tokens},
                         {"knowledge_f1", report.mean_knowledge.f1},
                         {"rouge_l_f1", report.mean_rouge.f1}});
    }
    std::string text = table.dump(2);
    if (!out_path.empty()) write_text(out_path, text);
    std::cout << text << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dictionary-encoding pipeline for structured lab reports"};
    app.require_subcommand(1);

    // gen-data
    std::string gd_config, gd_out, gd_rules;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus and its rules");
    gen->add_option("--config", gd_config, "SynthConfig JSON")->required();
    gen->add_option("--out", gd_out, "corpus JSONL output path")->required();
    gen->add_option("--rules", gd_rules, "rules JSON output path");

    // train
    TrainOptions tr;
    auto* train_cmd = app.add_subcommand("train", "train a pipeline on a corpus");
    train_cmd->add_option("--corpus", tr.corpus_path, "training corpus JSONL")->required();
    train_cmd->add_option("--out", tr.out_path, "checkpoint output path")->required();
    train_cmd->add_option("--config", tr.config_path, "training config JSON");
    train_cmd->add_option("--log", tr.log_path, "per-step metrics JSONL");
    train_cmd->add_option("--mode", tr.mode, "dictllm or serialize");
    train_cmd->add_option("--virtual-tokens", tr.virtual_tokens, "virtual token count n");
    train_cmd->add_option("--seed", tr.seed, "training seed");
    train_cmd->add_flag("--no-group-pe", tr.no_group_pe, "sequential positions ablation");
    train_cmd->add_flag("--no-attn-bias", tr.no_attn_bias, "unmasked attention ablation");
    train_cmd->add_flag("--linear-align", tr.linear_align, "linear alignment ablation");

    // eval
    std::string ev_ckpt, ev_corpus, ev_out;
    std::optional<uint64_t> ev_perturb;
    uint64_t ev_perturb_raw = 0;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    eval_cmd->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    eval_cmd->add_option("--corpus", ev_corpus, "eval corpus JSONL")->required();
    auto* perturb_opt =
        eval_cmd->add_option("--perturb-seed", ev_perturb_raw, "perturb inputs and report RC");
    eval_cmd->add_option("--out", ev_out, "write the report JSON here too");

    // scale-eval
    std::string sc_ckpt, sc_config, sc_rules, sc_pairs, sc_out;
    int sc_samples = 50;
    uint64_t sc_seed = 1;
    auto* scale_cmd = app.add_subcommand("scale-eval", "Knowledge F1 vs report size table");
    scale_cmd->add_option("--checkpoint", sc_ckpt, "model checkpoint")->required();
    scale_cmd->add_option("--config", sc_config, "SynthConfig JSON used for training")->required();
    scale_cmd->add_option("--rules", sc_rules, "rules JSON from gen-data")->required();
    scale_cmd->add_option("--pairs-list", sc_pairs, "comma list of total pair counts")->required();
    scale_cmd->add_option("--samples", sc_samples, "reports per size");
    scale_cmd->add_option("--seed", sc_seed, "generation seed");
    scale_cmd->add_option("--out", sc_out, "write the table JSON here too");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gd_config, gd_out, gd_rules);
        if (train_cmd->parsed()) return cmd_train(tr);
        if (eval_cmd->parsed()) {
            if (perturb_opt->count() > 0) ev_perturb = ev_perturb_raw;
            return cmd_eval(ev_ckpt, ev_corpus, ev_perturb, ev_out);
        }
        if (scale_cmd->parsed())
            return cmd_scale_eval(sc_ckpt, sc_config, sc_rules, sc_pairs, sc_samples, sc_seed,
                                  sc_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
