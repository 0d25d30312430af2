// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.
//
// Criteria 8 and 9 train real models, so this binary runs for several
// minutes. Scaled-down backbones are used throughout; the trained-model
// criteria check properties and directions, not absolute magnitudes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <vector>

#include "dictllm/pipeline.hpp"
#include "dictllm/synth.hpp"
#include "gradcheck.hpp"

using namespace dictllm;
using Clock = std::chrono::steady_clock;

namespace {

struct Suite {
    int failures = 0;

    void report(int idx, bool ok, const std::string& what) {
        std::cout << "criterion " << idx << ": " << (ok ? "PASS" : "FAIL") << " - " << what
                  << std::endl;
        if (!ok) ++failures;
    }
};

Mat random_mat(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = scale * rng.next_normal();
    return m;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

SynthConfig corpus_config() {
    SynthConfig cfg;
    cfg.num_samples = 5000;
    cfg.num_diseases = 20;
    cfg.num_dict_kinds = 4;
    cfg.keys_per_kind = 10;
    cfg.min_pairs_per_dict = 3;
    cfg.max_pairs_per_dict = 6;
    cfg.min_dicts_per_report = 1;
    cfg.max_dicts_per_report = 3;
    cfg.patient_text_noise_tokens = 3;
    cfg.seed = 4242;
    return cfg;
}

ModelConfig trained_model_config(PipelineMode mode = PipelineMode::kDictLLM) {
    ModelConfig mc;
    mc.mode = mode;
    mc.encoder.num_layers = 2;
    mc.encoder.hidden_dim = 64;
    mc.encoder.num_heads = 4;
    mc.align.num_virtual_tokens = 16;
    mc.align.max_iters = 50;
    mc.align.epsilon = 2.0;  // large entropic blur keeps the learned plan soft enough to train
    mc.lm.num_layers = 2;
    mc.lm.embed_dim = 48;
    mc.lm.num_heads = 4;
    mc.lm.max_seq_len = 256;
    mc.lm.max_new_tokens = 12;
    return mc;
}

TrainConfig trained_train_config() {
    TrainConfig tc;
    tc.learning_rate = 1e-3;  // scaled-up for the scratch-trained small backbone
    tc.warmup_ratio = 0.01;
    tc.epochs = 8;
    tc.batch_size = 16;
    tc.weight_decay = 0.01;
    tc.seed = 99;
    return tc;
}

double eval_kf1(Model& model, const std::vector<DiagnosisSample>& samples) {
    return evaluate(model, samples).mean_knowledge.f1;
}

}  // namespace

int main() {
    Suite suite;
    SynthConfig scfg = corpus_config();
    auto rules = make_rules(scfg);
    auto corpus = generate_corpus(scfg, rules);
    const size_t train_n = corpus.size() * 9 / 10;
    std::vector<DiagnosisSample> train_split(corpus.begin(),
                                             corpus.begin() + static_cast<long>(train_n));
    std::vector<DiagnosisSample> eval_split(corpus.begin() + static_cast<long>(train_n),
                                            corpus.end());

    // ---- criterion 8: end-to-end learnability under the wall-clock budget.
    auto t0 = Clock::now();
    Model full = build_model(trained_model_config(), train_split, 99);
    train(full, train_split, trained_train_config());
    double full_kf1 = eval_kf1(full, eval_split);
    double elapsed = seconds_since(t0);
    {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "end-to-end Knowledge F1 %.4f (need >= 0.90) in %.0f s (budget 1800 s)",
                      full_kf1, elapsed);
        suite.report(8, full_kf1 >= 0.90 && elapsed < 1800.0, buf);
    }

    // ---- criterion 1: permutation invariance of the trained full pipeline.
    {
        bool ok = true;
        const size_t n_reports = std::min<size_t>(100, eval_split.size());
        for (size_t i = 0; i < n_reports && ok; ++i) {
            const auto& sample = eval_split[i];
            Tape tb;
            Mat base = tb.value(build_report_input(tb, full, sample.report).embedding_node);
            auto gen_base = generate(full, sample.report, sample.patient_text).text;
            for (uint64_t seed = 1; seed <= 5 && ok; ++seed) {
                LabReportSet shuffled = perturb(sample.report, seed);
                Tape tp;
                Mat other =
                    tp.value(build_report_input(tp, full, shuffled).embedding_node);
                if ((base - other).cwiseAbs().maxCoeff() >= 1e-10) ok = false;
                if (generate(full, shuffled, sample.patient_text).text != gen_base) ok = false;
            }
        }
        suite.report(1, ok,
                     "virtual tokens within 1e-10 and generations identical over "
                     "100 reports x 5 perturbation seeds");
    }

    // ---- criterion 2: the serialization baseline is order-sensitive.
    Model baseline = build_model(trained_model_config(PipelineMode::kSerialize), train_split, 99);
    double baseline_kf1;
    {
        train(baseline, train_split, trained_train_config());
        baseline_kf1 = eval_kf1(baseline, eval_split);
        std::vector<DiagnosisSample> subset(eval_split.begin(),
                                            eval_split.begin() +
                                                std::min<long>(100, static_cast<long>(eval_split.size())));
        EvalReport rc_report = evaluate(baseline, subset, /*perturb_seed=*/7);
        int positive = 0;
        for (double rc : rc_report.per_sample_rc)
            if (rc > 0.0) ++positive;
        char buf[120];
        std::snprintf(buf, sizeof(buf),
                      "serialize baseline RC > 0 on %d of %zu perturbed samples (need >= 1)",
                      positive, rc_report.per_sample_rc.size());
        suite.report(2, positive >= 1, buf);
    }

    // ---- criterion 9: ablation direction and ordering.
    {
        auto train_ablation = [&](AblationFlags flags) {
            ModelConfig mc = trained_model_config();
            mc.ablation = flags;
            Model m = build_model(mc, train_split, 99);
            train(m, train_split, trained_train_config());
            return eval_kf1(m, eval_split);
        };
        AblationFlags f1, f2, f3;
        f1.no_attn_bias = true;
        f2.no_group_pe = true;
        f3.linear_align = true;
        double kf1_no_bias = train_ablation(f1);
        double kf1_no_pe = train_ablation(f2);
        double kf1_linear = train_ablation(f3);
        double drop_bias = full_kf1 - kf1_no_bias;
        double drop_pe = full_kf1 - kf1_no_pe;
        double drop_linear = full_kf1 - kf1_linear;
        bool ok = drop_bias >= 0.02 && drop_bias > drop_pe && drop_bias > drop_linear;
        char buf[200];
        std::snprintf(buf, sizeof(buf),
                      "KF1 drops: no_attn_bias %.4f (need >= 0.02 and largest), "
                      "no_group_pe %.4f, linear_align %.4f (full %.4f)",
                      drop_bias, drop_pe, drop_linear, full_kf1);
        suite.report(9, ok, buf);
    }

    // ---- criterion 3: Sinkhorn marginal feasibility at scale.
    {
        Rng rng(303);
        AlignConfig cfg;
        cfg.epsilon = 0.05;
        cfg.max_iters = 2000;
        cfg.convergence_tol = 1e-7;
        int bad_marginals = 0, non_converged = 0;
        for (int trial = 0; trial < 1000; ++trial) {
            const int n = 1 + static_cast<int>(rng.next_below(64));
            const int m = 1 + static_cast<int>(rng.next_below(64));
            cfg.num_virtual_tokens = n;
            cfg.target_dim = 4;
            Tape t;
            auto res = sinkhorn(t, t.constant(random_mat(rng, m, 4, 0.3)),
                                t.constant(random_mat(rng, n, 4, 0.3)), cfg);
            if (!res.converged) {
                // The marginal contract is stated at convergence; these
                // instances count against the < 1% budget instead.
                ++non_converged;
                continue;
            }
            const Mat& plan = t.value(res.plan);
            for (Eigen::Index i = 0; i < n; ++i)
                if (std::abs(plan.row(i).sum() - 1.0 / n) > 1e-6) ++bad_marginals;
            for (Eigen::Index j = 0; j < m; ++j)
                if (std::abs(plan.col(j).sum() - 1.0 / m) > 1e-6) ++bad_marginals;
        }
        char buf[140];
        std::snprintf(buf, sizeof(buf),
                      "1000 instances: %d marginal violations, %d non-converged (need 0 and < 10)",
                      bad_marginals, non_converged);
        suite.report(3, bad_marginals == 0 && non_converged < 10, buf);
    }

    // ---- criterion 4: exact-OT oracle agreement at near-zero regularization.
    {
        Rng rng(404);
        AlignConfig cfg;
        cfg.epsilon = 1e-3;
        cfg.max_iters = 5000;
        cfg.convergence_tol = 1e-12;
        cfg.target_dim = 2;
        auto perm_plan = [](const Mat& cost) {
            // n <= 3: enumerate all permutation couplings directly.
            const auto n = cost.rows();
            std::vector<int> perm(static_cast<size_t>(n)), best;
            for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
            double best_cost = std::numeric_limits<double>::infinity();
            std::sort(perm.begin(), perm.end());
            do {
                double c = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) c += cost(i, perm[static_cast<size_t>(i)]);
                if (c < best_cost) {
                    best_cost = c;
                    best = perm;
                }
            } while (std::next_permutation(perm.begin(), perm.end()));
            Mat plan = Mat::Zero(n, n);
            for (Eigen::Index i = 0; i < n; ++i)
                plan(i, best[static_cast<size_t>(i)]) = 1.0 / static_cast<double>(n);
            return plan;
        };
        // The entropic plan mixes permutations within ~eps of the optimum,
        // so degenerate near-ties are resampled away: the best assignment
        // must win by at least 20 eps for the oracle comparison to be
        // well-posed at this regularization.
        auto assignment_gap = [](const Mat& cost) {
            const auto n = cost.rows();
            std::vector<int> perm(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
            double best = std::numeric_limits<double>::infinity(), second = best;
            do {
                double c = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) c += cost(i, perm[static_cast<size_t>(i)]);
                if (c < best) {
                    second = best;
                    best = c;
                } else {
                    second = std::min(second, c);
                }
            } while (std::next_permutation(perm.begin(), perm.end()));
            return second - best;
        };
        double worst_tv = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const int n = 2 + static_cast<int>(rng.next_below(2));
            cfg.num_virtual_tokens = n;
            Mat h, z, cost;
            do {
                h = random_mat(rng, n, 2, 0.15);
                z = random_mat(rng, n, 2, 0.15);
                cost.resize(n, n);
                for (Eigen::Index i = 0; i < n; ++i)
                    for (Eigen::Index j = 0; j < n; ++j)
                        cost(i, j) = (z.row(i) - h.row(j)).squaredNorm();
            } while (assignment_gap(cost) < 20.0 * cfg.epsilon);
            Tape t;
            auto res = sinkhorn(t, t.constant(h), t.constant(z), cfg);
            double tv = 0.5 * (t.value(res.plan) - perm_plan(cost)).cwiseAbs().sum();
            worst_tv = std::max(worst_tv, tv);
        }
        char buf[120];
        std::snprintf(buf, sizeof(buf), "worst total variation vs exact OT %.2e (need < 0.01)",
                      worst_tv);
        suite.report(4, worst_tv < 0.01, buf);
    }

    // ---- shared small instance for criteria 5 and 6.
    LabReportSet grad_report;
    {
        LabDictionary d1;
        d1.kind_tag = "blood";
        d1.pairs.push_back({"blood_item0", LabValue::numeric(25.0, 10.0, 20.0)});
        d1.pairs.push_back({"blood_item1", LabValue::qualitative("positive")});
        LabDictionary d2;
        d2.kind_tag = "urine";
        d2.pairs.push_back({"urine_item0", LabValue::numeric(15.0, 10.0, 20.0)});
        grad_report.dictionaries.push_back(d1);
        grad_report.dictionaries.push_back(d2);
    }
    Vocabulary grad_vocab;
    for (const auto& d : grad_report.dictionaries)
        for (const auto& p : d.pairs) grad_vocab.add_key(p.key);

    // ---- criterion 5: finite-difference gradient suite.
    {
        Rng rng(505);
        EncoderConfig ecfg;
        ecfg.num_layers = 1;
        ecfg.hidden_dim = 8;
        ecfg.num_heads = 2;
        ecfg.vocab_size = grad_vocab.size();
        EncoderParams enc = EncoderParams::init(ecfg, rng);
        AlignConfig acfg;
        acfg.num_virtual_tokens = 2;
        acfg.target_dim = 4;
        acfg.max_iters = 25;
        AlignParams align_params = AlignParams::init(ecfg.hidden_dim, acfg, rng);

        EncodedReport encd = tokenize(grad_report, grad_vocab);
        Mat bias = build_mask(encd).to_bias();
        auto loss_fn = [&]() {
            Tape t;
            int h = encode(t, encd, enc, bias);
            auto res = align(t, h, align_params, acfg, /*fixed_iterations=*/true);
            int v = res.virtual_tokens;
            return t.value(t.colsum(t.rowsum(t.cmul(v, v))))(0, 0);
        };
        for (Param* p : enc.all()) p->zero_grad();
        for (Param* p : align_params.all()) p->zero_grad();
        {
            Tape t;
            int h = encode(t, encd, enc, bias);
            auto res = align(t, h, align_params, acfg, /*fixed_iterations=*/true);
            int v = res.virtual_tokens;
            t.backward(t.colsum(t.rowsum(t.cmul(v, v))));
        }
        auto& layer = enc.layers[0];
        struct Group {
            const char* name;
            std::vector<Param*> params;
        };
        std::vector<Group> groups = {
            {"attn", {&layer.wq, &layer.wk, &layer.wv, &layer.wo}},
            {"mlp", {&layer.mlp_w1, &layer.mlp_b1, &layer.mlp_w2, &layer.mlp_b2}},
            {"embed", {&enc.w_emb, &enc.p_table}},
            {"kernel", {&align_params.kernel_weight, &align_params.kernel_bias}},
            {"reference", {&align_params.reference_points}},
        };
        bool ok = true;
        double worst = 0.0;
        for (auto& g : groups) {
            auto res = testutil::check_gradients(g.params, loss_fn, 1e-5);
            worst = std::max(worst, res.max_rel_err);
            if (res.max_rel_err >= 1e-4 || res.entries_checked == 0) ok = false;
        }
        char buf[120];
        std::snprintf(buf, sizeof(buf),
                      "worst finite-difference relative error %.2e (need < 1e-4)", worst);
        suite.report(5, ok, buf);
    }

    // ---- criterion 6: masking soundness by exhaustive row perturbation.
    {
        Rng rng(606);
        LabReportSet rep;
        LabDictionary d1, d2;
        d1.pairs.push_back({"blood_item0", LabValue::qualitative("positive")});
        d2.pairs.push_back({"urine_item0", LabValue::qualitative("negative")});
        rep.dictionaries.push_back(d1);
        rep.dictionaries.push_back(d2);
        Vocabulary vocab;
        vocab.add_key("blood_item0");
        vocab.add_key("urine_item0");
        EncodedReport encd = tokenize(rep, vocab);
        HierMask mask = build_mask(encd);
        const Eigen::Index n = static_cast<Eigen::Index>(encd.size());

        EncoderConfig ecfg;
        ecfg.num_layers = 1;
        ecfg.hidden_dim = 8;
        ecfg.num_heads = 2;
        ecfg.vocab_size = vocab.size();
        EncoderParams enc = EncoderParams::init(ecfg, rng);
        Mat bias = mask.to_bias();

        Mat h0 = random_mat(rng, n, ecfg.hidden_dim, 0.5);
        auto run = [&](const Mat& x) {
            Tape t;
            return t.value(hier_enc_layer(t, t.constant(x), bias, enc.layers[0], ecfg.num_heads));
        };
        Mat base = run(h0);
        const double eps = 1e-6;
        bool ok = (n == 7);
        for (Eigen::Index j = 0; j < n && ok; ++j) {
            Mat pert = h0;
            pert.row(j).array() += eps;
            Mat out = run(pert);
            for (Eigen::Index i = 0; i < n && ok; ++i) {
                double deriv = (out.row(i) - base.row(i)).cwiseAbs().maxCoeff() / eps;
                if (!mask.visible(i, j) && i != j && deriv >= 1e-12) ok = false;
                if (mask.visible(i, j) && i == j && deriv <= 1e-12) ok = false;
            }
        }
        suite.report(6, ok,
                     "7-token exhaustive row perturbation respects the visibility mask "
                     "(masked derivatives < 1e-12)");
    }

    // ---- criterion 7: fixed report-side footprint vs linear growth.
    {
        bool ok = true;
        ModelConfig dcfg = trained_model_config();
        dcfg.align.num_virtual_tokens = 64;
        ModelConfig scfg_model = trained_model_config(PipelineMode::kSerialize);
        scfg_model.lm.max_seq_len = 8192;

        // Vocabulary source: a small corpus drawn from the same rules.
        SynthConfig small = corpus_config();
        small.num_samples = 200;
        auto vocab_corpus = generate_corpus(small, rules);
        Model dict_model = build_model(dcfg, vocab_corpus, 7);
        Model ser_model = build_model(scfg_model, vocab_corpus, 7);

        std::vector<double> ser_means;
        for (int target : {8, 32, 128, 256}) {
            SynthConfig gen_cfg = corpus_config();
            const int per_dict = 8;
            gen_cfg.min_pairs_per_dict = std::min(per_dict, target);
            gen_cfg.max_pairs_per_dict = std::min(per_dict, target);
            gen_cfg.min_dicts_per_report = std::max(1, target / per_dict);
            gen_cfg.max_dicts_per_report = std::max(1, target / per_dict);
            gen_cfg.num_samples = 20;
            gen_cfg.seed = 1000 + target;
            auto reports = generate_corpus(gen_cfg, rules);
            double ser_mean = 0.0;
            for (const auto& sample : reports) {
                Tape t;
                ReportInput din = build_report_input(t, dict_model, sample.report);
                if (din.footprint != 64) ok = false;
                Tape t2;
                ReportInput sin = build_report_input(t2, ser_model, sample.report, -1);
                ser_mean += static_cast<double>(sin.footprint);
            }
            ser_means.push_back(ser_mean / static_cast<double>(reports.size()));
        }
        for (size_t i = 1; i < ser_means.size(); ++i)
            if (ser_means[i] <= ser_means[i - 1]) ok = false;
        char buf[200];
        std::snprintf(buf, sizeof(buf),
                      "dictllm footprint == 64 at all sizes; serialize footprints "
                      "%.1f, %.1f, %.1f, %.1f strictly increasing",
                      ser_means[0], ser_means[1], ser_means[2], ser_means[3]);
        suite.report(7, ok, buf);
    }

    // ---- criterion 10: metric oracles on the documented examples.
    {
        bool ok = true;
        PrfScore r = rouge_l("the cat sat", "the cat sat on the mat");
        if (r.precision != 1.0) ok = false;
        if (std::abs(r.recall - 0.5) > 1e-15) ok = false;
        PrfScore r2 = rouge_l("a b", "a b c");
        if (r2.precision != 1.0) ok = false;
        if (std::abs(r2.recall - 2.0 / 3.0) > 1e-15) ok = false;
        if (std::abs(r2.f1 - 0.8) > 1e-12) ok = false;
        PrfScore k = knowledge_f1({"A", "B"}, {"A", "C"});
        if (k.precision != 0.5 || k.recall != 0.5 || k.f1 != 0.5) ok = false;
        PrfScore kempty = knowledge_f1({}, {"A"});
        if (kempty.f1 != 0.0) ok = false;
        suite.report(10, ok, "Rouge-L and Knowledge F1 match hand-computed values exactly");
    }

    std::cout << (suite.failures == 0 ? "ALL CRITERIA PASSED" : "CRITERIA FAILED") << " ("
              << (10 - suite.failures) << "/10)" << std::endl;
    (void)baseline_kf1;
    return suite.failures == 0 ? 0 : 1;
}
