#include <cstdio>

#include "dictllm/synth.hpp"
#include "doctest.h"

using namespace dictllm;

namespace {

SynthConfig small_config() {
    SynthConfig c;
    c.num_samples = 200;
    c.num_dict_kinds = 3;
    c.keys_per_kind = 8;
    c.num_diseases = 9;
    c.seed = 11;
    return c;
}

}  // namespace

TEST_CASE("make_rules: one rule per disease, single-kind, >= 2 requirements") {
    SynthConfig c = small_config();
    auto rules = make_rules(c);
    REQUIRE(static_cast<int>(rules.size()) == c.num_diseases);
    for (const auto& rule : rules) {
        CHECK(rule.required.size() >= 2);
        for (const auto& [key, label] : rule.required) {
            CHECK(key.rfind(rule.kind_tag + "_item", 0) == 0);
        }
    }
}

TEST_CASE("rules file round-trip") {
    auto rules = make_rules(small_config());
    const std::string path = "test_rules.json";
    save_rules(rules, path);
    auto back = load_rules(path);
    REQUIRE(back.size() == rules.size());
    for (size_t i = 0; i < rules.size(); ++i) {
        CHECK(back[i].kind_tag == rules[i].kind_tag);
        CHECK(back[i].diagnosis == rules[i].diagnosis);
        CHECK(back[i].required == rules[i].required);
    }
    std::remove(path.c_str());
}

TEST_CASE("oracle_diagnose: rule satisfaction semantics") {
    std::vector<DiseaseRule> rules = {
        {"blood",
         {{"blood_item0", MedicalLabel::kHiNormal}, {"blood_item1", MedicalLabel::kPositive}},
         "disease_x"}};

    CHECK(oracle_diagnose(LabReportSet{}, rules).empty());

    LabReportSet hit;
    hit.dictionaries.push_back({{{"blood_item0", LabValue::numeric(25.0, 10.0, 20.0)},
                                 {"blood_item1", LabValue::qualitative("positive")}},
                                "blood"});
    CHECK(oracle_diagnose(hit, rules) == std::set<std::string>{"disease_x"});

    // Same triples split across two dictionaries: no diagnosis.
    LabReportSet split;
    split.dictionaries.push_back(
        {{{"blood_item0", LabValue::numeric(25.0, 10.0, 20.0)}}, "blood"});
    split.dictionaries.push_back(
        {{{"blood_item1", LabValue::qualitative("positive")}}, "blood"});
    CHECK(oracle_diagnose(split, rules).empty());

    // Wrong kind tag: no diagnosis.
    LabReportSet wrong = hit;
    wrong.dictionaries[0].kind_tag = "urine";
    CHECK(oracle_diagnose(wrong, rules).empty());
}

TEST_CASE("generate_corpus: oracle consistency and determinism") {
    SynthConfig c = small_config();
    auto rules = make_rules(c);
    auto corpus = generate_corpus(c, rules);
    REQUIRE(static_cast<int>(corpus.size()) == c.num_samples);
    for (const auto& sample : corpus) {
        auto gold = oracle_diagnose(sample.report, rules);
        CHECK(std::vector<std::string>(gold.begin(), gold.end()) == sample.diagnoses);
        CHECK(!sample.diagnoses.empty());  // at least one planted rule fires
    }
    auto again = generate_corpus(c, rules);
    for (size_t i = 0; i < corpus.size(); ++i)
        CHECK(serialize_sample(again[i]) == serialize_sample(corpus[i]));

    SynthConfig none = c;
    none.num_samples = 0;
    CHECK(generate_corpus(none, rules).empty());
}

TEST_CASE("gold labels are invariant under perturbation") {
    SynthConfig c = small_config();
    auto rules = make_rules(c);
    auto corpus = generate_corpus(c, rules);
    for (size_t i = 0; i < corpus.size(); i += 10) {
        auto gold = oracle_diagnose(corpus[i].report, rules);
        for (uint64_t seed = 1; seed <= 3; ++seed)
            CHECK(oracle_diagnose(perturb(corpus[i].report, seed), rules) == gold);
    }
}

TEST_CASE("mean pairs per report tracks the configured midpoint at 10k samples") {
    SynthConfig c = small_config();
    c.num_samples = 10000;
    c.split_distractor_prob = 0.0;  // distractors retag kinds, not sizes, but keep it clean
    auto rules = make_rules(c);
    auto corpus = generate_corpus(c, rules);
    double total = 0.0;
    for (const auto& s : corpus) total += static_cast<double>(s.report.total_pairs());
    const double mean = total / static_cast<double>(corpus.size());
    const double mid_pairs = 0.5 * (c.min_pairs_per_dict + c.max_pairs_per_dict);
    const double mid_dicts = 0.5 * (c.min_dicts_per_report + c.max_dicts_per_report);
    const double expected = mid_pairs * mid_dicts;
    CHECK(mean > 0.9 * expected);
    CHECK(mean < 1.1 * expected);
}

TEST_CASE("invalid config ranges are rejected") {
    SynthConfig c = small_config();
    c.min_pairs_per_dict = 5;
    c.max_pairs_per_dict = 4;
    CHECK_THROWS(c.validate());
    SynthConfig c2 = small_config();
    c2.max_pairs_per_dict = c2.keys_per_kind + 1;
    CHECK_THROWS(c2.validate());
}
