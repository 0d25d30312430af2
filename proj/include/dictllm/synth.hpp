#pragma once

#include <set>
#include <string>
#include <vector>

#include "dictllm/report.hpp"

namespace dictllm {

struct SynthConfig {
    int num_samples = 1000;
    int num_dict_kinds = 4;
    int keys_per_kind = 10;
    int num_diseases = 20;
    int min_pairs_per_dict = 3;
    int max_pairs_per_dict = 7;
    int min_dicts_per_report = 1;
    int max_dicts_per_report = 3;
    int patient_text_noise_tokens = 4;
    // Probability that a report additionally carries a near-miss: the
    // triples of some rule split across two dictionaries of the right
    // kind, which must NOT trigger the diagnosis.
    double split_distractor_prob = 0.35;
    uint64_t seed = 0;

    void validate() const;

    static SynthConfig from_json_file(const std::string& path);
    void to_json_file(const std::string& path) const;
};

// A diagnosis fires iff every (key, label) requirement is met inside one
// single dictionary of the rule's kind.
struct DiseaseRule {
    std::string kind_tag;
    std::vector<std::pair<std::string, MedicalLabel>> required;  // >= 2 entries
    std::string diagnosis;
};

std::vector<DiseaseRule> make_rules(const SynthConfig& config);

void save_rules(const std::vector<DiseaseRule>& rules, const std::string& path);
std::vector<DiseaseRule> load_rules(const std::string& path);

// Brute-force ground truth: scans every dictionary against every rule.
// Independent of any model path by construction.
std::set<std::string> oracle_diagnose(const LabReportSet& report,
                                      const std::vector<DiseaseRule>& rules);

// Deterministic corpus: per-sample RNG streams are derived from
// (seed, sample index), so any generation order yields the same corpus.
// Every sample satisfies at least one rule and its gold diagnoses are
// exactly the oracle's output.
std::vector<DiagnosisSample> generate_corpus(const SynthConfig& config,
                                             const std::vector<DiseaseRule>& rules);

}  // namespace dictllm
