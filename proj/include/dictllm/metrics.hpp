#pragma once

#include <set>
#include <string>
#include <vector>

namespace dictllm {

struct PrfScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Whitespace tokenization, matching the toy text tokenizer.
std::vector<std::string> whitespace_tokens(const std::string& text);

// LCS-based Rouge-L. Empty candidate or reference scores all zeros.
PrfScore rouge_l(const std::vector<std::string>& candidate,
                 const std::vector<std::string>& reference);
PrfScore rouge_l(const std::string& candidate, const std::string& reference);

// Exact-match set precision/recall over diagnosis strings.
PrfScore knowledge_f1(const std::set<std::string>& generated,
                      const std::set<std::string>& gold);

// Splits generated text on the diagnosis delimiter ",", trims, drops
// empties, deduplicates.
std::set<std::string> extract_diagnoses(const std::string& text);

// 1 - RougeL_f1 between generations before and after perturbation.
double relative_change(const std::string& text_before, const std::string& text_after);

}  // namespace dictllm
