#pragma once

#include <vector>

#include "dictllm/report.hpp"
#include "dictllm/vocab.hpp"

namespace dictllm {

// Token-level encoding of a report. Layout: [CLS], then per dictionary
// D_i its pairs as (key token, binned label token) followed by [SEP].
// Length is 1 + sum_i (2*m_i + 1), or 1 for an empty report.
struct EncodedReport {
    std::vector<int> token_ids;
    // Positional ids restart at every key-value pair: 0 on the key, 1 on
    // the label. [CLS] and [SEP] sit at position 0.
    std::vector<int> group_pos_ids;
    // Dictionary index per token. [SEP]_i carries segment i; [CLS]
    // carries the reserved segment k (one past the last dictionary).
    std::vector<int> segment_ids;
    std::vector<bool> is_special;

    size_t size() const { return token_ids.size(); }
};

EncodedReport tokenize(const LabReportSet& report, const Vocabulary& vocab,
                       const QualitativeMap& table = default_qualitative_map());

// Recomputes the pair-relative positional ids from the token structure
// alone. tokenize() already fills group_pos_ids with exactly this.
std::vector<int> group_positions(const EncodedReport& encoded);

}  // namespace dictllm
