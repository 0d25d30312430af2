#include "dictllm/tokenizer.hpp"

namespace dictllm {

EncodedReport tokenize(const LabReportSet& report, const Vocabulary& vocab,
                       const QualitativeMap& table) {
    EncodedReport out;
    const int k = static_cast<int>(report.dictionaries.size());
    auto push = [&out](int id, int pos, int seg, bool special) {
        out.token_ids.push_back(id);
        out.group_pos_ids.push_back(pos);
        out.segment_ids.push_back(seg);
        out.is_special.push_back(special);
    };
    push(Vocabulary::kClsId, 0, k, true);
    for (int i = 0; i < k; ++i) {
        for (const auto& kv : report.dictionaries[i].pairs) {
            push(vocab.key_id(kv.key), 0, i, false);
            push(Vocabulary::label_id(bin_value(kv.value, table)), 1, i, false);
        }
        push(Vocabulary::kSepId, 0, i, true);
    }
    return out;
}

std::vector<int> group_positions(const EncodedReport& encoded) {
    std::vector<int> positions(encoded.size(), 0);
    int in_pair = 0;
    for (size_t i = 0; i < encoded.size(); ++i) {
        if (encoded.is_special[i]) {
            in_pair = 0;
            continue;
        }
        positions[i] = in_pair;
        in_pair = (in_pair + 1) % 2;  // pairs are exactly (key, label)
    }
    return positions;
}

}  // namespace dictllm
