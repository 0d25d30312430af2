#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dictllm/report.hpp"

namespace dictllm {

// Dict-branch vocabulary. Ids are dense from 0; the block 0-15 is
// reserved: 0 [PAD], 1 [CLS], 2 [SEP], 3 [UNK], 4-15 the twelve medical
// label tokens in enum order. Key-name tokens follow from id 16, one id
// per distinct key string (whole-key tokenization).
class Vocabulary {
public:
    static constexpr int kPadId = 0;
    static constexpr int kClsId = 1;
    static constexpr int kSepId = 2;
    static constexpr int kUnkId = 3;
    static constexpr int kLabelBase = 4;
    static constexpr int kFirstKeyId = 16;

    Vocabulary();

    static int label_id(MedicalLabel label) {
        return kLabelBase + static_cast<int>(label);
    }

    // Id for a key token, [UNK] when absent.
    int key_id(const std::string& key) const;
    int id_of(const std::string& token) const;  // -1 when absent
    const std::string& token_of(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    // Registers a key token if new, returns its id.
    int add_key(const std::string& key);

    void save(const std::string& path) const;  // JSON {token: id}
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

// One id per distinct key string seen in the corpus; reserved tokens
// always present. Throws on an empty corpus.
Vocabulary build_vocab(const std::vector<LabReportSet>& corpus);

}  // namespace dictllm
