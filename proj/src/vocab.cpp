#include "dictllm/vocab.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dictllm {

Vocabulary::Vocabulary() {
    tokens_ = {"[PAD]", "[CLS]", "[SEP]", "[UNK]"};
    for (int i = 0; i < kNumMedicalLabels; ++i)
        tokens_.push_back(label_token(static_cast<MedicalLabel>(i)));
    // Ids 4+12 = 16 so far; pad nothing, the reserved block is exactly full.
    for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) ids_[tokens_[i]] = i;
}

int Vocabulary::key_id(const std::string& key) const {
    auto it = ids_.find(key);
    return it == ids_.end() ? kUnkId : it->second;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
    return tokens_[id];
}

int Vocabulary::add_key(const std::string& key) {
    auto it = ids_.find(key);
    if (it != ids_.end()) return it->second;
    int id = size();
    tokens_.push_back(key);
    ids_[key] = id;
    return id;
}

void Vocabulary::save(const std::string& path) const {
    nlohmann::json j;
    for (int i = 0; i < size(); ++i) j[tokens_[i]] = i;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
    out << j.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
    nlohmann::json j;
    in >> j;
    std::vector<std::string> tokens(j.size());
    for (auto it = j.begin(); it != j.end(); ++it) {
        int id = it.value().get<int>();
        if (id < 0 || id >= static_cast<int>(tokens.size()))
            throw std::runtime_error("vocabulary file has non-dense ids: " + path);
        tokens[id] = it.key();
    }
    Vocabulary vocab;
    for (int i = 0; i < Vocabulary::kFirstKeyId; ++i) {
        if (i >= static_cast<int>(tokens.size()) || tokens[i] != vocab.tokens_[i])
            throw std::runtime_error("vocabulary file reserved block mismatch: " + path);
    }
    for (size_t i = Vocabulary::kFirstKeyId; i < tokens.size(); ++i) vocab.add_key(tokens[i]);
    return vocab;
}

Vocabulary build_vocab(const std::vector<LabReportSet>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    Vocabulary vocab;
    for (const auto& report : corpus)
        for (const auto& dict : report.dictionaries)
            for (const auto& kv : dict.pairs) vocab.add_key(kv.key);
    return vocab;
}

}  // namespace dictllm
