#include "dictllm/metrics.hpp"

#include <algorithm>
#include <sstream>

namespace dictllm {

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> tokens;
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return tokens;
}

namespace {

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                          : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

PrfScore rouge_l(const std::vector<std::string>& candidate,
                 const std::vector<std::string>& reference) {
    if (candidate.empty() || reference.empty()) return {};
    const double lcs = static_cast<double>(lcs_length(candidate, reference));
    PrfScore s;
    s.precision = lcs / static_cast<double>(candidate.size());
    s.recall = lcs / static_cast<double>(reference.size());
    if (s.precision + s.recall > 0.0)
        s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

PrfScore rouge_l(const std::string& candidate, const std::string& reference) {
    return rouge_l(whitespace_tokens(candidate), whitespace_tokens(reference));
}

PrfScore knowledge_f1(const std::set<std::string>& generated,
                      const std::set<std::string>& gold) {
    if (generated.empty() || gold.empty()) return {};
    std::vector<std::string> common;
    std::set_intersection(generated.begin(), generated.end(), gold.begin(), gold.end(),
                          std::back_inserter(common));
    PrfScore s;
    s.precision = static_cast<double>(common.size()) / static_cast<double>(generated.size());
    s.recall = static_cast<double>(common.size()) / static_cast<double>(gold.size());
    if (s.precision + s.recall > 0.0)
        s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

std::set<std::string> extract_diagnoses(const std::string& text) {
    std::set<std::string> out;
    std::string piece;
    std::istringstream in(text);
    while (std::getline(in, piece, ',')) {
        std::string t = trim(piece);
        if (!t.empty()) out.insert(std::move(t));
    }
    return out;
}

double relative_change(const std::string& text_before, const std::string& text_after) {
    return 1.0 - rouge_l(text_before, text_after).f1;
}

}  // namespace dictllm
