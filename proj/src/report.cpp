#include "dictllm/report.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

#include "dictllm/rng.hpp"
#include "json.hpp"

namespace dictllm {

namespace {

const std::array<std::string, kNumMedicalLabels> kLabelNames = {
    "NORMAL",    "ABNORMAL",  "HI_NORMAL",     "LT_NORMAL",
    "POSITIVE",  "NEGATIVE",  "POSITIVE_PLUS", "POSITIVE_PLUS_PLUS",
    "POSITIVE_MINUS", "SENSITIVE", "RESISTANT", "INTERMEDIATE"};

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

const std::string& label_name(MedicalLabel label) {
    return kLabelNames[static_cast<int>(label)];
}

const std::string& label_token(MedicalLabel label) {
    static const std::array<std::string, kNumMedicalLabels> tokens = [] {
        std::array<std::string, kNumMedicalLabels> t;
        for (int i = 0; i < kNumMedicalLabels; ++i) t[i] = "[" + kLabelNames[i] + "]";
        return t;
    }();
    return tokens[static_cast<int>(label)];
}

LabValue LabValue::numeric(double v, std::optional<double> lo, std::optional<double> hi) {
    LabValue out;
    out.kind = Kind::kNumeric;
    out.numeric_value = v;
    out.reference_low = lo;
    out.reference_high = hi;
    return out;
}

LabValue LabValue::qualitative(std::string text) {
    LabValue out;
    out.kind = Kind::kQualitative;
    out.qualitative_text = std::move(text);
    return out;
}

const QualitativeMap& default_qualitative_map() {
    static const QualitativeMap table = {
        {"normal", MedicalLabel::kNormal},
        {"abnormal", MedicalLabel::kAbnormal},
        {"positive", MedicalLabel::kPositive},
        {"negative", MedicalLabel::kNegative},
        {"positive+", MedicalLabel::kPositivePlus},
        {"positive++", MedicalLabel::kPositivePlusPlus},
        {"positive-", MedicalLabel::kPositiveMinus},
        {"+", MedicalLabel::kPositivePlus},
        {"++", MedicalLabel::kPositivePlusPlus},
        {"+-", MedicalLabel::kPositiveMinus},
        {"sensitive", MedicalLabel::kSensitive},
        {"resistant", MedicalLabel::kResistant},
        {"intermediate", MedicalLabel::kIntermediate},
    };
    return table;
}

MedicalLabel bin_value(const LabValue& value, const QualitativeMap& table) {
    if (value.kind == LabValue::Kind::kQualitative) {
        const std::string key = lower(trim(value.qualitative_text.value_or("")));
        auto it = table.find(key);
        if (it == table.end()) {
            throw BinError("unmappable qualitative value: \"" +
                           value.qualitative_text.value_or("") + "\"");
        }
        return it->second;
    }
    const double v = value.numeric_value;
    // Reference interval is closed: values on a bound are NORMAL.
    if (value.reference_low && v < *value.reference_low) return MedicalLabel::kLtNormal;
    if (value.reference_high && v > *value.reference_high) return MedicalLabel::kHiNormal;
    if (value.reference_low || value.reference_high) return MedicalLabel::kNormal;
    // No bounds at all: abnormal only if the producing system flagged it.
    if (value.qualitative_text && !trim(*value.qualitative_text).empty())
        return MedicalLabel::kAbnormal;
    return MedicalLabel::kNormal;
}

namespace {

using nlohmann::json;

LabValue value_from_json(const json& p, const std::string& path) {
    const bool has_num = p.contains("num");
    const bool has_text = p.contains("text");
    if (has_num == has_text) {
        throw ParseError(path + ": exactly one of \"num\" and \"text\" must be set");
    }
    if (has_text) {
        if (p.contains("lo") || p.contains("hi"))
            throw ParseError(path + ": qualitative value cannot carry reference bounds");
        return LabValue::qualitative(p.at("text").get<std::string>());
    }
    std::optional<double> lo, hi;
    if (p.contains("lo")) lo = p.at("lo").get<double>();
    if (p.contains("hi")) hi = p.at("hi").get<double>();
    if (lo && hi && *lo > *hi)
        throw ParseError(path + ": reference_low exceeds reference_high");
    return LabValue::numeric(p.at("num").get<double>(), lo, hi);
}

LabReportSet report_from_json(const json& j, const std::string& root) {
    if (!j.contains("dictionaries") || !j.at("dictionaries").is_array())
        throw ParseError(root + ".dictionaries: missing or not an array");
    LabReportSet report;
    size_t di = 0;
    for (const auto& jd : j.at("dictionaries")) {
        const std::string dpath = root + ".dictionaries[" + std::to_string(di++) + "]";
        LabDictionary dict;
        if (jd.contains("kind")) dict.kind_tag = jd.at("kind").get<std::string>();
        if (!jd.contains("pairs") || !jd.at("pairs").is_array() || jd.at("pairs").empty())
            throw ParseError(dpath + ".pairs: missing, not an array, or empty");
        size_t pi = 0;
        for (const auto& jp : jd.at("pairs")) {
            const std::string ppath = dpath + ".pairs[" + std::to_string(pi++) + "]";
            KeyValuePair kv;
            if (!jp.contains("key")) throw ParseError(ppath + ".key: missing");
            kv.key = trim(jp.at("key").get<std::string>());
            if (kv.key.empty()) throw ParseError(ppath + ".key: empty after trimming");
            kv.value = value_from_json(jp, ppath);
            dict.pairs.push_back(std::move(kv));
        }
        report.dictionaries.push_back(std::move(dict));
    }
    return report;
}

json report_to_json(const LabReportSet& report) {
    json dicts = json::array();
    for (const auto& d : report.dictionaries) {
        json jd;
        if (d.kind_tag) jd["kind"] = *d.kind_tag;
        json pairs = json::array();
        for (const auto& kv : d.pairs) {
            json jp;
            jp["key"] = kv.key;
            if (kv.value.kind == LabValue::Kind::kNumeric) {
                jp["num"] = kv.value.numeric_value;
                if (kv.value.reference_low) jp["lo"] = *kv.value.reference_low;
                if (kv.value.reference_high) jp["hi"] = *kv.value.reference_high;
            } else {
                jp["text"] = kv.value.qualitative_text.value_or("");
            }
            pairs.push_back(std::move(jp));
        }
        jd["pairs"] = std::move(pairs);
        dicts.push_back(std::move(jd));
    }
    json j;
    j["dictionaries"] = std::move(dicts);
    return j;
}

}  // namespace

LabReportSet parse_report(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    return report_from_json(j, "$");
}

std::string serialize_report(const LabReportSet& report) {
    return report_to_json(report).dump();
}

DiagnosisSample parse_sample(const std::string& json_line) {
    json j;
    try {
        j = json::parse(json_line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    DiagnosisSample sample;
    sample.report = report_from_json(j, "$");
    if (j.contains("patient_text")) sample.patient_text = j.at("patient_text").get<std::string>();
    if (j.contains("diagnoses")) {
        for (const auto& d : j.at("diagnoses")) sample.diagnoses.push_back(d.get<std::string>());
    }
    return sample;
}

std::string serialize_sample(const DiagnosisSample& sample) {
    json j = report_to_json(sample.report);
    j["patient_text"] = sample.patient_text;
    j["diagnoses"] = sample.diagnoses;
    return j.dump();
}

std::vector<DiagnosisSample> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open corpus file: " + path);
    std::vector<DiagnosisSample> samples;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            samples.push_back(parse_sample(line));
        } catch (const ParseError& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return samples;
}

void save_corpus(const std::vector<DiagnosisSample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    for (const auto& s : samples) out << serialize_sample(s) << "\n";
}

LabReportSet perturb(const LabReportSet& report, uint64_t seed) {
    Rng rng(seed);
    LabReportSet out = report;
    for (auto& dict : out.dictionaries) rng.shuffle(dict.pairs);
    rng.shuffle(out.dictionaries);
    return out;
}

}  // namespace dictllm
