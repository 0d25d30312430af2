#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dictllm {

// Closed set of discretized lab-value tokens. Every label owns one
// reserved vocabulary id (see vocab.hpp).
enum class MedicalLabel {
    kNormal = 0,
    kAbnormal,
    kHiNormal,
    kLtNormal,
    kPositive,
    kNegative,
    kPositivePlus,
    kPositivePlusPlus,
    kPositiveMinus,
    kSensitive,
    kResistant,
    kIntermediate,
};

inline constexpr int kNumMedicalLabels = 12;

// Bare name, e.g. "NORMAL". Used by the text-serialization baseline.
const std::string& label_name(MedicalLabel label);
// Bracketed token form, e.g. "[NORMAL]". Used by the dict vocabulary.
const std::string& label_token(MedicalLabel label);

class BinError : public std::runtime_error {
public:
    explicit BinError(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct LabValue {
    enum class Kind { kNumeric, kQualitative };

    Kind kind = Kind::kNumeric;
    double numeric_value = 0.0;
    std::optional<double> reference_low;
    std::optional<double> reference_high;
    // For kQualitative this is the value itself. For kNumeric it may carry
    // an "abnormal" flag string set by the producing system; it is never
    // serialized for numeric values.
    std::optional<std::string> qualitative_text;

    static LabValue numeric(double v, std::optional<double> lo = std::nullopt,
                            std::optional<double> hi = std::nullopt);
    static LabValue qualitative(std::string text);
};

struct KeyValuePair {
    std::string key;  // non-empty after trimming
    LabValue value;
};

struct LabDictionary {
    std::vector<KeyValuePair> pairs;  // m >= 1
    std::optional<std::string> kind_tag;
};

struct LabReportSet {
    std::vector<LabDictionary> dictionaries;  // may be empty

    size_t total_pairs() const {
        size_t n = 0;
        for (const auto& d : dictionaries) n += d.pairs.size();
        return n;
    }
};

// One training/eval record: structured report, free-text patient note,
// gold diagnosis strings.
struct DiagnosisSample {
    LabReportSet report;
    std::string patient_text;
    std::vector<std::string> diagnoses;
};

// Qualitative string -> label lookup, matched case-insensitively after
// trimming. Callers may extend the default table.
using QualitativeMap = std::map<std::string, MedicalLabel>;
const QualitativeMap& default_qualitative_map();

// Deterministic value binning. Numeric with both bounds bins by position
// against the closed interval [lo, hi]; one-sided bounds check only the
// present side. Unbounded numerics are NORMAL unless an abnormal flag
// string is attached. Qualitative strings go through the lookup table;
// unknown strings raise BinError.
MedicalLabel bin_value(const LabValue& value,
                       const QualitativeMap& table = default_qualitative_map());

// JSON-lines record schema, one sample per line:
//   {"dictionaries":[{"kind":str?,"pairs":[{"key":str,"num":float?,
//    "lo":float?,"hi":float?,"text":str?}]}],
//    "patient_text":str,"diagnoses":[str]}
DiagnosisSample parse_sample(const std::string& json_line);
std::string serialize_sample(const DiagnosisSample& sample);

LabReportSet parse_report(const std::string& json_text);
std::string serialize_report(const LabReportSet& report);

std::vector<DiagnosisSample> load_corpus(const std::string& path);
void save_corpus(const std::vector<DiagnosisSample>& samples, const std::string& path);

// Uniformly permutes pair order within each dictionary and the dictionary
// order itself; the multiset of (kind_tag, key, value) triples is
// unchanged. Deterministic given seed.
LabReportSet perturb(const LabReportSet& report, uint64_t seed);

}  // namespace dictllm
