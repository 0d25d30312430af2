#include "dictllm/synth.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "dictllm/rng.hpp"
#include "json.hpp"

namespace dictllm {

namespace {

const char* kKindNames[] = {"blood", "urine", "stool", "csf", "swab", "culture"};

std::string kind_name(int kind) {
    const int base = static_cast<int>(sizeof(kKindNames) / sizeof(kKindNames[0]));
    std::string name = kKindNames[kind % base];
    if (kind >= base) name += std::to_string(kind / base);
    return name;
}

std::string key_name(int kind, int key) {
    return kind_name(kind) + "_item" + std::to_string(key);
}

bool key_is_numeric(int key_index) { return key_index % 2 == 0; }

// Fixed reference interval shared by all numeric keys; values are
// sampled relative to it to realize a target label.
constexpr double kRefLo = 10.0;
constexpr double kRefHi = 20.0;

const char* qualitative_text_for(MedicalLabel label) {
    switch (label) {
        case MedicalLabel::kNormal: return "normal";
        case MedicalLabel::kAbnormal: return "abnormal";
        case MedicalLabel::kPositive: return "positive";
        case MedicalLabel::kNegative: return "negative";
        case MedicalLabel::kPositivePlus: return "positive+";
        case MedicalLabel::kPositivePlusPlus: return "positive++";
        case MedicalLabel::kPositiveMinus: return "positive-";
        case MedicalLabel::kSensitive: return "sensitive";
        case MedicalLabel::kResistant: return "resistant";
        case MedicalLabel::kIntermediate: return "intermediate";
        default: throw std::logic_error("label has no qualitative text form");
    }
}

LabValue realize_value(int key_index, MedicalLabel label, Rng& rng) {
    if (!key_is_numeric(key_index)) {
        return LabValue::qualitative(qualitative_text_for(label));
    }
    double v = 0.0;
    switch (label) {
        case MedicalLabel::kNormal:
            v = kRefLo + (kRefHi - kRefLo) * (0.1 + 0.8 * rng.next_double());
            break;
        case MedicalLabel::kHiNormal:
            v = kRefHi + 1.0 + 5.0 * rng.next_double();
            break;
        case MedicalLabel::kLtNormal:
            v = kRefLo - 1.0 - 5.0 * rng.next_double();
            break;
        default:
            throw std::logic_error("numeric key cannot realize label " + label_name(label));
    }
    return LabValue::numeric(v, kRefLo, kRefHi);
}

MedicalLabel background_label(int key_index, Rng& rng) {
    const double roll = rng.next_double();
    if (key_is_numeric(key_index)) {
        if (roll < 0.70) return MedicalLabel::kNormal;
        return roll < 0.85 ? MedicalLabel::kHiNormal : MedicalLabel::kLtNormal;
    }
    if (roll < 0.70) return MedicalLabel::kNegative;
    static const MedicalLabel pool[] = {
        MedicalLabel::kPositive,     MedicalLabel::kPositivePlus,
        MedicalLabel::kPositiveMinus, MedicalLabel::kSensitive,
        MedicalLabel::kResistant,    MedicalLabel::kIntermediate};
    return pool[rng.next_below(6)];
}

MedicalLabel rule_label(int key_index, Rng& rng) {
    if (key_is_numeric(key_index)) {
        return rng.next_below(2) == 0 ? MedicalLabel::kHiNormal : MedicalLabel::kLtNormal;
    }
    static const MedicalLabel pool[] = {
        MedicalLabel::kPositive, MedicalLabel::kPositivePlus,
        MedicalLabel::kPositivePlusPlus, MedicalLabel::kResistant,
        MedicalLabel::kIntermediate};
    return pool[rng.next_below(5)];
}

int key_index_of(const std::string& key) {
    size_t pos = key.rfind("item");
    return std::stoi(key.substr(pos + 4));
}

uint64_t sample_stream_seed(uint64_t seed, uint64_t index) {
    return seed ^ (0x9e3779b97f4a7c15ULL * (index + 1));
}

}  // namespace

void SynthConfig::validate() const {
    if (num_samples < 0) throw std::invalid_argument("num_samples must be >= 0");
    if (num_dict_kinds < 1) throw std::invalid_argument("num_dict_kinds must be >= 1");
    if (keys_per_kind < 3) throw std::invalid_argument("keys_per_kind must be >= 3");
    if (num_diseases < 1) throw std::invalid_argument("num_diseases must be >= 1");
    if (min_pairs_per_dict < 1 || max_pairs_per_dict < min_pairs_per_dict)
        throw std::invalid_argument("invalid pairs_per_dict range");
    if (max_pairs_per_dict > keys_per_kind)
        throw std::invalid_argument("max_pairs_per_dict exceeds keys_per_kind");
    if (min_dicts_per_report < 1 || max_dicts_per_report < min_dicts_per_report)
        throw std::invalid_argument("invalid dicts_per_report range");
    if (patient_text_noise_tokens < 0)
        throw std::invalid_argument("patient_text_noise_tokens must be >= 0");
    if (split_distractor_prob < 0.0 || split_distractor_prob > 1.0)
        throw std::invalid_argument("split_distractor_prob must be in [0, 1]");
}

SynthConfig SynthConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open synth config: " + path);
    nlohmann::json j;
    in >> j;
    SynthConfig c;
    c.num_samples = j.value("num_samples", c.num_samples);
    c.num_dict_kinds = j.value("num_dict_kinds", c.num_dict_kinds);
    c.keys_per_kind = j.value("keys_per_kind", c.keys_per_kind);
    c.num_diseases = j.value("num_diseases", c.num_diseases);
    c.min_pairs_per_dict = j.value("min_pairs_per_dict", c.min_pairs_per_dict);
    c.max_pairs_per_dict = j.value("max_pairs_per_dict", c.max_pairs_per_dict);
    c.min_dicts_per_report = j.value("min_dicts_per_report", c.min_dicts_per_report);
    c.max_dicts_per_report = j.value("max_dicts_per_report", c.max_dicts_per_report);
    c.patient_text_noise_tokens =
        j.value("patient_text_noise_tokens", c.patient_text_noise_tokens);
    c.split_distractor_prob = j.value("split_distractor_prob", c.split_distractor_prob);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

void SynthConfig::to_json_file(const std::string& path) const {
    nlohmann::json j{{"num_samples", num_samples},
                     {"num_dict_kinds", num_dict_kinds},
                     {"keys_per_kind", keys_per_kind},
                     {"num_diseases", num_diseases},
                     {"min_pairs_per_dict", min_pairs_per_dict},
                     {"max_pairs_per_dict", max_pairs_per_dict},
                     {"min_dicts_per_report", min_dicts_per_report},
                     {"max_dicts_per_report", max_dicts_per_report},
                     {"patient_text_noise_tokens", patient_text_noise_tokens},
                     {"split_distractor_prob", split_distractor_prob},
                     {"seed", seed}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write synth config: " + path);
    out << j.dump(2) << "\n";
}

std::vector<DiseaseRule> make_rules(const SynthConfig& config) {
    config.validate();
    Rng rng(sample_stream_seed(config.seed, 0xDA7A));
    std::vector<DiseaseRule> rules;
    std::set<std::vector<std::pair<std::string, int>>> seen;
    for (int d = 0; d < config.num_diseases; ++d) {
        const int kind = d % config.num_dict_kinds;
        for (;;) {
            const int num_required = 2 + static_cast<int>(rng.next_below(2));
            std::vector<int> keys(config.keys_per_kind);
            for (int i = 0; i < config.keys_per_kind; ++i) keys[i] = i;
            rng.shuffle(keys);
            DiseaseRule rule;
            rule.kind_tag = kind_name(kind);
            rule.diagnosis = "disease_" + std::to_string(d);
            std::vector<std::pair<std::string, int>> signature;
            for (int i = 0; i < num_required; ++i) {
                MedicalLabel label = rule_label(keys[i], rng);
                rule.required.emplace_back(key_name(kind, keys[i]), label);
                signature.emplace_back(rule.required.back().first,
                                       static_cast<int>(label));
            }
            std::sort(signature.begin(), signature.end());
            if (seen.insert(signature).second) {
                rules.push_back(std::move(rule));
                break;
            }
        }
    }
    return rules;
}

void save_rules(const std::vector<DiseaseRule>& rules, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& rule : rules) {
        nlohmann::json jr{{"kind", rule.kind_tag}, {"diagnosis", rule.diagnosis}};
        nlohmann::json req = nlohmann::json::array();
        for (const auto& [key, label] : rule.required)
            req.push_back({{"key", key}, {"label", label_name(label)}});
        jr["required"] = std::move(req);
        j.push_back(std::move(jr));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write rules file: " + path);
    out << j.dump(2) << "\n";
}

std::vector<DiseaseRule> load_rules(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open rules file: " + path);
    nlohmann::json j;
    in >> j;
    std::vector<DiseaseRule> rules;
    for (const auto& jr : j) {
        DiseaseRule rule;
        rule.kind_tag = jr.at("kind").get<std::string>();
        rule.diagnosis = jr.at("diagnosis").get<std::string>();
        for (const auto& req : jr.at("required")) {
            const std::string name = req.at("label").get<std::string>();
            int label = -1;
            for (int i = 0; i < kNumMedicalLabels; ++i)
                if (label_name(static_cast<MedicalLabel>(i)) == name) label = i;
            if (label < 0) throw std::runtime_error("unknown label in rules file: " + name);
            rule.required.emplace_back(req.at("key").get<std::string>(),
                                       static_cast<MedicalLabel>(label));
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

std::set<std::string> oracle_diagnose(const LabReportSet& report,
                                      const std::vector<DiseaseRule>& rules) {
    std::set<std::string> out;
    for (const auto& rule : rules) {
        for (const auto& dict : report.dictionaries) {
            if (!dict.kind_tag || *dict.kind_tag != rule.kind_tag) continue;
            bool all_met = true;
            for (const auto& [key, label] : rule.required) {
                bool met = false;
                for (const auto& kv : dict.pairs) {
                    if (kv.key == key && bin_value(kv.value) == label) {
                        met = true;
                        break;
                    }
                }
                if (!met) {
                    all_met = false;
                    break;
                }
            }
            if (all_met) {
                out.insert(rule.diagnosis);
                break;
            }
        }
    }
    return out;
}

namespace {

// Forces the rule's triples into the dictionary, replacing non-rule
// pairs where possible so the pair count stays at its sampled size.
void plant_rule(LabDictionary& dict, const DiseaseRule& rule, Rng& rng) {
    for (const auto& [key, label] : rule.required) {
        auto it = std::find_if(dict.pairs.begin(), dict.pairs.end(),
                               [&key](const KeyValuePair& kv) { return kv.key == key; });
        if (it == dict.pairs.end()) {
            // Replace a random pair whose key is not required by the rule.
            std::vector<size_t> candidates;
            for (size_t i = 0; i < dict.pairs.size(); ++i) {
                const std::string& k = dict.pairs[i].key;
                bool in_rule = std::any_of(rule.required.begin(), rule.required.end(),
                                           [&k](const auto& r) { return r.first == k; });
                if (!in_rule) candidates.push_back(i);
            }
            if (candidates.empty()) {
                dict.pairs.push_back({key, LabValue::numeric(0.0)});
                it = dict.pairs.end() - 1;
            } else {
                it = dict.pairs.begin() +
                     static_cast<long>(candidates[rng.next_below(candidates.size())]);
                it->key = key;
            }
        }
        it->value = realize_value(key_index_of(key), label, rng);
    }
}

}  // namespace

std::vector<DiagnosisSample> generate_corpus(const SynthConfig& config,
                                             const std::vector<DiseaseRule>& rules) {
    config.validate();
    if (rules.empty()) throw std::invalid_argument("generate_corpus: no rules");
    std::vector<DiagnosisSample> samples(config.num_samples);
    for (int s = 0; s < config.num_samples; ++s) {
        Rng rng(sample_stream_seed(config.seed, static_cast<uint64_t>(s) + 1));
        DiagnosisSample sample;

        const int ndicts =
            config.min_dicts_per_report +
            static_cast<int>(rng.next_below(
                config.max_dicts_per_report - config.min_dicts_per_report + 1));
        const size_t planted_idx = rng.next_below(rules.size());
        const DiseaseRule& planted = rules[planted_idx];

        // Kind layout: dict 0 carries the planted rule's kind. A split
        // distractor needs two further dictionaries of its rule's kind.
        std::vector<int> kinds(ndicts);
        for (int i = 0; i < ndicts; ++i)
            kinds[i] = static_cast<int>(rng.next_below(config.num_dict_kinds));
        const DiseaseRule* distractor = nullptr;
        if (ndicts >= 3 && rules.size() > 1 &&
            rng.next_double() < config.split_distractor_prob) {
            const size_t offset = 1 + rng.next_below(rules.size() - 1);
            distractor = &rules[(planted_idx + offset) % rules.size()];
        }

        for (int i = 0; i < ndicts; ++i) {
            LabDictionary dict;
            dict.kind_tag = kind_name(kinds[i]);
            const int npairs =
                config.min_pairs_per_dict +
                static_cast<int>(rng.next_below(
                    config.max_pairs_per_dict - config.min_pairs_per_dict + 1));
            std::vector<int> keys(config.keys_per_kind);
            for (int k = 0; k < config.keys_per_kind; ++k) keys[k] = k;
            rng.shuffle(keys);
            for (int p = 0; p < npairs; ++p) {
                MedicalLabel label = background_label(keys[p], rng);
                dict.pairs.push_back({key_name(kinds[i], keys[p]),
                                      realize_value(keys[p], label, rng)});
            }
            sample.report.dictionaries.push_back(std::move(dict));
        }

        // Retags a dictionary to the given kind, renaming its keys so
        // they stay within that kind's key space.
        auto retag = [&config](LabDictionary& dict, const std::string& kind_tag) {
            int kind_idx = 0;
            for (int k = 0; k < config.num_dict_kinds; ++k)
                if (kind_name(k) == kind_tag) kind_idx = k;
            dict.kind_tag = kind_tag;
            for (auto& kv : dict.pairs) kv.key = key_name(kind_idx, key_index_of(kv.key));
        };

        // Dict 0 hosts the planted rule.
        retag(sample.report.dictionaries[0], planted.kind_tag);
        plant_rule(sample.report.dictionaries[0], planted, rng);

        if (distractor) {
            // Split the distractor's triples across two dictionaries so
            // the single-dictionary requirement fails. Backgrounds can
            // still complete a half by accident; the oracle below is the
            // ground truth either way.
            auto& dict_a = sample.report.dictionaries[1];
            auto& dict_b = sample.report.dictionaries[2];
            retag(dict_a, distractor->kind_tag);
            retag(dict_b, distractor->kind_tag);
            DiseaseRule half_a{distractor->kind_tag, {}, ""};
            DiseaseRule half_b{distractor->kind_tag, {}, ""};
            for (size_t t = 0; t < distractor->required.size(); ++t)
                (t % 2 == 0 ? half_a : half_b).required.push_back(distractor->required[t]);
            if (!half_a.required.empty()) plant_rule(dict_a, half_a, rng);
            if (!half_b.required.empty()) plant_rule(dict_b, half_b, rng);
        }

        auto gold = oracle_diagnose(sample.report, rules);
        sample.diagnoses.assign(gold.begin(), gold.end());

        // Patient text: one symptom token per kind implicated by a fired
        // rule, plus uniform noise tokens.
        std::set<std::string> sym_kinds;
        for (const auto& rule : rules)
            if (gold.count(rule.diagnosis)) sym_kinds.insert(rule.kind_tag);
        std::string text;
        for (const auto& kt : sym_kinds) text += "sym_" + kt + " ";
        for (int t = 0; t < config.patient_text_noise_tokens; ++t)
            text += "note_" + std::to_string(rng.next_below(50)) + " ";
        if (!text.empty()) text.pop_back();
        sample.patient_text = std::move(text);

        samples[s] = std::move(sample);
    }
    return samples;
}

}  // namespace dictllm
