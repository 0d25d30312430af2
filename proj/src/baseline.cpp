#include "dictllm/baseline.hpp"

#include <sstream>

namespace dictllm {

std::string serialize_baseline(const LabReportSet& report, const QualitativeMap& table) {
    std::ostringstream out;
    bool first_dict = true;
    for (const auto& dict : report.dictionaries) {
        if (!first_dict) out << " [DSEP] ";
        first_dict = false;
        bool first_pair = true;
        for (const auto& kv : dict.pairs) {
            if (!first_pair) out << ", ";
            first_pair = false;
            out << kv.key << ":" << label_name(bin_value(kv.value, table));
        }
    }
    return out.str();
}

}  // namespace dictllm
