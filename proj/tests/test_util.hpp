#pragma once

#include <string>

#include "dictllm/report.hpp"
#include "dictllm/rng.hpp"

namespace dictllm::testutil {

// Random report with qualitative and numeric values drawn from the
// default qualitative table's domain.
inline LabReportSet random_report(Rng& rng, int max_dicts = 4, int max_pairs = 5) {
    static const char* kQualTexts[] = {"positive", "negative",   "positive+",
                                       "positive++", "positive-", "sensitive",
                                       "resistant", "intermediate", "normal"};
    LabReportSet report;
    const int ndicts = 1 + static_cast<int>(rng.next_below(max_dicts));
    for (int d = 0; d < ndicts; ++d) {
        LabDictionary dict;
        if (rng.next_below(2) == 0) dict.kind_tag = "kind" + std::to_string(rng.next_below(3));
        const int npairs = 1 + static_cast<int>(rng.next_below(max_pairs));
        for (int p = 0; p < npairs; ++p) {
            KeyValuePair kv;
            kv.key = "key" + std::to_string(rng.next_below(12));
            if (rng.next_below(2) == 0) {
                double lo = 1.0 + 5.0 * rng.next_double();
                double hi = lo + 5.0 * rng.next_double();
                kv.value = LabValue::numeric(lo - 3.0 + 12.0 * rng.next_double(), lo, hi);
            } else {
                kv.value = LabValue::qualitative(kQualTexts[rng.next_below(9)]);
            }
            dict.pairs.push_back(std::move(kv));
        }
        report.dictionaries.push_back(std::move(dict));
    }
    return report;
}

}  // namespace dictllm::testutil
