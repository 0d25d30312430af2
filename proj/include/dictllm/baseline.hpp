#pragma once

#include <string>

#include "dictllm/report.hpp"

namespace dictllm {

// Text-serialization baseline. Items render as "key:LABEL" joined by
// ", " inside a dictionary; dictionaries are joined by " [DSEP] ".
// Deliberately order-sensitive.
std::string serialize_baseline(const LabReportSet& report,
                               const QualitativeMap& table = default_qualitative_map());

}  // namespace dictllm
