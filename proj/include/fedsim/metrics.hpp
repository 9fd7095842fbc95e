#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/simulation.hpp"
#include "fedsim/verify.hpp"

namespace fedsim {

// Shortest round-trip decimal form (never locale-dependent, '.' radix).
std::string format_double(double v);

// Exact column order; a byte off here breaks downstream parsers.
std::string metrics_header();
std::string metrics_row(const RoundRecord& record, uint64_t seed);
void write_metrics_csv(const std::string& path, const std::vector<RoundRecord>& records, uint64_t seed);

// One self-contained JSON object per report, suitable as a JSONL line.
std::string approx_report_jsonl(const ApproxErrorReport& report);
std::string sampling_report_jsonl(const SamplingReport& report);
std::string degeneracy_jsonl(const DegeneracyResult& result);

void append_line(const std::string& path, const std::string& line);

}  // namespace fedsim
