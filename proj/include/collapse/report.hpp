#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "collapse/harness.hpp"
#include "collapse/scenario.hpp"

namespace collapse {

/// Version tag written into every report.
inline constexpr std::string_view kVersion = "0.1.0";

struct TestVerdict {
    std::string name;
    /// Tab-separated numbers backing the verdict.
    std::string detail;
    bool passed = false;
};

/// Chi-square and correlation checks configured in `tests`. Throws
/// ValidationError when a correlation is requested but no trial produced a
/// sign pair, and propagates InsufficientCounts.
std::vector<TestVerdict> evaluate_tests(const TestSettings &tests, const TrialSummary &summary);

/// Monotonicity check of a sweep when `tests.monotone` is set.
std::vector<TestVerdict> evaluate_sweep_tests(const TestSettings &tests, const PeakReport &report);

bool all_passed(const std::vector<TestVerdict> &verdicts);

/// Numbers in reports: 12 significant digits.
std::string format_number(double v);

/// Tab-separated run report. Depends only on its arguments.
std::string render_run_report(const ScenarioFile &s, std::uint64_t seed, std::uint64_t trials,
                              const TrialSummary &summary, const std::vector<TestVerdict> &verdicts);

std::string render_sweep_report(const ScenarioFile &s, std::uint64_t seed, std::uint64_t trials,
                                const PeakReport &report, const std::vector<TestVerdict> &verdicts);

/// Exact text form of a record (17 significant digits), used for replay.
std::string render_record(const MeasurementRecord &record);

/// Text form of a replay file: scenario path, trial index, master seed, then
/// the records of that trial.
struct ReplayFile {
    std::string scenario_path;
    std::uint64_t trial = 0;
    std::uint64_t master_seed = 0;
    /// Concatenated render_record output of the trial's records.
    std::string records;
};

std::string render_replay(const ReplayFile &r);

/// Throws ParseError on a malformed header.
ReplayFile parse_replay(std::string_view text);

}  // namespace collapse
