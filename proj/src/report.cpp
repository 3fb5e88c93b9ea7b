#include "collapse/report.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

std::string exact(double v) {
    return fmt::format("{:.17g}", v);
}

std::string exact(const Vec3 &v) {
    return exact(v.x()) + "\t" + exact(v.y()) + "\t" + exact(v.z());
}

std::string render_state(const PathState &state) {
    std::string out;
    for (const StateComponent &c : state.components()) {
        if (const auto *p = std::get_if<Position>(&c)) {
            out += "\tpos\t" + exact(p->value);
        } else if (const auto *q = std::get_if<Momentum>(&c)) {
            out += "\tmom\t" + exact(q->value);
        } else {
            const Spin &s = std::get<Spin>(c);
            out += "\tspin\t" + std::to_string(s.twice_projection) + "\t" + exact(s.axis);
        }
    }
    return out;
}

std::string verdict_line(const TestVerdict &v) {
    return fmt::format("test\t{}\t{}\t{}\n", v.name, v.detail, v.passed ? "PASS" : "FAIL");
}

std::string header(const ScenarioFile &s, std::uint64_t seed, std::uint64_t trials, std::string_view swept = {}) {
    std::string out = fmt::format("version\t{}\nscenario\t{}\nbuilder\t{}\nseed\t{}\ntrials\t{}\n", kVersion, s.name,
                                  s.builder, seed, trials);
    for (const ParameterSpec &p : builder_parameters(s.builder)) {
        if (p.name == swept) {
            out += fmt::format("param\t{}\tswept\n", p.name);
            continue;
        }
        const ParamValue v = parameter(s, p.name);
        std::string text;
        if (const auto *d = std::get_if<double>(&v)) {
            text = format_number(*d);
        } else if (const auto *i = std::get_if<std::int64_t>(&v)) {
            text = std::to_string(*i);
        } else {
            const Vec3 &a = std::get<Vec3>(v);
            text = format_number(a.x()) + "," + format_number(a.y()) + "," + format_number(a.z());
        }
        out += fmt::format("param\t{}\t{}\n", p.name, text);
    }
    return out;
}

std::pair<std::string_view, std::string_view> split_line(std::string_view &rest, std::size_t line) {
    const std::size_t nl = rest.find('\n');
    if (nl == std::string_view::npos) {
        throw ParseError(line, 1, "truncated replay header");
    }
    const std::string_view text = rest.substr(0, nl);
    rest.remove_prefix(nl + 1);
    const std::size_t tab = text.find('\t');
    if (tab == std::string_view::npos) {
        throw ParseError(line, 1, "expected key<TAB>value");
    }
    return {text.substr(0, tab), text.substr(tab + 1)};
}

std::uint64_t parse_u64(std::string_view text, std::size_t line) {
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
        throw ParseError(line, 1, "expected an unsigned integer, got '" + std::string(text) + "'");
    }
    return v;
}

}  // namespace

std::string format_number(double v) {
    return fmt::format("{:.12g}", v);
}

std::vector<TestVerdict> evaluate_tests(const TestSettings &tests, const TrialSummary &summary) {
    std::vector<TestVerdict> out;
    if (!tests.chi_square.empty()) {
        const ChiSquareResult r = chi_square_test(summary.histogram, tests.chi_square, tests.alpha);
        out.push_back({"chi_square",
                       fmt::format("{}\t{}\t{}\t{}", format_number(r.statistic), format_number(r.critical),
                                   r.degrees_of_freedom, format_number(tests.alpha)),
                       r.passed});
    }
    if (tests.correlation) {
        if (summary.signs.empty()) {
            throw ValidationError("correlation test needs a scenario with two signed readings");
        }
        const double r = correlation(summary.signs);
        out.push_back({"correlation",
                       fmt::format("{}\t{}\t{}", format_number(r), format_number(*tests.correlation),
                                   format_number(tests.correlation_tolerance)),
                       std::abs(r - *tests.correlation) <= tests.correlation_tolerance});
    }
    return out;
}

std::vector<TestVerdict> evaluate_sweep_tests(const TestSettings &tests, const PeakReport &report) {
    std::vector<TestVerdict> out;
    if (tests.monotone) {
        out.push_back({"monotone", report.parameter, report.monotone});
    }
    return out;
}

bool all_passed(const std::vector<TestVerdict> &verdicts) {
    for (const TestVerdict &v : verdicts) {
        if (!v.passed) {
            return false;
        }
    }
    return true;
}

std::string render_run_report(const ScenarioFile &s, std::uint64_t seed, std::uint64_t trials,
                              const TrialSummary &summary, const std::vector<TestVerdict> &verdicts) {
    std::string out = header(s, seed, trials);
    out += "label\tcount\tfraction\n";
    const std::uint64_t total = summary.histogram.total();
    for (const auto &[label, count] : summary.histogram.bins()) {
        const double fraction = total == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total);
        out += fmt::format("bin\t{}\t{}\t{}\n", label, count, format_number(fraction));
    }
    out += fmt::format("accepted\t{}\nrejected\t{}\n", total, summary.histogram.rejected());
    for (const TestVerdict &v : verdicts) {
        out += verdict_line(v);
    }
    return out;
}

std::string render_sweep_report(const ScenarioFile &s, std::uint64_t seed, std::uint64_t trials,
                                const PeakReport &report, const std::vector<TestVerdict> &verdicts) {
    std::string out = header(s, seed, trials, report.parameter);
    out += fmt::format("{}\tpeak\tstandard_error\taccepted\trejected\n", report.parameter);
    for (std::size_t i = 0; i < report.values.size(); ++i) {
        out += fmt::format("point\t{}\t{}\t{}\t{}\t{}\n", format_number(report.values[i]),
                           format_number(report.metrics[i]), format_number(report.standard_errors[i]),
                           report.accepted[i], report.rejected[i]);
    }
    out += fmt::format("nondecreasing\t{}\n", report.monotone ? "yes" : "no");
    for (const TestVerdict &v : verdicts) {
        out += verdict_line(v);
    }
    return out;
}

std::string render_record(const MeasurementRecord &record) {
    std::string out = fmt::format("record\t{}\n", record.seed);
    for (std::size_t i = 0; i < record.stages.size(); ++i) {
        const StageOutcome &st = record.stages[i];
        out += fmt::format("stage\t{}\t{}\tat\t{}{}\n", i, to_string(st.channel), exact(st.position),
                           render_state(st.entry_state));
    }
    out += fmt::format("detector\t{}\t{}\n", record.detector_bin, record.detector_label);
    out += "final" + render_state(record.final_state) + "\n";
    for (const TraceEntry &d : record.draws) {
        out += fmt::format("draw\t{}\t{}\n", to_string(d.decision), exact(d.value));
    }
    return out;
}

std::string render_replay(const ReplayFile &r) {
    return fmt::format("replay\t{}\nscenario\t{}\ntrial\t{}\nseed\t{}\n{}", kVersion, r.scenario_path, r.trial,
                       r.master_seed, r.records);
}

ReplayFile parse_replay(std::string_view text) {
    static constexpr std::string_view keys[] = {"replay", "scenario", "trial", "seed"};
    ReplayFile out;
    std::string_view rest = text;
    for (std::size_t line = 1; line <= 4; ++line) {
        const auto [key, value] = split_line(rest, line);
        if (key != keys[line - 1]) {
            throw ParseError(line, 1, "expected '" + std::string(keys[line - 1]) + "'");
        }
        if (line == 1 && value != kVersion) {
            throw ParseError(line, key.size() + 2, "replay written by version " + std::string(value));
        }
        if (line == 2) {
            out.scenario_path = std::string(value);
        } else if (line == 3) {
            out.trial = parse_u64(value, line);
        } else if (line == 4) {
            out.master_seed = parse_u64(value, line);
        }
    }
    out.records = std::string(rest);
    return out;
}

}  // namespace collapse
