// Command-line front end: runs scenario files and replays stored records.
//
// Exit codes: 0 all configured tests pass, 1 a test failed (or a replay
// differs), 2 input error.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "collapse/errors.hpp"
#include "collapse/report.hpp"
#include "collapse/rng.hpp"
#include "collapse/scenario.hpp"

namespace {

using namespace collapse;

constexpr std::uint64_t kDefaultSeed = 1;

struct Options {
    std::string scenario;
    std::optional<std::uint64_t> trials;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string sweep;
    std::string out;
    std::string replay;
    std::string record;
    std::uint64_t record_trial = 0;
};

std::uint64_t parse_seed_text(std::string_view text, const char *source) {
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
        throw ValidationError(std::string(source) + " is not an unsigned 64-bit integer: '" + std::string(text) + "'");
    }
    return v;
}

/// --seed, then COLLAPSE_SIM_SEED, then the scenario file, then kDefaultSeed.
std::uint64_t resolve_seed(const Options &o, const ScenarioFile &s) {
    if (o.seed) {
        return *o.seed;
    }
    if (const char *env = std::getenv("COLLAPSE_SIM_SEED"); env != nullptr && *env != '\0') {
        return parse_seed_text(env, "COLLAPSE_SIM_SEED");
    }
    return s.harness.seed.value_or(kDefaultSeed);
}

SweepSettings parse_sweep_flag(const std::string &text) {
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ValidationError("--sweep expects PARAM=v1,v2,...");
    }
    SweepSettings sweep{text.substr(0, eq), {}};
    std::stringstream values(text.substr(eq + 1));
    std::string item;
    while (std::getline(values, item, ',')) {
        double v = 0.0;
        const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || end != item.data() + item.size() || !std::isfinite(v)) {
            throw ValidationError("--sweep value is not a finite number: '" + item + "'");
        }
        sweep.values.push_back(v);
    }
    if (sweep.values.size() < 2) {
        throw ValidationError("--sweep needs at least two values");
    }
    return sweep;
}

std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot read '" + path + "'");
    }
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

void write_file(const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text) || !out.flush()) {
        throw ValidationError("cannot write '" + path + "'");
    }
}

std::string trial_records(const Experiment &e, std::uint64_t master_seed, std::uint64_t trial) {
    std::string out;
    for (const MeasurementRecord &r : e.trial(derive_seed(master_seed, trial)).records) {
        out += render_record(r);
    }
    return out;
}

int replay(const Options &o) {
    const ReplayFile stored = parse_replay(read_file(o.replay));
    const Experiment e = compile_experiment(load_scenario(stored.scenario_path));
    const bool match = trial_records(e, stored.master_seed, stored.trial) == stored.records;
    std::cout << "replay\t" << (match ? "match" : "mismatch") << "\n";
    return match ? 0 : 1;
}

int run(const Options &o) {
    if (!o.replay.empty()) {
        return replay(o);
    }
    if (o.scenario.empty()) {
        throw ValidationError("--scenario is required");
    }
    ScenarioFile s = load_scenario(o.scenario);
    if (o.trials) {
        s.harness.trials = *o.trials;
    }
    if (o.threads) {
        s.harness.threads = *o.threads;
    }
    if (!o.sweep.empty()) {
        s.sweep = parse_sweep_flag(o.sweep);
    }
    const std::uint64_t seed = resolve_seed(o, s);
    const std::uint64_t trials = s.harness.trials;

    std::string report;
    bool passed = true;
    if (s.sweep) {
        if (!o.record.empty()) {
            throw ValidationError("--record cannot be combined with a sweep");
        }
        const std::string name = s.sweep->parameter;
        // Validates the parameter before any trial runs.
        with_parameter(s, name, s.sweep->values.front());
        const auto family = [&s, &name](double v) { return compile_experiment(with_parameter(s, name, v)); };
        const PeakReport peaks = asymmetry_sweep(family, name, s.sweep->values, trials, seed, s.harness.threads);
        const auto verdicts = evaluate_sweep_tests(s.tests, peaks);
        passed = all_passed(verdicts);
        report = render_sweep_report(s, seed, trials, peaks, verdicts);
    } else {
        if (s.tests.monotone) {
            throw ValidationError("the monotone test needs a sweep");
        }
        const Experiment e = compile_experiment(s);
        const TrialSummary summary = run_trials(e, trials, seed, s.harness.threads);
        const auto verdicts = evaluate_tests(s.tests, summary);
        passed = all_passed(verdicts);
        report = render_run_report(s, seed, trials, summary, verdicts);
        if (!o.record.empty()) {
            if (o.record_trial >= trials) {
                throw ValidationError("--record-trial must be below the trial count");
            }
            const ReplayFile r{std::filesystem::absolute(o.scenario).string(), o.record_trial, seed,
                               trial_records(e, seed, o.record_trial)};
            write_file(o.record, render_replay(r));
        }
    }
    if (o.out.empty()) {
        std::cout << report;
    } else {
        write_file(o.out, report);
    }
    return passed ? 0 : 1;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Seeded Monte Carlo simulator for measurement and collapse scenarios"};
    app.require_subcommand(1);
    Options o;
    CLI::App *cmd = app.add_subcommand("run", "Run a scenario file or replay a stored record");
    cmd->add_option("--scenario", o.scenario, "Scenario file");
    cmd->add_option("--trials", o.trials, "Number of trials (overrides the file)");
    cmd->add_option("--seed", o.seed, "Master seed (overrides COLLAPSE_SIM_SEED and the file)");
    cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--sweep", o.sweep, "Parameter sweep PARAM=v1,v2,...");
    cmd->add_option("--out", o.out, "Write the report to PATH instead of standard output");
    cmd->add_option("--replay", o.replay, "Re-run a stored record and compare it bit-exactly");
    cmd->add_option("--record", o.record, "Store the records of one trial for replay");
    cmd->add_option("--record-trial", o.record_trial, "Trial index stored by --record");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        return run(o);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
