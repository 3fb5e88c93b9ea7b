#include "collapse/scenario.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------- parameters

const std::map<std::string, std::vector<ParameterSpec>, std::less<>> &parameter_tables() {
    static const std::map<std::string, std::vector<ParameterSpec>, std::less<>> tables{
        {"custom", {}},
        {"stern_gerlach",
         {{"input_axis", Vec3::UnitX()},
          {"input_spin", std::int64_t{1}},
          {"field_axis", Vec3::UnitZ()},
          {"strength", 1.0}}},
        {"repeated_field",
         {{"repetition_count", std::int64_t{1}},
          {"match_probability", 0.8},
          {"axis", Vec3::UnitZ()},
          {"strength", 1.0}}},
        {"epr", {{"axis", Vec3::UnitZ()}, {"separation", 20.0}, {"b_first", std::int64_t{0}}}},
        {"bhabha", {{"beam_energy", 1000.0}, {"energy_ratio", 1.0}, {"bins", std::int64_t{8}}}},
        {"scatter",
         {{"beam_momentum", 100.0},
          {"mass_ratio", Constants{}.muon_mass / Constants{}.electron_mass},
          {"bins", std::int64_t{8}}}},
    };
    return tables;
}

const ParameterSpec *find_parameter(std::string_view builder, std::string_view name) {
    for (const ParameterSpec &p : builder_parameters(builder)) {
        if (p.name == name) {
            return &p;
        }
    }
    return nullptr;
}

double real_param(const ScenarioFile &s, const std::string &name) {
    return std::get<double>(parameter(s, name));
}
std::int64_t int_param(const ScenarioFile &s, const std::string &name) {
    return std::get<std::int64_t>(parameter(s, name));
}
Vec3 vec_param(const ScenarioFile &s, const std::string &name) {
    return std::get<Vec3>(parameter(s, name));
}

// ---------------------------------------------------------------- lexing

/// Slice of the input with its 1-based position.
struct Field {
    std::string_view text;
    std::size_t line = 0;
    std::size_t column = 0;
};

[[noreturn]] void fail(const Field &f, const std::string &message) {
    throw ParseError(f.line, f.column, message);
}

Field trim(Field f) {
    while (!f.text.empty() && std::isspace(static_cast<unsigned char>(f.text.front()))) {
        f.text.remove_prefix(1);
        ++f.column;
    }
    while (!f.text.empty() && std::isspace(static_cast<unsigned char>(f.text.back()))) {
        f.text.remove_suffix(1);
    }
    return f;
}

Field sub(const Field &f, std::size_t pos, std::size_t len = std::string_view::npos) {
    return {f.text.substr(pos, len), f.line, f.column + pos};
}

std::vector<Field> split(const Field &f, char sep) {
    std::vector<Field> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= f.text.size(); ++i) {
        if (i == f.text.size() || f.text[i] == sep) {
            out.push_back(trim(sub(f, start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

std::vector<Field> split_ws(const Field &f) {
    std::vector<Field> out;
    std::size_t i = 0;
    while (i < f.text.size()) {
        while (i < f.text.size() && std::isspace(static_cast<unsigned char>(f.text[i]))) {
            ++i;
        }
        const std::size_t start = i;
        while (i < f.text.size() && !std::isspace(static_cast<unsigned char>(f.text[i]))) {
            ++i;
        }
        if (i > start) {
            out.push_back(sub(f, start, i - start));
        }
    }
    return out;
}

double parse_number(const Field &f, bool allow_infinite) {
    std::string_view t = f.text;
    if (!t.empty() && t.front() == '+') {
        t.remove_prefix(1);
    }
    double v = 0.0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || end != t.data() + t.size() || std::isnan(v)) {
        fail(f, "expected a number, got '" + std::string(f.text) + "'");
    }
    if (!allow_infinite && !std::isfinite(v)) {
        fail(f, "expected a finite number, got '" + std::string(f.text) + "'");
    }
    return v;
}

double parse_real(const Field &f) {
    return parse_number(f, false);
}

template <typename Int>
Int parse_integer(const Field &f) {
    std::string_view t = f.text;
    if (!t.empty() && t.front() == '+') {
        t.remove_prefix(1);
    }
    Int v{};
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || end != t.data() + t.size()) {
        fail(f, "expected an integer, got '" + std::string(f.text) + "'");
    }
    return v;
}

int parse_int(const Field &f) {
    return parse_integer<int>(f);
}

bool parse_bool(const Field &f) {
    if (f.text == "true") {
        return true;
    }
    if (f.text == "false") {
        return false;
    }
    fail(f, "expected true or false, got '" + std::string(f.text) + "'");
}

Vec3 parse_vec3(const Field &f) {
    const auto parts = split(f, ',');
    if (parts.size() != 3) {
        fail(f, "expected three comma-separated numbers");
    }
    return {parse_real(parts[0]), parse_real(parts[1]), parse_real(parts[2])};
}

Vec3 parse_unit(const Field &f) {
    const Vec3 v = parse_vec3(f);
    if (std::abs(v.norm() - 1.0) > 1e-12) {
        fail(f, "axis must be a unit vector");
    }
    return v;
}

Spin parse_spin(const Field &f) {
    const std::size_t at = f.text.find('@');
    const Field value = sub(f, 0, at);
    int twice = 0;
    if (value.text == "+1/2" || value.text == "1/2") {
        twice = 1;
    } else if (value.text == "-1/2") {
        twice = -1;
    } else if (value.text == "+1" || value.text == "1") {
        twice = 2;
    } else if (value.text == "-1") {
        twice = -2;
    } else {
        fail(value, "spin must be +1/2, -1/2, +1 or -1");
    }
    const Vec3 axis = at == std::string_view::npos ? Vec3::UnitZ() : parse_unit(sub(f, at + 1));
    return {twice, axis};
}

ParamValue parse_param(const Field &f, const ParamValue &kind) {
    if (std::holds_alternative<double>(kind)) {
        return parse_real(f);
    }
    if (std::holds_alternative<std::int64_t>(kind)) {
        return parse_integer<std::int64_t>(f);
    }
    return parse_vec3(f);
}

/// `key=value` tokens of one member, `|` between members, one `amp=re,im`.
PathRow parse_row(const Field &f) {
    PathRow row;
    std::vector<std::vector<StateComponent>> members(1);
    std::vector<Field> member_fields{f};
    bool have_amp = false;
    for (const Field &token : split_ws(f)) {
        if (token.text == "|") {
            members.emplace_back();
            member_fields.push_back(token);
            continue;
        }
        const std::size_t eq = token.text.find('=');
        if (eq == std::string_view::npos) {
            fail(token, "expected key=value in row, got '" + std::string(token.text) + "'");
        }
        const std::string_view key = token.text.substr(0, eq);
        const Field value = sub(token, eq + 1);
        if (key == "pos") {
            members.back().push_back(Position{parse_vec3(value)});
        } else if (key == "mom") {
            members.back().push_back(Momentum{parse_vec3(value)});
        } else if (key == "spin") {
            members.back().push_back(parse_spin(value));
        } else if (key == "amp") {
            if (have_amp) {
                fail(token, "row has more than one amplitude");
            }
            const auto parts = split(value, ',');
            if (parts.size() > 2) {
                fail(value, "amplitude is re or re,im");
            }
            row.amplitude = {parse_real(parts[0]), parts.size() == 2 ? parse_real(parts[1]) : 0.0};
            have_amp = true;
        } else {
            fail(token, "unknown row key '" + std::string(key) + "'");
        }
    }
    if (!have_amp) {
        fail(f, "row needs amp=re,im");
    }
    for (std::size_t m = 0; m < members.size(); ++m) {
        try {
            row.states.emplace_back(std::move(members[m]));
        } catch (const ValidationError &e) {
            fail(member_fields[m], e.what());
        }
    }
    return row;
}

// ---------------------------------------------------------------- rendering

std::string num(double v) {
    return fmt::format("{:.17g}", v);
}

std::string vec(const Vec3 &v, std::string_view sep = ", ") {
    return num(v.x()) + std::string(sep) + num(v.y()) + std::string(sep) + num(v.z());
}

std::string render_param(const ParamValue &v) {
    if (const auto *d = std::get_if<double>(&v)) {
        return num(*d);
    }
    if (const auto *i = std::get_if<std::int64_t>(&v)) {
        return std::to_string(*i);
    }
    return vec(std::get<Vec3>(v));
}

std::string render_spin(const Spin &s) {
    static const std::map<int, std::string> names{{1, "+1/2"}, {-1, "-1/2"}, {2, "+1"}, {-2, "-1"}};
    return names.at(s.twice_projection) + "@" + vec(s.axis, ",");
}

std::string render_row(const PathRow &row) {
    std::string out;
    for (std::size_t m = 0; m < row.states.size(); ++m) {
        if (m > 0) {
            out += "| ";
        }
        for (const StateComponent &c : row.states[m].components()) {
            if (const auto *p = std::get_if<Position>(&c)) {
                out += "pos=" + vec(p->value, ",") + " ";
            } else if (const auto *q = std::get_if<Momentum>(&c)) {
                out += "mom=" + vec(q->value, ",") + " ";
            } else {
                out += "spin=" + render_spin(std::get<Spin>(c)) + " ";
            }
        }
    }
    return out + "amp=" + num(row.amplitude.real()) + "," + num(row.amplitude.imag());
}

// ---------------------------------------------------------------- parser

enum class Section { none, scenario, particle, collection, stage, detector, engine, constants, harness, tests, sweep };

struct SectionSpec {
    Section section;
    bool named;
    bool repeatable;
};

const std::map<std::string, SectionSpec, std::less<>> &section_specs() {
    static const std::map<std::string, SectionSpec, std::less<>> specs{
        {"scenario", {Section::scenario, false, false}},   {"particle", {Section::particle, true, true}},
        {"collection", {Section::collection, true, true}}, {"stage", {Section::stage, false, true}},
        {"detector", {Section::detector, false, false}},   {"engine", {Section::engine, false, false}},
        {"constants", {Section::constants, false, false}}, {"harness", {Section::harness, false, false}},
        {"tests", {Section::tests, false, false}},         {"sweep", {Section::sweep, false, false}},
    };
    return specs;
}

class Parser {
  public:
    ScenarioFile parse(std::string_view text) {
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const std::size_t end = std::min(text.find('\n', pos), text.size());
            ++line_no;
            std::string_view line = text.substr(pos, end - pos);
            if (const auto hash = line.find('#'); hash != std::string_view::npos) {
                line = line.substr(0, hash);
            }
            handle_line(trim({line, line_no, 1}));
            pos = end + 1;
        }
        finish_section();
        return finish();
    }

  private:
    void handle_line(const Field &line) {
        if (line.text.empty()) {
            return;
        }
        if (line.text.front() == '[') {
            if (line.text.back() != ']') {
                fail(line, "section header must end with ']'");
            }
            open_section(trim(sub(line, 1, line.text.size() - 2)));
            return;
        }
        const std::size_t eq = line.text.find('=');
        if (eq == std::string_view::npos) {
            fail(line, "expected key = value");
        }
        const Field key = trim(sub(line, 0, eq));
        const Field value = trim(sub(line, eq + 1));
        if (key.text.empty()) {
            fail(line, "missing key");
        }
        if (section_ == Section::none) {
            fail(line, "key outside of any section");
        }
        const bool repeatable = key.text == "row" || key.text == "bin";
        if (!repeatable && !keys_.insert(std::string(key.text)).second) {
            fail(key, "duplicate key '" + std::string(key.text) + "'");
        }
        if (value.text.empty()) {
            fail(value, "missing value for '" + std::string(key.text) + "'");
        }
        handle_key(key, value);
    }

    void open_section(const Field &header) {
        finish_section();
        const auto words = split_ws(header);
        if (words.empty()) {
            fail(header, "empty section header");
        }
        const auto it = section_specs().find(words[0].text);
        if (it == section_specs().end()) {
            fail(words[0], "unknown section '" + std::string(words[0].text) + "'");
        }
        const SectionSpec spec = it->second;
        if (spec.named != (words.size() == 2) || words.size() > 2) {
            fail(header, spec.named ? "section needs exactly one name" : "section takes no name");
        }
        if (!spec.repeatable && !sections_seen_.insert(std::string(words[0].text)).second) {
            fail(header, "duplicate section [" + std::string(words[0].text) + "]");
        }
        section_ = spec.section;
        section_field_ = header;
        keys_.clear();
        if (section_ == Section::particle) {
            out_.particles.push_back({std::string(words[1].text), ParticleType::electron, {}});
        } else if (section_ == Section::collection) {
            out_.collections.push_back({std::string(words[1].text), {}, {}});
        } else if (section_ == Section::stage) {
            stage_.reset();
        } else if (section_ == Section::detector) {
            out_.detector = Detector{};
        }
    }

    void finish_section() {
        if (section_ == Section::particle && !keys_.contains("type")) {
            fail(section_field_, "particle needs a type");
        }
        if (section_ == Section::collection && !keys_.contains("members")) {
            fail(section_field_, "collection needs members");
        }
        if (section_ == Section::stage) {
            if (!stage_) {
                fail(section_field_, "stage needs a kind");
            }
            try {
                std::visit([](const auto &s) { s.validate(); }, *stage_);
            } catch (const ValidationError &e) {
                throw ValidationError("stage at line " + std::to_string(section_field_.line) + ": " + e.what());
            }
            out_.stages.push_back(*stage_);
        }
        section_ = Section::none;
    }

    void handle_key(const Field &key, const Field &value) {
        const std::string_view k = key.text;
        switch (section_) {
            case Section::scenario:
                if (k == "name") {
                    out_.name = std::string(value.text);
                } else if (k == "builder") {
                    out_.builder = std::string(value.text);
                    builder_field_ = value;
                } else if (k == "measure") {
                    for (const Field &f : split_ws(value)) {
                        out_.measure.emplace_back(f.text);
                    }
                } else {
                    raw_params_.emplace_back(key, value);
                }
                return;
            case Section::particle: {
                ParticleDecl &p = out_.particles.back();
                if (k == "type") {
                    try {
                        p.type = particle_type_from_string(value.text);
                    } catch (const Error &e) {
                        fail(value, e.what());
                    }
                } else if (k == "row") {
                    p.rows.push_back(parse_row(value));
                    if (p.rows.back().states.size() != 1) {
                        fail(value, "particle rows describe one particle");
                    }
                } else {
                    unknown(key);
                }
                return;
            }
            case Section::collection: {
                CollectionDecl &c = out_.collections.back();
                if (k == "members") {
                    for (const Field &f : split_ws(value)) {
                        c.members.emplace_back(f.text);
                    }
                } else if (k == "row") {
                    c.rows.push_back(parse_row(value));
                } else {
                    unknown(key);
                }
                return;
            }
            case Section::stage:
                stage_key(key, value);
                return;
            case Section::detector:
                if (k == "axis") {
                    out_.detector->axis = parse_unit(value);
                } else if (k == "bin") {
                    const auto parts = split_ws(value);
                    if (parts.size() != 3) {
                        fail(value, "bin is 'label lo hi'");
                    }
                    out_.detector->bins.push_back(
                        {std::string(parts[0].text), parse_number(parts[1], true), parse_number(parts[2], true)});
                } else {
                    unknown(key);
                }
                return;
            case Section::engine:
                engine_key(key, value);
                return;
            case Section::constants:
                if (k == "alpha") {
                    out_.constants.alpha = parse_real(value);
                } else if (k == "electron_mass") {
                    out_.constants.electron_mass = parse_real(value);
                } else if (k == "muon_mass") {
                    out_.constants.muon_mass = parse_real(value);
                } else if (k == "tauon_mass") {
                    out_.constants.tauon_mass = parse_real(value);
                } else {
                    unknown(key);
                }
                return;
            case Section::harness:
                if (k == "trials") {
                    out_.harness.trials = parse_integer<std::uint64_t>(value);
                } else if (k == "seed") {
                    out_.harness.seed = parse_integer<std::uint64_t>(value);
                } else if (k == "threads") {
                    out_.harness.threads = parse_integer<unsigned>(value);
                } else {
                    unknown(key);
                }
                return;
            case Section::tests:
                tests_key(key, value);
                return;
            case Section::sweep:
                if (k == "parameter") {
                    sweep().parameter = std::string(value.text);
                } else if (k == "values") {
                    for (const Field &f : split_ws(value)) {
                        sweep().values.push_back(parse_real(f));
                    }
                } else {
                    unknown(key);
                }
                return;
            case Section::none:
                break;
        }
    }

    void stage_key(const Field &key, const Field &value) {
        const std::string_view k = key.text;
        if (k == "kind") {
            if (value.text == "field") {
                stage_ = FieldObject{};
            } else if (value.text == "screen") {
                stage_ = ScreenObject{};
            } else {
                fail(value, "stage kind must be field or screen");
            }
            return;
        }
        if (!stage_) {
            fail(key, "stage kind must be given first");
        }
        if (auto *field = std::get_if<FieldObject>(&*stage_)) {
            if (k == "axis") {
                field->axis = parse_unit(value);
            } else if (k == "strength") {
                field->gradient_strength = parse_real(value);
            } else if (k == "match_probability") {
                field->match_probability = parse_real(value);
            } else if (k == "peak_threshold") {
                field->peak_threshold = parse_real(value);
            } else {
                unknown(key);
            }
            return;
        }
        auto &screen = std::get<ScreenObject>(*stage_);
        if (k == "axis") {
            screen.axis = parse_unit(value);
        } else if (k == "lever") {
            screen.lever = parse_real(value);
        } else {
            unknown(key);
        }
    }

    void engine_key(const Field &key, const Field &value) {
        EngineSettings &e = out_.engine;
        const std::string_view k = key.text;
        if (k == "cos_bins") {
            e.cos_bins = parse_int(value);
        } else if (k == "phi_bins") {
            e.phi_bins = parse_int(value);
        } else if (k == "cutoff") {
            e.cutoff = parse_real(value);
        } else if (k == "nodes") {
            e.nodes = parse_int(value);
        } else if (k == "channel") {
            if (value.text == "dynamic") {
                e.channel.reset();
            } else {
                try {
                    e.channel = channel_from_string(value.text);
                } catch (const Error &err) {
                    fail(value, err.what());
                }
            }
        } else if (k == "spin_axis") {
            e.spin_axis = parse_unit(value);
        } else if (k == "tolerance") {
            e.tolerance = parse_real(value);
        } else if (k == "uniform_fallback") {
            e.uniform_fallback = parse_bool(value);
        } else {
            unknown(key);
        }
    }

    void tests_key(const Field &key, const Field &value) {
        TestSettings &t = out_.tests;
        const std::string_view k = key.text;
        if (k == "alpha") {
            t.alpha = parse_real(value);
        } else if (k == "chi_square") {
            for (const Field &f : split_ws(value)) {
                const std::size_t colon = f.text.rfind(':');
                if (colon == std::string_view::npos || colon == 0) {
                    fail(f, "expected label:probability");
                }
                t.chi_square.push_back({std::string(f.text.substr(0, colon)), parse_real(sub(f, colon + 1))});
            }
        } else if (k == "monotone") {
            t.monotone = parse_bool(value);
        } else if (k == "correlation") {
            t.correlation = parse_real(value);
        } else if (k == "correlation_tolerance") {
            t.correlation_tolerance = parse_real(value);
        } else {
            unknown(key);
        }
    }

    SweepSettings &sweep() {
        if (!out_.sweep) {
            out_.sweep = SweepSettings{};
        }
        return *out_.sweep;
    }

    [[noreturn]] void unknown(const Field &key) {
        fail(key, "unknown key '" + std::string(key.text) + "'");
    }

    ScenarioFile finish() {
        if (!builder_field_.text.empty() && !parameter_tables().contains(out_.builder)) {
            throw UnknownScenario("unknown scenario builder '" + out_.builder + "'");
        }
        for (const auto &[key, value] : raw_params_) {
            const ParameterSpec *spec = find_parameter(out_.builder, key.text);
            if (spec == nullptr) {
                fail(key, "builder '" + out_.builder + "' has no parameter '" + std::string(key.text) + "'");
            }
            out_.params[spec->name] = parse_param(value, spec->default_value);
        }
        validate_scenario(out_);
        return std::move(out_);
    }

  public:
    static void validate_scenario(const ScenarioFile &s);

  private:
    ScenarioFile out_;
    Section section_ = Section::none;
    Field section_field_;
    Field builder_field_;
    std::set<std::string> keys_;
    std::set<std::string> sections_seen_;
    std::optional<Stage> stage_;
    std::vector<std::pair<Field, Field>> raw_params_;
};

void require_nonzero(const std::vector<PathRow> &rows, const std::string &what) {
    double norm = 0.0;
    for (const PathRow &r : rows) {
        norm += std::norm(r.amplitude);
    }
    if (!(norm > 0.0)) {
        throw ValidationError(what + ": all amplitudes zero");
    }
}

void Parser::validate_scenario(const ScenarioFile &s) {
    if (s.name.empty()) {
        throw ValidationError("scenario needs a name");
    }
    builder_parameters(s.builder);
    const bool custom = s.builder == "custom";
    if (!custom && (!s.particles.empty() || !s.collections.empty() || !s.stages.empty() || s.detector ||
                    !s.measure.empty())) {
        throw ValidationError("builder '" + s.builder + "' takes no particle, stage or detector declarations");
    }

    std::map<std::string, int> memberships;
    for (const ParticleDecl &p : s.particles) {
        if (!memberships.emplace(p.name, 0).second) {
            throw ValidationError("particle '" + p.name + "' declared twice");
        }
    }
    std::set<std::string> collection_names;
    for (const CollectionDecl &c : s.collections) {
        if (!collection_names.insert(c.name).second) {
            throw ValidationError("collection '" + c.name + "' declared twice");
        }
        if (c.members.empty() || c.rows.empty()) {
            throw ValidationError("collection '" + c.name + "' needs members and rows");
        }
        for (const std::string &m : c.members) {
            auto it = memberships.find(m);
            if (it == memberships.end()) {
                throw ValidationError("collection '" + c.name + "' names unknown particle '" + m + "'");
            }
            if (++it->second > 1) {
                throw ValidationError("particle '" + m + "' is a member of two collections");
            }
        }
        for (const PathRow &r : c.rows) {
            if (r.states.size() != c.members.size()) {
                throw ValidationError("collection '" + c.name + "' row does not match its member count");
            }
        }
        require_nonzero(c.rows, "collection '" + c.name + "'");
    }
    for (const ParticleDecl &p : s.particles) {
        const bool member = memberships.at(p.name) > 0;
        if (member && !p.rows.empty()) {
            throw ValidationError("particle '" + p.name + "' has rows and is a collection member");
        }
        if (!member) {
            if (p.rows.empty()) {
                throw ValidationError("particle '" + p.name + "' has no rows");
            }
            require_nonzero(p.rows, "particle '" + p.name + "'");
        }
    }
    for (const std::string &m : s.measure) {
        if (!memberships.contains(m)) {
            throw ValidationError("measure names unknown particle '" + m + "'");
        }
    }
    if (custom) {
        if (s.measure.empty() || s.stages.empty() || !s.detector) {
            throw ValidationError("custom scenarios need measure, at least one stage and a detector");
        }
    }
    if (s.detector) {
        s.detector->validate();
    }
    const Constants &k = s.constants;
    if (!(k.alpha >= 0.0) || !(k.electron_mass > 0.0) || !(k.muon_mass > 0.0) || !(k.tauon_mass > 0.0)) {
        throw ValidationError("constants: alpha must be >= 0 and masses > 0");
    }
    interaction_config(s).validate();
    if (s.harness.trials == 0) {
        throw ValidationError("harness trials must be positive");
    }
    if (s.harness.threads == 0) {
        throw ValidationError("harness threads must be positive");
    }
    if (std::find(kChiSquareAlphas.begin(), kChiSquareAlphas.end(), s.tests.alpha) == kChiSquareAlphas.end()) {
        throw ValidationError("tests alpha must be one of 0.1, 0.05, 0.025, 0.01, 0.005, 0.001");
    }
    if (!s.tests.chi_square.empty()) {
        double sum = 0.0;
        for (const ExpectedBin &b : s.tests.chi_square) {
            if (!(b.probability >= 0.0)) {
                throw ValidationError("chi_square probabilities must be nonnegative");
            }
            sum += b.probability;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw ValidationError("chi_square probabilities must sum to 1");
        }
    }
    if (s.tests.correlation && std::abs(*s.tests.correlation) > 1.0) {
        throw ValidationError("expected correlation must lie in [-1, 1]");
    }
    if (!(s.tests.correlation_tolerance >= 0.0)) {
        throw ValidationError("correlation tolerance must be nonnegative");
    }
    if (s.sweep) {
        const ParameterSpec *spec = find_parameter(s.builder, s.sweep->parameter);
        if (spec == nullptr || std::holds_alternative<Vec3>(spec->default_value)) {
            throw ValidationError("sweep parameter '" + s.sweep->parameter + "' is not a numeric builder parameter");
        }
        if (s.sweep->values.size() < 2) {
            throw ValidationError("sweep needs at least two values");
        }
    }
}

// ---------------------------------------------------------------- experiments

int sign_of_bin(std::size_t bin) {
    return bin == 1 ? 1 : -1;
}

std::vector<std::pair<PathState, Amplitude>> paths_of(const std::vector<PathRow> &rows) {
    std::vector<std::pair<PathState, Amplitude>> out;
    for (const PathRow &r : rows) {
        out.emplace_back(r.states.front(), r.amplitude);
    }
    return out;
}

std::vector<std::string> detector_labels(const Detector &d) {
    std::vector<std::string> out;
    for (const DetectorBin &b : d.bins) {
        out.push_back(b.label);
    }
    return out;
}

std::vector<std::string> pair_labels(const std::vector<std::string> &a, const std::vector<std::string> &b) {
    std::vector<std::string> out;
    for (const auto &x : a) {
        for (const auto &y : b) {
            out.push_back(x + "," + y);
        }
    }
    return out;
}

Experiment single_particle_experiment(const std::string &name, SingleParticleSetup setup, Constants constants,
                                      const InteractionConfig &config) {
    setup.apparatus.config = config;
    setup.apparatus.validate();
    Experiment e;
    e.name = name;
    e.declared_labels = detector_labels(setup.apparatus.detector);
    e.trial = [setup = std::move(setup), constants](std::uint64_t seed) {
        EntanglementRegistry registry(constants);
        Rng rng(seed);
        const ParticleId id = registry.add_particle(setup.type, setup.paths);
        TrialOutcome out;
        try {
            const MeasurementResult r = run_measurement(setup.apparatus, id, registry, rng);
            out.label = r.record.detector_label;
            out.records.push_back(r.record);
        } catch (const DetectorMiss &) {
            out.accepted = false;
        }
        return out;
    };
    return e;
}

/// Lepton pair collision at the origin along z followed by a readout of the
/// exit table; the outcome is the channel and the exit fermion's cos theta bin.
Experiment collision_experiment(const std::string &name, ParticleType projectile, double projectile_momentum,
                                ParticleType target, double target_momentum, int bins, Constants constants,
                                const InteractionConfig &config, std::vector<Channel> channels) {
    if (bins < 1) {
        throw ValidationError("bins must be at least 1");
    }
    Experiment e;
    e.name = name;
    for (Channel c : channels) {
        for (int b = 0; b < bins; ++b) {
            e.declared_labels.push_back(std::string(to_string(c)) + "/" + std::to_string(b));
        }
    }
    e.trial = [=](std::uint64_t seed) {
        EntanglementRegistry registry(constants);
        Rng rng(seed);
        const Spin up{1, Vec3::UnitZ()};
        const ParticleId a = registry.add_particle(
            projectile, {{PathState({Position{}, Momentum{Vec3(0, 0, projectile_momentum)}, up}), 1.0}});
        const ParticleId b = registry.add_particle(
            target, {{PathState({Position{}, Momentum{Vec3(0, 0, target_momentum)}, up}), 1.0}});
        const InteractionResult r = run_interaction(a, b, config, registry, rng);
        const PwCollection &exit = registry.collection(r.exit_collection);
        const std::size_t row = sample_index(born_probabilities(exit), rng.uniform(Decision::readout));
        registry.collapse(exit.id, row);
        const PathState fermion = registry.collection_of(r.exit_particles.front()).rows.front().states.front();
        const Vec3 p = *fermion.momentum();
        const double cos_theta = p.z() / p.norm();
        const int bin = std::clamp(static_cast<int>(std::floor((cos_theta + 1.0) / 2.0 * bins)), 0, bins - 1);

        TrialOutcome out;
        out.label = std::string(to_string(r.channel)) + "/" + std::to_string(bin);
        MeasurementRecord record;
        record.stages.push_back({r.fluctuation.position, r.entry_states.front(), r.channel});
        record.detector_bin = static_cast<std::size_t>(bin);
        record.detector_label = out.label;
        record.final_state = fermion;
        record.seed = seed;
        record.draws = rng.trace();
        out.records.push_back(std::move(record));
        return out;
    };
    return e;
}

Experiment custom_experiment(const ScenarioFile &s, const InteractionConfig &config) {
    Apparatus apparatus;
    apparatus.stages = s.stages;
    apparatus.detector = *s.detector;
    apparatus.config = config;
    apparatus.validate();
    Experiment e;
    e.name = s.name;
    const auto labels = detector_labels(apparatus.detector);
    if (s.measure.size() == 1) {
        e.declared_labels = labels;
    } else if (s.measure.size() == 2) {
        e.declared_labels = pair_labels(labels, labels);
    }
    const bool signed_pairs = s.measure.size() == 2 && labels.size() == 2;
    e.trial = [s, apparatus, signed_pairs](std::uint64_t seed) {
        EntanglementRegistry registry(s.constants);
        Rng rng(seed);
        std::map<std::string, ParticleId> ids;
        std::map<std::string, ParticleType> types;
        for (const ParticleDecl &p : s.particles) {
            types[p.name] = p.type;
            if (!p.rows.empty()) {
                ids[p.name] = registry.add_particle(p.type, paths_of(p.rows));
            }
        }
        for (const CollectionDecl &c : s.collections) {
            std::vector<ParticleType> member_types;
            for (const std::string &m : c.members) {
                member_types.push_back(types.at(m));
            }
            const auto members = registry.add_entangled(member_types, c.rows);
            for (std::size_t i = 0; i < members.size(); ++i) {
                ids[c.members[i]] = members[i];
            }
        }
        TrialOutcome out;
        std::vector<std::size_t> bins;
        try {
            for (const std::string &m : s.measure) {
                const MeasurementResult r = run_measurement(apparatus, ids.at(m), registry, rng);
                out.label += (out.label.empty() ? "" : ",") + r.record.detector_label;
                bins.push_back(r.record.detector_bin);
                out.records.push_back(r.record);
            }
        } catch (const DetectorMiss &) {
            return TrialOutcome{false, {}, std::nullopt, {}};
        }
        if (signed_pairs) {
            out.signs = std::pair{sign_of_bin(bins[0]), sign_of_bin(bins[1])};
        }
        return out;
    };
    return e;
}

Experiment epr_experiment(const ScenarioFile &s, const InteractionConfig &config) {
    const Vec3 axis = vec_param(s, "axis");
    const double half = real_param(s, "separation") / 2.0;
    EprSetup setup = epr_scenario(anticorrelated_table(axis, Vec3(-half, 0, 0), Vec3(half, 0, 0)), axis, axis);
    setup.a.config = config;
    setup.b.config = config;
    const bool b_first = int_param(s, "b_first") != 0;
    Experiment e;
    e.name = s.name;
    const auto labels = detector_labels(setup.a.detector);
    e.declared_labels = pair_labels(labels, labels);
    e.trial = [setup, b_first, constants = s.constants](std::uint64_t seed) {
        EntanglementRegistry registry(constants);
        Rng rng(seed);
        const EprOutcome o = run_epr(setup, b_first, registry, rng);
        TrialOutcome out;
        out.label = o.a.detector_label + "," + o.b.detector_label;
        out.signs = std::pair{sign_of_bin(o.a.detector_bin), sign_of_bin(o.b.detector_bin)};
        out.records = b_first ? std::vector{o.b, o.a} : std::vector{o.a, o.b};
        return out;
    };
    return e;
}

double momentum_for_energy(double energy, double mass, const char *what) {
    if (!(energy > mass)) {
        throw ValidationError(std::string(what) + " energy must exceed the particle mass");
    }
    return std::sqrt(energy * energy - mass * mass);
}

}  // namespace

const std::vector<ParameterSpec> &builder_parameters(std::string_view builder) {
    const auto it = parameter_tables().find(builder);
    if (it == parameter_tables().end()) {
        throw UnknownScenario("unknown scenario builder '" + std::string(builder) + "'");
    }
    return it->second;
}

ParamValue parameter(const ScenarioFile &s, const std::string &name) {
    const ParameterSpec *spec = find_parameter(s.builder, name);
    if (spec == nullptr) {
        throw ValidationError("builder '" + s.builder + "' has no parameter '" + name + "'");
    }
    const auto it = s.params.find(name);
    return it == s.params.end() ? spec->default_value : it->second;
}

ScenarioFile parse_scenario(std::string_view text) {
    return Parser().parse(text);
}

std::string render_scenario(const ScenarioFile &s) {
    std::ostringstream out;
    out << "[scenario]\nname = " << s.name << "\nbuilder = " << s.builder << "\n";
    if (!s.measure.empty()) {
        out << "measure =";
        for (const auto &m : s.measure) {
            out << " " << m;
        }
        out << "\n";
    }
    for (const auto &[key, value] : s.params) {
        out << key << " = " << render_param(value) << "\n";
    }
    for (const ParticleDecl &p : s.particles) {
        out << "\n[particle " << p.name << "]\ntype = " << to_string(p.type) << "\n";
        for (const PathRow &r : p.rows) {
            out << "row = " << render_row(r) << "\n";
        }
    }
    for (const CollectionDecl &c : s.collections) {
        out << "\n[collection " << c.name << "]\nmembers =";
        for (const auto &m : c.members) {
            out << " " << m;
        }
        out << "\n";
        for (const PathRow &r : c.rows) {
            out << "row = " << render_row(r) << "\n";
        }
    }
    for (const Stage &stage : s.stages) {
        if (const auto *f = std::get_if<FieldObject>(&stage)) {
            out << "\n[stage]\nkind = field\naxis = " << vec(f->axis) << "\nstrength = " << num(f->gradient_strength)
                << "\nmatch_probability = " << num(f->match_probability)
                << "\npeak_threshold = " << num(f->peak_threshold) << "\n";
        } else {
            const auto &sc = std::get<ScreenObject>(stage);
            out << "\n[stage]\nkind = screen\naxis = " << vec(sc.axis) << "\nlever = " << num(sc.lever) << "\n";
        }
    }
    if (s.detector) {
        out << "\n[detector]\naxis = " << vec(s.detector->axis) << "\n";
        for (const DetectorBin &b : s.detector->bins) {
            out << "bin = " << b.label << " " << num(b.lo) << " " << num(b.hi) << "\n";
        }
    }
    const EngineSettings &e = s.engine;
    out << "\n[engine]\ncos_bins = " << e.cos_bins << "\nphi_bins = " << e.phi_bins << "\ncutoff = " << num(e.cutoff)
        << "\nnodes = " << e.nodes << "\nchannel = " << (e.channel ? to_string(*e.channel) : "dynamic")
        << "\nspin_axis = " << vec(e.spin_axis) << "\ntolerance = " << num(e.tolerance)
        << "\nuniform_fallback = " << (e.uniform_fallback ? "true" : "false") << "\n";
    const Constants &k = s.constants;
    out << "\n[constants]\nalpha = " << num(k.alpha) << "\nelectron_mass = " << num(k.electron_mass)
        << "\nmuon_mass = " << num(k.muon_mass) << "\ntauon_mass = " << num(k.tauon_mass) << "\n";
    out << "\n[harness]\ntrials = " << s.harness.trials << "\n";
    if (s.harness.seed) {
        out << "seed = " << *s.harness.seed << "\n";
    }
    out << "threads = " << s.harness.threads << "\n";
    const TestSettings &t = s.tests;
    out << "\n[tests]\nalpha = " << num(t.alpha) << "\n";
    if (!t.chi_square.empty()) {
        out << "chi_square =";
        for (const ExpectedBin &b : t.chi_square) {
            out << " " << b.label << ":" << num(b.probability);
        }
        out << "\n";
    }
    out << "monotone = " << (t.monotone ? "true" : "false") << "\n";
    if (t.correlation) {
        out << "correlation = " << num(*t.correlation) << "\n";
    }
    out << "correlation_tolerance = " << num(t.correlation_tolerance) << "\n";
    if (s.sweep) {
        out << "\n[sweep]\nparameter = " << s.sweep->parameter << "\nvalues =";
        for (double v : s.sweep->values) {
            out << " " << num(v);
        }
        out << "\n";
    }
    return out.str();
}

ScenarioFile load_scenario(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot read scenario file '" + path.string() + "'");
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_scenario(text.str());
}

ScenarioFile with_parameter(const ScenarioFile &s, const std::string &name, double value) {
    const ParameterSpec *spec = find_parameter(s.builder, name);
    if (spec == nullptr) {
        throw ValidationError("builder '" + s.builder + "' has no parameter '" + name + "'");
    }
    ScenarioFile out = s;
    if (std::holds_alternative<double>(spec->default_value)) {
        out.params[name] = value;
    } else if (std::holds_alternative<std::int64_t>(spec->default_value)) {
        if (value != std::floor(value) || std::abs(value) > 9.0e15) {
            throw ValidationError("parameter '" + name + "' takes integer values");
        }
        out.params[name] = static_cast<std::int64_t>(value);
    } else {
        throw ValidationError("vector parameter '" + name + "' cannot be swept");
    }
    return out;
}

InteractionConfig interaction_config(const ScenarioFile &s) {
    InteractionConfig c;
    c.grid.cos_bins = s.engine.cos_bins;
    c.grid.phi_bins = s.engine.phi_bins;
    c.grid.spin_axis = s.engine.spin_axis;
    c.grid.tolerance = s.engine.tolerance;
    c.couplings = CouplingConstants::from(s.constants);
    c.quadrature = {s.engine.cutoff, s.engine.nodes};
    c.channel_policy = s.engine.channel ? ChannelPolicy{false, *s.engine.channel} : ChannelPolicy{true, {}};
    c.uniform_fallback = s.engine.uniform_fallback;
    return c;
}

Experiment compile_experiment(const ScenarioFile &s) {
    builder_parameters(s.builder);
    const InteractionConfig config = interaction_config(s);
    if (s.builder == "custom") {
        return custom_experiment(s, config);
    }
    if (s.builder == "stern_gerlach") {
        const std::int64_t spin = int_param(s, "input_spin");
        if (spin != 1 && spin != -1) {
            throw ValidationError("input_spin must be +1 or -1");
        }
        const Vec3 input_axis = vec_param(s, "input_axis");
        return single_particle_experiment(
            s.name,
            stern_gerlach_scenario({static_cast<int>(spin), input_axis}, vec_param(s, "field_axis"),
                                   real_param(s, "strength")),
            s.constants, config);
    }
    if (s.builder == "repeated_field") {
        return single_particle_experiment(
            s.name,
            repeated_field_scenario(static_cast<int>(int_param(s, "repetition_count")),
                                    real_param(s, "match_probability"), vec_param(s, "axis"),
                                    real_param(s, "strength")),
            s.constants, config);
    }
    if (s.builder == "epr") {
        return epr_experiment(s, config);
    }
    if (s.builder == "bhabha") {
        const double m = s.constants.electron_mass;
        const double energy = real_param(s, "beam_energy");
        const double ratio = real_param(s, "energy_ratio");
        return collision_experiment(s.name, ParticleType::electron, momentum_for_energy(energy, m, "electron"),
                                    ParticleType::positron, -momentum_for_energy(ratio * energy, m, "positron"),
                                    static_cast<int>(int_param(s, "bins")), s.constants, config,
                                    {kLeptonPairChannels.begin(), kLeptonPairChannels.end()});
    }
    if (s.builder == "scatter") {
        Constants constants = s.constants;
        const double ratio = real_param(s, "mass_ratio");
        if (!(ratio > 0.0)) {
            throw ValidationError("mass_ratio must be positive");
        }
        constants.muon_mass = ratio * constants.electron_mass;
        InteractionConfig elastic = config;
        elastic.couplings = CouplingConstants::from(constants);
        return collision_experiment(s.name, ParticleType::electron, real_param(s, "beam_momentum"),
                                    ParticleType::antimuon, 0.0, static_cast<int>(int_param(s, "bins")), constants,
                                    elastic, {Channel::elastic});
    }
    throw UnknownScenario("unknown scenario builder '" + s.builder + "'");
}

}  // namespace collapse
