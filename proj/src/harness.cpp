#include "collapse/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

// Rows: df 1..32. Columns follow kChiSquareAlphas.
constexpr double kChiSquareTable[32][6] = {
    {2.705543, 3.841459, 5.023886, 6.634897, 7.879439, 10.827566},
    {4.605170, 5.991465, 7.377759, 9.210340, 10.596635, 13.815511},
    {6.251389, 7.814728, 9.348404, 11.344867, 12.838156, 16.266236},
    {7.779440, 9.487729, 11.143287, 13.276704, 14.860259, 18.466827},
    {9.236357, 11.070498, 12.832502, 15.086272, 16.749602, 20.515006},
    {10.644641, 12.591587, 14.449375, 16.811894, 18.547584, 22.457744},
    {12.017037, 14.067140, 16.012764, 18.475307, 20.277740, 24.321886},
    {13.361566, 15.507313, 17.534546, 20.090235, 21.954955, 26.124482},
    {14.683657, 16.918978, 19.022768, 21.665994, 23.589351, 27.877165},
    {15.987179, 18.307038, 20.483177, 23.209251, 25.188180, 29.588298},
    {17.275009, 19.675138, 21.920049, 24.724970, 26.756849, 31.264134},
    {18.549348, 21.026070, 23.336664, 26.216967, 28.299519, 32.909490},
    {19.811929, 22.362032, 24.735605, 27.688250, 29.819471, 34.528179},
    {21.064144, 23.684791, 26.118948, 29.141238, 31.319350, 36.123274},
    {22.307130, 24.995790, 27.488393, 30.577914, 32.801321, 37.697298},
    {23.541829, 26.296228, 28.845351, 31.999927, 34.267187, 39.252355},
    {24.769035, 27.587112, 30.191009, 33.408664, 35.718466, 40.790217},
    {25.989423, 28.869299, 31.526378, 34.805306, 37.156451, 42.312396},
    {27.203571, 30.143527, 32.852327, 36.190869, 38.582257, 43.820196},
    {28.411981, 31.410433, 34.169607, 37.566235, 39.996846, 45.314747},
    {29.615089, 32.670573, 35.478876, 38.932173, 41.401065, 46.797038},
    {30.813282, 33.924438, 36.780712, 40.289360, 42.795655, 48.267942},
    {32.006900, 35.172462, 38.075627, 41.638398, 44.181275, 49.728232},
    {33.196244, 36.415029, 39.364077, 42.979820, 45.558512, 51.178598},
    {34.381587, 37.652484, 40.646469, 44.314105, 46.927890, 52.619656},
    {35.563171, 38.885139, 41.923170, 45.641683, 48.289882, 54.051962},
    {36.741217, 40.113272, 43.194511, 46.962942, 49.644915, 55.476020},
    {37.915923, 41.337138, 44.460792, 48.278236, 50.993376, 56.892285},
    {39.087470, 42.556968, 45.722286, 49.587884, 52.335618, 58.301173},
    {40.256024, 43.772972, 46.979242, 50.892181, 53.671962, 59.703064},
    {41.421736, 44.985343, 48.231890, 52.191395, 55.002704, 61.098306},
    {42.584745, 46.194260, 49.480438, 53.485772, 56.328115, 62.487219},
};

}  // namespace

OutcomeHistogram::OutcomeHistogram(std::vector<std::string> declared_labels)
    : declared_count_(declared_labels.size()),
      labels_(std::move(declared_labels)),
      counts_(labels_.size(), 0) {
    std::vector<std::string> sorted = labels_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ValidationError("duplicate outcome label");
    }
}

void OutcomeHistogram::add(std::string_view label, std::uint64_t count) {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) {
        const auto extras_begin = labels_.begin() + static_cast<std::ptrdiff_t>(declared_count_);
        it = std::lower_bound(extras_begin, labels_.end(), label);
        const auto offset = it - labels_.begin();
        it = labels_.insert(it, std::string(label));
        counts_.insert(counts_.begin() + offset, 0);
    }
    counts_[static_cast<std::size_t>(it - labels_.begin())] += count;
    total_ += count;
}

void OutcomeHistogram::merge(const OutcomeHistogram &other) {
    for (std::size_t i = 0; i < other.labels_.size(); ++i) {
        add(other.labels_[i], other.counts_[i]);
    }
    rejected_ += other.rejected_;
}

std::uint64_t OutcomeHistogram::count(std::string_view label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    return it == labels_.end() ? 0 : counts_[static_cast<std::size_t>(it - labels_.begin())];
}

std::vector<std::pair<std::string, std::uint64_t>> OutcomeHistogram::bins() const {
    std::vector<std::pair<std::string, std::uint64_t>> out;
    out.reserve(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        out.emplace_back(labels_[i], counts_[i]);
    }
    return out;
}

TrialSummary run_trials(const Experiment &experiment, std::uint64_t n, std::uint64_t master_seed,
                        unsigned threads) {
    if (n == 0) {
        throw ValidationError("trial count must be positive");
    }
    threads = std::clamp<unsigned>(threads, 1, static_cast<unsigned>(std::min<std::uint64_t>(n, 256)));
    struct Chunk {
        OutcomeHistogram histogram;
        std::vector<std::pair<int, int>> signs;
        std::exception_ptr error;
    };
    std::vector<Chunk> chunks(threads, Chunk{OutcomeHistogram(experiment.declared_labels), {}, nullptr});
    auto work = [&](unsigned t) {
        const std::uint64_t begin = n * t / threads;
        const std::uint64_t end = n * (t + 1) / threads;
        try {
            for (std::uint64_t i = begin; i < end; ++i) {
                const TrialOutcome o = experiment.trial(derive_seed(master_seed, i));
                if (!o.accepted) {
                    chunks[t].histogram.add_rejected();
                    continue;
                }
                chunks[t].histogram.add(o.label);
                if (o.signs) {
                    chunks[t].signs.push_back(*o.signs);
                }
            }
        } catch (...) {
            chunks[t].error = std::current_exception();
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back(work, t);
        }
    }
    TrialSummary summary{OutcomeHistogram(experiment.declared_labels), {}};
    for (Chunk &c : chunks) {
        if (c.error) {
            std::rethrow_exception(c.error);
        }
        summary.histogram.merge(c.histogram);
        summary.signs.insert(summary.signs.end(), c.signs.begin(), c.signs.end());
    }
    return summary;
}

double chi_square_critical(int degrees_of_freedom, double alpha) {
    if (degrees_of_freedom < 1 || degrees_of_freedom > 32) {
        throw ValidationError("chi-square table covers 1 to 32 degrees of freedom, got " +
                              std::to_string(degrees_of_freedom));
    }
    for (std::size_t i = 0; i < kChiSquareAlphas.size(); ++i) {
        if (kChiSquareAlphas[i] == alpha) {
            return kChiSquareTable[degrees_of_freedom - 1][i];
        }
    }
    throw ValidationError("no chi-square critical values for alpha = " + std::to_string(alpha));
}

ChiSquareResult chi_square_test(const OutcomeHistogram &observed, std::span<const ExpectedBin> expected,
                                double alpha) {
    double sum = 0.0;
    for (const ExpectedBin &e : expected) {
        if (!(e.probability >= 0.0)) {
            throw ValidationError("expected probabilities must be nonnegative");
        }
        sum += e.probability;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("expected probabilities must sum to 1");
    }
    std::size_t bins = 0;
    for (const ExpectedBin &e : expected) {
        bins += e.probability > 0.0 ? 1 : 0;
    }
    const auto n = static_cast<double>(observed.total());
    if (observed.total() < 5 * bins || bins == 0) {
        throw InsufficientCounts("chi-square needs at least 5 counts per bin, got " +
                                 std::to_string(observed.total()) + " for " + std::to_string(bins) + " bins");
    }
    ChiSquareResult r;
    r.degrees_of_freedom = static_cast<int>(bins) - 1;
    for (const ExpectedBin &e : expected) {
        if (e.probability > 0.0) {
            const double expected_count = n * e.probability;
            const double d = static_cast<double>(observed.count(e.label)) - expected_count;
            r.statistic += d * d / expected_count;
        } else if (observed.count(e.label) > 0) {
            r.statistic = std::numeric_limits<double>::infinity();
        }
    }
    for (const auto &[label, count] : observed.bins()) {
        const bool declared = std::any_of(expected.begin(), expected.end(),
                                          [&](const ExpectedBin &e) { return e.label == label; });
        if (!declared && count > 0) {
            r.statistic = std::numeric_limits<double>::infinity();
        }
    }
    if (r.degrees_of_freedom == 0) {
        r.critical = 0.0;
        r.passed = r.statistic == 0.0;
        return r;
    }
    r.critical = chi_square_critical(r.degrees_of_freedom, alpha);
    r.passed = r.statistic <= r.critical;
    return r;
}

double peak_metric(const OutcomeHistogram &h) {
    if (h.total() == 0) {
        throw InsufficientCounts("peak metric of an empty histogram");
    }
    std::uint64_t best = 0;
    for (const auto &[label, count] : h.bins()) {
        best = std::max(best, count);
    }
    return static_cast<double>(best) / static_cast<double>(h.total());
}

double peak_standard_error(const OutcomeHistogram &h) {
    const double p = peak_metric(h);
    return std::sqrt(p * (1.0 - p) / static_cast<double>(h.total()));
}

bool nondecreasing_within_error(std::span<const double> metrics, std::span<const double> standard_errors) {
    for (std::size_t i = 1; i < metrics.size(); ++i) {
        const double slack = std::max(standard_errors[i - 1], standard_errors[i]);
        if (metrics[i] < metrics[i - 1] - slack) {
            return false;
        }
    }
    return true;
}

PeakReport asymmetry_sweep(const std::function<Experiment(double)> &family, std::string parameter,
                           std::span<const double> values, std::uint64_t n, std::uint64_t master_seed,
                           unsigned threads) {
    if (values.size() < 2) {
        throw ValidationError("a sweep needs at least two parameter values");
    }
    PeakReport report;
    report.parameter = std::move(parameter);
    for (double v : values) {
        const TrialSummary s = run_trials(family(v), n, master_seed, threads);
        report.values.push_back(v);
        report.metrics.push_back(peak_metric(s.histogram));
        report.standard_errors.push_back(peak_standard_error(s.histogram));
        report.accepted.push_back(s.histogram.total());
        report.rejected.push_back(s.histogram.rejected());
    }
    report.monotone = nondecreasing_within_error(report.metrics, report.standard_errors);
    return report;
}

double correlation(std::span<const std::pair<int, int>> pairs) {
    if (pairs.empty()) {
        throw ValidationError("correlation of an empty sample");
    }
    std::int64_t sx = 0, sy = 0, sxy = 0;
    for (const auto &[x, y] : pairs) {
        if ((x != 1 && x != -1) || (y != 1 && y != -1)) {
            throw ValidationError("correlation expects +-1 outcomes");
        }
        sx += x;
        sy += y;
        sxy += x * y;
    }
    const auto n = static_cast<double>(pairs.size());
    // x^2 = y^2 = 1, so sum x^2 = n.
    const double var_x = n * n - static_cast<double>(sx) * static_cast<double>(sx);
    const double var_y = n * n - static_cast<double>(sy) * static_cast<double>(sy);
    if (var_x == 0.0 || var_y == 0.0) {
        throw ValidationError("correlation undefined: one side is constant");
    }
    const double cov = n * static_cast<double>(sxy) - static_cast<double>(sx) * static_cast<double>(sy);
    return cov / std::sqrt(var_x * var_y);
}

}  // namespace collapse
