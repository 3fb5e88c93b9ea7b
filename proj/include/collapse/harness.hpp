#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "collapse/pipeline.hpp"

namespace collapse {

/// Counts per outcome label. Declared labels keep their order; labels seen
/// only in data follow, sorted. Rejected trials (detector misses) are counted
/// apart and are not part of `total`.
class OutcomeHistogram {
  public:
    OutcomeHistogram() = default;
    explicit OutcomeHistogram(std::vector<std::string> declared_labels);

    void add(std::string_view label, std::uint64_t count = 1);
    void add_rejected(std::uint64_t count = 1) {
        rejected_ += count;
    }
    /// Sums counts; the result keeps this histogram's declared order.
    void merge(const OutcomeHistogram &other);

    std::uint64_t count(std::string_view label) const;
    std::uint64_t total() const {
        return total_;
    }
    std::uint64_t rejected() const {
        return rejected_;
    }
    /// (label, count) in report order.
    std::vector<std::pair<std::string, std::uint64_t>> bins() const;

    friend bool operator==(const OutcomeHistogram &a, const OutcomeHistogram &b) {
        return a.bins() == b.bins() && a.total_ == b.total_ && a.rejected_ == b.rejected_;
    }

  private:
    std::size_t declared_count_ = 0;
    std::vector<std::string> labels_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t total_ = 0;
    std::uint64_t rejected_ = 0;
};

/// Result of one seeded trial.
struct TrialOutcome {
    /// False when the detector was missed; such trials carry no label.
    bool accepted = true;
    std::string label;
    /// +-1 readings of two measured particles, when the scenario has them.
    std::optional<std::pair<int, int>> signs;
    std::vector<MeasurementRecord> records;
};

/// A runnable scenario: one trial per seed, nothing shared between trials.
struct Experiment {
    std::string name;
    std::vector<std::string> declared_labels;
    std::function<TrialOutcome(std::uint64_t seed)> trial;
};

struct TrialSummary {
    OutcomeHistogram histogram;
    /// Sign pairs in trial order.
    std::vector<std::pair<int, int>> signs;
};

/// n trials seeded with derive_seed(master_seed, i), split over `threads`
/// workers. The result does not depend on the thread count.
TrialSummary run_trials(const Experiment &experiment, std::uint64_t n, std::uint64_t master_seed,
                        unsigned threads = 1);

/// Significance levels with embedded critical values.
inline constexpr std::array<double, 6> kChiSquareAlphas{0.10, 0.05, 0.025, 0.01, 0.005, 0.001};

/// Upper-tail critical value of the chi-square distribution for df in
/// [1, 32] and alpha in kChiSquareAlphas.
double chi_square_critical(int degrees_of_freedom, double alpha);

struct ExpectedBin {
    std::string label;
    double probability;

    friend bool operator==(const ExpectedBin &, const ExpectedBin &) = default;
};

struct ChiSquareResult {
    double statistic = 0.0;
    double critical = 0.0;
    int degrees_of_freedom = 0;
    bool passed = false;
};

/// Pearson goodness of fit. Observed counts on a label with zero expected
/// probability make the statistic infinite. Throws InsufficientCounts when
/// total < 5 * (number of bins).
ChiSquareResult chi_square_test(const OutcomeHistogram &observed, std::span<const ExpectedBin> expected, double alpha);

/// Largest bin count over total. Throws InsufficientCounts on an empty
/// histogram.
double peak_metric(const OutcomeHistogram &h);

/// Binomial standard error of peak_metric.
double peak_standard_error(const OutcomeHistogram &h);

struct PeakReport {
    std::string parameter;
    std::vector<double> values;
    std::vector<double> metrics;
    std::vector<double> standard_errors;
    std::vector<std::uint64_t> accepted;
    std::vector<std::uint64_t> rejected;
    /// Each step drops by at most the larger standard error of its ends.
    bool monotone = false;
};

bool nondecreasing_within_error(std::span<const double> metrics, std::span<const double> standard_errors);

/// Peak metric per parameter value; every value runs with the same master
/// seed. Needs at least two values.
PeakReport asymmetry_sweep(const std::function<Experiment(double)> &family, std::string parameter,
                           std::span<const double> values, std::uint64_t n, std::uint64_t master_seed,
                           unsigned threads = 1);

/// Sample correlation of +-1 pairs. Throws ValidationError on other values,
/// an empty input or a constant side.
double correlation(std::span<const std::pair<int, int>> pairs);

}  // namespace collapse
