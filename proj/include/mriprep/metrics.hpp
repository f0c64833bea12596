#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mriprep::metrics {

inline constexpr int kNumClasses = 4;

// Fixed label order used by every module.
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {"glioma", "meningioma", "no_tumor",
                                                                          "pituitary"};

// Rows are actual classes, columns predicted classes.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

    std::uint64_t total() const noexcept;
    std::uint64_t trace() const noexcept;
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

// Labels must be in [0, kNumClasses); lengths must match.
ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> actual);

// Bits set in ClassMetrics::zero_denominator.
enum ZeroDenominator : unsigned {
    zd_specificity = 1u << 0,
    zd_precision = 1u << 1,
    zd_recall = 1u << 2,
    zd_f1 = 1u << 3,
};

struct ClassMetrics {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double accuracy = 0.0;
    double specificity = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    unsigned zero_denominator = 0;  // metrics reported as 0 for want of a denominator
};

// One-vs-rest reduction for class k. Throws ArgumentError on an empty matrix
// or out-of-range class.
ClassMetrics per_class_metrics(const ConfusionMatrix& cm, int k);

struct ClassReport {
    std::array<ClassMetrics, kNumClasses> classes;
    ClassMetrics macro;  // unweighted means; counts are left at zero
    double overall_accuracy = 0.0;
};

ClassReport report(const ConfusionMatrix& cm);

// e.g. "precision|recall|f1", or "none".
std::string flag_string(unsigned zero_denominator);

// Aligned plain-text table with one row per class, a macro row and the
// overall accuracy.
std::string render_table(const ClassReport& r);

// Header "class,accuracy,specificity,precision,recall,f1,flag", then one row
// per class and a "macro" row.
std::string render_csv(const ClassReport& r);

// "actual\\predicted" header row followed by one row per actual class.
std::string render_confusion_csv(const ConfusionMatrix& cm);

}  // namespace mriprep::metrics
