#include "mriprep/metrics.hpp"

#include <cstdio>

#include "mriprep/errors.hpp"

namespace mriprep::metrics {

std::uint64_t ConfusionMatrix::total() const noexcept {
    std::uint64_t n = 0;
    for (const auto& row : counts)
        for (std::uint64_t c : row) n += c;
    return n;
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
    std::uint64_t n = 0;
    for (int k = 0; k < kNumClasses; ++k) n += counts[k][k];
    return n;
}

ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> actual) {
    if (predicted.size() != actual.size())
        throw ArgumentError("confusion: " + std::to_string(predicted.size()) + " predictions for " +
                            std::to_string(actual.size()) + " labels");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const int p = predicted[i], a = actual[i];
        if (p < 0 || p >= kNumClasses || a < 0 || a >= kNumClasses)
            throw ArgumentError("confusion: label out of range at index " + std::to_string(i));
        ++cm.counts[a][p];
    }
    return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den, unsigned bit, unsigned& flags) {
    if (den == 0) {
        flags |= bit;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassMetrics per_class_metrics(const ConfusionMatrix& cm, int k) {
    if (k < 0 || k >= kNumClasses) throw ArgumentError("per_class_metrics: class out of range");
    const std::uint64_t total = cm.total();
    if (total == 0) throw ArgumentError("per_class_metrics: empty confusion matrix");
    ClassMetrics m;
    m.tp = cm.counts[k][k];
    for (int j = 0; j < kNumClasses; ++j) {
        if (j == k) continue;
        m.fp += cm.counts[j][k];
        m.fn += cm.counts[k][j];
    }
    m.tn = total - m.tp - m.fp - m.fn;
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(total);
    m.specificity = ratio(m.tn, m.tn + m.fp, zd_specificity, m.zero_denominator);
    m.precision = ratio(m.tp, m.tp + m.fp, zd_precision, m.zero_denominator);
    m.recall = ratio(m.tp, m.tp + m.fn, zd_recall, m.zero_denominator);
    if (m.precision + m.recall > 0.0) {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
        m.f1 = 0.0;
        m.zero_denominator |= zd_f1;
    }
    return m;
}

ClassReport report(const ConfusionMatrix& cm) {
    ClassReport r;
    for (int k = 0; k < kNumClasses; ++k) {
        r.classes[k] = per_class_metrics(cm, k);
        r.macro.accuracy += r.classes[k].accuracy / kNumClasses;
        r.macro.specificity += r.classes[k].specificity / kNumClasses;
        r.macro.precision += r.classes[k].precision / kNumClasses;
        r.macro.recall += r.classes[k].recall / kNumClasses;
        r.macro.f1 += r.classes[k].f1 / kNumClasses;
        r.macro.zero_denominator |= r.classes[k].zero_denominator;
    }
    r.overall_accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
    return r;
}

std::string flag_string(unsigned zero_denominator) {
    static constexpr std::pair<unsigned, const char*> names[] = {
        {zd_specificity, "specificity"}, {zd_precision, "precision"}, {zd_recall, "recall"}, {zd_f1, "f1"}};
    std::string out;
    for (const auto& [bit, name] : names) {
        if (!(zero_denominator & bit)) continue;
        if (!out.empty()) out += '|';
        out += name;
    }
    return out.empty() ? "none" : out;
}

namespace {

std::string format_row(const char* fmt, std::string_view name, const ClassMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, static_cast<int>(name.size()), name.data(), m.accuracy, m.specificity,
                  m.precision, m.recall, m.f1, flag_string(m.zero_denominator).c_str());
    return buf;
}

}  // namespace

std::string render_table(const ClassReport& r) {
    std::string out = "class        accuracy  specificity  precision  recall  f1      flag\n";
    const char* fmt = "%-12.*s %8.4f  %11.4f  %9.4f  %6.4f  %6.4f  %s\n";
    for (int k = 0; k < kNumClasses; ++k) out += format_row(fmt, kClassNames[k], r.classes[k]);
    out += format_row(fmt, "macro", r.macro);
    char buf[64];
    std::snprintf(buf, sizeof buf, "overall accuracy %.4f\n", r.overall_accuracy);
    return out + buf;
}

std::string render_csv(const ClassReport& r) {
    std::string out = "class,accuracy,specificity,precision,recall,f1,flag\n";
    const char* fmt = "%.*s,%.6f,%.6f,%.6f,%.6f,%.6f,%s\n";
    for (int k = 0; k < kNumClasses; ++k) out += format_row(fmt, kClassNames[k], r.classes[k]);
    return out + format_row(fmt, "macro", r.macro);
}

std::string render_confusion_csv(const ConfusionMatrix& cm) {
    std::string out = "actual\\predicted";
    for (auto name : kClassNames) out += "," + std::string(name);
    out += '\n';
    for (int a = 0; a < kNumClasses; ++a) {
        out += kClassNames[a];
        for (int p = 0; p < kNumClasses; ++p) out += "," + std::to_string(cm.counts[a][p]);
        out += '\n';
    }
    return out;
}

}  // namespace mriprep::metrics
