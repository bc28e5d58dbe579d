#include "punct/ensemble.hpp"

#include <cstdio>
#include <sstream>

namespace punct {

void EnsembleConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ConfigError("ensemble alpha must lie in [0,1], got " + std::to_string(alpha));
}

PunctClass ensemble_predict(const PosteriorRecord& y_a, const PosteriorRecord& y_t,
                            const EnsembleConfig& cfg) {
    cfg.validate();
    if (y_a.token_index != y_t.token_index)
        throw TokenIndexMismatch("posterior records disagree on token: " +
                                 std::to_string(y_a.token_index) + " vs " +
                                 std::to_string(y_t.token_index));
    int best = 0;
    double best_score = cfg.alpha * y_a.probs[0] + (1.0 - cfg.alpha) * y_t.probs[0];
    for (int k = 1; k < kNumClasses; ++k) {
        double s = cfg.alpha * y_a.probs[k] + (1.0 - cfg.alpha) * y_t.probs[k];
        if (s > best_score) {
            best_score = s;
            best = k;
        }
    }
    return punct_from_code(best);
}

EvalReport evaluate(const std::vector<PunctClass>& preds, const std::vector<PunctClass>& golds) {
    if (preds.size() != golds.size())
        throw LengthMismatch("prediction/gold length mismatch: " + std::to_string(preds.size()) +
                             " vs " + std::to_string(golds.size()));

    EvalReport report;
    for (size_t i = 0; i < golds.size(); ++i)
        ++report.confusion[punct_code(golds[i])][punct_code(preds[i])];

    double weighted = 0.0;
    int64_t total_support = 0;
    for (int c = 0; c < 3; ++c) {  // punctuation classes only
        int64_t tp = report.confusion[c][c];
        int64_t support = 0, predicted = 0;
        for (int k = 0; k < kNumClasses; ++k) {
            support += report.confusion[c][k];
            predicted += report.confusion[k][c];
        }
        ClassMetrics& m = report.per_class[c];
        m.support = support;
        m.precision = predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
        m.recall = support > 0 ? static_cast<double>(tp) / support : 0.0;
        double pr = m.precision + m.recall;
        m.f1 = pr > 0.0 ? 100.0 * 2.0 * m.precision * m.recall / pr : 0.0;
        weighted += static_cast<double>(support) * m.f1;
        total_support += support;
    }
    report.zero_support = total_support == 0;
    report.overall_f1 = total_support > 0 ? weighted / total_support : 0.0;
    return report;
}

std::vector<std::pair<double, EvalReport>> alpha_sweep(
    const std::vector<PosteriorRecord>& y_a_list, const std::vector<PosteriorRecord>& y_t_list,
    const std::vector<PunctClass>& golds, const std::vector<double>& alphas) {
    if (y_a_list.size() != y_t_list.size() || y_a_list.size() != golds.size())
        throw LengthMismatch("alpha_sweep inputs must align: " + std::to_string(y_a_list.size()) +
                             " / " + std::to_string(y_t_list.size()) + " / " +
                             std::to_string(golds.size()));
    std::vector<std::pair<double, EvalReport>> rows;
    rows.reserve(alphas.size());
    for (double alpha : alphas) {
        EnsembleConfig cfg{alpha};
        cfg.validate();
        std::vector<PunctClass> preds;
        preds.reserve(golds.size());
        for (size_t i = 0; i < golds.size(); ++i)
            preds.push_back(ensemble_predict(y_a_list[i], y_t_list[i], cfg));
        rows.emplace_back(alpha, evaluate(preds, golds));
    }
    return rows;
}

namespace {

const char* kClassNames[3] = {"Comma", "FullStop", "Question"};

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

}  // namespace

std::string format_report(const EvalReport& report) {
    std::ostringstream out;
    out << "class      precision  recall     f1        support\n";
    for (int c = 0; c < 3; ++c) {
        const ClassMetrics& m = report.per_class[c];
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-10s %9.4f  %9.4f  %8.2f  %7lld\n", kClassNames[c],
                      m.precision, m.recall, m.f1, static_cast<long long>(m.support));
        out << buf;
    }
    out << "overall F1 (support-weighted over punctuation classes): "
        << fmt("%.2f", report.overall_f1);
    if (report.zero_support) out << "  [zero punctuation support]";
    out << "\nconfusion matrix (rows gold, cols predicted; order ,/./?/NP):\n";
    for (int g = 0; g < kNumClasses; ++g) {
        for (int p = 0; p < kNumClasses; ++p) out << report.confusion[g][p] << (p + 1 < kNumClasses ? '\t' : '\n');
    }
    return out.str();
}

std::string sweep_tsv(const std::vector<std::pair<double, EvalReport>>& rows, bool header) {
    std::ostringstream out;
    if (header) out << "alpha\tf1_comma\tf1_fullstop\tf1_question\tf1_overall\n";
    for (const auto& [alpha, report] : rows) {
        out << fmt("%.3f", alpha);
        for (int c = 0; c < 3; ++c) out << '\t' << fmt("%.4f", report.per_class[c].f1);
        out << '\t' << fmt("%.4f", report.overall_f1) << '\n';
    }
    return out.str();
}

std::string format_sweep_table(const std::vector<std::pair<double, EvalReport>>& rows) {
    std::ostringstream out;
    out << "alpha   Comma    FullStop  Question  Overall\n";
    for (const auto& [alpha, report] : rows) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-7.3f %-8.2f %-9.2f %-9.2f %-8.2f\n", alpha,
                      report.per_class[0].f1, report.per_class[1].f1, report.per_class[2].f1,
                      report.overall_f1);
        out << buf;
    }
    return out.str();
}

}  // namespace punct
