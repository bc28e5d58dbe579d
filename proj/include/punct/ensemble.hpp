#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "punct/types.hpp"

namespace punct {

// Blend weight for the two branches: alpha goes to the acoustic-and-text
// network's posteriors, 1-alpha to the text-only posteriors.
struct EnsembleConfig {
    double alpha = 0.4;

    void validate() const;  // throws ConfigError unless 0 <= alpha <= 1
};

// argmax over alpha*y_a + (1-alpha)*y_t, ties toward the lowest class code.
// Throws TokenIndexMismatch if the records disagree on the token.
PunctClass ensemble_predict(const PosteriorRecord& y_a, const PosteriorRecord& y_t,
                            const EnsembleConfig& cfg);

struct ClassMetrics {
    double precision = 0.0;  // fractions in [0,1]
    double recall = 0.0;
    double f1 = 0.0;  // percent, [0,100]
    int64_t support = 0;
};

// Precision/recall/F1 for the three punctuation classes plus the full 4x4
// confusion matrix. The overall F1 weights the three punctuation classes by
// their gold support; NoPunct is excluded from the aggregate.
struct EvalReport {
    std::array<ClassMetrics, 3> per_class;                       // Comma, FullStop, Question
    double overall_f1 = 0.0;                                     // percent
    std::array<std::array<int64_t, kNumClasses>, kNumClasses> confusion{};  // [gold][pred]
    bool zero_support = false;  // no punctuation-class gold labels at all
};

// Throws LengthMismatch when preds and golds differ in length.
EvalReport evaluate(const std::vector<PunctClass>& preds, const std::vector<PunctClass>& golds);

// One report per alpha; lists must be aligned index-by-index.
std::vector<std::pair<double, EvalReport>> alpha_sweep(
    const std::vector<PosteriorRecord>& y_a_list, const std::vector<PosteriorRecord>& y_t_list,
    const std::vector<PunctClass>& golds, const std::vector<double>& alphas);

inline const std::vector<double> kDefaultSweepAlphas{0.3, 0.4, 0.5, 0.6, 0.7};

// Rendering: a human-readable table and the machine-readable TSV rows
// (alpha, f1_comma, f1_fullstop, f1_question, f1_overall).
std::string format_report(const EvalReport& report);
std::string sweep_tsv(const std::vector<std::pair<double, EvalReport>>& rows,
                      bool header = true);
std::string format_sweep_table(const std::vector<std::pair<double, EvalReport>>& rows);

}  // namespace punct
