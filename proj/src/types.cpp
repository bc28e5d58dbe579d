#include "punct/types.hpp"

#include <cmath>
#include <sstream>

namespace punct {

PunctClass punct_from_code(int code) {
    if (code < 0 || code >= kNumClasses)
        throw InvariantViolation("punctuation class code out of range: " + std::to_string(code));
    return static_cast<PunctClass>(code);
}

std::string_view punct_name(PunctClass c) {
    switch (c) {
        case PunctClass::Comma: return "COMMA";
        case PunctClass::FullStop: return "PERIOD";
        case PunctClass::Question: return "QUESTION";
        case PunctClass::NoPunct: return "NONE";
    }
    throw InvariantViolation("invalid punctuation class");
}

PunctClass punct_from_name(std::string_view name) {
    if (name == "COMMA") return PunctClass::Comma;
    if (name == "PERIOD") return PunctClass::FullStop;
    if (name == "QUESTION") return PunctClass::Question;
    if (name == "NONE") return PunctClass::NoPunct;
    throw ParseError("unknown punctuation label: " + std::string(name));
}

void AlignmentTable::check() const {
    for (size_t i = 0; i < entries.size(); ++i) {
        const AlignmentEntry& e = entries[i];
        if (e.token_index != static_cast<int>(i))
            throw InvariantViolation("token indices must be contiguous from 0, got " +
                                     std::to_string(e.token_index) + " at position " +
                                     std::to_string(i));
        if (e.start_frame < 0)
            throw InvariantViolation("negative start frame at token " + std::to_string(i));
        if (e.start_frame >= e.end_frame)
            throw InvariantViolation("empty span at token " + std::to_string(i));
        if (i > 0 && entries[i - 1].end_frame > e.start_frame)
            throw InvariantViolation("overlap at token " + std::to_string(i));
    }
}

bool PosteriorRecord::valid(double tol) const {
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) return false;
        sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
}

std::string ValidationReport::to_string() const {
    std::ostringstream out;
    for (const std::string& p : problems) out << p << '\n';
    return out.str();
}

namespace {

bool all_finite(const MatrixF& m) {
    for (float v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

ValidationReport validate_pair(const EmbeddingMatrix& text, const EmbeddingMatrix& audio,
                               const AlignmentTable& align, const ValidationOptions& opts) {
    ValidationReport report;
    auto add = [&report](const std::string& msg) { report.problems.push_back(msg); };

    if (text.kind != EmbeddingKind::Text) add("first matrix must have kind Text");
    if (audio.kind != EmbeddingKind::Audio) add("second matrix must have kind Audio");
    if (opts.enforce_standard_dims) {
        if (text.rows() != kTextDim)
            add("text rows must be " + std::to_string(kTextDim) + ", got " +
                std::to_string(text.rows()));
        if (audio.rows() != kAudioDim)
            add("audio rows must be " + std::to_string(kAudioDim) + ", got " +
                std::to_string(audio.rows()));
    }
    if (text.rows() <= 0 || text.cols() < 0) add("text matrix has invalid shape");
    if (audio.rows() <= 0 || audio.cols() < 0) add("audio matrix has invalid shape");
    if (text.m.data.size() != static_cast<size_t>(text.rows()) * text.cols())
        add("text data length does not match rows*cols");
    if (audio.m.data.size() != static_cast<size_t>(audio.rows()) * audio.cols())
        add("audio data length does not match rows*cols");
    if (!all_finite(text.m)) add("text matrix contains non-finite values");
    if (!all_finite(audio.m)) add("audio matrix contains non-finite values");

    if (align.token_count() != text.cols())
        add("token count " + std::to_string(align.token_count()) +
            " does not match text columns " + std::to_string(text.cols()));
    if (audio.cols() > 0 && align.entries.empty()) add("alignment has no entries");

    try {
        align.check();
    } catch (const InvariantViolation& e) {
        add(e.what());
    }
    for (const AlignmentEntry& e : align.entries) {
        if (e.end_frame > audio.cols()) {
            add("span exceeds audio frames at token " + std::to_string(e.token_index) + " (" +
                std::to_string(e.end_frame) + " > " + std::to_string(audio.cols()) + ")");
            break;
        }
    }
    return report;
}

}  // namespace punct
