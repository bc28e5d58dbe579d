#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "punct/errors.hpp"

namespace punct {

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

// Punctuation decision after a token. Integer codes are part of the on-disk
// contracts (posterior files, confusion matrices, checkpoints) and never
// change.
enum class PunctClass : int {
    Comma = 0,
    FullStop = 1,
    Question = 2,
    NoPunct = 3,
};

inline constexpr int kNumClasses = 4;

inline constexpr int punct_code(PunctClass c) { return static_cast<int>(c); }

PunctClass punct_from_code(int code);  // throws InvariantViolation on bad code

// TSV label names: COMMA, PERIOD, QUESTION, NONE.
std::string_view punct_name(PunctClass c);
PunctClass punct_from_name(std::string_view name);  // throws ParseError

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

// Column-major float matrix; a column is one token/frame vector.
struct MatrixF {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    MatrixF() = default;
    MatrixF(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0f) {}

    float* col(int j) { return data.data() + static_cast<size_t>(j) * rows; }
    const float* col(int j) const { return data.data() + static_cast<size_t>(j) * rows; }
    float& at(int i, int j) { return data[static_cast<size_t>(j) * rows + i]; }
    float at(int i, int j) const { return data[static_cast<size_t>(j) * rows + i]; }

    bool same_shape(const MatrixF& o) const { return rows == o.rows && cols == o.cols; }
};

enum class EmbeddingKind : uint8_t { Text = 0, Audio = 1 };

// Canonical embedding widths of the standard profile.
inline constexpr int kTextDim = 768;
inline constexpr int kAudioDim = 1024;
inline constexpr int kFusedDim = kTextDim + kAudioDim;  // 1792

// Dense per-token (Text) or per-frame (Audio) embedding columns.
struct EmbeddingMatrix {
    EmbeddingKind kind = EmbeddingKind::Text;
    MatrixF m;

    int rows() const { return m.rows; }
    int cols() const { return m.cols; }
    const float* col(int j) const { return m.col(j); }
    float* col(int j) { return m.col(j); }
};

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

// One transcript token with its frame span and following punctuation.
struct AlignmentEntry {
    int token_index = 0;
    int start_frame = 0;
    int end_frame = 0;  // exclusive
    std::string token_text;
    PunctClass label = PunctClass::NoPunct;
};

// Forced-alignment output: token -> contiguous frame span. Spans are sorted,
// non-overlapping, and may leave gaps (silence); gap frames take the text
// column of the most recent preceding token.
struct AlignmentTable {
    static constexpr double kFrameDurationMs = 10.0;

    std::vector<AlignmentEntry> entries;

    int token_count() const { return static_cast<int>(entries.size()); }

    // Throws InvariantViolation on the first violated table-local rule
    // (ordering, contiguous indices, empty or overlapping spans).
    void check() const;
};

// ---------------------------------------------------------------------------
// Posteriors
// ---------------------------------------------------------------------------

// One 4-way probability vector (class-code order) for a token transition.
struct PosteriorRecord {
    int token_index = 0;
    std::array<double, 4> probs{0.0, 0.0, 0.0, 0.0};

    // Entries in [0,1] summing to 1 within tolerance.
    bool valid(double tol = 1e-5) const;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct ValidationReport {
    std::vector<std::string> problems;

    bool ok() const { return problems.empty(); }
    std::string to_string() const;
};

struct ValidationOptions {
    // Enforce the standard embedding widths (text 768, audio 1024). Reduced
    // profiles (small fixture embeddings) disable this and only require the
    // pair to be mutually consistent.
    bool enforce_standard_dims = true;
};

// Lists every violated invariant of the (text, audio, alignment) triple;
// empty report iff the triple is consistent. Never throws.
ValidationReport validate_pair(const EmbeddingMatrix& text, const EmbeddingMatrix& audio,
                               const AlignmentTable& align, const ValidationOptions& opts = {});

}  // namespace punct
