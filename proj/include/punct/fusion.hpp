#pragma once

#include <string>
#include <vector>

#include "punct/types.hpp"

namespace punct {

// Boundary between token i and token i+1 (or the end of the last token).
// frame_index lies in [0, T]; label is the punctuation following
// token_index.
struct Transition {
    int frame_index = 0;
    int token_index = 0;
    PunctClass label = PunctClass::NoPunct;
};

// Per-frame concatenation of acoustic and text embeddings. Acoustic rows
// come first (rows [0, audio_rows)), text rows follow; in the standard
// profile that is 1024 + 768 = 1792 rows.
struct FusedSequence {
    MatrixF frames;  // (audio_rows + text_rows) x T
    std::vector<Transition> transitions;
    int audio_rows = 0;
    int text_rows = 0;
    std::string utterance_id;  // set by callers that track provenance
};

// Builds the per-frame concatenation. Every frame inside token i's span
// carries text column i; gap frames (and frames past the last span) carry
// the most recent preceding token's column; frames before the first span
// carry token 0's column. One transition per token boundary, placed at the
// next token's start frame, plus a final transition at the last token's end.
// Throws InvariantViolation if the triple fails validation (embedding widths
// are not constrained, only mutual consistency).
FusedSequence align_and_concat(const EmbeddingMatrix& text, const EmbeddingMatrix& audio,
                               const AlignmentTable& align);

// Learned affine map applied per frame: out[:,t] = weight * in[:,t] + bias.
struct FusionLayer {
    int out_dim = 0;
    int in_dim = 0;
    std::vector<double> weight;  // out_dim x in_dim, row-major
    std::vector<double> bias;    // out_dim

    FusionLayer() = default;
    FusionLayer(int out, int in)
        : out_dim(out),
          in_dim(in),
          weight(static_cast<size_t>(out) * in, 0.0),
          bias(static_cast<size_t>(out), 0.0) {}
};

// Applies the fusion layer to every frame; accumulation in double, result
// stored as float. Throws ShapeMismatch if layer.in_dim != seq rows.
MatrixF fuse(const FusedSequence& seq, const FusionLayer& layer);

}  // namespace punct
