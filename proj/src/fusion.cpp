#include "punct/fusion.hpp"

#include <cstring>

namespace punct {

FusedSequence align_and_concat(const EmbeddingMatrix& text, const EmbeddingMatrix& audio,
                               const AlignmentTable& align) {
    ValidationOptions opts;
    opts.enforce_standard_dims = false;
    ValidationReport report = validate_pair(text, audio, align, opts);
    if (!report.ok()) throw InvariantViolation("invalid input triple:\n" + report.to_string());

    const int frames = audio.cols();
    const int audio_rows = audio.rows();
    const int text_rows = text.rows();
    const int tokens = align.token_count();

    FusedSequence seq;
    seq.audio_rows = audio_rows;
    seq.text_rows = text_rows;
    seq.frames = MatrixF(audio_rows + text_rows, frames);

    // token_of[f] = index of the token whose text column frame f carries.
    int entry = 0;
    for (int f = 0; f < frames; ++f) {
        while (entry + 1 < tokens && f >= align.entries[entry + 1].start_frame) ++entry;
        float* dst = seq.frames.col(f);
        std::memcpy(dst, audio.col(f), sizeof(float) * audio_rows);
        std::memcpy(dst + audio_rows, text.col(entry), sizeof(float) * text_rows);
    }

    for (int i = 0; i + 1 < tokens; ++i)
        seq.transitions.push_back(
            {align.entries[i + 1].start_frame, i, align.entries[i].label});
    if (tokens > 0 && align.entries[tokens - 1].end_frame <= frames)
        seq.transitions.push_back(
            {align.entries[tokens - 1].end_frame, tokens - 1, align.entries[tokens - 1].label});
    return seq;
}

MatrixF fuse(const FusedSequence& seq, const FusionLayer& layer) {
    if (layer.in_dim != seq.frames.rows)
        throw ShapeMismatch("fusion layer expects " + std::to_string(layer.in_dim) +
                            " input rows, sequence has " + std::to_string(seq.frames.rows));
    if (layer.weight.size() != static_cast<size_t>(layer.out_dim) * layer.in_dim ||
        layer.bias.size() != static_cast<size_t>(layer.out_dim))
        throw ShapeMismatch("fusion layer parameter shapes disagree with dims");

    MatrixF out(layer.out_dim, seq.frames.cols);
    for (int t = 0; t < seq.frames.cols; ++t) {
        const float* x = seq.frames.col(t);
        float* y = out.col(t);
        for (int o = 0; o < layer.out_dim; ++o) {
            const double* w = layer.weight.data() + static_cast<size_t>(o) * layer.in_dim;
            double acc = layer.bias[o];
            for (int i = 0; i < layer.in_dim; ++i) acc += w[i] * x[i];
            y[o] = static_cast<float>(acc);
        }
    }
    return out;
}

}  // namespace punct
