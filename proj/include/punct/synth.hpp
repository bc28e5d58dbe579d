#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "punct/types.hpp"

namespace punct {

// Synthetic corpus with class-discriminative cues planted in the embeddings:
// a constant "silence" pattern on a designated acoustic block whose length
// separates full stops (long pause) from commas (short pause), a rising ramp
// on a second acoustic block for questions, and a class-indexed offset on a
// designated text block. NoPunct carries no cue.
struct SynthSpec {
    uint64_t seed = 1;
    int num_utterances = 10;
    int min_tokens = 5;
    int max_tokens = 12;
    int min_frames_per_token = 20;
    int max_frames_per_token = 40;
    int text_dim = kTextDim;
    int audio_dim = kAudioDim;
    int pause_full_frames = 40;   // pause length planted for FullStop
    int pause_comma_frames = 12;  // pause length planted for Comma
    double pitch_rise_magnitude = 1.0;
    int pitch_ramp_frames = 20;
    double text_cue_magnitude = 1.0;
    double noise_sigma = 0.0;
    double text_posterior_accuracy = 0.9;

    void validate() const;  // throws ConfigError

    // Reduced embedding widths for fast tests (text 8, audio 16).
    static SynthSpec mini();

    // Planted-cue row blocks, derived from the embedding widths.
    int pause_row_begin() const { return 0; }
    int pause_row_end() const { return std::max(1, audio_dim / 8); }
    int pitch_row_begin() const { return pause_row_end(); }
    int pitch_row_end() const { return 2 * pause_row_end(); }
    int text_cue_row(PunctClass c) const { return text_dim / 2 + punct_code(c); }
};

struct SynthUtterance {
    std::string id;
    EmbeddingMatrix text;
    EmbeddingMatrix audio;
    AlignmentTable align;
    std::vector<PosteriorRecord> text_posteriors;
};

// Deterministic in (spec.seed, index); utterances use independent derived
// streams, so generation parallelizes across utterances.
SynthUtterance generate_utterance(const SynthSpec& spec, int index);
std::vector<SynthUtterance> generate(const SynthSpec& spec);

// Writes <id>.text.epemb / <id>.audio.epemb / <id>.align.tsv / <id>.post.tsv
// per utterance plus manifest.tsv (relative paths); returns the manifest
// path. Identical specs produce byte-identical trees.
std::filesystem::path write_fixture_tree(const SynthSpec& spec,
                                         const std::filesystem::path& out_dir);

}  // namespace punct
