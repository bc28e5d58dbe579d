#include "punct/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "punct/io.hpp"
#include "punct/rng.hpp"
#include "punct/tdnn.hpp"

namespace punct {

void SynthSpec::validate() const {
    if (num_utterances < 1) throw ConfigError("num_utterances must be >= 1");
    if (min_tokens < 1 || max_tokens < min_tokens)
        throw ConfigError("tokens_per_utterance range is empty");
    if (min_frames_per_token < 1 || max_frames_per_token < min_frames_per_token)
        throw ConfigError("frames_per_token range is empty");
    if (text_dim < 8) throw ConfigError("text_dim must be >= 8 (class cue block needs 4 rows)");
    if (audio_dim < 8) throw ConfigError("audio_dim must be >= 8 (cue blocks need room)");
    if (pause_full_frames < 1 || pause_comma_frames < 1 ||
        pause_comma_frames >= pause_full_frames)
        throw ConfigError("pause lengths must satisfy 0 < comma < full stop");
    if (pitch_ramp_frames < 1) throw ConfigError("pitch_ramp_frames must be >= 1");
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    if (text_posterior_accuracy < 0.0 || text_posterior_accuracy > 1.0)
        throw ConfigError("text_posterior_accuracy must lie in [0,1]");
}

SynthSpec SynthSpec::mini() {
    SynthSpec spec;
    spec.text_dim = 8;
    spec.audio_dim = 16;
    return spec;
}

SynthUtterance generate_utterance(const SynthSpec& spec, int index) {
    spec.validate();
    SplitMix64 rng(SplitMix64::derive(spec.seed, static_cast<uint64_t>(index)));

    SynthUtterance utt;
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "utt%04d", index);
        utt.id = buf;
    }

    const int tokens =
        spec.min_tokens + static_cast<int>(rng.next_below(
                              static_cast<uint64_t>(spec.max_tokens - spec.min_tokens + 1)));
    std::vector<int> token_frames(tokens);
    for (int i = 0; i < tokens; ++i)
        token_frames[i] = spec.min_frames_per_token +
                          static_cast<int>(rng.next_below(static_cast<uint64_t>(
                              spec.max_frames_per_token - spec.min_frames_per_token + 1)));
    std::vector<PunctClass> labels(tokens);
    for (int i = 0; i < tokens; ++i)
        labels[i] = punct_from_code(static_cast<int>(rng.next_below(kNumClasses)));

    // Contiguous spans plus a tail of frames after the last token so that
    // cues centered on the final transition never clip.
    int start = 0;
    for (int i = 0; i < tokens; ++i) {
        AlignmentEntry e;
        e.token_index = i;
        e.start_frame = start;
        e.end_frame = start + token_frames[i];
        e.token_text = "w" + std::to_string(i);
        e.label = labels[i];
        utt.align.entries.push_back(std::move(e));
        start += token_frames[i];
    }
    const int total_frames = start + spec.pause_full_frames;

    utt.text.kind = EmbeddingKind::Text;
    utt.text.m = MatrixF(spec.text_dim, tokens);
    utt.audio.kind = EmbeddingKind::Audio;
    utt.audio.m = MatrixF(spec.audio_dim, total_frames);

    if (spec.noise_sigma > 0.0) {
        for (float& v : utt.text.m.data)
            v = static_cast<float>(spec.noise_sigma * rng.next_gaussian());
        for (float& v : utt.audio.m.data)
            v = static_cast<float>(spec.noise_sigma * rng.next_gaussian());
    }

    // Text cue: one designated row per class, on the token's own column.
    for (int i = 0; i < tokens; ++i) {
        float& cell = utt.text.m.at(spec.text_cue_row(labels[i]), i);
        cell += static_cast<float>(spec.text_cue_magnitude);
    }

    // Acoustic cues around each transition frame (= end of the token's span).
    auto paint_pause = [&](int f, int len) {
        int lo = std::max(0, f - len / 2);
        int hi = std::min(total_frames, f + (len - len / 2));
        for (int t = lo; t < hi; ++t)
            for (int r = spec.pause_row_begin(); r < spec.pause_row_end(); ++r)
                utt.audio.m.at(r, t) += 1.0f;
    };
    for (int i = 0; i < tokens; ++i) {
        const int f = utt.align.entries[i].end_frame;
        switch (labels[i]) {
            case PunctClass::FullStop:
                paint_pause(f, spec.pause_full_frames);
                break;
            case PunctClass::Comma:
                paint_pause(f, spec.pause_comma_frames);
                break;
            case PunctClass::Question: {
                int lo = std::max(0, f - spec.pitch_ramp_frames);
                for (int t = lo; t < f; ++t) {
                    double rise = spec.pitch_rise_magnitude *
                                  static_cast<double>(t - (f - spec.pitch_ramp_frames) + 1) /
                                  spec.pitch_ramp_frames;
                    for (int r = spec.pitch_row_begin(); r < spec.pitch_row_end(); ++r)
                        utt.audio.m.at(r, t) += static_cast<float>(rise);
                }
                break;
            }
            case PunctClass::NoPunct:
                break;
        }
    }

    // Text-branch posteriors: argmax lands on the true label with the
    // configured probability; softmax keeps them valid distributions.
    for (int i = 0; i < tokens; ++i) {
        int winner = punct_code(labels[i]);
        if (rng.next_unit() >= spec.text_posterior_accuracy) {
            int other = static_cast<int>(rng.next_below(kNumClasses - 1));
            winner = other >= winner ? other + 1 : other;
        }
        std::array<double, 4> logits{};
        for (int k = 0; k < kNumClasses; ++k) logits[k] = 0.1 * rng.next_unit();
        logits[winner] += 3.0;
        PosteriorRecord rec;
        rec.token_index = i;
        rec.probs = softmax4(logits);
        utt.text_posteriors.push_back(rec);
    }
    return utt;
}

std::vector<SynthUtterance> generate(const SynthSpec& spec) {
    spec.validate();
    std::vector<SynthUtterance> utts;
    utts.reserve(static_cast<size_t>(spec.num_utterances));
    for (int u = 0; u < spec.num_utterances; ++u) utts.push_back(generate_utterance(spec, u));
    return utts;
}

std::filesystem::path write_fixture_tree(const SynthSpec& spec,
                                         const std::filesystem::path& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoFailure("cannot create output directory " + out_dir.string());

    std::vector<ManifestEntry> manifest;
    for (int u = 0; u < spec.num_utterances; ++u) {
        SynthUtterance utt = generate_utterance(spec, u);
        write_embeddings(utt.text, out_dir / (utt.id + ".text.epemb"));
        write_embeddings(utt.audio, out_dir / (utt.id + ".audio.epemb"));
        write_alignment(utt.align, out_dir / (utt.id + ".align.tsv"));
        write_posteriors(utt.text_posteriors, out_dir / (utt.id + ".post.tsv"));
        manifest.push_back({utt.id, utt.id + ".text.epemb", utt.id + ".audio.epemb",
                            utt.id + ".align.tsv"});
    }
    std::filesystem::path manifest_path = out_dir / "manifest.tsv";
    write_manifest(manifest, manifest_path);
    return manifest_path;
}

}  // namespace punct
