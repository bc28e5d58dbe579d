#include "punct/dataset.hpp"

#include <cstring>

#include "punct/rng.hpp"

namespace punct {

std::vector<WindowExample> extract_windows(const FusedSequence& seq) {
    std::vector<WindowExample> out;
    out.reserve(seq.transitions.size());
    const int rows = seq.frames.rows;
    const int total = seq.frames.cols;
    for (const Transition& tr : seq.transitions) {
        WindowExample ex;
        ex.window = MatrixF(rows, kWindowFrames);
        ex.label = tr.label;
        ex.utterance_id = seq.utterance_id;
        ex.transition_frame = tr.frame_index;
        ex.token_index = tr.token_index;
        const int first = tr.frame_index - kWindowHalf;
        for (int c = 0; c < kWindowFrames; ++c) {
            const int src = first + c;
            if (src < 0 || src >= total) continue;  // stays zero
            std::memcpy(ex.window.col(c), seq.frames.col(src), sizeof(float) * rows);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<size_t> sample_epoch(const std::vector<PunctClass>& labels,
                                 const SamplerConfig& cfg) {
    if (labels.empty()) throw EmptyDataset("cannot sample from an empty dataset");
    if (cfg.epoch_size < 1) throw ConfigError("epoch_size must be >= 1");

    SplitMix64 rng(cfg.seed);
    std::vector<size_t> indices;
    indices.reserve(static_cast<size_t>(cfg.epoch_size));

    if (cfg.mode == SampleMode::Natural) {
        for (int64_t i = 0; i < cfg.epoch_size; ++i)
            indices.push_back(static_cast<size_t>(rng.next_below(labels.size())));
        return indices;
    }

    // Balanced: bucket examples per class, then draw class uniformly over the
    // classes that are actually present.
    std::array<std::vector<size_t>, kNumClasses> buckets;
    for (size_t i = 0; i < labels.size(); ++i) buckets[punct_code(labels[i])].push_back(i);
    std::vector<int> present;
    for (int c = 0; c < kNumClasses; ++c)
        if (!buckets[c].empty()) present.push_back(c);

    for (int64_t i = 0; i < cfg.epoch_size; ++i) {
        int c = present[rng.next_below(present.size())];
        const std::vector<size_t>& bucket = buckets[c];
        indices.push_back(bucket[rng.next_below(bucket.size())]);
    }
    return indices;
}

std::vector<size_t> sample_epoch(const std::vector<WindowExample>& examples,
                                 const SamplerConfig& cfg) {
    std::vector<PunctClass> labels;
    labels.reserve(examples.size());
    for (const WindowExample& ex : examples) labels.push_back(ex.label);
    return sample_epoch(labels, cfg);
}

std::array<int64_t, kNumClasses> class_histogram(const std::vector<PunctClass>& labels) {
    std::array<int64_t, kNumClasses> counts{0, 0, 0, 0};
    for (PunctClass c : labels) ++counts[punct_code(c)];
    return counts;
}

std::array<int64_t, kNumClasses> class_histogram(const std::vector<WindowExample>& examples) {
    std::array<int64_t, kNumClasses> counts{0, 0, 0, 0};
    for (const WindowExample& ex : examples) ++counts[punct_code(ex.label)];
    return counts;
}

std::vector<WindowExample> load_windows(const std::vector<ManifestEntry>& manifest) {
    std::vector<WindowExample> all;
    for (const ManifestEntry& entry : manifest) {
        EmbeddingMatrix text = read_embeddings(entry.text_path);
        EmbeddingMatrix audio = read_embeddings(entry.audio_path);
        AlignmentTable align = read_alignment(entry.align_path);
        FusedSequence seq = align_and_concat(text, audio, align);
        seq.utterance_id = entry.utterance_id;
        std::vector<WindowExample> windows = extract_windows(seq);
        for (WindowExample& w : windows) all.push_back(std::move(w));
    }
    return all;
}

}  // namespace punct
