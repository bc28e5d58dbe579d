#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "punct/fusion.hpp"
#include "punct/io.hpp"
#include "punct/types.hpp"

namespace punct {

// Classification windows span 301 frames (3 s at 10 ms/frame) with the token
// transition at the exact middle column (index 150).
inline constexpr int kWindowFrames = 301;
inline constexpr int kWindowHalf = kWindowFrames / 2;  // 150

// One training/inference example: a raw fused-sequence slice (pre fusion
// layer) labeled with the transition's punctuation.
struct WindowExample {
    MatrixF window;  // seq rows x 301
    PunctClass label = PunctClass::NoPunct;
    std::string utterance_id;
    int transition_frame = 0;
    int token_index = 0;
};

// One window per transition, covering frames [f-150, f+150]; columns that
// fall outside [0, T) are zero. Windows come out in transition order.
std::vector<WindowExample> extract_windows(const FusedSequence& seq);

enum class SampleMode { Natural, Balanced };

struct SamplerConfig {
    uint64_t seed = 0;
    int64_t epoch_size = 1;
    SampleMode mode = SampleMode::Balanced;
};

// Draws epoch_size example indices with replacement. Balanced mode first
// picks one of the classes present in the corpus uniformly, then an example
// of that class uniformly; Natural mode picks uniformly over all examples.
// All draws come from the SplitMix64 stream seeded with cfg.seed (integer
// path only), so a seed fixes the sequence on every platform.
// Throws EmptyDataset.
std::vector<size_t> sample_epoch(const std::vector<PunctClass>& labels, const SamplerConfig& cfg);
std::vector<size_t> sample_epoch(const std::vector<WindowExample>& examples,
                                 const SamplerConfig& cfg);

// Exact counts in class-code order.
std::array<int64_t, kNumClasses> class_histogram(const std::vector<PunctClass>& labels);
std::array<int64_t, kNumClasses> class_histogram(const std::vector<WindowExample>& examples);

// Reads every utterance of a manifest, fuses it, and extracts all windows.
std::vector<WindowExample> load_windows(const std::vector<ManifestEntry>& manifest);

}  // namespace punct
