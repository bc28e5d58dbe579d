#pragma once

#include <unistd.h>

#include <atomic>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "punct/types.hpp"

namespace punct::test {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<uint64_t> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("punct_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline EmbeddingMatrix make_embedding(EmbeddingKind kind, int rows, int cols,
                                      uint64_t seed = 42) {
    EmbeddingMatrix m;
    m.kind = kind;
    m.m = MatrixF(rows, cols);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (float& v : m.m.data) v = dist(rng);
    return m;
}

// Entries built from (start, end, label) triples; token_index and text filled
// in automatically.
inline AlignmentTable make_alignment(
    const std::vector<std::tuple<int, int, PunctClass>>& spans) {
    AlignmentTable t;
    int idx = 0;
    for (const auto& [start, end, label] : spans) {
        AlignmentEntry e;
        e.token_index = idx;
        e.start_frame = start;
        e.end_frame = end;
        e.token_text = "w" + std::to_string(idx);
        e.label = label;
        t.entries.push_back(std::move(e));
        ++idx;
    }
    return t;
}

inline bool report_mentions(const ValidationReport& report, const std::string& needle) {
    for (const std::string& p : report.problems)
        if (p.find(needle) != std::string::npos) return true;
    return false;
}

}  // namespace punct::test
