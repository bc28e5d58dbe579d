#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "punct/types.hpp"

namespace punct {

// ---------------------------------------------------------------------------
// EPEMB01 binary embedding files
//
//   offset 0   8 bytes   magic "EPEMB01\n"
//   offset 8   1 byte    kind (0 = Text, 1 = Audio)
//   offset 9   u32 LE    rows
//   offset 13  u32 LE    cols
//   offset 17  payload   rows*cols IEEE-754 binary32 LE, column-major
//
// File length is exactly 17 + 4*rows*cols bytes.
// ---------------------------------------------------------------------------

inline constexpr char kEmbMagic[8] = {'E', 'P', 'E', 'M', 'B', '0', '1', '\n'};
inline constexpr size_t kEmbHeaderSize = 17;

// Throws BadMagic / TruncatedFile / NonFiniteValue, each naming a byte offset.
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

// Throws InvariantViolation if the matrix is inconsistent, IoFailure on write
// problems.
void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Alignment TSV
//
// One row per token: token_index, start_frame, end_frame_exclusive,
// token_text, label in {COMMA, PERIOD, QUESTION, NONE}. Fields separated by
// horizontal whitespace; lines starting with '#' are ignored.
// ---------------------------------------------------------------------------

// Throws ParseError (with line number) or InvariantViolation (which rule).
AlignmentTable read_alignment(const std::filesystem::path& path);

void write_alignment(const AlignmentTable& table, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Posterior TSV
//
// One row per token transition: token_index, p_comma, p_fullstop, p_question,
// p_nopunct. '#' comment lines are ignored.
// ---------------------------------------------------------------------------

// Throws ParseError or NotAProbability (with row index).
std::vector<PosteriorRecord> read_posteriors(const std::filesystem::path& path);

void write_posteriors(const std::vector<PosteriorRecord>& records,
                      const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Manifest TSV: utterance_id, text_path, audio_path, align_path.
// Relative paths are resolved against the manifest's directory.
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string utterance_id;
    std::filesystem::path text_path;
    std::filesystem::path audio_path;
    std::filesystem::path align_path;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Writes entries with paths as given (callers pass paths relative to the
// manifest's directory to keep fixture trees relocatable).
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);

}  // namespace punct
