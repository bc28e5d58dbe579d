#include "punct/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "punct/detail/bytes.hpp"

namespace punct {

namespace {

using detail::load_f32le;
using detail::load_u32le;
using detail::store_f32le;
using detail::store_u32le;

std::string loc(const std::filesystem::path& path, size_t byte) {
    return path.string() + ": byte " + std::to_string(byte);
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw IoFailure("read failed on " + path.string());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const unsigned char* data, size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
    out.flush();
    if (!out) throw IoFailure("write failed on " + path.string());
}

// Splits a line on runs of horizontal whitespace.
std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == '\t' || line[i] == ' ' || line[i] == '\r')) ++i;
        size_t start = i;
        while (i < line.size() && line[i] != '\t' && line[i] != ' ' && line[i] != '\r') ++i;
        if (i > start) fields.push_back(line.substr(start, i - start));
    }
    return fields;
}

long parse_long(const std::string& s, const std::string& where) {
    size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(s, &pos);
    } catch (const std::exception&) {
        throw ParseError(where + ": expected integer, got '" + s + "'");
    }
    if (pos != s.size()) throw ParseError(where + ": expected integer, got '" + s + "'");
    return v;
}

double parse_double(const std::string& s, const std::string& where) {
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ParseError(where + ": expected number, got '" + s + "'");
    }
    if (pos != s.size()) throw ParseError(where + ": expected number, got '" + s + "'");
    return v;
}

}  // namespace

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    std::vector<unsigned char> bytes = read_file_bytes(path);
    if (bytes.size() < kEmbHeaderSize) {
        if (bytes.size() < sizeof(kEmbMagic) &&
            std::memcmp(bytes.data(), kEmbMagic, bytes.size()) == 0)
            throw TruncatedFile(loc(path, bytes.size()) + ": header ends early, need " +
                                std::to_string(kEmbHeaderSize) + " bytes");
        if (bytes.size() >= sizeof(kEmbMagic) &&
            std::memcmp(bytes.data(), kEmbMagic, sizeof(kEmbMagic)) == 0)
            throw TruncatedFile(loc(path, bytes.size()) + ": header ends early, need " +
                                std::to_string(kEmbHeaderSize) + " bytes");
        throw BadMagic(loc(path, 0) + ": not an EPEMB01 file");
    }
    if (std::memcmp(bytes.data(), kEmbMagic, sizeof(kEmbMagic)) != 0)
        throw BadMagic(loc(path, 0) + ": not an EPEMB01 file");

    unsigned char kind_byte = bytes[8];
    if (kind_byte > 1) throw BadMagic(loc(path, 8) + ": unknown embedding kind");
    uint32_t rows = load_u32le(bytes.data() + 9);
    uint32_t cols = load_u32le(bytes.data() + 13);
    size_t expected = kEmbHeaderSize + 4ull * rows * cols;
    if (bytes.size() < expected)
        throw TruncatedFile(loc(path, bytes.size()) + ": file ends early, expected " +
                            std::to_string(expected) + " bytes");
    if (bytes.size() > expected)
        throw TruncatedFile(loc(path, expected) + ": trailing bytes, expected exactly " +
                            std::to_string(expected) + " bytes");

    EmbeddingMatrix m;
    m.kind = kind_byte == 0 ? EmbeddingKind::Text : EmbeddingKind::Audio;
    m.m.rows = static_cast<int>(rows);
    m.m.cols = static_cast<int>(cols);
    m.m.data.resize(static_cast<size_t>(rows) * cols);
    for (size_t i = 0; i < m.m.data.size(); ++i) {
        float v = load_f32le(bytes.data() + kEmbHeaderSize + 4 * i);
        if (!std::isfinite(v))
            throw NonFiniteValue(loc(path, kEmbHeaderSize + 4 * i) + ": non-finite float");
        m.m.data[i] = v;
    }
    return m;
}

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    if (m.rows() <= 0 || m.cols() < 0 ||
        m.m.data.size() != static_cast<size_t>(m.rows()) * m.cols())
        throw InvariantViolation("embedding matrix shape and data length disagree");
    for (float v : m.m.data)
        if (!std::isfinite(v)) throw InvariantViolation("refusing to write non-finite embedding");

    std::vector<unsigned char> bytes(kEmbHeaderSize + 4 * m.m.data.size());
    std::memcpy(bytes.data(), kEmbMagic, sizeof(kEmbMagic));
    bytes[8] = m.kind == EmbeddingKind::Text ? 0 : 1;
    store_u32le(bytes.data() + 9, static_cast<uint32_t>(m.rows()));
    store_u32le(bytes.data() + 13, static_cast<uint32_t>(m.cols()));
    for (size_t i = 0; i < m.m.data.size(); ++i)
        store_f32le(bytes.data() + kEmbHeaderSize + 4 * i, m.m.data[i]);
    write_file_bytes(path, bytes.data(), bytes.size());
}

AlignmentTable read_alignment(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path.string());

    AlignmentTable table;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.empty()) continue;
        std::string where = path.string() + ":" + std::to_string(line_no);
        if (fields.size() != 5) throw ParseError(where + ": expected 5 fields, got " +
                                                 std::to_string(fields.size()));
        AlignmentEntry e;
        e.token_index = static_cast<int>(parse_long(fields[0], where));
        e.start_frame = static_cast<int>(parse_long(fields[1], where));
        e.end_frame = static_cast<int>(parse_long(fields[2], where));
        e.token_text = fields[3];
        try {
            e.label = punct_from_name(fields[4]);
        } catch (const ParseError& err) {
            throw ParseError(where + ": " + err.what());
        }
        table.entries.push_back(std::move(e));
    }
    table.check();
    return table;
}

void write_alignment(const AlignmentTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out << "# token_index\tstart_frame\tend_frame_exclusive\ttoken_text\tlabel\n";
    for (const AlignmentEntry& e : table.entries) {
        out << e.token_index << '\t' << e.start_frame << '\t' << e.end_frame << '\t'
            << e.token_text << '\t' << punct_name(e.label) << '\n';
    }
    out.flush();
    if (!out) throw IoFailure("write failed on " + path.string());
}

std::vector<PosteriorRecord> read_posteriors(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path.string());

    std::vector<PosteriorRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.empty()) continue;
        std::string where = path.string() + ":" + std::to_string(line_no);
        if (fields.size() != 5) throw ParseError(where + ": expected 5 fields, got " +
                                                 std::to_string(fields.size()));
        PosteriorRecord rec;
        rec.token_index = static_cast<int>(parse_long(fields[0], where));
        for (int k = 0; k < 4; ++k) rec.probs[k] = parse_double(fields[1 + k], where);
        if (!rec.valid())
            throw NotAProbability("row " + std::to_string(records.size()) + " (" + where +
                                  "): entries must lie in [0,1] and sum to 1");
        records.push_back(rec);
    }
    return records;
}

void write_posteriors(const std::vector<PosteriorRecord>& records,
                      const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out << "# token_index\tp_comma\tp_fullstop\tp_question\tp_nopunct\n";
    out.precision(17);
    for (const PosteriorRecord& r : records) {
        out << r.token_index;
        for (double p : r.probs) out << '\t' << p;
        out << '\n';
    }
    out.flush();
    if (!out) throw IoFailure("write failed on " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path.string());
    std::filesystem::path base = path.parent_path();

    auto resolve = [&base](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != 4)
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": expected 4 fields (utterance_id, text, audio, alignment), got " +
                             std::to_string(fields.size()));
        entries.push_back({fields[0], resolve(fields[1]), resolve(fields[2]), resolve(fields[3])});
    }
    return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out << "# utterance_id\ttext_embeddings\taudio_embeddings\talignment\n";
    for (const ManifestEntry& e : entries) {
        out << e.utterance_id << '\t' << e.text_path.string() << '\t' << e.audio_path.string()
            << '\t' << e.align_path.string() << '\n';
    }
    out.flush();
    if (!out) throw IoFailure("write failed on " + path.string());
}

}  // namespace punct
