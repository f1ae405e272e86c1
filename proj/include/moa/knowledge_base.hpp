#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "moa/text_embedder.hpp"

namespace moa::kb {

struct Document {
    std::string doc_id;
    std::string title;
    std::string body;
};

struct Chunk {
    std::string chunk_id;  // "<doc_id>#<ordinal, 4 digits>"
    std::string doc_id;
    std::string title;
    std::string text;
    std::vector<double> vector;  // empty until indexed
};

inline constexpr std::size_t kDefaultChunkSize = 1000;
inline constexpr std::size_t kDefaultOverlap = 200;
inline constexpr std::size_t kDefaultTopK = 5;

const std::vector<std::string>& default_keywords();

/// Case-insensitive substring match of any keyword over title and body; order preserved.
std::vector<Document> filter_corpus(const std::vector<Document>& docs,
                                    const std::vector<std::string>& keywords);

/// Character (code point) windows of `chunk_size` starting every `chunk_size - overlap`.
/// A body no longer than `chunk_size` is a single chunk.
std::vector<Chunk> chunk_document(const Document& doc, std::size_t chunk_size = kDefaultChunkSize,
                                  std::size_t overlap = kDefaultOverlap);

std::string make_chunk_id(const std::string& doc_id, std::size_t ordinal);

/// Reads every regular *.txt / *.md file in `dir` (sorted by name). doc_id is the file
/// stem, the first non-blank line is the title (leading '#' stripped), the rest is the body.
std::vector<Document> load_corpus(const std::filesystem::path& dir);

struct ScoredChunk {
    const Chunk* chunk = nullptr;
    double score = 0.0;
};

class Index {
public:
    Index() = default;
    Index(std::string embedder_id, std::size_t dimension, std::vector<Chunk> chunks);

    /// Embeds every chunk; fails naming the first chunk the embedder rejects.
    static Index build(std::vector<Chunk> chunks, TextEmbedder& embedder);
    static Index load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    /// Top-k by cosine similarity, descending; ties by ascending chunk_id.
    std::vector<ScoredChunk> retrieve_vector(const std::vector<double>& query, std::size_t k) const;
    std::vector<ScoredChunk> retrieve(const std::string& query, std::size_t k,
                                      TextEmbedder& embedder) const;

    const std::vector<Chunk>& chunks() const { return chunks_; }
    std::size_t dimension() const { return dimension_; }
    const std::string& embedder_id() const { return embedder_id_; }
    bool empty() const { return chunks_.empty(); }

private:
    std::string embedder_id_;
    std::size_t dimension_ = 0;
    std::vector<Chunk> chunks_;
};

/// Filter, chunk and index in one step.
Index build_from_corpus(const std::vector<Document>& corpus, const std::vector<std::string>& keywords,
                        TextEmbedder& embedder, std::size_t chunk_size = kDefaultChunkSize,
                        std::size_t overlap = kDefaultOverlap);

}  // namespace moa::kb
