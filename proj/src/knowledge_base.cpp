#include "moa/knowledge_base.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include <json.hpp>

#include "moa/errors.hpp"
#include "moa/io.hpp"
#include "moa/log.hpp"

namespace moa::kb {

using nlohmann::json;

const std::vector<std::string>& default_keywords() {
    static const std::vector<std::string> keywords = {"glioma", "oligodendroglioma", "astrocytoma",
                                                      "IDH"};
    return keywords;
}

namespace {

std::string lower(std::string_view text) {
    std::string out(text);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// Byte offsets of every UTF-8 code point start, plus the end offset.
std::vector<std::size_t> code_point_offsets(const std::string& text) {
    std::vector<std::size_t> offsets;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) offsets.push_back(i);
    }
    offsets.push_back(text.size());
    return offsets;
}

}  // namespace

std::vector<Document> filter_corpus(const std::vector<Document>& docs,
                                    const std::vector<std::string>& keywords) {
    if (keywords.empty()) throw PreconditionError("filter_corpus: keyword list is empty");
    std::vector<std::string> needles;
    for (const auto& k : keywords) needles.push_back(lower(k));
    std::vector<Document> out;
    for (const auto& doc : docs) {
        const std::string haystack = lower(doc.title) + "\n" + lower(doc.body);
        const bool hit = std::any_of(needles.begin(), needles.end(), [&](const std::string& n) {
            return haystack.find(n) != std::string::npos;
        });
        if (hit) out.push_back(doc);
    }
    return out;
}

std::string make_chunk_id(const std::string& doc_id, std::size_t ordinal) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", ordinal);
    return doc_id + "#" + buf;
}

std::vector<Chunk> chunk_document(const Document& doc, std::size_t chunk_size, std::size_t overlap) {
    if (chunk_size == 0 || overlap >= chunk_size) {
        throw PreconditionError("chunk_document: need 0 <= overlap < chunk_size");
    }
    const auto offsets = code_point_offsets(doc.body);
    const std::size_t length = offsets.size() - 1;
    const std::size_t stride = chunk_size - overlap;
    std::vector<Chunk> out;
    auto emit = [&](std::size_t start) {
        const std::size_t stop = std::min(length, start + chunk_size);
        out.push_back({make_chunk_id(doc.doc_id, out.size()), doc.doc_id, doc.title,
                       doc.body.substr(offsets[start], offsets[stop] - offsets[start]), {}});
    };
    if (length <= chunk_size) {
        emit(0);
        return out;
    }
    for (std::size_t start = 0; start < length; start += stride) emit(start);
    return out;
}

std::vector<Document> load_corpus(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("corpus directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".txt" || ext == ".md")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Document> docs;
    for (const auto& file : files) {
        const std::string text = io::read_file(file);
        Document doc{file.stem().string(), "", ""};
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto eol = text.find('\n', pos);
            if (eol == std::string::npos) eol = text.size();
            std::string line = text.substr(pos, eol - pos);
            pos = eol + 1;
            auto first = line.find_first_not_of(" \t\r#");
            if (first == std::string::npos) continue;
            auto last = line.find_last_not_of(" \t\r");
            doc.title = line.substr(first, last - first + 1);
            break;
        }
        if (pos < text.size()) doc.body = text.substr(pos);
        doc.body.erase(doc.body.find_last_not_of(" \t\r\n") + 1);
        if (doc.body.find_first_not_of(" \t\r\n") == std::string::npos) doc.body = doc.title;
        if (doc.body.empty()) {
            log::warn("corpus_empty_document", {{"file", file.string()}});
            continue;
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

Index::Index(std::string embedder_id, std::size_t dimension, std::vector<Chunk> chunks)
    : embedder_id_(std::move(embedder_id)), dimension_(dimension), chunks_(std::move(chunks)) {
    for (const auto& c : chunks_) {
        if (c.vector.size() != dimension_) {
            throw DimensionError("chunk " + c.chunk_id + " has dimension " +
                                 std::to_string(c.vector.size()) + ", index expects " +
                                 std::to_string(dimension_));
        }
    }
}

Index Index::build(std::vector<Chunk> chunks, TextEmbedder& embedder) {
    for (auto& c : chunks) {
        try {
            c.vector = embedder.embed_texts({c.text}).at(0);
        } catch (const std::exception& e) {
            throw Error("embedding failed for chunk " + c.chunk_id + ": " + e.what());
        }
    }
    return Index(embedder.id(), embedder.dimension(), std::move(chunks));
}

void Index::save(const std::filesystem::path& path) const {
    std::string text = io::dump_line({{"kind", "moa-kb-index"},
                                      {"embedder", embedder_id_},
                                      {"dimension", dimension_},
                                      {"chunks", chunks_.size()}}) +
                       "\n";
    for (const auto& c : chunks_) {
        text += io::dump_line({{"chunk_id", c.chunk_id},
                               {"doc_id", c.doc_id},
                               {"title", c.title},
                               {"text", c.text},
                               {"vector", c.vector}});
        text += '\n';
    }
    io::write_file(path, text);
}

Index Index::load(const std::filesystem::path& path) {
    std::string embedder_id;
    std::size_t dimension = 0;
    bool header = false;
    std::vector<Chunk> chunks;
    io::for_each_jsonl(path, [&](std::size_t line, const json& record) {
        try {
            if (!header) {
                if (record.value("kind", "") != "moa-kb-index") throw ParseError("missing index header");
                embedder_id = record.at("embedder").get<std::string>();
                dimension = record.at("dimension").get<std::size_t>();
                header = true;
                return;
            }
            chunks.push_back({record.at("chunk_id").get<std::string>(),
                              record.at("doc_id").get<std::string>(),
                              record.value("title", ""), record.at("text").get<std::string>(),
                              record.at("vector").get<std::vector<double>>()});
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
    });
    if (!header) throw ParseError(path.string() + ": empty index file");
    return Index(std::move(embedder_id), dimension, std::move(chunks));
}

std::vector<ScoredChunk> Index::retrieve_vector(const std::vector<double>& query, std::size_t k) const {
    if (k < 1) throw PreconditionError("retrieve: k must be >= 1");
    if (chunks_.empty()) {
        log::warn("kb_empty_index");
        return {};
    }
    std::vector<ScoredChunk> scored;
    scored.reserve(chunks_.size());
    for (const auto& c : chunks_) scored.push_back({&c, cosine_similarity(query, c.vector)});
    const auto cmp = [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk->chunk_id < b.chunk->chunk_id;
    };
    const std::size_t top = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(top), scored.end(), cmp);
    scored.resize(top);
    return scored;
}

std::vector<ScoredChunk> Index::retrieve(const std::string& query, std::size_t k,
                                         TextEmbedder& embedder) const {
    if (chunks_.empty()) {
        log::warn("kb_empty_index");
        return {};
    }
    if (embedder.dimension() != dimension_) {
        throw DimensionError("query embedder dimension " + std::to_string(embedder.dimension()) +
                             " does not match index dimension " + std::to_string(dimension_));
    }
    return retrieve_vector(embedder.embed_texts({query}).at(0), k);
}

Index build_from_corpus(const std::vector<Document>& corpus, const std::vector<std::string>& keywords,
                        TextEmbedder& embedder, std::size_t chunk_size, std::size_t overlap) {
    const auto kept = filter_corpus(corpus, keywords);
    log::info("kb_filter", {{"documents", corpus.size()}, {"retained", kept.size()}});
    std::vector<Chunk> chunks;
    for (const auto& doc : kept) {
        auto doc_chunks = chunk_document(doc, chunk_size, overlap);
        chunks.insert(chunks.end(), std::make_move_iterator(doc_chunks.begin()),
                      std::make_move_iterator(doc_chunks.end()));
    }
    return Index::build(std::move(chunks), embedder);
}

}  // namespace moa::kb
