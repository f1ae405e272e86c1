#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "moa/embedding.hpp"
#include "moa/http.hpp"

namespace moa {

enum class EmbedderKind { hashed, remote };

struct EmbedderConfig {
    EmbedderKind kind = EmbedderKind::hashed;
    std::optional<std::string> endpoint;
    std::size_t dimension = 768;
    std::size_t max_tokens = 8192;
    std::size_t batch_size = 16;
    std::size_t max_concurrency = 4;
    http::RetryPolicy retry;

    void validate() const;
};

EmbedderKind parse_embedder_kind(std::string_view text);

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    /// One vector per input text, in order.
    virtual std::vector<std::vector<double>> embed_texts(const std::vector<std::string>& texts) = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::string id() const = 0;
};

/// Bag of token hashes: lowercase, split on non-alphanumerics, FNV-1a into
/// `dimension` buckets, counts L2-normalized.
class HashedEmbedder final : public TextEmbedder {
public:
    explicit HashedEmbedder(std::size_t dimension = 768, std::size_t max_tokens = 8192);
    std::vector<std::vector<double>> embed_texts(const std::vector<std::string>& texts) override;
    std::vector<double> embed_one(const std::string& text) const;
    std::size_t dimension() const override { return dimension_; }
    std::string id() const override;

private:
    std::size_t dimension_;
    std::size_t max_tokens_;
};

/// POSTs {"texts": [...]} and expects {"vectors": [[...], ...]}.
class RemoteEmbedder final : public TextEmbedder {
public:
    RemoteEmbedder(EmbedderConfig config, std::shared_ptr<http::Transport> transport,
                   std::shared_ptr<http::RateLimiter> limiter = nullptr);
    std::vector<std::vector<double>> embed_texts(const std::vector<std::string>& texts) override;
    std::size_t dimension() const override { return config_.dimension; }
    std::string id() const override;

private:
    EmbedderConfig config_;
    std::shared_ptr<http::Transport> transport_;
    std::shared_ptr<http::RateLimiter> limiter_;
};

std::unique_ptr<TextEmbedder> make_embedder(const EmbedderConfig& config,
                                            std::shared_ptr<http::Transport> transport = nullptr,
                                            std::shared_ptr<http::RateLimiter> limiter = nullptr);

/// Keeps the first `max_tokens` whitespace-delimited tokens (original spacing preserved).
/// Returns the input unchanged when it is within the limit.
std::string truncate_tokens(const std::string& text, std::size_t max_tokens, bool* truncated = nullptr);

Embedding embed_text(TextEmbedder& embedder, const std::string& id, const std::string& text,
                     Modality modality = Modality::report);

/// Order-preserving. Items with empty text, or items whose remote batch failed, are
/// reported together in one error; no partial results are returned.
std::vector<Embedding> embed_batch(TextEmbedder& embedder,
                                   const std::vector<std::pair<std::string, std::string>>& items,
                                   Modality modality = Modality::report,
                                   std::size_t batch_size = 16, std::size_t max_concurrency = 1);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace moa
