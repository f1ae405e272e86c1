#include "moa/text_embedder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <future>

#include <json.hpp>

#include "moa/errors.hpp"
#include "moa/hashing.hpp"
#include "moa/log.hpp"

namespace moa {

using nlohmann::json;

void EmbedderConfig::validate() const {
    if (kind == EmbedderKind::remote && (!endpoint || endpoint->empty())) {
        throw ValidationError("remote embedder requires an endpoint");
    }
    if (dimension < 8) throw ValidationError("embedder dimension must be >= 8");
    if (max_tokens < 1) throw ValidationError("embedder max_tokens must be >= 1");
    if (batch_size < 1) throw ValidationError("embedder batch_size must be >= 1");
}

EmbedderKind parse_embedder_kind(std::string_view text) {
    if (text == "hashed") return EmbedderKind::hashed;
    if (text == "remote") return EmbedderKind::remote;
    throw ValidationError("unknown embedder kind '" + std::string(text) + "'");
}

namespace {

bool blank(const std::string& text) {
    for (unsigned char c : text) {
        if (!std::isspace(c)) return false;
    }
    return true;
}

}  // namespace

std::string truncate_tokens(const std::string& text, std::size_t max_tokens, bool* truncated) {
    if (truncated) *truncated = false;
    std::size_t count = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i == text.size()) break;
        if (count == max_tokens) {
            if (truncated) *truncated = true;
            auto end = i;
            while (end > 0 && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
            return text.substr(0, end);
        }
        ++count;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    }
    return text;
}

HashedEmbedder::HashedEmbedder(std::size_t dimension, std::size_t max_tokens)
    : dimension_(dimension), max_tokens_(max_tokens) {
    if (dimension_ < 8) throw ValidationError("embedder dimension must be >= 8");
    if (max_tokens_ < 1) throw ValidationError("embedder max_tokens must be >= 1");
}

std::string HashedEmbedder::id() const { return "hashed-" + std::to_string(dimension_); }

std::vector<double> HashedEmbedder::embed_one(const std::string& raw) const {
    if (blank(raw)) throw PreconditionError("cannot embed empty text");
    bool truncated = false;
    const std::string text = truncate_tokens(raw, max_tokens_, &truncated);
    if (truncated) log::warn("embed_truncated", {{"max_tokens", max_tokens_}});

    std::vector<double> v(dimension_, 0.0);
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        v[fnv1a64(token) % dimension_] += 1.0;
        token.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            token += static_cast<char>(std::tolower(c));
        } else {
            flush();
        }
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) throw PreconditionError("text has no alphanumeric tokens to embed");
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::vector<std::vector<double>> HashedEmbedder::embed_texts(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

RemoteEmbedder::RemoteEmbedder(EmbedderConfig config, std::shared_ptr<http::Transport> transport,
                               std::shared_ptr<http::RateLimiter> limiter)
    : config_(std::move(config)), transport_(std::move(transport)), limiter_(std::move(limiter)) {
    config_.validate();
    if (!transport_) throw PreconditionError("remote embedder needs a transport");
}

std::string RemoteEmbedder::id() const { return "remote:" + config_.endpoint.value_or(""); }

std::vector<std::vector<double>> RemoteEmbedder::embed_texts(const std::vector<std::string>& texts) {
    for (const auto& t : texts) {
        if (blank(t)) throw PreconditionError("cannot embed empty text");
    }
    http::Request request;
    request.method = "POST";
    request.url = *config_.endpoint;
    request.headers["Content-Type"] = "application/json";
    request.body = json{{"texts", texts}}.dump();
    const auto outcome = http::send_with_retry(*transport_, request, config_.retry, limiter_.get());
    if (outcome.response.status != 200) {
        throw Error("embedding endpoint returned HTTP " + std::to_string(outcome.response.status));
    }
    std::vector<std::vector<double>> vectors;
    try {
        const auto body = json::parse(outcome.response.body);
        vectors = body.at("vectors").get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed embedding response: ") + e.what());
    }
    if (vectors.size() != texts.size()) {
        throw ParseError("embedding response has " + std::to_string(vectors.size()) +
                         " vectors for " + std::to_string(texts.size()) + " texts");
    }
    for (const auto& v : vectors) {
        if (v.size() != config_.dimension) {
            throw DimensionError("embedding response vector has dimension " +
                                 std::to_string(v.size()) + ", expected " +
                                 std::to_string(config_.dimension));
        }
        for (double x : v) {
            if (!std::isfinite(x)) throw ParseError("embedding response has a non-finite value");
        }
    }
    return vectors;
}

std::unique_ptr<TextEmbedder> make_embedder(const EmbedderConfig& config,
                                            std::shared_ptr<http::Transport> transport,
                                            std::shared_ptr<http::RateLimiter> limiter) {
    config.validate();
    if (config.kind == EmbedderKind::hashed) {
        return std::make_unique<HashedEmbedder>(config.dimension, config.max_tokens);
    }
    return std::make_unique<RemoteEmbedder>(config, std::move(transport), std::move(limiter));
}

Embedding embed_text(TextEmbedder& embedder, const std::string& id, const std::string& text,
                     Modality modality) {
    if (blank(text)) throw PreconditionError("cannot embed empty text for '" + id + "'");
    auto vectors = embedder.embed_texts({text});
    Embedding e{id, std::move(vectors.at(0)), modality};
    e.validate();
    return e;
}

std::vector<Embedding> embed_batch(TextEmbedder& embedder,
                                   const std::vector<std::pair<std::string, std::string>>& items,
                                   Modality modality, std::size_t batch_size,
                                   std::size_t max_concurrency) {
    std::vector<std::string> failing;
    for (const auto& [id, text] : items) {
        if (blank(text)) failing.push_back(id);
    }
    auto fail = [&](const std::string& why) {
        std::string ids;
        for (const auto& id : failing) ids += (ids.empty() ? "" : ", ") + id;
        throw Error("embed_batch failed for: " + ids + (why.empty() ? "" : " (" + why + ")"));
    };
    if (!failing.empty()) fail("empty text");

    batch_size = std::max<std::size_t>(1, batch_size);
    max_concurrency = std::max<std::size_t>(1, max_concurrency);
    const std::size_t n_batches = (items.size() + batch_size - 1) / batch_size;
    std::vector<std::vector<std::vector<double>>> results(n_batches);
    std::vector<std::string> errors(n_batches);

    auto run_batch = [&](std::size_t b) {
        std::vector<std::string> texts;
        for (std::size_t i = b * batch_size; i < std::min(items.size(), (b + 1) * batch_size); ++i) {
            texts.push_back(items[i].second);
        }
        try {
            results[b] = embedder.embed_texts(texts);
        } catch (const std::exception& e) {
            errors[b] = e.what();
        }
    };
    for (std::size_t start = 0; start < n_batches; start += max_concurrency) {
        const std::size_t stop = std::min(n_batches, start + max_concurrency);
        if (stop - start == 1) {
            run_batch(start);
            continue;
        }
        std::vector<std::future<void>> inflight;
        for (std::size_t b = start; b < stop; ++b) {
            inflight.push_back(std::async(std::launch::async, run_batch, b));
        }
        for (auto& f : inflight) f.get();
    }

    std::string first_error;
    for (std::size_t b = 0; b < n_batches; ++b) {
        if (errors[b].empty()) continue;
        if (first_error.empty()) first_error = errors[b];
        for (std::size_t i = b * batch_size; i < std::min(items.size(), (b + 1) * batch_size); ++i) {
            failing.push_back(items[i].first);
        }
    }
    if (!failing.empty()) fail(first_error);

    std::vector<Embedding> out;
    out.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        Embedding e{items[i].first, std::move(results[i / batch_size][i % batch_size]), modality};
        e.validate();
        out.push_back(std::move(e));
    }
    return out;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace moa
