#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "moa/http.hpp"

#include <thread>

#include "moa/errors.hpp"
#include "moa/log.hpp"

namespace moa::http {

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw PreconditionError("not an absolute URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string url_encode(const std::string& value) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : value) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

LiveTransport::LiveTransport(std::chrono::milliseconds timeout) : timeout_(timeout) {}

Response LiveTransport::send(const Request& request) {
    const auto [origin, path] = split_url(request.url);
    httplib::Client client(origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_follow_location(true);
    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
        if (k == "Content-Type") {
            content_type = v;
        } else {
            headers.emplace(k, v);
        }
    }
    httplib::Result result = request.method == "POST"
                                 ? client.Post(path, headers, request.body, content_type)
                                 : client.Get(path, headers);
    if (!result) {
        throw TransportError(request.method + " " + origin + ": " +
                             httplib::to_string(result.error()));
    }
    return {result->status, result->body};
}

Response OfflineGuard::send(const Request& request) {
    throw OfflineViolation("network access disabled in offline mode (" + request.method + " " +
                         request.url + ")");
}

RateLimiter::RateLimiter(double requests_per_second)
    : interval_(requests_per_second > 0
                    ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                          std::chrono::duration<double>(1.0 / requests_per_second))
                    : std::chrono::steady_clock::duration::zero()) {}

void RateLimiter::acquire() {
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_);
        next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

RetryOutcome send_with_retry(Transport& transport, const Request& request,
                             const RetryPolicy& policy, RateLimiter* limiter) {
    auto backoff = policy.initial_backoff;
    const int attempts = std::max(1, policy.max_attempts);
    for (int attempt = 1;; ++attempt) {
        try {
            if (limiter) limiter->acquire();
            return {transport.send(request), attempt};
        } catch (const OfflineViolation&) {
            throw;
        } catch (const TransportError& e) {
            if (attempt >= attempts) {
                throw TransportError(std::string(e.what()) + " (after " + std::to_string(attempt) +
                                     " attempts)");
            }
            log::warn("http_retry", {{"url", request.url}, {"attempt", attempt}, {"error", e.what()}});
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
}

}  // namespace moa::http
