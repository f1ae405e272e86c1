#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace moa::http {

struct Request {
    std::string method = "GET";
    std::string url;  // absolute, e.g. https://host/path?query
    std::map<std::string, std::string> headers;
    std::string body;
};

struct Response {
    int status = 0;
    std::string body;
};

/// Sends one request. Implementations throw TransportError when no HTTP
/// response was obtained; HTTP error statuses are returned, not thrown.
class Transport {
public:
    virtual ~Transport() = default;
    virtual Response send(const Request& request) = 0;
};

/// Real network transport (cpp-httplib, TLS via OpenSSL).
class LiveTransport final : public Transport {
public:
    explicit LiveTransport(std::chrono::milliseconds timeout = std::chrono::seconds(30));
    Response send(const Request& request) override;

private:
    std::chrono::milliseconds timeout_;
};

/// Fails every call: installed whenever the process runs with --offline.
class OfflineGuard final : public Transport {
public:
    Response send(const Request& request) override;
};

/// Minimum spacing between calls to one service, shared across threads.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_second);
    void acquire();

private:
    std::mutex mutex_;
    std::chrono::steady_clock::duration interval_;
    std::chrono::steady_clock::time_point next_{};
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
};

struct RetryOutcome {
    Response response;
    int attempts = 0;
};

/// Retries only on TransportError, doubling the backoff between attempts.
/// Rethrows the last TransportError (annotated with the attempt count) when exhausted.
RetryOutcome send_with_retry(Transport& transport, const Request& request,
                             const RetryPolicy& policy, RateLimiter* limiter = nullptr);

/// Percent-encodes a query component.
std::string url_encode(const std::string& value);

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // /path?query
};
SplitUrl split_url(const std::string& url);

}  // namespace moa::http
