#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sidetect/error.hpp"
#include "sidetect/records.hpp"

namespace sidetect::generation {

// Placeholders: {source_text}, {source_language}, {target_language}.
struct PromptTemplate {
    std::string template_id;
    Task task = Task::summarization;
    std::string text_pattern;
};

// Throws ConfigError when the pattern uses an unknown placeholder.
PromptTemplate make_template(std::string template_id, Task task, std::string text_pattern);

// One template per task; qa passes the question through unchanged.
std::vector<PromptTemplate> default_templates();
const PromptTemplate& template_for(const std::vector<PromptTemplate>& templates, Task task);

// Throws DataError on a task mismatch or an unbound placeholder.
std::string render_prompt(const PromptTemplate& tmpl, const PairRecord& pair);

struct GenerationRequest {
    std::string pair_id;
    std::string prompt;
    std::string model_id;
    json params = json::object();
};

// SHA-256 over model id, prompt and the canonical (key-sorted) params.
std::string cache_key(std::string_view model_id, std::string_view prompt, const json& params);

class TransientError : public Error {
public:
    using Error::Error;
};

class PermanentError : public Error {
public:
    using Error::Error;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    // Returns the completion text. Throws TransientError for retryable
    // failures (timeouts, 429, 5xx) and PermanentError otherwise.
    virtual std::string complete(const GenerationRequest& request) = 0;
    // Number of completion calls attempted so far.
    virtual size_t calls() const = 0;
};

struct HttpClientConfig {
    std::string url = "https://api.openai.com/v1/chat/completions";
    std::string api_key_env = "DETECT_API_KEY";
    std::chrono::seconds timeout{60};
};

// OpenAI-compatible chat-completion endpoint.
class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(HttpClientConfig config);
    std::string complete(const GenerationRequest& request) override;
    size_t calls() const override { return calls_.load(); }

    static json request_body(const GenerationRequest& request);
    // Extracts choices[0].message.content; throws PermanentError otherwise.
    static std::string parse_response(const std::string& body);

private:
    HttpClientConfig config_;
    std::string api_key_;
    std::string scheme_host_;
    std::string path_;
    std::atomic<size_t> calls_{0};
};

// Deterministic rule-based stand-in for a hosted model. Output depends only
// on the prompt, so mock builds are reproducible without network access.
class MockChatClient : public ChatClient {
public:
    std::string complete(const GenerationRequest& request) override;
    size_t calls() const override { return calls_.load(); }

    static std::string respond(std::string_view prompt);

private:
    std::atomic<size_t> calls_{0};
};

// Append-only JSONL journal of GenerationRecords keyed by cache_key. An empty
// path keeps the cache in memory only. Safe for concurrent use.
class GenerationCache {
public:
    GenerationCache() = default;
    explicit GenerationCache(std::filesystem::path journal);

    std::optional<GenerationRecord> find(const std::string& key) const;
    void put(const GenerationRecord& record);
    size_t size() const;

private:
    std::filesystem::path journal_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, GenerationRecord> records_;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_delay{250};
    double multiplier = 2.0;
    std::chrono::milliseconds max_delay{8000};
};

struct GenerateOptions {
    RetryPolicy retry;
    std::vector<std::string> refusal_markers{"I'm sorry", "作为一个AI"};
    // Called before every network attempt (rate limiting hook).
    std::function<void()> before_call;
    // ISO-8601 timestamp source; defaults to the system clock.
    std::function<std::string()> now;
};

std::string utc_timestamp();

// Cache hits return the stored record without calling the client. Misses are
// retried with exponential backoff on transient failures; exhausted retries
// or permanent failures yield a status=error record instead of throwing.
// ok and refused records are persisted, error records are not.
GenerationRecord generate(ChatClient& client, GenerationCache& cache,
                          const GenerationRequest& request, const GenerateOptions& options = {});

// Spaces calls at least 1/rate seconds apart. rate <= 0 disables limiting.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_second);
    void acquire();

private:
    std::mutex mutex_;
    std::chrono::steady_clock::duration interval_{};
    std::chrono::steady_clock::time_point next_{};
};

struct BatchOptions {
    int parallelism = 4;
    double rate_per_second = 0.0;
    GenerateOptions generate;
};

// Output order matches input order; at most `parallelism` calls in flight.
std::vector<GenerationRecord> batch_generate(ChatClient& client, GenerationCache& cache,
                                             const std::vector<GenerationRequest>& requests,
                                             const BatchOptions& options);

}  // namespace sidetect::generation
