#include "sidetect/generation.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "sidetect/text.hpp"

namespace sidetect::generation {

namespace {

const std::vector<std::string> kPlaceholders{"source_text", "source_language", "target_language"};

// Returns the placeholder names in order of appearance.
std::vector<std::string> placeholders_in(std::string_view pattern) {
    std::vector<std::string> out;
    size_t pos = 0;
    while ((pos = pattern.find('{', pos)) != std::string_view::npos) {
        size_t end = pattern.find('}', pos);
        if (end == std::string_view::npos) break;
        out.emplace_back(pattern.substr(pos + 1, end - pos - 1));
        pos = end + 1;
    }
    return out;
}

std::string language_name(Language language) {
    return language == Language::zh ? "Chinese" : "English";
}

}  // namespace

PromptTemplate make_template(std::string template_id, Task task, std::string text_pattern) {
    for (const auto& name : placeholders_in(text_pattern)) {
        if (std::find(kPlaceholders.begin(), kPlaceholders.end(), name) == kPlaceholders.end()) {
            throw ConfigError("template '" + template_id + "' uses unknown placeholder {" + name + "}");
        }
    }
    if (text::trim(text_pattern).empty()) {
        throw ConfigError("template '" + template_id + "' is empty");
    }
    return PromptTemplate{std::move(template_id), task, std::move(text_pattern)};
}

std::vector<PromptTemplate> default_templates() {
    return {
        make_template("qa", Task::qa, "{source_text}"),
        make_template("translation", Task::translation,
                      "Translate the following {source_language} text into {target_language}: {source_text}"),
        make_template("summarization", Task::summarization,
                      "Summarize the following article: {source_text}"),
        make_template("paraphrasing", Task::paraphrasing,
                      "Paraphrase the following question, keeping its meaning unchanged: {source_text}"),
    };
}

const PromptTemplate& template_for(const std::vector<PromptTemplate>& templates, Task task) {
    for (const auto& t : templates)
        if (t.task == task) return t;
    throw ConfigError("no prompt template for task " + std::string(to_string(task)));
}

std::string render_prompt(const PromptTemplate& tmpl, const PairRecord& pair) {
    if (tmpl.task != pair.task) {
        throw DataError("template '" + tmpl.template_id + "' is for task " +
                        std::string(to_string(tmpl.task)) + ", pair " + pair.pair_id + " is " +
                        std::string(to_string(pair.task)));
    }
    auto binding = [&](const std::string& name) -> std::string {
        if (name == "source_text") return pair.source_text;
        if (name == "source_language") {
            auto it = pair.extra.find("source_language");
            if (it == pair.extra.end() || it->second.empty())
                throw DataError("pair " + pair.pair_id + " has no source_language for the prompt");
            return it->second;
        }
        auto it = pair.extra.find("target_language");
        if (it != pair.extra.end() && !it->second.empty()) return it->second;
        return language_name(pair.language);
    };
    std::string out;
    const std::string& p = tmpl.text_pattern;
    size_t pos = 0;
    while (pos < p.size()) {
        size_t open = p.find('{', pos);
        size_t close = open == std::string::npos ? open : p.find('}', open);
        if (close == std::string::npos) {
            out.append(p, pos);
            break;
        }
        out.append(p, pos, open - pos);
        out += binding(p.substr(open + 1, close - open - 1));
        pos = close + 1;
    }
    return out;
}

std::string cache_key(std::string_view model_id, std::string_view prompt, const json& params) {
    // nlohmann::json sorts object keys, so the dump is canonical.
    nlohmann::json canonical = nlohmann::json::parse(params.dump());
    std::string material;
    material.append(model_id).push_back('\0');
    material.append(prompt).push_back('\0');
    material += canonical.dump();
    return io::sha256_hex(material);
}

// --- HTTP client ---

HttpChatClient::HttpChatClient(HttpClientConfig config) : config_(std::move(config)) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key) throw ConfigError("environment variable " + config_.api_key_env + " is not set");
    api_key_ = key;
    auto scheme_end = config_.url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint url has no scheme: " + config_.url);
    auto path_start = config_.url.find('/', scheme_end + 3);
    scheme_host_ = config_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.url.substr(path_start);
}

json HttpChatClient::request_body(const GenerationRequest& request) {
    json body = {{"model", request.model_id},
                 {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})}};
    for (const auto& [k, v] : request.params.items()) body[k] = v;
    return body;
}

std::string HttpChatClient::parse_response(const std::string& body) {
    try {
        auto j = json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw PermanentError(std::string("malformed completion response: ") + e.what());
    }
}

std::string HttpChatClient::complete(const GenerationRequest& request) {
    ++calls_;
    httplib::Client client(scheme_host_);
    auto seconds = static_cast<time_t>(config_.timeout.count());
    client.set_connection_timeout(seconds);
    client.set_read_timeout(seconds);
    client.set_bearer_token_auth(api_key_);
    auto res = client.Post(path_, request_body(request).dump(), "application/json");
    if (!res) throw TransientError("request failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        throw TransientError("endpoint returned HTTP " + std::to_string(res->status));
    if (res->status != 200)
        throw PermanentError("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
    return parse_response(res->body);
}

// --- Mock client ---

namespace {

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

std::string after_colon(std::string_view prompt) {
    auto pos = prompt.find(": ");
    return text::trim(pos == std::string_view::npos ? prompt : prompt.substr(pos + 2));
}

std::string first_words(const std::vector<std::string>& words, size_t n) {
    std::vector<std::string> head(words.begin(), words.begin() + std::min(n, words.size()));
    return text::join(head, " ");
}

std::string lower_first(std::string s) {
    if (!s.empty() && s[0] >= 'A' && s[0] <= 'Z') s[0] = static_cast<char>(s[0] - 'A' + 'a');
    return s;
}

}  // namespace

std::string MockChatClient::respond(std::string_view prompt) {
    if (prompt.find("[refuse]") != std::string_view::npos)
        return "I'm sorry, but I can't help with that request.";
    std::string body = after_colon(prompt);
    auto words = text::whitespace_tokens(body);
    if (starts_with(prompt, "Summarize the following article")) {
        auto stop = body.find_first_of(".!?");
        std::string lead = stop == std::string::npos ? first_words(words, 20) : body.substr(0, stop);
        return "The article explains that " + lower_first(text::trim(lead)) + ".";
    }
    if (starts_with(prompt, "Translate the following")) {
        bool to_chinese = prompt.find("into Chinese") != std::string_view::npos;
        if (to_chinese) return "译文：" + body;
        std::vector<std::string> rev(words.rbegin(), words.rend());
        return "In translation: " + text::join(rev, " ");
    }
    if (starts_with(prompt, "Paraphrase the following question")) {
        return "Put differently, " + lower_first(body);
    }
    if (words.empty()) return "I would be glad to help.";
    return "Here is a detailed answer. Regarding \"" + first_words(words, 12) +
           "\", there are several points to consider.";
}

std::string MockChatClient::complete(const GenerationRequest& request) {
    ++calls_;
    return respond(request.prompt);
}

// --- Cache ---

GenerationCache::GenerationCache(std::filesystem::path journal) : journal_(std::move(journal)) {
    if (!std::filesystem::exists(journal_)) return;
    std::ifstream in(journal_);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            auto record = generation_from_json(json::parse(line));
            records_[record.cache_key] = std::move(record);
        } catch (const json::exception&) {
            // A torn final line from an interrupted run is skipped.
            if (in.peek() != EOF) {
                throw DataError(journal_.string() + ":" + std::to_string(line_no) + ": malformed journal line");
            }
        }
    }
}

std::optional<GenerationRecord> GenerationCache::find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = records_.find(key);
    if (it == records_.end()) return std::nullopt;
    return it->second;
}

void GenerationCache::put(const GenerationRecord& record) {
    std::lock_guard lock(mutex_);
    if (!journal_.empty()) {
        if (journal_.has_parent_path()) std::filesystem::create_directories(journal_.parent_path());
        std::ofstream out(journal_, std::ios::app);
        out << to_json(record).dump() << '\n';
        out.flush();
        if (!out) throw Error("cannot append to generation cache " + journal_.string());
    }
    records_[record.cache_key] = record;
}

size_t GenerationCache::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

// --- generate ---

std::string utc_timestamp() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

GenerationRecord generate(ChatClient& client, GenerationCache& cache, const GenerationRequest& request,
                          const GenerateOptions& options) {
    std::string key = cache_key(request.model_id, request.prompt, request.params);
    if (auto hit = cache.find(key)) return *hit;

    GenerationRecord record;
    record.pair_id = request.pair_id;
    record.prompt = request.prompt;
    record.model_id = request.model_id;
    record.params = request.params;
    record.cache_key = key;

    auto delay = options.retry.base_delay;
    while (true) {
        try {
            if (options.before_call) options.before_call();
            record.output = client.complete(request);
            break;
        } catch (const TransientError& e) {
            if (record.retries >= options.retry.max_retries) {
                record.status = GenerationStatus::error;
                record.error_message = e.what();
                break;
            }
            ++record.retries;
            std::this_thread::sleep_for(delay);
            auto next = std::chrono::duration<double, std::milli>(delay) * options.retry.multiplier;
            delay = std::min(options.retry.max_delay,
                             std::chrono::duration_cast<std::chrono::milliseconds>(next));
        } catch (const std::exception& e) {
            record.status = GenerationStatus::error;
            record.error_message = e.what();
            break;
        }
    }
    record.created_at = options.now ? options.now() : utc_timestamp();
    if (!record.error_message.empty()) return record;

    if (text::trim(record.output).empty()) {
        record.status = GenerationStatus::error;
        record.error_message = "empty completion";
        return record;
    }
    record.status = GenerationStatus::ok;
    for (const auto& marker : options.refusal_markers) {
        if (!marker.empty() && record.output.find(marker) != std::string::npos) {
            record.status = GenerationStatus::refused;
            break;
        }
    }
    cache.put(record);
    return record;
}

RateLimiter::RateLimiter(double requests_per_second) {
    if (requests_per_second > 0) {
        interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / requests_per_second));
    }
}

void RateLimiter::acquire() {
    if (interval_.count() == 0) return;
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_);
        next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

std::vector<GenerationRecord> batch_generate(ChatClient& client, GenerationCache& cache,
                                             const std::vector<GenerationRequest>& requests,
                                             const BatchOptions& options) {
    if (options.parallelism < 1) throw ConfigError("parallelism must be at least 1");
    std::vector<GenerationRecord> out(requests.size());
    if (requests.empty()) return out;

    RateLimiter limiter(options.rate_per_second);
    GenerateOptions gen = options.generate;
    auto user_hook = gen.before_call;
    gen.before_call = [&limiter, user_hook] {
        limiter.acquire();
        if (user_hook) user_hook();
    };

    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next++; i < requests.size(); i = next++) {
            out[i] = generate(client, cache, requests[i], gen);
        }
    };
    size_t n_threads = std::min<size_t>(static_cast<size_t>(options.parallelism), requests.size());
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    return out;
}

}  // namespace sidetect::generation
