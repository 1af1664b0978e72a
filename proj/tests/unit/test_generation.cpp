#include <doctest.h>

#include <mutex>
#include <set>
#include <thread>

#include "sidetect/generation.hpp"
#include "sidetect/io.hpp"
#include "test_util.hpp"

using namespace sidetect;
using namespace sidetect::generation;
using sidetect::testing::fixture;
using sidetect::testing::TempDir;

namespace {

// Fails transiently `fail_first` times, then echoes `output`.
class ScriptedClient : public ChatClient {
public:
    ScriptedClient(std::string output, int fail_first = 0) : output_(std::move(output)), fail_(fail_first) {}
    std::string complete(const GenerationRequest&) override {
        std::lock_guard lock(m_);
        ++calls_;
        if (fail_ > 0) {
            --fail_;
            throw TransientError("scripted timeout");
        }
        return output_;
    }
    size_t calls() const override { return calls_; }

private:
    std::mutex m_;
    std::string output_;
    int fail_;
    size_t calls_ = 0;
};

// Tracks peak concurrency; pair ids listed in `permanent` fail permanently.
class ProbeClient : public ChatClient {
public:
    std::set<std::string> permanent;
    std::string complete(const GenerationRequest& r) override {
        int now = ++in_flight_;
        int peak = peak_.load();
        while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
        ++calls_;
        --in_flight_;
        if (permanent.count(r.pair_id)) throw PermanentError("scripted rejection");
        return "out:" + r.pair_id;
    }
    size_t calls() const override { return calls_; }
    int peak() const { return peak_; }

private:
    std::atomic<int> in_flight_{0}, peak_{0};
    std::atomic<size_t> calls_{0};
};

GenerateOptions fast_retry() {
    GenerateOptions o;
    o.retry.base_delay = std::chrono::milliseconds(1);
    o.retry.max_delay = std::chrono::milliseconds(4);
    o.now = [] { return std::string("2024-01-01T00:00:00Z"); };
    return o;
}

PairRecord pair(Task task, std::string source) {
    PairRecord p;
    p.pair_id = "p-0";
    p.task = task;
    p.source_text = std::move(source);
    p.human_target = "t";
    return p;
}

}  // namespace

TEST_CASE("default prompts render to the frozen golden file") {
    auto templates = default_templates();
    auto summ = pair(Task::summarization, "The council approved the new budget on Monday.");
    auto tr = pair(Task::translation, "Guten Morgen.");
    tr.extra["source_language"] = "German";
    auto para = pair(Task::paraphrasing, "How do I learn to swim?");
    auto qa = pair(Task::qa, "Why is the sky blue?");
    std::string rendered = render_prompt(template_for(templates, Task::summarization), summ) + "\n" +
                           render_prompt(template_for(templates, Task::translation), tr) + "\n" +
                           render_prompt(template_for(templates, Task::paraphrasing), para) + "\n" +
                           render_prompt(template_for(templates, Task::qa), qa) + "\n";
    CHECK(rendered == io::read_file(fixture("golden_rendered_prompts.txt")));
}

TEST_CASE("render_prompt edge cases") {
    auto verbatim = make_template("plain", Task::qa, "Say hello.");
    CHECK(render_prompt(verbatim, pair(Task::qa, "x")) == "Say hello.");
    CHECK_THROWS_AS(make_template("bad", Task::qa, "Use {source_txt}"), ConfigError);
    auto tr = pair(Task::translation, "Bonjour");
    CHECK_THROWS_AS(render_prompt(template_for(default_templates(), Task::translation), tr), DataError);
    CHECK_THROWS_AS(render_prompt(template_for(default_templates(), Task::qa), tr), DataError);
    tr.extra["source_language"] = "French";
    tr.extra["target_language"] = "Chinese";
    CHECK(render_prompt(template_for(default_templates(), Task::translation), tr) ==
          "Translate the following French text into Chinese: Bonjour");
}

TEST_CASE("cache key is a pure function of its inputs") {
    json a = {{"temperature", 1.0}, {"max_tokens", 512}};
    json b = {{"max_tokens", 512}, {"temperature", 1.0}};
    CHECK(cache_key("m", "p", a) == cache_key("m", "p", b));
    CHECK(cache_key("m", "p", a) != cache_key("m2", "p", a));
    CHECK(cache_key("m", "p", a) != cache_key("m", "p2", a));
    CHECK(cache_key("mp", "", a) != cache_key("m", "p", a));
    CHECK(cache_key("m", "p", a).size() == 64);
}

TEST_CASE("generate: output, retries, cache") {
    GenerationCache cache;
    GenerationRequest req{"p-1", "prompt", "gpt", json{{"temperature", 1.0}}};

    ScriptedClient x("X");
    auto r = generate(x, cache, req, fast_retry());
    CHECK(r.output == "X");
    CHECK(r.status == GenerationStatus::ok);
    CHECK(r.retries == 0);
    CHECK(x.calls() == 1);
    auto again = generate(x, cache, req, fast_retry());
    CHECK(x.calls() == 1);
    CHECK(again == r);

    GenerationCache fresh;
    ScriptedClient flaky("Y", 2);
    auto f = generate(flaky, fresh, req, fast_retry());
    CHECK(f.status == GenerationStatus::ok);
    CHECK(f.retries == 2);
    CHECK(flaky.calls() == 3);

    GenerationCache fresh2;
    ScriptedClient dead("Z", 100);
    auto d = generate(dead, fresh2, req, fast_retry());
    CHECK(d.status == GenerationStatus::error);
    CHECK(d.retries == 3);
    CHECK(dead.calls() == 4);
    CHECK(fresh2.size() == 0);

    GenerationCache fresh3;
    ScriptedClient refusal("作为一个AI语言模型，我无法");
    CHECK(generate(refusal, fresh3, req, fast_retry()).status == GenerationStatus::refused);
    ScriptedClient empty("  ");
    GenerationCache fresh4;
    CHECK(generate(empty, fresh4, req, fast_retry()).status == GenerationStatus::error);
}

TEST_CASE("journal replay yields identical records with zero calls") {
    TempDir dir;
    auto path = dir / "cache.jsonl";
    std::vector<GenerationRequest> reqs;
    for (int i = 0; i < 12; ++i) reqs.push_back({"p-" + std::to_string(i), "Paraphrase the following question, keeping its meaning unchanged: Q" + std::to_string(i), "mock", json::object()});
    BatchOptions opts;
    opts.generate = fast_retry();
    std::vector<GenerationRecord> first;
    {
        GenerationCache cache(path);
        MockChatClient mock;
        first = batch_generate(mock, cache, reqs, opts);
        CHECK(mock.calls() == 12);
    }
    GenerationCache warm(path);
    CHECK(warm.size() == 12);
    MockChatClient mock;
    auto second = batch_generate(mock, warm, reqs, opts);
    CHECK(mock.calls() == 0);
    CHECK(second == first);
    // Journal bytes are unchanged by the warm replay.
    auto before = io::read_file(path);
    GenerationCache again(path);
    batch_generate(mock, again, reqs, opts);
    CHECK(io::read_file(path) == before);
}

TEST_CASE("batch_generate preserves order and bounds concurrency") {
    std::vector<GenerationRequest> reqs;
    for (int i = 0; i < 100; ++i) reqs.push_back({"p-" + std::to_string(i), "prompt " + std::to_string(i), "m", json::object()});
    ProbeClient probe;
    GenerationCache cache;
    BatchOptions opts;
    opts.parallelism = 8;
    opts.generate = fast_retry();
    auto out = batch_generate(probe, cache, reqs, opts);
    REQUIRE(out.size() == 100);
    for (size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].pair_id == reqs[i].pair_id);
        CHECK(out[i].output == "out:" + reqs[i].pair_id);
    }
    CHECK(probe.peak() <= 8);
    CHECK(probe.peak() >= 1);

    GenerationCache empty_cache;
    CHECK(batch_generate(probe, empty_cache, {}, opts).empty());
    opts.parallelism = 0;
    CHECK_THROWS_AS(batch_generate(probe, empty_cache, reqs, opts), ConfigError);
}

TEST_CASE("batch_generate isolates permanent failures") {
    std::vector<GenerationRequest> reqs;
    for (int i = 0; i < 10; ++i) reqs.push_back({"p-" + std::to_string(i), "prompt " + std::to_string(i), "m", json::object()});
    ProbeClient probe;
    probe.permanent = {"p-1", "p-4", "p-8"};
    GenerationCache cache;
    BatchOptions opts;
    opts.parallelism = 3;
    opts.generate = fast_retry();
    auto out = batch_generate(probe, cache, reqs, opts);
    int ok = 0, err = 0;
    for (const auto& r : out) (r.status == GenerationStatus::ok ? ok : err)++;
    CHECK(ok == 7);
    CHECK(err == 3);
    CHECK(out[4].status == GenerationStatus::error);
    CHECK(out[4].retries == 0);
}

TEST_CASE("rate limiter spaces calls") {
    std::vector<GenerationRequest> reqs;
    for (int i = 0; i < 6; ++i) reqs.push_back({"p-" + std::to_string(i), "q" + std::to_string(i), "m", json::object()});
    ProbeClient probe;
    GenerationCache cache;
    BatchOptions opts;
    opts.parallelism = 4;
    opts.rate_per_second = 50.0;
    opts.generate = fast_retry();
    auto start = std::chrono::steady_clock::now();
    batch_generate(probe, cache, reqs, opts);
    auto elapsed = std::chrono::steady_clock::now() - start;
    // Six calls at 50/s need at least five 20 ms gaps.
    CHECK(elapsed >= std::chrono::milliseconds(95));
}

TEST_CASE("mock client is deterministic and task-aware") {
    std::string p = "Summarize the following article: Rain fell. Then sun.";
    CHECK(MockChatClient::respond(p) == MockChatClient::respond(p));
    CHECK(MockChatClient::respond(p) == "The article explains that rain fell.");
    CHECK(MockChatClient::respond("x [refuse]").rfind("I'm sorry", 0) == 0);
}

TEST_CASE("http client wire format") {
    GenerationRequest r{"p", "hello", "gpt-3.5-turbo-0301", json{{"temperature", 1.0}}};
    auto body = HttpChatClient::request_body(r);
    CHECK(body["model"] == "gpt-3.5-turbo-0301");
    CHECK(body["messages"][0]["content"] == "hello");
    CHECK(body["temperature"] == 1.0);
    CHECK(HttpChatClient::parse_response(R"({"choices":[{"message":{"role":"assistant","content":"hi"}}]})") == "hi");
    CHECK_THROWS_AS(HttpChatClient::parse_response(R"({"error":"x"})"), PermanentError);
}
