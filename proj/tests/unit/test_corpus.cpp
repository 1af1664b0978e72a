#include <doctest.h>

#include <set>

#include "sidetect/corpus.hpp"
#include "sidetect/error.hpp"
#include "test_util.hpp"

using namespace sidetect;
using namespace sidetect::corpus;
using sidetect::testing::fixture;
using sidetect::testing::TempDir;

namespace {

std::vector<PairRecord> make_pairs(const std::string& corpus, size_t n,
                                   Task task = Task::summarization) {
    std::vector<PairRecord> pairs;
    for (size_t i = 0; i < n; ++i) {
        PairRecord p;
        p.pair_id = corpus + "-" + std::to_string(i);
        p.source_text = "source " + std::to_string(i);
        p.human_target = "target " + std::to_string(i);
        p.task = task;
        p.source_corpus = corpus;
        pairs.push_back(p);
    }
    return pairs;
}

std::map<std::string, GenerationRecord> make_generations(const std::vector<PairRecord>& pairs,
                                                         size_t n) {
    std::map<std::string, GenerationRecord> out;
    for (size_t i = 0; i < n && i < pairs.size(); ++i) {
        GenerationRecord r;
        r.pair_id = pairs[i].pair_id;
        r.output = "generated " + std::to_string(i);
        r.status = GenerationStatus::ok;
        out[r.pair_id] = r;
    }
    return out;
}

size_t count_label(const std::vector<Sample>& s, Label label) {
    return static_cast<size_t>(
        std::count_if(s.begin(), s.end(), [&](const Sample& x) { return x.label == label; }));
}

}  // namespace

TEST_CASE("ingest a 3-row TSV fixture") {
    CorpusDecl decl;
    decl.id = "c";
    decl.path = fixture("three_rows.tsv");
    decl.format = InputFormat::tsv;
    decl.task = Task::summarization;
    auto result = ingest_source_corpus(decl);
    REQUIRE(result.pairs.size() == 3);
    CHECK(result.pairs[0].pair_id == "c-0");
    CHECK(result.pairs[1].pair_id == "c-1");
    CHECK(result.pairs[2].pair_id == "c-2");
    CHECK(result.pairs[2].source_text == "Third article\twith an escaped tab.");
    CHECK(result.pairs[0].task == Task::summarization);
    CHECK(result.pairs[0].language == Language::en);
    CHECK(result.dropped_empty == 0);
}

TEST_CASE("article/highlights row becomes a summarization pair; blank targets are dropped") {
    CorpusDecl decl;
    decl.id = "cnn_dailymail";
    decl.path = fixture("with_blank.jsonl");
    decl.source_field = "article";
    decl.target_field = "highlights";
    auto result = ingest_source_corpus(decl);
    CHECK(result.rows_read == 3);
    CHECK(result.dropped_empty == 1);
    REQUIRE(result.pairs.size() == 2);
    CHECK(result.pairs[0].source_text == "An article about rain.");
    CHECK(result.pairs[0].human_target == "Rain fell.");
    CHECK(result.pairs[1].pair_id == "cnn_dailymail-2");
    CHECK(result.pairs[1].human_target == "Caf\xC3\xA9 opens.");
}

TEST_CASE("ingest errors") {
    TempDir tmp;
    CorpusDecl decl;
    decl.id = "x";
    decl.path = tmp / "missing.jsonl";
    CHECK_THROWS_AS(ingest_source_corpus(decl), DataError);

    io::write_file(tmp / "empty.jsonl", "{\"source\": \"a\", \"target\": \"\"}\n");
    decl.path = tmp / "empty.jsonl";
    CHECK_THROWS_AS(ingest_source_corpus(decl), DataError);

    CorpusRegistry registry({decl});
    CHECK_THROWS_AS(ingest_source_corpus(registry, "nope"), ConfigError);

    io::write_file(tmp / "tr.jsonl", "{\"source\": \"Hallo\", \"target\": \"Hello\"}\n");
    decl.path = tmp / "tr.jsonl";
    decl.task = Task::translation;
    CHECK_THROWS_AS(ingest_source_corpus(decl), DataError);
    decl.extra["source_language"] = "German";
    CHECK(ingest_source_corpus(decl).pairs.at(0).extra.at("source_language") == "German");
}

TEST_CASE("assemble balanced and unpaired samples") {
    auto pairs = make_pairs("s", 5);
    SUBCASE("all generations succeed") {
        auto samples = assemble_detection_samples(pairs, make_generations(pairs, 5));
        CHECK(samples.size() == 10);
        CHECK(count_label(samples, Label::human) == 5);
        CHECK(count_label(samples, Label::model) == 5);
        for (const auto& s : samples) {
            const auto& p = pairs.at(std::stoul(s.pair_id.substr(2)));
            if (s.label == Label::human) CHECK(s.text == p.human_target);
        }
    }
    SUBCASE("one missing generation, keep_unpaired=false") {
        auto samples = assemble_detection_samples(pairs, make_generations(pairs, 4));
        CHECK(samples.size() == 8);
        CHECK(count_label(samples, Label::human) == 4);
        CHECK(count_label(samples, Label::model) == 4);
    }
    SUBCASE("one missing generation, keep_unpaired=true") {
        auto samples =
            assemble_detection_samples(pairs, make_generations(pairs, 4), {.keep_unpaired = true});
        CHECK(samples.size() == 9);
    }
    SUBCASE("refused generation counts as missing") {
        auto gens = make_generations(pairs, 5);
        gens["s-0"].status = GenerationStatus::refused;
        CHECK(assemble_detection_samples(pairs, gens).size() == 8);
    }
    SUBCASE("generation for unknown pair") {
        auto gens = make_generations(pairs, 5);
        gens["zzz"] = GenerationRecord{.pair_id = "zzz", .status = GenerationStatus::ok};
        CHECK_THROWS_AS(assemble_detection_samples(pairs, gens), DataError);
    }
}

TEST_CASE("full-scale paraphrase pool reaches the reference train size of 29233 samples") {
    // An odd sample count arises from one pair whose generation is missing
    // while its human sample is kept.
    const size_t target = reference_split_sizes()[6].samples.train;
    REQUIRE(target == 29233);
    auto pairs = make_pairs("hc3_paraphrase_en", (target + 1) / 2, Task::paraphrasing);
    auto samples = assemble_detection_samples(pairs, make_generations(pairs, target / 2),
                                              {.keep_unpaired = true});
    CHECK(samples.size() == 29233);
}

TEST_CASE("split is pair-level, exact, and deterministic") {
    auto pairs = make_pairs("a", 10);
    auto samples = assemble_detection_samples(pairs, make_generations(pairs, 10));
    SplitSpec spec;
    spec.seed = 7;
    spec.per_corpus["a"] = {6, 2, 2};
    auto first = split_corpus(samples, spec);
    auto second = split_corpus(samples, spec);
    CHECK(first == second);
    REQUIRE(first.size() == 20);

    std::map<std::string, std::set<Split>> splits_of_pair;
    std::map<Split, size_t> per_split;
    for (const auto& s : first) {
        splits_of_pair[s.pair_id].insert(*s.split);
        ++per_split[*s.split];
    }
    for (const auto& [_, splits] : splits_of_pair) CHECK(splits.size() == 1);
    CHECK(per_split[Split::train] == 12);
    CHECK(per_split[Split::val] == 4);
    CHECK(per_split[Split::test] == 4);

    spec.seed = 8;
    auto other_seed = split_corpus(samples, spec);
    CHECK(other_seed != first);
}

TEST_CASE("split errors") {
    auto pairs = make_pairs("a", 4);
    auto samples = assemble_detection_samples(pairs, make_generations(pairs, 4));
    SplitSpec spec;
    spec.per_corpus["a"] = {0, 0, 0};
    CHECK_THROWS_AS(split_corpus(samples, spec), ConfigError);
    spec.per_corpus["a"] = {3, 1, 1};
    CHECK_THROWS_AS(split_corpus(samples, spec), DataError);
}

TEST_CASE("manifest validation") {
    auto pairs = make_pairs("a", 10);
    auto b = make_pairs("b", 6, Task::translation);
    for (auto& p : b) p.language = Language::zh;
    pairs.insert(pairs.end(), b.begin(), b.end());
    auto samples = assemble_detection_samples(pairs, make_generations(pairs, pairs.size()));
    SplitSpec spec;
    spec.per_corpus["a"] = {6, 2, 2};
    spec.per_corpus["b"] = {4, 1, 1};
    auto split = split_corpus(samples, spec);
    auto manifest = build_manifest(split, "mock", "2026-01-01T00:00:00Z", 0);

    CHECK(manifest.total == split.size());
    CHECK(manifest.totals.at(Language::en) == SplitCounts{12, 4, 4});
    CHECK(manifest.totals.at(Language::zh) == SplitCounts{8, 2, 2});

    SUBCASE("matching storage") {
        auto report = validate_manifest(manifest, split);
        CHECK(report.passed());
        CHECK(report.mismatches.empty());
        for (const auto& cell : report.cells) CHECK(cell.human_fraction == 0.5);
    }
    SUBCASE("one deleted sample gives exactly one cell mismatch") {
        split.erase(split.begin() + 3);
        auto report = validate_manifest(manifest, split);
        CHECK_FALSE(report.passed());
        size_t failing = 0;
        for (const auto& cell : report.cells) failing += cell.matches() ? 0 : 1;
        CHECK(failing == 1);
        CHECK(report.mismatches.size() == 1);
    }
    SUBCASE("duplicate ids are reported") {
        split.push_back(split.front());
        auto report = validate_manifest(manifest, split);
        CHECK(report.duplicate_ids == std::vector<std::string>{split.front().sample_id});
    }
    SUBCASE("storage round trip") {
        TempDir tmp;
        store_dataset(tmp.path(), split, manifest);
        auto loaded = load_dataset(tmp.path());
        CHECK(validate_manifest(loaded.manifest, loaded.samples).passed());
        CHECK(loaded.samples.size() == split.size());
        CHECK(std::filesystem::exists(tmp / "a.train.jsonl"));
        const auto first_line = io::read_file(tmp / "a.train.jsonl").substr(0, 14);
        CHECK(first_line == "{\"sample_id\":\"");
    }
}

TEST_CASE("reference split sizes reproduce the published totals") {
    CHECK(reference_totals(Language::en) == SplitCounts{95745, 10641, 38142});
    CHECK(reference_totals(Language::zh) == SplitCounts{42708, 4746, 22516});
    size_t grand = 0;
    for (const auto& c : reference_split_sizes()) grand += c.samples.total();
    CHECK(grand == 214498);

    // A full-scale manifest built from the reference cells validates against
    // storage of the same sizes, and the Chinese cell totals hold.
    CorpusManifest m;
    for (const auto& c : reference_split_sizes()) {
        for (Split s : kAllSplits) {
            m.cells.push_back({c.source_corpus, c.language, s, c.samples.get(s)});
        }
        auto& t = m.totals[c.language];
        t.train += c.samples.train;
        t.val += c.samples.val;
        t.test += c.samples.test;
        m.total += c.samples.total();
    }
    CHECK(m.totals.at(Language::zh) == SplitCounts{42708, 4746, 22516});
    auto report = validate_manifest(m, {});
    CHECK(report.mismatches.size() == m.cells.size());
}
