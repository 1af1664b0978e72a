#include "sidetect/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "sidetect/error.hpp"
#include "sidetect/text.hpp"

namespace sidetect::corpus {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '\t') {
            out.push_back(std::move(field));
            field.clear();
        } else if (c == '\\' && i + 1 < line.size()) {
            char n = line[++i];
            switch (n) {
                case 't': field.push_back('\t'); break;
                case 'n': field.push_back('\n'); break;
                case '\\': field.push_back('\\'); break;
                default:
                    field.push_back('\\');
                    field.push_back(n);
            }
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    out.push_back(std::move(field));
    return out;
}

using Row = std::map<std::string, std::string>;

std::vector<Row> read_rows(const CorpusDecl& decl) {
    std::ifstream in(decl.path, std::ios::binary);
    if (!in) throw DataError("cannot read corpus file: " + decl.path.string());
    std::vector<Row> rows;
    std::string line;
    if (decl.format == InputFormat::tsv) {
        if (!std::getline(in, line)) return rows;
        const auto header = split_tabs(line);
        while (std::getline(in, line)) {
            if (line.empty() || line == "\r") continue;
            const auto fields = split_tabs(line);
            Row row;
            for (size_t i = 0; i < header.size() && i < fields.size(); ++i) {
                row[header[i]] = fields[i];
            }
            rows.push_back(std::move(row));
        }
        return rows;
    }
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(decl.path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        Row row;
        for (const auto& [k, v] : j.items()) {
            if (v.is_string()) row[k] = v.get<std::string>();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string field_or_empty(const Row& row, const std::string& key) {
    auto it = row.find(key);
    return it == row.end() ? std::string{} : it->second;
}

}  // namespace

CorpusDecl corpus_decl_from_json(const json& j, const std::filesystem::path& base_dir) {
    CorpusDecl d;
    try {
        d.id = j.at("id").get<std::string>();
        std::filesystem::path p = j.at("path").get<std::string>();
        d.path = p.is_absolute() ? p : base_dir / p;
        const std::string fmt =
            j.value("format", d.path.extension() == ".tsv" ? std::string("tsv") : "jsonl");
        if (fmt == "tsv") {
            d.format = InputFormat::tsv;
        } else if (fmt == "jsonl") {
            d.format = InputFormat::jsonl;
        } else {
            throw ConfigError("corpus '" + d.id + "': unknown format '" + fmt + "'");
        }
        d.task = parse_task(j.at("task").get<std::string>());
        d.language = parse_language(j.at("language").get<std::string>());
        d.source_field = j.value("source_field", d.source_field);
        d.target_field = j.value("target_field", d.target_field);
        d.source_language_field = j.value("source_language_field", std::string{});
        if (auto it = j.find("extra"); it != j.end()) {
            for (const auto& [k, v] : it->items()) d.extra[k] = v.get<std::string>();
        }
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid corpus declaration: ") + e.what());
    }
    return d;
}

json to_json(const CorpusDecl& d) {
    json extra = json::object();
    for (const auto& [k, v] : d.extra) extra[k] = v;
    return json{{"id", d.id},
                {"path", d.path.string()},
                {"format", d.format == InputFormat::tsv ? "tsv" : "jsonl"},
                {"task", to_string(d.task)},
                {"language", to_string(d.language)},
                {"source_field", d.source_field},
                {"target_field", d.target_field},
                {"source_language_field", d.source_language_field},
                {"extra", extra}};
}

CorpusRegistry::CorpusRegistry(std::vector<CorpusDecl> decls) : decls_(std::move(decls)) {
    std::set<std::string> seen;
    for (const auto& d : decls_) {
        if (!seen.insert(d.id).second) throw ConfigError("duplicate corpus id '" + d.id + "'");
    }
}

const CorpusDecl& CorpusRegistry::find(std::string_view corpus_id) const {
    for (const auto& d : decls_) {
        if (d.id == corpus_id) return d;
    }
    throw ConfigError("unknown corpus id '" + std::string(corpus_id) + "'");
}

IngestResult ingest_source_corpus(const CorpusDecl& decl) {
    IngestResult result;
    const auto rows = read_rows(decl);
    result.rows_read = rows.size();
    for (size_t i = 0; i < rows.size(); ++i) {
        const Row& row = rows[i];
        PairRecord p;
        p.pair_id = decl.id + "-" + std::to_string(i);
        p.source_text = text::normalize(field_or_empty(row, decl.source_field));
        p.human_target = text::normalize(field_or_empty(row, decl.target_field));
        if (p.source_text.empty() || p.human_target.empty()) {
            ++result.dropped_empty;
            continue;
        }
        p.task = decl.task;
        p.language = decl.language;
        p.source_corpus = decl.id;
        p.extra = decl.extra;
        if (!decl.source_language_field.empty()) {
            auto lang = text::trim(field_or_empty(row, decl.source_language_field));
            if (!lang.empty()) p.extra["source_language"] = lang;
        }
        if (p.task == Task::translation && !p.extra.contains("source_language")) {
            throw DataError("corpus '" + decl.id + "' row " + std::to_string(i) +
                            ": translation pair without a source-language tag");
        }
        result.pairs.push_back(std::move(p));
    }
    if (result.pairs.empty()) {
        throw DataError("corpus '" + decl.id + "' has no usable rows (" +
                        std::to_string(result.rows_read) + " read, " +
                        std::to_string(result.dropped_empty) + " dropped)");
    }
    return result;
}

IngestResult ingest_source_corpus(const CorpusRegistry& registry, std::string_view corpus_id) {
    return ingest_source_corpus(registry.find(corpus_id));
}

std::vector<Sample> assemble_detection_samples(
    const std::vector<PairRecord>& pairs,
    const std::map<std::string, GenerationRecord>& generations, const AssembleOptions& options) {
    std::set<std::string> known;
    for (const auto& p : pairs) known.insert(p.pair_id);
    for (const auto& [pair_id, record] : generations) {
        if (!known.contains(pair_id)) {
            throw DataError("generation record for unknown pair '" + pair_id + "'");
        }
        if (record.pair_id != pair_id) {
            throw DataError("generation keyed by '" + pair_id + "' carries pair_id '" +
                            record.pair_id + "'");
        }
    }

    std::vector<Sample> out;
    out.reserve(pairs.size() * 2);
    for (const auto& p : pairs) {
        auto it = generations.find(p.pair_id);
        const bool generated = it != generations.end() &&
                               it->second.status == GenerationStatus::ok &&
                               !it->second.output.empty();
        if (!generated && !options.keep_unpaired) continue;

        Sample human;
        human.sample_id = p.pair_id + "#h";
        human.pair_id = p.pair_id;
        human.text = p.human_target;
        human.label = Label::human;
        human.task = p.task;
        human.language = p.language;
        human.source_corpus = p.source_corpus;
        human.source_text = p.source_text;
        out.push_back(human);

        if (generated) {
            Sample machine = human;
            machine.sample_id = p.pair_id + "#m";
            machine.text = it->second.output;
            machine.label = Label::model;
            out.push_back(std::move(machine));
        }
    }
    return out;
}

size_t SplitCounts::get(Split s) const {
    switch (s) {
        case Split::train: return train;
        case Split::val: return val;
        case Split::test: return test;
    }
    return 0;
}

SplitSpec split_spec_from_json(const json& j) {
    SplitSpec spec;
    try {
        spec.seed = j.value("seed", uint64_t{0});
        for (const auto& [corpus_id, counts] : j.at("per_corpus").items()) {
            SplitCounts c;
            c.train = counts.value("train", size_t{0});
            c.val = counts.value("val", size_t{0});
            c.test = counts.value("test", size_t{0});
            spec.per_corpus[corpus_id] = c;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid split spec: ") + e.what());
    }
    return spec;
}

std::vector<Sample> split_corpus(const std::vector<Sample>& samples, const SplitSpec& spec) {
    size_t requested = 0;
    for (const auto& [_, c] : spec.per_corpus) requested += c.total();
    if (requested == 0) throw ConfigError("split spec requests zero pairs");

    // corpus -> pair ids in first-seen order
    std::map<std::string, std::vector<std::string>> corpus_pairs;
    std::set<std::string> seen;
    for (const auto& s : samples) {
        if (seen.insert(s.pair_id).second) corpus_pairs[s.source_corpus].push_back(s.pair_id);
    }

    std::map<std::string, Split> assignment;
    for (const auto& [corpus_id, pair_ids] : corpus_pairs) {
        auto it = spec.per_corpus.find(corpus_id);
        if (it == spec.per_corpus.end()) {
            throw ConfigError("split spec has no targets for corpus '" + corpus_id + "'");
        }
        const SplitCounts& want = it->second;
        if (want.total() > pair_ids.size()) {
            throw DataError("corpus '" + corpus_id + "' has " + std::to_string(pair_ids.size()) +
                            " pairs, split spec requests " + std::to_string(want.total()));
        }
        std::vector<std::pair<uint64_t, std::string>> ranked;
        ranked.reserve(pair_ids.size());
        for (const auto& id : pair_ids) {
            ranked.emplace_back(io::stable_hash64(std::to_string(spec.seed) + ":" + id), id);
        }
        std::sort(ranked.begin(), ranked.end());
        size_t k = 0;
        for (Split split : kAllSplits) {
            for (size_t n = 0; n < want.get(split); ++n) assignment[ranked[k++].second] = split;
        }
    }
    for (const auto& [corpus_id, _] : spec.per_corpus) {
        if (!corpus_pairs.contains(corpus_id) && spec.per_corpus.at(corpus_id).total() > 0) {
            throw DataError("split spec requests pairs from corpus '" + corpus_id +
                            "', which has none");
        }
    }

    std::vector<Sample> out;
    for (const auto& s : samples) {
        auto it = assignment.find(s.pair_id);
        if (it == assignment.end()) continue;
        Sample copy = s;
        copy.split = it->second;
        out.push_back(std::move(copy));
    }
    return out;
}

CorpusManifest build_manifest(const std::vector<Sample>& samples, std::string generation_model,
                              std::string build_timestamp, uint64_t seed) {
    CorpusManifest m;
    m.generation_model = std::move(generation_model);
    m.build_timestamp = std::move(build_timestamp);
    m.seed = seed;
    std::map<std::tuple<std::string, Split>, ManifestCell> cells;
    for (const auto& s : samples) {
        if (!s.split) throw DataError("sample '" + s.sample_id + "' has no split");
        auto& cell = cells[{s.source_corpus, *s.split}];
        cell.source_corpus = s.source_corpus;
        cell.language = s.language;
        cell.split = *s.split;
        ++cell.count;
    }
    for (auto& [_, cell] : cells) {
        auto& t = m.totals[cell.language];
        switch (cell.split) {
            case Split::train: t.train += cell.count; break;
            case Split::val: t.val += cell.count; break;
            case Split::test: t.test += cell.count; break;
        }
        m.total += cell.count;
        m.cells.push_back(cell);
    }
    return m;
}

json to_json(const CorpusManifest& m) {
    json cells = json::array();
    for (const auto& c : m.cells) {
        cells.push_back(json{{"source_corpus", c.source_corpus},
                             {"language", to_string(c.language)},
                             {"split", to_string(c.split)},
                             {"count", c.count}});
    }
    json totals = json::object();
    for (const auto& [lang, t] : m.totals) {
        totals[std::string(to_string(lang))] =
            json{{"train", t.train}, {"val", t.val}, {"test", t.test}};
    }
    return json{{"generation_model", m.generation_model},
                {"build_timestamp", m.build_timestamp},
                {"seed", m.seed},
                {"fingerprint", m.fingerprint},
                {"total", m.total},
                {"totals", totals},
                {"cells", cells}};
}

CorpusManifest manifest_from_json(const json& j) {
    CorpusManifest m;
    try {
        m.generation_model = j.at("generation_model").get<std::string>();
        m.build_timestamp = j.at("build_timestamp").get<std::string>();
        m.seed = j.at("seed").get<uint64_t>();
        m.fingerprint = j.value("fingerprint", std::string{});
        m.total = j.at("total").get<size_t>();
        for (const auto& [lang, t] : j.at("totals").items()) {
            m.totals[parse_language(lang)] = SplitCounts{
                t.at("train").get<size_t>(), t.at("val").get<size_t>(), t.at("test").get<size_t>()};
        }
        for (const auto& c : j.at("cells")) {
            m.cells.push_back(ManifestCell{c.at("source_corpus").get<std::string>(),
                                           parse_language(c.at("language").get<std::string>()),
                                           parse_split(c.at("split").get<std::string>()),
                                           c.at("count").get<size_t>()});
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid manifest: ") + e.what());
    }
    return m;
}

ValidationReport validate_manifest(const CorpusManifest& manifest,
                                   const std::vector<Sample>& dataset) {
    ValidationReport report;
    struct Tally {
        size_t human = 0, model = 0;
    };
    std::map<std::tuple<std::string, Split>, Tally> actual;
    std::set<std::string> ids;
    std::set<std::string> dup;
    for (const auto& s : dataset) {
        if (!ids.insert(s.sample_id).second) dup.insert(s.sample_id);
        if (!s.split) continue;
        auto& t = actual[{s.source_corpus, *s.split}];
        (s.label == Label::human ? t.human : t.model)++;
    }
    report.duplicate_ids.assign(dup.begin(), dup.end());

    std::set<std::tuple<std::string, Split>> listed;
    std::map<Language, SplitCounts> cell_totals;
    size_t cell_sum = 0;
    for (const auto& cell : manifest.cells) {
        listed.insert({cell.source_corpus, cell.split});
        CellCheck check;
        check.source_corpus = cell.source_corpus;
        check.split = cell.split;
        check.expected = cell.count;
        if (auto it = actual.find({cell.source_corpus, cell.split}); it != actual.end()) {
            check.human = it->second.human;
            check.model = it->second.model;
        }
        check.actual = check.human + check.model;
        check.human_fraction =
            check.actual > 0 ? static_cast<double>(check.human) / static_cast<double>(check.actual)
                             : 0.0;
        if (!check.matches()) {
            report.mismatches.push_back(cell.source_corpus + "/" +
                                        std::string(to_string(cell.split)) + ": expected " +
                                        std::to_string(check.expected) + ", stored " +
                                        std::to_string(check.actual));
        }
        report.cells.push_back(check);
        auto& t = cell_totals[cell.language];
        switch (cell.split) {
            case Split::train: t.train += cell.count; break;
            case Split::val: t.val += cell.count; break;
            case Split::test: t.test += cell.count; break;
        }
        cell_sum += cell.count;
    }
    for (const auto& [key, tally] : actual) {
        if (!listed.contains(key)) {
            report.mismatches.push_back(std::get<0>(key) + "/" +
                                        std::string(to_string(std::get<1>(key))) +
                                        ": stored " + std::to_string(tally.human + tally.model) +
                                        " samples in a cell the manifest does not list");
        }
    }
    if (cell_totals != manifest.totals) {
        report.mismatches.push_back("per-language totals disagree with the sum of cells");
    }
    if (cell_sum != manifest.total) {
        report.mismatches.push_back("manifest total " + std::to_string(manifest.total) +
                                    " != sum of cells " + std::to_string(cell_sum));
    }
    return report;
}

const std::vector<ReferenceCell>& reference_split_sizes() {
    static const std::vector<ReferenceCell> cells{
        {"cnn_dailymail", Language::en, {11160, 1240, 6000}},
        {"xsum", Language::en, {11158, 1240, 5994}},
        {"wmt19_de_en", Language::en, {11077, 1231, 4264}},
        {"wmt19_fr_en", Language::en, {11043, 1227, 5934}},
        {"wmt19_zh_en", Language::en, {11039, 1227, 5990}},
        {"wmt19_ro_en", Language::en, {11035, 1227, 3960}},
        {"hc3_paraphrase_en", Language::en, {29233, 3249, 6000}},
        {"lcsts", Language::zh, {11160, 1240, 6000}},
        {"news2016", Language::zh, {11023, 1225, 5918}},
        {"wmt19_en_zh", Language::zh, {10823, 1203, 5976}},
        {"hc3_paraphrase_zh", Language::zh, {9702, 1078, 4622}},
    };
    return cells;
}

SplitCounts reference_totals(Language language) {
    SplitCounts total;
    for (const auto& cell : reference_split_sizes()) {
        if (cell.language != language) continue;
        total.train += cell.samples.train;
        total.val += cell.samples.val;
        total.test += cell.samples.test;
    }
    return total;
}

void store_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                   const CorpusManifest& manifest) {
    std::map<std::tuple<std::string, Split>, std::vector<json>> files;
    for (const auto& s : samples) {
        if (!s.split) throw DataError("sample '" + s.sample_id + "' has no split");
        files[{s.source_corpus, *s.split}].push_back(to_json(s));
    }
    std::filesystem::create_directories(dir);
    for (const auto& [key, rows] : files) {
        io::write_jsonl(dir / (std::get<0>(key) + "." + std::string(to_string(std::get<1>(key))) +
                               ".jsonl"),
                        rows);
    }
    io::write_file(dir / "manifest.json", to_json(manifest).dump(2) + "\n");
}

StoredDataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) {
        throw DataError("no dataset at " + dir.string() + " (manifest.json missing)");
    }
    StoredDataset ds;
    try {
        ds.manifest = manifest_from_json(json::parse(io::read_file(manifest_path)));
    } catch (const json::parse_error& e) {
        throw DataError(std::string("invalid manifest: ") + e.what());
    }
    std::set<std::tuple<std::string, Split>> loaded;
    for (const auto& cell : ds.manifest.cells) {
        if (!loaded.insert({cell.source_corpus, cell.split}).second) continue;
        const auto path =
            dir / (cell.source_corpus + "." + std::string(to_string(cell.split)) + ".jsonl");
        if (!std::filesystem::exists(path)) continue;
        for (const auto& row : io::read_jsonl(path)) ds.samples.push_back(sample_from_json(row));
    }
    return ds;
}

std::vector<Sample> filter_split(const std::vector<Sample>& samples, Split split) {
    std::vector<Sample> out;
    for (const auto& s : samples) {
        if (s.split == split) out.push_back(s);
    }
    return out;
}

}  // namespace sidetect::corpus
