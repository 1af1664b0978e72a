#include "sidetect/instruction.hpp"

#include <algorithm>
#include <random>

#include "sidetect/text.hpp"

namespace sidetect::instruction {

std::string Layout::header_for(size_t n) const {
    std::string out = example_header;
    auto pos = out.find("{n}");
    if (pos != std::string::npos) out.replace(pos, 3, std::to_string(n));
    return out;
}

std::vector<std::string> Layout::delimiters(size_t max_examples) const {
    std::vector<std::string> out{definition_prefix, target_header, input_prefix, output_prefix};
    for (size_t i = 1; i <= max_examples; ++i) out.push_back(header_for(i));
    return out;
}

SchemaConfig SchemaConfig::defaults() {
    SchemaConfig c;
    c.definitions[Language::en] =
        "Determine whether the following text was written by a human or generated by an AI model. "
        "Answer 'human' or 'model'.";
    c.definitions[Language::zh] = "判断下面的文本是由人类撰写的还是由人工智能模型生成的。回答“人类”或“模型”。";
    c.surfaces[Language::en] = {"human", "model"};
    c.surfaces[Language::zh] = {"人类", "模型"};
    return c;
}

json to_json(const SchemaConfig& c) {
    json defs = json::object();
    for (const auto& [lang, text] : c.definitions) defs[std::string(to_string(lang))] = text;
    json surfaces = json::object();
    for (const auto& [lang, s] : c.surfaces)
        surfaces[std::string(to_string(lang))] = json{{"human", s.human}, {"model", s.model}};
    return json{{"definitions", defs},
                {"label_surfaces", surfaces},
                {"layout",
                 {{"definition_prefix", c.layout.definition_prefix},
                  {"example_header", c.layout.example_header},
                  {"target_header", c.layout.target_header},
                  {"input_prefix", c.layout.input_prefix},
                  {"output_prefix", c.layout.output_prefix}}},
                {"positives", c.positives_mode == PositivesMode::resample ? "resample" : "fixed"},
                {"max_example_tokens", c.max_example_tokens},
                {"max_content_tokens", c.max_content_tokens}};
}

SchemaConfig schema_from_json(const json& j) {
    SchemaConfig c = SchemaConfig::defaults();
    try {
        if (auto it = j.find("definitions"); it != j.end()) {
            for (const auto& [lang, text] : it->items()) {
                auto s = text.get<std::string>();
                if (text::trim(s).empty()) throw ConfigError("empty definition for language " + lang);
                c.definitions[parse_language(lang)] = s;
            }
        }
        if (auto it = j.find("label_surfaces"); it != j.end()) {
            for (const auto& [lang, s] : it->items()) {
                LabelSurfaces ls{s.at("human").get<std::string>(), s.at("model").get<std::string>()};
                if (text::trim(ls.human).empty() || text::trim(ls.model).empty() ||
                    text::trim(ls.human) == text::trim(ls.model)) {
                    throw ConfigError("label surfaces for " + lang + " must be distinct and non-empty");
                }
                c.surfaces[parse_language(lang)] = ls;
            }
        }
        if (auto it = j.find("layout"); it != j.end()) {
            c.layout.definition_prefix = it->value("definition_prefix", c.layout.definition_prefix);
            c.layout.example_header = it->value("example_header", c.layout.example_header);
            c.layout.target_header = it->value("target_header", c.layout.target_header);
            c.layout.input_prefix = it->value("input_prefix", c.layout.input_prefix);
            c.layout.output_prefix = it->value("output_prefix", c.layout.output_prefix);
        }
        auto mode = j.value("positives", std::string("resample"));
        if (mode == "resample") c.positives_mode = PositivesMode::resample;
        else if (mode == "fixed") c.positives_mode = PositivesMode::fixed;
        else throw ConfigError("positives must be 'resample' or 'fixed', got '" + mode + "'");
        c.max_example_tokens = j.value("max_example_tokens", c.max_example_tokens);
        c.max_content_tokens = j.value("max_content_tokens", c.max_content_tokens);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("schema config: ") + e.what());
    } catch (const DataError& e) {
        throw ConfigError(std::string("schema config: ") + e.what());
    }
    return c;
}

SchemaConfig load_schema_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("schema config not found: " + path.string());
    try {
        return schema_from_json(json::parse(io::read_file(path)));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

TaskDefinition definition_for(const SchemaConfig& config, Language language) {
    auto it = config.definitions.find(language);
    if (it == config.definitions.end())
        throw ConfigError("no task definition for language " + std::string(to_string(language)));
    return {it->second, language};
}

const std::string& label_surface(const SchemaConfig& config, Label label, Language language) {
    auto it = config.surfaces.find(language);
    if (it == config.surfaces.end())
        throw ConfigError("no label surfaces for language " + std::string(to_string(language)));
    return label == Label::human ? it->second.human : it->second.model;
}

namespace {

std::vector<PositiveExample> select_from(const std::vector<Sample>& pool, uint64_t seed,
                                         std::string_view instance_id, std::string_view exclude_pair_id,
                                         const Language* language) {
    std::vector<const Sample*> by_label[2];
    for (const auto& s : pool) {
        if (language && s.language != *language) continue;
        if (s.sample_id == instance_id) continue;
        if (!exclude_pair_id.empty() && s.pair_id == exclude_pair_id) continue;
        by_label[s.label == Label::model ? 0 : 1].push_back(&s);
    }
    if (by_label[0].empty() || by_label[1].empty())
        throw DataError("positive-example pool lacks a " +
                        std::string(by_label[0].empty() ? "model" : "human") + "-labeled sample");
    std::mt19937_64 rng(io::stable_hash64(std::to_string(seed) + ":" + std::string(instance_id)));
    std::vector<PositiveExample> out;
    for (const auto& candidates : by_label) {
        std::uniform_int_distribution<size_t> pick(0, candidates.size() - 1);
        const Sample* s = candidates[pick(rng)];
        out.push_back({s->text, s->label});
    }
    return out;
}

}  // namespace

std::vector<PositiveExample> select_positive_examples(const std::vector<Sample>& pool, uint64_t seed,
                                                      std::string_view instance_id,
                                                      std::string_view exclude_pair_id) {
    return select_from(pool, seed, instance_id, exclude_pair_id, nullptr);
}

std::string assemble_layout(const Layout& layout, std::string_view definition,
                            const std::vector<std::pair<std::string, std::string>>& examples,
                            std::string_view target) {
    std::string s = layout.definition_prefix + " ";
    s.append(definition);
    s += "\n\n";
    for (size_t i = 0; i < examples.size(); ++i) {
        s += layout.header_for(i + 1) + "\n";
        s += layout.input_prefix + " " + examples[i].first + "\n";
        s += layout.output_prefix + " " + examples[i].second + "\n\n";
    }
    s += layout.target_header + "\n" + layout.input_prefix + " ";
    s.append(target);
    s += "\n" + layout.output_prefix;
    return s;
}

namespace {

void expect(std::string_view s, size_t& pos, std::string_view literal) {
    if (s.substr(pos, literal.size()) != literal)
        throw DataError("malformed prompt: expected '" + std::string(literal) + "' at offset " +
                        std::to_string(pos));
    pos += literal.size();
}

}  // namespace

ParsedLayout parse_layout(const Layout& layout, std::string_view s) {
    ParsedLayout out;
    size_t pos = 0;
    expect(s, pos, layout.definition_prefix + " ");

    // The definition runs up to the first block header.
    const std::string target_block = "\n\n" + layout.target_header + "\n";
    auto next_block = [&](size_t from, size_t example_no) {
        size_t ex = s.find("\n\n" + layout.header_for(example_no) + "\n", from);
        size_t tg = s.find(target_block, from);
        return std::min(ex, tg);
    };
    size_t end = next_block(pos, 1);
    if (end == std::string_view::npos) throw DataError("malformed prompt: no target block");
    out.definition = std::string(s.substr(pos, end - pos));
    pos = end + 2;

    const std::string output_sep = "\n" + layout.output_prefix + " ";
    for (size_t n = 1;; ++n) {
        std::string header = layout.header_for(n) + "\n";
        if (s.substr(pos, header.size()) != header) break;
        pos += header.size();
        expect(s, pos, layout.input_prefix + " ");
        size_t out_at = s.find(output_sep, pos);
        if (out_at == std::string_view::npos) throw DataError("malformed prompt: example without output");
        std::string input(s.substr(pos, out_at - pos));
        pos = out_at + output_sep.size();
        size_t block_end = next_block(pos, n + 1);
        if (block_end == std::string_view::npos) throw DataError("malformed prompt: no target block");
        out.examples.emplace_back(std::move(input), std::string(s.substr(pos, block_end - pos)));
        pos = block_end + 2;
    }
    expect(s, pos, layout.target_header + "\n");
    expect(s, pos, layout.input_prefix + " ");
    const std::string tail = "\n" + layout.output_prefix;
    if (s.size() < pos + tail.size() || s.substr(s.size() - tail.size()) != tail)
        throw DataError("malformed prompt: missing final output slot");
    out.target = std::string(s.substr(pos, s.size() - tail.size() - pos));
    return out;
}

std::string truncate_front(std::string_view text, Language language, size_t budget) {
    if (budget == 0) return std::string(text);
    auto tokens = text::tokenize(text, language);
    if (tokens.size() <= budget) return std::string(text);
    std::vector<std::string> tail(tokens.end() - static_cast<std::ptrdiff_t>(budget), tokens.end());
    return text::join(tail, language == Language::zh ? "" : " ");
}

InstructionPrompt assemble_prompt(const TaskDefinition& definition,
                                  const std::vector<PositiveExample>& positives,
                                  std::string_view target_text, const SchemaConfig& config) {
    if (positives.size() != 2 || positives[0].output_label == positives[1].output_label)
        throw DataError("an instruction prompt needs exactly two positives, one per label");
    if (text::trim(definition.text).empty()) throw DataError("empty task definition");

    InstructionPrompt p;
    p.definition = definition;
    const Language lang = definition.language;
    size_t used = 0;
    for (const auto& pos : positives) {
        PositiveExample cut{truncate_front(pos.input_text, lang, config.max_example_tokens),
                            pos.output_label};
        used += text::tokenize(cut.input_text, lang).size();
        p.positives.push_back(std::move(cut));
    }
    p.target_text = std::string(target_text);
    if (config.max_content_tokens > 0) {
        size_t remaining = config.max_content_tokens > used ? config.max_content_tokens - used : 1;
        p.target_text = truncate_front(target_text, lang, std::max<size_t>(remaining, 1));
    }

    std::vector<std::pair<std::string, std::string>> blocks;
    for (const auto& pos : p.positives)
        blocks.emplace_back(pos.input_text, label_surface(config, pos.output_label, lang));
    p.assembled = assemble_layout(config.layout, definition.text, blocks, p.target_text);
    p.token_count = text::model_tokens(p.assembled).size();
    return p;
}

InstructionPrompt build_prompt(const SchemaConfig& config, const std::vector<Sample>& pool, uint64_t seed,
                               const Sample& target) {
    // Fixed mode keys every draw on one constant; the target's own pair is
    // still excluded, so its draw can differ from the global one.
    std::string key = config.positives_mode == PositivesMode::resample ? target.sample_id : "*";
    auto positives = select_from(pool, seed, key, target.pair_id, &target.language);
    return assemble_prompt(definition_for(config, target.language), positives, target.text, config);
}

Label normalize_label(std::string_view generated, const SchemaConfig& config) {
    auto fold = [](std::string_view s) {
        std::string t = text::trim(s);
        for (auto& c : t)
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        return t;
    };
    std::string g = fold(generated);
    for (const auto& [lang, s] : config.surfaces) {
        if (g == fold(s.human)) return Label::human;
        if (g == fold(s.model)) return Label::model;
    }
    throw UnparseableLabel("unparseable label output '" + std::string(generated) + "'");
}

}  // namespace sidetect::instruction
