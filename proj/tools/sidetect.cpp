#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sidetect/pipeline.hpp"

namespace pl = sidetect::pipeline;

int main(int argc, char** argv) {
    CLI::App app{"Build detection corpora, train detectors and report their accuracy."};
    app.require_subcommand(1);

    std::string config_path = "configs/fixture.json";
    std::optional<uint64_t> seed;
    bool mock = false;
    std::optional<std::string> run_id;
    std::vector<std::string> formats;
    app.add_option("-c,--config", config_path, "Run configuration (JSON)")->capture_default_str();
    app.add_option("--seed", seed, "Override the run seed");
    app.add_flag("--mock", mock, "Use the offline mock generator");
    app.add_option("--run-id", run_id, "Override the run id");
    app.add_option("--format", formats, "Report formats: markdown, csv")->take_all();

    auto* build = app.add_subcommand("build", "Ingest corpora, generate model texts, split and store the dataset");
    bool force = false;
    build->add_flag("--force", force, "Rebuild even when the stored dataset is up to date");

    auto* train = app.add_subcommand("train", "Train a detector on the stored dataset");
    std::string train_kind;
    train->add_option("kind", train_kind, "statistical, encoder or generative (default: from config)");

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a trained detector on the test split");
    std::string handle;
    evaluate->add_option("--handle", handle, "Detector handle.json (default: the run's best checkpoint)");

    auto* analyze = app.add_subcommand("analyze", "Write the overlap analysis of the stored dataset");

    auto* report = app.add_subcommand("report", "Combine stored predictions of several runs");
    std::vector<std::string> runs;
    report->add_option("runs", runs, "Run ids (default: every run with predictions)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    auto log = [](const std::string& line) { std::cout << line << std::endl; };
    try {
        auto config = pl::load_run_config(config_path);
        pl::Overrides o;
        o.seed = seed;
        if (mock) o.mock = true;
        o.run_id = run_id;
        for (const auto& f : formats) o.formats.push_back(sidetect::evaluation::parse_format(f));
        if (!train_kind.empty()) o.kind = sidetect::detectors::parse_detector_kind(train_kind);
        pl::apply_overrides(config, o);

        if (*build) {
            pl::cmd_build(config, log, nullptr, force);
        } else if (*train) {
            pl::cmd_train(config, log);
        } else if (*evaluate) {
            pl::cmd_evaluate(config, handle, log);
        } else if (*analyze) {
            pl::cmd_analyze(config, log);
        } else if (*report) {
            pl::cmd_report(config, runs, log);
        }
    } catch (const std::exception& e) {
        std::cerr << pl::error_report(e).dump() << std::endl;
        return pl::exit_code_for(e);
    }
    return 0;
}
