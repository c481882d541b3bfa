#include "fcac/cli.hpp"

#include "fcac/plot.hpp"

#include <CLI11.hpp>

#include <ctime>
#include <fstream>
#include <ostream>

namespace fcac {

namespace fs = std::filesystem;

namespace {

std::string utc_now()
{
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_json(const fs::path& path, const nlohmann::json& j)
{
    fs::create_directories(path.parent_path());
    write_file_atomic(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
    return j;
}

fs::path train_into(const ExperimentConfig& config, const PreparedData& data, const fs::path& dir, std::ostream& log)
{
    TrainingStats stats;
    const int every = std::max(1, config.rets.max_iterations / 10);
    auto bundle = train_model(config, data, &stats, [&](const IterationLog& l) {
        if (l.iteration % every == 0 || l.iteration + 1 == config.rets.max_iterations)
            log << "iteration " << l.iteration << " loss " << l.loss << " lr " << l.lr << "\n";
    });

    std::string ndjson;
    for (const auto& l : stats.log) ndjson += to_json(l).dump() + "\n";
    nlohmann::json meta{{"config", to_json(config)},
                        {"seed", config.rets.seed},
                        {"pipeline", pipeline_fingerprint(config.model, config.rets, config.ablation)},
                        {"features", data.features.fingerprint()},
                        {"iterations", stats.iterations},
                        {"episodes_sampled", stats.episodes_sampled},
                        {"final_loss", stats.log.empty() ? 0.0 : stats.log.back().loss}};
    fs::create_directories(dir);
    const auto checkpoint = dir / "checkpoint.json";
    write_file_atomic(dir / "train_log.ndjson", ndjson);
    save_checkpoint(checkpoint, bundle, meta);
    log << "checkpoint " << checkpoint.string() << "\n";
    return checkpoint;
}

struct Evaluated {
    std::vector<RunReport> proposed;
    std::vector<RunReport> finetune;
};

Evaluated evaluate_seeds(const ExperimentConfig& config, const PreparedData& data, const ModelBundle& trained,
                         bool finetune, std::ostream& log)
{
    Evaluated out;
    for (const auto seed : config.evaluation.seeds) {
        const auto schedule = make_schedule(config, data, seed);
        out.proposed.push_back(evaluate_proposed(config, trained, schedule, data.features, seed));
        log << "seed " << seed << " proposed AA " << out.proposed.back().aa << " PD " << out.proposed.back().pd << "\n";
        if (finetune) {
            out.finetune.push_back(evaluate_finetune(config, trained, schedule, data.features, seed));
            log << "seed " << seed << " finetune AA " << out.finetune.back().aa << " PD " << out.finetune.back().pd
                << "\n";
        }
    }
    return out;
}

std::vector<fs::path> write_reports(const fs::path& dir, const Evaluated& e, const nlohmann::json& config,
                                    const std::string& started, std::uint64_t checkpoint_digest)
{
    // Everything is computed before the first write so a failure leaves
    // earlier results untouched.
    std::vector<std::pair<fs::path, nlohmann::json>> files;
    std::vector<fs::path> reports;
    for (std::size_t i = 0; i < e.proposed.size(); ++i) {
        const auto seed_dir = dir / std::to_string(e.proposed[i].seed);
        files.emplace_back(seed_dir / "report.json", to_json(e.proposed[i]));
        reports.push_back(seed_dir / "report.json");
        if (i < e.finetune.size()) {
            files.emplace_back(seed_dir / "finetune_report.json", to_json(e.finetune[i]));
            reports.push_back(seed_dir / "finetune_report.json");
        }
        // Wall-clock data lives beside the report so reports stay reproducible.
        files.emplace_back(seed_dir / "run.json", nlohmann::json{{"started", started},
                                                                  {"finished", utc_now()},
                                                                  {"checkpoint_digest", Digest().u64(checkpoint_digest).hex()}});
    }
    nlohmann::json aggregate{{"config", config}, {"proposed", aggregate_reports(e.proposed)}};
    if (!e.finetune.empty()) aggregate["finetune"] = aggregate_reports(e.finetune);
    files.emplace_back(dir / "aggregate.json", std::move(aggregate));
    for (const auto& [path, j] : files) write_json(path, j);
    return reports;
}

} // namespace

PrepareResult cmd_prepare(const ExperimentConfig& config, std::ostream& log)
{
    PrepareResult result;
    result.data = prepare_data(config);
    auto schedules = nlohmann::json::array();
    for (const auto seed : config.evaluation.seeds)
        schedules.push_back({{"seed", seed}, {"schedule", to_json(make_schedule(config, result.data, seed))}});
    result.schedule_path = config.run_dir() / "schedule.json";
    write_json(result.schedule_path, {{"config", to_json(config)}, {"schedules", std::move(schedules)}});
    log << "prepared " << result.data.features.size() << " feature maps (" << result.data.extracted << " extracted, "
        << result.data.cache_hits << " from cache)\n";
    log << "schedule " << result.schedule_path.string() << "\n";
    return result;
}

fs::path cmd_train(const ExperimentConfig& config, std::ostream& log)
{
    const auto data = prepare_data(config);
    return train_into(config, data, config.run_dir(), log);
}

std::vector<fs::path> cmd_eval(const ExperimentConfig& config, const std::optional<fs::path>& checkpoint,
                               std::ostream& log)
{
    const std::string started = utc_now();
    const auto path = checkpoint.value_or(config.run_dir() / "checkpoint.json");
    const auto loaded = load_checkpoint(path);
    if (loaded.meta.contains("config") && loaded.meta["config"].value("model", nlohmann::json()) != to_json(config.model))
        throw ConfigError("checkpoint " + path.string() + " was trained with a different model config");
    const auto data = prepare_data(config);
    const auto evaluated = evaluate_seeds(config, data, loaded.bundle, config.evaluation.finetune, log);
    return write_reports(config.run_dir(), evaluated, to_json(config), started, loaded.bundle.digest());
}

fs::path cmd_plot(const std::vector<fs::path>& reports, const fs::path& output, const std::string& title)
{
    if (reports.empty()) throw ConfigError("plot needs at least one report");
    std::vector<PlotSeries> series;
    for (const auto& path : reports) {
        RunReport report;
        try {
            report = report_from_json(read_json(path));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("unreadable report " + path.string() + ": " + e.what());
        } catch (const MetricError& e) {
            throw ConfigError("unreadable report " + path.string() + ": " + e.what());
        }
        series.push_back(series_from_report(report));
    }
    if (output.has_parent_path()) fs::create_directories(output.parent_path());
    write_file_atomic(output, render_svg(series, title));
    return output;
}

fs::path cmd_ablate(const ExperimentConfig& config, std::ostream& log)
{
    const std::string started = utc_now();
    const auto data = prepare_data(config);
    const std::vector<std::pair<std::string, Ablation>> variants{
        {"full", {false, false}}, {"no_drpm", {true, false}}, {"no_rets", {false, true}}, {"no_drpm_no_rets", {true, true}}};
    nlohmann::json summary{{"config", to_json(config)}, {"variants", nlohmann::json::object()}};
    for (const auto& [name, flags] : variants) {
        auto variant = config;
        variant.ablation = flags;
        const auto dir = config.run_dir() / "ablation" / name;
        log << "variant " << name << "\n";
        train_into(variant, data, dir, log);
        const auto trained = load_checkpoint(dir / "checkpoint.json").bundle;
        const auto evaluated = evaluate_seeds(variant, data, trained, false, log);
        write_reports(dir, evaluated, to_json(variant), started, trained.digest());
        summary["variants"][name] = aggregate_reports(evaluated.proposed);
    }
    const auto path = config.run_dir() / "ablation.json";
    write_json(path, summary);
    return path;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Few-shot class-incremental audio classification"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    std::string checkpoint;
    std::vector<std::string> report_paths;
    std::string plot_output = "accuracy.svg";
    std::string plot_title = "Accuracy per session";

    auto with_config = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "JSON experiment config");
        sub->add_option("--set", sets, "Override a config key, e.g. --set rets.t=4");
        sub->allow_extras();
        sub->footer("Any --dotted.key=value flag overrides that config key.");
        return sub;
    };
    auto* prepare = with_config(app.add_subcommand("prepare", "Extract features and write the session schedule"));
    auto* train = with_config(app.add_subcommand("train", "Train the base session"));
    auto* eval = with_config(app.add_subcommand("eval", "Run the incremental sessions"));
    eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate (default: <run>/checkpoint.json)");
    auto* ablate = with_config(app.add_subcommand("ablate", "Train and evaluate every ablation variant"));
    auto* plot = app.add_subcommand("plot", "Plot accuracy per session from reports");
    plot->add_option("reports", report_paths, "Report files")->required();
    plot->add_option("-o,--output", plot_output, "Output SVG");
    plot->add_option("--title", plot_title, "Chart title");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (plot->parsed()) {
            out << cmd_plot({report_paths.begin(), report_paths.end()}, plot_output, plot_title).string() << "\n";
            return 0;
        }

        CLI::App* sub = app.get_subcommands().front();
        std::vector<std::string> overrides = sets;
        const auto extras = sub->remaining();
        for (std::size_t i = 0; i < extras.size(); ++i) {
            const auto& arg = extras[i];
            if (arg.rfind("--", 0) != 0 || arg.size() < 3)
                throw ConfigError("unexpected argument '" + arg + "'");
            if (arg.find('=') != std::string::npos)
                overrides.push_back(arg.substr(2));
            else if (i + 1 < extras.size())
                overrides.push_back(arg.substr(2) + "=" + extras[++i]);
            else
                throw ConfigError("override '" + arg + "' has no value");
        }
        const auto config = load_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path), overrides);

        if (sub == prepare)
            cmd_prepare(config, out);
        else if (sub == train)
            cmd_train(config, out);
        else if (sub == eval)
            cmd_eval(config, checkpoint.empty() ? std::nullopt : std::optional<fs::path>(checkpoint), out);
        else if (sub == ablate)
            out << cmd_ablate(config, out).string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace fcac
