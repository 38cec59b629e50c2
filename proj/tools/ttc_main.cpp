#include "ttc/datasynth.hpp"
#include "ttc/errors.hpp"
#include "ttc/evalkit.hpp"
#include "ttc/patchops.hpp"
#include "ttc/pipeline.hpp"
#include "ttc/providers.hpp"
#include "ttc/search.hpp"
#include "ttc/simenv.hpp"
#include "ttc/util/fs.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ttc;

namespace {

providers::ProviderConfig provider_config_from_file(const std::string& path) {
    json j = json::parse(util::read_file(path));
    providers::ProviderConfig config;
    config.endpoint = j.value("endpoint", "");
    config.mock_scenario = j.value("mock_scenario", "");
    config.replay = j.value("replay", false);
    config.temperature = j.value("temperature", 0.0);
    config.max_reply_tokens = j.value("max_reply_tokens", 4096);
    if (j.contains("bearer_token")) config.bearer_token = j["bearer_token"].get<std::string>();
    config.validate();
    return config;
}

int cmd_run(const std::string& snapshot_dir, const std::string& provider_cfg,
            const std::string& issue_file, std::size_t t_max, const std::string& out_file) {
    auto provider = providers::make_provider(provider_config_from_file(provider_cfg));
    pipeline::Issue issue;
    if (!issue_file.empty()) {
        json j = json::parse(util::read_file(issue_file));
        issue.id = j.value("id", "cli-issue");
        issue.title = j.value("title", "");
        issue.body = j.value("body", "");
        issue.repository = j.value("repository", "");
        issue.base_revision = j.value("base_revision", "base");
    }
    std::optional<verify::EnvSpec> env;
    if (fs::exists(fs::path(snapshot_dir).parent_path() / "env_spec.json"))
        env = verify::load_env_spec(fs::path(snapshot_dir).parent_path() / "env_spec.json");
    pipeline::RepoSnapshot repo = pipeline::load_snapshot(snapshot_dir, env);

    pipeline::Trajectory trajectory =
        pipeline::generate_trajectory(issue, repo, *provider, t_max);
    std::string jsonl = pipeline::trajectory_to_jsonl(trajectory);
    if (out_file.empty())
        std::cout << jsonl;
    else
        util::write_file(out_file, jsonl);
    std::cout << "terminal_status: "
              << pipeline::terminal_status_name(trajectory.terminal_status) << " ("
              << trajectory.steps.size() << " steps, " << trajectory.total_output_tokens
              << " output tokens)\n";
    return 0;
}

int cmd_search(const std::string& corpus_dir, const std::string& strategy_name,
               std::size_t budget, std::uint64_t seed, const std::string& scenario,
               const std::string& out_dir, const std::string& issues_csv) {
    search::Strategy strategy = search::strategy_from_name(strategy_name);
    std::set<std::string> wanted;
    if (!issues_csv.empty()) {
        std::string current;
        for (char c : issues_csv + ",") {
            if (c == ',') {
                if (!current.empty()) wanted.insert(current);
                current.clear();
            } else {
                current += c;
            }
        }
    }

    auto manifest = simenv::corpus_manifest(corpus_dir);
    if (manifest.empty()) {
        std::cerr << "no fixtures found under " << corpus_dir << "\n";
        return 1;
    }
    if (!out_dir.empty()) fs::create_directories(out_dir);

    std::vector<evalkit::EvalRecord> records;
    for (const auto& summary : manifest) {
        if (!wanted.empty() && !wanted.count(summary.name)) continue;
        simenv::FixtureSpec fixture =
            simenv::load_fixture(fs::path(corpus_dir) / summary.name, false);

        util::TempDir scratch("ttc-scenario");
        providers::ProviderConfig provider_cfg =
            simenv::scenario_provider_config(fixture, scenario, strategy, budget, scratch);
        auto provider = providers::make_provider(provider_cfg);

        search::SearchConfig config;
        config.budget = budget;
        config.seed = seed;
        config.strategy = strategy;

        search::Handles handles;
        handles.provider = provider.get();
        handles.prm = simenv::oracle_prm(fixture);
        handles.orm = simenv::oracle_orm(fixture);

        pipeline::RepoSnapshot repo = fixture.snapshot();
        search::SearchOutcome outcome =
            search::run_search(fixture.issue, repo, config, handles);

        bool resolved =
            outcome.selected && simenv::patch_resolves_fixture(fixture, *outcome.selected);
        evalkit::EvalRecord record;
        record.issue_id = fixture.issue.id;
        record.resolved = resolved;
        record.output_tokens = outcome.total_output_tokens;
        record.budget = budget;
        record.strategy = search::strategy_name(strategy);
        if (!outcome.fault_candidates.empty())
            record.localization = evalkit::localization_flags(
                outcome.fault_candidates.front().action.locations, fixture.golden_files,
                fixture.golden_locations);
        records.push_back(record);

        if (!out_dir.empty()) {
            util::write_file(fs::path(out_dir) / (fixture.name + ".json"),
                             search::outcome_to_json(outcome, fixture.issue, config));
        }
        std::cout << fixture.name << ": " << (resolved ? "resolved" : "unresolved") << " ("
                  << outcome.total_output_tokens << " tokens)\n";
    }
    if (!out_dir.empty())
        util::write_file(fs::path(out_dir) / "records.jsonl",
                         evalkit::eval_records_to_jsonl(records));
    return 0;
}

int cmd_synth(const std::string& corpus_dir, const std::string& provider_cfg,
              const std::string& base_model_cfg, const std::string& scenario_name,
              const std::string& base_scenario_name, const std::string& denylist_file,
              const std::string& out_dir) {
    if (provider_cfg.empty() == scenario_name.empty())
        throw ConfigError("pass exactly one of --provider / --scenario");

    std::set<std::string> denylist;
    if (!denylist_file.empty()) {
        json j = json::parse(util::read_file(denylist_file));
        for (const auto& repo : j) denylist.insert(repo.get<std::string>());
    }
    datasynth::IngestStats stats;
    auto records = datasynth::ingest_corpus(corpus_dir, denylist, stats);
    std::cout << "ingested " << stats.accepted << "/" << stats.scanned << " triplets"
              << " (denylisted " << stats.denylisted << ", issue-filtered "
              << stats.filtered_issue << ", pr-filtered " << stats.filtered_pr << ")\n";

    std::shared_ptr<providers::Provider> provider;
    if (!provider_cfg.empty())
        provider = providers::make_provider(provider_config_from_file(provider_cfg));
    std::shared_ptr<providers::Provider> base_model;
    if (!base_model_cfg.empty())
        base_model = providers::make_provider(provider_config_from_file(base_model_cfg));

    fs::create_directories(out_dir);
    std::ofstream records_out(fs::path(out_dir) / "training_records.jsonl");
    std::ofstream verdicts_out(fs::path(out_dir) / "verdicts.jsonl");
    std::size_t emitted = 0;
    std::map<std::string, std::map<std::string, std::size_t>> tallies;

    for (const auto& triplet : records) {
        util::TempDir scratch("ttc-synth");
        std::shared_ptr<providers::Provider> bootstrap = provider;
        std::shared_ptr<providers::Provider> base = base_model;
        if (!scenario_name.empty()) {
            // Bundled fixture corpora script their own bootstrap model.
            simenv::FixtureSpec fixture =
                simenv::load_fixture(fs::path(corpus_dir) / triplet.issue.id, false);
            bootstrap = providers::make_provider(simenv::scenario_provider_config(
                fixture, scenario_name, search::Strategy::exec_only, 1, scratch));
            if (!base_scenario_name.empty())
                base = providers::make_provider(simenv::scenario_provider_config(
                    fixture, base_scenario_name, search::Strategy::exec_only, 1, scratch));
        }
        pipeline::RepoSnapshot repo =
            pipeline::load_snapshot(triplet.snapshot_dir, triplet.env_spec);
        pipeline::Trajectory trajectory =
            pipeline::generate_trajectory(triplet.issue, repo, *bootstrap, 12);
        datasynth::RejectionVerdict verdict =
            datasynth::rejection_sample(trajectory, triplet, base.get());
        auto training = datasynth::emit_training_records(trajectory, verdict);
        records_out << datasynth::training_records_to_jsonl(training);
        emitted += training.size();

        json v = {{"issue_id", triplet.issue.id},
                  {"repo_understanding", datasynth::criterion_name(verdict.repo_understanding_ok)},
                  {"fault_localization", datasynth::criterion_name(verdict.fault_localization_ok)},
                  {"repro", datasynth::criterion_name(verdict.repro_ok)},
                  {"patch", datasynth::criterion_name(verdict.patch_ok)},
                  {"complexity", datasynth::criterion_name(verdict.complexity_ok)},
                  {"retained_steps", verdict.retained_steps}};
        verdicts_out << v.dump() << "\n";
        for (const auto& key :
             {"repo_understanding", "fault_localization", "repro", "patch", "complexity"})
            tallies[key][v[key].get<std::string>()] += 1;
    }
    util::write_file(fs::path(out_dir) / "tallies.json", json(tallies).dump(2) + "\n");
    std::cout << "emitted " << emitted << " training records to " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& runs_dir, const std::string& solve_counts,
             const std::string& group_by_name, const std::string& out_file) {
    auto records =
        evalkit::eval_records_from_jsonl(util::read_file(fs::path(runs_dir) / "records.jsonl"));
    std::map<std::string, int> buckets;
    if (!solve_counts.empty()) buckets = evalkit::load_bucket_sidecar(solve_counts);

    evalkit::GroupBy group_by = evalkit::group_by_from_name(group_by_name);
    auto report = evalkit::resolution_report(records, group_by, buckets);
    std::string csv = evalkit::resolution_report_csv(report, group_by);
    if (out_file.empty())
        std::cout << csv;
    else
        util::write_file(out_file, csv);
    return 0;
}

int cmd_plot_data(const std::string& runs_dir, const std::string& solve_counts,
                  const std::string& metric, const std::string& out_file) {
    auto records =
        evalkit::eval_records_from_jsonl(util::read_file(fs::path(runs_dir) / "records.jsonl"));
    std::string csv;
    if (metric == "scaling") {
        auto buckets = evalkit::load_bucket_sidecar(solve_counts);
        csv = evalkit::token_scaling_csv(evalkit::token_scaling_report(records, buckets));
    } else if (metric == "resolution") {
        auto report = evalkit::resolution_report(records, evalkit::GroupBy::budget);
        csv = evalkit::resolution_report_csv(report, evalkit::GroupBy::budget);
    } else if (metric == "localization") {
        csv = evalkit::localization_csv(evalkit::localization_report(records));
    } else {
        std::cerr << "unknown metric: " << metric << "\n";
        return 1;
    }
    if (out_file.empty())
        std::cout << csv;
    else
        util::write_file(out_file, csv);
    return 0;
}

int cmd_corpus(const std::string& corpus_dir, bool self_check) {
    auto manifest = simenv::corpus_manifest(corpus_dir);
    std::cout << simenv::manifest_to_json(manifest);
    if (manifest.empty()) std::cerr << "warning: empty corpus\n";
    if (self_check) {
        for (const auto& summary : manifest) {
            simenv::load_fixture(fs::path(corpus_dir) / summary.name, true);
            std::cout << "fixture " << summary.name << ": ok\n";
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Test-time-compute orchestration for issue-resolving agents"};
    app.require_subcommand(1);

    // run
    std::string run_snapshot, run_provider, run_issue, run_out;
    std::size_t run_t_max = 12;
    auto* run = app.add_subcommand("run", "Run one trajectory over a snapshot");
    run->add_option("--snapshot", run_snapshot, "snapshot directory")->required();
    run->add_option("--provider", run_provider, "provider config JSON")->required();
    run->add_option("--issue", run_issue, "issue JSON file");
    run->add_option("--t-max", run_t_max, "step budget");
    run->add_option("--out", run_out, "trajectory JSONL output");

    // search
    std::string search_corpus = simenv::default_corpus_dir().string();
    std::string search_strategy = "dev", search_scenario = "search", search_out, search_issues;
    std::size_t search_budget = 1;
    std::uint64_t search_seed = 0;
    auto* search_cmd = app.add_subcommand("search", "Search strategies over the fixture corpus");
    search_cmd->add_option("--corpus", search_corpus, "fixture corpus directory");
    search_cmd->add_option("--strategy", search_strategy, "dev|exec|orm-exec|vote");
    search_cmd->add_option("--budget", search_budget, "rollout budget N")->required();
    search_cmd->add_option("--seed", search_seed, "selection seed");
    search_cmd->add_option("--scenario", search_scenario, "scenario plan name");
    search_cmd->add_option("--issues", search_issues, "comma-separated fixture names");
    search_cmd->add_option("--out", search_out, "output directory");

    // synth
    std::string synth_corpus, synth_provider, synth_base, synth_scenario, synth_base_scenario,
        synth_denylist, synth_out = "synth-out";
    auto* synth = app.add_subcommand("synth", "Rejection-sampled training data synthesis");
    synth->add_option("--corpus", synth_corpus, "triplet corpus directory")->required();
    synth->add_option("--provider", synth_provider, "bootstrap provider config");
    synth->add_option("--base-model", synth_base, "base model provider config");
    synth->add_option("--scenario", synth_scenario,
                      "fixture scenario name to script the bootstrap model");
    synth->add_option("--base-scenario", synth_base_scenario,
                      "fixture scenario name to script the base model");
    synth->add_option("--denylist", synth_denylist, "JSON list of denylisted repositories");
    synth->add_option("--out", synth_out, "output directory");

    // eval
    std::string eval_runs, eval_counts, eval_group = "strategy", eval_out;
    auto* eval = app.add_subcommand("eval", "Aggregate run records into reports");
    eval->add_option("--runs", eval_runs, "directory with records.jsonl")->required();
    eval->add_option("--solve-counts", eval_counts, "solve-count sidecar JSON");
    eval->add_option("--group-by", eval_group, "strategy|budget|bucket|repository");
    eval->add_option("--out", eval_out, "CSV output file");

    // plot-data
    std::string plot_runs, plot_counts, plot_metric = "scaling", plot_out;
    auto* plot = app.add_subcommand("plot-data", "Emit CSV plot data");
    plot->add_option("--runs", plot_runs, "directory with records.jsonl")->required();
    plot->add_option("--solve-counts", plot_counts, "solve-count sidecar JSON");
    plot->add_option("--metric", plot_metric, "scaling|resolution|localization");
    plot->add_option("--out", plot_out, "CSV output file");

    // corpus
    std::string corpus_dir = simenv::default_corpus_dir().string();
    bool corpus_check = false;
    auto* corpus = app.add_subcommand("corpus", "List or self-check the fixture corpus");
    corpus->add_option("--dir", corpus_dir, "fixture corpus directory");
    corpus->add_flag("--self-check", corpus_check, "re-verify every fixture invariant");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_snapshot, run_provider, run_issue, run_t_max, run_out);
        if (search_cmd->parsed())
            return cmd_search(search_corpus, search_strategy, search_budget, search_seed,
                              search_scenario, search_out, search_issues);
        if (synth->parsed())
            return cmd_synth(synth_corpus, synth_provider, synth_base, synth_scenario,
                             synth_base_scenario, synth_denylist, synth_out);
        if (eval->parsed()) return cmd_eval(eval_runs, eval_counts, eval_group, eval_out);
        if (plot->parsed()) return cmd_plot_data(plot_runs, plot_counts, plot_metric, plot_out);
        if (corpus->parsed()) return cmd_corpus(corpus_dir, corpus_check);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
