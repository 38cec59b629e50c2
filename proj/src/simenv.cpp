#include "ttc/simenv.hpp"
#include "ttc/datasynth.hpp"
#include "ttc/errors.hpp"
#include "ttc/util/fs.hpp"
#include "ttc/util/strings.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ttc::simenv {

pipeline::RepoSnapshot FixtureSpec::snapshot() const {
    return pipeline::load_snapshot(snapshot_dir(), env_spec);
}

verify::SandboxFactory FixtureSpec::sandbox_factory() const {
    return verify::SandboxFactory(snapshot_dir(), issue.base_revision, env_spec);
}

namespace {

pipeline::Issue load_issue(const fs::path& path) {
    json j = json::parse(util::read_file(path));
    pipeline::Issue issue;
    issue.id = j.value("id", "");
    issue.title = j.value("title", "");
    issue.body = j.value("body", "");
    issue.repository = j.value("repository", "");
    issue.base_revision = j.value("base_revision", "base");
    return issue;
}

std::map<std::string, bool> parse_regression_map(const json& j) {
    std::map<std::string, bool> map;
    for (const auto& [name, passes] : j.items()) map[name] = passes.get<bool>();
    return map;
}

[[noreturn]] void load_error(const std::string& fixture, const std::string& check) {
    throw Error("fixture " + fixture + ": " + check);
}

} // namespace

std::map<std::string, bool> run_regression_map(const verify::SandboxLease& sandbox) {
    std::map<std::string, bool> results;
    auto run = util::run_command(sandbox.env().test_command, sandbox.workdir(),
                                 sandbox.env().caps);
    for (const auto& line : util::split_lines(run.stdout_text)) {
        std::string trimmed = util::trim(line);
        if (!util::starts_with(trimmed, "TEST ")) continue;
        if (trimmed.ends_with(": PASS"))
            results[trimmed.substr(5, trimmed.size() - 11)] = true;
        else if (trimmed.ends_with(": FAIL"))
            results[trimmed.substr(5, trimmed.size() - 11)] = false;
    }
    return results;
}

FixtureSpec load_fixture(const fs::path& fixture_dir, bool verify_invariants) {
    if (!fs::is_directory(fixture_dir))
        throw EnvironmentError("fixture directory missing: " + fixture_dir.string());
    fs::path manifest_path = fixture_dir / "fixture.json";
    if (!fs::exists(manifest_path))
        load_error(fixture_dir.filename().string(), "fixture.json is missing");

    json j = json::parse(util::read_file(manifest_path));
    FixtureSpec fixture;
    fixture.dir = fixture_dir;
    fixture.name = j.value("name", fixture_dir.filename().string());
    fixture.language = j.value("language", "python");
    fixture.difficulty = j.value("difficulty", 1);
    if (fixture.difficulty < 1 || fixture.difficulty > 5)
        load_error(fixture.name, "difficulty tag must be 1..5");

    fixture.issue = load_issue(fixture_dir / "issue.json");
    if (!fs::exists(fixture_dir / "golden.patch"))
        load_error(fixture.name, "golden patch file is missing");
    fixture.golden_patch = patchops::parse_diff(util::read_file(fixture_dir / "golden.patch"));
    if (fixture.golden_patch.empty()) load_error(fixture.name, "golden patch is empty");

    std::string repro_ext = fixture.language == "sh" ? ".sh" : ".py";
    fixture.valid_repro = {util::read_file(fixture_dir / ("repro_valid" + repro_ext)),
                           fixture.language};
    fixture.invalid_repro = {util::read_file(fixture_dir / ("repro_invalid" + repro_ext)),
                             fixture.language};
    fixture.env_spec = verify::load_env_spec(fixture_dir / "env_spec.json");

    fixture.regression_before = parse_regression_map(j.value("regression_before", json::object()));
    fixture.regression_after = parse_regression_map(j.value("regression_after", json::object()));

    for (const auto& f : j.value("golden_files", json::array()))
        fixture.golden_files.insert(f.get<std::string>());
    for (const auto& loc : j.value("golden_locations", json::array()))
        fixture.golden_locations.push_back({loc.value("path", ""), loc.value("function", ""),
                                            loc.value("start", std::size_t{0}),
                                            loc.value("end", std::size_t{0})});
    json scenario_map = j.value("scenarios", json::object());
    for (const auto& [name, path] : scenario_map.items())
        fixture.scenario_plans[name] = fixture_dir / path.get<std::string>();

    if (fixture.golden_files.empty()) load_error(fixture.name, "golden_files is empty");
    if (fixture.golden_locations.empty()) load_error(fixture.name, "golden_locations is empty");

    if (verify_invariants) {
        verify::SandboxFactory factory = fixture.sandbox_factory();
        {
            auto lease = factory.lease();
            if (!verify::apply_patch(*lease, fixture.golden_patch))
                load_error(fixture.name, "golden patch does not apply cleanly");
        }
        if (!verify::validate_repro_script(factory, fixture.valid_repro, fixture.golden_patch))
            load_error(fixture.name, "valid reproduction script fails the two-leg check");
        if (verify::validate_repro_script(factory, fixture.invalid_repro, fixture.golden_patch))
            load_error(fixture.name, "invalid reproduction script passes the two-leg check");
        {
            auto pristine = factory.lease();
            if (run_regression_map(*pristine) != fixture.regression_before)
                load_error(fixture.name, "regression map (before) disagrees with execution");
        }
        {
            auto patched = factory.lease();
            verify::apply_patch(*patched, fixture.golden_patch);
            if (run_regression_map(*patched) != fixture.regression_after)
                load_error(fixture.name, "regression map (after) disagrees with execution");
        }
    }
    return fixture;
}

std::vector<FixtureSummary> corpus_manifest(const fs::path& corpus_dir) {
    std::vector<FixtureSummary> manifest;
    if (!fs::is_directory(corpus_dir)) return manifest;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(corpus_dir))
        if (entry.is_directory() && fs::exists(entry.path() / "fixture.json"))
            dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        json j = json::parse(util::read_file(dir / "fixture.json"));
        manifest.push_back({j.value("name", dir.filename().string()),
                            j.value("language", "python"), j.value("difficulty", 1)});
    }
    return manifest;
}

std::string manifest_to_json(const std::vector<FixtureSummary>& manifest) {
    json arr = json::array();
    for (const auto& entry : manifest)
        arr.push_back({{"name", entry.name},
                       {"language", entry.language},
                       {"difficulty", entry.difficulty}});
    return arr.dump(2) + "\n";
}

fs::path default_corpus_dir() {
    if (const char* env = std::getenv("TTC_FIXTURES")) return env;
    return "fixtures";
}

bool patch_resolves_fixture(const FixtureSpec& fixture, const patchops::Patch& patch) {
    verify::SandboxFactory factory = fixture.sandbox_factory();
    verify::VerificationReport report =
        verify::verify_patch(factory, patch, fixture.valid_repro);
    return report.fully_verified();
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

namespace {

bool answer_is_good(const FixtureSpec& fixture, Stage stage, const std::string& answer) {
    pipeline::ParsedAction action = pipeline::analyze_answer(stage, answer);
    if (stage == Stage::repo_understanding) {
        if (action.type != pipeline::ActionType::identify_files) return false;
        std::set<std::string> identified(action.files.begin(), action.files.end());
        return datasynth::check_repo_understanding(identified, fixture.golden_files);
    }
    if (stage == Stage::fault_localization) {
        if (action.type != pipeline::ActionType::localize_faults) return false;
        return datasynth::check_fault_localization(action.locations, fixture.golden_locations);
    }
    return false;
}

bool patch_matches_golden(const FixtureSpec& fixture, const std::string& diff_text) {
    try {
        patchops::Patch patch = patchops::parse_diff(diff_text);
        return patchops::normalize(patch).fingerprint ==
               patchops::normalize(fixture.golden_patch).fingerprint;
    } catch (const ParseError&) {
        return false;
    }
}

} // namespace

search::ProcessScorer oracle_prm(const FixtureSpec& fixture) {
    return [fixture](Stage stage, const std::string&, const std::string& candidate) {
        return answer_is_good(fixture, stage, candidate) ? 1.0 : 0.0;
    };
}

search::OutcomeScorer oracle_orm(const FixtureSpec& fixture) {
    return [fixture](const std::string&, const std::string& patch_text) {
        return patch_matches_golden(fixture, patch_text) ? 1.0 : 0.0;
    };
}

// ---------------------------------------------------------------------------
// Scenario materialization
// ---------------------------------------------------------------------------

namespace {

std::string resolve_ref(const FixtureSpec& fixture, const std::string& value,
                        bool is_repro) {
    if (!util::starts_with(value, "@")) return value;
    if (value == "@golden") return util::read_file(fixture.dir / "golden.patch");
    if (value == "@valid") return fixture.valid_repro.source;
    if (value == "@invalid") return fixture.invalid_repro.source;
    if (util::starts_with(value, "@patches/"))
        return util::read_file(fixture.dir / value.substr(1));
    throw ConfigError("scenario plan " + fixture.name + ": unknown reference " + value +
                      (is_repro ? " (repro)" : " (patch)"));
}

std::string think_text(std::size_t tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens; ++i) {
        if (i) out += " ";
        out += "mull";
    }
    return out;
}

std::string wrap_diff(const std::string& diff) {
    std::string body = diff;
    if (body.empty() || body.back() != '\n') body += "\n";
    return "Proposed fix:\n```diff\n" + body + "```";
}

std::string wrap_repro(const std::string& source, const std::string& language) {
    std::string body = source;
    if (body.empty() || body.back() != '\n') body += "\n";
    return "REPRO:\n```" + language + "\n" + body + "```";
}

// Parseable answers guaranteed wrong by the fixture answer key; emitted for
// candidates whose lineage went off the rails.
const char* kBadFlAnswer = "LOCATIONS:\n- __wrong_file__.txt:nowhere:1-1";
const char* kBadPatch =
    "--- a/__wrong_file__.txt\n+++ b/__wrong_file__.txt\n@@ -1,1 +1,1 @@\n-x\n+y\n";

class ScenarioWriter {
public:
    explicit ScenarioWriter(std::size_t think_tokens) : think_(think_text(think_tokens)) {}

    void emit(const std::string& answer) {
        json entry = {{"match", {{"call_index", next_index_++}}},
                      {"reply", {{"think", think_}, {"answer", answer}}}};
        out_ += entry.dump();
        out_ += "\n";
    }

    std::string str() const { return out_; }

private:
    std::string think_;
    std::string out_;
    std::size_t next_index_ = 0;
};

struct SimCandidate {
    std::size_t index = 0;
    bool good = false;
};

std::vector<SimCandidate> retain_top(std::vector<SimCandidate> candidates, std::size_t keep) {
    std::sort(candidates.begin(), candidates.end(),
              [](const SimCandidate& a, const SimCandidate& b) {
                  if (a.good != b.good) return a.good;
                  return a.index < b.index;
              });
    if (candidates.size() > keep) candidates.resize(keep);
    return candidates;
}

std::string designated_bad(const std::vector<std::string>& list, const FixtureSpec& fixture,
                           Stage stage, const std::string& synthetic) {
    for (const auto& answer : list)
        if (!answer_is_good(fixture, stage, answer)) return answer;
    return synthetic;
}

bool plan_patch_applies(const FixtureSpec& fixture, const std::string& diff_text,
                        std::map<std::string, bool>& memo) {
    auto it = memo.find(diff_text);
    if (it != memo.end()) return it->second;
    bool applies = false;
    try {
        patchops::Patch patch = patchops::parse_diff(diff_text);
        verify::SandboxFactory factory = fixture.sandbox_factory();
        auto lease = factory.lease();
        applies = verify::apply_patch(*lease, patch);
    } catch (const Error&) {
        applies = false;
    }
    memo[diff_text] = applies;
    return applies;
}

} // namespace

ScenarioPlan load_plan(const FixtureSpec& fixture, const std::string& scenario_name) {
    auto it = fixture.scenario_plans.find(scenario_name);
    if (it == fixture.scenario_plans.end())
        throw ConfigError("fixture " + fixture.name + " has no scenario plan '" +
                          scenario_name + "'");
    json j = json::parse(util::read_file(it->second));
    ScenarioPlan plan;
    plan.kind = j.value("kind", "agent");
    plan.think_tokens = j.value("think_tokens", std::size_t{0});
    plan.patch_per_round = j.value("patch_per_round", false);
    for (const auto& a : j.value("ru", json::array()))
        plan.ru_answers.push_back(a.get<std::string>());
    for (const auto& a : j.value("fl", json::array()))
        plan.fl_answers.push_back(a.get<std::string>());
    for (const auto& a : j.value("patch", json::array()))
        plan.patch_answers.push_back(resolve_ref(fixture, a.get<std::string>(), false));
    for (const auto& a : j.value("repro", json::array()))
        plan.repro_answers.push_back(resolve_ref(fixture, a.get<std::string>(), true));
    if (plan.kind == "agent") {
        if (plan.ru_answers.empty() || plan.fl_answers.empty() ||
            plan.patch_answers.empty() || plan.repro_answers.empty())
            throw ConfigError("scenario plan " + scenario_name + " of " + fixture.name +
                              " must script all four stages");
    }
    return plan;
}

std::string materialize_rollouts(const FixtureSpec& fixture, const ScenarioPlan& plan,
                                 std::size_t budget) {
    if (plan.kind == "fallback") {
        json entry = {{"match", json::object()},
                      {"reply", {{"answer", "nothing actionable in this reply"}}}};
        return entry.dump() + "\n";
    }

    ScenarioWriter writer(plan.think_tokens);
    std::map<std::string, bool> apply_memo;
    const std::string script_language = fixture.language == "sh" ? "sh" : "python";
    constexpr std::size_t kMaxRounds = 3; // pipeline default refinement cap

    for (std::size_t rollout = 0; rollout < budget; ++rollout) {
        const std::string& ru = plan.ru_answers[rollout % plan.ru_answers.size()];
        bool ru_good = answer_is_good(fixture, Stage::repo_understanding, ru);
        writer.emit(ru);

        std::string fl = ru_good ? plan.fl_answers[rollout % plan.fl_answers.size()]
                                 : designated_bad(plan.fl_answers, fixture,
                                                  Stage::fault_localization, kBadFlAnswer);
        bool fl_good = ru_good && answer_is_good(fixture, Stage::fault_localization, fl);
        writer.emit(fl);

        const std::string& repro =
            plan.repro_answers[rollout % plan.repro_answers.size()];
        bool script_valid = repro == fixture.valid_repro.source;

        std::size_t consecutive_apply_failures = 0;
        for (std::size_t round = 1; round <= kMaxRounds; ++round) {
            std::string diff;
            if (!fl_good) {
                diff = kBadPatch;
            } else if (plan.patch_per_round) {
                diff = plan.patch_answers[(round - 1) % plan.patch_answers.size()];
            } else {
                diff = plan.patch_answers[rollout % plan.patch_answers.size()];
            }
            writer.emit(wrap_diff(diff));
            if (round == 1) writer.emit(wrap_repro(repro, script_language));
            writer.emit("VERIFY");

            bool applies = plan_patch_applies(fixture, diff, apply_memo);
            bool resolves =
                applies && script_valid && patch_matches_golden(fixture, diff);
            if (resolves) break;
            consecutive_apply_failures = applies ? 0 : consecutive_apply_failures + 1;
            if (consecutive_apply_failures >= 2) break;
        }
    }
    return writer.str();
}

std::string materialize_dev_search(const FixtureSpec& fixture, const ScenarioPlan& plan,
                                   std::size_t budget) {
    if (plan.kind == "fallback") {
        json entry = {{"match", json::object()},
                      {"reply", {{"answer", "nothing actionable in this reply"}}}};
        return entry.dump() + "\n";
    }

    ScenarioWriter writer(plan.think_tokens);
    const std::string script_language = fixture.language == "sh" ? "sh" : "python";
    std::size_t width = search::budget_to_width(budget);
    std::size_t per_parent = std::max<std::size_t>(1, budget / width);

    // Repository understanding: parentless, answers cycle in call order.
    std::vector<SimCandidate> ru_candidates;
    for (std::size_t i = 0; i < budget; ++i) {
        const std::string& answer = plan.ru_answers[i % plan.ru_answers.size()];
        writer.emit(answer);
        ru_candidates.push_back(
            {i, answer_is_good(fixture, Stage::repo_understanding, answer)});
    }
    std::vector<SimCandidate> retained_ru = retain_top(ru_candidates, width);

    // Fault localization: the answer list cycles over calls whose parent kept
    // a good lineage; derailed parents produce a wrong-but-parseable answer.
    std::vector<SimCandidate> fl_candidates;
    std::size_t good_cycle = 0;
    for (std::size_t i = 0; i < budget; ++i) {
        const SimCandidate& parent = retained_ru[i % retained_ru.size()];
        std::string answer;
        if (parent.good)
            answer = plan.fl_answers[good_cycle++ % plan.fl_answers.size()];
        else
            answer = designated_bad(plan.fl_answers, fixture, Stage::fault_localization,
                                    kBadFlAnswer);
        writer.emit(answer);
        fl_candidates.push_back(
            {i, parent.good && answer_is_good(fixture, Stage::fault_localization, answer)});
    }
    std::vector<SimCandidate> retained_fl = retain_top(fl_candidates, width);

    // Patch generation + per-candidate reproduction script.
    std::size_t patch_cycle = 0;
    std::size_t repro_cycle = 0;
    for (const auto& parent : retained_fl) {
        for (std::size_t j = 0; j < per_parent; ++j) {
            std::string diff;
            if (parent.good)
                diff = plan.patch_answers[patch_cycle++ % plan.patch_answers.size()];
            else
                diff = kBadPatch;
            writer.emit(wrap_diff(diff));
            writer.emit(wrap_repro(
                plan.repro_answers[repro_cycle++ % plan.repro_answers.size()],
                script_language));
        }
    }
    return writer.str();
}

providers::ProviderConfig scenario_provider_config(const FixtureSpec& fixture,
                                                   const std::string& scenario_name,
                                                   search::Strategy strategy,
                                                   std::size_t budget,
                                                   util::TempDir& scratch) {
    ScenarioPlan plan = load_plan(fixture, scenario_name);
    std::string jsonl = strategy == search::Strategy::dev_search
                            ? materialize_dev_search(fixture, plan, budget)
                            : materialize_rollouts(fixture, plan, budget);
    fs::path path = scratch.path() / (fixture.name + "-" + scenario_name + "-" +
                                      search::strategy_name(strategy) + "-" +
                                      std::to_string(budget) + ".jsonl");
    util::write_file(path, jsonl);
    providers::ProviderConfig config;
    config.mock_scenario = path.string();
    return config;
}

} // namespace ttc::simenv
