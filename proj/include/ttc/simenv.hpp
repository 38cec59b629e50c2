#pragma once
#include "ttc/evalkit.hpp"
#include "ttc/patchops.hpp"
#include "ttc/pipeline.hpp"
#include "ttc/search.hpp"
#include "ttc/verify.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace ttc::simenv {

// A bundled fixture: a buggy snapshot, its golden patch, valid and invalid
// reproduction scripts, a declared regression map, the stage answer key, and
// scripted provider scenarios.
struct FixtureSpec {
    std::string name;
    std::filesystem::path dir;
    std::string language;
    int difficulty = 1; // bucket tag 1..5

    pipeline::Issue issue;
    patchops::Patch golden_patch;
    verify::ReproScript valid_repro;
    verify::ReproScript invalid_repro;
    verify::EnvSpec env_spec;

    std::map<std::string, bool> regression_before; // test name -> passes pre-patch
    std::map<std::string, bool> regression_after;  // test name -> passes post-patch

    std::set<std::string> golden_files;
    std::vector<pipeline::FaultLocation> golden_locations;

    std::map<std::string, std::filesystem::path> scenario_plans; // name -> plan file

    std::filesystem::path snapshot_dir() const { return dir / "snapshot"; }
    pipeline::RepoSnapshot snapshot() const;
    verify::SandboxFactory sandbox_factory() const;
};

struct FixtureSummary {
    std::string name;
    std::string language;
    int difficulty = 1;
};

// Loads and, by default, re-verifies every FixtureSpec invariant: the golden
// patch applies cleanly, the valid script passes the two-leg check, the
// invalid one fails it, and the regression map matches actual execution.
// Violations raise an error naming the failed check.
FixtureSpec load_fixture(const std::filesystem::path& fixture_dir,
                         bool verify_invariants = true);

std::vector<FixtureSummary> corpus_manifest(const std::filesystem::path& corpus_dir);
std::string manifest_to_json(const std::vector<FixtureSummary>& manifest);

// Default corpus location relative to a working tree; overridable via the
// TTC_FIXTURES environment variable.
std::filesystem::path default_corpus_dir();

// Runs the fixture's own test command and tallies per-test results
// ("TEST <name>: PASS|FAIL" lines).
std::map<std::string, bool> run_regression_map(const verify::SandboxLease& sandbox);

// Golden check used for resolution rates: the patch applies, the fixture's
// valid reproduction script reports resolved, and no regression fails.
bool patch_resolves_fixture(const FixtureSpec& fixture, const patchops::Patch& patch);

// ---------------------------------------------------------------------------
// Oracle reward models: score by the fixture answer key instead of a model.
// ---------------------------------------------------------------------------

search::ProcessScorer oracle_prm(const FixtureSpec& fixture);
search::OutcomeScorer oracle_orm(const FixtureSpec& fixture);

// ---------------------------------------------------------------------------
// Scenario plans: compact per-fixture answer scripts materialized into the
// JSONL mock-scenario format for a given run shape.
//
// Plan JSON:
//   {"kind": "agent" | "fallback",
//    "think_tokens": 0,
//    "patch_per_round": false,
//    "ru": ["FILES: ..."], "fl": ["LOCATIONS: ..."],
//    "patch": ["@golden", "@patches/bad.patch", "...literal diff..."],
//    "repro": ["@valid", "@invalid", "...literal source..."]}
// ---------------------------------------------------------------------------

struct ScenarioPlan {
    std::string kind = "agent";
    std::size_t think_tokens = 0;
    bool patch_per_round = false;
    std::vector<std::string> ru_answers;
    std::vector<std::string> fl_answers;
    std::vector<std::string> patch_answers; // resolved diff text
    std::vector<std::string> repro_answers; // resolved script source
};

ScenarioPlan load_plan(const FixtureSpec& fixture, const std::string& scenario_name);

// Scenario JSONL for `budget` independent pipeline rollouts (the baselines'
// call pattern; budget 1 is a plain trajectory run).
std::string materialize_rollouts(const FixtureSpec& fixture, const ScenarioPlan& plan,
                                 std::size_t budget);

// Scenario JSONL for one dev-search run at the given budget.
std::string materialize_dev_search(const FixtureSpec& fixture, const ScenarioPlan& plan,
                                   std::size_t budget);

// Writes the right scenario for the strategy/budget to a fresh temp file and
// returns a mock ProviderConfig pointing at it. The TempDir keeps it alive.
providers::ProviderConfig scenario_provider_config(const FixtureSpec& fixture,
                                                   const std::string& scenario_name,
                                                   search::Strategy strategy,
                                                   std::size_t budget,
                                                   util::TempDir& scratch);

} // namespace ttc::simenv
