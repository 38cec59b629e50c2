#include "ttc/search.hpp"
#include "ttc/errors.hpp"
#include "ttc/util/strings.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

using nlohmann::json;

namespace ttc::search {

const char* strategy_name(Strategy s) {
    switch (s) {
    case Strategy::dev_search: return "dev_search";
    case Strategy::exec_only: return "exec_only";
    case Strategy::orm_exec: return "orm_exec";
    case Strategy::voting: return "voting";
    }
    return "unknown";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "dev" || name == "dev_search") return Strategy::dev_search;
    if (name == "exec" || name == "exec_only") return Strategy::exec_only;
    if (name == "orm-exec" || name == "orm_exec") return Strategy::orm_exec;
    if (name == "vote" || name == "voting") return Strategy::voting;
    throw ConfigError("unknown search strategy: " + name);
}

void SearchConfig::validate() const {
    if (budget < 1) throw ContractError("budget must be >= 1");
    if (beam_width > budget) throw ContractError("beam_width must be <= budget");
}

std::size_t budget_to_width(std::size_t budget) {
    if (budget < 1) throw ContractError("budget must be >= 1");
    switch (budget) {
    case 1: return 1;
    case 2: return 2;
    case 4: return 2;
    case 8: return 4;
    default: return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(
                                                 std::sqrt(static_cast<double>(budget)))));
    }
}

namespace {

// A candidate's lineage rendered as a trajectory prefix for prompting.
pipeline::Trajectory lineage_trajectory(const pipeline::Issue& issue,
                                        const std::vector<pipeline::TrajectoryStep>& steps) {
    pipeline::Trajectory trajectory;
    trajectory.issue = issue;
    trajectory.steps = steps;
    return trajectory;
}

} // namespace

std::vector<Candidate> beam_stage(const std::vector<Candidate>& inputs, Stage stage,
                                  std::size_t count, std::size_t keep,
                                  const pipeline::Issue& issue,
                                  const pipeline::RepoSnapshot& repo, Handles& handles,
                                  std::size_t* token_sink) {
    if (inputs.empty()) throw ContractError("beam_stage: no input candidates");
    if (count < keep) throw ContractError("beam_stage: N must be >= k");

    std::string issue_text = pipeline::render_issue(issue);

    std::vector<Candidate> generated;
    std::vector<std::string> failed_raw;
    for (std::size_t i = 0; i < count; ++i) {
        const Candidate& parent = inputs[i % inputs.size()];
        pipeline::Trajectory prefix = lineage_trajectory(issue, parent.lineage);
        pipeline::TrajectoryStep step =
            pipeline::run_stage(issue, repo, prefix, stage, *handles.provider,
                                /*script_already_recorded=*/false, prefix.steps.size() + 1);
        if (token_sink) *token_sink += step.output_tokens;

        if (step.action.type == pipeline::ActionType::fallback) {
            failed_raw.push_back(step.answer);
            continue;
        }
        step.observation = pipeline::observe_action(step.action, repo, 16 * 1024);

        Candidate candidate;
        candidate.stage = stage;
        candidate.answer = step.answer;
        candidate.action = step.action;
        candidate.generation_index = i;
        candidate.parent_index = parent.generation_index;
        candidate.lineage = parent.lineage;
        candidate.lineage.push_back(std::move(step));
        candidate.prm_score = handles.prm(stage, issue_text, candidate.answer);
        generated.push_back(std::move(candidate));
    }

    if (generated.empty()) {
        std::string detail;
        for (const auto& raw : failed_raw) detail += "\n--- raw reply ---\n" + raw;
        throw Error("beam_stage: all " + std::to_string(count) +
                    " generations failed to parse" + detail);
    }

    std::sort(generated.begin(), generated.end(), [](const Candidate& a, const Candidate& b) {
        if (*a.prm_score != *b.prm_score) return *a.prm_score > *b.prm_score;
        return a.generation_index < b.generation_index;
    });
    if (generated.size() > keep) generated.resize(keep);
    return generated;
}

const PoolEntry& select_final(std::vector<PoolEntry>& pool, const OutcomeScorer& orm,
                              const std::string& issue_text) {
    if (pool.empty()) throw ContractError("select_final: empty pool");
    for (auto& entry : pool)
        if (!entry.orm_score) entry.orm_score = orm(issue_text, entry.patch.raw);

    const PoolEntry* best = &pool.front();
    for (const auto& entry : pool) {
        auto key = [](const PoolEntry& e) {
            return std::make_tuple(
                e.report.repro_outcome == verify::ReproOutcome::resolved ? 1 : 0,
                e.report.regression_passed, *e.orm_score,
                -static_cast<long>(e.generation_index));
        };
        if (key(entry) > key(*best)) best = &entry;
    }
    return *best;
}

namespace {

struct PatchStageResult {
    std::vector<PoolEntry> pool;
    std::vector<Candidate> patch_candidates;
};

// Expands each retained localization into patch candidates, generates a
// reproduction script per candidate, and execution-verifies everything.
PatchStageResult expand_and_verify(const std::vector<Candidate>& parents,
                                   std::size_t per_parent, const pipeline::Issue& issue,
                                   const pipeline::RepoSnapshot& repo, Handles& handles,
                                   std::size_t* token_sink) {
    PatchStageResult result;
    std::optional<verify::SandboxFactory> factory;
    if (repo.env_spec)
        factory.emplace(repo.root_path, issue.base_revision, *repo.env_spec);

    std::size_t generation_index = 0;
    for (const auto& parent : parents) {
        for (std::size_t j = 0; j < per_parent; ++j) {
            pipeline::Trajectory prefix = lineage_trajectory(issue, parent.lineage);
            pipeline::TrajectoryStep patch_step = pipeline::run_stage(
                issue, repo, prefix, Stage::patch_generation, *handles.provider, false,
                prefix.steps.size() + 1);
            if (token_sink) *token_sink += patch_step.output_tokens;
            std::size_t my_index = generation_index++;
            if (patch_step.action.type == pipeline::ActionType::fallback) continue;
            patch_step.observation = pipeline::observe_action(patch_step.action, repo, 16 * 1024);

            Candidate candidate;
            candidate.stage = Stage::patch_generation;
            candidate.answer = patch_step.answer;
            candidate.action = patch_step.action;
            candidate.generation_index = my_index;
            candidate.parent_index = parent.generation_index;
            candidate.lineage = parent.lineage;
            candidate.lineage.push_back(patch_step);

            // One more model call produces the reproduction script for this
            // candidate's verification.
            std::optional<verify::ReproScript> script;
            pipeline::Trajectory with_patch = lineage_trajectory(issue, candidate.lineage);
            pipeline::TrajectoryStep repro_step = pipeline::run_stage(
                issue, repo, with_patch, Stage::patch_verification, *handles.provider, false,
                with_patch.steps.size() + 1);
            if (token_sink) *token_sink += repro_step.output_tokens;
            if (repro_step.action.type == pipeline::ActionType::emit_repro_script)
                script = verify::ReproScript{repro_step.action.script_source,
                                             repro_step.action.script_language};

            PoolEntry entry;
            entry.patch = patchops::parse_diff(patch_step.action.diff_text);
            entry.generation_index = candidate.generation_index;
            if (factory) {
                try {
                    entry.report = verify::verify_patch(*factory, entry.patch, script);
                } catch (const Error& e) {
                    entry.diagnostic = e.what();
                }
            } else {
                entry.diagnostic = "no environment spec; verification skipped";
            }
            result.pool.push_back(std::move(entry));
            result.patch_candidates.push_back(std::move(candidate));
        }
    }
    return result;
}

} // namespace

SearchOutcome run_dev_search(const pipeline::Issue& issue, const pipeline::RepoSnapshot& repo,
                             const SearchConfig& config, Handles& handles) {
    config.validate();
    if (!handles.prm) throw ContractError("dev_search requires a PRM scorer");
    if (!handles.orm) throw ContractError("dev_search requires an ORM scorer");

    SearchOutcome outcome;
    outcome.strategy_used = Strategy::dev_search;
    std::size_t budget = config.budget;
    std::size_t width = config.beam_width ? config.beam_width : budget_to_width(budget);

    Candidate root;
    root.generation_index = 0;

    outcome.repo_candidates = beam_stage({root}, Stage::repo_understanding, budget, width,
                                         issue, repo, handles, &outcome.total_output_tokens);
    outcome.fault_candidates =
        beam_stage(outcome.repo_candidates, Stage::fault_localization, budget, width, issue,
                   repo, handles, &outcome.total_output_tokens);

    std::size_t per_parent = std::max<std::size_t>(1, budget / width);
    PatchStageResult patches = expand_and_verify(outcome.fault_candidates, per_parent, issue,
                                                 repo, handles, &outcome.total_output_tokens);
    outcome.pool = std::move(patches.pool);

    if (!outcome.pool.empty()) {
        const PoolEntry& best =
            select_final(outcome.pool, handles.orm, pipeline::render_issue(issue));
        outcome.selected = best.patch;
    }
    return outcome;
}

SearchOutcome run_baseline(const pipeline::Issue& issue, const pipeline::RepoSnapshot& repo,
                           const SearchConfig& config, Handles& handles) {
    config.validate();
    if (config.strategy == Strategy::dev_search)
        throw ContractError("run_baseline only handles exec_only / orm_exec / voting");

    SearchOutcome outcome;
    outcome.strategy_used = config.strategy;

    std::optional<verify::SandboxFactory> factory;
    if (repo.env_spec)
        factory.emplace(repo.root_path, issue.base_revision, *repo.env_spec);

    std::vector<patchops::Patch> all_patches;
    for (std::size_t rollout = 0; rollout < config.budget; ++rollout) {
        pipeline::TrajectoryRun run = pipeline::run_pipeline(issue, repo, *handles.provider);
        outcome.total_output_tokens += run.trajectory.total_output_tokens;
        if (!run.final_patch) continue;

        PoolEntry entry;
        entry.patch = *run.final_patch;
        entry.generation_index = rollout;
        if (run.final_report) {
            entry.report = *run.final_report;
        } else if (factory) {
            entry.report = verify::verify_patch(*factory, entry.patch, run.script);
        } else {
            entry.diagnostic = "no environment spec; verification skipped";
        }
        all_patches.push_back(entry.patch);
        outcome.pool.push_back(std::move(entry));
    }
    if (outcome.pool.empty()) return outcome;

    std::string issue_text = pipeline::render_issue(issue);
    switch (config.strategy) {
    case Strategy::exec_only: {
        // Ties among fully verified patches resolve by a seeded uniform draw;
        // with nothing verified the draw runs over the whole pool.
        std::vector<const PoolEntry*> pick_from;
        for (const auto& entry : outcome.pool)
            if (entry.report.fully_verified()) pick_from.push_back(&entry);
        if (pick_from.empty())
            for (const auto& entry : outcome.pool) pick_from.push_back(&entry);
        std::mt19937_64 rng(config.seed);
        std::uniform_int_distribution<std::size_t> dist(0, pick_from.size() - 1);
        outcome.selected = pick_from[dist(rng)]->patch;
        break;
    }
    case Strategy::orm_exec: {
        std::vector<PoolEntry*> verified;
        for (auto& entry : outcome.pool)
            if (entry.report.fully_verified()) verified.push_back(&entry);
        if (verified.empty())
            for (auto& entry : outcome.pool) verified.push_back(&entry);
        PoolEntry* best = nullptr;
        for (auto* entry : verified) {
            if (!entry->orm_score) entry->orm_score = handles.orm(issue_text, entry->patch.raw);
            if (!best || *entry->orm_score > *best->orm_score ||
                (*entry->orm_score == *best->orm_score &&
                 entry->generation_index < best->generation_index))
                best = entry;
        }
        outcome.selected = best->patch;
        break;
    }
    case Strategy::voting:
        outcome.selected = patchops::vote(all_patches);
        break;
    case Strategy::dev_search:
        break; // unreachable
    }
    return outcome;
}

SearchOutcome run_search(const pipeline::Issue& issue, const pipeline::RepoSnapshot& repo,
                         const SearchConfig& config, Handles& handles) {
    if (config.strategy == Strategy::dev_search)
        return run_dev_search(issue, repo, config, handles);
    return run_baseline(issue, repo, config, handles);
}

std::string outcome_to_json(const SearchOutcome& outcome, const pipeline::Issue& issue,
                            const SearchConfig& config) {
    json pool = json::array();
    for (const auto& entry : outcome.pool) {
        json e = {{"generation_index", entry.generation_index},
                  {"patch_applied", entry.report.patch_applied},
                  {"repro_outcome", verify::repro_outcome_name(entry.report.repro_outcome)},
                  {"regression_passed", entry.report.regression_passed},
                  {"regression_failed", entry.report.regression_failed},
                  {"regression_total", entry.report.regression_total},
                  {"fully_verified", entry.report.fully_verified()},
                  {"fingerprint", patchops::normalize(entry.patch).fingerprint}};
        if (entry.orm_score) e["orm_score"] = *entry.orm_score;
        if (!entry.diagnostic.empty()) e["diagnostic"] = entry.diagnostic;
        pool.push_back(std::move(e));
    }
    auto stage_scores = [](const std::vector<Candidate>& candidates) {
        json arr = json::array();
        for (const auto& c : candidates) {
            json j = {{"generation_index", c.generation_index}};
            if (c.prm_score) j["prm_score"] = *c.prm_score;
            if (c.parent_index) j["parent_index"] = *c.parent_index;
            arr.push_back(std::move(j));
        }
        return arr;
    };
    json j = {{"issue_id", issue.id},
              {"strategy", strategy_name(outcome.strategy_used)},
              {"budget", config.budget},
              {"seed", config.seed},
              {"selected", outcome.selected ? json(outcome.selected->raw) : json(nullptr)},
              {"pool", std::move(pool)},
              {"repo_understanding_scores", stage_scores(outcome.repo_candidates)},
              {"fault_localization_scores", stage_scores(outcome.fault_candidates)},
              {"total_output_tokens", outcome.total_output_tokens}};
    return j.dump(2);
}

} // namespace ttc::search
