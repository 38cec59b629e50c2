#pragma once
#include "ttc/patchops.hpp"
#include "ttc/pipeline.hpp"
#include "ttc/providers.hpp"
#include "ttc/verify.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ttc::search {

enum class Strategy { dev_search, exec_only, orm_exec, voting };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct SearchConfig {
    std::size_t budget = 1;     // rollouts, N
    std::size_t beam_width = 0; // 0 means derive from the budget
    Strategy strategy = Strategy::dev_search;
    std::uint64_t seed = 0;

    void validate() const;
};

// Paper-faithful schedule for budgets 1,2,4,8; other budgets use
// max(1, floor(sqrt(budget))).
std::size_t budget_to_width(std::size_t budget);

// Reward-model handles; production binds providers::score_remote, tests bind
// fixture oracles.
using ProcessScorer = std::function<double(Stage stage, const std::string& issue_text,
                                           const std::string& candidate_text)>;
using OutcomeScorer =
    std::function<double(const std::string& issue_text, const std::string& patch_text)>;

struct Candidate {
    Stage stage = Stage::repo_understanding;
    std::string answer;                      // raw stage answer
    pipeline::ParsedAction action;
    std::optional<double> prm_score;
    std::size_t generation_index = 0;        // unique within the stage
    std::optional<std::size_t> parent_index; // retained candidate of the prior stage
    std::vector<pipeline::TrajectoryStep> lineage; // steps up to and including this one
};

struct PoolEntry {
    patchops::Patch patch;
    verify::VerificationReport report;
    std::size_t generation_index = 0;
    std::optional<double> orm_score;
    std::string diagnostic;
};

struct SearchOutcome {
    std::optional<patchops::Patch> selected;
    std::vector<PoolEntry> pool;
    Strategy strategy_used = Strategy::dev_search;
    std::size_t total_output_tokens = 0;
    std::vector<Candidate> repo_candidates;  // scored stage candidates, for reporting
    std::vector<Candidate> fault_candidates;
};

struct Handles {
    providers::Provider* provider = nullptr;
    ProcessScorer prm;
    OutcomeScorer orm;
};

// Generates `count` candidates round-robin over the retained parents (sorted
// by score), scores them with the PRM, and keeps the top-k. Ties break
// toward the lower generation index. Throws SearchError-style Error when all
// generations fail to parse.
std::vector<Candidate> beam_stage(const std::vector<Candidate>& inputs, Stage stage,
                                  std::size_t count, std::size_t keep,
                                  const pipeline::Issue& issue,
                                  const pipeline::RepoSnapshot& repo, Handles& handles,
                                  std::size_t* token_sink = nullptr);

// Verification-first selection ladder: repro resolved, regression passes,
// ORM score, earliest generation.
const PoolEntry& select_final(std::vector<PoolEntry>& pool, const OutcomeScorer& orm,
                              const std::string& issue_text);

SearchOutcome run_dev_search(const pipeline::Issue& issue, const pipeline::RepoSnapshot& repo,
                             const SearchConfig& config, Handles& handles);

SearchOutcome run_baseline(const pipeline::Issue& issue, const pipeline::RepoSnapshot& repo,
                           const SearchConfig& config, Handles& handles);

// Dispatches on config.strategy.
SearchOutcome run_search(const pipeline::Issue& issue, const pipeline::RepoSnapshot& repo,
                         const SearchConfig& config, Handles& handles);

std::string outcome_to_json(const SearchOutcome& outcome, const pipeline::Issue& issue,
                            const SearchConfig& config);

} // namespace ttc::search
