#pragma once
#include "ttc/patchops.hpp"
#include "ttc/providers.hpp"
#include "ttc/stage.hpp"
#include "ttc/verify.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ttc::pipeline {

struct Issue {
    std::string id;
    std::string title;
    std::string body;
    std::string repository; // owner/name, used by the ingest denylist
    std::string base_revision = "base";
};

struct FileEntry {
    std::string path;
    std::string language;
    std::uintmax_t size = 0;
};

struct RepoSnapshot {
    std::filesystem::path root_path;
    std::vector<FileEntry> file_index;
    std::optional<verify::EnvSpec> env_spec;
};

// Builds the file index by walking root_path (sorted, language from
// extension).
RepoSnapshot load_snapshot(const std::filesystem::path& root,
                           const std::optional<verify::EnvSpec>& env_spec);

enum class ActionType {
    identify_files,
    localize_faults,
    emit_patch,
    emit_repro_script,
    run_verification,
    fallback,
};

const char* action_type_name(ActionType t);

struct FaultLocation {
    std::string path;
    std::string function; // may be empty
    std::size_t line_start = 0; // 0 means no line range given
    std::size_t line_end = 0;
};

struct ParsedAction {
    ActionType type = ActionType::fallback;
    std::vector<std::string> files;          // identify_files
    std::vector<FaultLocation> locations;    // localize_faults
    std::string diff_text;                   // emit_patch
    std::string script_source;               // emit_repro_script
    std::string script_language;             // emit_repro_script
    std::string raw_text;                    // fallback keeps the reply verbatim
};

// Stage-scoped answer grammar:
//   repo_understanding  -> "FILES:" with inline and/or "- " entries
//   fault_localization  -> "LOCATIONS:" with "- path[:function[:start-end]]"
//   patch_generation    -> fenced ```diff block that parses as a unified diff
//   patch_verification  -> "REPRO:" + fenced script block, or a VERIFY line
// Anything else is the fallback action carrying the raw text.
ParsedAction analyze_answer(Stage stage, const std::string& answer);

struct TrajectoryStep {
    Stage stage = Stage::repo_understanding;
    std::string think;
    std::string answer;
    std::string observation;
    ParsedAction action;
    std::size_t step_index = 0; // 1-based, strictly increasing
    std::size_t output_tokens = 0;
};

enum class TerminalStatus { resolved, failed, step_budget_exhausted };

const char* terminal_status_name(TerminalStatus s);

struct Trajectory {
    Issue issue;
    std::vector<TrajectoryStep> steps;
    TerminalStatus terminal_status = TerminalStatus::failed;
    std::size_t total_output_tokens = 0;
};

struct PipelineOptions {
    std::size_t t_max = 12;
    std::size_t max_patch_rounds = 3;
    std::size_t observation_byte_limit = 16 * 1024;
};

// History pruning per the training recurrence: the returned turns hold
// observations of steps 1..upto and answers of steps 1..upto-1, think text
// of no step. Rendered as alternating chat turns, issue first.
std::vector<providers::ChatTurn> history_view(const Trajectory& trajectory,
                                              std::size_t upto_step);

std::string render_issue(const Issue& issue);

// The full prompt for generating the next step: a stage-specific system turn
// plus history_view of everything recorded so far.
std::vector<providers::ChatTurn> build_prompt(const Issue& issue, const RepoSnapshot& repo,
                                              const Trajectory& prefix, Stage stage,
                                              bool script_already_recorded);

// One model call + answer analysis. The observation is left empty for
// non-fallback actions (the caller executes the action and fills it in);
// fallback steps come back with observation "parse error".
TrajectoryStep run_stage(const Issue& issue, const RepoSnapshot& repo,
                         const Trajectory& prefix, Stage stage,
                         providers::Provider& provider, bool script_already_recorded,
                         std::size_t step_index);

// Everything a finished run leaves behind beyond the trajectory itself.
struct TrajectoryRun {
    Trajectory trajectory;
    std::optional<patchops::Patch> final_patch;
    std::optional<verify::ReproScript> script;
    std::optional<verify::VerificationReport> final_report;
};

TrajectoryRun run_pipeline(const Issue& issue, const RepoSnapshot& repo,
                           providers::Provider& provider, const PipelineOptions& options = {});

Trajectory generate_trajectory(const Issue& issue, const RepoSnapshot& repo,
                               providers::Provider& provider, std::size_t t_max);

// Read-only action execution shared with the search module: renders the
// observation for identify_files / localize_faults / emit_patch without
// touching any sandbox.
std::string observe_action(const ParsedAction& action, const RepoSnapshot& repo,
                           std::size_t byte_limit);

// JSONL persistence: a header object, then one object per step.
std::string trajectory_to_jsonl(const Trajectory& trajectory);
Trajectory trajectory_from_jsonl(const std::string& text);

} // namespace ttc::pipeline
