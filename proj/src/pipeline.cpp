#include "ttc/pipeline.hpp"
#include "ttc/errors.hpp"
#include "ttc/util/fs.hpp"
#include "ttc/util/strings.hpp"

#include <json.hpp>

#include <algorithm>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ttc {

Stage stage_from_name(const std::string& name) {
    if (name == "repo_understanding") return Stage::repo_understanding;
    if (name == "fault_localization") return Stage::fault_localization;
    if (name == "patch_generation") return Stage::patch_generation;
    if (name == "patch_verification") return Stage::patch_verification;
    throw ParseError("unknown stage name: " + name);
}

} // namespace ttc

namespace ttc::pipeline {

const char* action_type_name(ActionType t) {
    switch (t) {
    case ActionType::identify_files: return "identify_files";
    case ActionType::localize_faults: return "localize_faults";
    case ActionType::emit_patch: return "emit_patch";
    case ActionType::emit_repro_script: return "emit_repro_script";
    case ActionType::run_verification: return "run_verification";
    case ActionType::fallback: return "fallback";
    }
    return "unknown";
}

const char* terminal_status_name(TerminalStatus s) {
    switch (s) {
    case TerminalStatus::resolved: return "resolved";
    case TerminalStatus::failed: return "failed";
    case TerminalStatus::step_budget_exhausted: return "step_budget_exhausted";
    }
    return "unknown";
}

RepoSnapshot load_snapshot(const fs::path& root,
                           const std::optional<verify::EnvSpec>& env_spec) {
    if (!fs::is_directory(root))
        throw EnvironmentError("snapshot directory missing: " + root.string());
    RepoSnapshot snapshot;
    snapshot.root_path = root;
    snapshot.env_spec = env_spec;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::string rel = fs::relative(entry.path(), root).generic_string();
        snapshot.file_index.push_back(
            {rel, patchops::language_from_path(rel), entry.file_size()});
    }
    std::sort(snapshot.file_index.begin(), snapshot.file_index.end(),
              [](const FileEntry& a, const FileEntry& b) { return a.path < b.path; });
    return snapshot;
}

// ---------------------------------------------------------------------------
// Answer grammar
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> parse_inline_list(const std::string& text) {
    std::vector<std::string> items;
    std::string current;
    for (char c : text + ",") {
        if (c == ',') {
            std::string item = util::trim(current);
            if (!item.empty()) items.push_back(item);
            current.clear();
        } else {
            current += c;
        }
    }
    return items;
}

// Extracts the first fenced block whose info string matches one of `tags`
// (empty tag entry = any / none). Returns nullopt when no block is found.
std::optional<std::pair<std::string, std::string>> // (info, body)
fenced_block(const std::string& text, const std::vector<std::string>& tags) {
    auto lines = util::split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string line = util::trim(lines[i]);
        if (!util::starts_with(line, "```")) continue;
        std::string info = util::trim(line.substr(3));
        bool tag_ok = tags.empty();
        for (const auto& tag : tags)
            if (tag == info || (tag.empty() && info.empty())) tag_ok = true;
        if (!tag_ok) continue;
        std::string body;
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
            if (util::trim(lines[j]) == "```")
                return std::make_pair(info, body);
            body += lines[j];
            body += "\n";
        }
        return std::nullopt; // unterminated fence
    }
    return std::nullopt;
}

std::optional<FaultLocation> parse_location_line(const std::string& item) {
    // path[:function[:start-end]]
    std::vector<std::string> parts;
    std::string current;
    for (char c : item + ":") {
        if (c == ':') {
            parts.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    if (parts.empty() || util::trim(parts[0]).empty()) return std::nullopt;
    FaultLocation loc;
    loc.path = util::trim(parts[0]);
    if (parts.size() >= 2) loc.function = util::trim(parts[1]);
    if (parts.size() >= 3) {
        std::string range = util::trim(parts[2]);
        if (!range.empty()) {
            std::size_t dash = range.find('-');
            try {
                if (dash == std::string::npos) {
                    loc.line_start = loc.line_end = std::stoul(range);
                } else {
                    loc.line_start = std::stoul(range.substr(0, dash));
                    loc.line_end = std::stoul(range.substr(dash + 1));
                }
            } catch (...) {
                return std::nullopt;
            }
            if (loc.line_end < loc.line_start) return std::nullopt;
        }
    }
    if (parts.size() > 3) return std::nullopt;
    return loc;
}

ParsedAction fallback_action(const std::string& answer) {
    ParsedAction action;
    action.type = ActionType::fallback;
    action.raw_text = answer;
    return action;
}

} // namespace

ParsedAction analyze_answer(Stage stage, const std::string& answer) {
    auto lines = util::split_lines(answer);

    switch (stage) {
    case Stage::repo_understanding: {
        ParsedAction action;
        action.type = ActionType::identify_files;
        bool in_block = false;
        for (const auto& raw_line : lines) {
            std::string line = util::trim(raw_line);
            if (util::starts_with(line, "FILES:")) {
                in_block = true;
                for (auto& item : parse_inline_list(line.substr(6)))
                    action.files.push_back(std::move(item));
                continue;
            }
            if (in_block && util::starts_with(line, "- "))
                action.files.push_back(util::trim(line.substr(2)));
            else if (in_block && !line.empty())
                in_block = false;
        }
        if (action.files.empty()) return fallback_action(answer);
        return action;
    }
    case Stage::fault_localization: {
        ParsedAction action;
        action.type = ActionType::localize_faults;
        bool in_block = false;
        for (const auto& raw_line : lines) {
            std::string line = util::trim(raw_line);
            if (util::starts_with(line, "LOCATIONS:")) {
                in_block = true;
                continue;
            }
            if (in_block && util::starts_with(line, "- ")) {
                auto loc = parse_location_line(util::trim(line.substr(2)));
                if (!loc) return fallback_action(answer);
                action.locations.push_back(std::move(*loc));
            } else if (in_block && !line.empty()) {
                in_block = false;
            }
        }
        if (action.locations.empty()) return fallback_action(answer);
        return action;
    }
    case Stage::patch_generation: {
        auto block = fenced_block(answer, {"diff", "patch"});
        if (!block) return fallback_action(answer);
        try {
            patchops::Patch parsed = patchops::parse_diff(block->second);
            if (parsed.empty()) return fallback_action(answer);
        } catch (const ParseError&) {
            return fallback_action(answer);
        }
        ParsedAction action;
        action.type = ActionType::emit_patch;
        action.diff_text = block->second;
        return action;
    }
    case Stage::patch_verification: {
        for (const auto& raw_line : lines) {
            if (util::trim(raw_line) == "VERIFY") {
                ParsedAction action;
                action.type = ActionType::run_verification;
                return action;
            }
        }
        bool has_repro_tag = false;
        for (const auto& raw_line : lines)
            if (util::trim(raw_line) == "REPRO:") has_repro_tag = true;
        if (has_repro_tag) {
            auto block = fenced_block(answer, {});
            if (block && !block->second.empty()) {
                ParsedAction action;
                action.type = ActionType::emit_repro_script;
                action.script_source = block->second;
                action.script_language = block->first.empty() ? "python" : block->first;
                return action;
            }
        }
        return fallback_action(answer);
    }
    }
    return fallback_action(answer);
}

// ---------------------------------------------------------------------------
// Prompt construction
// ---------------------------------------------------------------------------

std::string render_issue(const Issue& issue) {
    if (issue.title.empty()) return issue.body;
    return issue.title + "\n\n" + issue.body;
}

std::vector<providers::ChatTurn> history_view(const Trajectory& trajectory,
                                              std::size_t upto_step) {
    if (upto_step > trajectory.steps.size())
        throw ContractError("history_view: upto_step exceeds recorded steps");
    using providers::ChatTurn;
    using providers::Role;

    std::vector<ChatTurn> turns;
    std::string first = render_issue(trajectory.issue);
    if (upto_step >= 1) first += "\n\n" + trajectory.steps[0].observation;
    turns.push_back({Role::user, first});
    for (std::size_t j = 2; j <= upto_step; ++j) {
        turns.push_back({Role::assistant, trajectory.steps[j - 2].answer});
        turns.push_back({Role::user, trajectory.steps[j - 1].observation});
    }
    return turns;
}

namespace {

std::string stage_instruction(Stage stage, bool script_already_recorded) {
    switch (stage) {
    case Stage::repo_understanding:
        return "Identify the repository files that must change to resolve the issue. "
               "Answer with a FILES: block, one '- path' entry per file.";
    case Stage::fault_localization:
        return "Pinpoint the faulty code. Answer with a LOCATIONS: block, one "
               "'- path:function:start-end' entry per location.";
    case Stage::patch_generation:
        return "Produce a fix. Answer with a unified diff inside a ```diff fenced block.";
    case Stage::patch_verification:
        if (script_already_recorded)
            return "A reproduction script is recorded. Answer with the single line VERIFY "
                   "to run it together with the regression tests.";
        return "Write a reproduction script that prints 'issue reproduced' on the buggy "
               "code and 'issue resolved' once fixed. Answer with a REPRO: line followed "
               "by a fenced code block.";
    }
    return "";
}

std::string repo_listing(const RepoSnapshot& repo) {
    std::ostringstream oss;
    oss << "Repository files:";
    for (const auto& entry : repo.file_index)
        oss << "\n  " << entry.path << " (" << entry.size << " bytes)";
    return oss.str();
}

} // namespace

std::vector<providers::ChatTurn> build_prompt(const Issue& issue, const RepoSnapshot& repo,
                                              const Trajectory& prefix, Stage stage,
                                              bool script_already_recorded) {
    std::vector<providers::ChatTurn> turns;
    std::ostringstream system_text;
    system_text << "You are a software engineering agent resolving a repository issue "
                << "in four phases: repo_understanding, fault_localization, "
                << "patch_generation, patch_verification.\n"
                << repo_listing(repo) << "\n"
                << "Current phase: " << stage_name(stage) << ". "
                << stage_instruction(stage, script_already_recorded);
    turns.push_back({providers::Role::system, system_text.str()});

    Trajectory view = prefix;
    view.issue = issue;
    auto history = history_view(view, prefix.steps.size());
    turns.insert(turns.end(), history.begin(), history.end());
    return turns;
}

TrajectoryStep run_stage(const Issue& issue, const RepoSnapshot& repo,
                         const Trajectory& prefix, Stage stage,
                         providers::Provider& provider, bool script_already_recorded,
                         std::size_t step_index) {
    auto prompt = build_prompt(issue, repo, prefix, stage, script_already_recorded);
    providers::ModelReply reply = provider.complete(prompt);

    TrajectoryStep step;
    step.stage = stage;
    step.think = reply.think;
    step.answer = reply.answer;
    step.output_tokens = reply.output_token_count;
    step.step_index = step_index;
    step.action = analyze_answer(stage, reply.answer);
    if (step.action.type == ActionType::fallback) step.observation = "parse error";
    return step;
}

// ---------------------------------------------------------------------------
// Action execution
// ---------------------------------------------------------------------------

std::string observe_action(const ParsedAction& action, const RepoSnapshot& repo,
                           std::size_t byte_limit) {
    std::ostringstream oss;
    switch (action.type) {
    case ActionType::identify_files: {
        for (const auto& file : action.files) {
            fs::path full = repo.root_path / file;
            if (fs::is_regular_file(full)) {
                oss << "=== " << file << " ===\n" << util::read_file(full) << "\n";
            } else {
                oss << "=== " << file << " === (missing)\n";
            }
        }
        break;
    }
    case ActionType::localize_faults: {
        for (const auto& loc : action.locations) {
            oss << "location " << loc.path;
            if (!loc.function.empty()) oss << ":" << loc.function;
            if (loc.line_start > 0) oss << ":" << loc.line_start << "-" << loc.line_end;
            fs::path full = repo.root_path / loc.path;
            if (!fs::is_regular_file(full)) {
                oss << " (missing)\n";
                continue;
            }
            oss << "\n";
            if (loc.line_start > 0) {
                auto lines = util::split_lines(util::read_file(full));
                std::size_t from = loc.line_start > 5 ? loc.line_start - 5 : 1;
                std::size_t to = std::min(lines.size(), loc.line_end + 5);
                for (std::size_t n = from; n <= to && n <= lines.size(); ++n)
                    oss << "  " << n << ": " << lines[n - 1] << "\n";
            }
        }
        break;
    }
    case ActionType::emit_patch: {
        patchops::Patch patch = patchops::parse_diff(action.diff_text);
        std::size_t added = 0, removed = 0;
        for (const auto& file : patch.files)
            for (const auto& hunk : file.hunks)
                for (const auto& line : hunk.lines) {
                    if (line.tag == '+') ++added;
                    if (line.tag == '-') ++removed;
                }
        oss << "patch recorded: " << patch.touched_files.size() << " file(s), +" << added
            << "/-" << removed << " lines";
        break;
    }
    default:
        oss << "ok";
        break;
    }
    return util::truncate_middle(oss.str(), byte_limit);
}

// ---------------------------------------------------------------------------
// Staged bootstrapping loop
// ---------------------------------------------------------------------------

TrajectoryRun run_pipeline(const Issue& issue, const RepoSnapshot& repo,
                           providers::Provider& provider, const PipelineOptions& options) {
    if (options.t_max < 4)
        throw ContractError("t_max must allow one pass through all four stages");

    TrajectoryRun run;
    run.trajectory.issue = issue;
    Trajectory& trajectory = run.trajectory;

    std::unique_ptr<verify::SandboxFactory> factory;
    if (repo.env_spec)
        factory = std::make_unique<verify::SandboxFactory>(repo.root_path,
                                                           issue.base_revision,
                                                           *repo.env_spec);

    Stage stage = Stage::repo_understanding;
    std::size_t patch_rounds = 0;
    std::size_t consecutive_apply_failures = 0;
    std::optional<TerminalStatus> terminal;

    for (std::size_t t = 1; t <= options.t_max && !terminal; ++t) {
        TrajectoryStep step = run_stage(issue, repo, trajectory, stage, provider,
                                        run.script.has_value(), t);
        trajectory.total_output_tokens += step.output_tokens;

        if (step.action.type == ActionType::fallback) {
            trajectory.steps.push_back(std::move(step));
            continue; // same stage, next iteration
        }

        switch (step.action.type) {
        case ActionType::identify_files:
            step.observation = observe_action(step.action, repo, options.observation_byte_limit);
            stage = Stage::fault_localization;
            break;
        case ActionType::localize_faults:
            step.observation = observe_action(step.action, repo, options.observation_byte_limit);
            stage = Stage::patch_generation;
            break;
        case ActionType::emit_patch:
            run.final_patch = patchops::parse_diff(step.action.diff_text);
            run.final_report.reset(); // any earlier report belongs to an older patch
            ++patch_rounds;
            step.observation = observe_action(step.action, repo, options.observation_byte_limit);
            stage = Stage::patch_verification;
            break;
        case ActionType::emit_repro_script:
            run.script = verify::ReproScript{step.action.script_source,
                                             step.action.script_language};
            step.observation = "reproduction script recorded (lang=" +
                               step.action.script_language + ", " +
                               std::to_string(step.action.script_source.size()) + " bytes)";
            break; // stay in patch_verification
        case ActionType::run_verification: {
            if (!factory) {
                step.observation =
                    "verification unavailable: snapshot has no environment spec";
                terminal = TerminalStatus::failed;
                break;
            }
            verify::VerificationReport report = verify::verify_patch(
                *factory, run.final_patch.value_or(patchops::Patch{}), run.script);
            run.final_report = report;
            step.observation = util::truncate_middle(verify::render_report(report),
                                                     options.observation_byte_limit);
            if (!report.patch_applied)
                ++consecutive_apply_failures;
            else
                consecutive_apply_failures = 0;

            if (report.fully_verified()) {
                terminal = TerminalStatus::resolved;
            } else if (consecutive_apply_failures >= 2) {
                terminal = TerminalStatus::failed;
                step.observation += "; patch apply failed twice in a row";
            } else if (patch_rounds >= options.max_patch_rounds) {
                terminal = TerminalStatus::failed;
                step.observation += "; refinement budget exhausted";
            } else {
                stage = Stage::patch_generation; // refine
            }
            break;
        }
        case ActionType::fallback:
            break; // unreachable
        }
        trajectory.steps.push_back(std::move(step));
    }

    trajectory.terminal_status = terminal.value_or(TerminalStatus::step_budget_exhausted);
    return run;
}

Trajectory generate_trajectory(const Issue& issue, const RepoSnapshot& repo,
                               providers::Provider& provider, std::size_t t_max) {
    PipelineOptions options;
    options.t_max = t_max;
    return run_pipeline(issue, repo, provider, options).trajectory;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

json action_to_json(const ParsedAction& action) {
    json j;
    j["type"] = action_type_name(action.type);
    switch (action.type) {
    case ActionType::identify_files: j["files"] = action.files; break;
    case ActionType::localize_faults: {
        json locs = json::array();
        for (const auto& loc : action.locations)
            locs.push_back({{"path", loc.path},
                            {"function", loc.function},
                            {"start", loc.line_start},
                            {"end", loc.line_end}});
        j["locations"] = std::move(locs);
        break;
    }
    case ActionType::emit_patch: j["diff"] = action.diff_text; break;
    case ActionType::emit_repro_script:
        j["script"] = action.script_source;
        j["language"] = action.script_language;
        break;
    case ActionType::run_verification: break;
    case ActionType::fallback: j["raw"] = action.raw_text; break;
    }
    return j;
}

ParsedAction action_from_json(const json& j) {
    ParsedAction action;
    std::string type = j.value("type", "fallback");
    if (type == "identify_files") {
        action.type = ActionType::identify_files;
        for (const auto& f : j.value("files", json::array())) action.files.push_back(f);
    } else if (type == "localize_faults") {
        action.type = ActionType::localize_faults;
        for (const auto& l : j.value("locations", json::array()))
            action.locations.push_back({l.value("path", ""), l.value("function", ""),
                                        l.value("start", std::size_t{0}),
                                        l.value("end", std::size_t{0})});
    } else if (type == "emit_patch") {
        action.type = ActionType::emit_patch;
        action.diff_text = j.value("diff", "");
    } else if (type == "emit_repro_script") {
        action.type = ActionType::emit_repro_script;
        action.script_source = j.value("script", "");
        action.script_language = j.value("language", "python");
    } else if (type == "run_verification") {
        action.type = ActionType::run_verification;
    } else {
        action.type = ActionType::fallback;
        action.raw_text = j.value("raw", "");
    }
    return action;
}

} // namespace

std::string trajectory_to_jsonl(const Trajectory& trajectory) {
    std::ostringstream out;
    json header = {{"issue_id", trajectory.issue.id},
                   {"title", trajectory.issue.title},
                   {"body", trajectory.issue.body},
                   {"repository", trajectory.issue.repository},
                   {"terminal_status", terminal_status_name(trajectory.terminal_status)},
                   {"total_output_tokens", trajectory.total_output_tokens},
                   {"steps", trajectory.steps.size()}};
    out << header.dump() << "\n";
    for (const auto& step : trajectory.steps) {
        json j = {{"stage", stage_name(step.stage)},
                  {"think", step.think},
                  {"answer", step.answer},
                  {"observation", step.observation},
                  {"action", action_to_json(step.action)},
                  {"step_index", step.step_index},
                  {"tokens", step.output_tokens}};
        out << j.dump() << "\n";
    }
    return out.str();
}

Trajectory trajectory_from_jsonl(const std::string& text) {
    auto lines = util::split_lines(text);
    if (lines.empty()) throw ParseError("empty trajectory log");
    Trajectory trajectory;
    json header = json::parse(lines[0]);
    trajectory.issue.id = header.value("issue_id", "");
    trajectory.issue.title = header.value("title", "");
    trajectory.issue.body = header.value("body", "");
    trajectory.issue.repository = header.value("repository", "");
    std::string status = header.value("terminal_status", "failed");
    if (status == "resolved") trajectory.terminal_status = TerminalStatus::resolved;
    else if (status == "step_budget_exhausted")
        trajectory.terminal_status = TerminalStatus::step_budget_exhausted;
    else trajectory.terminal_status = TerminalStatus::failed;
    trajectory.total_output_tokens = header.value("total_output_tokens", std::size_t{0});

    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (util::trim(lines[i]).empty()) continue;
        json j = json::parse(lines[i]);
        TrajectoryStep step;
        step.stage = stage_from_name(j.value("stage", "repo_understanding"));
        step.think = j.value("think", "");
        step.answer = j.value("answer", "");
        step.observation = j.value("observation", "");
        step.action = action_from_json(j.value("action", json::object()));
        step.step_index = j.value("step_index", std::size_t{0});
        step.output_tokens = j.value("tokens", std::size_t{0});
        trajectory.steps.push_back(std::move(step));
    }
    return trajectory;
}

} // namespace ttc::pipeline
