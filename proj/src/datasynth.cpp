#include "ttc/datasynth.hpp"
#include "ttc/errors.hpp"
#include "ttc/reward.hpp"
#include "ttc/util/fs.hpp"
#include "ttc/util/strings.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ttc::datasynth {

const char* criterion_name(Criterion c) {
    switch (c) {
    case Criterion::pass: return "pass";
    case Criterion::fail: return "fail";
    case Criterion::not_evaluated: return "not_evaluated";
    }
    return "unknown";
}

std::size_t count_hyperlinks(const std::string& text) {
    std::size_t count = 0;
    for (std::size_t pos = 0; (pos = text.find("http", pos)) != std::string::npos; ++pos) {
        if (text.compare(pos, 7, "http://") == 0 || text.compare(pos, 8, "https://") == 0)
            ++count;
    }
    return count;
}

bool filter_issue(const pipeline::Issue& issue) {
    return issue.body.size() >= 20 && count_hyperlinks(issue.body) <= 3;
}

bool filter_pr(const PrMeta& pr_meta) {
    std::size_t code = pr_meta.modified_code_files.size();
    return code >= 1 && code <= 5;
}

bool check_repo_understanding(const std::set<std::string>& identified_files,
                              const std::set<std::string>& golden_files) {
    if (golden_files.empty()) throw ContractError("golden file set is empty");
    return std::includes(identified_files.begin(), identified_files.end(),
                         golden_files.begin(), golden_files.end());
}

namespace {

bool location_covers(const pipeline::FaultLocation& candidate,
                     const pipeline::FaultLocation& golden) {
    if (candidate.path != golden.path) return false;
    if (!candidate.function.empty() && !golden.function.empty()) {
        // Accept "Calc.add" against a section line like "def add(self, x):".
        std::string cand = candidate.function;
        auto dot = cand.rfind('.');
        std::string leaf = dot == std::string::npos ? cand : cand.substr(dot + 1);
        if (cand == golden.function) return true;
        if (!leaf.empty() && golden.function.find(leaf) != std::string::npos) return true;
    }
    if (candidate.line_start == 0 || golden.line_start == 0) return false;
    std::size_t lo = candidate.line_start > kLocationToleranceLines
                         ? candidate.line_start - kLocationToleranceLines
                         : 1;
    std::size_t hi = candidate.line_end + kLocationToleranceLines;
    return golden.line_start <= hi && golden.line_end >= lo;
}

} // namespace

bool check_fault_localization(const std::vector<pipeline::FaultLocation>& candidate,
                              const std::vector<pipeline::FaultLocation>& golden) {
    if (golden.empty()) throw ContractError("golden locations are empty");
    for (const auto& g : golden) {
        bool covered = false;
        for (const auto& c : candidate)
            if (location_covers(c, g)) {
                covered = true;
                break;
            }
        if (!covered) return false;
    }
    return true;
}

double patch_similarity(const patchops::Patch& candidate, const patchops::Patch& golden) {
    auto stream_tokens = [](const patchops::Patch& patch) {
        std::map<std::string, std::size_t> counts;
        std::size_t total = 0;
        for (const auto& file : patch.files) {
            std::string language = patchops::language_from_path(file.path());
            std::string removed, added;
            for (const auto& hunk : file.hunks)
                for (const auto& line : hunk.lines) {
                    if (line.tag == '-') removed += line.text + "\n";
                    if (line.tag == '+') added += line.text + "\n";
                }
            for (const auto& tok : patchops::edit_stream_tokens(removed, language)) {
                ++counts["-" + tok];
                ++total;
            }
            for (const auto& tok : patchops::edit_stream_tokens(added, language)) {
                ++counts["+" + tok];
                ++total;
            }
        }
        return std::make_pair(counts, total);
    };

    auto [cand_counts, cand_total] = stream_tokens(candidate);
    auto [gold_counts, gold_total] = stream_tokens(golden);
    if (cand_total == 0 || gold_total == 0) return 0.0;

    std::size_t overlap = 0;
    for (const auto& [tok, n] : cand_counts) {
        auto it = gold_counts.find(tok);
        if (it != gold_counts.end()) overlap += std::min(n, it->second);
    }
    double precision = static_cast<double>(overlap) / static_cast<double>(cand_total);
    double recall = static_cast<double>(overlap) / static_cast<double>(gold_total);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

// ---------------------------------------------------------------------------
// Rejection sampling
// ---------------------------------------------------------------------------

namespace {

const pipeline::TrajectoryStep* first_step_of(const pipeline::Trajectory& trajectory,
                                              pipeline::ActionType type) {
    for (const auto& step : trajectory.steps)
        if (step.action.type == type) return &step;
    return nullptr;
}

const pipeline::TrajectoryStep* last_step_of(const pipeline::Trajectory& trajectory,
                                             pipeline::ActionType type) {
    const pipeline::TrajectoryStep* found = nullptr;
    for (const auto& step : trajectory.steps)
        if (step.action.type == type) found = &step;
    return found;
}

} // namespace

RejectionVerdict rejection_sample(const pipeline::Trajectory& trajectory,
                                  const TripletRecord& triplet,
                                  providers::Provider* base_model,
                                  const RejectionOptions& options) {
    RejectionVerdict verdict;
    reward::GoldenInfo golden = reward::golden_info_from_patch(triplet.golden_patch);

    // Repository understanding: identified files must contain the golden set.
    const auto* ru = first_step_of(trajectory, pipeline::ActionType::identify_files);
    if (ru) {
        std::set<std::string> identified(ru->action.files.begin(), ru->action.files.end());
        verdict.repo_understanding_ok =
            check_repo_understanding(identified, golden.files) ? Criterion::pass
                                                               : Criterion::fail;
    }

    // Fault localization against the golden patch's edit locations.
    const auto* fl = first_step_of(trajectory, pipeline::ActionType::localize_faults);
    if (fl) {
        verdict.fault_localization_ok =
            check_fault_localization(fl->action.locations, golden.locations)
                ? Criterion::pass
                : Criterion::fail;
    }

    // Reproduction validity (two-leg) and patch correctness via execution;
    // similarity fallback when no valid script or no environment exists.
    const auto* script_step = last_step_of(trajectory, pipeline::ActionType::emit_repro_script);
    const auto* patch_step = last_step_of(trajectory, pipeline::ActionType::emit_patch);
    std::optional<patchops::Patch> candidate_patch;
    if (patch_step) candidate_patch = patchops::parse_diff(patch_step->action.diff_text);

    bool repro_usable = false;
    std::optional<verify::ReproScript> script;
    if (script_step)
        script = verify::ReproScript{script_step->action.script_source,
                                     script_step->action.script_language};

    if (!triplet.env_spec) {
        verdict.repro_ok = Criterion::not_evaluated;
    } else if (script) {
        verify::SandboxFactory factory(triplet.snapshot_dir, triplet.issue.base_revision,
                                       *triplet.env_spec);
        repro_usable = verify::validate_repro_script(factory, *script, triplet.golden_patch);
        verdict.repro_ok = repro_usable ? Criterion::pass : Criterion::fail;
    } else {
        verdict.repro_ok = Criterion::fail;
    }

    if (!candidate_patch) {
        verdict.patch_ok = Criterion::fail;
    } else if (repro_usable && triplet.env_spec) {
        verify::SandboxFactory factory(triplet.snapshot_dir, triplet.issue.base_revision,
                                       *triplet.env_spec);
        verify::VerificationReport report = verify::verify_patch(factory, *candidate_patch,
                                                                 script);
        verdict.patch_ok = report.fully_verified() ? Criterion::pass : Criterion::fail;
    } else {
        double similarity = patch_similarity(*candidate_patch, triplet.golden_patch);
        verdict.patch_ok =
            similarity >= options.similarity_threshold ? Criterion::pass : Criterion::fail;
    }

    // Complexity: a problem the plain base model solves in one greedy attempt
    // is too easy to teach anything.
    if (base_model) {
        pipeline::RepoSnapshot snapshot =
            pipeline::load_snapshot(triplet.snapshot_dir, triplet.env_spec);
        pipeline::PipelineOptions base_options;
        base_options.t_max = options.base_model_t_max;
        base_options.max_patch_rounds = 1; // single attempt, no refinement
        pipeline::TrajectoryRun attempt =
            pipeline::run_pipeline(triplet.issue, snapshot, *base_model, base_options);
        verdict.complexity_ok =
            attempt.trajectory.terminal_status == pipeline::TerminalStatus::resolved
                ? Criterion::fail
                : Criterion::pass;
    }

    // Retention: stage-prefix-closed, nothing kept when the problem is too
    // easy or the opening stage is wrong.
    if (verdict.complexity_ok != Criterion::fail &&
        verdict.repo_understanding_ok == Criterion::pass) {
        auto retain_stage = [&](Stage stage) {
            for (const auto& step : trajectory.steps)
                if (step.stage == stage) verdict.retained_steps.push_back(step.step_index);
        };
        retain_stage(Stage::repo_understanding);
        if (verdict.fault_localization_ok == Criterion::pass) {
            retain_stage(Stage::fault_localization);
            if (verdict.patch_ok == Criterion::pass) {
                retain_stage(Stage::patch_generation);
                if (verdict.repro_ok == Criterion::pass)
                    retain_stage(Stage::patch_verification);
            }
        }
        std::sort(verdict.retained_steps.begin(), verdict.retained_steps.end());
    }
    return verdict;
}

std::vector<TrainingRecord> emit_training_records(const pipeline::Trajectory& trajectory,
                                                  const RejectionVerdict& verdict) {
    std::map<std::size_t, const pipeline::TrajectoryStep*> by_index;
    for (const auto& step : trajectory.steps) by_index[step.step_index] = &step;

    std::vector<TrainingRecord> records;
    for (std::size_t index : verdict.retained_steps) {
        auto it = by_index.find(index);
        if (it == by_index.end())
            throw ContractError("retained step " + std::to_string(index) +
                                " not present in trajectory");
        const auto& step = *it->second;
        TrainingRecord record;
        record.issue_text = pipeline::render_issue(trajectory.issue);
        // The steps are stored 1..n in order; history up to this step is the
        // training context.
        std::size_t position = 0;
        for (std::size_t i = 0; i < trajectory.steps.size(); ++i)
            if (trajectory.steps[i].step_index == index) position = i + 1;
        record.context = pipeline::history_view(trajectory, position);
        record.target_think = step.think;
        record.target_answer = step.answer;
        record.step_index = index;
        records.push_back(std::move(record));
    }
    return records;
}

std::string training_records_to_jsonl(const std::vector<TrainingRecord>& records) {
    std::string out;
    for (const auto& record : records) {
        json turns = json::array();
        for (const auto& turn : record.context)
            turns.push_back({{"role", providers::role_name(turn.role)},
                             {"content", turn.content}});
        json j = {{"issue", record.issue_text},
                  {"context", std::move(turns)},
                  {"target_think", record.target_think},
                  {"target_answer", record.target_answer},
                  {"step_index", record.step_index}};
        out += j.dump();
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus ingestion
// ---------------------------------------------------------------------------

TripletRecord load_triplet(const fs::path& record_dir) {
    TripletRecord record;
    json issue = json::parse(util::read_file(record_dir / "issue.json"));
    record.issue.id = issue.value("id", record_dir.filename().string());
    record.issue.title = issue.value("title", "");
    record.issue.body = issue.value("body", "");
    record.issue.repository = issue.value("repository", "");
    record.issue.base_revision = issue.value("base_revision", "base");

    json meta = json::parse(util::read_file(record_dir / "pr_meta.json"));
    for (const auto& f : meta.value("modified_code_files", json::array()))
        record.pr_meta.modified_code_files.insert(f.get<std::string>());
    for (const auto& f : meta.value("modified_test_files", json::array()))
        record.pr_meta.modified_test_files.insert(f.get<std::string>());
    record.pr_meta.merged = meta.value("merged", true);
    record.pr_meta.star_count = meta.value("star_count", -1L);

    record.golden_patch = patchops::parse_diff(util::read_file(record_dir / "golden.patch"));
    record.snapshot_dir = record_dir / "snapshot";
    if (!fs::is_directory(record.snapshot_dir))
        throw EnvironmentError("triplet record lacks snapshot/: " + record_dir.string());
    if (fs::exists(record_dir / "env_spec.json"))
        record.env_spec = verify::load_env_spec(record_dir / "env_spec.json");
    return record;
}

std::vector<TripletRecord> ingest_corpus(const fs::path& corpus_dir,
                                         const std::set<std::string>& repo_denylist,
                                         IngestStats& stats) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(corpus_dir))
        if (entry.is_directory() && fs::exists(entry.path() / "issue.json"))
            dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());

    std::vector<TripletRecord> records;
    for (const auto& dir : dirs) {
        ++stats.scanned;
        TripletRecord record = load_triplet(dir);
        if (repo_denylist.count(record.issue.repository)) {
            ++stats.denylisted;
            continue;
        }
        if (!record.pr_meta.merged) {
            ++stats.unmerged;
            continue;
        }
        if (record.pr_meta.star_count < 0)
            ++stats.star_warnings; // hand-curated corpora may omit stars
        else if (record.pr_meta.star_count <= 1000) {
            ++stats.filtered_stars;
            continue;
        }
        if (!filter_issue(record.issue)) {
            ++stats.filtered_issue;
            continue;
        }
        if (!filter_pr(record.pr_meta)) {
            ++stats.filtered_pr;
            continue;
        }
        ++stats.accepted;
        records.push_back(std::move(record));
    }
    return records;
}

} // namespace ttc::datasynth
