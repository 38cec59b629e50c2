#pragma once
#include "ttc/patchops.hpp"
#include "ttc/pipeline.hpp"
#include "ttc/providers.hpp"
#include "ttc/verify.hpp"

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ttc::datasynth {

// Line-range slack when matching candidate fault locations against the
// golden edit locations.
inline constexpr std::size_t kLocationToleranceLines = 3;

// Token-F1 threshold for the patch-similarity fallback used when no valid
// reproduction script exists.
inline constexpr double kSimilarityThreshold = 0.8;

struct PrMeta {
    std::set<std::string> modified_code_files;
    std::set<std::string> modified_test_files;
    bool merged = true;
    long star_count = -1; // -1 means unknown
};

struct TripletRecord {
    pipeline::Issue issue;
    PrMeta pr_meta;
    patchops::Patch golden_patch;
    std::filesystem::path snapshot_dir;
    std::optional<verify::EnvSpec> env_spec;
};

// ---------------------------------------------------------------------------
// Heuristic curation filters
// ---------------------------------------------------------------------------

std::size_t count_hyperlinks(const std::string& text);

// Body of at least 20 characters and at most 3 hyperlinks.
bool filter_issue(const pipeline::Issue& issue);

// Between one and five modified code files; test-only changes rejected.
bool filter_pr(const PrMeta& pr_meta);

// Golden files must all appear among the identified files.
bool check_repo_understanding(const std::set<std::string>& identified_files,
                              const std::set<std::string>& golden_files);

// Every golden location must be covered: same file and either a matching
// function name or a line-range overlap within +-kLocationToleranceLines.
bool check_fault_localization(const std::vector<pipeline::FaultLocation>& candidate,
                              const std::vector<pipeline::FaultLocation>& golden);

// Multiset token F1 between the candidate and golden edit streams.
double patch_similarity(const patchops::Patch& candidate, const patchops::Patch& golden);

// ---------------------------------------------------------------------------
// Rejection sampling
// ---------------------------------------------------------------------------

enum class Criterion { pass, fail, not_evaluated };

const char* criterion_name(Criterion c);

struct RejectionVerdict {
    Criterion repo_understanding_ok = Criterion::not_evaluated;
    Criterion fault_localization_ok = Criterion::not_evaluated;
    Criterion repro_ok = Criterion::not_evaluated;
    Criterion patch_ok = Criterion::not_evaluated;
    Criterion complexity_ok = Criterion::not_evaluated;
    std::vector<std::size_t> retained_steps; // step indices, ascending
};

struct RejectionOptions {
    double similarity_threshold = kSimilarityThreshold;
    std::size_t base_model_t_max = 12;
};

// Evaluates all five criteria against the triplet's golden data. The base
// model provider runs one greedy single-attempt pipeline for the complexity
// filter; pass nullptr to skip it (criterion stays not_evaluated).
RejectionVerdict rejection_sample(const pipeline::Trajectory& trajectory,
                                  const TripletRecord& triplet,
                                  providers::Provider* base_model,
                                  const RejectionOptions& options = {});

struct TrainingRecord {
    std::string issue_text;
    std::vector<providers::ChatTurn> context; // pruned history
    std::string target_think;
    std::string target_answer;
    std::size_t step_index = 0;
};

std::vector<TrainingRecord> emit_training_records(const pipeline::Trajectory& trajectory,
                                                  const RejectionVerdict& verdict);

std::string training_records_to_jsonl(const std::vector<TrainingRecord>& records);

// ---------------------------------------------------------------------------
// Corpus ingestion
// ---------------------------------------------------------------------------

struct IngestStats {
    std::size_t scanned = 0;
    std::size_t denylisted = 0;
    std::size_t filtered_issue = 0;
    std::size_t filtered_pr = 0;
    std::size_t filtered_stars = 0;
    std::size_t unmerged = 0;
    std::size_t star_warnings = 0;
    std::size_t accepted = 0;
};

// Directory-per-record corpus: {issue.json, golden.patch, pr_meta.json,
// snapshot/, env_spec.json?}. Records from denylisted repositories are
// dropped and counted.
std::vector<TripletRecord> ingest_corpus(const std::filesystem::path& corpus_dir,
                                         const std::set<std::string>& repo_denylist,
                                         IngestStats& stats);

TripletRecord load_triplet(const std::filesystem::path& record_dir);

} // namespace ttc::datasynth
