#pragma once
#include "ttc/pipeline.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ttc::evalkit {

struct LocalizationFlags {
    bool file_ok = false;
    bool func_ok = false;
    bool chunk_ok = false;
};

struct EvalRecord {
    std::string issue_id;
    bool resolved = false;
    LocalizationFlags localization;
    std::size_t output_tokens = 0;
    std::size_t budget = 1;
    std::string strategy;
};

// Difficulty buckets from leaderboard solve counts: 1 easiest [25,30] ...
// 5 hardest [5,10); counts below 5 are excluded. Shared endpoints belong to
// the easier (lower-numbered) bucket.
std::optional<int> bucket_issue(int solve_count);

// Fault-location success at the three levels of the localization table:
// file containment, function-name coverage, line-chunk coverage.
LocalizationFlags localization_flags(const std::vector<pipeline::FaultLocation>& candidate,
                                     const std::set<std::string>& golden_files,
                                     const std::vector<pipeline::FaultLocation>& golden);

enum class GroupBy { strategy, budget, bucket, repository };

GroupBy group_by_from_name(const std::string& name);

struct ReportRow {
    std::string group;
    std::size_t resolved = 0;
    std::size_t total = 0;
    double rate() const { return total ? 100.0 * resolved / total : 0.0; }
};

struct ResolutionReport {
    std::vector<ReportRow> rows; // deterministic order by group key
    std::vector<std::string> notes;
};

// `bucket_of` maps issue id -> bucket (from the solve-count sidecar) and
// `repository_of` maps issue id -> repository; both may be empty for the
// other groupings.
ResolutionReport resolution_report(const std::vector<EvalRecord>& records, GroupBy group_by,
                                   const std::map<std::string, int>& bucket_of = {},
                                   const std::map<std::string, std::string>& repository_of = {});

struct LocalizationRates {
    double file_rate = 0.0;
    double func_rate = 0.0;
    double chunk_rate = 0.0;
    std::size_t total = 0;
};

LocalizationRates localization_report(const std::vector<EvalRecord>& records);

struct TokenScalingRow {
    int bucket = 0;
    std::size_t count = 0;
    std::optional<double> mean_tokens; // absent for an empty bucket
};

std::vector<TokenScalingRow> token_scaling_report(const std::vector<EvalRecord>& records,
                                                  const std::map<std::string, int>& bucket_of);

// CSV renderings; every table carries denominators and a footer documenting
// the bucket boundary ownership.
std::string resolution_report_csv(const ResolutionReport& report, GroupBy group_by);
std::string token_scaling_csv(const std::vector<TokenScalingRow>& rows);
std::string localization_csv(const LocalizationRates& rates);

// Sidecar file {issue_id: solve_count} -> bucket assignments.
std::map<std::string, int> load_bucket_sidecar(const std::filesystem::path& json_path);

std::string eval_records_to_jsonl(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> eval_records_from_jsonl(const std::string& text);

} // namespace ttc::evalkit
