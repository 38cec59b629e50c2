#include "ttc/evalkit.hpp"
#include "ttc/datasynth.hpp"
#include "ttc/errors.hpp"
#include "ttc/util/fs.hpp"
#include "ttc/util/strings.hpp"

#include <json.hpp>

#include <algorithm>
#include <iomanip>
#include <sstream>

using nlohmann::json;

namespace ttc::evalkit {

namespace {

const char* kBucketFooter =
    "# buckets: 1=[25,30] 2=[20,25) 3=[15,20) 4=[10,15) 5=[5,10); "
    "shared endpoints belong to the easier bucket; counts < 5 excluded";

std::string format_rate(double rate) {
    std::ostringstream oss;
    oss << std::fixed << std::setprecision(2) << rate;
    return oss.str();
}

} // namespace

std::optional<int> bucket_issue(int solve_count) {
    if (solve_count < 0 || solve_count > 30)
        throw ContractError("solve_count must be in [0,30], got " +
                            std::to_string(solve_count));
    if (solve_count >= 25) return 1;
    if (solve_count >= 20) return 2;
    if (solve_count >= 15) return 3;
    if (solve_count >= 10) return 4;
    if (solve_count >= 5) return 5;
    return std::nullopt;
}

LocalizationFlags localization_flags(const std::vector<pipeline::FaultLocation>& candidate,
                                     const std::set<std::string>& golden_files,
                                     const std::vector<pipeline::FaultLocation>& golden) {
    LocalizationFlags flags;
    std::set<std::string> candidate_files;
    for (const auto& loc : candidate) candidate_files.insert(loc.path);
    flags.file_ok = !golden_files.empty() &&
                    std::includes(candidate_files.begin(), candidate_files.end(),
                                  golden_files.begin(), golden_files.end());

    if (!golden.empty()) {
        // Function level matches names only; chunk level matches line ranges
        // only. Each reuses the rejection-sampling coverage rule with the
        // other signal blanked out.
        std::vector<pipeline::FaultLocation> names_candidate = candidate;
        std::vector<pipeline::FaultLocation> names_golden = golden;
        for (auto& loc : names_candidate) loc.line_start = loc.line_end = 0;
        for (auto& loc : names_golden) loc.line_start = loc.line_end = 0;
        flags.func_ok = datasynth::check_fault_localization(names_candidate, names_golden);

        std::vector<pipeline::FaultLocation> lines_candidate = candidate;
        std::vector<pipeline::FaultLocation> lines_golden = golden;
        for (auto& loc : lines_candidate) loc.function.clear();
        for (auto& loc : lines_golden) loc.function.clear();
        flags.chunk_ok = datasynth::check_fault_localization(lines_candidate, lines_golden);
    }
    return flags;
}

GroupBy group_by_from_name(const std::string& name) {
    if (name == "strategy") return GroupBy::strategy;
    if (name == "budget") return GroupBy::budget;
    if (name == "bucket") return GroupBy::bucket;
    if (name == "repository") return GroupBy::repository;
    throw ConfigError("unknown group-by key: " + name);
}

ResolutionReport resolution_report(const std::vector<EvalRecord>& records, GroupBy group_by,
                                   const std::map<std::string, int>& bucket_of,
                                   const std::map<std::string, std::string>& repository_of) {
    if (records.empty()) throw ContractError("resolution_report: no records");

    std::map<std::string, ReportRow> groups;
    std::size_t unmapped = 0;
    for (const auto& record : records) {
        std::string key;
        switch (group_by) {
        case GroupBy::strategy: key = record.strategy; break;
        case GroupBy::budget: {
            std::ostringstream oss;
            oss << std::setw(3) << std::setfill('0') << record.budget;
            key = oss.str();
            break;
        }
        case GroupBy::bucket: {
            auto it = bucket_of.find(record.issue_id);
            if (it == bucket_of.end()) {
                ++unmapped;
                continue;
            }
            key = std::to_string(it->second);
            break;
        }
        case GroupBy::repository: {
            auto it = repository_of.find(record.issue_id);
            key = it == repository_of.end() ? std::string("unknown") : it->second;
            break;
        }
        }
        auto& row = groups[key];
        row.group = key;
        row.total += 1;
        if (record.resolved) row.resolved += 1;
    }

    ResolutionReport report;
    for (auto& [key, row] : groups) report.rows.push_back(std::move(row));
    if (unmapped)
        report.notes.push_back(std::to_string(unmapped) +
                               " record(s) without a bucket assignment were omitted");
    return report;
}

LocalizationRates localization_report(const std::vector<EvalRecord>& records) {
    LocalizationRates rates;
    rates.total = records.size();
    if (records.empty()) return rates;
    std::size_t file = 0, func = 0, chunk = 0;
    for (const auto& record : records) {
        if (record.localization.file_ok) ++file;
        if (record.localization.func_ok) ++func;
        if (record.localization.chunk_ok) ++chunk;
    }
    double n = static_cast<double>(records.size());
    rates.file_rate = 100.0 * file / n;
    rates.func_rate = 100.0 * func / n;
    rates.chunk_rate = 100.0 * chunk / n;
    return rates;
}

std::vector<TokenScalingRow> token_scaling_report(const std::vector<EvalRecord>& records,
                                                  const std::map<std::string, int>& bucket_of) {
    std::map<int, std::pair<std::size_t, std::size_t>> sums; // bucket -> (count, tokens)
    for (int bucket = 1; bucket <= 5; ++bucket) sums[bucket] = {0, 0};
    for (const auto& record : records) {
        auto it = bucket_of.find(record.issue_id);
        if (it == bucket_of.end()) continue;
        auto& [count, tokens] = sums[it->second];
        count += 1;
        tokens += record.output_tokens;
    }
    std::vector<TokenScalingRow> rows;
    for (const auto& [bucket, pair] : sums) {
        TokenScalingRow row;
        row.bucket = bucket;
        row.count = pair.first;
        if (pair.first > 0)
            row.mean_tokens = static_cast<double>(pair.second) / pair.first;
        rows.push_back(row);
    }
    return rows;
}

std::string resolution_report_csv(const ResolutionReport& report, GroupBy group_by) {
    const char* key_name = "group";
    switch (group_by) {
    case GroupBy::strategy: key_name = "strategy"; break;
    case GroupBy::budget: key_name = "budget"; break;
    case GroupBy::bucket: key_name = "bucket"; break;
    case GroupBy::repository: key_name = "repository"; break;
    }
    std::ostringstream oss;
    oss << key_name << ",resolved,total,rate_percent\n";
    for (const auto& row : report.rows)
        oss << row.group << "," << row.resolved << "," << row.total << ","
            << format_rate(row.rate()) << "\n";
    for (const auto& note : report.notes) oss << "# " << note << "\n";
    oss << kBucketFooter << "\n";
    return oss.str();
}

std::string token_scaling_csv(const std::vector<TokenScalingRow>& rows) {
    std::ostringstream oss;
    oss << "bucket,count,mean_output_tokens\n";
    for (const auto& row : rows) {
        oss << row.bucket << "," << row.count << ",";
        if (row.mean_tokens)
            oss << format_rate(*row.mean_tokens);
        else
            oss << "n/a";
        oss << "\n";
    }
    oss << kBucketFooter << "\n";
    return oss.str();
}

std::string localization_csv(const LocalizationRates& rates) {
    std::ostringstream oss;
    oss << "level,rate_percent,total\n";
    oss << "file," << format_rate(rates.file_rate) << "," << rates.total << "\n";
    oss << "func," << format_rate(rates.func_rate) << "," << rates.total << "\n";
    oss << "chunk," << format_rate(rates.chunk_rate) << "," << rates.total << "\n";
    oss << kBucketFooter << "\n";
    return oss.str();
}

std::map<std::string, int> load_bucket_sidecar(const std::filesystem::path& json_path) {
    json j = json::parse(util::read_file(json_path));
    std::map<std::string, int> buckets;
    for (const auto& [issue_id, count] : j.items()) {
        auto bucket = bucket_issue(count.get<int>());
        if (bucket) buckets[issue_id] = *bucket;
    }
    return buckets;
}

std::string eval_records_to_jsonl(const std::vector<EvalRecord>& records) {
    std::string out;
    for (const auto& record : records) {
        json j = {{"issue_id", record.issue_id},
                  {"resolved", record.resolved},
                  {"file_ok", record.localization.file_ok},
                  {"func_ok", record.localization.func_ok},
                  {"chunk_ok", record.localization.chunk_ok},
                  {"output_tokens", record.output_tokens},
                  {"budget", record.budget},
                  {"strategy", record.strategy}};
        out += j.dump();
        out += "\n";
    }
    return out;
}

std::vector<EvalRecord> eval_records_from_jsonl(const std::string& text) {
    std::vector<EvalRecord> records;
    for (const auto& line : util::split_lines(text)) {
        if (util::trim(line).empty()) continue;
        json j = json::parse(line);
        EvalRecord record;
        record.issue_id = j.value("issue_id", "");
        record.resolved = j.value("resolved", false);
        record.localization.file_ok = j.value("file_ok", false);
        record.localization.func_ok = j.value("func_ok", false);
        record.localization.chunk_ok = j.value("chunk_ok", false);
        record.output_tokens = j.value("output_tokens", std::size_t{0});
        record.budget = j.value("budget", std::size_t{1});
        record.strategy = j.value("strategy", "");
        records.push_back(std::move(record));
    }
    return records;
}

} // namespace ttc::evalkit
