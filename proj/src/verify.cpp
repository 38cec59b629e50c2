#include "ttc/verify.hpp"
#include "ttc/errors.hpp"
#include "ttc/util/fs.hpp"
#include "ttc/util/strings.hpp"

#include <json.hpp>

#include <algorithm>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ttc::verify {

const char* repro_outcome_name(ReproOutcome o) {
    switch (o) {
    case ReproOutcome::reproduced: return "reproduced";
    case ReproOutcome::resolved: return "resolved";
    case ReproOutcome::invalid_script: return "invalid_script";
    case ReproOutcome::not_run: return "not_run";
    }
    return "unknown";
}

std::string render_report(const VerificationReport& report) {
    std::ostringstream oss;
    oss << "patch applied: " << (report.patch_applied ? "yes" : "no")
        << "; reproduction: " << repro_outcome_name(report.repro_outcome)
        << "; regressions: " << report.regression_passed << " passed, "
        << report.regression_failed << " failed of " << report.regression_total;
    if (!report.diagnostic.empty()) oss << "; note: " << report.diagnostic;
    return oss.str();
}

std::string report_to_json(const VerificationReport& report) {
    json j = {{"patch_applied", report.patch_applied},
              {"repro_outcome", repro_outcome_name(report.repro_outcome)},
              {"regression_passed", report.regression_passed},
              {"regression_failed", report.regression_failed},
              {"regression_total", report.regression_total},
              {"fully_verified", report.fully_verified()},
              {"wall_time_ms", report.wall_time.count()}};
    if (!report.diagnostic.empty()) j["diagnostic"] = report.diagnostic;
    return j.dump();
}

EnvSpec load_env_spec(const fs::path& json_path) {
    json j;
    try {
        j = json::parse(util::read_file(json_path));
    } catch (const json::exception& e) {
        throw ParseError("env spec " + json_path.string() + ": " + e.what());
    }
    EnvSpec spec;
    spec.run_template = j.value("run", std::string{});
    spec.test_command = j.value("test", std::string{});
    if (j.contains("setup"))
        for (const auto& cmd : j["setup"]) spec.setup_commands.push_back(cmd.get<std::string>());
    if (j.contains("wall_limit_ms"))
        spec.caps.wall_limit = std::chrono::milliseconds(j["wall_limit_ms"].get<int>());
    if (j.contains("memory_bytes"))
        spec.caps.memory_bytes = j["memory_bytes"].get<std::uint64_t>();
    return spec;
}

SandboxLease::SandboxLease(const fs::path& snapshot, std::string base_revision, EnvSpec env)
    : dir_("ttc-sandbox"), base_revision_(std::move(base_revision)), env_(std::move(env)) {
    util::copy_tree(snapshot, dir_.path());
    for (const auto& cmd : env_.setup_commands) {
        auto result = util::run_command(cmd, dir_.path(), env_.caps);
        if (result.exit_code != 0)
            throw EnvironmentError("sandbox setup command failed: " + cmd);
    }
}

SandboxFactory::SandboxFactory(fs::path snapshot, std::string base_revision, EnvSpec env)
    : snapshot_(std::move(snapshot)), base_revision_(std::move(base_revision)),
      env_(std::move(env)) {
    if (!fs::is_directory(snapshot_))
        throw EnvironmentError("snapshot directory missing: " + snapshot_.string());
}

std::unique_ptr<SandboxLease> SandboxFactory::lease() const {
    return std::make_unique<SandboxLease>(snapshot_, base_revision_, env_);
}

namespace {

// Applies all hunks of one file in memory. Returns nullopt on any context or
// position mismatch.
std::optional<std::string> apply_file_patch(const std::string& original,
                                            const patchops::FilePatch& file) {
    auto lines = util::split_lines(original);
    bool had_trailing_newline = original.empty() || original.back() == '\n';

    std::vector<std::string> output;
    std::size_t cursor = 0; // index into `lines`, 0-based

    for (const auto& hunk : file.hunks) {
        // old_start is 1-based; an old_count of 0 means "insert after".
        std::size_t anchor = hunk.old_count == 0 ? hunk.old_start : hunk.old_start - 1;
        if (anchor < cursor) return std::nullopt; // overlapping hunks
        if (anchor > lines.size()) return std::nullopt;
        for (; cursor < anchor; ++cursor) output.push_back(lines[cursor]);

        for (const auto& line : hunk.lines) {
            if (line.tag == '+') {
                output.push_back(line.text);
                continue;
            }
            // Context and removals must match the original exactly.
            if (cursor >= lines.size() || lines[cursor] != line.text) return std::nullopt;
            if (line.tag == ' ') output.push_back(lines[cursor]);
            ++cursor;
        }
    }
    for (; cursor < lines.size(); ++cursor) output.push_back(lines[cursor]);

    std::string result = util::join(output, "\n");
    if (!output.empty() && had_trailing_newline) result += "\n";
    return result;
}

} // namespace

bool apply_patch(const SandboxLease& sandbox, const patchops::Patch& patch) {
    // Stage every file in memory first so a failed hunk leaves the sandbox
    // pristine.
    struct Staged {
        fs::path path;
        std::optional<std::string> content; // nullopt means delete
    };
    std::vector<Staged> staged;

    for (const auto& file : patch.files) {
        const bool creating = file.old_path.empty();
        const bool deleting = file.new_path.empty();
        fs::path target = sandbox.workdir() / file.path();

        if (creating) {
            if (fs::exists(target)) return false;
            auto content = apply_file_patch("", file);
            if (!content) return false;
            staged.push_back({target, std::move(content)});
            continue;
        }
        if (!fs::is_regular_file(target)) return false;
        std::string original = util::read_file(target);
        auto content = apply_file_patch(original, file);
        if (!content) return false;
        if (deleting) {
            if (!content->empty()) return false;
            staged.push_back({target, std::nullopt});
        } else {
            staged.push_back({target, std::move(content)});
        }
    }

    for (const auto& s : staged) {
        if (s.content)
            util::write_file(s.path, *s.content);
        else
            fs::remove(s.path);
    }
    return true;
}

ReproOutcome run_reproduction(const SandboxLease& sandbox, const ReproScript& script) {
    if (script.source.empty()) throw ContractError("reproduction script is empty");
    if (sandbox.env().run_template.empty())
        throw EnvironmentError("env spec declares no run command");

    fs::path script_path = sandbox.workdir() / ".ttc_repro";
    util::write_file(script_path, script.source);

    std::string command = sandbox.env().run_template;
    std::size_t pos = command.find("{script}");
    if (pos == std::string::npos)
        throw EnvironmentError("run template lacks a {script} placeholder");
    command.replace(pos, 8, script_path.filename().string());

    auto result = util::run_command(command, sandbox.workdir(), sandbox.env().caps);
    if (result.timed_out) return ReproOutcome::invalid_script;

    // Exact match against the final stdout line; trailing newlines ignored.
    std::string out = result.stdout_text;
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    std::size_t nl = out.rfind('\n');
    std::string final_line = nl == std::string::npos ? out : out.substr(nl + 1);
    if (!final_line.empty() && final_line.back() == '\r') final_line.pop_back();

    if (final_line == kReproducedSentinel) return ReproOutcome::reproduced;
    if (final_line == kResolvedSentinel) return ReproOutcome::resolved;
    return ReproOutcome::invalid_script;
}

bool validate_repro_script(const SandboxFactory& factory, const ReproScript& script,
                           const patchops::Patch& golden_patch) {
    {
        auto pristine = factory.lease();
        if (run_reproduction(*pristine, script) != ReproOutcome::reproduced) return false;
    }
    auto patched = factory.lease();
    if (!apply_patch(*patched, golden_patch))
        throw EnvironmentError("golden patch does not apply cleanly");
    return run_reproduction(*patched, script) == ReproOutcome::resolved;
}

RegressionCounts run_regressions(const SandboxLease& sandbox) {
    RegressionCounts counts;
    if (sandbox.env().test_command.empty()) {
        counts.diagnostic = "no test command declared";
        return counts;
    }
    auto result = util::run_command(sandbox.env().test_command, sandbox.workdir(),
                                    sandbox.env().caps);
    if (result.timed_out) counts.diagnostic = "test command timed out";

    std::optional<std::size_t> declared_total;
    for (const auto& line : util::split_lines(result.stdout_text)) {
        std::string trimmed = util::trim(line);
        if (util::starts_with(trimmed, "TEST ")) {
            if (trimmed.ends_with(": PASS"))
                ++counts.passed;
            else if (trimmed.ends_with(": FAIL"))
                ++counts.failed;
        } else if (util::starts_with(trimmed, "TOTAL ")) {
            try {
                declared_total = std::stoul(trimmed.substr(6));
            } catch (...) {}
        }
    }
    counts.total = declared_total.value_or(counts.passed + counts.failed);
    if (counts.total < counts.passed + counts.failed)
        counts.total = counts.passed + counts.failed;
    return counts;
}

VerificationReport verify_patch(const SandboxFactory& factory, const patchops::Patch& patch,
                                const std::optional<ReproScript>& script) {
    auto start = std::chrono::steady_clock::now();
    VerificationReport report;
    auto sandbox = factory.lease();

    report.patch_applied = apply_patch(*sandbox, patch);
    if (report.patch_applied) {
        if (script && !script->source.empty())
            report.repro_outcome = run_reproduction(*sandbox, *script);
        else
            report.repro_outcome = ReproOutcome::not_run;
        auto counts = run_regressions(*sandbox);
        report.regression_passed = counts.passed;
        report.regression_failed = counts.failed;
        report.regression_total = counts.total;
        report.diagnostic = counts.diagnostic;
    }
    report.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);
    return report;
}

} // namespace ttc::verify
