#pragma once
#include "ttc/patchops.hpp"
#include "ttc/util/fs.hpp"
#include "ttc/util/subprocess.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ttc::verify {

// The two sentinel lines a reproduction script must print as its final
// stdout line.
inline constexpr const char* kReproducedSentinel = "issue reproduced";
inline constexpr const char* kResolvedSentinel = "issue resolved";

struct ReproScript {
    std::string source;
    std::string language = "python";
};

enum class ReproOutcome { reproduced, resolved, invalid_script, not_run };

const char* repro_outcome_name(ReproOutcome o);

struct VerificationReport {
    bool patch_applied = false;
    ReproOutcome repro_outcome = ReproOutcome::not_run;
    std::size_t regression_passed = 0;
    std::size_t regression_failed = 0;
    std::size_t regression_total = 0;
    std::chrono::milliseconds wall_time{0};
    std::string diagnostic; // non-empty when something could not be evaluated

    // The unique class the selection ladder treats as verified.
    bool fully_verified() const {
        return patch_applied && repro_outcome == ReproOutcome::resolved &&
               regression_failed == 0;
    }
};

std::string render_report(const VerificationReport& report);

// One-object-per-verification form for run logs.
std::string report_to_json(const VerificationReport& report);

// Declarative execution recipe stored beside a snapshot:
//   {"run": "python3 {script}", "test": "python3 run_tests.py", "setup": [...]}
struct EnvSpec {
    std::string run_template;  // {script} placeholder for the repro script path
    std::string test_command;
    std::vector<std::string> setup_commands;
    util::ResourceCaps caps;
};

EnvSpec load_env_spec(const std::filesystem::path& json_path);

// A pristine copy of the snapshot, removed when the lease is destroyed.
class SandboxLease {
public:
    SandboxLease(const std::filesystem::path& snapshot, std::string base_revision,
                 EnvSpec env);
    const std::filesystem::path& workdir() const { return dir_.path(); }
    const std::string& base_revision() const { return base_revision_; }
    const EnvSpec& env() const { return env_; }

private:
    util::TempDir dir_;
    std::string base_revision_;
    EnvSpec env_;
};

class SandboxFactory {
public:
    SandboxFactory(std::filesystem::path snapshot, std::string base_revision, EnvSpec env);

    std::unique_ptr<SandboxLease> lease() const;
    const EnvSpec& env() const { return env_; }
    const std::filesystem::path& snapshot() const { return snapshot_; }

private:
    std::filesystem::path snapshot_;
    std::string base_revision_;
    EnvSpec env_;
};

// Strict application: every hunk must match at its stated position with no
// fuzz. Returns false (sandbox untouched) on any mismatch; throws ParseError
// only for malformed diffs.
bool apply_patch(const SandboxLease& sandbox, const patchops::Patch& patch);

ReproOutcome run_reproduction(const SandboxLease& sandbox, const ReproScript& script);

// Two-leg check: reproduced on the pristine tree, resolved after the golden
// patch.
bool validate_repro_script(const SandboxFactory& factory, const ReproScript& script,
                           const patchops::Patch& golden_patch);

struct RegressionCounts {
    std::size_t passed = 0;
    std::size_t failed = 0;
    std::size_t total = 0;
    std::string diagnostic;
};

// Runs the declared test command and tallies "TEST <name>: PASS|FAIL" lines;
// an optional trailing "TOTAL <n>" line pins the expected total.
RegressionCounts run_regressions(const SandboxLease& sandbox);

VerificationReport verify_patch(const SandboxFactory& factory, const patchops::Patch& patch,
                                const std::optional<ReproScript>& script);

} // namespace ttc::verify
