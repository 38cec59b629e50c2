#include <doctest.h>

#include "ttc/errors.hpp"
#include "ttc/patchops.hpp"
#include "ttc/util/fs.hpp"
#include "ttc/util/strings.hpp"
#include "ttc/verify.hpp"

#include <thread>

using namespace ttc;
using namespace ttc::verify;

namespace {

const std::filesystem::path kFixtures = std::filesystem::path(TTC_SOURCE_DIR) / "fixtures";

// A miniature snapshot built on the fly: one python module with an
// inverted comparison plus a tiny test runner.
struct MiniRepo {
    util::TempDir dir{"ttc-mini"};

    MiniRepo() {
        util::write_file(dir.path() / "snapshot" / "mod.py",
                         "def biggest(a, b):\n"
                         "    if a < b:\n"
                         "        return a\n"
                         "    return b\n");
        util::write_file(dir.path() / "snapshot" / "run_tests.py",
                         "import sys\n"
                         "sys.path.insert(0, \".\")\n"
                         "from mod import biggest\n"
                         "checks = [\n"
                         "    (\"test_big\", biggest(2, 5) == 5),\n"
                         "    (\"test_equal\", biggest(3, 3) == 3),\n"
                         "]\n"
                         "for name, ok in checks:\n"
                         "    print(\"TEST %s: %s\" % (name, \"PASS\" if ok else \"FAIL\"))\n"
                         "print(\"TOTAL %d\" % len(checks))\n");
    }

    SandboxFactory factory() const {
        EnvSpec env;
        env.run_template = "python3 {script}";
        env.test_command = "python3 run_tests.py";
        return SandboxFactory(dir.path() / "snapshot", "base", env);
    }
};

const std::string kGoldenMini =
    "--- a/mod.py\n"
    "+++ b/mod.py\n"
    "@@ -1,4 +1,4 @@\n"
    " def biggest(a, b):\n"
    "-    if a < b:\n"
    "+    if a > b:\n"
    "         return a\n"
    "     return b\n";

const std::string kMiniValidRepro =
    "import sys\n"
    "sys.path.insert(0, \".\")\n"
    "from mod import biggest\n"
    "print(\"issue resolved\" if biggest(2, 5) == 5 else \"issue reproduced\")\n";

// Test-first oracle for the strict application semantics: a hunk matches
// only if every context/removal line equals the original at the declared
// position. Used to cross-check apply_patch on the shifted-hunk case.
bool strict_hunk_matches(const std::vector<std::string>& original, const patchops::Hunk& hunk) {
    std::size_t line = hunk.old_start;
    for (const auto& hl : hunk.lines) {
        if (hl.tag == '+') continue;
        if (line - 1 >= original.size() || original[line - 1] != hl.text) return false;
        ++line;
    }
    return true;
}

} // namespace

TEST_CASE("apply_patch: golden fixture patch applies to its own fixture") {
    MiniRepo repo;
    auto factory = repo.factory();
    auto sandbox = factory.lease();
    CHECK(apply_patch(*sandbox, patchops::parse_diff(kGoldenMini)));
    CHECK(util::read_file(sandbox->workdir() / "mod.py").find("a > b") != std::string::npos);
}

TEST_CASE("apply_patch: context mismatch returns false and leaves the sandbox pristine") {
    MiniRepo repo;
    auto factory = repo.factory();
    auto sandbox = factory.lease();
    std::string wrong_context = kGoldenMini;
    auto pos = wrong_context.find(" def biggest(a, b):");
    wrong_context.replace(pos, 19, " def biggest(x, y):");
    std::string before = util::read_file(sandbox->workdir() / "mod.py");
    CHECK_FALSE(apply_patch(*sandbox, patchops::parse_diff(wrong_context)));
    CHECK(util::read_file(sandbox->workdir() / "mod.py") == before);
}

TEST_CASE("apply_patch: shifted line numbers with matching context still fail (strict)") {
    MiniRepo repo;
    auto factory = repo.factory();
    // Shift the hunk start by one; the context matches at line 1, not 2.
    std::string shifted = kGoldenMini;
    auto pos = shifted.find("@@ -1,4 +1,4 @@");
    shifted.replace(pos, 15, "@@ -2,4 +2,4 @@");
    patchops::Patch patch = patchops::parse_diff(shifted);

    // Oracle first: the strict matcher rejects the shifted position.
    auto original = util::split_lines(util::read_file(repo.dir.path() / "snapshot" / "mod.py"));
    REQUIRE(strict_hunk_matches(original, patchops::parse_diff(kGoldenMini).files[0].hunks[0]));
    REQUIRE_FALSE(strict_hunk_matches(original, patch.files[0].hunks[0]));

    auto sandbox = factory.lease();
    CHECK_FALSE(apply_patch(*sandbox, patch));
}

TEST_CASE("apply_patch: malformed diff raises ParseError, not a clean false") {
    CHECK_THROWS_AS(patchops::parse_diff("--- a/x\n+++ b/x\n@@ -1,2 +1,1 @@\n-x\n"),
                    ParseError);
}

TEST_CASE("apply_patch: file creation and deletion") {
    MiniRepo repo;
    auto factory = repo.factory();
    auto sandbox = factory.lease();
    std::string create =
        "--- /dev/null\n+++ b/extra.py\n@@ -0,0 +1,1 @@\n+VALUE = 7\n";
    CHECK(apply_patch(*sandbox, patchops::parse_diff(create)));
    CHECK(util::read_file(sandbox->workdir() / "extra.py") == "VALUE = 7\n");

    std::string remove =
        "--- a/extra.py\n+++ /dev/null\n@@ -1,1 +0,0 @@\n-VALUE = 7\n";
    CHECK(apply_patch(*sandbox, patchops::parse_diff(remove)));
    CHECK_FALSE(std::filesystem::exists(sandbox->workdir() / "extra.py"));
}

TEST_CASE("run_reproduction: sentinel classification") {
    MiniRepo repo;
    auto factory = repo.factory();
    {
        auto sandbox = factory.lease();
        CHECK(run_reproduction(*sandbox, {kMiniValidRepro, "python"}) ==
              ReproOutcome::reproduced);
    }
    {
        auto sandbox = factory.lease();
        REQUIRE(apply_patch(*sandbox, patchops::parse_diff(kGoldenMini)));
        CHECK(run_reproduction(*sandbox, {kMiniValidRepro, "python"}) ==
              ReproOutcome::resolved);
    }
    {
        auto sandbox = factory.lease();
        CHECK(run_reproduction(*sandbox, {"print('nothing useful')\n", "python"}) ==
              ReproOutcome::invalid_script);
        CHECK(run_reproduction(*sandbox, {"pass\n", "python"}) ==
              ReproOutcome::invalid_script);
        CHECK(run_reproduction(*sandbox, {"raise SystemExit(2)\n", "python"}) ==
              ReproOutcome::invalid_script);
    }
}

TEST_CASE("run_reproduction: sentinel must be the final stdout line, exactly") {
    MiniRepo repo;
    auto factory = repo.factory();
    auto sandbox = factory.lease();
    CHECK(run_reproduction(*sandbox,
                           {"print('log noise')\nprint('issue reproduced')\n", "python"}) ==
          ReproOutcome::reproduced);
    CHECK(run_reproduction(*sandbox,
                           {"print('issue reproduced')\nprint('and then more')\n", "python"}) ==
          ReproOutcome::invalid_script);
    CHECK(run_reproduction(*sandbox, {"print('ISSUE REPRODUCED')\n", "python"}) ==
          ReproOutcome::invalid_script);
}

TEST_CASE("validate_repro_script: two-leg truth table") {
    MiniRepo repo;
    auto factory = repo.factory();
    patchops::Patch golden = patchops::parse_diff(kGoldenMini);

    CHECK(validate_repro_script(factory, {kMiniValidRepro, "python"}, golden));
    // degenerate script: always claims resolved, fails the pristine leg
    CHECK_FALSE(validate_repro_script(factory, {"print('issue resolved')\n", "python"}, golden));
    // inverse script: asserts the buggy behavior, fails both legs
    std::string inverse =
        "import sys\nsys.path.insert(0, \".\")\nfrom mod import biggest\n"
        "print(\"issue resolved\" if biggest(2, 5) == 2 else \"issue reproduced\")\n";
    CHECK_FALSE(validate_repro_script(factory, {inverse, "python"}, golden));
}

TEST_CASE("run_regressions on the calc fixture: (3,1,4) then (4,0,4)") {
    EnvSpec env = load_env_spec(kFixtures / "calc-offby1" / "env_spec.json");
    SandboxFactory factory(kFixtures / "calc-offby1" / "snapshot", "base", env);
    {
        auto pristine = factory.lease();
        auto counts = run_regressions(*pristine);
        CHECK(counts.passed == 3);
        CHECK(counts.failed == 1);
        CHECK(counts.total == 4);
    }
    {
        auto patched = factory.lease();
        patchops::Patch golden = patchops::parse_diff(
            util::read_file(kFixtures / "calc-offby1" / "golden.patch"));
        REQUIRE(apply_patch(*patched, golden));
        auto counts = run_regressions(*patched);
        CHECK(counts.passed == 4);
        CHECK(counts.failed == 0);
        CHECK(counts.total == 4);
    }
}

TEST_CASE("run_regressions: empty suite and missing command") {
    MiniRepo repo;
    EnvSpec env;
    env.run_template = "python3 {script}";
    env.test_command = "true"; // prints nothing: vacuous suite
    SandboxFactory factory(repo.dir.path() / "snapshot", "base", env);
    auto sandbox = factory.lease();
    auto counts = run_regressions(*sandbox);
    CHECK(counts.passed == 0);
    CHECK(counts.failed == 0);
    CHECK(counts.total == 0);

    EnvSpec none;
    none.run_template = "python3 {script}";
    SandboxFactory factory2(repo.dir.path() / "snapshot", "base", none);
    auto sandbox2 = factory2.lease();
    auto missing = run_regressions(*sandbox2);
    CHECK(missing.total == 0);
    CHECK_FALSE(missing.diagnostic.empty());
}

TEST_CASE("verify_patch: composition over the calc fixture") {
    EnvSpec env = load_env_spec(kFixtures / "calc-offby1" / "env_spec.json");
    SandboxFactory factory(kFixtures / "calc-offby1" / "snapshot", "base", env);
    patchops::Patch golden =
        patchops::parse_diff(util::read_file(kFixtures / "calc-offby1" / "golden.patch"));
    ReproScript valid{util::read_file(kFixtures / "calc-offby1" / "repro_valid.py"), "python"};

    SUBCASE("golden patch and valid script fully verify") {
        auto report = verify_patch(factory, golden, valid);
        CHECK(report.patch_applied);
        CHECK(report.repro_outcome == ReproOutcome::resolved);
        CHECK(report.regression_passed == 4);
        CHECK(report.regression_failed == 0);
        CHECK(report.regression_total == 4);
        CHECK(report.fully_verified());
    }
    SUBCASE("no-op empty patch applies but changes nothing") {
        auto report = verify_patch(factory, patchops::parse_diff(""), valid);
        CHECK(report.patch_applied);
        CHECK(report.repro_outcome == ReproOutcome::reproduced);
        CHECK(report.regression_passed == 3);
        CHECK(report.regression_failed == 1);
        CHECK_FALSE(report.fully_verified());
    }
    SUBCASE("non-applying patch short-circuits") {
        std::string bogus = "--- a/src/calc.py\n+++ b/src/calc.py\n@@ -1,1 +1,1 @@\n"
                            "-not in the file\n+also not\n";
        auto report = verify_patch(factory, patchops::parse_diff(bogus), valid);
        CHECK_FALSE(report.patch_applied);
        CHECK(report.repro_outcome == ReproOutcome::not_run);
        CHECK(report.regression_total == 0);
    }
    SUBCASE("no script supplied leaves reproduction not_run") {
        auto report = verify_patch(factory, golden, std::nullopt);
        CHECK(report.patch_applied);
        CHECK(report.repro_outcome == ReproOutcome::not_run);
    }
}

TEST_CASE("isolation: concurrent verifications do not interfere") {
    MiniRepo repo;
    auto factory = repo.factory();
    patchops::Patch golden = patchops::parse_diff(kGoldenMini);
    ReproScript script{kMiniValidRepro, "python"};

    std::string snapshot_before = util::read_file(repo.dir.path() / "snapshot" / "mod.py");
    VerificationReport good_report, noop_report;
    std::thread a([&] { good_report = verify_patch(factory, golden, script); });
    std::thread b([&] { noop_report = verify_patch(factory, patchops::parse_diff(""), script); });
    a.join();
    b.join();
    CHECK(good_report.fully_verified());
    CHECK(noop_report.repro_outcome == ReproOutcome::reproduced);
    // source snapshot untouched
    CHECK(util::read_file(repo.dir.path() / "snapshot" / "mod.py") == snapshot_before);
}

TEST_CASE("resource caps classify runaway scripts as invalid") {
    MiniRepo repo;
    EnvSpec env;
    env.run_template = "python3 {script}";
    env.caps.wall_limit = std::chrono::milliseconds(300);
    SandboxFactory factory(repo.dir.path() / "snapshot", "base", env);
    auto sandbox = factory.lease();
    CHECK(run_reproduction(*sandbox, {"import time\ntime.sleep(10)\n", "python"}) ==
          ReproOutcome::invalid_script);
}

TEST_CASE("report json carries the verification outcome") {
    VerificationReport report;
    report.patch_applied = true;
    report.repro_outcome = ReproOutcome::resolved;
    report.regression_passed = 4;
    report.regression_total = 4;
    std::string j = report_to_json(report);
    CHECK(j.find("\"fully_verified\":true") != std::string::npos);
    CHECK(j.find("\"repro_outcome\":\"resolved\"") != std::string::npos);
}
