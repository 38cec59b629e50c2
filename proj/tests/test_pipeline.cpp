#include <doctest.h>

#include "ttc/errors.hpp"
#include "ttc/pipeline.hpp"
#include "ttc/simenv.hpp"
#include "ttc/util/fs.hpp"

#include <random>

using namespace ttc;
using namespace ttc::pipeline;

namespace {

const std::filesystem::path kFixtures = std::filesystem::path(TTC_SOURCE_DIR) / "fixtures";

simenv::FixtureSpec calc_fixture() {
    return simenv::load_fixture(kFixtures / "calc-offby1", false);
}

std::shared_ptr<providers::Provider> scenario_provider(const simenv::FixtureSpec& fixture,
                                                       const std::string& name,
                                                       util::TempDir& scratch) {
    auto config = simenv::scenario_provider_config(fixture, name,
                                                   search::Strategy::exec_only, 1, scratch);
    return providers::make_provider(config);
}

Trajectory make_trajectory(std::size_t steps) {
    Trajectory t;
    t.issue.id = "t";
    t.issue.title = "Title";
    t.issue.body = "Body text";
    for (std::size_t i = 1; i <= steps; ++i) {
        TrajectoryStep step;
        step.stage = Stage::repo_understanding;
        step.step_index = i;
        step.think = "think_" + std::to_string(i);
        step.answer = "ans_" + std::to_string(i);
        step.observation = "obs_" + std::to_string(i);
        t.steps.push_back(step);
    }
    return t;
}

} // namespace

TEST_CASE("analyze: FILES single inline entry") {
    ParsedAction action = analyze_answer(Stage::repo_understanding, "FILES: src/calc.py");
    REQUIRE(action.type == ActionType::identify_files);
    REQUIRE(action.files.size() == 1);
    CHECK(action.files[0] == "src/calc.py");
}

TEST_CASE("analyze: FILES block with bullets and inline commas") {
    ParsedAction action = analyze_answer(
        Stage::repo_understanding,
        "I looked around.\nFILES: src/a.py, src/b.py\n- src/c.py\n- src/d.py\n\nDone.");
    REQUIRE(action.type == ActionType::identify_files);
    CHECK(action.files == std::vector<std::string>{"src/a.py", "src/b.py", "src/c.py",
                                                   "src/d.py"});
}

TEST_CASE("analyze: malformed grammar falls back with raw text preserved") {
    std::string raw = "I think the bug is somewhere in the parser";
    ParsedAction action = analyze_answer(Stage::repo_understanding, raw);
    CHECK(action.type == ActionType::fallback);
    CHECK(action.raw_text == raw);

    CHECK(analyze_answer(Stage::fault_localization, "LOCATIONS:\n(no entries)").type ==
          ActionType::fallback);
    CHECK(analyze_answer(Stage::patch_generation, "no fenced block here").type ==
          ActionType::fallback);
    // fenced block that is not a parseable diff also falls back
    CHECK(analyze_answer(Stage::patch_generation, "```diff\nnot a diff\n```").type ==
          ActionType::fallback);
}

TEST_CASE("analyze: localization entry with function and line range") {
    ParsedAction action = analyze_answer(Stage::fault_localization,
                                         "LOCATIONS:\n- src/calc.py:Calc.add:10-14");
    REQUIRE(action.type == ActionType::localize_faults);
    REQUIRE(action.locations.size() == 1);
    CHECK(action.locations[0].path == "src/calc.py");
    CHECK(action.locations[0].function == "Calc.add");
    CHECK(action.locations[0].line_start == 10);
    CHECK(action.locations[0].line_end == 14);
}

TEST_CASE("analyze: localization grammar round-trips generated entries") {
    // Grammar oracle built before the implementation: render a random
    // location per the documented syntax and require a lossless parse.
    std::mt19937_64 rng(99);
    const std::string paths[] = {"src/mod.py", "lib/deep/name.sh", "a.c"};
    const std::string funcs[] = {"", "run", "Calc.add", "ns.Cls.fn"};
    for (int i = 0; i < 200; ++i) {
        FaultLocation expect;
        expect.path = paths[rng() % 3];
        expect.function = funcs[rng() % 4];
        if (rng() % 2) {
            expect.line_start = 1 + rng() % 500;
            expect.line_end = expect.line_start + rng() % 40;
        }
        std::string rendered = "- " + expect.path + ":" + expect.function;
        if (expect.line_start)
            rendered += ":" + std::to_string(expect.line_start) + "-" +
                        std::to_string(expect.line_end);
        ParsedAction action =
            analyze_answer(Stage::fault_localization, "LOCATIONS:\n" + rendered);
        REQUIRE(action.type == ActionType::localize_faults);
        REQUIRE(action.locations.size() == 1);
        CHECK(action.locations[0].path == expect.path);
        CHECK(action.locations[0].function == expect.function);
        CHECK(action.locations[0].line_start == expect.line_start);
        CHECK(action.locations[0].line_end == expect.line_end);
    }
}

TEST_CASE("analyze: fenced diff, REPRO script, and VERIFY") {
    std::string diff_answer =
        "Fix below.\n```diff\n--- a/x.py\n+++ b/x.py\n@@ -1,1 +1,1 @@\n-a = 1\n+a = 2\n```\n";
    ParsedAction patch = analyze_answer(Stage::patch_generation, diff_answer);
    REQUIRE(patch.type == ActionType::emit_patch);
    CHECK(patch.diff_text.find("+a = 2") != std::string::npos);

    ParsedAction repro = analyze_answer(Stage::patch_verification,
                                        "REPRO:\n```python\nprint('hi')\n```\n");
    REQUIRE(repro.type == ActionType::emit_repro_script);
    CHECK(repro.script_source == "print('hi')\n");
    CHECK(repro.script_language == "python");

    CHECK(analyze_answer(Stage::patch_verification, "VERIFY").type ==
          ActionType::run_verification);
    CHECK(analyze_answer(Stage::patch_verification, "maybe run it?").type ==
          ActionType::fallback);
}

TEST_CASE("history_view: base case for a one-step prefix is issue + obs only") {
    Trajectory t = make_trajectory(1);
    auto turns = history_view(t, 1);
    REQUIRE(turns.size() == 1);
    CHECK(turns[0].role == providers::Role::user);
    CHECK(turns[0].content == "Title\n\nBody text\n\nobs_1");
    // no answer text appears anywhere
    CHECK(turns[0].content.find("ans_1") == std::string::npos);
}

TEST_CASE("history_view: think text never appears in the context") {
    Trajectory t = make_trajectory(3);
    t.steps[1].think = "long reasoning";
    auto turns = history_view(t, 3);
    for (const auto& turn : turns) {
        CHECK(turn.content.find("long reasoning") == std::string::npos);
        CHECK(turn.content.find("think_") == std::string::npos);
    }
}

TEST_CASE("history_view: three-step prefix holds ans_1, ans_2 and obs_1..obs_3 in order") {
    Trajectory t = make_trajectory(3);
    auto turns = history_view(t, 3);
    REQUIRE(turns.size() == 5);
    CHECK(turns[0].content == "Title\n\nBody text\n\nobs_1");
    CHECK(turns[1].role == providers::Role::assistant);
    CHECK(turns[1].content == "ans_1");
    CHECK(turns[2].content == "obs_2");
    CHECK(turns[3].content == "ans_2");
    CHECK(turns[4].content == "obs_3");
    // ans_3 is not part of H_3
    for (const auto& turn : turns) CHECK(turn.content.find("ans_3") == std::string::npos);
}

TEST_CASE("history_view rejects an out-of-range prefix") {
    Trajectory t = make_trajectory(2);
    CHECK_THROWS_AS(history_view(t, 3), ContractError);
}

TEST_CASE("generate_trajectory: scripted first-pass solve is 5 steps, resolved") {
    auto fixture = calc_fixture();
    util::TempDir scratch("ttc-scn");
    auto provider = scenario_provider(fixture, "pipeline", scratch);
    Trajectory t = generate_trajectory(fixture.issue, fixture.snapshot(), *provider, 12);

    CHECK(t.terminal_status == TerminalStatus::resolved);
    REQUIRE(t.steps.size() == 5);
    CHECK(t.steps[0].stage == Stage::repo_understanding);
    CHECK(t.steps[1].stage == Stage::fault_localization);
    CHECK(t.steps[2].stage == Stage::patch_generation);
    CHECK(t.steps[3].stage == Stage::patch_verification);
    CHECK(t.steps[3].action.type == ActionType::emit_repro_script);
    CHECK(t.steps[4].action.type == ActionType::run_verification);
    CHECK(t.steps[4].observation.find("resolved") != std::string::npos);

    // the fixture's oracle: its own golden tests pass under this patch
    auto run = run_pipeline(fixture.issue, fixture.snapshot(), *scenario_provider(fixture, "pipeline", scratch));
    REQUIRE(run.final_patch.has_value());
    CHECK(simenv::patch_resolves_fixture(fixture, *run.final_patch));
}

TEST_CASE("generate_trajectory: unparseable replies burn the whole step budget") {
    auto fixture = calc_fixture();
    util::TempDir scratch("ttc-scn");
    auto provider = scenario_provider(fixture, "fallback", scratch);
    Trajectory t = generate_trajectory(fixture.issue, fixture.snapshot(), *provider, 6);
    CHECK(t.terminal_status == TerminalStatus::step_budget_exhausted);
    REQUIRE(t.steps.size() == 6);
    for (const auto& step : t.steps) {
        CHECK(step.action.type == ActionType::fallback);
        CHECK(step.observation == "parse error");
        CHECK_FALSE(step.action.raw_text.empty());
    }
}

TEST_CASE("generate_trajectory: failed verification loops back to patch generation once") {
    auto fixture = calc_fixture();
    util::TempDir scratch("ttc-scn");
    auto provider = scenario_provider(fixture, "refine", scratch);
    Trajectory t = generate_trajectory(fixture.issue, fixture.snapshot(), *provider, 12);
    CHECK(t.terminal_status == TerminalStatus::resolved);
    REQUIRE(t.steps.size() == 7);
    CHECK(t.steps[4].action.type == ActionType::run_verification);
    CHECK(t.steps[4].observation.find("reproduced") != std::string::npos);
    CHECK(t.steps[5].stage == Stage::patch_generation);
    CHECK(t.steps[6].action.type == ActionType::run_verification);
    CHECK(t.steps[6].observation.find("resolved") != std::string::npos);
}

TEST_CASE("generate_trajectory: verification without an env spec fails the trajectory") {
    auto fixture = calc_fixture();
    util::TempDir scratch("ttc-scn");
    auto provider = scenario_provider(fixture, "pipeline", scratch);
    RepoSnapshot repo = pipeline::load_snapshot(fixture.snapshot_dir(), std::nullopt);
    Trajectory t = generate_trajectory(fixture.issue, repo, *provider, 12);
    CHECK(t.terminal_status == TerminalStatus::failed);
    CHECK(t.steps.back().observation.find("no environment spec") != std::string::npos);
}

TEST_CASE("generate_trajectory rejects t_max below one full stage pass") {
    auto fixture = calc_fixture();
    util::TempDir scratch("ttc-scn");
    auto provider = scenario_provider(fixture, "pipeline", scratch);
    CHECK_THROWS_AS(generate_trajectory(fixture.issue, fixture.snapshot(), *provider, 3),
                    ContractError);
}

TEST_CASE("stage-order invariant over the scripted scenarios") {
    auto fixture = calc_fixture();
    for (const std::string& scenario : {"pipeline", "refine", "badrepro"}) {
        util::TempDir scratch("ttc-scn");
        auto provider = scenario_provider(fixture, scenario, scratch);
        Trajectory t = generate_trajectory(fixture.issue, fixture.snapshot(), *provider, 12);

        // collapse consecutive equal stages of non-fallback steps into blocks
        std::vector<Stage> blocks;
        for (const auto& step : t.steps) {
            if (step.action.type == ActionType::fallback) continue;
            if (blocks.empty() || blocks.back() != step.stage) blocks.push_back(step.stage);
        }
        REQUIRE(blocks.size() >= 2);
        CHECK(blocks[0] == Stage::repo_understanding);
        CHECK(blocks[1] == Stage::fault_localization);
        for (std::size_t i = 2; i < blocks.size(); ++i) {
            if (i % 2 == 0)
                CHECK(blocks[i] == Stage::patch_generation);
            else
                CHECK(blocks[i] == Stage::patch_verification);
        }
    }
}

TEST_CASE("pruning invariant and token accounting hold on a real run") {
    auto fixture = calc_fixture();
    util::TempDir scratch("ttc-scn");
    auto provider = scenario_provider(fixture, "pipeline", scratch);
    Trajectory t = generate_trajectory(fixture.issue, fixture.snapshot(), *provider, 12);

    std::size_t token_sum = 0;
    for (const auto& step : t.steps) token_sum += step.output_tokens;
    CHECK(t.total_output_tokens == token_sum);
    CHECK(t.total_output_tokens > 0);

    for (std::size_t upto = 0; upto <= t.steps.size(); ++upto) {
        auto turns = history_view(t, upto);
        for (std::size_t i = 0; i < upto; ++i) {
            if (t.steps[i].think.empty()) continue;
            for (const auto& turn : turns)
                CHECK(turn.content.find(t.steps[i].think) == std::string::npos);
        }
    }
}

TEST_CASE("replay determinism: three runs produce bit-identical logs") {
    auto fixture = calc_fixture();
    util::TempDir scratch("ttc-scn");
    auto config = simenv::scenario_provider_config(fixture, "pipeline",
                                                   search::Strategy::exec_only, 1, scratch);
    std::string first;
    for (int run = 0; run < 3; ++run) {
        auto provider = providers::make_provider(config);
        Trajectory t = generate_trajectory(fixture.issue, fixture.snapshot(), *provider, 12);
        std::string log = trajectory_to_jsonl(t);
        if (run == 0)
            first = log;
        else
            CHECK(log == first);
    }
}

TEST_CASE("trajectory JSONL round-trip") {
    auto fixture = calc_fixture();
    util::TempDir scratch("ttc-scn");
    auto provider = scenario_provider(fixture, "pipeline", scratch);
    Trajectory t = generate_trajectory(fixture.issue, fixture.snapshot(), *provider, 12);

    Trajectory back = trajectory_from_jsonl(trajectory_to_jsonl(t));
    CHECK(back.issue.id == t.issue.id);
    CHECK(back.terminal_status == t.terminal_status);
    CHECK(back.total_output_tokens == t.total_output_tokens);
    REQUIRE(back.steps.size() == t.steps.size());
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        CHECK(back.steps[i].stage == t.steps[i].stage);
        CHECK(back.steps[i].answer == t.steps[i].answer);
        CHECK(back.steps[i].observation == t.steps[i].observation);
        CHECK(back.steps[i].action.type == t.steps[i].action.type);
    }
    // re-serializing reproduces the log byte for byte
    CHECK(trajectory_to_jsonl(back) == trajectory_to_jsonl(t));
}

TEST_CASE("build_prompt ends with a user turn and carries the stage instruction") {
    auto fixture = calc_fixture();
    RepoSnapshot repo = fixture.snapshot();
    Trajectory empty;
    empty.issue = fixture.issue;
    auto prompt = build_prompt(fixture.issue, repo, empty, Stage::repo_understanding, false);
    REQUIRE(prompt.size() >= 2);
    CHECK(prompt[0].role == providers::Role::system);
    CHECK(prompt[0].content.find("repo_understanding") != std::string::npos);
    CHECK(prompt[0].content.find("src/calc.py") != std::string::npos);
    CHECK(prompt.back().role == providers::Role::user);
    CHECK_NOTHROW(providers::check_history(prompt));
}
