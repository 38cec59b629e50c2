#pragma once
#include "ttc/stage.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ttc::providers {

enum class Role { system, user, assistant };

const char* role_name(Role r);

struct ChatTurn {
    Role role = Role::user;
    std::string content;
};

// Enforces: non-empty contents, optional leading system turn, then strictly
// alternating user/assistant starting with user. Throws ContractError.
void check_history(const std::vector<ChatTurn>& history);

struct ModelReply {
    std::string think;   // may be empty
    std::string answer;
    std::size_t output_token_count = 0;
};

// What a reward model scores: the two PRM-guarded phases plus final patches.
enum class ScoreStage { repo_understanding, fault_localization, final_patch };

const char* score_stage_name(ScoreStage s);

struct ProviderConfig {
    std::string endpoint;       // http(s)://host:port/... for the remote provider
    std::string mock_scenario;  // path to a JSONL scenario file
    bool replay = false;        // mock only: never advance scenario cursors
    double temperature = 0.0;
    int max_reply_tokens = 4096;
    std::chrono::milliseconds request_timeout{30000};
    std::chrono::milliseconds retry_backoff{100};
    std::string bearer_token;

    // Exactly one of endpoint / mock_scenario must be set.
    void validate() const;
};

class Provider {
public:
    virtual ~Provider() = default;

    virtual ModelReply complete(const std::vector<ChatTurn>& history) = 0;

    // Probability-like score in [0,1]; out-of-range upstream values are
    // rejected, never clamped.
    virtual double score(ScoreStage stage, const std::string& issue_text,
                         const std::string& candidate_text) = 0;
};

std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

// Free-function forms over a shared handle cache are deliberately absent:
// callers construct one handle per run and share it across rollouts.
ModelReply complete(Provider& provider, const std::vector<ChatTurn>& history);
double score_remote(Provider& provider, ScoreStage stage,
                    const std::string& issue_text, const std::string& candidate_text);

// Hash key the mock scenario format matches on. Exposed so tests and
// scenario tooling can compute entries for arbitrary prompts.
std::string history_hash(const std::vector<ChatTurn>& history);
std::string scoring_hash(ScoreStage stage, const std::string& issue_text,
                         const std::string& candidate_text);

// Splits "<think>...</think>rest" reasoning markup. Without the marker the
// whole text is the answer and think is empty.
std::pair<std::string, std::string> split_think_answer(const std::string& text);

} // namespace ttc::providers
