#include "ttc/providers.hpp"
#include "ttc/errors.hpp"
#include "ttc/util/fs.hpp"
#include "ttc/util/strings.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <mutex>
#include <thread>

// httplib is pulled in only by the remote provider below.
#include <httplib.h>

using nlohmann::json;

namespace ttc::providers {

const char* role_name(Role r) {
    switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "unknown";
}

void check_history(const std::vector<ChatTurn>& history) {
    if (history.empty()) throw ContractError("chat history is empty");
    std::size_t i = 0;
    if (history[0].role == Role::system) i = 1;
    Role expected = Role::user;
    for (; i < history.size(); ++i) {
        if (history[i].content.empty())
            throw ContractError("chat turn " + std::to_string(i) + " has empty content");
        if (history[i].role == Role::system)
            throw ContractError("system turn only allowed at position 0");
        if (history[i].role != expected)
            throw ContractError("chat roles must alternate user/assistant (turn " +
                                std::to_string(i) + ")");
        expected = expected == Role::user ? Role::assistant : Role::user;
    }
}

void ProviderConfig::validate() const {
    if (endpoint.empty() == mock_scenario.empty())
        throw ConfigError("exactly one of endpoint / mock_scenario must be set");
    if (temperature < 0) throw ConfigError("temperature must be >= 0");
    if (max_reply_tokens <= 0) throw ConfigError("max_reply_tokens must be positive");
}

std::string history_hash(const std::vector<ChatTurn>& history) {
    std::vector<std::string> fields;
    fields.reserve(history.size() * 2);
    for (const auto& turn : history) {
        fields.emplace_back(role_name(turn.role));
        fields.push_back(turn.content);
    }
    return util::to_hex(util::fnv1a_fields(fields));
}

std::string scoring_hash(ScoreStage stage, const std::string& issue_text,
                         const std::string& candidate_text) {
    return util::to_hex(util::fnv1a_fields(
        {"score", score_stage_name(stage), issue_text, candidate_text}));
}

const char* score_stage_name(ScoreStage s) {
    switch (s) {
    case ScoreStage::repo_understanding: return "repo_understanding";
    case ScoreStage::fault_localization: return "fault_localization";
    case ScoreStage::final_patch: return "final_patch";
    }
    return "unknown";
}

std::pair<std::string, std::string> split_think_answer(const std::string& text) {
    static const std::string open = "<think>";
    static const std::string close = "</think>";
    std::size_t begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos || text.compare(begin, open.size(), open) != 0)
        return {"", text};
    std::size_t end = text.find(close, begin + open.size());
    if (end == std::string::npos) return {"", text};
    std::string think = text.substr(begin + open.size(), end - begin - open.size());
    std::string answer = text.substr(end + close.size());
    // Drop a single separating newline so answers keep their own layout.
    if (!answer.empty() && answer.front() == '\n') answer.erase(answer.begin());
    return {util::trim(think), answer};
}

namespace {

std::size_t count_reply_tokens(const ModelReply& reply) {
    std::size_t n = util::whitespace_token_count(reply.think) +
                    util::whitespace_token_count(reply.answer);
    return n > 0 ? n : (reply.answer.empty() ? 0 : 1);
}

// ---------------------------------------------------------------------------
// Mock provider: scripted JSONL scenario, one object per line:
//   {"match": {"call_index": 0, "history_hash": "..."},
//    "reply": {"think": "...", "answer": "..."}, "score": 0.5}
//
// Matching, first entry in file order wins:
//   - history_hash set        -> must equal the hash of the request
//   - call_index + hash set   -> call_index counts occurrences of that hash
//   - call_index alone        -> compared against the global call counter
//   - empty match             -> wildcard
// In replay mode no counter advances, so a repeated request replays the
// same entry.
// ---------------------------------------------------------------------------

struct ScenarioEntry {
    std::optional<std::int64_t> call_index;
    std::optional<std::string> hash;
    bool has_reply = false;
    ModelReply reply;
    std::optional<double> score;
};

class MockProvider final : public Provider {
public:
    explicit MockProvider(const ProviderConfig& config) : config_(config) {
        std::string text = util::read_file(config.mock_scenario);
        int line_no = 0;
        for (const auto& line : util::split_lines(text)) {
            ++line_no;
            if (util::trim(line).empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw ConfigError("scenario " + config.mock_scenario + " line " +
                                  std::to_string(line_no) + ": " + e.what());
            }
            ScenarioEntry entry;
            if (j.contains("match")) {
                const auto& m = j["match"];
                if (m.contains("call_index")) entry.call_index = m["call_index"].get<std::int64_t>();
                if (m.contains("history_hash")) entry.hash = m["history_hash"].get<std::string>();
            }
            if (j.contains("reply")) {
                entry.has_reply = true;
                const auto& r = j["reply"];
                if (r.contains("think")) entry.reply.think = r["think"].get<std::string>();
                entry.reply.answer = r.value("answer", std::string{});
                if (entry.reply.think.empty()) {
                    auto [think, answer] = split_think_answer(entry.reply.answer);
                    entry.reply.think = think;
                    entry.reply.answer = answer;
                }
            }
            if (j.contains("score")) entry.score = j["score"].get<double>();
            entries_.push_back(std::move(entry));
        }
    }

    ModelReply complete(const std::vector<ChatTurn>& history) override {
        check_history(history);
        std::string h = history_hash(history);
        std::lock_guard<std::mutex> lock(mutex_);
        std::int64_t global = call_count_;
        std::int64_t per_hash = hash_counts_[h];
        for (const auto& entry : entries_) {
            if (!entry.has_reply) continue;
            if (!matches(entry, h, global, per_hash)) continue;
            if (!config_.replay) {
                ++call_count_;
                ++hash_counts_[h];
            }
            ModelReply reply = entry.reply;
            reply.output_token_count = count_reply_tokens(reply);
            return reply;
        }
        throw ConfigError("mock scenario exhausted: no entry for call " +
                          std::to_string(global) + " hash " + h);
    }

    double score(ScoreStage stage, const std::string& issue_text,
                 const std::string& candidate_text) override {
        if (candidate_text.empty()) throw ContractError("candidate_text is empty");
        std::string h = scoring_hash(stage, issue_text, candidate_text);
        std::lock_guard<std::mutex> lock(mutex_);
        for (const auto& entry : entries_) {
            if (!entry.score) continue;
            if (entry.hash && *entry.hash != h) continue;
            if (entry.call_index && !entry.hash) continue; // call-indexed entries are replies
            double s = *entry.score;
            if (!(s >= 0.0 && s <= 1.0))
                throw ProtocolError("mock score out of [0,1]: " + std::to_string(s));
            return s;
        }
        throw ConfigError("mock scenario has no score entry for hash " + h);
    }

private:
    static bool matches(const ScenarioEntry& entry, const std::string& h,
                        std::int64_t global, std::int64_t per_hash) {
        if (entry.hash) {
            if (*entry.hash != h) return false;
            return !entry.call_index || *entry.call_index == per_hash;
        }
        if (entry.call_index) return *entry.call_index == global;
        return true; // wildcard
    }

    ProviderConfig config_;
    std::vector<ScenarioEntry> entries_;
    std::mutex mutex_;
    std::int64_t call_count_ = 0;
    std::map<std::string, std::int64_t> hash_counts_;
};

// ---------------------------------------------------------------------------
// Remote provider: POST {messages, temperature, max_tokens} ->
// {think?, answer, usage?{output_tokens}}, and POST {stage, issue, candidate}
// -> {score} against <endpoint>/score.
// ---------------------------------------------------------------------------

struct ParsedEndpoint {
    std::string base;  // scheme://host:port
    std::string path;  // leading path, default /
};

ParsedEndpoint parse_endpoint(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("endpoint must start with http:// or https://: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

class RemoteProvider final : public Provider {
public:
    explicit RemoteProvider(const ProviderConfig& config)
        : config_(config), endpoint_(parse_endpoint(config.endpoint)) {}

    ModelReply complete(const std::vector<ChatTurn>& history) override {
        check_history(history);
        json body;
        body["messages"] = json::array();
        for (const auto& turn : history)
            body["messages"].push_back({{"role", role_name(turn.role)},
                                        {"content", turn.content}});
        body["temperature"] = config_.temperature;
        body["max_tokens"] = config_.max_reply_tokens;

        json resp = post_json(endpoint_.path, body);
        if (!resp.contains("answer") || !resp["answer"].is_string())
            throw ProtocolError("completion response missing string 'answer'");

        ModelReply reply;
        reply.answer = resp["answer"].get<std::string>();
        if (resp.contains("think") && resp["think"].is_string()) {
            reply.think = resp["think"].get<std::string>();
        } else {
            auto [think, answer] = split_think_answer(reply.answer);
            reply.think = think;
            reply.answer = answer;
        }
        if (reply.answer.empty()) throw ProtocolError("completion returned empty answer");
        if (resp.contains("usage") && resp["usage"].contains("output_tokens"))
            reply.output_token_count = resp["usage"]["output_tokens"].get<std::size_t>();
        else
            reply.output_token_count = count_reply_tokens(reply);
        if (reply.output_token_count == 0) reply.output_token_count = 1;
        return reply;
    }

    double score(ScoreStage stage, const std::string& issue_text,
                 const std::string& candidate_text) override {
        if (candidate_text.empty()) throw ContractError("candidate_text is empty");
        json body = {{"stage", score_stage_name(stage)},
                     {"issue", issue_text},
                     {"candidate", candidate_text}};
        std::string path = endpoint_.path;
        if (path.back() == '/') path.pop_back();
        json resp = post_json(path + "/score", body);
        if (!resp.contains("score") || !resp["score"].is_number())
            throw ProtocolError("scoring response missing numeric 'score'");
        double s = resp["score"].get<double>();
        if (std::isnan(s) || s < 0.0 || s > 1.0)
            throw ProtocolError("score outside [0,1]: " + std::to_string(s));
        return s;
    }

private:
    json post_json(const std::string& path, const json& body) {
        std::string payload = body.dump();
        std::string last_error;
        for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
            if (attempt > 0) {
                auto backoff = config_.retry_backoff * (1 << (attempt - 1));
                std::this_thread::sleep_for(backoff);
            }
            httplib::Client client(endpoint_.base);
            client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(
                config_.request_timeout));
            client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(
                config_.request_timeout));
            httplib::Headers headers;
            if (!config_.bearer_token.empty())
                headers.emplace("Authorization", "Bearer " + config_.bearer_token);

            auto res = client.Post(path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue; // retryable
            }
            if (res->status >= 500) {
                last_error = "server error " + std::to_string(res->status);
                continue; // retryable
            }
            if (res->status != 200)
                throw ProtocolError("endpoint returned status " + std::to_string(res->status));
            try {
                return json::parse(res->body);
            } catch (const json::exception& e) {
                throw ProtocolError("response is not JSON: " + std::string(e.what()));
            }
        }
        throw TransportError(last_error + " (after " + std::to_string(kMaxRetries) +
                             " retries)");
    }

    static constexpr int kMaxRetries = 3;

    ProviderConfig config_;
    ParsedEndpoint endpoint_;
};

} // namespace

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
    config.validate();
    if (!config.mock_scenario.empty())
        return std::make_shared<MockProvider>(config);
    return std::make_shared<RemoteProvider>(config);
}

ModelReply complete(Provider& provider, const std::vector<ChatTurn>& history) {
    return provider.complete(history);
}

double score_remote(Provider& provider, ScoreStage stage,
                    const std::string& issue_text, const std::string& candidate_text) {
    return provider.score(stage, issue_text, candidate_text);
}

} // namespace ttc::providers
