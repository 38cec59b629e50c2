#include "ttc/reward.hpp"
#include "ttc/datasynth.hpp"
#include "ttc/errors.hpp"
#include "ttc/util/strings.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

using nlohmann::json;

namespace ttc::reward {

namespace {

double clamp_probability(double p) {
    return std::min(1.0 - kProbabilityFloor, std::max(kProbabilityFloor, p));
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

// -ln sigma(z), computed without overflow on either tail.
double softplus_neg(double z) {
    if (z > 0) return std::log1p(std::exp(-z));
    return -z + std::log1p(std::exp(z));
}

} // namespace

double bce_loss(const std::vector<double>& probabilities, const std::vector<int>& labels) {
    if (probabilities.size() != labels.size())
        throw ContractError("bce_loss: probability/label length mismatch");
    if (probabilities.empty()) throw ContractError("bce_loss: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw ContractError("bce_loss: labels must be 0 or 1");
        double p = clamp_probability(probabilities[i]);
        total -= labels[i] * std::log(p) + (1 - labels[i]) * std::log(1.0 - p);
    }
    return total;
}

double dpo_loss(double logp_policy_w, double logp_ref_w, double logp_policy_l,
                double logp_ref_l, double beta) {
    if (!(beta > 0)) throw ContractError("dpo_loss: beta must be > 0");
    for (double v : {logp_policy_w, logp_ref_w, logp_policy_l, logp_ref_l})
        if (!std::isfinite(v)) throw ContractError("dpo_loss: inputs must be finite");
    double margin = (logp_policy_w - logp_ref_w) - (logp_policy_l - logp_ref_l);
    return softplus_neg(beta * margin);
}

std::vector<double> overlap_features(const std::string& issue_text,
                                     const std::string& candidate_text) {
    auto tokenize = [](const std::string& text) {
        std::set<std::string> tokens;
        std::string current;
        for (char c : text + " ") {
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '/' ||
                c == '.') {
                current += c;
            } else if (!current.empty()) {
                tokens.insert(util::lowercase(current));
                current.clear();
            }
        }
        return tokens;
    };
    auto issue_tokens = tokenize(issue_text);
    auto cand_tokens = tokenize(candidate_text);

    double overlap = 0.0, path_overlap = 0.0;
    for (const auto& tok : cand_tokens) {
        if (issue_tokens.count(tok)) {
            overlap += 1.0;
            if (tok.find('/') != std::string::npos || tok.find('.') != std::string::npos)
                path_overlap += 1.0;
        }
    }
    double size = static_cast<double>(util::whitespace_token_count(candidate_text));
    return {overlap, path_overlap, std::log1p(size),
            cand_tokens.empty() ? 0.0 : overlap / static_cast<double>(cand_tokens.size())};
}

double ToyScorer::raw_score(const std::string& issue_text,
                            const std::string& candidate_text) const {
    std::vector<double> features = extractor(issue_text, candidate_text);
    if (features.size() != weights.size())
        throw ContractError("scorer weight width " + std::to_string(weights.size()) +
                            " != feature width " + std::to_string(features.size()));
    double z = bias;
    for (std::size_t i = 0; i < features.size(); ++i) z += weights[i] * features[i];
    if (!std::isfinite(z)) throw ContractError("scorer produced a non-finite output");
    return z;
}

double ToyScorer::probability(const std::string& issue_text,
                              const std::string& candidate_text) const {
    return sigmoid(raw_score(issue_text, candidate_text));
}

ToyScorer make_toy_scorer(std::size_t feature_width, const std::string& extractor_name) {
    ToyScorer scorer;
    scorer.weights.assign(feature_width, 0.0);
    scorer.feature_extractor_name = extractor_name;
    scorer.extractor = overlap_features;
    return scorer;
}

std::string scorer_to_json(const ToyScorer& scorer) {
    json j = {{"feature_extractor_name", scorer.feature_extractor_name},
              {"weights", scorer.weights},
              {"bias", scorer.bias}};
    return j.dump();
}

ToyScorer scorer_from_json(const std::string& text) {
    json j = json::parse(text);
    ToyScorer scorer;
    scorer.feature_extractor_name = j.value("feature_extractor_name", "overlap");
    scorer.weights = j.value("weights", std::vector<double>{});
    scorer.bias = j.value("bias", 0.0);
    scorer.extractor = overlap_features;
    return scorer;
}

LossGradient prm_loss_gradient(const ToyScorer& scorer,
                               const std::vector<PrmExample>& examples) {
    if (examples.empty()) throw ContractError("prm_loss_gradient: empty dataset");
    LossGradient out;
    out.grad_weights.assign(scorer.weights.size(), 0.0);
    const double n = static_cast<double>(examples.size());
    for (const auto& ex : examples) {
        std::vector<double> features = scorer.extractor(ex.issue_text, ex.candidate_text);
        double z = scorer.bias;
        for (std::size_t i = 0; i < features.size(); ++i) z += scorer.weights[i] * features[i];
        double p = sigmoid(z);
        out.loss += bce_loss({p}, {ex.label});
        double delta = (p - ex.label) / n; // d(mean BCE)/dz
        for (std::size_t i = 0; i < features.size(); ++i)
            out.grad_weights[i] += delta * features[i];
        out.grad_bias += delta;
    }
    out.loss /= n;
    return out;
}

LossGradient orm_loss_gradient(const ToyScorer& policy, const ToyScorer& reference,
                               const std::vector<PreferencePair>& pairs, double beta) {
    if (pairs.empty()) throw ContractError("orm_loss_gradient: empty dataset");
    if (!(beta > 0)) throw ContractError("orm_loss_gradient: beta must be > 0");
    LossGradient out;
    out.grad_weights.assign(policy.weights.size(), 0.0);
    const double n = static_cast<double>(pairs.size());
    for (const auto& pair : pairs) {
        double pw = policy.raw_score(pair.issue_text, pair.winner);
        double pl = policy.raw_score(pair.issue_text, pair.loser);
        double rw = reference.raw_score(pair.issue_text, pair.winner);
        double rl = reference.raw_score(pair.issue_text, pair.loser);
        out.loss += dpo_loss(pw, rw, pl, rl, beta);

        // d/dz of -ln sigma(z) is -sigma(-z); z = beta*((pw-rw)-(pl-rl)).
        double z = beta * ((pw - rw) - (pl - rl));
        double dz = -sigmoid(-z) / n;
        std::vector<double> fw = policy.extractor(pair.issue_text, pair.winner);
        std::vector<double> fl = policy.extractor(pair.issue_text, pair.loser);
        for (std::size_t i = 0; i < fw.size(); ++i)
            out.grad_weights[i] += dz * beta * (fw[i] - fl[i]);
        // winner/loser bias contributions cancel exactly
    }
    out.loss /= n;
    return out;
}

ToyScorer train_toy_prm(const std::vector<PrmExample>& examples, std::size_t epochs,
                        double learning_rate) {
    if (examples.empty()) throw ContractError("train_toy_prm: empty dataset");
    bool has_positive = false, has_negative = false;
    for (const auto& ex : examples) (ex.label ? has_positive : has_negative) = true;
    if (!has_positive || !has_negative)
        throw ContractError("train_toy_prm: need both labels present, got single-class data");

    ToyScorer scorer = make_toy_scorer(kOverlapFeatureWidth);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        LossGradient g = prm_loss_gradient(scorer, examples);
        for (std::size_t i = 0; i < scorer.weights.size(); ++i)
            scorer.weights[i] -= learning_rate * g.grad_weights[i];
        scorer.bias -= learning_rate * g.grad_bias;
    }
    return scorer;
}

ToyScorer train_toy_orm(const std::vector<PreferencePair>& pairs, const ToyScorer& reference,
                        double beta, std::size_t epochs, double learning_rate) {
    if (pairs.empty()) throw ContractError("train_toy_orm: empty dataset");
    if (!(beta > 0)) throw ContractError("train_toy_orm: beta must be > 0");
    ToyScorer policy = reference; // start at the reference policy
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        LossGradient g = orm_loss_gradient(policy, reference, pairs, beta);
        for (std::size_t i = 0; i < policy.weights.size(); ++i)
            policy.weights[i] -= learning_rate * g.grad_weights[i];
        policy.bias -= learning_rate * g.grad_bias;
    }
    return policy;
}

// ---------------------------------------------------------------------------
// Dataset adapters
// ---------------------------------------------------------------------------

GoldenInfo golden_info_from_patch(const patchops::Patch& golden) {
    GoldenInfo info;
    info.files = golden.touched_files;
    for (const auto& file : golden.files) {
        for (const auto& hunk : file.hunks) {
            // Old-file line span of the changed (non-context) lines.
            std::size_t line = hunk.old_start;
            std::size_t first_changed = 0, last_changed = 0;
            for (const auto& hl : hunk.lines) {
                if (hl.tag != ' ') {
                    std::size_t at = hl.tag == '-' ? line : (line > 0 ? line : 1);
                    if (first_changed == 0) first_changed = at;
                    last_changed = std::max(last_changed, at);
                }
                if (hl.tag != '+') ++line;
            }
            if (first_changed == 0) { // pure insertion hunks anchor at old_start
                first_changed = hunk.old_start;
                last_changed = hunk.old_start;
            }
            pipeline::FaultLocation loc;
            loc.path = file.path();
            // GNU-style section text often carries the enclosing declaration.
            loc.function = hunk.section;
            loc.line_start = first_changed;
            loc.line_end = last_changed;
            info.locations.push_back(std::move(loc));
        }
    }
    return info;
}

PrmDataset build_prm_dataset(const std::vector<pipeline::Trajectory>& trajectories,
                             const GoldenInfo& golden) {
    PrmDataset dataset;
    for (const auto& trajectory : trajectories) {
        const pipeline::TrajectoryStep* ru_step = nullptr;
        const pipeline::TrajectoryStep* fl_step = nullptr;
        for (const auto& step : trajectory.steps) {
            if (step.action.type == pipeline::ActionType::identify_files && !ru_step)
                ru_step = &step;
            if (step.action.type == pipeline::ActionType::localize_faults && !fl_step)
                fl_step = &step;
        }
        std::string issue_text = pipeline::render_issue(trajectory.issue);
        if (ru_step) {
            PrmExample ex;
            ex.stage = providers::ScoreStage::repo_understanding;
            ex.issue_text = issue_text;
            ex.candidate_text = ru_step->answer;
            std::set<std::string> identified(ru_step->action.files.begin(),
                                             ru_step->action.files.end());
            ex.label = datasynth::check_repo_understanding(identified, golden.files) ? 1 : 0;
            dataset.examples.push_back(std::move(ex));
        } else {
            ++dataset.skipped_stages;
        }
        if (fl_step) {
            PrmExample ex;
            ex.stage = providers::ScoreStage::fault_localization;
            ex.issue_text = issue_text;
            ex.candidate_text = fl_step->answer;
            ex.label = datasynth::check_fault_localization(fl_step->action.locations,
                                                           golden.locations)
                           ? 1
                           : 0;
            dataset.examples.push_back(std::move(ex));
        } else {
            ++dataset.skipped_stages;
        }
    }
    return dataset;
}

std::vector<PreferencePair> build_orm_dataset(
    const std::vector<std::pair<patchops::Patch, verify::VerificationReport>>& candidates,
    const std::string& issue_text) {
    std::vector<const patchops::Patch*> winners, losers;
    for (const auto& [patch, report] : candidates)
        (report.fully_verified() ? winners : losers).push_back(&patch);
    if (winners.empty() || losers.empty()) return {};

    std::vector<PreferencePair> pairs;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto* w : winners) {
        std::string fw = patchops::normalize(*w).fingerprint;
        for (const auto* l : losers) {
            std::string fl = patchops::normalize(*l).fingerprint;
            if (fw == fl) continue; // winner must differ from loser
            if (!seen.insert({fw, fl}).second) continue;
            pairs.push_back({issue_text, w->raw, l->raw});
        }
    }
    return pairs;
}

std::string prm_dataset_to_jsonl(const std::vector<PrmExample>& examples) {
    std::string out;
    for (const auto& ex : examples) {
        json j = {{"stage", providers::score_stage_name(ex.stage)},
                  {"issue", ex.issue_text},
                  {"candidate", ex.candidate_text},
                  {"label", ex.label}};
        out += j.dump();
        out += "\n";
    }
    return out;
}

std::string orm_dataset_to_jsonl(const std::vector<PreferencePair>& pairs) {
    std::string out;
    for (const auto& pair : pairs) {
        json j = {{"issue", pair.issue_text}, {"winner", pair.winner}, {"loser", pair.loser}};
        out += j.dump();
        out += "\n";
    }
    return out;
}

} // namespace ttc::reward
