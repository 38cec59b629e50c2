#pragma once
#include "ttc/patchops.hpp"
#include "ttc/pipeline.hpp"
#include "ttc/verify.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ttc::reward {

inline constexpr double kDefaultDpoBeta = 0.5;
inline constexpr double kProbabilityFloor = 1e-12;

// -sum[y ln p + (1-y) ln(1-p)]; probabilities are clamped to
// [kProbabilityFloor, 1-kProbabilityFloor] at the boundary.
double bce_loss(const std::vector<double>& probabilities, const std::vector<int>& labels);

// -ln sigma(beta * ((logp_policy_w - logp_ref_w) - (logp_policy_l - logp_ref_l)))
double dpo_loss(double logp_policy_w, double logp_ref_w, double logp_policy_l,
                double logp_ref_l, double beta = kDefaultDpoBeta);

// ---------------------------------------------------------------------------
// Desk-scale trainable scorers
// ---------------------------------------------------------------------------

using FeatureExtractor =
    std::function<std::vector<double>(const std::string& issue_text,
                                      const std::string& candidate_text)>;

// Bag-of-overlap features: token overlap counts, path overlap, size signals.
std::vector<double> overlap_features(const std::string& issue_text,
                                     const std::string& candidate_text);
inline constexpr std::size_t kOverlapFeatureWidth = 4;

struct ToyScorer {
    std::vector<double> weights;
    double bias = 0.0;
    std::string feature_extractor_name = "overlap";
    FeatureExtractor extractor = overlap_features;

    double raw_score(const std::string& issue_text, const std::string& candidate_text) const;
    // Sigmoid of the raw score: the PRM-style correctness probability.
    double probability(const std::string& issue_text, const std::string& candidate_text) const;
};

ToyScorer make_toy_scorer(std::size_t feature_width, const std::string& extractor_name = "overlap");

std::string scorer_to_json(const ToyScorer& scorer);
ToyScorer scorer_from_json(const std::string& text);

struct PrmExample {
    providers::ScoreStage stage = providers::ScoreStage::repo_understanding;
    std::string issue_text;
    std::string candidate_text;
    int label = 0; // 1 correct, 0 incorrect
};

struct PreferencePair {
    std::string issue_text;
    std::string winner; // patch text that passed all verification
    std::string loser;  // patch text that failed some check
};

// Mean BCE over the example set plus its analytic gradient in scorer
// parameters. The gradient pairs with finite differences in tests.
struct LossGradient {
    double loss = 0.0;
    std::vector<double> grad_weights;
    double grad_bias = 0.0;
};

LossGradient prm_loss_gradient(const ToyScorer& scorer, const std::vector<PrmExample>& examples);
LossGradient orm_loss_gradient(const ToyScorer& policy, const ToyScorer& reference,
                               const std::vector<PreferencePair>& pairs, double beta);

// Logistic regression on the example features. Refuses single-class data.
ToyScorer train_toy_prm(const std::vector<PrmExample>& examples, std::size_t epochs,
                        double learning_rate);

// DPO fit of the policy scorer against a frozen reference.
ToyScorer train_toy_orm(const std::vector<PreferencePair>& pairs, const ToyScorer& reference,
                        double beta, std::size_t epochs, double learning_rate);

// ---------------------------------------------------------------------------
// Dataset adapters
// ---------------------------------------------------------------------------

struct GoldenInfo {
    std::set<std::string> files;
    std::vector<pipeline::FaultLocation> locations;
};

GoldenInfo golden_info_from_patch(const patchops::Patch& golden);

// One PRM example per repo_understanding / fault_localization step found in
// each trajectory; missing stages are skipped and counted.
struct PrmDataset {
    std::vector<PrmExample> examples;
    std::size_t skipped_stages = 0;
};

PrmDataset build_prm_dataset(const std::vector<pipeline::Trajectory>& trajectories,
                             const GoldenInfo& golden);

// Cartesian product of fully verified x failing candidates, deduplicated by
// normalized fingerprints. Consumes only (issue_text, patch text).
std::vector<PreferencePair> build_orm_dataset(
    const std::vector<std::pair<patchops::Patch, verify::VerificationReport>>& candidates,
    const std::string& issue_text);

std::string prm_dataset_to_jsonl(const std::vector<PrmExample>& examples);
std::string orm_dataset_to_jsonl(const std::vector<PreferencePair>& pairs);

} // namespace ttc::reward
