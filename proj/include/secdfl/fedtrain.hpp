#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "secdfl/aggregate.hpp"
#include "secdfl/rng.hpp"

namespace secdfl {

// Desk-scale federated learning loop. Peers hold disjoint data shards and
// train a shared model by alternating local SGD with parameter aggregation:
// secure ADMM averaging, an exact-mean baseline, or no communication at all.

enum class ModelKind { LinearRegression, LogisticRegression, TwoLayerPerceptron };

struct ModelSpec {
  ModelKind kind = ModelKind::LogisticRegression;
  int input_dim = 0;
  int classes = 1;  // regression ignores this
  int hidden = 16;  // perceptron only
};

std::int64_t param_count(const ModelSpec& spec);
Vec init_params(const ModelSpec& spec, Rng& rng);  // gaussian, scale 0.1

struct LocalDataset {
  Mat x_train;  // rows = samples
  Vec y_train;  // class index (classification) or real target (regression)
  Mat x_test;
  Vec y_test;
};

double model_loss(const ModelSpec& spec, const Vec& params, const Mat& x,
                  const Vec& y);
Vec model_gradient(const ModelSpec& spec, const Vec& params, const Mat& x,
                   const Vec& y);
// classification: fraction of argmax hits; regression: negative MSE so that
// "higher is better" holds for both
double model_accuracy(const ModelSpec& spec, const Vec& params, const Mat& x,
                      const Vec& y);

enum class Aggregation { SecureAgg, CentralMean, None };

struct FLConfig {
  int rounds = 50;
  int local_epochs = 1;
  int batch_size = 32;
  double learning_rate = 0.1;
  int n = 9;
  Aggregation aggregation = Aggregation::SecureAgg;
  AdmmConfig admm;  // used when aggregation == SecureAgg
  ModelSpec model;
  std::uint64_t seed = 0;
};

// E epochs of seeded mini-batch SGD; the caller owns the shuffle stream so
// consecutive rounds continue one deterministic sequence.
Vec local_update(const Vec& params, const LocalDataset& data,
                 const ModelSpec& spec, const FLConfig& cfg, Rng& batch_rng);

enum class TrainMode { SecureDFL, FedAvg, LocalOnly };

struct RoundMetrics {
  int round = 0;  // 0 is the pre-training state after initial agreement
  double global_accuracy = 0.0;
  double global_loss = 0.0;
  std::vector<double> peer_accuracy;
  std::vector<double> peer_loss;
  // aggregation accounting; -1 where not applicable
  int admm_iterations = -1;
  int gap = -1;
  double aggregation_residual = 0.0;
};

struct TrainingReport {
  TrainMode mode = TrainMode::SecureDFL;
  std::vector<RoundMetrics> rounds;
  double final_accuracy = 0.0;
  double final_loss = 0.0;
  Vec final_params;  // peer 0's for LocalOnly
};

TrainingReport train(TrainMode mode, const FLConfig& cfg,
                     const std::vector<LocalDataset>& data);

// Gaussian-mixture classification shards. heterogeneity in [0, 1] skews each
// peer's class mix toward a dominant class (peer k -> class k mod K); 0 gives
// identical proportions, 1 gives single-class shards.
std::vector<LocalDataset> make_synthetic(int n_peers, int samples_per_peer,
                                         int dim, double heterogeneity,
                                         std::uint64_t seed, int classes = 3,
                                         double separation = 4.0);

// CSV with a header row, numeric feature columns, integer label in the last
// column; rows are dealt round-robin to peers after a seeded shuffle.
std::vector<LocalDataset> load_csv_datasets(const std::string& path,
                                            int n_peers, std::uint64_t seed,
                                            double test_fraction = 0.25);

nlohmann::json report_to_json(const TrainingReport& report);

}  // namespace secdfl
