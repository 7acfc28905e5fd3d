#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "secdfl/fedtrain.hpp"

using namespace secdfl;

namespace {

Vec fd_gradient(const ModelSpec& spec, const Vec& params, const Mat& x,
                const Vec& y) {
  const double h = 1e-5;
  Vec g(params.size());
  Vec p = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    p[i] = params[i] + h;
    const double up = model_loss(spec, p, x, y);
    p[i] = params[i] - h;
    const double down = model_loss(spec, p, x, y);
    p[i] = params[i];
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

void check_gradients(const ModelSpec& spec, int points, std::uint64_t seed) {
  Rng rng(seed);
  const int m = 12;
  Mat x(m, spec.input_dim);
  for (int i = 0; i < x.size(); ++i)
    x(i / spec.input_dim, i % spec.input_dim) = rng.gaussian();
  Vec y(m);
  for (int i = 0; i < m; ++i)
    y[i] = spec.kind == ModelKind::LinearRegression
               ? rng.gaussian()
               : rng.uniform_int(0, spec.classes - 1);
  for (int pt = 0; pt < points; ++pt) {
    Vec params(param_count(spec));
    for (Eigen::Index i = 0; i < params.size(); ++i)
      params[i] = 0.5 * rng.gaussian();
    Vec analytic = model_gradient(spec, params, x, y);
    Vec numeric = fd_gradient(spec, params, x, y);
    const double rel =
        (analytic - numeric).norm() / std::max(1e-8, numeric.norm());
    CHECK(rel < 1e-4);
  }
}

FLConfig base_cfg(const ModelSpec& spec) {
  FLConfig cfg;
  cfg.model = spec;
  cfg.rounds = 5;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.1;
  cfg.seed = 1234;
  return cfg;
}

ModelSpec logreg_spec(int dim, int classes) {
  ModelSpec spec;
  spec.kind = ModelKind::LogisticRegression;
  spec.input_dim = dim;
  spec.classes = classes;
  return spec;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences") {
  ModelSpec linreg;
  linreg.kind = ModelKind::LinearRegression;
  linreg.input_dim = 7;
  check_gradients(linreg, 10, 100);

  check_gradients(logreg_spec(5, 3), 10, 101);

  ModelSpec mlp;
  mlp.kind = ModelKind::TwoLayerPerceptron;
  mlp.input_dim = 4;
  mlp.classes = 3;
  mlp.hidden = 6;
  check_gradients(mlp, 10, 102);
}

TEST_CASE("param_count covers bias terms") {
  ModelSpec linreg;
  linreg.kind = ModelKind::LinearRegression;
  linreg.input_dim = 7;
  CHECK(param_count(linreg) == 8);
  CHECK(param_count(logreg_spec(5, 3)) == 18);
  ModelSpec mlp;
  mlp.kind = ModelKind::TwoLayerPerceptron;
  mlp.input_dim = 4;
  mlp.classes = 3;
  mlp.hidden = 6;
  CHECK(param_count(mlp) == 6 * 5 + 3 * 7);
}

TEST_CASE("a zero learning rate leaves parameters unchanged") {
  std::vector<LocalDataset> data = make_synthetic(1, 40, 4, 0.5, 7);
  ModelSpec spec = logreg_spec(4, 3);
  FLConfig cfg = base_cfg(spec);
  cfg.learning_rate = 0.0;
  Rng init(1);
  Vec params = init_params(spec, init);
  Rng batch(2);
  Vec after = local_update(params, data[0], spec, cfg, batch);
  CHECK((after - params).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("local updates are deterministic given the stream state") {
  std::vector<LocalDataset> data = make_synthetic(1, 60, 5, 0.3, 8);
  ModelSpec spec = logreg_spec(5, 3);
  FLConfig cfg = base_cfg(spec);
  Rng init(3);
  Vec params = init_params(spec, init);
  Rng ba(99), bb(99);
  Vec a = local_update(params, data[0], spec, cfg, ba);
  Vec b = local_update(params, data[0], spec, cfg, bb);
  CHECK((a - b).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("linear regression loss decreases over the first epoch") {
  // realizable targets: y = <x, c> with small gaussian x
  Rng rng(11);
  const int m = 64, dim = 6;
  Mat x(m, dim);
  for (int i = 0; i < x.size(); ++i) x(i / dim, i % dim) = rng.gaussian();
  Vec coef(dim);
  for (int d = 0; d < dim; ++d) coef[d] = rng.gaussian();
  LocalDataset data;
  data.x_train = x;
  data.y_train = x * coef;
  data.x_test = x.topRows(8);
  data.y_test = data.y_train.head(8);

  ModelSpec spec;
  spec.kind = ModelKind::LinearRegression;
  spec.input_dim = dim;
  FLConfig cfg = base_cfg(spec);
  cfg.learning_rate = 0.05;
  cfg.local_epochs = 1;

  Rng init(4);
  Vec params = init_params(spec, init);
  const double before = model_loss(spec, params, data.x_train, data.y_train);
  Rng batch(5);
  Vec after = local_update(params, data, spec, cfg, batch);
  const double after_loss = model_loss(spec, after, data.x_train, data.y_train);
  CHECK(after_loss < before);
}

TEST_CASE("local_update rejects bad batches and divergence") {
  std::vector<LocalDataset> data = make_synthetic(1, 20, 3, 0.0, 9);
  ModelSpec spec = logreg_spec(3, 2);
  FLConfig cfg = base_cfg(spec);
  Rng init(6);
  Vec params = init_params(spec, init);
  Rng batch(7);
  cfg.batch_size = 1000;  // larger than the shard
  CHECK_THROWS_AS(local_update(params, data[0], spec, cfg, batch), Error);

  ModelSpec lin;
  lin.kind = ModelKind::LinearRegression;
  lin.input_dim = 3;
  LocalDataset steep;
  steep.x_train = Mat::Constant(8, 3, 50.0);
  steep.y_train = Vec::Constant(8, -1000.0);
  steep.x_test = steep.x_train;
  steep.y_test = steep.y_train;
  FLConfig diverge = base_cfg(lin);
  diverge.batch_size = 8;
  diverge.learning_rate = 1e6;
  diverge.local_epochs = 50;
  Vec p0 = Vec::Zero(param_count(lin));
  Rng batch2(8);
  CHECK_THROWS_AS(local_update(p0, steep, lin, diverge, batch2), Error);
}

TEST_CASE("one-peer federated averaging is plain SGD") {
  std::vector<LocalDataset> data = make_synthetic(1, 80, 5, 0.0, 12);
  ModelSpec spec = logreg_spec(5, 3);
  FLConfig cfg = base_cfg(spec);
  cfg.n = 1;
  cfg.rounds = 4;
  cfg.aggregation = Aggregation::CentralMean;

  TrainingReport report = train(TrainMode::FedAvg, cfg, data);

  Rng init(derive_seed(cfg.seed, "init", 0));
  Vec w = init_params(spec, init);
  Rng batch(derive_seed(cfg.seed, "batch", 0));
  for (int r = 0; r < cfg.rounds; ++r)
    w = local_update(w, data[0], spec, cfg, batch);
  CHECK((report.final_params - w).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("secure aggregation with many iterations converges to fedavg") {
  std::vector<LocalDataset> data = make_synthetic(9, 48, 6, 0.6, 13);
  ModelSpec spec = logreg_spec(6, 3);
  FLConfig cfg = base_cfg(spec);
  cfg.n = 9;
  cfg.rounds = 4;

  FLConfig fed = cfg;
  fed.aggregation = Aggregation::CentralMean;
  TrainingReport fedavg = train(TrainMode::FedAvg, fed, data);

  FLConfig sec = cfg;
  sec.aggregation = Aggregation::SecureAgg;
  sec.admm.rho = 1.0;
  sec.admm.iterations = 30;
  sec.admm.mode = AggMode::Grouped;
  sec.admm.schedule = generate_schedule(9, 3, 42);
  sec.admm.unsafe_override = true;
  TrainingReport secured = train(TrainMode::SecureDFL, sec, data);

  CHECK((secured.final_params - fedavg.final_params).lpNorm<Eigen::Infinity>() <
        1e-6);
}

TEST_CASE("secured rounds record the privacy accounting") {
  std::vector<LocalDataset> data = make_synthetic(9, 40, 5, 0.5, 14);
  FLConfig cfg = base_cfg(logreg_spec(5, 3));
  cfg.n = 9;
  cfg.rounds = 3;
  cfg.aggregation = Aggregation::SecureAgg;
  cfg.admm.iterations = 2;
  cfg.admm.mode = AggMode::Grouped;
  cfg.admm.schedule = generate_schedule(9, 3, 42);
  TrainingReport report = train(TrainMode::SecureDFL, cfg, data);
  REQUIRE(report.rounds.size() == 4);  // initial agreement plus three rounds
  for (const RoundMetrics& m : report.rounds) {
    CHECK(m.admm_iterations == 2);
    CHECK(m.gap == 4);
    CHECK(m.peer_accuracy.size() == 9);
  }
}

TEST_CASE("local-only training never communicates") {
  std::vector<LocalDataset> data = make_synthetic(4, 60, 5, 0.9, 15);
  FLConfig cfg = base_cfg(logreg_spec(5, 3));
  cfg.n = 4;
  cfg.rounds = 3;
  cfg.aggregation = Aggregation::None;
  TrainingReport report = train(TrainMode::LocalOnly, cfg, data);
  for (const RoundMetrics& m : report.rounds) CHECK(m.admm_iterations == -1);
  // highly heterogeneous shards pull the peers apart; with aggregation they
  // would be identical after every round
  CHECK(report.rounds.back().peer_accuracy[0] !=
        report.rounds.back().peer_accuracy[1]);
}

TEST_CASE("synthetic shards are reproducible and respect heterogeneity") {
  std::vector<LocalDataset> a = make_synthetic(3, 100, 4, 0.0, 21);
  std::vector<LocalDataset> b = make_synthetic(3, 100, 4, 0.0, 21);
  for (int k = 0; k < 3; ++k) {
    CHECK((a[k].x_train - b[k].x_train).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a[k].y_train - b[k].y_train).lpNorm<Eigen::Infinity>() == 0.0);
  }

  // heterogeneity 0: every class appears on every peer in similar proportion
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d counts = Eigen::Vector3d::Zero();
    for (int r = 0; r < a[k].y_train.size(); ++r)
      counts[static_cast<int>(a[k].y_train[r])] += 1.0;
    counts /= a[k].y_train.size();
    for (int c = 0; c < 3; ++c) CHECK(counts[c] == doctest::Approx(1.0 / 3).epsilon(0.45));
  }

  // heterogeneity 1: peer k carries only class k mod K
  std::vector<LocalDataset> pure = make_synthetic(2, 50, 4, 1.0, 22);
  for (int k = 0; k < 2; ++k) {
    for (int r = 0; r < pure[k].y_train.size(); ++r)
      CHECK(static_cast<int>(pure[k].y_train[r]) == k);
    for (int r = 0; r < pure[k].y_test.size(); ++r)
      CHECK(static_cast<int>(pure[k].y_test[r]) == k);
  }
}

TEST_CASE("csv datasets shard deterministically") {
  const char* path = "fedtrain_test.csv";
  {
    std::ofstream os(path);
    os << "f0,f1,label\n";
    for (int i = 0; i < 24; ++i)
      os << i * 0.5 << "," << 24 - i << "," << i % 3 << "\n";
  }
  std::vector<LocalDataset> shards = load_csv_datasets(path, 2, 77);
  REQUIRE(shards.size() == 2);
  int total = 0;
  for (const auto& s : shards) {
    CHECK(s.x_train.cols() == 2);
    CHECK(s.x_test.rows() >= 1);
    total += static_cast<int>(s.x_train.rows() + s.x_test.rows());
  }
  CHECK(total == 24);
  std::vector<LocalDataset> again = load_csv_datasets(path, 2, 77);
  CHECK((shards[0].x_train - again[0].x_train).lpNorm<Eigen::Infinity>() == 0.0);

  CHECK_THROWS_AS(load_csv_datasets("no_such_file.csv", 2, 1), Error);
  CHECK_THROWS_AS(load_csv_datasets(path, 7, 1), Error);  // fewer than 4 rows per peer
  {
    std::ofstream os("fedtrain_ragged.csv");
    os << "f0,f1,label\n1,2,0\n1,2\n";
  }
  CHECK_THROWS_AS(load_csv_datasets("fedtrain_ragged.csv", 1, 1), Error);
  std::remove(path);
  std::remove("fedtrain_ragged.csv");
}

TEST_CASE("training reports serialize with the residual series") {
  std::vector<LocalDataset> data = make_synthetic(9, 40, 5, 0.5, 30);
  FLConfig cfg = base_cfg(logreg_spec(5, 3));
  cfg.n = 9;
  cfg.rounds = 2;
  cfg.aggregation = Aggregation::SecureAgg;
  cfg.admm.mode = AggMode::Grouped;
  cfg.admm.schedule = generate_schedule(9, 3, 42);
  TrainingReport report = train(TrainMode::SecureDFL, cfg, data);
  nlohmann::json j = report_to_json(report);
  CHECK(j["mode"] == "secured");
  CHECK(j["rounds"].size() == 3);
  CHECK(j["aggregation_residuals"].size() == 3);
  CHECK(j["rounds"][1].contains("gap"));
  CHECK(j.contains("final_accuracy"));
}

TEST_CASE("train validates the dataset count") {
  std::vector<LocalDataset> data = make_synthetic(3, 40, 4, 0.0, 31);
  FLConfig cfg = base_cfg(logreg_spec(4, 3));
  cfg.n = 4;
  CHECK_THROWS_AS(train(TrainMode::FedAvg, cfg, data), Error);
}
