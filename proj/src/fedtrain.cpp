#include "secdfl/fedtrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace secdfl {

namespace {

// softmax parameter blocks are row-major [class][features..., bias]
struct SoftmaxDims {
  int classes;
  int features;
  int per_class() const { return features + 1; }
};

double softmax_loss(const SoftmaxDims& d, const double* p, const Mat& x,
                    const Vec& y, Mat* probs_out) {
  const Eigen::Index m = x.rows();
  Mat logits(m, d.classes);
  for (int c = 0; c < d.classes; ++c) {
    Eigen::Map<const Vec> wc(p + c * d.per_class(), d.features);
    logits.col(c) = (x * wc).array() + p[c * d.per_class() + d.features];
  }
  Vec row_max = logits.rowwise().maxCoeff();
  Mat shifted = logits.colwise() - row_max;
  Mat expv = shifted.array().exp();
  Vec denom = expv.rowwise().sum();
  double loss = 0.0;
  for (Eigen::Index r = 0; r < m; ++r) {
    const int label = static_cast<int>(y[r]);
    loss -= shifted(r, label) - std::log(denom[r]);
  }
  if (probs_out) *probs_out = expv.array().colwise() / denom.array();
  return loss / static_cast<double>(m);
}

void softmax_grad_from_probs(const SoftmaxDims& d, const Mat& x, const Vec& y,
                             const Mat& probs, double* g) {
  const Eigen::Index m = x.rows();
  Mat delta = probs;
  for (Eigen::Index r = 0; r < m; ++r)
    delta(r, static_cast<int>(y[r])) -= 1.0;
  delta /= static_cast<double>(m);
  for (int c = 0; c < d.classes; ++c) {
    Eigen::Map<Vec> gw(g + c * d.per_class(), d.features);
    gw = x.transpose() * delta.col(c);
    g[c * d.per_class() + d.features] = delta.col(c).sum();
  }
}

struct MlpDims {
  int features;
  int hidden;
  int classes;
  int w1_size() const { return hidden * (features + 1); }
  int w2_size() const { return classes * (hidden + 1); }
};

Mat mlp_hidden(const MlpDims& d, const double* p, const Mat& x) {
  const Eigen::Index m = x.rows();
  Mat a(m, d.hidden);
  for (int h = 0; h < d.hidden; ++h) {
    Eigen::Map<const Vec> wh(p + h * (d.features + 1), d.features);
    a.col(h) = (x * wh).array() + p[h * (d.features + 1) + d.features];
  }
  return a.array().tanh();
}

}  // namespace

std::int64_t param_count(const ModelSpec& spec) {
  require(spec.input_dim >= 1, Errc::InvalidArgument,
          "param_count: input_dim must be positive");
  switch (spec.kind) {
    case ModelKind::LinearRegression:
      return spec.input_dim + 1;
    case ModelKind::LogisticRegression:
      require(spec.classes >= 2, Errc::InvalidArgument,
              "logistic regression needs at least 2 classes");
      return static_cast<std::int64_t>(spec.classes) * (spec.input_dim + 1);
    case ModelKind::TwoLayerPerceptron:
      require(spec.classes >= 2 && spec.hidden >= 1, Errc::InvalidArgument,
              "perceptron needs at least 2 classes and 1 hidden unit");
      return static_cast<std::int64_t>(spec.hidden) * (spec.input_dim + 1) +
             static_cast<std::int64_t>(spec.classes) * (spec.hidden + 1);
  }
  fail(Errc::InvalidArgument, "param_count: unknown model kind");
}

Vec init_params(const ModelSpec& spec, Rng& rng) {
  Vec p(param_count(spec));
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = 0.1 * rng.gaussian();
  return p;
}

double model_loss(const ModelSpec& spec, const Vec& params, const Mat& x,
                  const Vec& y) {
  require(x.rows() == y.size() && x.rows() > 0, Errc::InvalidArgument,
          "model_loss: empty or mismatched batch");
  require(params.size() == param_count(spec), Errc::ShapeMismatch,
          "model_loss: wrong parameter count");
  switch (spec.kind) {
    case ModelKind::LinearRegression: {
      Eigen::Map<const Vec> w(params.data(), spec.input_dim);
      Vec pred = (x * w).array() + params[spec.input_dim];
      return (pred - y).squaredNorm() / static_cast<double>(x.rows());
    }
    case ModelKind::LogisticRegression: {
      SoftmaxDims d{spec.classes, spec.input_dim};
      return softmax_loss(d, params.data(), x, y, nullptr);
    }
    case ModelKind::TwoLayerPerceptron: {
      MlpDims d{spec.input_dim, spec.hidden, spec.classes};
      Mat a = mlp_hidden(d, params.data(), x);
      SoftmaxDims top{spec.classes, spec.hidden};
      return softmax_loss(top, params.data() + d.w1_size(), a, y, nullptr);
    }
  }
  fail(Errc::InvalidArgument, "model_loss: unknown model kind");
}

Vec model_gradient(const ModelSpec& spec, const Vec& params, const Mat& x,
                   const Vec& y) {
  require(x.rows() == y.size() && x.rows() > 0, Errc::InvalidArgument,
          "model_gradient: empty or mismatched batch");
  require(params.size() == param_count(spec), Errc::ShapeMismatch,
          "model_gradient: wrong parameter count");
  Vec g = Vec::Zero(params.size());
  const Eigen::Index m = x.rows();
  switch (spec.kind) {
    case ModelKind::LinearRegression: {
      Eigen::Map<const Vec> w(params.data(), spec.input_dim);
      Vec resid = (x * w).array() + params[spec.input_dim] - y.array();
      Eigen::Map<Vec> gw(g.data(), spec.input_dim);
      gw = 2.0 / static_cast<double>(m) * (x.transpose() * resid);
      g[spec.input_dim] = 2.0 / static_cast<double>(m) * resid.sum();
      return g;
    }
    case ModelKind::LogisticRegression: {
      SoftmaxDims d{spec.classes, spec.input_dim};
      Mat probs;
      softmax_loss(d, params.data(), x, y, &probs);
      softmax_grad_from_probs(d, x, y, probs, g.data());
      return g;
    }
    case ModelKind::TwoLayerPerceptron: {
      MlpDims d{spec.input_dim, spec.hidden, spec.classes};
      Mat a = mlp_hidden(d, params.data(), x);
      SoftmaxDims top{spec.classes, spec.hidden};
      Mat probs;
      softmax_loss(top, params.data() + d.w1_size(), a, y, &probs);
      Mat delta = probs;
      for (Eigen::Index r = 0; r < m; ++r)
        delta(r, static_cast<int>(y[r])) -= 1.0;
      delta /= static_cast<double>(m);
      // output layer
      double* g2 = g.data() + d.w1_size();
      const double* p2 = params.data() + d.w1_size();
      for (int c = 0; c < d.classes; ++c) {
        Eigen::Map<Vec> gw(g2 + c * (d.hidden + 1), d.hidden);
        gw = a.transpose() * delta.col(c);
        g2[c * (d.hidden + 1) + d.hidden] = delta.col(c).sum();
      }
      // backprop through tanh
      Mat w2(d.classes, d.hidden);
      for (int c = 0; c < d.classes; ++c)
        w2.row(c) = Eigen::Map<const Vec>(p2 + c * (d.hidden + 1), d.hidden)
                        .transpose();
      Mat ga = (delta * w2).array() * (1.0 - a.array().square());
      for (int h = 0; h < d.hidden; ++h) {
        Eigen::Map<Vec> gw(g.data() + h * (d.features + 1), d.features);
        gw = x.transpose() * ga.col(h);
        g[h * (d.features + 1) + d.features] = ga.col(h).sum();
      }
      return g;
    }
  }
  fail(Errc::InvalidArgument, "model_gradient: unknown model kind");
}

double model_accuracy(const ModelSpec& spec, const Vec& params, const Mat& x,
                      const Vec& y) {
  if (spec.kind == ModelKind::LinearRegression) {
    return -model_loss(spec, params, x, y);
  }
  const Eigen::Index m = x.rows();
  Mat scores;
  if (spec.kind == ModelKind::LogisticRegression) {
    scores.resize(m, spec.classes);
    for (int c = 0; c < spec.classes; ++c) {
      Eigen::Map<const Vec> wc(params.data() + c * (spec.input_dim + 1),
                               spec.input_dim);
      scores.col(c) = (x * wc).array() + params[c * (spec.input_dim + 1) +
                                                spec.input_dim];
    }
  } else {
    MlpDims d{spec.input_dim, spec.hidden, spec.classes};
    Mat a = mlp_hidden(d, params.data(), x);
    const double* p2 = params.data() + d.w1_size();
    scores.resize(m, spec.classes);
    for (int c = 0; c < spec.classes; ++c) {
      Eigen::Map<const Vec> wc(p2 + c * (spec.hidden + 1), spec.hidden);
      scores.col(c) = (a * wc).array() + p2[c * (spec.hidden + 1) + spec.hidden];
    }
  }
  Eigen::Index hits = 0;
  for (Eigen::Index r = 0; r < m; ++r) {
    Eigen::Index best;
    scores.row(r).maxCoeff(&best);
    if (best == static_cast<Eigen::Index>(y[r])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(m);
}

Vec local_update(const Vec& params, const LocalDataset& data,
                 const ModelSpec& spec, const FLConfig& cfg, Rng& batch_rng) {
  const Eigen::Index m = data.x_train.rows();
  require(m > 0, Errc::InvalidArgument, "local_update: empty training shard");
  require(cfg.batch_size >= 1 && cfg.batch_size <= m, Errc::InvalidArgument,
          "local_update: batch size outside [1, |train|]");
  Vec w = params;
  std::vector<int> order(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] =
      static_cast<int>(i);
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    batch_rng.shuffle(order);
    for (Eigen::Index start = 0; start < m; start += cfg.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, m - start);
      Mat xb(len, data.x_train.cols());
      Vec yb(len);
      for (Eigen::Index r = 0; r < len; ++r) {
        xb.row(r) = data.x_train.row(order[static_cast<std::size_t>(start + r)]);
        yb[r] = data.y_train[order[static_cast<std::size_t>(start + r)]];
      }
      w -= cfg.learning_rate * model_gradient(spec, w, xb, yb);
      if (!w.allFinite())
        fail(Errc::NonFinite, "local_update: parameters diverged");
    }
  }
  return w;
}

namespace {

struct PooledTest {
  Mat x;
  Vec y;
};

PooledTest pool_tests(const std::vector<LocalDataset>& data) {
  Eigen::Index rows = 0;
  for (const auto& d : data) rows += d.x_test.rows();
  require(rows > 0, Errc::InvalidArgument, "train: no test data");
  PooledTest pooled;
  pooled.x.resize(rows, data.front().x_test.cols());
  pooled.y.resize(rows);
  Eigen::Index at = 0;
  for (const auto& d : data) {
    pooled.x.middleRows(at, d.x_test.rows()) = d.x_test;
    pooled.y.segment(at, d.y_test.size()) = d.y_test;
    at += d.x_test.rows();
  }
  return pooled;
}

Vec exact_mean(const std::vector<Vec>& ws) {
  Vec acc = ws.front();
  for (std::size_t k = 1; k < ws.size(); ++k) acc += ws[k];
  return acc / static_cast<double>(ws.size());
}

}  // namespace

TrainingReport train(TrainMode mode, const FLConfig& cfg,
                     const std::vector<LocalDataset>& data) {
  require(static_cast<int>(data.size()) == cfg.n, Errc::InvalidArgument,
          "train: need one dataset per peer");
  require(cfg.n >= 1 && cfg.rounds >= 1 && cfg.local_epochs >= 1,
          Errc::InvalidArgument, "train: nonpositive config");
  require(cfg.learning_rate > 0.0, Errc::InvalidArgument,
          "train: learning rate must be positive");

  const ModelSpec& spec = cfg.model;
  PooledTest pooled = pool_tests(data);

  std::vector<Vec> ws;
  ws.reserve(data.size());
  for (int k = 0; k < cfg.n; ++k) {
    Rng init_rng(derive_seed(cfg.seed, "init", static_cast<std::uint64_t>(k)));
    ws.push_back(init_params(spec, init_rng));
  }
  std::vector<Rng> batch_rngs;
  batch_rngs.reserve(data.size());
  for (int k = 0; k < cfg.n; ++k)
    batch_rngs.emplace_back(
        derive_seed(cfg.seed, "batch", static_cast<std::uint64_t>(k)));

  TrainingReport report;
  report.mode = mode;

  auto aggregate = [&](int round, RoundMetrics& metrics) {
    if (mode == TrainMode::LocalOnly) return;
    if (mode == TrainMode::FedAvg) {
      Vec z = exact_mean(ws);
      for (Vec& w : ws) w = z;
      metrics.admm_iterations = 0;
      metrics.gap = -1;
      metrics.aggregation_residual = 0.0;
      return;
    }
    std::vector<ParamVector> inputs;
    inputs.reserve(ws.size());
    for (const Vec& w : ws) inputs.push_back(ParamVector::flat(w));
    AggregationResult agg = run_aggregation(
        inputs, cfg.admm,
        derive_seed(cfg.seed, "agg", static_cast<std::uint64_t>(round)));
    for (Vec& w : ws) w = agg.z;
    metrics.admm_iterations = cfg.admm.iterations;
    metrics.gap =
        cfg.admm.mode == AggMode::Grouped ? cfg.admm.schedule.gap() : 1;
    metrics.aggregation_residual = agg.traces.back().residual_l2;
  };

  auto measure = [&](int round, RoundMetrics& metrics) {
    metrics.round = round;
    metrics.peer_accuracy.resize(static_cast<std::size_t>(cfg.n));
    metrics.peer_loss.resize(static_cast<std::size_t>(cfg.n));
    for (int k = 0; k < cfg.n; ++k) {
      const auto& d = data[static_cast<std::size_t>(k)];
      metrics.peer_accuracy[static_cast<std::size_t>(k)] =
          model_accuracy(spec, ws[static_cast<std::size_t>(k)], d.x_test, d.y_test);
      metrics.peer_loss[static_cast<std::size_t>(k)] =
          model_loss(spec, ws[static_cast<std::size_t>(k)], d.x_test, d.y_test);
    }
    if (mode == TrainMode::LocalOnly) {
      double acc = 0.0, loss = 0.0;
      for (int k = 0; k < cfg.n; ++k) {
        acc += model_accuracy(spec, ws[static_cast<std::size_t>(k)], pooled.x,
                              pooled.y);
        loss += model_loss(spec, ws[static_cast<std::size_t>(k)], pooled.x,
                           pooled.y);
      }
      metrics.global_accuracy = acc / cfg.n;
      metrics.global_loss = loss / cfg.n;
    } else {
      metrics.global_accuracy = model_accuracy(spec, ws[0], pooled.x, pooled.y);
      metrics.global_loss = model_loss(spec, ws[0], pooled.x, pooled.y);
    }
  };

  // initial-parameter agreement: the randomly initialized parameters are
  // themselves aggregated before any training
  {
    RoundMetrics m0;
    aggregate(0, m0);
    measure(0, m0);
    report.rounds.push_back(std::move(m0));
  }

  for (int round = 1; round <= cfg.rounds; ++round) {
    for (int k = 0; k < cfg.n; ++k)
      ws[static_cast<std::size_t>(k)] =
          local_update(ws[static_cast<std::size_t>(k)],
                       data[static_cast<std::size_t>(k)], spec, cfg,
                       batch_rngs[static_cast<std::size_t>(k)]);
    RoundMetrics metrics;
    aggregate(round, metrics);
    measure(round, metrics);
    report.rounds.push_back(std::move(metrics));
  }

  report.final_accuracy = report.rounds.back().global_accuracy;
  report.final_loss = report.rounds.back().global_loss;
  report.final_params = ws[0];
  return report;
}

std::vector<LocalDataset> make_synthetic(int n_peers, int samples_per_peer,
                                         int dim, double heterogeneity,
                                         std::uint64_t seed, int classes,
                                         double separation) {
  require(n_peers >= 1 && samples_per_peer >= 4 && dim >= 1 && classes >= 2,
          Errc::InvalidArgument, "make_synthetic: nonpositive sizes");
  require(heterogeneity >= 0.0 && heterogeneity <= 1.0, Errc::InvalidArgument,
          "make_synthetic: heterogeneity must lie in [0, 1]");

  Mat means = Mat::Zero(classes, dim);
  for (int c = 0; c < classes; ++c) means(c, c % dim) = separation;

  std::vector<LocalDataset> shards;
  shards.reserve(static_cast<std::size_t>(n_peers));
  for (int k = 0; k < n_peers; ++k) {
    Rng rng(derive_seed(seed, "synth", static_cast<std::uint64_t>(k)));
    // class mix: uniform background plus a dominant class per peer
    std::vector<double> p(static_cast<std::size_t>(classes),
                          (1.0 - heterogeneity) / classes);
    p[static_cast<std::size_t>(k % classes)] += heterogeneity;

    Mat x(samples_per_peer, dim);
    Vec y(samples_per_peer);
    for (int r = 0; r < samples_per_peer; ++r) {
      double u = rng.uniform01();
      int label = classes - 1;
      double cum = 0.0;
      for (int c = 0; c < classes; ++c) {
        cum += p[static_cast<std::size_t>(c)];
        if (u < cum) {
          label = c;
          break;
        }
      }
      y[r] = label;
      for (int d = 0; d < dim; ++d) x(r, d) = means(label, d) + rng.gaussian();
    }
    const int train_rows = samples_per_peer - samples_per_peer / 4;
    LocalDataset shard;
    shard.x_train = x.topRows(train_rows);
    shard.y_train = y.head(train_rows);
    shard.x_test = x.bottomRows(samples_per_peer - train_rows);
    shard.y_test = y.tail(samples_per_peer - train_rows);
    shards.push_back(std::move(shard));
  }
  return shards;
}

std::vector<LocalDataset> load_csv_datasets(const std::string& path,
                                            int n_peers, std::uint64_t seed,
                                            double test_fraction) {
  require(n_peers >= 1, Errc::InvalidArgument, "load_csv: nonpositive peers");
  require(test_fraction > 0.0 && test_fraction < 1.0, Errc::InvalidArgument,
          "load_csv: test fraction must lie in (0, 1)");
  std::ifstream in(path);
  require(in.good(), Errc::Io, "load_csv: cannot open " + path);

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::Io,
          "load_csv: missing header row");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(Errc::Io, "load_csv: non-numeric cell '" + cell + "'");
      }
    }
    require(row.size() >= 2, Errc::Io, "load_csv: need features plus label");
    if (!rows.empty())
      require(row.size() == rows.front().size(), Errc::Io,
              "load_csv: ragged rows");
    rows.push_back(std::move(row));
  }
  require(static_cast<int>(rows.size()) >= 4 * n_peers, Errc::InvalidArgument,
          "load_csv: too few rows to shard");

  Rng rng(derive_seed(seed, "csv-shuffle"));
  std::vector<int> order(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);

  const int dim = static_cast<int>(rows.front().size()) - 1;
  std::vector<std::vector<int>> per_peer(static_cast<std::size_t>(n_peers));
  for (std::size_t j = 0; j < order.size(); ++j)
    per_peer[j % static_cast<std::size_t>(n_peers)].push_back(
        order[j]);

  std::vector<LocalDataset> shards;
  shards.reserve(static_cast<std::size_t>(n_peers));
  for (const auto& idx : per_peer) {
    const int total = static_cast<int>(idx.size());
    const int test_rows = std::max(1, static_cast<int>(total * test_fraction));
    const int train_rows = total - test_rows;
    require(train_rows >= 1, Errc::InvalidArgument,
            "load_csv: shard too small for a train split");
    LocalDataset shard;
    shard.x_train.resize(train_rows, dim);
    shard.y_train.resize(train_rows);
    shard.x_test.resize(test_rows, dim);
    shard.y_test.resize(test_rows);
    for (int r = 0; r < total; ++r) {
      const std::vector<double>& row = rows[static_cast<std::size_t>(idx[r])];
      const bool is_train = r < train_rows;
      Mat& x = is_train ? shard.x_train : shard.x_test;
      Vec& y = is_train ? shard.y_train : shard.y_test;
      const int rr = is_train ? r : r - train_rows;
      for (int d = 0; d < dim; ++d) x(rr, d) = row[static_cast<std::size_t>(d)];
      y[rr] = row[static_cast<std::size_t>(dim)];
    }
    shards.push_back(std::move(shard));
  }
  return shards;
}

nlohmann::json report_to_json(const TrainingReport& report) {
  nlohmann::json j;
  switch (report.mode) {
    case TrainMode::SecureDFL: j["mode"] = "secured"; break;
    case TrainMode::FedAvg: j["mode"] = "fedavg"; break;
    case TrainMode::LocalOnly: j["mode"] = "local"; break;
  }
  j["final_accuracy"] = report.final_accuracy;
  j["final_loss"] = report.final_loss;
  nlohmann::json rounds = nlohmann::json::array();
  nlohmann::json residuals = nlohmann::json::array();
  for (const RoundMetrics& m : report.rounds) {
    nlohmann::json r;
    r["round"] = m.round;
    r["global_accuracy"] = m.global_accuracy;
    r["global_loss"] = m.global_loss;
    r["peer_accuracy"] = m.peer_accuracy;
    r["peer_loss"] = m.peer_loss;
    if (m.admm_iterations >= 0) {
      r["admm_iterations"] = m.admm_iterations;
      r["gap"] = m.gap;
      r["aggregation_residual"] = m.aggregation_residual;
    }
    rounds.push_back(std::move(r));
    residuals.push_back(m.aggregation_residual);
  }
  j["rounds"] = std::move(rounds);
  j["aggregation_residuals"] = std::move(residuals);
  return j;
}

}  // namespace secdfl
