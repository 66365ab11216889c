#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "wdgnn/training.hpp"

using namespace wdgnn;

namespace {

Gso complete(int n) {
  Gso g{Matrix(n, n), true};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) g.entries(i, j) = 1.0;
  return g;
}

// two-class toy problem on K3 that a single filter separates: the sign of
// the per-node signal carries the class
Dataset separable_toy(int n_samples, uint64_t seed) {
  Dataset ds;
  ds.graphs = {complete(3)};
  ds.detectors = {0, 1, 2};
  ds.num_classes = 2;
  Rng rng(seed);
  for (int i = 0; i < n_samples; ++i) {
    Sample smp;
    smp.label = rng.uniform_int(2);
    double base = smp.label == 0 ? 1.0 : -1.0;
    smp.x = GraphSignal(3, 1);
    for (double& v : smp.x.a) v = base + 0.1 * rng.normal();
    ds.samples.push_back(std::move(smp));
  }
  return ds;
}

WdGnnParams toy_model(uint64_t seed) {
  ArchSpec spec;
  spec.f_in = 1;
  spec.g_out = 4;
  spec.k_order = 1;
  spec.deep_layers = 1;
  spec.deep_features = 4;
  spec.sigma = Nonlinearity::tanh;
  spec.readout_out = 2;
  Rng rng(seed);
  return make_wdgnn(spec, rng);
}

}  // namespace

TEST_CASE("cross entropy of uniform logits is log(classes)") {
  Matrix logits(3, 5);  // all equal
  auto [loss, grad] = cross_entropy_loss(logits, {0, 3, 4});
  REQUIRE(loss == Catch::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy vanishes as the correct-logit margin grows") {
  double last = 1e9;
  for (double margin : {2.0, 5.0, 10.0, 20.0}) {
    Matrix logits(1, 3);
    logits(0, 1) = margin;
    auto [loss, grad] = cross_entropy_loss(logits, {1});
    REQUIRE(loss < last);
    last = loss;
  }
  REQUIRE(last < 1e-8);
}

TEST_CASE("cross entropy gradient matches finite differences") {
  Rng rng(5);
  Matrix logits(4, 3);
  for (double& v : logits.a) v = rng.normal();
  std::vector<int> labels = {2, 0, 1, 1};
  auto [loss, grad] = cross_entropy_loss(logits, labels);
  double h = 1e-6;
  for (int i = 0; i < logits.rows; ++i)
    for (int c = 0; c < logits.cols; ++c) {
      Matrix up = logits, down = logits;
      up(i, c) += h;
      down(i, c) -= h;
      double fd = (cross_entropy_loss(up, labels).first - cross_entropy_loss(down, labels).first) /
                  (2 * h);
      REQUIRE(std::fabs(fd - grad(i, c)) / std::max(1.0, std::fabs(fd)) < 1e-6);
    }
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  Matrix logits(1, 3);
  REQUIRE_THROWS_AS(cross_entropy_loss(logits, {3}), std::invalid_argument);
  REQUIRE_THROWS_AS(cross_entropy_loss(logits, {-1}), std::invalid_argument);
}

TEST_CASE("mse loss basics") {
  Matrix pred(2, 2, 1.0), target(2, 2, 1.0);
  auto [zero_loss, g0] = mse_loss(pred, target);
  REQUIRE(zero_loss == 0.0);
  REQUIRE(max_abs(g0) == 0.0);

  Matrix ones_diff(2, 2, 2.0);
  auto [unit_loss, g1] = mse_loss(ones_diff, target);
  REQUIRE(unit_loss == 1.0);
  REQUIRE(g1(0, 0) == Catch::Approx(2.0 / 4.0));

  Matrix mask(2, 2);
  mask(1, 1) = 1.0;
  Matrix pred2(2, 2);
  pred2(1, 1) = 3.0;
  pred2(0, 0) = 99.0;  // masked out
  auto [single, g2] = mse_loss(pred2, Matrix(2, 2), mask);
  REQUIRE(single == 9.0);
  REQUIRE(g2(0, 0) == 0.0);
  REQUIRE(g2(1, 1) == Catch::Approx(6.0));

  REQUIRE_THROWS_AS(mse_loss(Matrix(2, 2), Matrix(3, 2)), std::invalid_argument);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  AdamState st = make_adam(3, 0.1);
  std::vector<double> params = {1.0, -2.0, 0.5};
  std::vector<double> before = params;
  adam_step(st, params, {0.0, 0.0, 0.0});
  REQUIRE(params == before);
  REQUIRE(st.step == 1);
}

TEST_CASE("first adam step is approximately -lr * sign(gradient)") {
  AdamState st = make_adam(2, 0.01);
  std::vector<double> params = {0.0, 0.0};
  adam_step(st, params, {3.0, -0.7});
  REQUIRE(params[0] == Catch::Approx(-0.01).epsilon(1e-6));
  REQUIRE(params[1] == Catch::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("two adam steps reproduce the scalar hand computation") {
  double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 2.0;
  // step 1
  double m = (1 - b1) * g, v = (1 - b2) * g * g, theta = 1.0;
  double mh = m / (1 - b1), vh = v / (1 - b2);
  theta -= lr * mh / (std::sqrt(vh) + eps);
  // step 2
  m = b1 * m + (1 - b1) * g;
  v = b2 * v + (1 - b2) * g * g;
  mh = m / (1 - b1 * b1);
  vh = v / (1 - b2 * b2);
  theta -= lr * mh / (std::sqrt(vh) + eps);

  AdamState st = make_adam(1, lr);
  std::vector<double> params = {1.0};
  adam_step(st, params, {g});
  adam_step(st, params, {g});
  REQUIRE(params[0] == Catch::Approx(theta).margin(1e-12));
}

TEST_CASE("adam shape mismatch throws") {
  AdamState st = make_adam(2, 0.1);
  std::vector<double> params = {1.0};
  REQUIRE_THROWS_AS(adam_step(st, params, {1.0}), std::invalid_argument);
}

TEST_CASE("offline training solves the separable toy problem") {
  Dataset train = separable_toy(32, 1);
  Dataset val = separable_toy(16, 2);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.01;
  cfg.seed = 3;
  cfg.threads = 1;
  TrainResult result = train_offline(train, val, toy_model(4), cfg);
  EvalResult on_train = evaluate(train, result.params);
  REQUIRE(on_train.metric == 1.0);
}

TEST_CASE("zero learning rate leaves parameters identical") {
  Dataset train = separable_toy(16, 5);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.0;
  cfg.seed = 1;
  cfg.threads = 1;
  WdGnnParams init = toy_model(6);
  TrainResult result = train_offline(train, Dataset{}, init, cfg);
  std::vector<double> a = flatten_params(init), b = flatten_params(result.params);
  REQUIRE(a == b);
}

TEST_CASE("training is deterministic for a fixed seed") {
  Dataset train = separable_toy(24, 7);
  Dataset val = separable_toy(8, 8);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 6;
  cfg.learning_rate = 5e-3;
  cfg.seed = 11;
  cfg.threads = 0;  // thread count must not affect the result
  TrainResult r1 = train_offline(train, val, toy_model(9), cfg);
  cfg.threads = 1;
  TrainResult r2 = train_offline(train, val, toy_model(9), cfg);
  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t e = 0; e < r1.history.size(); ++e) {
    REQUIRE(r1.history[e].train_loss == r2.history[e].train_loss);
    REQUIRE(r1.history[e].val_loss == r2.history[e].val_loss);
  }
  REQUIRE(flatten_params(r1.params) == flatten_params(r2.params));
}

TEST_CASE("one step with nonzero loss moves every parameter group") {
  Dataset train = separable_toy(8, 13);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  cfg.seed = 1;
  cfg.threads = 1;
  WdGnnParams init = toy_model(14);
  TrainResult result = train_offline(train, Dataset{}, init, cfg);
  const WdGnnParams& p = result.params;

  double d_wide = taps_distance(p.wide, init.wide);
  double d_deep = taps_distance(p.deep.layers[0].taps, init.deep.layers[0].taps);
  REQUIRE(d_wide > 0.0);
  REQUIRE(d_deep > 0.0);
  REQUIRE(p.alpha_w != init.alpha_w);
  REQUIRE(p.alpha_d != init.alpha_d);
  REQUIRE(p.beta != init.beta);
  REQUIRE(max_abs(p.readout.w - init.readout.w) > 0.0);
}

TEST_CASE("training loss is non-increasing at a small enough learning rate") {
  Dataset train = separable_toy(32, 17);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 32;  // full batch
  cfg.learning_rate = 1e-4;
  cfg.seed = 2;
  cfg.threads = 1;
  TrainResult result = train_offline(train, Dataset{}, toy_model(18), cfg);
  for (size_t e = 1; e < result.history.size(); ++e)
    REQUIRE(result.history[e].train_loss <= result.history[e - 1].train_loss + 1e-9);
}

TEST_CASE("divergence aborts with a diagnostic") {
  Dataset train;
  train.graphs = {complete(3)};
  train.num_classes = 0;
  Rng rng(23);
  for (int i = 0; i < 8; ++i) {
    Sample smp;
    smp.x = GraphSignal(3, 1);
    for (double& v : smp.x.a) v = rng.normal();
    smp.target = 1e200 * smp.x;
    train.samples.push_back(std::move(smp));
  }
  ArchSpec spec;
  spec.f_in = 1;
  spec.g_out = 2;
  spec.k_order = 1;
  spec.deep_layers = 1;
  spec.readout_out = 1;
  Rng prng(24);
  WdGnnParams model = make_wdgnn(spec, prng);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e10;
  cfg.seed = 1;
  cfg.threads = 1;
  REQUIRE_THROWS_AS(train_offline(train, Dataset{}, model, cfg), std::runtime_error);
}

TEST_CASE("empty dataset is rejected") {
  TrainConfig cfg;
  REQUIRE_THROWS_AS(train_offline(Dataset{}, Dataset{}, toy_model(1), cfg), std::invalid_argument);
}

TEST_CASE("loss history csv") {
  std::vector<EpochStats> history = {{0, 1.5, 1.25, 0.5}, {1, 1.0, 0.75, 0.625}};
  std::string path = "test_history.csv";
  write_loss_history(path, history);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "epoch,train_loss,val_loss,val_metric");
  std::getline(in, line);
  REQUIRE(line == "0,1.5,1.25,0.5");
  in.close();
  std::remove(path.c_str());
}
