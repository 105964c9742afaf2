// Quantizer: frozen projection + codebook, brute-force argmin oracle.
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "sonamix/quantizer.hpp"
#include "sonamix/rng.hpp"

using namespace sonamix;

namespace {

// Independent oracle: explicit Euclidean distances in double precision,
// argmin with lowest-index ties. Stays on the distance formulation so the
// production cosine path is checked against a different route.
int brute_force_token(const RandomQuantizer& q, const Eigen::VectorXd& x) {
  Eigen::VectorXd proj = q.projection().cast<double>() * x;
  proj /= std::max(proj.norm(), 1e-12);
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < q.codebook().rows(); ++i) {
    Eigen::VectorXd c = q.codebook().row(i).cast<double>().transpose();
    c /= std::max(c.norm(), 1e-12);
    const double d = (c - proj).norm();
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

QuantizerConfig small_cfg() {
  QuantizerConfig cfg;
  cfg.codebook_size = 64;
  cfg.codebook_dim = 8;
  cfg.input_dim = 24;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("same seed reproduces projection and codebook bit for bit") {
  QuantizerConfig cfg;
  cfg.seed = 5;
  const RandomQuantizer a(cfg);
  const RandomQuantizer b(cfg);
  CHECK(a.projection() == b.projection());
  CHECK(a.codebook() == b.codebook());
}

TEST_CASE("projection entries respect the Xavier-uniform bound") {
  QuantizerConfig cfg;  // h=16, d=512
  const RandomQuantizer q(cfg);
  const float bound = static_cast<float>(std::sqrt(6.0 / (16 + 512)));
  CHECK(q.projection().maxCoeff() <= bound);
  CHECK(q.projection().minCoeff() >= -bound);
}

TEST_CASE("codebook entries look standard normal over 131072 samples") {
  QuantizerConfig cfg;  // n=8192, h=16
  const RandomQuantizer q(cfg);
  const auto& c = q.codebook();
  const double n = static_cast<double>(c.size());
  const double mean = c.cast<double>().sum() / n;
  const double var = c.cast<double>().array().square().sum() / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("normalized codebook rows are unit length") {
  const RandomQuantizer q(small_cfg());
  for (Eigen::Index i = 0; i < q.normalized_codebook().rows(); ++i)
    CHECK(q.normalized_codebook().row(i).norm() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("a frame whose projection equals a codeword maps to that codeword") {
  const auto cfg = small_cfg();
  const RandomQuantizer q(cfg);
  // Solve A x = c_7 in the least-squares sense; d > h so a solution exists.
  const Eigen::MatrixXd a = q.projection().cast<double>();
  const Eigen::VectorXd c7 = q.codebook().row(7).cast<double>().transpose();
  const Eigen::VectorXd x = a.colPivHouseholderQr().solve(c7);
  REQUIRE((a * x - c7).norm() < 1e-9);
  CHECK(q.quantize_frame(x) == 7);
}

TEST_CASE("positive scaling never changes the token") {
  const RandomQuantizer q(small_cfg());
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd x(24);
    for (int i = 0; i < 24; ++i) x(i) = rng.normal();
    const double alpha = std::exp(rng.uniform(-3.0, 3.0));
    CHECK(q.quantize_frame(x) == q.quantize_frame(alpha * x));
  }
}

TEST_CASE("production tokens equal the brute-force distance oracle") {
  const RandomQuantizer q(small_cfg());
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::VectorXd x(24);
    for (int i = 0; i < 24; ++i) x(i) = rng.normal();
    CHECK(q.quantize_frame(x) == brute_force_token(q, x));
  }
}

TEST_CASE("argmin of distance equals argmax of cosine similarity on every frame") {
  const RandomQuantizer q(small_cfg());
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd x(24);
    for (int i = 0; i < 24; ++i) x(i) = rng.normal();
    Eigen::VectorXd proj = q.projection().cast<double>() * x;
    proj /= proj.norm();
    Eigen::VectorXd sims = q.normalized_codebook() * proj;
    Eigen::Index cos_arg;
    sims.maxCoeff(&cos_arg);
    CHECK(brute_force_token(q, x) == static_cast<int>(cos_arg));
  }
}

TEST_CASE("zero frames tokenize deterministically instead of crashing") {
  const RandomQuantizer q(small_cfg());
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(24);
  const int t1 = q.quantize_frame(zero);
  const int t2 = q.quantize_frame(zero);
  CHECK(t1 == t2);
  CHECK(t1 >= 0);
  CHECK(t1 < 64);
}

TEST_CASE("NaN frames are rejected") {
  const RandomQuantizer q(small_cfg());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(24);
  x(3) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(q.quantize_frame(x), InputError);
}

TEST_CASE("sequence quantization is element-wise and length preserving") {
  const RandomQuantizer q(small_cfg());
  StackedMelSequence s;
  s.frames.resize(25, 24);
  Rng rng(31);
  for (Eigen::Index t = 0; t < 25; ++t)
    for (int i = 0; i < 24; ++i) s.frames(t, i) = rng.normal();
  const auto seq = quantize_sequence(q, s);
  REQUIRE(seq.tokens.size() == 25);
  for (Eigen::Index t = 0; t < 25; ++t)
    CHECK(seq.tokens[static_cast<size_t>(t)] == q.quantize_frame(s.frames.row(t).transpose()));

  StackedMelSequence constant;
  constant.frames = Mat<double>::Ones(7, 24);
  const auto tokens = q.quantize_sequence(constant);
  for (int t : tokens) CHECK(t == tokens[0]);

  StackedMelSequence wrong;
  wrong.frames.resize(3, 10);
  CHECK_THROWS_AS(q.quantize_sequence(wrong), ConfigError);
}

TEST_CASE("snapshot round trip is bit exact") {
  const RandomQuantizer q(small_cfg());
  const auto path =
      (std::filesystem::temp_directory_path() / "sonamix_q.smxq").string();
  q.save(path);
  const RandomQuantizer back = RandomQuantizer::load(path);
  CHECK(back.config().seed == q.config().seed);
  CHECK(back.projection() == q.projection());
  CHECK(back.codebook() == q.codebook());
  std::remove(path.c_str());
}

TEST_CASE("config validation") {
  QuantizerConfig cfg;
  cfg.codebook_size = 1;
  CHECK_THROWS_AS(RandomQuantizer{cfg}, ConfigError);
}

TEST_CASE("usage sanity: random frames hit at least half of a large codebook") {
  // Threshold is a harness choice, not a published figure.
  QuantizerConfig cfg;
  cfg.codebook_size = 8192;
  cfg.codebook_dim = 16;
  cfg.input_dim = 64;
  cfg.seed = 2;
  const RandomQuantizer q(cfg);
  Rng rng(5);
  std::set<int> used;
  for (int trial = 0; trial < 100000; ++trial) {
    Eigen::VectorXd x(64);
    for (int i = 0; i < 64; ++i) x(i) = rng.normal();
    used.insert(q.quantize_frame(x));
  }
  CHECK(used.size() >= 4096);
}
