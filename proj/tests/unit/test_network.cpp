#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "igb/error.hpp"
#include "igb/network.hpp"
#include "igb/rng.hpp"

using namespace igb;

namespace {

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Matrix m(r, c);
  Rng rng(seed);
  fill_normal(m, rng);
  return m;
}

// Straightforward per-sample reference forward for LN/RMS/no-norm nets.
Matrix reference_forward(const Network& net, const Matrix& x) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(net.config.num_classes));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Vector g = x.row(i).transpose();
    for (std::size_t l = 0; l < net.depth(); ++l) {
      Vector h = net.weights[l] * g + net.biases[l].transpose();
      auto norm = [&](Vector v) {
        if (!net.has_norm()) return v;
        const bool center = net.config.norm_kind == NormKind::LayerNorm;
        const double m = center ? v.mean() : 0.0;
        const double var = (v.array() - m).square().mean();
        Vector y = (v.array() - m) / std::sqrt(var + net.config.epsilon);
        return Vector(y.array() * net.norm_scale[l].transpose().array() +
                      net.norm_shift[l].transpose().array());
      };
      if (net.config.placement == NormPlacement::PreActivation) {
        g = norm(h).cwiseMax(0.0);
      } else if (net.config.placement == NormPlacement::PostActivation) {
        g = norm(h.cwiseMax(0.0));
      } else {
        g = h.cwiseMax(0.0);
      }
    }
    out.row(i) = (net.weights.back() * g + net.biases.back().transpose()).transpose();
  }
  return out;
}

}  // namespace

TEST_CASE("norm kind and placement parsing") {
  CHECK(parse_norm_kind("bn") == NormKind::BatchNorm);
  CHECK(parse_norm_kind("layer") == NormKind::LayerNorm);
  CHECK(parse_norm_kind("RmsNorm") == NormKind::RmsNorm);
  CHECK(parse_placement("post") == NormPlacement::PostActivation);
  CHECK(to_string(NormKind::None) == "none");
  CHECK_THROWS_AS(parse_norm_kind("group"), ConfigError);
  CHECK_THROWS_AS(parse_placement("middle"), ConfigError);
}

TEST_CASE("config validation reports every violation") {
  NetworkConfig c;
  c.input_dim = 0;
  c.hidden_widths = {4, 0};
  c.num_classes = 1;
  c.sigma_w2 = -1.0;
  c.norm_kind = NormKind::LayerNorm;
  c.placement = NormPlacement::Absent;
  c.loo_estimators = true;
  const auto v = c.violations();
  CHECK(v.size() >= 6);
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.violations() == v);
    const std::string msg = e.what();
    CHECK(msg.find("input_dim") != std::string::npos);
    CHECK(msg.find("hidden_widths[1]") != std::string::npos);
    CHECK(msg.find("sigma_w2") != std::string::npos);
  }
  CHECK(make_config(10, 5, 3, NormKind::BatchNorm, NormPlacement::PreActivation).violations().empty());
  auto bad = make_config(10, 5, 1, NormKind::None, NormPlacement::PreActivation);
  CHECK_FALSE(bad.violations().empty());
}

TEST_CASE("init follows the fan-in variance and is seed deterministic") {
  const auto cfg = make_config(400, 300, 2, NormKind::LayerNorm, NormPlacement::PreActivation);
  const Network a = init_network(cfg, 5);
  const Network b = init_network(cfg, 5);
  const Network c = init_network(cfg, 6);
  CHECK(a.weights[1] == b.weights[1]);
  CHECK(a.weights[1] != c.weights[1]);
  REQUIRE(a.weights.size() == 3);
  CHECK(a.weights[0].rows() == 300);
  CHECK(a.weights[0].cols() == 400);
  CHECK(a.weights[2].rows() == 2);
  const Matrix& w = a.weights[0];
  const double var = w.squaredNorm() / static_cast<double>(w.size());
  CHECK(var == doctest::Approx(2.0 / 400.0).epsilon(0.02));
  CHECK(std::abs(w.mean()) < 5.0 * std::sqrt(2.0 / 400.0 / static_cast<double>(w.size())));
  CHECK(a.norm_scale.size() == 2);
  CHECK(a.running_var[0] == RowVector::Ones(300));
  const Network plain = init_network(make_config(4, 3, 2, NormKind::None, NormPlacement::Absent), 1);
  CHECK(plain.norm_scale.empty());
}

TEST_CASE("forward and propagate agree with a per-sample reference") {
  const Matrix x = gaussian(13, 6, 9);
  for (auto [k, p] : {std::pair{NormKind::None, NormPlacement::Absent},
                      {NormKind::LayerNorm, NormPlacement::PreActivation},
                      {NormKind::LayerNorm, NormPlacement::PostActivation},
                      {NormKind::RmsNorm, NormPlacement::PreActivation},
                      {NormKind::RmsNorm, NormPlacement::PostActivation}}) {
    auto cfg = make_config(6, 5, 3, k, p);
    cfg.num_classes = 3;
    cfg.epsilon = 1e-5;
    Network net = init_network(cfg, 2);
    if (net.has_norm()) {
      net.norm_scale[1].setConstant(1.7);
      net.norm_shift[2].setConstant(-0.2);
    }
    const Matrix ref = reference_forward(net, x);
    const auto t = forward(net, x, Mode::Train);
    CHECK((t.outputs - ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((propagate(net, x, Mode::Train) - ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t.pre.size() == 3);
    CHECK(t.post.size() == 3);
  }
}

TEST_CASE("batch norm modes") {
  auto cfg = make_config(4, 6, 2, NormKind::BatchNorm, NormPlacement::PreActivation);
  cfg.epsilon = 1e-5;
  cfg.bn_batch_size = 8;
  Network net = init_network(cfg, 3);
  const Matrix x = gaussian(8, 4, 1);
  const auto t = forward(net, x, Mode::Train);
  // Pre-activation BN normalizes every column of h over the batch.
  const Matrix& n0 = t.normed[0];
  CHECK(n0.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(forward(net, gaussian(5, 4, 2), Mode::Train), ShapeError);
  CHECK_NOTHROW(forward(net, gaussian(5, 4, 2), Mode::FullBatch));
  // Eval with running stats equal to the batch stats reproduces Train mode.
  for (std::size_t l = 0; l < 2; ++l) {
    net.running_mean[l] = t.norm[l].batch_mean;
    net.running_var[l] = t.norm[l].batch_var;
  }
  const Matrix eval = propagate(net, x, Mode::Eval);
  CHECK((eval - t.outputs).cwiseAbs().maxCoeff() < 1e-10);
  // Eval on one sample is per-sample and defined.
  CHECK_NOTHROW(propagate(net, x.topRows(1), Mode::Eval));
}

TEST_CASE("observer sees every pre-activation") {
  const auto cfg = make_config(3, 4, 2, NormKind::None, NormPlacement::Absent);
  const Network net = init_network(cfg, 1);
  const Matrix x = gaussian(5, 3, 2);
  std::vector<std::size_t> layers;
  const auto t = forward(net, x, Mode::Train);
  propagate(net, x, Mode::Train, [&](std::size_t l, const Matrix& h) {
    layers.push_back(l);
    const Matrix& expect = l <= 2 ? t.pre[l - 1] : t.outputs;
    CHECK(h == expect);
  });
  CHECK(layers == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("input checks") {
  const Network net = init_network(make_config(3, 2, 1, NormKind::None, NormPlacement::Absent), 1);
  CHECK_THROWS_AS(forward(net, Matrix::Zero(2, 4), Mode::Train), ShapeError);
  CHECK_THROWS_AS(forward(net, Matrix::Zero(0, 3), Mode::Train), ShapeError);
  Matrix bad = Matrix::Zero(2, 3);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(forward(net, bad, Mode::Train), NonFiniteError);
}

TEST_CASE("predict breaks ties toward the lowest index") {
  Matrix o(3, 3);
  o << 1.0, 1.0, 0.0,  //
      0.0, 2.0, 2.0,   //
      -1.0, -3.0, -0.5;
  CHECK(predict(o) == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(predict(Matrix::Zero(2, 1)), ShapeError);
}
