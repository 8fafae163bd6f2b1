#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "facecap/autodiff/adam.hpp"
#include "facecap/autodiff/checkpoint.hpp"
#include "facecap/autodiff/ops.hpp"
#include "gradcheck.hpp"

using namespace facecap;
using namespace facecap::ad;
using testing::random_tensor;

TEST_CASE("matmul with identity") {
  std::mt19937_64 rng(41);
  Tape<double> t;
  const auto x = random_tensor(3, 4, rng);
  Tensor<double> eye(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  CHECK(matmul(t.constant(eye), t.constant(x)).value() == x);
}

TEST_CASE("softmax of a constant row is uniform") {
  Tape<double> t;
  const auto y = softmax(t.constant(Tensor<double>(2, 5, 3.0)), 1).value();
  for (double v : y.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  const auto big = softmax(t.constant(Tensor<double>({1, 3}, {1000.0, 1000.0, 0.0})), 1).value();
  CHECK(big.data[0] == doctest::Approx(0.5));
  CHECK(std::isfinite(big.data[2]));
}

TEST_CASE("layer_norm statistics") {
  std::mt19937_64 rng(42);
  Tape<double> t;
  const auto x = random_tensor(6, 16, rng, 10.0);
  const auto y = layer_norm(t.constant(x), t.constant(Tensor<double>(1, 16, 1.0)),
                            t.constant(Tensor<double>(1, 16, 0.0)))
                     .value();
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 16; ++c) m += y.at(r, c);
    m /= 16;
    for (std::size_t c = 0; c < 16; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m);
    v /= 16;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1.0) < 1e-6);
  }
}

TEST_CASE("gelu and relu values") {
  Tape<double> t;
  const auto x = t.constant(Tensor<double>({1, 3}, {-1.0, 0.0, 2.0}));
  const auto g = gelu(x).value();
  CHECK(g.data[0] == doctest::Approx(-1.0 * 0.5 * (1.0 + std::erf(-1.0 / std::sqrt(2.0)))));
  CHECK(g.data[1] == 0.0);
  const auto r = relu(x).value();
  CHECK(r.data == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("simple gradients") {
  std::mt19937_64 rng(43);
  const auto xv = random_tensor(3, 4, rng);
  const auto yv = random_tensor(3, 4, rng);
  Tape<double> t;
  const auto x = t.variable(xv);
  t.backward(sum(x));
  for (double g : t.grad(x).data) CHECK(g == 1.0);

  Tape<double> t2;
  const auto a = t2.variable(xv);
  const auto b = t2.variable(yv);
  t2.backward(sum(mul(a, b)));
  CHECK(t2.grad(a) == yv);
  CHECK(t2.grad(b) == xv);
}

TEST_CASE("every primitive passes a finite-difference check") {
  for (const auto& pc : testing::primitive_cases()) {
    CAPTURE(pc.name);
    std::mt19937_64 rng(44);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      worst = std::max(worst, testing::gradcheck(pc.inputs(rng), pc.loss));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("three-layer MLP gradients") {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Tensor<double>> in{random_tensor(4, 5, rng), random_tensor(5, 7, rng),
                                   random_tensor(1, 7, rng), random_tensor(7, 6, rng),
                                   random_tensor(1, 6, rng), random_tensor(6, 2, rng),
                                   random_tensor(1, 2, rng)};
    const double err = testing::gradcheck(in, [](Tape<double>& t, const std::vector<Var<double>>& v) {
      auto h = gelu(linear(v[0], v[1], v[2]));
      h = gelu(linear(h, v[3], v[4]));
      return testing::weighted_sum(t, linear(h, v[5], v[6]), 3);
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("toy denoiser end-to-end gradient") {
  CHECK(testing::denoiser_gradcheck(1) < 1e-3);
}

TEST_CASE("shape errors name both shapes") {
  Tape<double> t;
  const auto a = t.constant(Tensor<double>(2, 3));
  const auto b = t.constant(Tensor<double>(4, 5));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[4x5]"), ShapeError);
  CHECK_THROWS_AS(mul(a, b), ShapeError);
  CHECK_THROWS_AS(slice(a, 1, 2, 2), ShapeError);
  CHECK_THROWS_AS(concat<double>({a, b}, 0), ShapeError);
  CHECK_THROWS_AS(t.backward(a), ShapeError);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("parameter gradients accumulate until cleared") {
  Parameter<double> p("w", Tensor<double>({1, 2}, {1.0, 2.0}));
  for (int i = 0; i < 2; ++i) {
    Tape<double> t;
    t.backward(sum(scale(t.parameter(p), 3.0)));
  }
  CHECK(p.grad.data == std::vector<double>{6.0, 6.0});
  p.zero_grad();
  CHECK(p.grad.data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("float instantiation") {
  Tape<float> t;
  const auto x = t.variable(Tensor<float>({1, 3}, {1.0f, -2.0f, 3.0f}));
  const auto y = sum(mul(x, x));
  t.backward(y);
  CHECK(y.value().data[0] == 14.0f);
  CHECK(t.grad(x).data == std::vector<float>{2.0f, -4.0f, 6.0f});
}

TEST_CASE("adam leaves parameters alone on zero gradient") {
  Parameter<double> p("w", Tensor<double>({1, 3}, {1.0, 2.0, 3.0}));
  p.zero_grad();
  AdamState<double> adam;
  std::vector<Parameter<double>*> ps{&p};
  adam.step(ps);
  CHECK(p.value.data == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("adam first step is lr times sign") {
  Parameter<double> p("w", Tensor<double>({1, 4}, {0.5, -0.5, 1.0, 0.0}));
  p.grad = Tensor<double>({1, 4}, {0.3, -2.0, 1e-3, -5.0});
  AdamState<double> adam({1e-2, 0.9, 0.999, 1e-8});
  std::vector<Parameter<double>*> ps{&p};
  adam.step(ps);
  const std::vector<double> expect{0.5 - 1e-2, -0.5 + 1e-2, 1.0 - 1e-2, 0.0 + 1e-2};
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(p.value.data[i] - expect[i]) < 1e-6);
  CHECK(adam.steps() == 1);
}

TEST_CASE("adam matches a scripted two-step trace") {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Parameter<double> p("w", Tensor<double>({1, 2}, {1.0, -1.0}));
  AdamState<double> adam({lr, b1, b2, eps});
  std::vector<Parameter<double>*> ps{&p};
  const std::vector<std::vector<double>> grads{{0.5, -0.25}, {0.5, -0.25}};
  std::vector<double> theta{1.0, -1.0}, m(2, 0.0), v(2, 0.0);
  for (int step = 1; step <= 2; ++step) {
    p.grad = Tensor<double>({1, 2}, grads[step - 1]);
    adam.step(ps);
    for (std::size_t i = 0; i < 2; ++i) {
      const double g = grads[step - 1][i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - std::pow(b1, step));
      const double vh = v[i] / (1 - std::pow(b2, step));
      theta[i] -= lr * mh / (std::sqrt(vh) + eps);
      CHECK(std::abs(p.value.data[i] - theta[i]) < 1e-12);
    }
  }
  CHECK(adam.first_moments()[0].data[0] == doctest::Approx(m[0]));
  CHECK(adam.second_moments()[0].data[1] == doctest::Approx(v[1]));

  std::vector<Tensor<double>> g2{Tensor<double>({1, 2}, {0.5, -0.25})};
  Parameter<double> q("w", Tensor<double>({1, 2}, {1.0, -1.0}));
  AdamState<double> explicit_adam({lr, b1, b2, eps});
  std::vector<Parameter<double>*> qs{&q};
  explicit_adam.step(qs, g2);
  explicit_adam.step(qs, g2);
  CHECK(q.value == p.value);

  Parameter<double> wrong("w", Tensor<double>({2, 2}, {0, 0, 0, 0}));
  std::vector<Parameter<double>*> ws{&wrong};
  wrong.zero_grad();
  CHECK_THROWS_AS(adam.step(ws), ShapeError);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(46);
  Parameter<double> a("block0.w", random_tensor(3, 4, rng));
  Parameter<float> b("f", Tensor<float>({1, 2}, {1.5f, -2.25f}));
  Checkpoint ck;
  ck.put(a);
  ck.put(b);
  ck.put_bytes("meta", "{\"k\": 1}");
  const auto bytes = serialize_checkpoint(ck);
  CHECK(bytes.substr(0, 4) == "IMFD");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(static_cast<unsigned char>(bytes[8]) == 3);
  // header 12 + f64 entry (4 + 8 + 1 + 4 + 16 + 96) + f32 entry (4 + 1 + 1 + 4 + 16 + 8)
  // + bytes entry (4 + 4 + 1 + 4 + 8 + 8)
  CHECK(bytes.size() == 12 + 129 + 34 + 29);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.entries == ck.entries);
  Parameter<double> a2("block0.w", Tensor<double>(3, 4));
  back.get(a2);
  CHECK(a2.value == a.value);
  CHECK(back.get_bytes("meta") == "{\"k\": 1}");

  Parameter<double> wrong("block0.w", Tensor<double>(4, 3));
  CHECK_THROWS_AS(back.get(wrong), FormatError);
  Parameter<double> missing("nope", Tensor<double>(1, 1));
  CHECK_THROWS_AS(back.get(missing), FormatError);

  CHECK_THROWS_AS(deserialize_checkpoint("IMFX"), FormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), IoError);

  const auto path = std::filesystem::temp_directory_path() / "facecap_test.ckpt";
  save_checkpoint(path, ck);
  CHECK(load_checkpoint(path).entries == ck.entries);
  std::filesystem::remove(path);
}
