#include <doctest.h>

#include <cmath>

#include "dagankit/gradcheck.hpp"
#include "dagankit/rng.hpp"
#include "dagankit/tensor.hpp"

using namespace dagankit;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_count(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("elementwise forward examples") {
  Tensor a({2}, {1, 2});
  Tensor b({2}, {3, 4});
  Tensor r = add(a, b);
  CHECK(r.at(0) == 4.0);
  CHECK(r.at(1) == 6.0);

  CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5).epsilon(1e-15));

  Tensor big = sub(a, Tensor::scalar(1.0));  // scalar broadcast
  CHECK(big.at(0) == 0.0);
  CHECK(big.at(1) == 1.0);

  CHECK_THROWS_AS(add(Tensor({2}, {1, 2}), Tensor({3}, {1, 2, 3})), ShapeError);
  // Both shapes appear in the report.
  try {
    add(Tensor({2}, {1, 2}), Tensor({3}, {1, 2, 3}));
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2]") != std::string::npos);
    CHECK(msg.find("[3]") != std::string::npos);
  }
}

TEST_CASE("abs gradient is the piecewise sign") {
  Tape tape;
  Tensor x = tape.leaf({2}, {1.5, -2.0});
  Tensor loss = sum(abs(x));
  auto grads = tape.backward(loss);
  CHECK(grads[x.node()].at(0) == 1.0);
  CHECK(grads[x.node()].at(1) == -1.0);
}

TEST_CASE("matmul examples") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(eye, m);
  for (int i = 0; i < 4; ++i) CHECK(r.at(i) == m.at(i));

  Tensor row({1, 2}, {1, 2});
  Tensor col({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == 11.0);

  CHECK_THROWS_AS(matmul(Tensor({2, 3}, std::vector<double>(6, 1.0)),
                         Tensor({2, 3}, std::vector<double>(6, 1.0))),
                  ShapeError);
}

TEST_CASE("matmul matches central differences") {
  Rng rng(7);
  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {4, 2});
  auto fn = [](Tape&, const std::vector<Tensor>& xs) {
    return sum(matmul(xs[0], xs[1]));
  };
  auto report = finite_diff_check("matmul", fn, {a, b}, 1e-5);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("conv2d forward examples") {
  // 1x1 kernel of value 2 doubles the input.
  Rng rng(3);
  Tensor img = random_tensor(rng, {1, 4, 4}, 0.0, 1.0);
  Tensor k2({1, 1, 1, 1}, {2.0});
  Tensor doubled = conv2d(img, k2, 1, 0);
  for (int i = 0; i < img.count(); ++i) {
    CHECK(doubled.at(i) == doctest::Approx(2.0 * img.at(i)).epsilon(1e-15));
  }

  // 3x3 all-ones kernel on a constant image gives 9c everywhere (pad 0).
  Tensor c = Tensor::full({1, 5, 5}, 0.7);
  Tensor ones({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  Tensor r = conv2d(c, ones, 1, 0);
  CHECK(r.shape() == Shape{1, 3, 3});
  for (int i = 0; i < r.count(); ++i) CHECK(r.at(i) == doctest::Approx(9 * 0.7).epsilon(1e-14));

  // Output extent formula and zero-extent rejection.
  CHECK(conv2d(c, ones, 2, 1).shape() == Shape{1, 3, 3});
  Tensor small = Tensor::full({1, 2, 2}, 1.0);
  CHECK_THROWS_AS(conv2d(small, ones, 1, 0), ShapeError);
}

TEST_CASE("conv2d matches central differences") {
  Rng rng(11);
  Tensor img = random_tensor(rng, {1, 2, 6, 6});
  Tensor ker = random_tensor(rng, {2, 2, 3, 3});
  auto fn = [](Tape&, const std::vector<Tensor>& xs) {
    return sum(conv2d(xs[0], xs[1], 1, 1));
  };
  auto report = finite_diff_check("conv2d", fn, {img, ker}, 1e-5);
  CHECK(report.max_rel_err < 1e-6);

  auto fn2 = [](Tape&, const std::vector<Tensor>& xs) {
    return mean(conv2d(xs[0], xs[1], 2, 1));
  };
  auto report2 = finite_diff_check("conv2d_s2", fn2, {img, ker}, 1e-5);
  CHECK(report2.max_rel_err < 1e-6);
}

TEST_CASE("softmax examples") {
  Tensor u = softmax(Tensor({3}, {0, 0, 0}), 0);
  for (int i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-15));

  Tensor s = softmax(Tensor({2}, {1000, 0}), 0);
  CHECK(s.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.at(1) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor t = softmax(Tensor({2}, {std::log(2.0), 0.0}), 0);
  CHECK(t.at(0) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(t.at(1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and stay positive") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor(rng, {4, 6}, -30.0, 30.0);
    Tensor y = softmax(x, 1);
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int c = 0; c < 6; ++c) {
        CHECK(y.at(r * 6 + c) > 0.0);
        s += y.at(r * 6 + c);
      }
      CHECK(std::fabs(s - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("grid_sample identity, center, clamp") {
  Rng rng(17);
  Tensor img = random_tensor(rng, {2, 4, 4}, 0.0, 1.0);
  Tensor grid = identity_grid(4, 4);
  Tensor out = grid_sample_bilinear(img, grid);
  for (int i = 0; i < img.count(); ++i) {
    CHECK(std::fabs(out.at(i) - img.at(i)) < 1e-12);
  }

  Tensor quad({1, 2, 2}, {0, 1, 2, 3});
  Tensor center({1, 1, 2}, {0.0, 0.0});
  CHECK(grid_sample_bilinear(quad, center).item() == doctest::Approx(1.5).epsilon(1e-15));

  Tensor far({1, 1, 2}, {-5.0, -5.0});
  CHECK(grid_sample_bilinear(quad, far).item() == 0.0);
}

TEST_CASE("resample examples") {
  Tensor m({1, 2, 2}, {1, 3, 5, 7});
  Tensor pooled = resample(m, 2, ResampleMode::AveragePoolDown);
  CHECK(pooled.shape() == Shape{1, 1, 1});
  CHECK(pooled.item() == 4.0);

  Tensor c = Tensor::full({1, 4, 4}, 0.3);
  Tensor down = resample(c, 2, ResampleMode::AveragePoolDown);
  for (int i = 0; i < down.count(); ++i) CHECK(down.at(i) == 0.3);
  Tensor up = resample(down, 2, ResampleMode::BilinearUp);
  CHECK(up.shape() == Shape{1, 4, 4});
  for (int i = 0; i < up.count(); ++i) CHECK(up.at(i) == 0.3);

  CHECK_THROWS_AS(avg_pool(Tensor::full({1, 3, 3}, 1.0), 2), ShapeError);
}

TEST_CASE("backward basics") {
  Rng rng(23);
  {
    Tape tape;
    Tensor x = tape.leaf(random_tensor(rng, {2, 3}));
    auto grads = tape.backward(sum(x));
    for (int i = 0; i < 6; ++i) CHECK(grads[x.node()].at(i) == 1.0);
  }
  {
    Tape tape;
    Tensor x = tape.leaf(random_tensor(rng, {5}));
    Tensor loss = scale(sum(mul(x, x)), 0.5);
    auto grads = tape.backward(loss);
    for (int i = 0; i < 5; ++i) {
      CHECK(grads[x.node()].at(i) == doctest::Approx(x.at(i)).epsilon(1e-14));
    }
  }
  {
    // Branching graph: x feeds two consumers, both contributions accumulate.
    Tensor x0 = random_tensor(rng, {4}, 0.2, 1.0);
    auto fn = [](Tape&, const std::vector<Tensor>& xs) {
      Tensor a = sigmoid(xs[0]);
      Tensor b = mul(xs[0], xs[0]);
      return add(sum(a), sum(b));
    };
    auto report = finite_diff_check("branching", fn, {x0}, 1e-5);
    CHECK(report.max_rel_err < 1e-6);
  }
  {
    Tape tape;
    Tensor x = tape.leaf(random_tensor(rng, {3}));
    CHECK_THROWS_AS(tape.backward(mul(x, x)), ShapeError);
  }
  {
    // Unreachable leaves get zero gradients.
    Tape tape;
    Tensor x = tape.leaf(random_tensor(rng, {3}));
    Tensor y = tape.leaf(random_tensor(rng, {3}));
    auto grads = tape.backward(sum(x));
    for (int i = 0; i < 3; ++i) CHECK(grads[y.node()].at(i) == 0.0);
  }
}

TEST_CASE("finite_diff_check calibration") {
  Rng rng(31);
  auto linear = [](Tape&, const std::vector<Tensor>& xs) { return sum(scale(xs[0], 3.0)); };
  auto rep = finite_diff_check("linear", linear, {random_tensor(rng, {6})}, 1e-5);
  CHECK(rep.max_rel_err < 1e-9);

  auto sig = [](Tape&, const std::vector<Tensor>& xs) { return sum(sigmoid(xs[0])); };
  auto rep2 = finite_diff_check("sigmoid", sig, {random_tensor(rng, {8})}, 1e-5);
  CHECK(rep2.max_rel_err < 1e-6);

  // Coordinate gradients away from integer grid lines.
  Tensor img = random_tensor(rng, {1, 5, 5}, 0.0, 1.0);
  std::vector<double> cv;
  for (int i = 0; i < 4; ++i) {
    cv.push_back(rng.uniform(-0.8, 0.8) + 0.013);
    cv.push_back(rng.uniform(-0.8, 0.8) + 0.017);
  }
  Tensor coords({2, 2, 2}, cv);
  auto warp = [&](Tape&, const std::vector<Tensor>& xs) {
    return sum(grid_sample_bilinear(xs[0], xs[1]));
  };
  auto rep3 = finite_diff_check("grid_sample", warp, {img, coords}, 1e-5);
  CHECK(rep3.max_rel_err < 1e-4);

  // A corrupted backward should be detected by the oracle. The broken op
  // reuses relu's forward but reports half the true gradient.
  auto broken = [](Tape& tape, const std::vector<Tensor>& xs) {
    const Tensor& x = xs[0];
    std::vector<double> out(x.count());
    for (int i = 0; i < x.count(); ++i) out[i] = x.at(i) > 0 ? x.at(i) : 0.0;
    Tensor fwd(x.shape(), out);
    if (!x.tracked()) return sum(fwd);
    Tensor y = relu(x);
    Tensor half = scale(y, 0.5);  // wrong path: gradient off by 2x
    Tape* tp = &tape;
    (void)tp;
    return sum(half);
  };
  auto rep4 = finite_diff_check("broken", broken, {random_tensor(rng, {4}, 0.5, 1.0)}, 1e-5);
  CHECK(!rep4.pass(1e-4));
}

TEST_CASE("every differentiable primitive passes the oracle on random inputs") {
  struct Case {
    const char* name;
    ScalarFn fn;
    int inputs;
    double lo, hi;
  };
  std::vector<Case> cases = {
      {"add", [](Tape&, const std::vector<Tensor>& x) { return sum(add(x[0], x[1])); }, 2, -1, 1},
      {"sub", [](Tape&, const std::vector<Tensor>& x) { return sum(sub(x[0], x[1])); }, 2, -1, 1},
      {"mul", [](Tape&, const std::vector<Tensor>& x) { return sum(mul(x[0], x[1])); }, 2, -1, 1},
      {"div", [](Tape&, const std::vector<Tensor>& x) { return sum(div(x[0], x[1])); }, 2, 0.5, 2},
      {"neg", [](Tape&, const std::vector<Tensor>& x) { return sum(neg(x[0])); }, 1, -1, 1},
      {"abs", [](Tape&, const std::vector<Tensor>& x) { return sum(abs(x[0])); }, 1, 0.1, 1},
      {"relu", [](Tape&, const std::vector<Tensor>& x) { return sum(relu(x[0])); }, 1, 0.1, 1},
      {"leaky_relu",
       [](Tape&, const std::vector<Tensor>& x) { return sum(leaky_relu(x[0], 0.2)); }, 1, 0.1, 1},
      {"sigmoid", [](Tape&, const std::vector<Tensor>& x) { return sum(sigmoid(x[0])); }, 1, -2,
       2},
      {"softplus", [](Tape&, const std::vector<Tensor>& x) { return sum(softplus(x[0])); }, 1, -2,
       2},
      {"exp", [](Tape&, const std::vector<Tensor>& x) { return sum(exp(x[0])); }, 1, -1, 1},
      {"log", [](Tape&, const std::vector<Tensor>& x) { return sum(log(x[0])); }, 1, 0.5, 2},
      {"sqrt", [](Tape&, const std::vector<Tensor>& x) { return sum(sqrt(x[0])); }, 1, 0.5, 2},
      {"sin", [](Tape&, const std::vector<Tensor>& x) { return sum(sin(x[0])); }, 1, -1, 1},
      {"cos", [](Tape&, const std::vector<Tensor>& x) { return sum(cos(x[0])); }, 1, -1, 1},
      {"scale", [](Tape&, const std::vector<Tensor>& x) { return sum(scale(x[0], -1.7)); }, 1, -1,
       1},
      {"add_scalar",
       [](Tape&, const std::vector<Tensor>& x) { return sum(add_scalar(x[0], 0.3)); }, 1, -1, 1},
      {"softmax", [](Tape&, const std::vector<Tensor>& x) { return sum(mul(softmax(x[0], 0), x[1])); },
       2, -1, 1},
      {"mean", [](Tape&, const std::vector<Tensor>& x) { return mean(mul(x[0], x[0])); }, 1, -1,
       1},
  };
  Rng rng(101);
  for (const auto& c : cases) {
    CAPTURE(c.name);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Tensor> inputs;
      for (int i = 0; i < c.inputs; ++i) inputs.push_back(random_tensor(rng, {6}, c.lo, c.hi));
      auto rep = finite_diff_check(c.name, c.fn, inputs, 1e-5);
      CHECK(rep.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("shape surgery primitives pass the oracle") {
  Rng rng(202);
  auto cat = [](Tape&, const std::vector<Tensor>& x) {
    return sum(mul(concat({x[0], x[1]}), concat({x[1], x[0]})));
  };
  CHECK(finite_diff_check("concat", cat, {random_tensor(rng, {3}), random_tensor(rng, {3})}, 1e-5)
            .max_rel_err < 1e-6);

  auto tk = [](Tape&, const std::vector<Tensor>& x) {
    return sum(mul(take(x[0], 1, 3), take(x[0], 2, 3)));
  };
  CHECK(finite_diff_check("take", tk, {random_tensor(rng, {6})}, 1e-5).max_rel_err < 1e-6);

  auto cr = [](Tape&, const std::vector<Tensor>& x) {
    return sum(mul(crop(x[0], 1, 1, 2, 2), crop(x[0], 0, 0, 2, 2)));
  };
  CHECK(finite_diff_check("crop", cr, {random_tensor(rng, {2, 4, 4})}, 1e-5).max_rel_err < 1e-6);

  auto tile = [](Tape&, const std::vector<Tensor>& x) {
    return sum(mul(tile_channels(x[0], 3), x[1]));
  };
  CHECK(finite_diff_check("tile_channels", tile,
                          {random_tensor(rng, {1, 2, 2}), random_tensor(rng, {3, 2, 2})}, 1e-5)
            .max_rel_err < 1e-6);

  auto il = [](Tape&, const std::vector<Tensor>& x) {
    return sum(mul(interleave2(x[0], x[1]), interleave2(x[1], x[0])));
  };
  CHECK(finite_diff_check("interleave2", il, {random_tensor(rng, {4}), random_tensor(rng, {4})},
                          1e-5)
            .max_rel_err < 1e-6);

  auto st = [](Tape&, const std::vector<Tensor>& x) {
    std::vector<Tensor> parts;
    for (int i = 0; i < 4; ++i) parts.push_back(take(x[0], i, 1));
    Tensor m = stack_scalars(parts, {2, 2});
    return sum(matmul(m, m));
  };
  CHECK(finite_diff_check("stack_scalars", st, {random_tensor(rng, {4})}, 1e-5).max_rel_err <
        1e-6);

  auto rs = [](Tape&, const std::vector<Tensor>& x) {
    return sum(mul(reshape(x[0], {2, 3}), reshape(x[1], {2, 3})));
  };
  CHECK(finite_diff_check("reshape", rs, {random_tensor(rng, {6}), random_tensor(rng, {6})}, 1e-5)
            .max_rel_err < 1e-6);

  auto tr = [](Tape&, const std::vector<Tensor>& x) {
    return sum(mul(transpose(x[0]), x[1]));
  };
  CHECK(finite_diff_check("transpose", tr, {random_tensor(rng, {2, 3}), random_tensor(rng, {3, 2})},
                          1e-5)
            .max_rel_err < 1e-6);
}

TEST_CASE("spatial primitives pass the oracle") {
  Rng rng(303);
  auto pool = [](Tape&, const std::vector<Tensor>& x) { return mean(avg_pool(x[0], 2)); };
  CHECK(finite_diff_check("avg_pool", pool, {random_tensor(rng, {2, 4, 4})}, 1e-5).max_rel_err <
        1e-6);

  auto up = [](Tape&, const std::vector<Tensor>& x) {
    return mean(mul(upsample_bilinear(x[0], 2), x[1]));
  };
  CHECK(finite_diff_check("upsample", up,
                          {random_tensor(rng, {1, 3, 3}), random_tensor(rng, {1, 6, 6})}, 1e-5)
            .max_rel_err < 1e-6);

  auto bf = [](Tape&, const std::vector<Tensor>& x) {
    return mean(mul(box_filter(x[0], 3), box_filter(x[0], 3)));
  };
  CHECK(finite_diff_check("box_filter", bf, {random_tensor(rng, {1, 5, 5})}, 1e-5).max_rel_err <
        1e-6);

  auto ba = [](Tape&, const std::vector<Tensor>& x) {
    return mean(mul(bias_add(x[0], x[1]), bias_add(x[0], x[1])));
  };
  CHECK(finite_diff_check("bias_add", ba,
                          {random_tensor(rng, {2, 3, 3}), random_tensor(rng, {2})}, 1e-5)
            .max_rel_err < 1e-6);

  auto sm = [](Tape&, const std::vector<Tensor>& x) {
    return sum(mul(spatial_mean(x[0]), x[1]));
  };
  CHECK(finite_diff_check("spatial_mean", sm,
                          {random_tensor(rng, {3, 4, 4}), random_tensor(rng, {3})}, 1e-5)
            .max_rel_err < 1e-6);

  // Image gradients through the sampler, coords held fixed.
  Tensor coords({2, 2, 2}, {-0.41, -0.33, 0.27, -0.11, 0.13, 0.52, 0.61, 0.37});
  auto gs = [&](Tape&, const std::vector<Tensor>& x) {
    return sum(grid_sample_bilinear(x[0], coords));
  };
  CHECK(finite_diff_check("grid_sample_image", gs, {random_tensor(rng, {2, 5, 5})}, 1e-5)
            .max_rel_err < 1e-6);
}

TEST_CASE("tensors reject non-finite values and bad shapes") {
  CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), NumericError);
  CHECK_THROWS_AS(Tensor({2}, {1.0}), ShapeError);
  CHECK_THROWS_AS(Tensor({1, 2, 3, 4, 5}, std::vector<double>(120, 0.0)), ShapeError);
  CHECK_THROWS_AS(div(Tensor::scalar(1.0), Tensor::scalar(0.0)), NumericError);
  CHECK_THROWS_AS(exp(Tensor::scalar(1000.0)), NumericError);
}

TEST_CASE("graph replay is bitwise deterministic") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tape tape;
    Tensor x = tape.leaf(random_tensor(rng, {2, 8, 8}));
    Tensor k = tape.leaf(random_tensor(rng, {3, 2, 3, 3}));
    Tensor y = conv2d(sigmoid(x), k, 2, 1);
    Tensor loss = mean(mul(y, y));
    auto grads = tape.backward(loss);
    std::vector<double> out = grads[x.node()].values();
    out.push_back(loss.item());
    return out;
  };
  auto a = run(99);
  auto b = run(99);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
