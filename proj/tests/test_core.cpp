#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "duet/nn.hpp"
#include "duet/ops.hpp"
#include "duet/rng.hpp"
#include "duet/serialize.hpp"
#include "duet/image.hpp"
#include "test_util.hpp"

#include <cstdio>
#include <filesystem>

using namespace duet;
namespace fs = std::filesystem;

namespace {
Tensor randn(std::vector<int> shape, Rng& rng, bool grad = true, double scale = 1.0) {
  return Tensor::from(shape, rng.normal_array(shape_size(shape)) * scale, grad);
}
}  // namespace

TEST_CASE("rng determinism and child streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
  Rng c1 = Rng(7).child(3), c2 = Rng(7).child(3), c3 = Rng(7).child(4);
  CHECK(c1.u64() == c2.u64());
  CHECK(c1.u64() != c3.u64());
}

TEST_CASE("rng normal moments") {
  Rng rng(1);
  ArrayX x = rng.normal_array(200000);
  CHECK(std::abs(x.mean()) < 0.01);
  CHECK(std::abs(x.square().mean() - 1.0) < 0.02);
}

TEST_CASE("elementwise op gradients") {
  Rng rng(5);
  auto check_unary = [&](const char* name, std::function<Tensor(const Tensor&)> op,
                         double scale = 1.0, double shift = 0.0) {
    CAPTURE(name);
    auto f = [&](const std::vector<Tensor>& v) { return ops::mean(op(v[0])); };
    Tensor x = Tensor::from({4, 5}, rng.normal_array(20) * scale + shift, true);
    auto res = testutil::grad_check(f, {x});
    CHECK(res.failed == 0);
  };
  check_unary("relu", [](const Tensor& x) { return ops::relu(x); });
  check_unary("gelu", [](const Tensor& x) { return ops::gelu(x); });
  check_unary("silu", [](const Tensor& x) { return ops::silu(x); });
  check_unary("sigmoid", [](const Tensor& x) { return ops::sigmoid(x); });
  check_unary("softplus", [](const Tensor& x) { return ops::softplus(x); });
  check_unary("tanh", [](const Tensor& x) { return ops::tanh_(x); });
  check_unary("exp", [](const Tensor& x) { return ops::exp_(x); });
  check_unary("square", [](const Tensor& x) { return ops::square(x); });
  check_unary("log", [](const Tensor& x) { return ops::log_(x); }, 0.3, 2.0);
  check_unary("sqrt", [](const Tensor& x) { return ops::sqrt_(x); }, 0.3, 2.0);

  auto f2 = [](const std::vector<Tensor>& v) {
    return ops::mean(ops::mul(ops::add(v[0], v[1]), ops::sub(v[0], v[1])));
  };
  auto res = testutil::grad_check(f2, {randn({3, 3}, rng), randn({3, 3}, rng)});
  CHECK(res.failed == 0);

  auto f3 = [](const std::vector<Tensor>& v) { return ops::mean(ops::div(v[0], v[1])); };
  Tensor num = randn({6}, rng);
  Tensor den = Tensor::from({6}, rng.normal_array(6) * 0.2 + 2.0, true);
  res = testutil::grad_check(f3, {num, den});
  CHECK(res.failed == 0);
}

TEST_CASE("matmul gradients incl. transposes") {
  Rng rng(7);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      CAPTURE(ta);
      CAPTURE(tb);
      Tensor a = randn(ta ? std::vector<int>{4, 3} : std::vector<int>{3, 4}, rng);
      Tensor b = randn(tb ? std::vector<int>{5, 4} : std::vector<int>{4, 5}, rng);
      auto f = [ta, tb](const std::vector<Tensor>& v) {
        return ops::mean(ops::square(ops::matmul(v[0], v[1], ta, tb)));
      };
      auto res = testutil::grad_check(f, {a, b});
      CHECK(res.failed == 0);
    }
}

TEST_CASE("softmax, layer_norm, bias gradients") {
  Rng rng(11);
  auto f = [](const std::vector<Tensor>& v) {
    return ops::mean(ops::mul(ops::row_softmax(v[0]), v[1]));
  };
  auto res = testutil::grad_check(f, {randn({3, 6}, rng), randn({3, 6}, rng, false)});
  CHECK(res.failed == 0);

  auto g = [](const std::vector<Tensor>& v) {
    return ops::mean(ops::square(ops::layer_norm(v[0], v[1], v[2])));
  };
  Tensor gamma = Tensor::from({5}, rng.normal_array(5) * 0.3 + 1.0, true);
  res = testutil::grad_check(g, {randn({4, 5}, rng), gamma, randn({5}, rng)});
  CHECK(res.failed == 0);

  auto h = [](const std::vector<Tensor>& v) {
    return ops::mean(ops::square(ops::add_rowvec(v[0], v[1])));
  };
  res = testutil::grad_check(h, {randn({4, 5}, rng), randn({5}, rng)});
  CHECK(res.failed == 0);
}

TEST_CASE("slice and concat gradients") {
  Rng rng(13);
  auto f = [](const std::vector<Tensor>& v) {
    Tensor c = ops::concat_cols({ops::slice_cols(v[0], 1, 2), v[1]});
    return ops::mean(ops::square(c));
  };
  auto res = testutil::grad_check(f, {randn({3, 5}, rng), randn({3, 2}, rng)});
  CHECK(res.failed == 0);

  auto g = [](const std::vector<Tensor>& v) {
    Tensor c = ops::concat_dim0({v[0], ops::slice_dim0(v[1], 1, 2)});
    return ops::mean(ops::square(c));
  };
  res = testutil::grad_check(g, {randn({2, 4}, rng), randn({4, 4}, rng)});
  CHECK(res.failed == 0);
}

TEST_CASE("conv2d forward matches direct convolution") {
  Rng rng(17);
  int ci = 2, co = 3, h = 6, w = 5, k = 3, stride = 2, pad = 1;
  Tensor x = randn({ci, h, w}, rng, false);
  Tensor wt = randn({co, ci, k, k}, rng, false);
  Tensor b = randn({co}, rng, false);
  Tensor y = ops::conv2d(x, wt, b, stride, pad);
  int ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
  REQUIRE(y.shape() == std::vector<int>({co, ho, wo}));
  for (int oc = 0; oc < co; ++oc)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double acc = b.value()[oc];
        for (int icc = 0; icc < ci; ++icc)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += x.value()[(icc * h + iy) * w + ix] *
                     wt.value()[((oc * ci + icc) * k + ky) * k + kx];
            }
        CHECK(y.value()[(oc * ho + oy) * wo + ox] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("conv2d, upsample, blur, crop gradients") {
  Rng rng(19);
  auto f = [](const std::vector<Tensor>& v) {
    return ops::mean(ops::square(ops::conv2d(v[0], v[1], v[2], 2, 1)));
  };
  auto res = testutil::grad_check(f, {randn({2, 5, 4}, rng), randn({3, 2, 3, 3}, rng),
                                      randn({3}, rng)});
  CHECK(res.failed == 0);

  auto g = [](const std::vector<Tensor>& v) {
    return ops::mean(ops::square(ops::upsample_nearest2(v[0])));
  };
  res = testutil::grad_check(g, {randn({2, 3, 3}, rng)});
  CHECK(res.failed == 0);

  ArrayX kernel(5);
  kernel << 0.1, 0.2, 0.4, 0.2, 0.1;
  auto h = [kernel](const std::vector<Tensor>& v) {
    return ops::mean(ops::square(ops::crop2d(ops::gaussian_blur2d(v[0], kernel), 1)));
  };
  res = testutil::grad_check(h, {randn({1, 6, 6}, rng)});
  CHECK(res.failed == 0);
}

TEST_CASE("grad accumulates across shared subexpressions") {
  Tensor x = Tensor::from({1}, ArrayX::Constant(1, 3.0), true);
  Tensor y = ops::mul(x, x);  // x^2, dy/dx = 6
  x.zero_grad();
  ops::sum(y).backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("adam reduces a quadratic") {
  Rng rng(23);
  Tensor x = randn({10}, rng);
  Adam opt({x}, 0.05);
  double first = 0;
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    Tensor loss = ops::sum_sq(x);
    if (i == 0) first = loss.item();
    loss.backward();
    opt.step();
  }
  CHECK(ops::sum_sq(x).item() < 1e-3 * first);
}

TEST_CASE("adam snapshot/restore is exact") {
  Rng rng(29);
  Tensor x = randn({4}, rng);
  Adam opt({x}, 0.1);
  for (int i = 0; i < 3; ++i) {
    opt.zero_grad();
    ops::sum_sq(x).backward();
    opt.step();
  }
  auto snap = opt.snapshot();
  ArrayX v0 = x.value();
  for (int i = 0; i < 3; ++i) {
    opt.zero_grad();
    ops::sum_sq(x).backward();
    opt.step();
  }
  ArrayX after1 = x.value();
  opt.restore(snap);
  CHECK((x.value() == v0).all());
  for (int i = 0; i < 3; ++i) {
    opt.zero_grad();
    ops::sum_sq(x).backward();
    opt.step();
  }
  CHECK((x.value() == after1).all());
}

TEST_CASE("archive round trip") {
  fs::path dir = fs::temp_directory_path() / "duet_test_archive";
  fs::create_directories(dir);
  std::string path = (dir / "t.duet").string();

  Rng rng(31);
  ArrayX a = rng.normal_array(12);
  ArrayX b = rng.normal_array(6);
  std::vector<int32_t> idx = {1, 2, 3, -4};

  ArchiveWriter w;
  w.set_meta({{"kind", "test"}, {"version", 2}});
  w.add_f64("a", {3, 4}, a);
  w.add_f32("b", {6}, b);
  w.add_i32("idx", {4}, idx);
  w.save(path);

  ArchiveReader r(path);
  CHECK(r.meta().at("kind") == "test");
  CHECK(r.shape("a") == std::vector<int64_t>({3, 4}));
  CHECK((r.get_floats("a") == a).all());  // f64 is bit-exact
  ArrayX b2 = r.get_floats("b");
  for (int i = 0; i < 6; ++i) CHECK(b2[i] == f32_round(b[i]));
  CHECK(r.get_i32("idx") == idx);
  CHECK_THROWS(r.get_floats("missing"));
}

TEST_CASE("f32 blob round trip is exact at f32 precision") {
  fs::path dir = fs::temp_directory_path() / "duet_test_blob";
  fs::create_directories(dir);
  std::string path = (dir / "x.bin").string();
  Rng rng(37);
  ArrayX a = f32_round(rng.normal_array(100));
  write_f32_blob(path, a);
  ArrayX b = read_f32_blob(path, 100);
  CHECK((a == b).all());
  CHECK_THROWS(read_f32_blob(path, 99));
}

TEST_CASE("png round trip") {
  fs::path dir = fs::temp_directory_path() / "duet_test_png";
  fs::create_directories(dir);
  Image8 img;
  img.width = 17;
  img.height = 9;
  img.channels = 3;
  img.pixels.resize(17 * 9 * 3);
  Rng rng(41);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.u64() % 256);
  std::string path = (dir / "t.png").string();
  write_png(path, img);
  Image8 back = read_png(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.channels == 3);
  CHECK(back.pixels == img.pixels);

  ArrayX planar = image_to_planar(img);
  Image8 again = planar_to_image(planar, 3, img.height, img.width);
  CHECK(again.pixels == img.pixels);
}

TEST_CASE("sinusoidal embedding shape and range") {
  ArrayX e = sinusoidal_embedding({0.0, 1.0, 2.0}, 8);
  CHECK(e.size() == 24);
  CHECK(e.abs().maxCoeff() <= 1.0 + 1e-12);
  // position 0: all sines are 0, all cosines are 1
  for (int k = 0; k < 4; ++k) {
    CHECK(e[k] == 0.0);
    CHECK(e[4 + k] == 1.0);
  }
}
