#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "edcflow/common.hpp"
#include "edcflow/kernels.hpp"
#include "edcflow/parallel.hpp"

using namespace edcflow;

namespace {

template <typename T>
std::vector<T> random_vec(size_t n, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return v;
}

template <typename T>
void check_close(T a, T b, double tol) {
  double scale = std::max({1.0, std::abs(static_cast<double>(a)), std::abs(static_cast<double>(b))});
  CHECK(std::abs(static_cast<double>(a) - static_cast<double>(b)) <= tol * scale);
}

template <typename T>
void equivalence_suite(double tol) {
  if (!kern::supported(kern::Isa::avx2)) return;
  const auto& scalar = kern::table_for<T>(kern::Isa::scalar);
  const auto& simd = kern::table_for<T>(kern::Isa::avx2);
  Rng rng(7);
  // odd lengths exercise the vector tails
  for (size_t n : {size_t(1), size_t(3), size_t(8), size_t(17), size_t(64), size_t(255), size_t(1024), size_t(4097)}) {
    auto a = random_vec<T>(n, rng);
    auto b = random_vec<T>(n, rng);
    check_close(scalar.dot(a.data(), b.data(), n), simd.dot(a.data(), b.data(), n), tol);
    check_close(scalar.sum(a.data(), n), simd.sum(a.data(), n), tol);
    check_close(scalar.sumsq(a.data(), n), simd.sumsq(a.data(), n), tol);

    auto y1 = b, y2 = b;
    scalar.axpy(T(0.37), a.data(), y1.data(), n);
    simd.axpy(T(0.37), a.data(), y2.data(), n);
    for (size_t i = 0; i < n; ++i) check_close(y1[i], y2[i], tol);

    auto o1 = random_vec<T>(n, rng), o2 = o1;
    scalar.vadd(a.data(), b.data(), o1.data(), n);
    simd.vadd(a.data(), b.data(), o2.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(o1[i] == o2[i]);
    scalar.vsub(a.data(), b.data(), o1.data(), n);
    simd.vsub(a.data(), b.data(), o2.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(o1[i] == o2[i]);
    scalar.vmul(a.data(), b.data(), o1.data(), n);
    simd.vmul(a.data(), b.data(), o2.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(o1[i] == o2[i]);

    auto s1 = a, s2 = a;
    scalar.scale(T(-1.25), s1.data(), n);
    simd.scale(T(-1.25), s2.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(s1[i] == s2[i]);
  }

  // accumulating matrix product over odd shapes, row-major and transposed
  // weight layouts
  for (auto [m, k, p] : std::vector<std::array<size_t, 3>>{
           {1, 1, 1}, {3, 5, 7}, {4, 16, 16}, {5, 9, 33}, {8, 17, 40}, {13, 30, 129}}) {
    auto wbuf = random_vec<T>(m * k, rng);
    auto cbuf = random_vec<T>(k * p, rng);
    auto base = random_vec<T>(m * p, rng);
    for (auto [rs, ks] : std::vector<std::pair<size_t, size_t>>{{k, size_t(1)}, {size_t(1), m}}) {
      // with (rs=1, ks=m) the weight matrix is read transposed: m and k swap
      const size_t rows = rs == k ? m : k;
      const size_t red = rs == k ? k : m;
      auto cb = random_vec<T>(red * p, rng);
      auto ob = random_vec<T>(rows * p, rng);
      auto o1 = ob, o2 = ob;
      scalar.gemm_acc(wbuf.data(), rs, ks, cb.data(), rows, red, p, o1.data());
      simd.gemm_acc(wbuf.data(), rs, ks, cb.data(), rows, red, p, o2.data());
      for (size_t i = 0; i < o1.size(); ++i) check_close(o1[i], o2[i], tol * 10);
      // reference triple loop
      auto o3 = ob;
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < red; ++j)
          for (size_t x = 0; x < p; ++x) o3[i * p + x] += wbuf[i * rs + j * ks] * cb[j * p + x];
      for (size_t i = 0; i < o3.size(); ++i) check_close(o1[i], o3[i], tol * 10);
    }
    (void)cbuf;
    (void)base;
  }
}

}  // namespace

TEST_CASE("scalar reference values") {
  const auto& t = kern::table_for<double>(kern::Isa::scalar);
  double a[4] = {1, 2, 3, 4}, b[4] = {4, 3, 2, 1};
  CHECK(t.dot(a, b, 4) == doctest::Approx(20.0));
  CHECK(t.sum(a, 4) == doctest::Approx(10.0));
  CHECK(t.sumsq(a, 4) == doctest::Approx(30.0));
  double y[4] = {0, 0, 0, 0};
  t.axpy(2.0, a, y, 4);
  CHECK(y[2] == doctest::Approx(6.0));
}

TEST_CASE("avx2 matches scalar, float") { equivalence_suite<float>(2e-5); }

TEST_CASE("avx2 matches scalar, double") { equivalence_suite<double>(1e-12); }

TEST_CASE("isa dispatch") {
  auto saved = kern::active_isa();
  kern::set_isa(kern::Isa::scalar);
  CHECK(kern::active_isa() == kern::Isa::scalar);
  CHECK(std::string(kern::isa_name(kern::active_isa())) == "scalar");
  kern::set_isa(saved);
  CHECK(kern::supported(kern::Isa::scalar));
}

TEST_CASE("parallel_for covers the range once") {
  std::vector<int> hits(10000, 0);
  parallel_for(10000, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) hits[static_cast<size_t>(i)] += 1;
  }, 16);
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("parallel_for respects thread cap") {
  int saved = max_threads();
  set_max_threads(1);
  std::vector<int> hits(100, 0);
  parallel_for(100, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) hits[static_cast<size_t>(i)] += 1;
  }, 1);
  for (int h : hits) CHECK(h == 1);
  set_max_threads(saved);
}

TEST_CASE("rng determinism") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  Rng c(42);
  for (int i = 0; i < 10; ++i) {
    double v = c.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
  Rng d(1);
  for (int i = 0; i < 1000; ++i) {
    int64_t v = d.uniform_int(7);
    CHECK(v >= 0);
    CHECK(v < 7);
  }
}
