#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <numeric>
#include <vector>

#include "admpc/parallel.hpp"

using namespace admpc;

TEST_CASE("thread budget is at least one") { CHECK(thread_budget() >= 1); }

TEST_CASE("parallel_for visits every index exactly once") {
  const int n = 257;
  std::vector<std::atomic<int>> hits(n);
  for (auto& h : hits) h = 0;
  parallel_for(n, [&](int i) { hits[i]++; });
  for (int i = 0; i < n; ++i) CHECK(hits[i] == 1);
}

TEST_CASE("serial mode matches parallel mode") {
  const int n = 64;
  std::vector<double> a(n), b(n);
  parallel_for(n, [&](int i) { a[i] = i * 1.5 + 1.0; }, true);
  parallel_for(n, [&](int i) { b[i] = i * 1.5 + 1.0; }, false);
  CHECK(a == b);
}

TEST_CASE("zero iterations is a no-op") {
  bool touched = false;
  parallel_for(0, [&](int) { touched = true; });
  CHECK_FALSE(touched);
}
