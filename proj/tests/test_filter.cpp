#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "pnpood/error.hpp"
#include "pnpood/filter.hpp"
#include "pnpood/rng.hpp"

using namespace pnpood;

namespace {

std::vector<SentenceEmbedding> points(std::initializer_list<std::vector<double>> list) {
  std::vector<SentenceEmbedding> out;
  for (const auto& v : list) out.push_back({v, 1});
  return out;
}

std::vector<SentenceEmbedding> gaussian_cloud(Rng& rng, int n, int dim, double spread,
                                              const std::vector<double>& offset) {
  std::vector<SentenceEmbedding> out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (int d = 0; d < dim; ++d) v[d] = offset[d] + spread * rng.normal();
    out.push_back({std::move(v), 1});
  }
  return out;
}

}  // namespace

TEST_CASE("cluster_center") {
  CHECK(cluster_center(points({{0, 0}, {2, 2}})) == std::vector<double>{1, 1});
  CHECK(cluster_center(points({{3, -1}})) == std::vector<double>{3, -1});
  CHECK(cluster_center(points({{1, 0}, {0, 1}, {-1, 0}, {0, -1}})) ==
        std::vector<double>{0, 0});
  CHECK_THROWS_AS(cluster_center({}), ValidationError);
}

TEST_CASE("percentile interpolation") {
  CHECK(percentile({2, 2, 2, 2, 8}, 0.95) == doctest::Approx(6.8).epsilon(1e-12));
  CHECK(percentile({5, 1, 9, 3}, 1.0) == 9.0);
  CHECK(percentile({5, 1, 9, 3}, 0.0) == 1.0);
  CHECK(percentile({4}, 0.5) == 4.0);
  CHECK(percentile({1, 2}, 0.5) == doctest::Approx(1.5));
  CHECK_THROWS_AS(percentile({}, 0.5), ValidationError);
  CHECK_THROWS_AS(percentile({1.0}, 1.5), ValidationError);
}

TEST_CASE("filter_candidates hand-computed 1-D example") {
  // IND {0,0,0,0,10}: center 2, distances {2,2,2,2,8}, d = 6.8
  auto ind = points({{0}, {0}, {0}, {0}, {10}});
  auto candidates = points({{10}, {3}, {20}});  // distances 8, 1, 18
  FilterResult result = filter_candidates(candidates, ind, {ShellMode::kAbsolute, 10.0});
  CHECK(result.summary.boundary_radius == doctest::Approx(6.8).epsilon(1e-12));
  CHECK(result.kept_indices == std::vector<int>{0});  // only distance 8 in (6.8, 16.8)

  SUBCASE("candidate exactly at the center is rejected") {
    auto at_center = points({{2}});
    FilterResult r = filter_candidates(at_center, ind, {ShellMode::kAbsolute, 10.0});
    CHECK(r.kept_indices.empty());
  }
  SUBCASE("candidate exactly at distance d is rejected (strict bound)") {
    // IND {0,4}: center 2, both distances exactly 2, so d is exactly 2
    auto tight_ind = points({{0}, {4}});
    auto at_d = points({{4}, {4.5}});  // distances exactly 2 and 2.5
    FilterResult r = filter_candidates(at_d, tight_ind, {ShellMode::kAbsolute, 10.0});
    CHECK(r.summary.boundary_radius == 2.0);
    CHECK(r.kept_indices == std::vector<int>{1});
  }
  SUBCASE("relative mode resolves T from d") {
    FilterResult r = filter_candidates(candidates, ind, {ShellMode::kRelative, 2.0});
    CHECK(r.summary.shell_width == doctest::Approx(13.6).epsilon(1e-12));
    // shell (6.8, 20.4): distances 8 and 18 both inside now
    CHECK(r.kept_indices == std::vector<int>{0, 2});
  }
}

TEST_CASE("filter matches a brute-force recheck on random clouds") {
  Rng rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const int dim = 2 + static_cast<int>(rng.below(15));
    std::vector<double> center(dim);
    for (double& c : center) c = rng.uniform(-2, 2);
    auto ind = gaussian_cloud(rng, 30 + static_cast<int>(rng.below(40)), dim, 1.0, center);
    auto cand = gaussian_cloud(rng, 40, dim, rng.uniform(0.5, 3.0), center);
    ShellSpec shell{ShellMode::kAbsolute, rng.uniform(0.2, 2.5)};

    FilterResult result = filter_candidates(cand, ind, shell);
    const auto& s = result.summary;
    std::vector<int> brute;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      double dist = euclidean_distance(s.center, cand[i].vector);
      if (dist > s.boundary_radius && dist < s.boundary_radius + s.shell_width)
        brute.push_back(static_cast<int>(i));
    }
    CHECK(result.kept_indices == brute);
  }
}

TEST_CASE("kept set is monotone in the shell width") {
  Rng rng(31337);
  std::vector<double> origin(4, 0.0);
  auto ind = gaussian_cloud(rng, 60, 4, 1.0, origin);
  auto cand = gaussian_cloud(rng, 60, 4, 2.0, origin);
  std::vector<int> prev;
  for (double t : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    FilterResult r = filter_candidates(cand, ind, {ShellMode::kAbsolute, t});
    CHECK(std::includes(r.kept_indices.begin(), r.kept_indices.end(), prev.begin(), prev.end()));
    prev = r.kept_indices;
  }
}

TEST_CASE("translation equivariance") {
  Rng rng(404);
  std::vector<double> origin(3, 0.0);
  auto ind = gaussian_cloud(rng, 50, 3, 1.0, origin);
  auto cand = gaussian_cloud(rng, 50, 3, 2.0, origin);
  FilterResult base = filter_candidates(cand, ind, {ShellMode::kAbsolute, 1.0});

  std::vector<double> shift = {12.5, -3.25, 0.75};
  auto translate = [&](std::vector<SentenceEmbedding> set) {
    for (auto& e : set)
      for (int d = 0; d < 3; ++d) e.vector[d] += shift[d];
    return set;
  };
  FilterResult moved = filter_candidates(translate(cand), translate(ind),
                                         {ShellMode::kAbsolute, 1.0});
  CHECK(moved.kept_indices == base.kept_indices);
}

TEST_CASE("filter validation errors") {
  auto ind = points({{0, 0}});
  auto cand = points({{1, 1}});
  CHECK_THROWS_AS(filter_candidates({}, ind, {ShellMode::kAbsolute, 1.0}), ValidationError);
  CHECK_THROWS_AS(filter_candidates(cand, {}, {ShellMode::kAbsolute, 1.0}), ValidationError);
  CHECK_THROWS_AS(filter_candidates(cand, ind, {ShellMode::kAbsolute, 0.0}), ValidationError);
  auto wrong_dim = points({{1, 2, 3}});
  CHECK_THROWS_AS(filter_candidates(wrong_dim, ind, {ShellMode::kAbsolute, 1.0}),
                  ValidationError);
}

TEST_CASE("filter report fields") {
  auto ind = points({{0}, {0}, {0}, {0}, {10}});
  auto cand = points({{10}});
  FilterResult r = filter_candidates(cand, ind, {ShellMode::kAbsolute, 10.0});
  auto j = filter_report(r, 5, 1);
  CHECK(j["n_ind"] == 5);
  CHECK(j["n_candidates"] == 1);
  CHECK(j["d"] == doctest::Approx(6.8));
  CHECK(j["T"] == doctest::Approx(10.0));
  CHECK(j["mode"] == "absolute");
  CHECK(j["kept_indices"].size() == 1);
}
