#include <naipw/dgp.hpp>

#include <doctest.h>

#include <sstream>

using namespace naipw;

namespace {

double corr(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::ArrayXd a = x.array() - x.mean();
  const Eigen::ArrayXd b = y.array() - y.mean();
  return (a * b).sum() / std::sqrt(a.square().sum() * b.square().sum());
}

}  // namespace

TEST_CASE("AR(1) covariance entries") {
  const Eigen::MatrixXd s = ar1_covariance(4, 0.5);
  CHECK(s(0, 1) == 0.5);
  CHECK(s(0, 2) == 0.25);
  CHECK(s(3, 0) == 0.125);
  CHECK(ar1_covariance(5, 0.0).isIdentity());
}

TEST_CASE("empirical correlations at n = 50000") {
  DgpSpec spec = default_spec(50000);
  Rng rng(42);
  const Eigen::MatrixXd W = gen_covariates(spec, rng);
  CHECK(std::abs(corr(W.col(0), W.col(1)) - 0.5) < 0.02);
  CHECK(std::abs(corr(W.col(0), W.col(2)) - 0.25) < 0.02);
  // Across blocks: independent.
  CHECK(std::abs(corr(W.col(7), W.col(8))) < 0.02);
  CHECK(std::abs(corr(W.col(3), W.col(20))) < 0.02);

  spec.rho = 0.0;
  const Eigen::MatrixXd Z = gen_covariates(spec, rng);
  CHECK(std::abs(corr(Z.col(0), Z.col(1))) < 0.02);
}

TEST_CASE("link column counts") {
  CHECK(selected_column_count(8, 0.2) == 2);
  CHECK(selected_column_count(75, 0.2) == 15);

  DgpSpec spec;
  Rng rng(1);
  CHECK(draw_links(spec, LinkRole::treatment_confounder, rng).selected_pairs.size() == 1);

  spec.block_sizes = {75, 8, 8, 8};
  const LinkSpec wide = draw_links(spec, LinkRole::outcome_confounder, rng);
  CHECK(wide.selected_pairs.size() == 7);
  std::vector<Index> used;
  for (auto [a, b] : wide.selected_pairs) used.insert(used.end(), {a, b});
  std::sort(used.begin(), used.end());
  CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
  CHECK(used.front() >= 0);
  CHECK(used.back() < 75);
}

TEST_CASE("links come from their own block") {
  DgpSpec spec;
  spec.block_sizes = {10, 20, 30, 40};
  Rng rng(3);
  for (auto [role, lo, hi] : {std::tuple{LinkRole::treatment_instrument, 10, 30}, std::tuple{LinkRole::outcome_predictor, 30, 60}}) {
    const LinkSpec l = draw_links(spec, role, rng);
    for (auto [a, b] : l.selected_pairs) {
      CHECK(a >= lo);
      CHECK(a < hi);
      CHECK(b >= lo);
      CHECK(b < hi);
    }
  }
}

TEST_CASE("same spec and seed give the same links") {
  DgpSpec spec;
  spec.block_sizes = {40, 40, 40, 40};
  Rng r1(9), r2(9);
  const LinkSpec a = draw_links(spec, LinkRole::outcome_predictor, r1);
  const LinkSpec b = draw_links(spec, LinkRole::outcome_predictor, r2);
  CHECK(a.selected_pairs == b.selected_pairs);
  CHECK(a.function_ids == b.function_ids);
  CHECK(a.step_variant == b.step_variant);
  CHECK(a.coefficients == b.coefficients);
}

TEST_CASE("link families") {
  CHECK(link_value(LinkFamily::exp_product, 0, 0.0, 3.3) == 1.0);
  CHECK(link_value(LinkFamily::square, 0, -3.0, 0.0) == 0.0);
  CHECK(link_value(LinkFamily::logistic_ratio, 0, 2.0, 0.0) == 1.0);
  CHECK(link_value(LinkFamily::cubic, 0, 0.0, 5.0) == 8.0);
  CHECK(link_value(LinkFamily::step, 1, 0.5, 2.0) == 1.0);
}

TEST_CASE("step functions") {
  CHECK(step_g(0, -2.0) == -2.0);
  CHECK(step_g(0, 0.5) == 1.0);
  CHECK(step_g(0, 3.0) == 3.0);
  CHECK(step_h(0, -1.0) == -5.0);
  CHECK(step_h(0, 0.5) == -2.0);
  CHECK(step_h(0, 2.0) == 3.0);
  // Overlapping indicators at breakpoints.
  CHECK(step_g(0, 0.0) == 0.0);
  CHECK(step_h(0, 1.0) == 1.0);

  CHECK(step_g(1, -0.1) == 0.0);
  CHECK(step_g(1, 0.0) == 1.0);
  CHECK(step_h(1, 0.99) == 0.0);
  CHECK(step_h(1, 1.0) == 1.0);
}

TEST_CASE("eval_link sums coefficient-weighted pairs") {
  LinkSpec l;
  l.selected_pairs = {{0, 1}, {2, 3}};
  l.function_ids = {LinkFamily::square, LinkFamily::exp_product};
  l.step_variant = {0, 0};
  l.coefficients = {0.5, 2.0};
  l.standardize = false;
  Eigen::MatrixXd W(2, 4);
  W << 1, 1, 0, 7,
       -3, 0, 2, 1;
  const Eigen::VectorXd v = eval_link(l, W);
  CHECK(v[0] == doctest::Approx(0.5 * 25.0 + 2.0 * 1.0));
  CHECK(v[1] == doctest::Approx(0.0 + 2.0 * std::exp(1.0)));
}

TEST_CASE("truth: unit effect and ATE") {
  const Dataset d = gen_dataset(default_spec(800));
  REQUIRE(d.truth.has_value());
  CHECK(((d.truth->q1 - d.truth->q0).array() - 1.0).abs().maxCoeff() < 1e-13);
  CHECK(d.truth->beta == 1.0);
  CHECK((d.truth->g.array() > 0.0).all());
  CHECK((d.truth->g.array() < 1.0).all());
  CHECK(d.W.cols() == 32);
}

TEST_CASE("zero assignment index gives balanced arms") {
  DgpSpec spec = default_spec(20000);
  spec.gamma_c = {0.0, 0.0};
  spec.gamma_iv = {0.0, 0.0};
  const Dataset d = gen_dataset(spec);
  CHECK((d.truth->g.array() == 0.5).all());
  CHECK(std::abs(d.A.mean() - 0.5) < 0.02);
}

TEST_CASE("default coefficient ranges are the constant 0.25") {
  DgpSpec spec;
  Rng rng(5);
  for (LinkRole r : {LinkRole::treatment_confounder, LinkRole::treatment_instrument, LinkRole::outcome_confounder,
                     LinkRole::outcome_predictor})
    for (double c : draw_links(spec, r, rng).coefficients) CHECK(c == 0.25);
}

TEST_CASE("reproducible samples") {
  DgpSpec spec = default_spec(300);
  const Dataset a = gen_dataset(spec);
  const Dataset b = gen_dataset(spec);
  CHECK(a.W == b.W);
  CHECK(a.A == b.A);
  CHECK(a.Y == b.Y);
  spec.seed = 2;
  CHECK(gen_dataset(spec).Y != a.Y);
}

TEST_CASE("stronger instruments widen the range of g") {
  double previous = 0.0;
  for (double s : {0.25, 1.0, 4.0}) {
    DgpSpec spec = default_spec(2000);
    spec.gamma_iv = {s, s};
    const Dataset d = gen_dataset(spec);
    const double range = d.truth->g.maxCoeff() - d.truth->g.minCoeff();
    CHECK(range > previous);
    previous = range;
  }
}

TEST_CASE("validation") {
  DgpSpec spec;
  spec.block_sizes = {8, 1, 8, 8};
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = DgpSpec{};
  spec.rho = 1.0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = DgpSpec{};
  spec.gamma_c = {1.0, 0.5};
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("json round trip") {
  DgpSpec spec = default_spec(123);
  spec.gamma_iv = {0.5, 1.5};
  spec.block_sizes = {3, 4, 5, 6};
  const DgpSpec back = nlohmann::json(spec).get<DgpSpec>();
  CHECK(back.n == 123);
  CHECK(back.gamma_iv.lo == 0.5);
  CHECK(back.gamma_iv.hi == 1.5);
  CHECK(back.block_sizes == spec.block_sizes);
  CHECK(nlohmann::json::parse(R"({"gamma_c": 0.7})").get<DgpSpec>().gamma_c.hi == 0.7);
}

TEST_CASE("csv round trip") {
  const Dataset d = gen_dataset(default_spec(50));
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const Dataset back = read_dataset_csv(ss);
  CHECK(back.W == d.W);
  CHECK(back.A == d.A);
  CHECK(back.Y == d.Y);
  REQUIRE(back.truth.has_value());
  CHECK(back.truth->g == d.truth->g);
  CHECK(back.truth->q1 == d.truth->q1);
}

TEST_CASE("csv errors are distinct") {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_dataset_csv(in);
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  const std::string no_y = message("a,w1\n1,0.5\n");
  const std::string no_a = message("y,w1\n1,0.5\n");
  const std::string bad_a = message("y,a,w1\n1,2,0.5\n");
  const std::string bad_cell = message("y,a,w1\n1,1,abc\n");
  CHECK(no_y != "no error");
  CHECK(no_a != "no error");
  CHECK(bad_a != "no error");
  CHECK(bad_cell != "no error");
  CHECK(no_y != no_a);
  CHECK(no_a != bad_a);
  CHECK(bad_a != bad_cell);
}
