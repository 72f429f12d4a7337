#pragma once

// Synthetic data-generating process: AR(1) Gaussian covariates in four role
// blocks, random bivariate nonlinear links, logistic treatment assignment and
// an outcome that is linear in the treatment.

#include <naipw/types.hpp>

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace naipw {

using Rng = std::mt19937_64;

enum class Block { confounder = 0, instrument = 1, outcome = 2, irrelevant = 3 };

// Which term of the assignment/outcome models a link feeds.
enum class LinkRole { treatment_confounder, treatment_instrument, outcome_confounder, outcome_predictor };

enum class LinkFamily { exp_product = 0, logistic_ratio = 1, cubic = 2, square = 3, step = 4 };

struct Range {
  double lo = 0.25;
  double hi = 0.25;
};

struct DgpSpec {
  Index n = 750;
  std::array<Index, 4> block_sizes{8, 8, 8, 8};  // X_c, X_iv, X_y, X_irr
  double rho = 0.5;
  Range gamma_c;
  Range gamma_c_prime;
  Range gamma_y;
  Range gamma_iv;
  double beta_true = 1.0;
  double noise_sd = 1.0;
  double link_fraction = 0.2;
  bool standardize_links = true;
  std::uint64_t seed = 1;

  Index p() const { return block_sizes[0] + block_sizes[1] + block_sizes[2] + block_sizes[3]; }
  Index block_offset(Block b) const;
  Index block_width(Block b) const { return block_sizes[static_cast<int>(b)]; }
  void validate() const;
};

inline DgpSpec default_spec(Index n) {
  DgpSpec spec;
  spec.n = n;
  return spec;
}

void to_json(nlohmann::json& j, const DgpSpec& spec);
void from_json(const nlohmann::json& j, DgpSpec& spec);

struct LinkSpec {
  LinkRole role = LinkRole::treatment_confounder;
  std::vector<std::pair<Index, Index>> selected_pairs;  // global column indices
  std::vector<LinkFamily> function_ids;
  std::vector<int> step_variant;  // 0 or 1 per pair, used by the step family
  std::vector<double> coefficients;
  bool standardize = true;
};

// Covariance of one block: rho^|j-k|.
Eigen::MatrixXd ar1_covariance(Index width, double rho);

Eigen::MatrixXd gen_covariates(const DgpSpec& spec, Rng& rng);

Block block_of(LinkRole role);
Range coefficient_range(const DgpSpec& spec, LinkRole role);

// Number of columns a link selects from a block of the given width.
Index selected_column_count(Index width, double fraction);

LinkSpec draw_links(const DgpSpec& spec, LinkRole role, Rng& rng);

// Step functions g, h of the fifth family; variant 0 is the multi-level pair,
// variant 1 the indicator pair.
double step_g(int variant, double x);
double step_h(int variant, double x);

double link_value(LinkFamily family, int step_variant, double x1, double x2);

// Sum over pairs of coefficient * l(x1, x2), each l standardized on W when the
// link asks for it.
Eigen::VectorXd eval_link(const LinkSpec& link, const Eigen::MatrixXd& W);

// A frozen DGP: the four links drawn once from spec.seed.
struct SyntheticDgp {
  DgpSpec spec;
  LinkSpec treatment_confounder;
  LinkSpec treatment_instrument;
  LinkSpec outcome_confounder;
  LinkSpec outcome_predictor;
};

SyntheticDgp make_dgp(const DgpSpec& spec);

// Draw one sample from a frozen DGP; regenerates (up to 10 tries) when an arm
// is empty.
Dataset sample_dataset(const SyntheticDgp& dgp, Rng& rng);

Dataset gen_dataset(const DgpSpec& spec, Rng& rng);
Dataset gen_dataset(const DgpSpec& spec);

// CSV with header y,a,w1..wp and, when truth is present and requested,
// g_true,q1_true,q0_true.
void write_dataset_csv(std::ostream& out, const Dataset& data, bool with_truth = true);

// Reads the format above. Throws DataError on a bad header, a missing cell or
// non-binary treatment.
Dataset read_dataset_csv(std::istream& in);

}  // namespace naipw
