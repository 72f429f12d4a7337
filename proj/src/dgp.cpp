#include <naipw/dgp.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <naipw/csv.hpp>

namespace naipw {

namespace {

constexpr int kMaxArmRetries = 10;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) throw ValidationError(std::string(name) + ": range lower bound exceeds upper bound");
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi)) throw ValidationError(std::string(name) + ": non-finite range");
}

Range range_from_json(const nlohmann::json& j, const Range& fallback) {
  if (j.is_number()) return {j.get<double>(), j.get<double>()};
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  if (j.is_null()) return fallback;
  throw ValidationError("coefficient range must be a number or a [lo, hi] pair");
}

}  // namespace

Index DgpSpec::block_offset(Block b) const {
  Index off = 0;
  for (int k = 0; k < static_cast<int>(b); ++k) off += block_sizes[k];
  return off;
}

void DgpSpec::validate() const {
  if (n < 2) throw ValidationError("dgp.n must be at least 2");
  for (Index w : block_sizes)
    if (w < 2) throw ValidationError("every covariate block needs at least 2 columns");
  if (!(std::abs(rho) < 1.0)) throw ValidationError("dgp.rho must satisfy |rho| < 1");
  check_range(gamma_c, "gamma_c");
  check_range(gamma_c_prime, "gamma_c_prime");
  check_range(gamma_y, "gamma_y");
  check_range(gamma_iv, "gamma_iv");
  if (!(noise_sd >= 0.0)) throw ValidationError("dgp.noise_sd must be non-negative");
  if (!(link_fraction > 0.0 && link_fraction <= 1.0)) throw ValidationError("dgp.link_fraction must lie in (0, 1]");
}

void to_json(nlohmann::json& j, const DgpSpec& s) {
  auto rng = [](const Range& r) { return nlohmann::json::array({r.lo, r.hi}); };
  j = nlohmann::json{{"n", s.n},
                     {"block_sizes", s.block_sizes},
                     {"rho", s.rho},
                     {"gamma_c", rng(s.gamma_c)},
                     {"gamma_c_prime", rng(s.gamma_c_prime)},
                     {"gamma_y", rng(s.gamma_y)},
                     {"gamma_iv", rng(s.gamma_iv)},
                     {"beta_true", s.beta_true},
                     {"noise_sd", s.noise_sd},
                     {"link_fraction", s.link_fraction},
                     {"standardize_links", s.standardize_links},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, DgpSpec& s) {
  const DgpSpec d;
  s.n = j.value("n", d.n);
  s.block_sizes = j.value("block_sizes", d.block_sizes);
  s.rho = j.value("rho", d.rho);
  s.gamma_c = range_from_json(j.value("gamma_c", nlohmann::json()), d.gamma_c);
  s.gamma_c_prime = range_from_json(j.value("gamma_c_prime", nlohmann::json()), d.gamma_c_prime);
  s.gamma_y = range_from_json(j.value("gamma_y", nlohmann::json()), d.gamma_y);
  s.gamma_iv = range_from_json(j.value("gamma_iv", nlohmann::json()), d.gamma_iv);
  s.beta_true = j.value("beta_true", d.beta_true);
  s.noise_sd = j.value("noise_sd", d.noise_sd);
  s.link_fraction = j.value("link_fraction", d.link_fraction);
  s.standardize_links = j.value("standardize_links", d.standardize_links);
  s.seed = j.value("seed", d.seed);
}

Eigen::MatrixXd ar1_covariance(Index width, double rho) {
  Eigen::MatrixXd sigma(width, width);
  for (Index r = 0; r < width; ++r)
    for (Index c = 0; c < width; ++c) sigma(r, c) = std::pow(rho, static_cast<double>(std::abs(r - c)));
  return sigma;
}

Eigen::MatrixXd gen_covariates(const DgpSpec& spec, Rng& rng) {
  spec.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd W(spec.n, spec.p());
  for (int b = 0; b < 4; ++b) {
    const Index width = spec.block_sizes[b];
    const Index off = spec.block_offset(static_cast<Block>(b));
    Eigen::LLT<Eigen::MatrixXd> llt(ar1_covariance(width, spec.rho));
    // |rho| < 1 makes the AR(1) matrix positive definite.
    if (llt.info() != Eigen::Success) throw ValidationError("AR(1) covariance is not positive definite");
    Eigen::MatrixXd z(spec.n, width);
    for (Index i = 0; i < spec.n; ++i)
      for (Index c = 0; c < width; ++c) z(i, c) = normal(rng);
    W.middleCols(off, width) = z * llt.matrixL().transpose();
  }
  return W;
}

Block block_of(LinkRole role) {
  switch (role) {
    case LinkRole::treatment_confounder:
    case LinkRole::outcome_confounder: return Block::confounder;
    case LinkRole::treatment_instrument: return Block::instrument;
    case LinkRole::outcome_predictor: return Block::outcome;
  }
  return Block::irrelevant;
}

Range coefficient_range(const DgpSpec& spec, LinkRole role) {
  switch (role) {
    case LinkRole::treatment_confounder: return spec.gamma_c;
    case LinkRole::treatment_instrument: return spec.gamma_iv;
    case LinkRole::outcome_confounder: return spec.gamma_c_prime;
    case LinkRole::outcome_predictor: return spec.gamma_y;
  }
  return {};
}

Index selected_column_count(Index width, double fraction) {
  // The small offset keeps 0.2 * 75 from rounding up to 16.
  const auto count = static_cast<Index>(std::ceil(fraction * static_cast<double>(width) - 1e-9));
  return std::clamp<Index>(count, 2, width);
}

LinkSpec draw_links(const DgpSpec& spec, LinkRole role, Rng& rng) {
  const Block block = block_of(role);
  const Index width = spec.block_width(block);
  if (width < 2) throw ValidationError("a link needs a block with at least 2 columns");
  const Index off = spec.block_offset(block);
  const Range range = coefficient_range(spec, role);

  std::vector<Index> cols(static_cast<std::size_t>(width));
  std::iota(cols.begin(), cols.end(), off);
  std::shuffle(cols.begin(), cols.end(), rng);
  cols.resize(static_cast<std::size_t>(selected_column_count(width, spec.link_fraction)));

  std::uniform_int_distribution<int> family(0, 4);
  std::uniform_int_distribution<int> variant(0, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  LinkSpec link;
  link.role = role;
  link.standardize = spec.standardize_links;
  for (std::size_t k = 0; k + 1 < cols.size(); k += 2) {
    link.selected_pairs.emplace_back(cols[k], cols[k + 1]);
    link.function_ids.push_back(static_cast<LinkFamily>(family(rng)));
    link.step_variant.push_back(variant(rng));
    link.coefficients.push_back(range.lo + (range.hi - range.lo) * unit(rng));
  }
  return link;
}

// Sums of indicators, read literally; the closed intervals overlap at the
// breakpoints.
double step_g(int variant, double x) {
  if (variant == 0) {
    return -2.0 * (x <= -1.0) - 1.0 * (x >= -1.0 && x <= 0.0) + 1.0 * (x >= 0.0 && x <= 2.0) + 3.0 * (x >= 2.0);
  }
  return x >= 0.0 ? 1.0 : 0.0;
}

double step_h(int variant, double x) {
  if (variant == 0) {
    return -5.0 * (x <= 0.0) - 2.0 * (x >= 0.0 && x <= 1.0) + 3.0 * (x >= 1.0);
  }
  return x >= 1.0 ? 1.0 : 0.0;
}

double link_value(LinkFamily family, int step_variant, double x1, double x2) {
  switch (family) {
    case LinkFamily::exp_product: return std::exp(x1 * x2 / 2.0);
    case LinkFamily::logistic_ratio: return x1 / (1.0 + std::exp(x2));
    case LinkFamily::cubic: return std::pow(x1 * x2 / 10.0 + 2.0, 3);
    case LinkFamily::square: return std::pow(x1 + x2 + 3.0, 2);
    case LinkFamily::step: return step_g(step_variant, x1) * step_h(step_variant, x2);
  }
  return 0.0;
}

Eigen::VectorXd eval_link(const LinkSpec& link, const Eigen::MatrixXd& W) {
  const Index n = W.rows();
  Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd term(n);
  for (std::size_t k = 0; k < link.selected_pairs.size(); ++k) {
    const auto [c1, c2] = link.selected_pairs[k];
    if (c1 >= W.cols() || c2 >= W.cols()) throw ValidationError("link column outside the covariate matrix");
    for (Index i = 0; i < n; ++i) term[i] = link_value(link.function_ids[k], link.step_variant[k], W(i, c1), W(i, c2));
    if (link.standardize && n > 1) {
      term.array() -= term.mean();
      const double sd = std::sqrt(term.squaredNorm() / static_cast<double>(n));
      if (sd > 1e-12) term /= sd;
    }
    total += link.coefficients[k] * term;
  }
  return total;
}

SyntheticDgp make_dgp(const DgpSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticDgp dgp;
  dgp.spec = spec;
  dgp.treatment_confounder = draw_links(spec, LinkRole::treatment_confounder, rng);
  dgp.treatment_instrument = draw_links(spec, LinkRole::treatment_instrument, rng);
  dgp.outcome_confounder = draw_links(spec, LinkRole::outcome_confounder, rng);
  dgp.outcome_predictor = draw_links(spec, LinkRole::outcome_predictor, rng);
  return dgp;
}

Dataset sample_dataset(const SyntheticDgp& dgp, Rng& rng) {
  const DgpSpec& spec = dgp.spec;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  for (int attempt = 0; attempt < kMaxArmRetries; ++attempt) {
    Dataset data;
    data.W = gen_covariates(spec, rng);
    const Eigen::VectorXd eta = eval_link(dgp.treatment_confounder, data.W) + eval_link(dgp.treatment_instrument, data.W);
    const Eigen::VectorXd base =
        (3.0 + (eval_link(dgp.outcome_confounder, data.W) + eval_link(dgp.outcome_predictor, data.W)).array()).matrix();

    Truth<double> truth;
    truth.g = eta.unaryExpr([](double x) { return logistic(x); });
    truth.q0 = base;
    truth.q1 = (base.array() + spec.beta_true).matrix();
    truth.beta = spec.beta_true;

    data.A.resize(spec.n);
    for (Index i = 0; i < spec.n; ++i) data.A[i] = unit(rng) < truth.g[i] ? 1.0 : 0.0;
    data.Y.resize(spec.n);
    for (Index i = 0; i < spec.n; ++i)
      data.Y[i] = (data.A[i] > 0.5 ? truth.q1[i] : truth.q0[i]) + spec.noise_sd * noise(rng);
    data.truth = std::move(truth);

    if (data.treated() > 0 && data.controls() > 0) return data;
  }
  throw EstimationError("synthetic sample kept producing a single treatment arm");
}

Dataset gen_dataset(const DgpSpec& spec, Rng& rng) { return sample_dataset(make_dgp(spec), rng); }

Dataset gen_dataset(const DgpSpec& spec) {
  Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  return gen_dataset(spec, rng);
}

void write_dataset_csv(std::ostream& out, const Dataset& data, bool with_truth) {
  const bool truth = with_truth && data.truth.has_value();
  out << "y,a";
  for (Index c = 0; c < data.W.cols(); ++c) out << ",w" << (c + 1);
  if (truth) out << ",g_true,q1_true,q0_true";
  out << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    out << csv::format_double(data.Y[i]) << ',' << (data.A[i] > 0.5 ? '1' : '0');
    for (Index c = 0; c < data.W.cols(); ++c) out << ',' << csv::format_double(data.W(i, c));
    if (truth) {
      out << ',' << csv::format_double(data.truth->g[i]) << ',' << csv::format_double(data.truth->q1[i]) << ','
          << csv::format_double(data.truth->q0[i]);
    }
    out << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset CSV is empty");
  const std::vector<std::string> header = csv::split_line(line);

  int y_col = -1, a_col = -1, g_col = -1, q1_col = -1, q0_col = -1;
  std::vector<std::pair<int, int>> w_cols;  // (w index, column)
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const std::string& name = header[static_cast<std::size_t>(c)];
    if (name == "y") y_col = c;
    else if (name == "a") a_col = c;
    else if (name == "g_true") g_col = c;
    else if (name == "q1_true") q1_col = c;
    else if (name == "q0_true") q0_col = c;
    else if (name.size() > 1 && name[0] == 'w' && std::all_of(name.begin() + 1, name.end(), ::isdigit))
      w_cols.emplace_back(std::stoi(name.substr(1)), c);
  }
  if (y_col < 0) throw DataError("dataset CSV is missing the 'y' column");
  if (a_col < 0) throw DataError("dataset CSV is missing the 'a' column");
  std::sort(w_cols.begin(), w_cols.end());
  for (std::size_t k = 0; k < w_cols.size(); ++k)
    if (w_cols[k].first != static_cast<int>(k) + 1)
      throw DataError("covariate columns must be w1..wp without gaps");
  const bool has_truth = g_col >= 0 && q1_col >= 0 && q0_col >= 0;

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = csv::split_line(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " cells");
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!csv::parse_double(cells[c], row[c]))
        throw DataError("line " + std::to_string(line_no) + ": cannot parse '" + cells[c] + "'");
    }
    rows.push_back(std::move(row));
  }

  const auto n = static_cast<Index>(rows.size());
  Dataset data;
  data.Y.resize(n);
  data.A.resize(n);
  data.W.resize(n, static_cast<Index>(w_cols.size()));
  Truth<double> truth;
  if (has_truth) {
    truth.g.resize(n);
    truth.q1.resize(n);
    truth.q0.resize(n);
  }
  for (Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    data.Y[i] = r[static_cast<std::size_t>(y_col)];
    data.A[i] = r[static_cast<std::size_t>(a_col)];
    if (data.A[i] != 0.0 && data.A[i] != 1.0)
      throw DataError("treatment column 'a' must be 0/1 (row " + std::to_string(i + 1) + ")");
    for (std::size_t k = 0; k < w_cols.size(); ++k)
      data.W(i, static_cast<Index>(k)) = r[static_cast<std::size_t>(w_cols[k].second)];
    if (has_truth) {
      truth.g[i] = r[static_cast<std::size_t>(g_col)];
      truth.q1[i] = r[static_cast<std::size_t>(q1_col)];
      truth.q0[i] = r[static_cast<std::size_t>(q0_col)];
    }
  }
  if (has_truth) {
    truth.beta = (truth.q1 - truth.q0).mean();
    data.truth = std::move(truth);
  }
  validate_sample(data);
  return data;
}

}  // namespace naipw
