#include <gtest/gtest.h>

#include "support.hpp"

using namespace pmt;

namespace {

TrueModel make_truth(const MatrixXd& betas, CrossCov sn, CovOperator st) {
  TrueModel m;
  m.betas = betas;
  m.sigma_n = std::move(sn);
  m.sigma_t = std::move(st);
  return m;
}

MatrixXd random_spd(std::mt19937_64& rng, Index n) {
  const MatrixXd a = gaussian(rng, n, n);
  MatrixXd s = 0.3 * a * a.transpose() / static_cast<double>(n);
  s.diagonal().array() += 1.0;
  return s;
}

}  // namespace

TEST(IndividualError, InterceptOnlyUnitCovariance) {
  for (Index t : {4, 10, 25}) {
    Panel p;
    p.x.assign(2, MatrixXd::Ones(t, 1));
    p.y = MatrixXd::Zero(t, 2);
    p.x_next = MatrixXd::Ones(1, 2);
    const TrueModel m = make_truth(MatrixXd::Ones(1, 2), CrossCov::identity(2), CovOperator::identity(t));
    EXPECT_NEAR(individual_error(p, m, 0), 1.0 / static_cast<double>(t) + 1.0, 1e-14);
  }
}

TEST(IndividualError, LinearInOwnCrossSectionalVariance) {
  std::mt19937_64 rng(21);
  const Panel p = random_panel(rng, 3, 9, 2);
  VectorXd d = VectorXd::Ones(3);
  const TrueModel a = make_truth(gaussian(rng, 2, 3), CrossCov::diagonal(d), CovOperator::ar1(9, 0.4));
  d(1) = 2.0;
  TrueModel b = a;
  b.sigma_n = CrossCov::diagonal(d);
  EXPECT_NEAR(individual_error(p, b, 1), 2.0 * individual_error(p, a, 1), 1e-12);
}

TEST(PooledError, HomogeneousHasNoBiasAndSingleIndividualCoincides) {
  std::mt19937_64 rng(22);
  const Panel p = random_panel(rng, 4, 8, 2);
  const TrueModel hom = make_truth(Eigen::Vector2d(1.0, -1.0).replicate(1, 4), CrossCov::identity(4),
                                   CovOperator::identity(8));
  const DenseTruth d{hom.betas, MatrixXd::Identity(4, 4), MatrixXd::Identity(8, 8)};
  for (Index i = 0; i < 4; ++i) {
    EXPECT_EQ(literal_bias(p, hom.betas, i), 0.0);
    EXPECT_NEAR(pooled_error(p, hom, i), literal_pooled_var(p, d, i) + 1.0, 1e-12);
  }
  const Panel one = random_panel(rng, 1, 8, 2);
  const TrueModel m1 = make_truth(gaussian(rng, 2, 1), CrossCov::identity(1), CovOperator::ar1(8, 0.3));
  EXPECT_NEAR(pooled_error(one, m1, 0), individual_error(one, m1, 0), 1e-12);
}

// Conditional MSFEs against fresh error draws: eps ~ N(0, Sigma_N (x) Sigma_T)
// in sample, and eps_{T+1} ~ N(0, Sigma_N (Sigma_T)_{11}) independently.
TEST(ClosedForms, MatchMonteCarloWithinThreeStandardErrors) {
  std::mt19937_64 rng(23);
  const Index n = 3, t = 8, k = 2;
  const Panel p = random_panel(rng, n, t, k);
  const MatrixXd betas = gaussian(rng, k, n, 1.0, 0.5);
  const MatrixXd sn = random_spd(rng, n);
  const MatrixXd st = ar1_toeplitz(t, 0.3);
  const TrueModel m = make_truth(betas, CrossCov::dense(sn), CovOperator::ar1(t, 0.3));

  const MatrixXd ln = sn.llt().matrixL();
  const MatrixXd lt = st.llt().matrixL();
  const MatrixXd g_inv = inv(literal_pooled_gram(p));
  std::vector<MatrixXd> h(n);
  for (Index i = 0; i < n; ++i) h[i] = inv(p.x[i].transpose() * p.x[i]) * p.x[i].transpose();

  const int draws = 200000;
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::ArrayXd s_ind = Eigen::ArrayXd::Zero(n), q_ind = Eigen::ArrayXd::Zero(n);
  Eigen::ArrayXd s_pool = Eigen::ArrayXd::Zero(n), q_pool = Eigen::ArrayXd::Zero(n);
  MatrixXd zz(t, n);
  VectorXd zn(n);
  for (int d = 0; d < draws; ++d) {
    for (Index c = 0; c < n; ++c)
      for (Index r = 0; r < t; ++r) zz(r, c) = z(rng);
    for (Index c = 0; c < n; ++c) zn(c) = z(rng);
    const MatrixXd eps = lt * zz * ln.transpose();
    const VectorXd eps_next = std::sqrt(st(0, 0)) * ln * zn;
    VectorXd mom = VectorXd::Zero(k);
    std::vector<VectorXd> y(n);
    for (Index i = 0; i < n; ++i) {
      y[i] = p.x[i] * betas.col(i) + eps.col(i);
      mom += p.x[i].transpose() * y[i];
    }
    const VectorXd pooled = g_inv * mom;
    for (Index i = 0; i < n; ++i) {
      const double actual = p.x_next.col(i).dot(betas.col(i)) + eps_next(i);
      const double ei = p.x_next.col(i).dot(h[i] * y[i]) - actual;
      const double ep = p.x_next.col(i).dot(pooled) - actual;
      s_ind(i) += ei * ei;
      q_ind(i) += ei * ei * ei * ei;
      s_pool(i) += ep * ep;
      q_pool(i) += ep * ep * ep * ep;
    }
  }
  for (Index i = 0; i < n; ++i) {
    const double mi = s_ind(i) / draws, mp = s_pool(i) / draws;
    const double se_i = std::sqrt((q_ind(i) / draws - mi * mi) / draws);
    const double se_p = std::sqrt((q_pool(i) / draws - mp * mp) / draws);
    EXPECT_LE(std::abs(individual_error(p, m, i) - mi), 3.0 * se_i) << "individual " << i;
    EXPECT_LE(std::abs(pooled_error(p, m, i) - mp), 3.0 * se_p) << "individual " << i;
  }
}

TEST(DecomposeErrors, MatchesLiteralFormulasAndIdentity) {
  std::mt19937_64 rng(24);
  for (int rep = 0; rep < 25; ++rep) {
    const Index n = 2 + rep % 5, t = 6 + rep % 7, k = 1 + rep % 3;
    const Panel p = random_panel(rng, n, t, k);
    const MatrixXd sn = random_spd(rng, n);
    const TrueModel m = make_truth(gaussian(rng, k, n), CrossCov::dense(sn), CovOperator::ar1(t, 0.5));
    const DenseTruth d{m.betas, sn, ar1_toeplitz(t, 0.5)};
    const ErrorDecomposition e = decompose_errors(p, m);
    double e1 = 0.0, e2 = 0.0, e3 = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double ind = literal_e_ind(p, d, i), pool = literal_e_pool(p, d, i);
      EXPECT_NEAR(e.e_ind_per_i(i), ind, 1e-10 * ind);
      EXPECT_NEAR(e.e_pool_per_i(i), pool, 1e-10 * pool);
      e1 += ind - sn(i, i) * d.sigma_t(0, 0);
      const double b = literal_bias(p, m.betas, i);
      e2 += b * b;
      e3 += literal_pooled_var(p, d, i);
    }
    EXPECT_NEAR(e.e1, e1 / n, 1e-10 * e.e1);
    EXPECT_NEAR(e.e2, e2 / n, 1e-10 * (e.e2 + 1e-300));
    EXPECT_NEAR(e.e3, e3 / n, 1e-10 * std::abs(e.e3));
    const double lhs = e.e_ind() - e.e_pool();
    const double rhs = e.e1 - e.e2 - e.e3;
    EXPECT_LE(std::abs(lhs - rhs), 1e-10 * std::max({std::abs(lhs), e.e1, e.e2}));
    EXPECT_NEAR(e.diff, e.e_pool() - e.e_ind(), 1e-10 * std::max({std::abs(lhs), e.e1, e.e2}));
  }
}

TEST(DecomposeErrors, SecondTermVanishesExactlyForEqualSlopes) {
  std::mt19937_64 rng(25);
  const Panel p = random_panel(rng, 5, 9, 3);
  MatrixXd betas = gaussian(rng, 3, 1).replicate(1, 5);
  TrueModel m = make_truth(betas, CrossCov::identity(5), CovOperator::identity(9));
  EXPECT_EQ(decompose_errors(p, m).e2, 0.0);
  m.betas(2, 3) += 1e-3;
  EXPECT_GT(decompose_errors(p, m).e2, 0.0);
}

TEST(DecomposeErrors, ScalingSlopeGapsScalesSecondTermQuadratically) {
  std::mt19937_64 rng(26);
  const Panel p = random_panel(rng, 6, 10, 2);
  const VectorXd base = gaussian(rng, 2, 1);
  const MatrixXd gaps = gaussian(rng, 2, 6);
  auto e2_at = [&](double c) {
    const TrueModel m = make_truth(base.replicate(1, 6) + c * gaps, CrossCov::identity(6),
                                   CovOperator::identity(10));
    return decompose_errors(p, m).e2;
  };
  EXPECT_NEAR(e2_at(3.0), 9.0 * e2_at(1.0), 1e-12 * e2_at(3.0));
  EXPECT_NEAR(e2_at(0.25), 0.0625 * e2_at(1.0), 1e-12 * e2_at(1.0));
}

TEST(DecomposeErrors, HalvingSigmaNHalvesVarianceTerms) {
  std::mt19937_64 rng(27);
  const Panel p = random_panel(rng, 4, 12, 2);
  const MatrixXd betas = gaussian(rng, 2, 4);
  const ErrorDecomposition a =
      decompose_errors(p, make_truth(betas, CrossCov::identity(4), CovOperator::ar1(12, 0.3)));
  const ErrorDecomposition b =
      decompose_errors(p, make_truth(betas, CrossCov::scaled(4, 0.5), CovOperator::ar1(12, 0.3)));
  EXPECT_NEAR(b.e1, 0.5 * a.e1, 1e-13 * a.e1);
  EXPECT_NEAR(b.e3, 0.5 * a.e3, 1e-13 * std::abs(a.e3));
  EXPECT_NEAR(b.e2, a.e2, 1e-13 * a.e2);
}

TEST(DecomposeErrors, RatesInT) {
  std::mt19937_64 rng(28);
  const Index n = 50;
  std::vector<double> lt, le1, lnt, le3;
  for (Index t : {20, 40, 80}) {
    double e1 = 0.0, e3 = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      const Panel p = random_panel(rng, n, t, 2);
      const ErrorDecomposition e = decompose_errors(
          p, make_truth(MatrixXd::Ones(2, n), CrossCov::identity(n), CovOperator::identity(t)));
      e1 += e.e1;
      e3 += e.e3;
    }
    lt.push_back(std::log(static_cast<double>(t)));
    le1.push_back(std::log(e1));
    lnt.push_back(std::log(static_cast<double>(n * t)));
    le3.push_back(std::log(e3));
  }
  auto slope = [](const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = (x[0] + x[1] + x[2]) / 3, my = (y[0] + y[1] + y[2]) / 3;
    double sxy = 0, sxx = 0;
    for (int i = 0; i < 3; ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
  };
  EXPECT_NEAR(slope(lt, le1), -1.0, 0.15);
  EXPECT_NEAR(slope(lnt, le3), -1.0, 0.15);
}

TEST(OracleTau, MatchesLiteralDoubleSum) {
  std::mt19937_64 rng(29);
  for (int rep = 0; rep < 10; ++rep) {
    const Index n = 3 + rep % 3, t = 8 + rep, k = 1 + rep % 2;
    const Panel p = random_panel(rng, n, t, k);
    const MatrixXd sn = random_spd(rng, n);
    const TrueModel m = make_truth(gaussian(rng, k, n), CrossCov::dense(sn), CovOperator::ar1(t, 0.3));
    const double lit = literal_tau(p, DenseTruth{m.betas, sn, ar1_toeplitz(t, 0.3)});
    EXPECT_NEAR(oracle_tau(p, m), lit, 1e-10 * lit);
  }
}

TEST(OracleTau, HomogeneousKeepsOnlySquaredTraceTerm) {
  std::mt19937_64 rng(30);
  const Index n = 6, t = 10;
  const Panel p = random_panel(rng, n, t, 2);
  const TrueModel m = make_truth(MatrixXd::Ones(2, n), CrossCov::identity(n), CovOperator::ar1(t, 0.3));
  const LambdaTerms lam = lambda_terms(p, PanelGeometry(p), m.betas);
  EXPECT_EQ(lam.lambda.norm(), 0.0);
  EXPECT_EQ(lam.individual.norm(), 0.0);
  const MatrixXd st = ar1_toeplitz(t, 0.3);
  double first = 0.0;
  for (Index i = 0; i < n; ++i) {
    const VectorXd v = inv(p.x[i].transpose() * p.x[i] / t) * p.x_next.col(i);
    const double q = v.dot(p.x[i].transpose() * st * p.x[i] * v) / t;
    first += 2.0 * q * q;
  }
  EXPECT_NEAR(oracle_tau(p, m), first / n, 1e-10 * first / n);
}

TEST(OracleTau, IdentitySigmaNDropsOffDiagonalPairs) {
  std::mt19937_64 rng(31);
  const Index n = 5, t = 9;
  const Panel p = random_panel(rng, n, t, 2);
  const MatrixXd betas = gaussian(rng, 2, n);
  const TrueModel ident = make_truth(betas, CrossCov::identity(n), CovOperator::identity(t));
  const TrueModel dense = make_truth(betas, CrossCov::dense(MatrixXd::Identity(n, n)), CovOperator::identity(t));
  const auto pairs = true_pair_crosses(p, ident);
  for (const auto& pc : pairs) EXPECT_EQ(pc.i, pc.k);
  EXPECT_NEAR(oracle_tau(p, ident), oracle_tau(p, dense), 1e-12 * oracle_tau(p, dense));
}

TEST(OracleTau, TinyVarianceIsDegenerate) {
  std::mt19937_64 rng(32);
  const Panel p = random_panel(rng, 3, 8, 1);
  const TrueModel m = make_truth(MatrixXd::Ones(1, 3), CrossCov::scaled(3, 1e-12), CovOperator::identity(8));
  EXPECT_THROW(oracle_tau(p, m), DegenerateVariance);
}

// Variance of sqrt(N) T (E_hat - (E1 + E2)) over error draws with the design held fixed.
TEST(OracleTau, MatchesEmpiricalVarianceOfStatistic) {
  ScenarioConfig cfg;
  cfg.n = 200;
  cfg.t_len = 100;
  cfg.slope_design = HalfSplit{1.0, 2.0};
  cfg.seed = 77;
  PhiloxStream ds(cfg.seed, 1, 0);
  const detail::Design design = detail::draw_design(cfg, ds);
  const int reps = 2000;
  double tau = 0.0, s = 0.0, ss = 0.0;
  for (int r = 0; r < reps; ++r) {
    PhiloxStream es(cfg.seed, 2, static_cast<std::uint32_t>(r));
    const SimulatedPanel sim = detail::assemble(cfg, design, es);
    const PanelGeometry geo(sim.panel);
    const SlopeEstimates slopes = fit_slopes(sim.panel, geo);
    const ErrorDecomposition dec = decompose_errors(sim.panel, sim.truth);
    if (r == 0) tau = oracle_tau(sim.panel, sim.truth);
    const double stat = std::sqrt(200.0) * 100.0 * (e_hat(sim.panel, slopes, geo) - dec.e1 - dec.e2);
    s += stat;
    ss += stat * stat;
  }
  const double var = ss / reps - (s / reps) * (s / reps);
  EXPECT_NEAR(var / tau, 1.0, 0.15) << "empirical " << var << " oracle " << tau;
}
