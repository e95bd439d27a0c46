#include <lobfilt/scoring.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace lobfilt;

namespace {

double two_pass(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> ar1(std::mt19937_64& rng, std::size_t n, double phi) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> x(n);
    double v = 0;
    for (int burn = 0; burn < 200; ++burn) v = phi * v + z(rng);
    for (auto& s : x) s = v = phi * v + z(rng);
    return x;
}

double lag1(const std::vector<double>& r) {
    return *pearson_score(std::span(r).first(r.size() - 1), std::span(r).subspan(1));
}

// Windows whose OBI samples sit in the bin the mask favours for the drawn
// return bin.
RegimeMatrices aligned_regimes(std::mt19937_64& rng, const Eigen::MatrixXd& mask, int n) {
    std::uniform_int_distribution<int> rb(0, 3);
    RegimeMatrices m{Eigen::MatrixXd::Zero(n, 9), Eigen::MatrixXd::Zero(n, 4)};
    for (int t = 0; t < n; ++t) {
        const int j = rb(rng);
        Eigen::Index i = 0;
        mask.col(j).maxCoeff(&i);
        m.q(t, i) = 10;
        m.r(t, j) = 1;
    }
    return m;
}

}  // namespace

TEST(Pearson, Examples) {
    const std::vector<double> x{1, 2, 3, 5, 8, 13};
    std::vector<double> neg(x.size());
    std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
    EXPECT_DOUBLE_EQ(*pearson_score(x, x), 1.0);
    EXPECT_DOUBLE_EQ(*pearson_score(x, neg), -1.0);
    EXPECT_FALSE(pearson_score(std::vector<double>{1, 2}, std::vector<double>{1, 2}).has_value());
    EXPECT_FALSE(pearson_score(x, std::vector<double>(6, 4.0)).has_value());
    EXPECT_THROW(pearson_score(x, std::vector<double>{1.0}), DomainError);
}

TEST(Pearson, MatchesTwoPassOracle) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> x(1000), y(1000);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = 50 + 3 * z(rng);
            y[i] = 0.3 * x[i] + z(rng);
        }
        EXPECT_NEAR(*pearson_score(x, y), two_pass(x, y), 1e-12);
    }
}

TEST(Pearson, AffineInvariance) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> x(300), y(300), xa(300), yn(300);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = z(rng);
        y[i] = x[i] + z(rng);
        xa[i] = 4.0 * x[i] - 7.0;
        yn[i] = -y[i];
    }
    EXPECT_NEAR(*pearson_score(xa, y), *pearson_score(x, y), 1e-12);
    EXPECT_NEAR(*pearson_score(x, yn), -*pearson_score(x, y), 1e-12);
}

TEST(LaggedPearson, IdenticalAtZeroAndWhiteNoiseSmall) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 1.0);
    int inside = 0, total = 0;
    for (int seed = 0; seed < 100; ++seed) {
        OptSeries x(500), y(500);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = z(rng);
            y[i] = z(rng);
        }
        EXPECT_NEAR(*lagged_pearson_at(x, x, 0), 1.0, 1e-12);
        const std::vector<std::ptrdiff_t> lags{1, 10, 30};
        for (const auto& [lag, r] : lagged_pearson(x, y, lags)) {
            ++total;
            inside += std::abs(*r) < 3.0 / std::sqrt(500.0 - static_cast<double>(lag));
        }
    }
    EXPECT_GE(inside, static_cast<int>(0.97 * total));
}

TEST(LaggedPearson, InsufficientOverlapIsAbsent) {
    OptSeries x{1.0, 2.0, 3.0, 4.0}, y{1.0, 3.0, 2.0, 5.0};
    EXPECT_FALSE(lagged_pearson_at(x, y, 2).has_value());
    EXPECT_FALSE(lagged_pearson_at(x, y, 10).has_value());
}

TEST(ArResidualize, WhiteNoisePassesThrough) {
    std::mt19937_64 rng(4);
    const auto x = ar1(rng, 2000, 0.0);
    const auto fit = ar_residualize(x, 5);
    for (std::size_t k = 1; k < fit.coefficients.size(); ++k) EXPECT_LT(std::abs(fit.coefficients[k]), 0.1);
    std::vector<double> tail(x.end() - static_cast<std::ptrdiff_t>(fit.residuals.size()), x.end());
    EXPECT_GT(*pearson_score(tail, fit.residuals), 0.99);
}

TEST(ArResidualize, RemovesAr1Structure) {
    std::mt19937_64 rng(5);
    const auto x = ar1(rng, 10000, 0.9);
    EXPECT_GT(lag1(x), 0.85);
    const auto fit = ar_residualize(x, 5);
    EXPECT_LT(std::abs(lag1(fit.residuals)), 0.05);
    EXPECT_NEAR(fit.coefficients[1], 0.9, 0.05);
    EXPECT_NEAR(std::accumulate(fit.residuals.begin(), fit.residuals.end(), 0.0), 0.0, 1e-8);
}

TEST(ArResidualize, ConstantSeriesFallsBack) {
    const std::vector<double> c(200, 3.0);
    const auto fit = ar_residualize(c, 2);
    EXPECT_TRUE(fit.fallback);
    EXPECT_EQ(fit.order, 1);
    EXPECT_EQ(fit.residuals.size(), 198u);
    for (double r : fit.residuals) EXPECT_DOUBLE_EQ(r, 0.0);
    EXPECT_THROW(ar_residualize(std::vector<double>(20, 1.0), 2), DomainError);
    EXPECT_EQ(feasible_ar_order(31, 5), 3);
    EXPECT_EQ(feasible_ar_order(1000, 5), 5);
}

TEST(ArResidualize, ReducesSpuriousCorrelation) {
    std::vector<double> raw, corrected;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const auto a = ar1(rng, 400, 0.95);
        const auto b = ar1(rng, 400, 0.95);
        raw.push_back(std::abs(*pearson_score(a, b)));
        const auto ra = ar_residualize(a, 3), rb = ar_residualize(b, 3);
        corrected.push_back(std::abs(*pearson_score(ra.residuals, rb.residuals)));
    }
    std::nth_element(raw.begin(), raw.begin() + 25, raw.end());
    std::nth_element(corrected.begin(), corrected.begin() + 25, corrected.end());
    EXPECT_LE(corrected[25], raw[25]);
}

TEST(Mask, ShapeRangeAndReflection) {
    const auto m = alignment_mask(9, 4);
    ASSERT_EQ(m.rows(), 9);
    ASSERT_EQ(m.cols(), 4);
    EXPECT_LE(m.maxCoeff(), 1.0);
    EXPECT_GE(m.minCoeff(), -1.0);
    for (int j = 0; j < 4; ++j) EXPECT_EQ(m(4, j), 0.0);
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 4; ++j) {
            EXPECT_DOUBLE_EQ(m(8 - i, 3 - j), m(i, j));
            EXPECT_DOUBLE_EQ(m(8 - i, j), -m(i, j));
        }
    // default orientation: strong positive OBI pairs with strong negative return
    EXPECT_DOUBLE_EQ(m(8, 0), 1.0);
    EXPECT_DOUBLE_EQ(m(8, 3), -1.0);
    const auto same = alignment_mask(9, 4, 0.5, Alignment::Same);
    EXPECT_DOUBLE_EQ(same(8, 3), 1.0);
    EXPECT_TRUE(same.isApprox(-m));
}

TEST(MaskedCorrelation, ZeroMaskGivesZero) {
    std::mt19937_64 rng(6);
    const auto m = aligned_regimes(rng, alignment_mask(9, 4), 400);
    EXPECT_DOUBLE_EQ(*masked_regime_correlation(m, Eigen::MatrixXd::Zero(9, 4)).score, 0.0);
}

TEST(MaskedCorrelation, AlignedRegimesMaximalOverPermutations) {
    std::mt19937_64 rng(7);
    const Eigen::MatrixXd mask = alignment_mask(9, 4);
    const auto m = aligned_regimes(rng, mask, 800);
    const double base = *masked_regime_correlation(m, mask).score;
    EXPECT_GT(base, 0.0);
    std::array<int, 4> perm{0, 1, 2, 3};
    while (std::next_permutation(perm.begin(), perm.end())) {
        Eigen::MatrixXd p(9, 4);
        for (int j = 0; j < 4; ++j) p.col(j) = mask.col(perm[static_cast<std::size_t>(j)]);
        EXPECT_LT(*masked_regime_correlation(m, p).score, base);
    }
}

TEST(MaskedCorrelation, ReflectionInvariance) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> b9(0, 8), b4(0, 3);
    RegimeMatrices m{Eigen::MatrixXd::Zero(600, 9), Eigen::MatrixXd::Zero(600, 4)};
    for (int t = 0; t < 600; ++t) {
        for (int k = 0; k < 10; ++k) m.q(t, b9(rng)) += 1;
        m.r(t, b4(rng)) = 1;
    }
    const Eigen::MatrixXd mask = alignment_mask(9, 4);
    const RegimeMatrices f{m.q.rowwise().reverse(), m.r.rowwise().reverse()};
    const Eigen::MatrixXd fmask = mask.colwise().reverse().rowwise().reverse();
    EXPECT_NEAR(*masked_regime_correlation(m, mask).score, *masked_regime_correlation(f, fmask).score, 1e-12);
}

TEST(MaskedCorrelation, TooFewRowsIsAbsent) {
    RegimeMatrices m{Eigen::MatrixXd::Ones(3, 9), Eigen::MatrixXd::Ones(3, 4)};
    EXPECT_FALSE(masked_regime_correlation(m, alignment_mask(9, 4)).score.has_value());
    EXPECT_THROW(masked_regime_correlation(m, Eigen::MatrixXd::Zero(4, 9)), DomainError);
}

TEST(RegimeR2, ExactlyLinearGivesBlockCount) {
    std::mt19937_64 rng(9);
    const auto m = aligned_regimes(rng, alignment_mask(9, 4), 2000);
    const auto r = regime_r2(m, 20);
    ASSERT_TRUE(r.score.has_value());
    EXPECT_EQ(r.blocks, 20);
    EXPECT_NEAR(*r.score, 20.0, 1e-6);
}

TEST(RegimeR2, ShuffledBelowUnshuffled) {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> b9(0, 8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 1200;
    RegimeMatrices m{Eigen::MatrixXd::Zero(n, 9), Eigen::MatrixXd::Zero(n, 4)};
    for (int t = 0; t < n; ++t) {
        const int i = b9(rng);
        m.q(t, i) = 10;
        const int j = u(rng) < 0.5 ? std::min(3, i / 2 - (i > 5)) : static_cast<int>(u(rng) * 4);
        m.r(t, std::clamp(j, 0, 3)) = 1;
    }
    const double real = *regime_r2(m, 20).score;
    int below = 0;
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int s = 0; s < 100; ++s) {
        std::shuffle(idx.begin(), idx.end(), rng);
        RegimeMatrices p{m.q, Eigen::MatrixXd(n, 4)};
        for (int t = 0; t < n; ++t) p.r.row(t) = m.r.row(idx[static_cast<std::size_t>(t)]);
        below += *regime_r2(p, 20).score < real;
    }
    EXPECT_EQ(below, 100);
}

TEST(RegimeR2, PeaksAtTrueLag) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> b9(0, 8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 3000, true_lag = 3;
    std::vector<RegimeVectors> v(static_cast<std::size_t>(n));
    std::vector<int> q_bin(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) q_bin[static_cast<std::size_t>(t)] = b9(rng);
    for (int t = 0; t < n; ++t) {
        auto& w = v[static_cast<std::size_t>(t)];
        w.q_vec.assign(9, 0);
        w.r_vec.assign(4, 0);
        w.q_vec[static_cast<std::size_t>(q_bin[static_cast<std::size_t>(t)])] = 10;
        int j = static_cast<int>(u(rng) * 4);
        if (t >= true_lag && u(rng) < 0.6) j = q_bin[static_cast<std::size_t>(t - true_lag)] * 4 / 9;
        w.r_vec[static_cast<std::size_t>(j)] = 1;
    }
    const double at_true = *regime_r2(v, true_lag).score;
    for (Eigen::Index lag : {0, 1, 2, 4, 6, 10}) EXPECT_GT(at_true, *regime_r2(v, lag).score) << "lag " << lag;
}

TEST(RegimeR2, SkipsDegenerateBlocks) {
    RegimeMatrices m{Eigen::MatrixXd::Zero(100, 9), Eigen::MatrixXd::Zero(100, 4)};
    m.r.col(0).setOnes();
    const auto r = regime_r2(m, 5);
    EXPECT_FALSE(r.score.has_value());
    EXPECT_EQ(r.skipped_blocks, 5);
}

TEST(BlockRanges, CoverAllRows) {
    for (Eigen::Index n : {1, 19, 20, 21, 240, 1001}) {
        Eigen::Index total = 0, expect_lo = 0;
        for (const auto& [lo, len] : block_ranges(n, 20)) {
            EXPECT_EQ(lo, expect_lo);
            expect_lo = lo + len;
            total += len;
        }
        EXPECT_EQ(total, n);
    }
}
