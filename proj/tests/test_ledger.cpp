#include "bosdf/ledger.hpp"
#include "bosdf/oracle.hpp"
#include "bosdf/policies.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace bosdf;

namespace {

PendingEntry entry(std::size_t slot, double issued, double delay, double y = 0.5) {
    return {slot, slot, issued, delay, y};
}

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
    const auto p = std::filesystem::temp_directory_path() / ("bosdf_test_" + name);
    std::ofstream(p) << body;
    return p;
}

}  // namespace

TEST(SampleDelay, FixedIsConstant) {
    Rng rng = make_rng(0, Stream::Delay);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_delay(FixedDelay{10}, 0, rng), 10.0);
}

TEST(SampleDelay, PoissonZeroIsZero) {
    Rng rng = make_rng(0, Stream::Delay);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_delay(PoissonDelay{0.0}, 0, rng), 0.0);
}

TEST(SampleDelay, PoissonMeanWithinOnePercent) {
    Rng rng = make_rng(1, Stream::Delay);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double d = sample_delay(PoissonDelay{10.0}, 0, rng);
        ASSERT_GE(d, 0.0);
        ASSERT_EQ(d, std::floor(d));
        sum += d;
    }
    EXPECT_NEAR(sum / n, 10.0, 0.1);
}

TEST(SampleDelay, InputDependentUsesPerPointMean) {
    const InputDependentDelay model{{0.0, 50.0}};
    Rng rng = make_rng(2, Stream::Delay);
    double sum = 0.0;
    for (int i = 0; i < 2000; ++i) {
        EXPECT_EQ(sample_delay(model, 0, rng), 0.0);
        sum += sample_delay(model, 1, rng);
    }
    EXPECT_NEAR(sum / 2000.0, 50.0, 1.0);
    EXPECT_THROW(sample_delay(model, 2, rng), std::out_of_range);
}

TEST(SampleDelay, ExponentialIsNonNegativeReal) {
    Rng rng = make_rng(3, Stream::Delay);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double d = sample_delay(ExponentialDelay{0.5}, 0, rng);
        ASSERT_GE(d, 0.0);
        sum += d;
    }
    EXPECT_NEAR(sum / 20000.0, 2.0, 0.1);
}

TEST(DelayModel, ValidationRejectsBadParameters) {
    EXPECT_THROW(validate(PoissonDelay{-1.0}), std::invalid_argument);
    EXPECT_THROW(validate(FixedDelay{-1}), std::invalid_argument);
    EXPECT_THROW(validate(InputDependentDelay{}), std::invalid_argument);
    EXPECT_THROW(validate(ExponentialDelay{0.0}), std::invalid_argument);
    EXPECT_NO_THROW(validate(PoissonDelay{0.0}));
    EXPECT_TRUE(is_time_model(ExponentialDelay{1.0}));
    EXPECT_FALSE(is_time_model(PoissonDelay{1.0}));
}

TEST(Ledger, RevealWhenDelayFitsTheWindow) {
    Ledger l(3);
    l.enqueue(entry(0, 5, 2));
    EXPECT_TRUE(l.advance(6).empty());
    const auto r = l.advance(7);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].slot, 0u);
    EXPECT_EQ(r[0].observation, 0.5);
    EXPECT_EQ(l.revealed(), 1u);
    EXPECT_TRUE(l.pending().empty());
}

TEST(Ledger, DelayBeyondWindowIsEvictedNeverRevealed) {
    Ledger l(3);
    l.enqueue(entry(0, 5, 4));
    for (long t = 6; t <= 8; ++t) {
        EXPECT_TRUE(l.advance(t).empty());
        EXPECT_EQ(l.pending().size(), 1u);
    }
    EXPECT_TRUE(l.advance(9).empty());
    EXPECT_EQ(l.pending().size(), 0u);
    EXPECT_EQ(l.censored_forever(), 1u);
    EXPECT_TRUE(l.advance(20).empty());
    EXPECT_EQ(l.revealed(), 0u);
}

TEST(Ledger, ZeroAndOneDelayBothRevealAtNextIteration) {
    Ledger l(1);
    l.enqueue(entry(0, 4, 0));
    l.enqueue(entry(1, 4, 1));
    EXPECT_EQ(l.advance(5).size(), 2u);
}

TEST(Ledger, BatchModeRevealsEverything) {
    const auto b = batch_adapter(11);
    Ledger l(static_cast<double>(b.m));
    Rng rng = make_rng(0, Stream::Delay);
    for (long t = 1; t <= 200; ++t) {
        l.advance(t);
        l.enqueue(entry(static_cast<std::size_t>(t - 1), static_cast<double>(t), sample_delay(b.delay, 0, rng)));
        EXPECT_EQ(l.censored_forever(), 0u);
    }
    l.advance(211);
    EXPECT_EQ(l.revealed(), 200u);
    EXPECT_EQ(rho_m(b.delay, static_cast<double>(b.m)), 1.0);
}

TEST(Ledger, OverflowEvictsOldestFirst) {
    Ledger l(2);
    l.enqueue(entry(0, 1, 2));
    l.enqueue(entry(1, 1, 2));
    l.enqueue(entry(2, 1, 2));
    EXPECT_TRUE(l.advance(2).empty());
    ASSERT_EQ(l.pending().size(), 2u);
    EXPECT_EQ(l.pending()[0].slot, 1u);
    EXPECT_EQ(l.pending()[1].slot, 2u);
    EXPECT_EQ(l.censored_forever(), 1u);
}

TEST(Ledger, RejectsInvalidUse) {
    EXPECT_THROW(Ledger(0), std::invalid_argument);
    EXPECT_THROW(Ledger(2.5), std::invalid_argument);
    EXPECT_THROW(Ledger(0.0, LedgerMode::Time), std::invalid_argument);
    Ledger l(3);
    EXPECT_THROW(l.enqueue(entry(0, 1, -1)), std::invalid_argument);
    l.enqueue(entry(0, 5, 1));
    EXPECT_THROW(l.enqueue(entry(1, 4, 1)), std::invalid_argument);
    l.advance(6);
    EXPECT_THROW(l.advance(5), std::invalid_argument);
    EXPECT_THROW(l.advance_time(7.0), std::logic_error);
    Ledger lt(2.0, LedgerMode::Time);
    EXPECT_THROW(lt.advance(1), std::logic_error);
}

TEST(LedgerTime, RevealWithinBudget) {
    Ledger l(2.0, LedgerMode::Time);
    l.enqueue(entry(0, 1.0, 0.5));
    EXPECT_TRUE(l.advance_time(1.2).empty());
    EXPECT_EQ(l.advance_time(2.0).size(), 1u);
}

TEST(LedgerTime, DelayBeyondBudgetNeverRevealed) {
    Ledger l(2.0, LedgerMode::Time);
    l.enqueue(entry(0, 1.0, 3.0));
    EXPECT_TRUE(l.advance_time(2.5).empty());
    EXPECT_TRUE(l.advance_time(3.0).empty());
    EXPECT_TRUE(l.advance_time(3.5).empty());
    EXPECT_EQ(l.censored_forever(), 1u);
    EXPECT_TRUE(l.advance_time(10.0).empty());
}

TEST(LedgerTime, MixedBatchMatchesIndicator) {
    Rng rng = make_rng(4, Stream::Test);
    std::uniform_real_distribution<double> start(0.0, 5.0), delay(0.0, 4.0);
    const double m = 2.0;
    std::vector<PendingEntry> entries;
    for (std::size_t i = 0; i < 20; ++i) entries.push_back(entry(i, start(rng), delay(rng)));
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.issued < b.issued; });
    Ledger l(m, LedgerMode::Time);
    for (const auto& e : entries) l.enqueue(e);
    const double now = 6.0;
    std::set<std::size_t> got;
    for (const auto& r : l.advance_time(now)) got.insert(r.slot);
    std::set<std::size_t> want;
    for (const auto& e : entries) {
        if (e.delay <= std::min(m, now - e.issued)) want.insert(e.slot);
    }
    EXPECT_EQ(got, want);
}

TEST(RhoM, DeterministicDelayWithinWindow) {
    EXPECT_EQ(rho_m(FixedDelay{10}, 10), 1.0);
    EXPECT_EQ(rho_m(FixedDelay{10}, 9), 0.0);
}

TEST(RhoM, PoissonMatchesPmfSum) {
    // partial pmf sum k = 0..20, mean 10
    EXPECT_NEAR(rho_m(PoissonDelay{10.0}, 20), 0.99841173933814195, 1e-12);
    EXPECT_NEAR(rho_m(PoissonDelay{10.0}, 20), oracle::poisson_cdf(10.0, 20), 1e-12);
    EXPECT_NEAR(rho_m(PoissonDelay{10.0}, 0), std::exp(-10.0), 1e-18);
}

TEST(RhoM, InputDependentTakesTheMinimum) {
    const InputDependentDelay model{{1.0, 10.0, 3.0}};
    EXPECT_NEAR(rho_m(model, 6), oracle::poisson_cdf(10.0, 6), 1e-12);
}

TEST(RhoM, ExponentialAndErrors) {
    EXPECT_NEAR(rho_m(ExponentialDelay{0.5}, 2.0), 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_THROW(rho_m(PoissonDelay{1.0}, -1.0), std::invalid_argument);
}

TEST(DelayTable, LoadsCompleteTable) {
    const auto p = write_temp("delays_ok.csv", "point_id,mean\n1,4.5\n0,2\n2,0\n");
    const auto t = load_delay_table(p.string(), 3);
    EXPECT_EQ(t.means, (std::vector<double>{2.0, 4.5, 0.0}));
}

TEST(DelayTable, RejectsBadTables) {
    EXPECT_THROW(load_delay_table("/nonexistent/delays.csv", 3), std::runtime_error);
    const auto missing = write_temp("delays_missing.csv", "point_id,mean\n0,1\n2,1\n");
    EXPECT_THROW(load_delay_table(missing.string(), 3), std::runtime_error);
    const auto dup = write_temp("delays_dup.csv", "point_id,mean\n0,1\n0,2\n1,1\n");
    try {
        load_delay_table(dup.string(), 2);
        FAIL() << "duplicate accepted";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    }
    const auto range = write_temp("delays_range.csv", "point_id,mean\n5,1\n");
    EXPECT_THROW(load_delay_table(range.string(), 2), std::runtime_error);
    const auto neg = write_temp("delays_neg.csv", "point_id,mean\n0,-1\n");
    EXPECT_THROW(load_delay_table(neg.string(), 1), std::invalid_argument);
}

// -- properties ---------------------------------------------------------------

TEST(LedgerProperty, IndicatorEquivalenceAndConservation) {
    for (std::uint64_t trial = 0; trial < 200; ++trial) {
        Rng rng = make_rng(trial, Stream::Test, 3);
        std::uniform_int_distribution<long> cap(1, 8);
        std::uniform_real_distribution<double> mean(0.0, 8.0);
        const long m = cap(rng);
        const PoissonDelay model{mean(rng)};
        Ledger l(static_cast<double>(m));
        std::vector<PendingEntry> issued;
        std::vector<bool> done;
        for (long t = 1; t <= 60; ++t) {
            std::set<std::size_t> got;
            for (const auto& r : l.advance(t)) got.insert(r.slot);
            // brute force: entries revealed now are those whose indicator
            // first turns on at t
            for (std::size_t s = 0; s < issued.size(); ++s) {
                const auto& e = issued[s];
                const double age = static_cast<double>(t) - e.issued;
                const bool on = e.delay <= std::min(static_cast<double>(m), age);
                // the first advance after issue is at age 1
                const bool was_on = age > 1.0 && e.delay <= std::min(static_cast<double>(m), age - 1.0);
                const bool expect = on && !was_on && !done[s];
                ASSERT_EQ(got.count(s) == 1, expect) << "trial " << trial << " t " << t << " slot " << s;
                if (expect) done[s] = true;
            }
            ASSERT_EQ(l.issued(), l.revealed() + l.censored_forever() + l.pending().size());
            ASSERT_LE(l.pending().size(), static_cast<std::size_t>(m));
            const PendingEntry e = entry(issued.size(), static_cast<double>(t), sample_delay(model, 0, rng));
            issued.push_back(e);
            done.push_back(false);
            l.enqueue(e);
        }
    }
}

TEST(LedgerProperty, FixedDelayWithinWindowNeverCensors) {
    for (long d = 0; d <= 6; ++d) {
        for (long m = std::max(1L, d); m <= 8; ++m) {
            Ledger l(static_cast<double>(m));
            for (long t = 1; t <= 100; ++t) {
                l.advance(t);
                l.enqueue(entry(static_cast<std::size_t>(t), static_cast<double>(t), static_cast<double>(d)));
            }
            l.advance(200);
            EXPECT_EQ(l.censored_forever(), 0u) << "d=" << d << " m=" << m;
        }
    }
}

TEST(RhoMProperty, NondecreasingInWindowAndOneAtInfinity) {
    const std::vector<DelayModel> models{PoissonDelay{3.0}, PoissonDelay{10.0}, FixedDelay{4},
                                         InputDependentDelay{{1.0, 7.0}}, ExponentialDelay{0.3}};
    for (const auto& model : models) {
        double last = 0.0;
        for (int m = 0; m <= 60; ++m) {
            const double r = rho_m(model, m);
            EXPECT_GE(r, last);
            EXPECT_LE(r, 1.0);
            last = r;
        }
        EXPECT_EQ(rho_m(model, std::numeric_limits<double>::infinity()), 1.0);
    }
}
