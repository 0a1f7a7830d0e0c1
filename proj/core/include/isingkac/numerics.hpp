#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace isingkac {

// Compensated (Kahan-Babuska) running sum.
class KahanSum {
public:
    KahanSum() = default;
    explicit KahanSum(double v) : sum_(v) {}
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    KahanSum& operator+=(double x) {
        add(x);
        return *this;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// Pairwise summation; order-independent of how the input was produced.
double pairwise_sum(std::span<const double> v);

// Seeded 64-bit generator. Replica i of a run with seed s uses seed s ^ i.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    std::uint64_t next() { return engine_(); }
    // uniform on [0,1) with 53 random bits
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    // uniform on (0,1]
    double uniform_open0() { return 1.0 - uniform(); }
    double exponential(double rate) { return -std::log(uniform_open0()) / rate; }
    std::size_t index(std::size_t n);
    double normal();

private:
    std::mt19937_64 engine_;
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
};
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    double variance = 0.0;
    std::size_t n = 0;
};
MeanSe mean_and_se(std::span<const double> v);

}  // namespace isingkac
