#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace enfed {

// splitmix64: advances the state and returns a mixed 64-bit value.
// Small, fast, and portable across platforms, which is what the
// reproducibility contract needs (std distributions are not bit-stable
// between standard library implementations).
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Named sub-streams of the master seed. Every random draw in the project
// comes from a stream derived as derive_seed(parent, stream, index), so a
// single master seed reproduces an entire experiment.
namespace seed_stream {
constexpr std::uint64_t kDatasetGen = 1;
constexpr std::uint64_t kSplit = 2;
constexpr std::uint64_t kPartition = 3;
constexpr std::uint64_t kModelInit = 4;
constexpr std::uint64_t kFitShuffle = 5;
constexpr std::uint64_t kLinkDrop = 6;
constexpr std::uint64_t kLabelNoise = 7;
constexpr std::uint64_t kDevice = 8;
constexpr std::uint64_t kGradCheck = 9;
constexpr std::uint64_t kRetrain = 10;
}  // namespace seed_stream

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream,
                                 std::uint64_t index = 0) {
    std::uint64_t s = parent ^ (0x517cc1b727220a95ULL * (stream + 1));
    splitmix64(s);
    s ^= 0xd1b54a32d192ed03ULL * (index + 1);
    return splitmix64(s);
}

// Counter-keyed deterministic generator used everywhere randomness is needed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0,1) with 53 bits of mantissa.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // Box-Muller; u1 kept away from 0 so log() is finite.
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Marsaglia-Tsang; alpha < 1 handled by the boosting identity.
    double gamma(double alpha) {
        if (!(alpha > 0.0)) throw std::invalid_argument("Rng::gamma: alpha must be > 0");
        if (alpha < 1.0) {
            const double u = uniform01();
            return gamma(alpha + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> dirichlet(const std::vector<double>& alpha) {
        std::vector<double> g(alpha.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            g[i] = gamma(alpha[i]);
            sum += g[i];
        }
        if (sum <= 0.0) sum = 1.0;
        for (auto& v : g) v /= sum;
        return g;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t state_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    rng.shuffle(p);
    return p;
}

}  // namespace enfed
