#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace ulmpac {

// Deterministic RNG with explicit distribution code so streams are
// bit-reproducible across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; one fresh pair per call pair, cached second value.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Inversion by sequential search; fine for the bubble-count means used here.
    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        double l = std::exp(-mean);
        std::uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > l);
        return k - 1;
    }

    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    // Derive an independent stream, e.g. one per frame or per sample.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t mixed = mix_(seed_base_() ^ (stream + 0x9e3779b97f4a7c15ULL));
        return Rng(mixed);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        os.precision(17);  // full double round trip for the cached gaussian
        if (has_spare_) os << " 1 " << spare_; else os << " 0 0";
        return os.str();
    }
    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        int flag = 0;
        is >> flag >> spare_;
        has_spare_ = (flag != 0);
    }

private:
    std::uint64_t seed_base_() const {
        // Engine state is opaque; use a copy to draw a stable stream key.
        std::mt19937_64 copy = engine_;
        return copy();
    }
    static std::uint64_t mix_(std::uint64_t x) {
        x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27; x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return x;
    }
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ulmpac
