#pragma once

#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include <cmath>

namespace baryalign {

/// Identifies the random stream so artifacts record how they were produced.
inline constexpr std::string_view kGeneratorId = "mt19937_64/box-muller";

/// Deterministic standard-normal sampler.
///
/// std::normal_distribution is implementation-defined, so Gaussian variates
/// are produced by an explicit Box-Muller transform over mt19937_64 output.
/// The same seed yields the same stream on every platform.
class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : engine_(seed) {}

    /// One standard-normal draw. Consumes two engine values per pair of
    /// draws; the second draw of each pair is cached.
    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so log(u1) is finite; u2 in [0,1).
        double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Uniform draw in [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace baryalign
