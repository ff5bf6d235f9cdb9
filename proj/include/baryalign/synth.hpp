#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>

#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "baryalign/errors.hpp"
#include "baryalign/procrustes.hpp"
#include "baryalign/rng.hpp"
#include "baryalign/types.hpp"

namespace baryalign {

/// Parameters for a synthetic benchmark: a shared latent cloud observed
/// by n_models under per-model orthogonal bases, optional Gaussian noise,
/// and an optional per-model width truncation.
struct SynthSpec {
    Index n_train = 100;        // training stimuli
    Index m_test = 100;         // held-out stimuli
    Index d = 8;                // latent dimensionality
    Index n_models = 4;
    double noise_sigma = 0.0;
    std::vector<Index> width_schedule;  // empty: every model keeps all d columns
    std::uint64_t seed = 1;
};

struct SynthPools {
    ModelPool train;
    ModelPool test;
    Matrix latent_train;            // the shared cloud behind the training pool
    Matrix latent_test;
    std::vector<Matrix> rotations;  // ground-truth per-model bases
};

namespace detail {

inline Matrix gaussian_matrix(Index rows, Index cols, GaussianSampler& sampler) {
    Matrix out(rows, cols);
    // Row-major fill order is part of the stream contract: the same seed
    // must reproduce the same matrices everywhere.
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) out(r, c) = sampler();
    return out;
}

inline std::string indexed_id(const char* prefix, Index i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%06lld", prefix, static_cast<long long>(i));
    return buf;
}

}  // namespace detail

/// Haar-distributed orthogonal matrix (reflections included).
///
/// QR of a Gaussian matrix, with Q's columns sign-corrected by the
/// diagonal of R so the factorization is unique and the distribution is
/// uniform over O(d).
inline Matrix random_orthogonal(Index d, GaussianSampler& sampler) {
    if (d < 1) fail(Errc::invalid_config, "dimension must be positive");
    Matrix g = detail::gaussian_matrix(d, d, sampler);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index k = 0; k < d; ++k)
        if (r(k, k) < 0.0) q.col(k) = -q.col(k);
    return q;
}

inline Matrix random_orthogonal(Index d, std::uint64_t seed) {
    GaussianSampler sampler(seed);
    return random_orthogonal(d, sampler);
}

/// Generate train/test pools from one latent cloud.
///
/// Draw order is fixed: latent train, latent test, then per model its
/// basis, train noise, and test noise. Noise is drawn even at sigma = 0
/// so runs differing only in sigma share latents, bases, and noise
/// pattern.
inline SynthPools make_synthetic_pool(const SynthSpec& spec) {
    if (spec.n_train < 1 || spec.m_test < 1)
        fail(Errc::invalid_config, "stimulus counts must be positive");
    if (spec.d < 1) fail(Errc::invalid_config, "dimension must be positive");
    if (spec.n_models < 2) fail(Errc::too_few_models, "synthesis needs at least 2 models");
    if (!(spec.noise_sigma >= 0.0)) fail(Errc::invalid_config, "noise sigma must be >= 0");
    if (!spec.width_schedule.empty()) {
        if (static_cast<Index>(spec.width_schedule.size()) != spec.n_models)
            fail(Errc::invalid_config, "width schedule must list one width per model");
        for (Index w : spec.width_schedule)
            if (w < 1 || w > spec.d)
                fail(Errc::invalid_config,
                     "widths must lie in [1, " + std::to_string(spec.d) + "]");
    }

    GaussianSampler sampler(spec.seed);
    SynthPools out;
    out.latent_train = detail::gaussian_matrix(spec.n_train, spec.d, sampler);
    out.latent_test = detail::gaussian_matrix(spec.m_test, spec.d, sampler);

    std::vector<std::string> train_ids, test_ids;
    for (Index s = 0; s < spec.n_train; ++s) train_ids.push_back(detail::indexed_id("s", s));
    for (Index s = 0; s < spec.m_test; ++s) test_ids.push_back(detail::indexed_id("t", s));

    std::vector<ReprMatrix> train_members, test_members;
    out.rotations.reserve(static_cast<std::size_t>(spec.n_models));
    for (Index i = 0; i < spec.n_models; ++i) {
        Matrix basis = random_orthogonal(spec.d, sampler);
        Matrix train_noise = detail::gaussian_matrix(spec.n_train, spec.d, sampler);
        Matrix test_noise = detail::gaussian_matrix(spec.m_test, spec.d, sampler);

        Matrix train_view = out.latent_train * basis;
        Matrix test_view = out.latent_test * basis;
        if (spec.noise_sigma > 0.0) {
            train_view += spec.noise_sigma * train_noise;
            test_view += spec.noise_sigma * test_noise;
        }
        Index width = spec.width_schedule.empty()
                          ? spec.d
                          : spec.width_schedule[static_cast<std::size_t>(i)];
        std::string id = detail::indexed_id("model-", i);
        train_members.push_back({id, train_ids, train_view.leftCols(width)});
        test_members.push_back({id, test_ids, test_view.leftCols(width)});
        out.rotations.push_back(std::move(basis));
    }

    out.train = build_pool(std::move(train_members));
    out.test = build_pool(std::move(test_members));
    out.train.name = "train";
    out.test.name = "test";
    return out;
}

/// Best objective found by Haar sampling over O(d). A Monte Carlo
/// reference point for the closed-form fit, not a practical solver.
inline ProcrustesSolution brute_force_best_orthogonal(const Matrix& source, const Matrix& target,
                                                      Index samples, std::uint64_t seed) {
    if (samples < 1) fail(Errc::invalid_config, "sample count must be positive");
    GaussianSampler sampler(seed);
    ProcrustesSolution best;
    best.objective = std::numeric_limits<double>::infinity();
    for (Index s = 0; s < samples; ++s) {
        Matrix candidate = random_orthogonal(source.cols(), sampler);
        double objective = (source * candidate - target).squaredNorm();
        if (objective < best.objective) {
            best.objective = objective;
            best.rotation = std::move(candidate);
        }
    }
    return best;
}

}  // namespace baryalign
