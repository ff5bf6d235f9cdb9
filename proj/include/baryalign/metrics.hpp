#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "baryalign/errors.hpp"
#include "baryalign/parallel.hpp"
#include "baryalign/scoring.hpp"
#include "baryalign/types.hpp"

namespace baryalign {

/// Expected top-K hit rate for uninformed retrieval over m candidates.
inline double chance_level(Index m, Index k) {
    if (m < 1) fail(Errc::invalid_config, "gallery size must be positive");
    if (k < 1) fail(Errc::invalid_config, "K must be at least 1");
    if (k > m)
        fail(Errc::k_too_large,
             "K = " + std::to_string(k) + " exceeds gallery size " + std::to_string(m));
    return static_cast<double>(k) / static_cast<double>(m);
}

/// Pearson correlation of two equal-length vectors. Returns NaN when
/// either input is constant (zero variance).
inline double score_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) fail(Errc::shape_mismatch, "score vectors differ in length");
    if (a.size() < 2) fail(Errc::too_few_stimuli, "correlation needs at least 2 values");
    const double n = static_cast<double>(a.size());
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= n;
    mean_b /= n;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - mean_a;
        double db = b[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0) return std::numeric_limits<double>::quiet_NaN();
    double rho = cov / std::sqrt(var_a * var_b);
    return std::clamp(rho, -1.0, 1.0);
}

struct CorrelationResult {
    std::vector<double> per_model;
    Index skipped_constant_dimensions = 0;  // (ordered pair, dimension) triples skipped
};

namespace detail {

inline void check_projected(const ProjectedPool& pool) {
    if (pool.members.size() < 2) fail(Errc::too_few_models, "metrics need at least 2 models");
    const Index m = pool.members.front().rows();
    const Index d = pool.members.front().cols();
    if (m < 2) fail(Errc::too_few_stimuli, "metrics need at least 2 stimuli");
    if (d < 1) fail(Errc::shape_mismatch, "projected members have no dimensions");
    for (const auto& member : pool.members) {
        if (member.rows() != m || member.cols() != d)
            fail(Errc::shape_mismatch, "projected members differ in shape");
        if (!member.allFinite()) fail(Errc::non_finite_input, "projected member has NaN or Inf");
    }
}

}  // namespace detail

/// Per-model mean of per-dimension Pearson correlations against every
/// other model.
///
/// A (pair, dimension) triple is skipped when either column is constant;
/// skips are tallied over ordered pairs. Corr(i) averages the surviving
/// triples with i as the query model, and is NaN if none survive.
inline CorrelationResult correlation_score(const ProjectedPool& pool, int threads = 1) {
    detail::check_projected(pool);
    const std::size_t n = pool.members.size();
    const Index m = pool.members.front().rows();
    const Index d = pool.members.front().cols();
    const double inv_m = 1.0 / static_cast<double>(m);

    // Column statistics: mean for centering, min/max for exact constancy.
    std::vector<Vector> means(n);
    std::vector<std::vector<bool>> constant(n, std::vector<bool>(static_cast<std::size_t>(d)));
    for (std::size_t i = 0; i < n; ++i) {
        means[i] = pool.members[i].colwise().mean();
        for (Index k = 0; k < d; ++k) {
            const auto col = pool.members[i].col(k);
            constant[i][static_cast<std::size_t>(k)] = col.maxCoeff() == col.minCoeff();
        }
    }

    CorrelationResult result;
    result.per_model.assign(n, 0.0);
    std::vector<Index> skipped_per_model(n, 0);

    parallel_for(n, threads, [&](std::size_t i) {
        double acc = 0.0;
        Index used = 0;
        Index skipped = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            for (Index k = 0; k < d; ++k) {
                if (constant[i][static_cast<std::size_t>(k)] ||
                    constant[j][static_cast<std::size_t>(k)]) {
                    ++skipped;
                    continue;
                }
                auto a = pool.members[i].col(k);
                auto b = pool.members[j].col(k);
                double mean_a = means[i](k);
                double mean_b = means[j](k);
                double cov = (a.array() - mean_a).cwiseProduct(b.array() - mean_b).sum() * inv_m;
                double var_a = (a.array() - mean_a).square().sum() * inv_m;
                double var_b = (b.array() - mean_b).square().sum() * inv_m;
                double rho = cov / std::sqrt(var_a * var_b);
                acc += std::clamp(rho, -1.0, 1.0);
                ++used;
            }
        }
        result.per_model[i] = used == 0 ? std::numeric_limits<double>::quiet_NaN()
                                        : acc / static_cast<double>(used);
        skipped_per_model[i] = skipped;
    });
    for (Index s : skipped_per_model) result.skipped_constant_dimensions += s;
    return result;
}

/// Per-model mean of per-dimension root-mean-square column differences
/// against every other model. No dimensions are skipped.
inline std::vector<double> rms_score(const ProjectedPool& pool, int threads = 1) {
    detail::check_projected(pool);
    const std::size_t n = pool.members.size();
    const Index m = pool.members.front().rows();
    const Index d = pool.members.front().cols();
    const double inv_m = 1.0 / static_cast<double>(m);

    std::vector<double> out(n, 0.0);
    parallel_for(n, threads, [&](std::size_t i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            for (Index k = 0; k < d; ++k) {
                double mse = (pool.members[i].col(k) - pool.members[j].col(k)).squaredNorm() * inv_m;
                acc += std::sqrt(mse);
            }
        }
        out[i] = acc / (static_cast<double>(n - 1) * static_cast<double>(d));
    });
    return out;
}

/// Top-K retrieval accuracy per model.
///
/// For each ordered pair (i, j) and stimulus s, row s of model i queries
/// model j's rows by Euclidean distance. Candidates are ordered by
/// (distance, row index); the query scores a hit when its true row sits
/// within the first K. Acc_K(i) averages hits over the (n-1) galleries
/// and m stimuli.
inline std::vector<std::vector<double>> retrieval_accuracy(const ProjectedPool& pool,
                                                           const std::vector<Index>& ks,
                                                           int threads = 1) {
    detail::check_projected(pool);
    const std::size_t n = pool.members.size();
    const Index m = pool.members.front().rows();
    if (ks.empty()) fail(Errc::invalid_config, "at least one K is required");
    for (Index k : ks) (void)chance_level(m, k);

    std::vector<std::vector<double>> out(n, std::vector<double>(ks.size(), 0.0));
    parallel_for(n, threads, [&](std::size_t i) {
        std::vector<Index> hits(ks.size(), 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const Matrix& queries = pool.members[i];
            const Matrix& gallery = pool.members[j];
            for (Index s = 0; s < m; ++s) {
                const double true_dist = (queries.row(s) - gallery.row(s)).squaredNorm();
                Index rank = 0;
                for (Index y = 0; y < m; ++y) {
                    if (y == s) continue;
                    double dist = (queries.row(s) - gallery.row(y)).squaredNorm();
                    if (dist < true_dist || (dist == true_dist && y < s)) ++rank;
                }
                for (std::size_t t = 0; t < ks.size(); ++t)
                    if (rank < ks[t]) ++hits[t];
            }
        }
        const double denom = static_cast<double>(n - 1) * static_cast<double>(m);
        for (std::size_t t = 0; t < ks.size(); ++t)
            out[i][t] = static_cast<double>(hits[t]) / denom;
    });
    return out;
}

/// Full evaluation bundle over a projected pool.
struct EvalReport {
    std::vector<std::string> model_ids;
    std::vector<double> correlation;
    std::vector<double> rms;
    std::vector<Index> ks;
    std::vector<std::vector<double>> retrieval;  // [model][k index]
    std::vector<double> chance;                  // [k index]
    Index n_stimuli = 0;
    Index skipped_constant_dimensions = 0;
};

inline EvalReport evaluate_pool(const ProjectedPool& pool, const std::vector<Index>& ks,
                                int threads = 1) {
    detail::check_projected(pool);
    EvalReport report;
    report.model_ids = pool.model_ids;
    report.n_stimuli = pool.n_stimuli();
    report.ks = ks;

    CorrelationResult corr = correlation_score(pool, threads);
    report.correlation = std::move(corr.per_model);
    report.skipped_constant_dimensions = corr.skipped_constant_dimensions;
    report.rms = rms_score(pool, threads);
    report.retrieval = retrieval_accuracy(pool, ks, threads);
    report.chance.reserve(ks.size());
    for (Index k : ks) report.chance.push_back(chance_level(report.n_stimuli, k));
    return report;
}

}  // namespace baryalign
