#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "baryalign/errors.hpp"
#include "baryalign/parallel.hpp"
#include "baryalign/procrustes.hpp"
#include "baryalign/types.hpp"

namespace baryalign {

struct TrainConfig {
    double epsilon = 1e-6;      // relative-change stopping threshold
    Index max_iterations = 100;
    bool record_trace = false;
    Matrix initial_template;    // empty: start from the member mean
};

/// Per-iteration diagnostics, populated when record_trace is set.
struct TrainTrace {
    std::vector<double> objectives;        // sum_i ||X_i T_i - M_next||_F^2
    std::vector<double> relative_changes;  // ||M_next - M||_F / ||M||_F
};

struct TrainResult {
    AlignmentModel model;
    TrainTrace trace;
};

/// sum_i ||X_i T_i - M||_F^2 for a trained model over its own pool.
inline double total_objective(const ModelPool& pool, const AlignmentModel& model) {
    if (pool.n_models() != model.n_models())
        fail(Errc::model_pool_mismatch, "pool has " + std::to_string(pool.n_models()) +
                                            " models, model expects " +
                                            std::to_string(model.n_models()));
    for (Index i = 0; i < pool.n_models(); ++i) {
        if (pool.members[static_cast<std::size_t>(i)].model_id !=
            model.model_ids[static_cast<std::size_t>(i)])
            fail(Errc::model_pool_mismatch,
                 "model id order differs at position " + std::to_string(i));
    }
    if (pool.common_width != model.width())
        fail(Errc::model_pool_mismatch, "pool width " + std::to_string(pool.common_width) +
                                            " differs from model width " +
                                            std::to_string(model.width()));
    double acc = 0.0;
    for (std::size_t i = 0; i < pool.members.size(); ++i)
        acc += (pool.members[i].data * model.transforms[i] - model.barycenter).squaredNorm();
    return acc;
}

/// Alternate between per-model orthogonal fits and a template refresh.
///
/// The template starts as the arithmetic mean of the padded members. Each
/// iteration fits every member against the iteration-start template, then
/// replaces the template with the mean of the aligned members. All fits in
/// an iteration use the same template, so results do not depend on member
/// order or thread count. Stops when the template's relative change drops
/// below epsilon, or after max_iterations.
inline TrainResult train_barycenter(const ModelPool& pool, const TrainConfig& config = {},
                                    int threads = 1) {
    if (!(config.epsilon > 0.0) || !std::isfinite(config.epsilon))
        fail(Errc::invalid_config, "epsilon must be a positive finite value");
    if (config.max_iterations < 1)
        fail(Errc::invalid_config, "max_iterations must be at least 1");
    if (pool.n_models() < 2)
        fail(Errc::too_few_models, "training needs at least 2 models");

    const std::size_t n = pool.members.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    Matrix current;
    if (config.initial_template.size() != 0) {
        if (config.initial_template.rows() != pool.n_stimuli() ||
            config.initial_template.cols() != pool.common_width)
            fail(Errc::shape_mismatch, "initial template must match the padded pool shape");
        if (!config.initial_template.allFinite())
            fail(Errc::non_finite_input, "initial template has NaN or Inf");
        current = config.initial_template;
    } else {
        current = pool.members[0].data;
        for (std::size_t i = 1; i < n; ++i) current += pool.members[i].data;
        current *= inv_n;
    }

    std::vector<Matrix> transforms(n);
    std::vector<Matrix> aligned(n);

    TrainResult result;
    TrainingMeta& meta = result.model.meta;
    meta.epsilon = config.epsilon;
    meta.max_iterations = config.max_iterations;

    double previous_objective = 0.0;
    bool have_previous = false;

    for (Index t = 0; t < config.max_iterations; ++t) {
        double current_norm = current.norm();
        if (current_norm == 0.0)
            fail(Errc::degenerate_template,
                 "template vanished at iteration " + std::to_string(t) +
                     "; members cancel exactly");

        parallel_for(n, threads, [&](std::size_t i) {
            transforms[i] =
                solve_orthogonal_procrustes(pool.members[i].data, current).rotation;
            aligned[i] = pool.members[i].data * transforms[i];
        });

        Matrix next = aligned[0];
        for (std::size_t i = 1; i < n; ++i) next += aligned[i];
        next *= inv_n;

        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) objective += (aligned[i] - next).squaredNorm();
        // The alternation minimizes each block in turn, so the objective
        // cannot rise; more than 1e-9 of growth means the SVD went wrong.
        if (have_previous && objective > previous_objective + 1e-9)
            fail(Errc::numerical_instability,
                 "objective rose from " + std::to_string(previous_objective) + " to " +
                     std::to_string(objective) + " at iteration " + std::to_string(t));
        previous_objective = objective;
        have_previous = true;

        double relative_change = (next - current).norm() / current_norm;
        if (config.record_trace) {
            result.trace.objectives.push_back(objective);
            result.trace.relative_changes.push_back(relative_change);
        }

        current = std::move(next);
        meta.iterations_run = t + 1;
        meta.final_relative_change = relative_change;
        meta.final_objective = objective;
        if (relative_change < config.epsilon) {
            meta.converged = true;
            break;
        }
    }

    result.model.barycenter = std::move(current);
    result.model.transforms = std::move(transforms);
    result.model.original_widths = pool.original_widths;
    result.model.model_ids.reserve(n);
    for (const auto& m : pool.members) result.model.model_ids.push_back(m.model_id);
    return result;
}

}  // namespace baryalign
