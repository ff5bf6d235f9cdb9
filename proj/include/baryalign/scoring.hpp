#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "baryalign/errors.hpp"
#include "baryalign/parallel.hpp"
#include "baryalign/types.hpp"

namespace baryalign {

/// Rows below this norm are treated as carrying no direction.
inline constexpr double kZeroNormThreshold = 1e-12;

/// Pool members mapped into the shared space: one m x d matrix per model,
/// rows aligned to stimulus_ids.
struct ProjectedPool {
    std::vector<Matrix> members;
    std::vector<std::string> stimulus_ids;
    std::vector<std::string> model_ids;

    Index n_models() const { return static_cast<Index>(members.size()); }
    Index n_stimuli() const { return members.empty() ? 0 : members.front().rows(); }
    Index width() const { return members.empty() ? 0 : members.front().cols(); }
};

/// Cosine similarity; either vector with norm below kZeroNormThreshold
/// yields 0 rather than a division blow-up.
template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
    if (u.size() != v.size()) fail(Errc::shape_mismatch, "cosine arguments differ in length");
    double nu = u.norm();
    double nv = v.norm();
    if (nu < kZeroNormThreshold || nv < kZeroNormThreshold) return 0.0;
    return u.dot(v) / (nu * nv);
}

/// Apply a trained model's transforms to a pool of held-out matrices.
///
/// Every pool member must belong to a model id the trained model knows,
/// at the width that model was trained with. By default the pool must
/// cover exactly the trained id set; allow_subset relaxes that to any
/// non-empty subset. Members are padded to the trained width before the
/// transform is applied.
inline ProjectedPool project(const ModelPool& pool, const AlignmentModel& model,
                             bool allow_subset = false, int threads = 1) {
    std::unordered_map<std::string, std::size_t> trained;
    for (std::size_t k = 0; k < model.model_ids.size(); ++k) trained.emplace(model.model_ids[k], k);

    if (!allow_subset && pool.members.size() != model.model_ids.size())
        fail(Errc::model_pool_mismatch,
             "pool has " + std::to_string(pool.members.size()) + " models, trained model has " +
                 std::to_string(model.model_ids.size()) +
                 " (pass allow_subset to project a subset)");

    std::vector<std::size_t> slot(pool.members.size());
    for (std::size_t i = 0; i < pool.members.size(); ++i) {
        auto it = trained.find(pool.members[i].model_id);
        if (it == trained.end())
            fail(Errc::unknown_model_id,
                 "model '" + pool.members[i].model_id + "' was not part of training");
        slot[i] = it->second;
        if (pool.original_widths[i] != model.original_widths[it->second])
            fail(Errc::width_mismatch,
                 "model '" + pool.members[i].model_id + "' has width " +
                     std::to_string(pool.original_widths[i]) + ", trained width is " +
                     std::to_string(model.original_widths[it->second]));
    }
    if (pool.common_width > model.width())
        fail(Errc::width_mismatch, "pool width " + std::to_string(pool.common_width) +
                                       " exceeds trained width " + std::to_string(model.width()));

    ProjectedPool out;
    out.stimulus_ids = pool.stimulus_ids();
    out.members.resize(pool.members.size());
    out.model_ids.reserve(pool.members.size());
    for (const auto& m : pool.members) out.model_ids.push_back(m.model_id);

    parallel_for(pool.members.size(), threads, [&](std::size_t i) {
        out.members[i] =
            pad_matrix(pool.members[i].data, model.width()) * model.transforms[slot[i]];
    });
    return out;
}

/// Mean pairwise row agreement per stimulus.
///
/// For stimulus j, the score averages sim(row_p, row_q) over all ordered
/// model pairs p != q, so N models contribute N(N-1) terms. Rows with
/// near-zero norm contribute similarity 0 and are tallied in
/// zero_norm_rows (once per row, not per pair).
inline ConsistencyReport consistency_scores(const ProjectedPool& projected,
                                            Similarity similarity = Similarity::cosine,
                                            int threads = 1) {
    const std::size_t n = projected.members.size();
    if (n < 2) fail(Errc::too_few_models, "consistency needs at least 2 models");
    const Index m = projected.members.front().rows();
    const Index d = projected.members.front().cols();
    if (m == 0 || d == 0) fail(Errc::shape_mismatch, "projected members are empty");
    for (const auto& member : projected.members) {
        if (member.rows() != m || member.cols() != d)
            fail(Errc::shape_mismatch, "projected members differ in shape");
        if (!member.allFinite()) fail(Errc::non_finite_input, "projected member has NaN or Inf");
    }
    if (static_cast<std::size_t>(m) != projected.stimulus_ids.size())
        fail(Errc::stimulus_mismatch, "stimulus id count does not match row count");

    ConsistencyReport report;
    report.stimulus_ids = projected.stimulus_ids;
    report.pool_model_ids = projected.model_ids;
    report.similarity_kind = similarity;
    report.scores.assign(static_cast<std::size_t>(m), 0.0);

    // Row norms up front: pair loops reuse them and the zero-row tally
    // counts each row exactly once.
    std::vector<std::vector<double>> norms(n, std::vector<double>(static_cast<std::size_t>(m)));
    Index zero_rows = 0;
    for (std::size_t p = 0; p < n; ++p) {
        for (Index j = 0; j < m; ++j) {
            double norm = projected.members[p].row(j).norm();
            norms[p][static_cast<std::size_t>(j)] = norm;
            if (norm < kZeroNormThreshold) ++zero_rows;
        }
    }
    report.zero_norm_rows = zero_rows;

    const double denom = static_cast<double>(n) * static_cast<double>(n - 1);
    parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t j) {
        const Index row = static_cast<Index>(j);
        double acc = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = 0; q < n; ++q) {
                if (p == q) continue;
                if (norms[p][j] < kZeroNormThreshold || norms[q][j] < kZeroNormThreshold) continue;
                acc += projected.members[p].row(row).dot(projected.members[q].row(row)) /
                       (norms[p][j] * norms[q][j]);
            }
        }
        report.scores[j] = acc / denom;
    });
    return report;
}

}  // namespace baryalign
