#pragma once

#include <Eigen/Dense>

#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "baryalign/errors.hpp"

namespace baryalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// One model's responses: row j holds the representation of stimulus j.
struct ReprMatrix {
    std::string model_id;
    std::vector<std::string> stimulus_ids;
    Matrix data;
};

/// A set of representation matrices over the same ordered stimulus list,
/// zero-padded on the right to a shared width. Padding appends zero
/// columns only, so pairwise row distances within each member are
/// unchanged.
struct ModelPool {
    std::string name;
    std::vector<ReprMatrix> members;
    std::vector<Index> original_widths;
    Index common_width = 0;

    Index n_models() const { return static_cast<Index>(members.size()); }
    Index n_stimuli() const { return members.empty() ? 0 : members.front().data.rows(); }
    const std::vector<std::string>& stimulus_ids() const { return members.front().stimulus_ids; }
};

/// Right-pad with zero columns to exactly target_width.
inline Matrix pad_matrix(const Matrix& data, Index target_width) {
    if (target_width < data.cols())
        fail(Errc::target_too_small, "target width " + std::to_string(target_width) +
                                         " is below matrix width " + std::to_string(data.cols()));
    if (target_width == data.cols()) return data;
    Matrix out = Matrix::Zero(data.rows(), target_width);
    out.leftCols(data.cols()) = data;
    return out;
}

/// Validate members and pad them to a shared width.
///
/// target_width = 0 means "widest member". All members must share the
/// same ordered stimulus list, carry distinct model ids, be non-empty,
/// and contain only finite values.
inline ModelPool build_pool(std::vector<ReprMatrix> members, Index target_width = 0) {
    if (members.size() < 2)
        fail(Errc::too_few_models, "a pool needs at least 2 models, got " +
                                       std::to_string(members.size()));

    std::unordered_set<std::string> seen;
    for (const auto& m : members) {
        if (m.data.rows() == 0 || m.data.cols() == 0)
            fail(Errc::empty_matrix, "model '" + m.model_id + "' has an empty matrix");
        if (static_cast<std::size_t>(m.data.rows()) != m.stimulus_ids.size())
            fail(Errc::mismatched_stimuli,
                 "model '" + m.model_id + "' has " + std::to_string(m.data.rows()) +
                     " rows but " + std::to_string(m.stimulus_ids.size()) + " stimulus ids");
        if (!seen.insert(m.model_id).second)
            fail(Errc::duplicate_model_id, "model id '" + m.model_id + "' appears twice");
        if (!m.data.allFinite())
            fail(Errc::non_finite_data, "model '" + m.model_id + "' contains NaN or Inf");
    }
    const auto& ref_ids = members.front().stimulus_ids;
    for (const auto& m : members) {
        if (m.stimulus_ids != ref_ids)
            fail(Errc::mismatched_stimuli,
                 "model '" + m.model_id + "' lists different stimuli than model '" +
                     members.front().model_id + "'");
    }

    Index widest = 0;
    for (const auto& m : members) widest = std::max(widest, m.data.cols());
    Index width = target_width == 0 ? widest : target_width;

    ModelPool pool;
    pool.common_width = width;
    pool.original_widths.reserve(members.size());
    pool.members.reserve(members.size());
    for (auto& m : members) {
        pool.original_widths.push_back(m.data.cols());
        m.data = pad_matrix(m.data, width);
        pool.members.push_back(std::move(m));
    }
    return pool;
}

/// Outcome bookkeeping for one training run.
struct TrainingMeta {
    Index iterations_run = 0;
    double final_relative_change = 0.0;
    double final_objective = 0.0;
    double epsilon = 0.0;
    Index max_iterations = 0;
    bool converged = false;
};

/// A trained universal space: the template plus one orthogonal transform
/// per pool member, keyed by model id in pool order.
struct AlignmentModel {
    Matrix barycenter;
    std::vector<std::string> model_ids;
    std::vector<Matrix> transforms;
    std::vector<Index> original_widths;
    TrainingMeta meta;

    Index width() const { return barycenter.cols(); }
    Index n_models() const { return static_cast<Index>(model_ids.size()); }
};

enum class Similarity { cosine };

inline const char* similarity_name(Similarity s) noexcept {
    switch (s) {
        case Similarity::cosine: return "cosine";
    }
    return "unknown";
}

/// Per-stimulus cross-model agreement scores.
struct ConsistencyReport {
    std::vector<std::string> stimulus_ids;
    std::vector<double> scores;
    std::vector<std::string> pool_model_ids;
    Similarity similarity_kind = Similarity::cosine;
    Index zero_norm_rows = 0;
};

}  // namespace baryalign
