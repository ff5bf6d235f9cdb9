#pragma once

#include <stdexcept>
#include <string>

namespace baryalign {

/// Failure categories surfaced by the library. The CLI maps each category
/// to a documented exit code.
enum class Errc {
    // pool construction / validation
    empty_matrix,
    mismatched_stimuli,
    duplicate_model_id,
    too_few_models,
    non_finite_data,
    target_too_small,
    // linear algebra
    shape_mismatch,
    non_finite_input,
    svd_failure,
    // training
    degenerate_template,
    numerical_instability,
    model_pool_mismatch,
    invalid_config,
    // projection / scoring / metrics
    unknown_model_id,
    width_mismatch,
    too_few_stimuli,
    k_too_large,
    stimulus_mismatch,
    // storage
    bad_magic,
    version_unsupported,
    truncated_payload,
    io_failure,
    manifest_parse,
    missing_file,
    parse_failure,
};

inline const char* errc_name(Errc c) noexcept {
    switch (c) {
        case Errc::empty_matrix: return "EmptyMatrix";
        case Errc::mismatched_stimuli: return "MismatchedStimuli";
        case Errc::duplicate_model_id: return "DuplicateModelId";
        case Errc::too_few_models: return "TooFewModels";
        case Errc::non_finite_data: return "NonFiniteData";
        case Errc::target_too_small: return "TargetTooSmall";
        case Errc::shape_mismatch: return "ShapeMismatch";
        case Errc::non_finite_input: return "NonFiniteInput";
        case Errc::svd_failure: return "SvdFailure";
        case Errc::degenerate_template: return "DegenerateTemplate";
        case Errc::numerical_instability: return "NumericalInstability";
        case Errc::model_pool_mismatch: return "ModelPoolMismatch";
        case Errc::invalid_config: return "InvalidConfig";
        case Errc::unknown_model_id: return "UnknownModelId";
        case Errc::width_mismatch: return "WidthMismatch";
        case Errc::too_few_stimuli: return "TooFewStimuli";
        case Errc::k_too_large: return "KTooLarge";
        case Errc::stimulus_mismatch: return "StimulusMismatch";
        case Errc::bad_magic: return "BadMagic";
        case Errc::version_unsupported: return "VersionUnsupported";
        case Errc::truncated_payload: return "TruncatedPayload";
        case Errc::io_failure: return "IoFailure";
        case Errc::manifest_parse: return "ManifestParse";
        case Errc::missing_file: return "MissingFile";
        case Errc::parse_failure: return "ParseFailure";
    }
    return "UnknownError";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace baryalign
