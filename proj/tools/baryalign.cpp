// Command-line front end: synth -> train -> project -> score -> eval.
//
// Every run is deterministic for a given seed and flag set; --threads
// changes wall time only, never bytes. Outputs are written atomically and
// never overwrite existing paths.

#include "CLI11.hpp"

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "baryalign/baryalign.hpp"

namespace ba = baryalign;
namespace fs = std::filesystem;

namespace {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel g_log_level = LogLevel::info;

void log_info(const std::string& msg) {
    if (g_log_level >= LogLevel::info) std::cerr << msg << "\n";
}

void log_debug(const std::string& msg) {
    if (g_log_level >= LogLevel::debug) std::cerr << msg << "\n";
}

// Exit codes, also documented in the README:
//   0 success, 1 unexpected error, 2 usage error, 3 file IO,
//   4 file format, 5 input validation, 6 numerical failure,
//   7 non-convergence under --strict.
int exit_code_for(ba::Errc code) {
    switch (code) {
        case ba::Errc::io_failure:
        case ba::Errc::missing_file:
            return 3;
        case ba::Errc::bad_magic:
        case ba::Errc::version_unsupported:
        case ba::Errc::truncated_payload:
        case ba::Errc::manifest_parse:
        case ba::Errc::parse_failure:
            return 4;
        case ba::Errc::svd_failure:
        case ba::Errc::degenerate_template:
        case ba::Errc::numerical_instability:
            return 6;
        default:
            return 5;
    }
}

fs::path resolve_manifest(const fs::path& path, std::string_view default_name) {
    if (fs::is_directory(path)) return path / default_name;
    return path;
}

void refuse_existing_file(const fs::path& path) {
    if (fs::exists(path))
        ba::fail(ba::Errc::io_failure, "output already exists: " + path.string());
}

std::vector<ba::Index> parse_topk(const std::string& text) {
    std::vector<ba::Index> ks;
    for (const auto& field : ba::detail::split_on(text, ',')) {
        long long v = ba::detail::parse_integer(field, "--topk");
        if (v < 1) ba::fail(ba::Errc::invalid_config, "--topk entries must be >= 1");
        ks.push_back(static_cast<ba::Index>(v));
    }
    if (ks.empty()) ba::fail(ba::Errc::invalid_config, "--topk needs at least one value");
    return ks;
}

std::string short_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ---- report rendering for stdout -------------------------------------------

void print_consistency(const ba::ConsistencyReport& report, const std::string& format) {
    if (format == "tsv") {
        std::cout << ba::encode_consistency_report(report);
        return;
    }
    std::printf("%-24s %s\n", "stimulus_id", "score");
    for (std::size_t j = 0; j < report.stimulus_ids.size(); ++j)
        std::printf("%-24s %s\n", report.stimulus_ids[j].c_str(),
                    short_double(report.scores[j]).c_str());
}

void print_eval(const ba::EvalReport& report, const std::string& format) {
    if (format == "tsv") {
        std::cout << ba::encode_eval_report(report);
        return;
    }
    std::printf("%-24s %12s %12s", "model_id", "correlation", "rms");
    for (ba::Index k : report.ks) std::printf(" %11s%lld", "acc@", static_cast<long long>(k));
    std::printf("\n");
    for (std::size_t i = 0; i < report.model_ids.size(); ++i) {
        std::printf("%-24s %12s %12s", report.model_ids[i].c_str(),
                    short_double(report.correlation[i]).c_str(),
                    short_double(report.rms[i]).c_str());
        for (std::size_t t = 0; t < report.ks.size(); ++t)
            std::printf(" %12s", short_double(report.retrieval[i][t]).c_str());
        std::printf("\n");
    }
    std::printf("chance:");
    for (std::size_t t = 0; t < report.ks.size(); ++t)
        std::printf(" acc@%lld=%s", static_cast<long long>(report.ks[t]),
                    short_double(report.chance[t]).c_str());
    std::printf("\n");
}

// ---- subcommand payloads -----------------------------------------------------

struct TrainArgs {
    std::string pool;
    std::string out;
    double eps = 1e-6;
    long long max_iters = 100;
    bool center = false;
    bool trace = false;
    bool strict = false;
};

struct ProjectArgs {
    std::string model;
    std::string pool;
    std::string out;
    bool subset = false;
};

struct ScoreArgs {
    std::string projected;
    std::string out;
    std::string sim = "cosine";
    std::string format = "table";
};

struct EvalArgs {
    std::string projected;
    std::string out;
    std::string topk = "1,5,10";
    std::string format = "table";
};

struct SynthArgs {
    long long n_train = 100;
    long long m_test = 100;
    long long d = 8;
    long long models = 4;
    double noise = 0.0;
    std::string widths;
    std::string out;
};

int run_train(const TrainArgs& args, int threads) {
    ba::ModelPool pool = ba::load_pool(resolve_manifest(args.pool, ba::kPoolManifestName));
    log_info("loaded pool '" + pool.name + "': " + std::to_string(pool.n_models()) +
             " models, " + std::to_string(pool.n_stimuli()) + " stimuli, width " +
             std::to_string(pool.common_width));

    ba::ModelBundle bundle;
    if (args.center) {
        bundle.centered = true;
        for (std::size_t i = 0; i < pool.members.size(); ++i) {
            // Means over the padded matrix: padding columns average to
            // zero, so this equals centering before padding.
            ba::Vector means = pool.members[i].data.colwise().mean().transpose();
            pool.members[i].data.rowwise() -= means.transpose();
            bundle.column_means.push_back(means.head(pool.original_widths[i]));
        }
    }

    ba::TrainConfig config;
    config.epsilon = args.eps;
    config.max_iterations = static_cast<ba::Index>(args.max_iters);
    config.record_trace = args.trace;
    ba::TrainResult result = ba::train_barycenter(pool, config, threads);
    bundle.model = std::move(result.model);

    const ba::TrainingMeta& meta = bundle.model.meta;
    std::printf("iterations_run: %lld\n", static_cast<long long>(meta.iterations_run));
    std::printf("final_objective: %s\n", ba::detail::format_double(meta.final_objective).c_str());
    std::printf("final_relative_change: %s\n",
                ba::detail::format_double(meta.final_relative_change).c_str());
    std::printf("converged: %s\n", meta.converged ? "true" : "false");

    ba::save_model_bundle(bundle, args.out);
    if (args.trace) {
        std::string trace = "iteration\tobjective\trelative_change\n";
        for (std::size_t t = 0; t < result.trace.objectives.size(); ++t)
            trace += std::to_string(t) + "\t" +
                     ba::detail::format_double(result.trace.objectives[t]) + "\t" +
                     ba::detail::format_double(result.trace.relative_changes[t]) + "\n";
        ba::detail::write_file_atomic(fs::path(args.out) / "trace.tsv", trace);
    }
    log_info("wrote model bundle to " + args.out);

    if (!meta.converged && args.strict) {
        std::cerr << "error: did not converge within " << meta.max_iterations
                  << " iterations (--strict)\n";
        return 7;
    }
    return 0;
}

int run_project(const ProjectArgs& args, int threads) {
    ba::ModelBundle bundle = ba::load_model_bundle(args.model);
    ba::ModelPool pool = ba::load_pool(resolve_manifest(args.pool, ba::kPoolManifestName));
    if (bundle.centered) {
        std::unordered_map<std::string, std::size_t> slot;
        for (std::size_t k = 0; k < bundle.model.model_ids.size(); ++k)
            slot.emplace(bundle.model.model_ids[k], k);
        for (std::size_t i = 0; i < pool.members.size(); ++i) {
            auto it = slot.find(pool.members[i].model_id);
            if (it == slot.end())
                ba::fail(ba::Errc::unknown_model_id,
                         "model '" + pool.members[i].model_id + "' was not part of training");
            const ba::Vector& means = bundle.column_means[it->second];
            if (means.size() > pool.members[i].data.cols())
                ba::fail(ba::Errc::width_mismatch,
                         "stored means are wider than member '" + pool.members[i].model_id + "'");
            // Subtract the means learned at training time; padding
            // columns are untouched.
            pool.members[i].data.leftCols(means.size()).rowwise() -= means.transpose();
        }
    }
    ba::ProjectedPool projected = ba::project(pool, bundle.model, args.subset, threads);
    ba::save_projected(projected, args.out);
    log_info("projected " + std::to_string(projected.n_models()) + " models x " +
             std::to_string(projected.n_stimuli()) + " stimuli into " + args.out);
    return 0;
}

int run_score(const ScoreArgs& args, int threads) {
    if (args.sim != "cosine")
        ba::fail(ba::Errc::invalid_config, "unsupported similarity '" + args.sim + "'");
    ba::ProjectedPool projected =
        ba::load_projected(resolve_manifest(args.projected, ba::kProjectedManifestName));
    ba::ConsistencyReport report =
        ba::consistency_scores(projected, ba::Similarity::cosine, threads);
    if (!args.out.empty()) {
        refuse_existing_file(args.out);
        ba::save_consistency_report(report, args.out);
        double mean = 0.0;
        for (double s : report.scores) mean += s;
        mean /= static_cast<double>(report.scores.size());
        log_info("wrote " + std::to_string(report.scores.size()) + " scores to " + args.out +
                 " (mean " + short_double(mean) + ")");
    } else {
        print_consistency(report, args.format);
    }
    return 0;
}

int run_eval(const EvalArgs& args, int threads) {
    ba::ProjectedPool projected =
        ba::load_projected(resolve_manifest(args.projected, ba::kProjectedManifestName));
    ba::EvalReport report = ba::evaluate_pool(projected, parse_topk(args.topk), threads);
    if (!args.out.empty()) {
        refuse_existing_file(args.out);
        ba::save_eval_report(report, args.out);
        log_info("wrote evaluation of " + std::to_string(report.model_ids.size()) +
                 " models to " + args.out);
    } else {
        print_eval(report, args.format);
    }
    return 0;
}

int run_synth(const SynthArgs& args, std::uint64_t seed) {
    ba::SynthSpec spec;
    spec.n_train = static_cast<ba::Index>(args.n_train);
    spec.m_test = static_cast<ba::Index>(args.m_test);
    spec.d = static_cast<ba::Index>(args.d);
    spec.n_models = static_cast<ba::Index>(args.models);
    spec.noise_sigma = args.noise;
    spec.seed = seed;
    if (!args.widths.empty())
        for (const auto& field : ba::detail::split_on(args.widths, ','))
            spec.width_schedule.push_back(
                static_cast<ba::Index>(ba::detail::parse_integer(field, "--widths")));

    // Generation is single-threaded by design: one sampler, one stream.
    ba::SynthPools pools = ba::make_synthetic_pool(spec);
    ba::save_synth_bundle(pools, spec, args.out);
    log_info("wrote synthetic bundle (seed " + std::to_string(seed) + ") to " + args.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Align representation matrices into a shared space and score cross-model "
                 "agreement per stimulus"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    int threads = 0;
    std::string log_level = "info";
    bool show_version = false;
    app.add_option("--seed", seed, "Random seed for synthetic data")->capture_default_str();
    app.add_option("--threads", threads, "Worker threads; 0 = all hardware threads")
        ->capture_default_str();
    app.add_option("--log-level", log_level, "quiet, info, or debug")
        ->check(CLI::IsMember({"quiet", "info", "debug"}))
        ->capture_default_str();
    app.add_flag("--version", show_version, "Print tool and format versions, then exit");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Fit the shared template and per-model transforms");
    train->fallthrough();
    train->add_option("--pool", train_args.pool, "Pool manifest (or its directory)")->required();
    train->add_option("--out", train_args.out, "Output bundle directory")->required();
    train->add_option("--eps", train_args.eps, "Relative-change stopping threshold")
        ->capture_default_str();
    train->add_option("--max-iters", train_args.max_iters, "Iteration cap")->capture_default_str();
    train->add_flag("--center", train_args.center, "Subtract per-model column means first");
    train->add_flag("--trace", train_args.trace, "Also write per-iteration trace.tsv");
    train->add_flag("--strict", train_args.strict, "Exit nonzero when training does not converge");

    ProjectArgs project_args;
    auto* project = app.add_subcommand("project", "Map held-out matrices into the shared space");
    project->fallthrough();
    project->add_option("--model", project_args.model, "Trained bundle directory")->required();
    project->add_option("--pool", project_args.pool, "Pool manifest (or its directory)")
        ->required();
    project->add_option("--out", project_args.out, "Output projected-pool directory")->required();
    project->add_flag("--subset", project_args.subset,
                      "Allow the pool to cover a subset of trained models");

    ScoreArgs score_args;
    auto* score = app.add_subcommand("score", "Per-stimulus cross-model consistency scores");
    score->fallthrough();
    score->add_option("--projected", score_args.projected,
                      "Projected manifest (or its directory)")
        ->required();
    score->add_option("--out", score_args.out, "Report file (stdout when omitted)");
    score->add_option("--sim", score_args.sim, "Similarity measure")->capture_default_str();
    score->add_option("--format", score_args.format, "Stdout rendering")
        ->check(CLI::IsMember({"table", "tsv"}))
        ->capture_default_str();

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Correlation, RMS, and top-K retrieval metrics");
    eval->fallthrough();
    eval->add_option("--projected", eval_args.projected, "Projected manifest (or its directory)")
        ->required();
    eval->add_option("--topk", eval_args.topk, "Comma-separated K values")->capture_default_str();
    eval->add_option("--out", eval_args.out, "Report file (stdout when omitted)");
    eval->add_option("--format", eval_args.format, "Stdout rendering")
        ->check(CLI::IsMember({"table", "tsv"}))
        ->capture_default_str();

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic train/test benchmark");
    synth->fallthrough();
    synth->add_option("--n-train", synth_args.n_train, "Training stimuli")->capture_default_str();
    synth->add_option("--m-test", synth_args.m_test, "Held-out stimuli")->capture_default_str();
    synth->add_option("--d", synth_args.d, "Latent dimensionality")->capture_default_str();
    synth->add_option("--models", synth_args.models, "Number of models")->capture_default_str();
    synth->add_option("--noise", synth_args.noise, "Gaussian noise sigma")->capture_default_str();
    synth->add_option("--widths", synth_args.widths,
                      "Comma-separated per-model widths (truncation)");
    synth->add_option("--out", synth_args.out, "Output bundle directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
            return app.exit(e);
        if (show_version && e.get_name() == "RequiredError") {
            // fall through to the version block below
        } else {
            int rc = app.exit(e);
            return rc == 0 ? 0 : 2;
        }
    }

    if (show_version) {
        std::printf("baryalign %s\n", std::string(ba::kVersion).c_str());
        std::printf("formats: %s %s %s %s %s %s %s\n", std::string(ba::kMatrixMagic).c_str(),
                    std::string(ba::kPoolFormat).c_str(), std::string(ba::kProjectedFormat).c_str(),
                    std::string(ba::kModelFormat).c_str(), std::string(ba::kSynthFormat).c_str(),
                    std::string(ba::kScoreFormat).c_str(), std::string(ba::kEvalFormat).c_str());
        std::printf("generator: %s\n", std::string(ba::kGeneratorId).c_str());
        return 0;
    }

    g_log_level = log_level == "quiet" ? LogLevel::quiet
                  : log_level == "debug" ? LogLevel::debug
                                         : LogLevel::info;
    log_debug("threads requested: " + std::to_string(threads) + " (resolved " +
              std::to_string(ba::resolve_threads(threads)) + ")");

    try {
        if (train->parsed()) return run_train(train_args, threads);
        if (project->parsed()) return run_project(project_args, threads);
        if (score->parsed()) return run_score(score_args, threads);
        if (eval->parsed()) return run_eval(eval_args, threads);
        if (synth->parsed()) return run_synth(synth_args, seed);
        std::cerr << "error: no subcommand given\n";
        return 2;
    } catch (const ba::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
