#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "baryalign/barycenter.hpp"
#include "baryalign/scoring.hpp"
#include "baryalign/storage.hpp"
#include "baryalign/synth.hpp"

#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace baryalign;

#ifndef BARYALIGN_GOLDEN_DIR
#error "BARYALIGN_GOLDEN_DIR must point at tests/golden"
#endif

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("baryalign-test-" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::io_failure;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, std::string_view data) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(out.good());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

ModelPool sample_pool(std::uint64_t seed) {
    std::vector<std::string> stim = {"cat", "dog", "tree", "car"};
    std::vector<ReprMatrix> members = {
        {"alpha", stim, oracles::gaussian_matrix(4, 2, seed)},
        {"beta", stim, oracles::gaussian_matrix(4, 5, seed + 1)},
        {"gamma", stim, oracles::gaussian_matrix(4, 3, seed + 2)},
    };
    ModelPool pool = build_pool(std::move(members));
    pool.name = "sample";
    return pool;
}

}  // namespace

// ---- matrix files -------------------------------------------------------------

TEST_CASE("matrices round-trip bitwise, including special values", "[storage]") {
    TempDir tmp;
    Matrix m = oracles::gaussian_matrix(7, 3, 1000);
    m(0, 0) = -0.0;
    m(1, 1) = 1e-308;           // subnormal neighborhood
    m(2, 2) = -1.7976931348623157e308;
    m(3, 0) = 5e-324;           // smallest subnormal
    save_matrix(m, tmp.path / "m.mat");
    Matrix back = load_matrix(tmp.path / "m.mat");
    REQUIRE(back.rows() == m.rows());
    REQUIRE(back.cols() == m.cols());
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c)
            REQUIRE(std::bit_cast<std::uint64_t>(back(r, c)) ==
                    std::bit_cast<std::uint64_t>(m(r, c)));
}

TEST_CASE("the binary layout matches the golden file", "[storage]") {
    Matrix m(2, 3);
    m << 1.5, -2.0, 0.0, 3.25, 1e300, -0.0;
    std::string golden = slurp(fs::path(BARYALIGN_GOLDEN_DIR) / "matrix_2x3.mat");
    REQUIRE(golden.size() == 74);
    REQUIRE(encode_matrix(m) == golden);

    Matrix back = decode_matrix(golden, "golden");
    REQUIRE(back.rows() == 2);
    REQUIRE(back.cols() == 3);
    REQUIRE(back(0, 0) == 1.5);
    REQUIRE(back(1, 1) == 1e300);
    REQUIRE(std::signbit(back(1, 2)));
}

TEST_CASE("matrix decoding rejects malformed files", "[storage]") {
    Matrix m = oracles::gaussian_matrix(2, 2, 1001);
    std::string good = encode_matrix(m);

    SECTION("wrong magic") {
        std::string bad = good;
        bad[0] = 'X';
        REQUIRE(code_of([&] { decode_matrix(bad, "t"); }) == Errc::bad_magic);
    }
    SECTION("unsupported version") {
        std::string bad = good;
        bad[8] = 2;
        REQUIRE(code_of([&] { decode_matrix(bad, "t"); }) == Errc::version_unsupported);
    }
    SECTION("short payload") {
        std::string bad = good.substr(0, good.size() - 1);
        REQUIRE(code_of([&] { decode_matrix(bad, "t"); }) == Errc::truncated_payload);
    }
    SECTION("short header") {
        std::string bad = good.substr(0, 20);
        REQUIRE(code_of([&] { decode_matrix(bad, "t"); }) == Errc::truncated_payload);
    }
    SECTION("trailing bytes") {
        std::string bad = good + "x";
        REQUIRE(code_of([&] { decode_matrix(bad, "t"); }) == Errc::parse_failure);
    }
}

TEST_CASE("loading a missing file reports MissingFile", "[storage]") {
    REQUIRE(code_of([] { load_matrix("/nonexistent/nowhere.mat"); }) == Errc::missing_file);
}

// ---- pools ---------------------------------------------------------------------

TEST_CASE("pools round-trip through a directory, preserving order and padding", "[storage]") {
    TempDir tmp;
    ModelPool pool = sample_pool(1100);
    save_pool(pool, tmp.path / "pool");
    ModelPool back = load_pool(tmp.path / "pool" / kPoolManifestName);

    REQUIRE(back.name == "sample");
    REQUIRE(back.common_width == pool.common_width);
    REQUIRE(back.original_widths == pool.original_widths);
    REQUIRE(back.stimulus_ids() == pool.stimulus_ids());
    for (std::size_t i = 0; i < pool.members.size(); ++i) {
        REQUIRE(back.members[i].model_id == pool.members[i].model_id);
        REQUIRE(back.members[i].data == pool.members[i].data);
    }
}

TEST_CASE("a hand-written manifest over two matrix files loads as a pool", "[storage]") {
    TempDir tmp;
    Matrix a = oracles::gaussian_matrix(3, 2, 1200);
    Matrix b = oracles::gaussian_matrix(3, 2, 1201);
    save_matrix(a, tmp.path / "a.mat");
    save_matrix(b, tmp.path / "b.mat");
    spit(tmp.path / "stimuli.txt", "s1\ns2\ns3\n");
    spit(tmp.path / "pool.manifest",
         "format: barypool/1\n"
         "name: duo\n"
         "stimulus_file: stimuli.txt\n"
         "common_width: 2\n"
         "members: 2\n"
         "member: a\t2\ta.mat\n"
         "member: b\t2\tb.mat\n");
    ModelPool pool = load_pool(tmp.path / "pool.manifest");
    REQUIRE(pool.n_models() == 2);
    REQUIRE(pool.members[0].data == a);
    REQUIRE(pool.members[1].data == b);
}

TEST_CASE("CSV and binary members mix with identical numerics", "[storage]") {
    TempDir tmp;
    Matrix a = oracles::gaussian_matrix(3, 2, 1300);
    Matrix b = oracles::gaussian_matrix(3, 2, 1301);

    save_matrix(a, tmp.path / "a.mat");
    save_matrix(b, tmp.path / "b.mat");
    spit(tmp.path / "stimuli.txt", "s1\ns2\ns3\n");
    spit(tmp.path / "binary.manifest",
         "format: barypool/1\nname: p\nstimulus_file: stimuli.txt\ncommon_width: 2\n"
         "members: 2\nmember: a\t2\ta.mat\nmember: b\t2\tb.mat\n");

    // Same pool, but member b arrives as CSV with full-precision values.
    std::string csv = "stimulus,f0,f1\n";
    for (Index r = 0; r < 3; ++r) {
        csv += "s" + std::to_string(r + 1);
        for (Index c = 0; c < 2; ++c) csv += "," + detail::format_double(b(r, c));
        csv += "\n";
    }
    spit(tmp.path / "b.csv", csv);
    spit(tmp.path / "mixed.manifest",
         "format: barypool/1\nname: p\nstimulus_file: stimuli.txt\ncommon_width: 2\n"
         "members: 2\nmember: a\t2\ta.mat\nmember: b\t2\tb.csv\n");

    ModelPool all_binary = load_pool(tmp.path / "binary.manifest");
    ModelPool mixed = load_pool(tmp.path / "mixed.manifest");
    REQUIRE(mixed.members[0].data == all_binary.members[0].data);
    REQUIRE(mixed.members[1].data == all_binary.members[1].data);
}

TEST_CASE("CSV stimulus ids must agree with the sidecar", "[storage]") {
    TempDir tmp;
    Matrix a = oracles::gaussian_matrix(2, 2, 1400);
    save_matrix(a, tmp.path / "a.mat");
    spit(tmp.path / "stimuli.txt", "s1\ns2\n");
    spit(tmp.path / "b.csv", "stimulus,f0,f1\nz1,0.5,0.25\nz2,0.75,0.125\n");
    spit(tmp.path / "pool.manifest",
         "format: barypool/1\nname: p\nstimulus_file: stimuli.txt\ncommon_width: 2\n"
         "members: 2\nmember: a\t2\ta.mat\nmember: b\t2\tb.csv\n");
    REQUIRE(code_of([&] { load_pool(tmp.path / "pool.manifest"); }) == Errc::mismatched_stimuli);
}

TEST_CASE("manifest problems are reported distinctly", "[storage]") {
    TempDir tmp;
    spit(tmp.path / "stimuli.txt", "s1\n");

    SECTION("unknown format line") {
        spit(tmp.path / "pool.manifest", "format: pickles/9\nmembers: 0\n");
        REQUIRE(code_of([&] { load_pool(tmp.path / "pool.manifest"); }) == Errc::manifest_parse);
    }
    SECTION("future version") {
        spit(tmp.path / "pool.manifest", "format: barypool/2\nmembers: 0\n");
        REQUIRE(code_of([&] { load_pool(tmp.path / "pool.manifest"); }) ==
                Errc::version_unsupported);
    }
    SECTION("member count mismatch") {
        spit(tmp.path / "pool.manifest",
             "format: barypool/1\nname: p\nstimulus_file: stimuli.txt\ncommon_width: 2\n"
             "members: 2\nmember: a\t2\ta.mat\n");
        REQUIRE(code_of([&] { load_pool(tmp.path / "pool.manifest"); }) == Errc::manifest_parse);
    }
    SECTION("missing member file") {
        spit(tmp.path / "pool.manifest",
             "format: barypool/1\nname: p\nstimulus_file: stimuli.txt\ncommon_width: 2\n"
             "members: 1\nmember: a\t2\tghost.mat\n");
        REQUIRE(code_of([&] { load_pool(tmp.path / "pool.manifest"); }) == Errc::missing_file);
    }
}

// ---- model bundles -----------------------------------------------------------------

TEST_CASE("model bundles round-trip bitwise", "[storage]") {
    TempDir tmp;
    ModelPool pool = sample_pool(1500);
    TrainResult trained = train_barycenter(pool);

    ModelBundle bundle;
    bundle.model = trained.model;
    save_model_bundle(bundle, tmp.path / "bundle");
    ModelBundle back = load_model_bundle(tmp.path / "bundle");

    REQUIRE(back.model.barycenter == bundle.model.barycenter);
    REQUIRE(back.model.model_ids == bundle.model.model_ids);
    REQUIRE(back.model.original_widths == bundle.model.original_widths);
    for (std::size_t i = 0; i < bundle.model.transforms.size(); ++i)
        REQUIRE(back.model.transforms[i] == bundle.model.transforms[i]);
    REQUIRE(back.model.meta.iterations_run == bundle.model.meta.iterations_run);
    REQUIRE(back.model.meta.final_objective == bundle.model.meta.final_objective);
    REQUIRE(back.model.meta.final_relative_change == bundle.model.meta.final_relative_change);
    REQUIRE(back.model.meta.epsilon == bundle.model.meta.epsilon);
    REQUIRE(back.model.meta.max_iterations == bundle.model.meta.max_iterations);
    REQUIRE(back.model.meta.converged == bundle.model.meta.converged);
    REQUIRE(back.centered == false);
}

TEST_CASE("centered bundles carry per-model means", "[storage]") {
    TempDir tmp;
    ModelPool pool = sample_pool(1600);
    TrainResult trained = train_barycenter(pool);

    ModelBundle bundle;
    bundle.model = trained.model;
    bundle.centered = true;
    baryalign::GaussianSampler sampler(1601);
    for (Index w : pool.original_widths) {
        Vector means(w);
        for (Index k = 0; k < w; ++k) means(k) = sampler();
        bundle.column_means.push_back(means);
    }
    save_model_bundle(bundle, tmp.path / "bundle");
    ModelBundle back = load_model_bundle(tmp.path / "bundle");
    REQUIRE(back.centered);
    REQUIRE(back.column_means.size() == bundle.column_means.size());
    for (std::size_t i = 0; i < bundle.column_means.size(); ++i)
        REQUIRE(back.column_means[i] == bundle.column_means[i]);
}

TEST_CASE("bundle output refuses to overwrite", "[storage]") {
    TempDir tmp;
    ModelPool pool = sample_pool(1700);
    ModelBundle bundle;
    bundle.model = train_barycenter(pool).model;
    save_model_bundle(bundle, tmp.path / "bundle");
    REQUIRE(code_of([&] { save_model_bundle(bundle, tmp.path / "bundle"); }) ==
            Errc::io_failure);
}

// ---- projected pools ---------------------------------------------------------------

TEST_CASE("projected pools round-trip", "[storage]") {
    TempDir tmp;
    ModelPool pool = sample_pool(1800);
    AlignmentModel model = train_barycenter(pool).model;
    ProjectedPool projected = project(pool, model);
    save_projected(projected, tmp.path / "proj");
    ProjectedPool back = load_projected(tmp.path / "proj" / kProjectedManifestName);
    REQUIRE(back.model_ids == projected.model_ids);
    REQUIRE(back.stimulus_ids == projected.stimulus_ids);
    for (std::size_t i = 0; i < projected.members.size(); ++i)
        REQUIRE(back.members[i] == projected.members[i]);
}

// ---- reports -----------------------------------------------------------------------

TEST_CASE("consistency reports round-trip through text exactly", "[storage]") {
    TempDir tmp;
    ConsistencyReport report;
    report.stimulus_ids = {"s a", "s-b", "s_c"};
    report.scores = {1.0, 1.0 / 3.0, -0.2500000000000001};
    report.pool_model_ids = {"alpha", "beta"};
    report.zero_norm_rows = 2;
    save_consistency_report(report, tmp.path / "scores.tsv");
    ConsistencyReport back = load_consistency_report(tmp.path / "scores.tsv");
    REQUIRE(back.stimulus_ids == report.stimulus_ids);
    REQUIRE(back.scores == report.scores);
    REQUIRE(back.pool_model_ids == report.pool_model_ids);
    REQUIRE(back.zero_norm_rows == 2);

    // Saving the reload yields identical bytes: the format is canonical.
    save_consistency_report(back, tmp.path / "again.tsv");
    REQUIRE(slurp(tmp.path / "again.tsv") == slurp(tmp.path / "scores.tsv"));
}

TEST_CASE("the consistency report text matches the golden file", "[storage]") {
    ConsistencyReport report;
    report.stimulus_ids = {"s0", "s1", "s2"};
    report.scores = {1.0, 1.0 / 3.0, -0.25};
    report.pool_model_ids = {"alpha", "beta"};
    report.zero_norm_rows = 1;
    std::string golden = slurp(fs::path(BARYALIGN_GOLDEN_DIR) / "scores.tsv");
    REQUIRE(encode_consistency_report(report) == golden);

    ConsistencyReport back = load_consistency_report(fs::path(BARYALIGN_GOLDEN_DIR) /
                                                     "scores.tsv");
    REQUIRE(back.scores == report.scores);
}

TEST_CASE("eval reports round-trip through text exactly", "[storage]") {
    TempDir tmp;
    EvalReport report;
    report.model_ids = {"alpha", "beta", "gamma"};
    report.correlation = {0.125, 1.0 / 3.0, -0.5};
    report.rms = {0.1, 0.2, 0.30000000000000004};
    report.ks = {1, 5};
    report.retrieval = {{1.0, 1.0}, {0.98, 1.0}, {1.0 / 3.0, 2.0 / 3.0}};
    report.chance = {0.01, 0.05};
    report.n_stimuli = 100;
    report.skipped_constant_dimensions = 64;
    save_eval_report(report, tmp.path / "eval.tsv");
    EvalReport back = load_eval_report(tmp.path / "eval.tsv");
    REQUIRE(back.model_ids == report.model_ids);
    REQUIRE(back.correlation == report.correlation);
    REQUIRE(back.rms == report.rms);
    REQUIRE(back.ks == report.ks);
    REQUIRE(back.retrieval == report.retrieval);
    REQUIRE(back.chance == report.chance);
    REQUIRE(back.n_stimuli == 100);
    REQUIRE(back.skipped_constant_dimensions == 64);
}

TEST_CASE("reports without data rows are rejected", "[storage]") {
    TempDir tmp;
    spit(tmp.path / "empty.tsv",
         "# format: baryscore/1\n# similarity: cosine\n# models: a,b\n"
         "# zero_norm_rows: 0\nstimulus_id\tscore\n");
    REQUIRE(code_of([&] { load_consistency_report(tmp.path / "empty.tsv"); }) ==
            Errc::parse_failure);
    spit(tmp.path / "empty_eval.tsv",
         "# format: baryeval/1\n# stimuli: 0\n# ks: 1\n# chance: 1\n"
         "# skipped_constant_dimensions: 0\nmodel_id\tcorrelation\trms\tacc@1\n");
    REQUIRE(code_of([&] { load_eval_report(tmp.path / "empty_eval.tsv"); }) ==
            Errc::parse_failure);
}

// ---- synthetic bundles ----------------------------------------------------------

TEST_CASE("synthetic bundles persist pools, latents, and bases", "[storage]") {
    TempDir tmp;
    SynthSpec spec;
    spec.n_train = 10;
    spec.m_test = 6;
    spec.d = 4;
    spec.n_models = 3;
    spec.width_schedule = {2, 3, 4};
    spec.seed = 99;
    SynthPools pools = make_synthetic_pool(spec);
    save_synth_bundle(pools, spec, tmp.path / "bundle");

    ModelPool train = load_pool(tmp.path / "bundle" / "train" / kPoolManifestName);
    ModelPool test = load_pool(tmp.path / "bundle" / "test" / kPoolManifestName);
    for (std::size_t i = 0; i < pools.train.members.size(); ++i) {
        REQUIRE(train.members[i].data == pools.train.members[i].data);
        REQUIRE(test.members[i].data == pools.test.members[i].data);
    }
    Matrix latent = load_matrix(tmp.path / "bundle" / "latent_train.mat");
    REQUIRE(latent == pools.latent_train);
    Matrix rotation = load_matrix(tmp.path / "bundle" / "rotation_model-000000.mat");
    REQUIRE(rotation == pools.rotations[0]);
}
