#pragma once

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "baryalign/errors.hpp"
#include "baryalign/rng.hpp"
#include "baryalign/scoring.hpp"
#include "baryalign/metrics.hpp"
#include "baryalign/synth.hpp"
#include "baryalign/types.hpp"

namespace baryalign {

namespace fs = std::filesystem;

inline constexpr std::string_view kMatrixMagic = "BARYMAT1";
inline constexpr std::uint16_t kMatrixVersion = 1;
inline constexpr std::string_view kPoolFormat = "barypool/1";
inline constexpr std::string_view kProjectedFormat = "baryproj/1";
inline constexpr std::string_view kModelFormat = "barymodel/1";
inline constexpr std::string_view kSynthFormat = "barysynth/1";
inline constexpr std::string_view kScoreFormat = "baryscore/1";
inline constexpr std::string_view kEvalFormat = "baryeval/1";

inline constexpr std::string_view kPoolManifestName = "pool.manifest";
inline constexpr std::string_view kProjectedManifestName = "projected.manifest";
inline constexpr std::string_view kStimulusFileName = "stimuli.txt";
inline constexpr std::string_view kModelMetaName = "model.meta";
inline constexpr std::string_view kSynthMetaName = "truth.meta";

namespace detail {

// ---- scalar text encoding -------------------------------------------------

/// 17 significant digits: enough for strtod to reproduce the exact double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(std::string_view text, const std::string& where) {
    if (text.empty()) fail(Errc::parse_failure, where + ": empty number");
    std::string owned(text);
    const char* begin = owned.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + owned.size())
        fail(Errc::parse_failure, where + ": bad number '" + owned + "'");
    return v;
}

inline long long parse_integer(std::string_view text, const std::string& where) {
    if (text.empty()) fail(Errc::parse_failure, where + ": empty integer");
    std::string owned(text);
    const char* begin = owned.c_str();
    char* end = nullptr;
    long long v = std::strtoll(begin, &end, 10);
    if (end != begin + owned.size())
        fail(Errc::parse_failure, where + ": bad integer '" + owned + "'");
    return v;
}

// ---- little-endian binary encoding ----------------------------------------

inline void put_u16_le(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64_le(std::string& out, double v) {
    put_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint16_t get_u16_le(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

inline double get_f64_le(const unsigned char* p) {
    return std::bit_cast<double>(get_u64_le(p));
}

// ---- raw file IO -----------------------------------------------------------

inline std::string read_file(const fs::path& path) {
    if (!fs::exists(path)) fail(Errc::missing_file, "no such file: " + path.string());
    if (!fs::is_regular_file(path)) fail(Errc::io_failure, "not a regular file: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_failure, "cannot open " + path.string());
    std::string data;
    try {
        data.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    } catch (const std::ios_base::failure&) {
        fail(Errc::io_failure, "read error on " + path.string());
    }
    if (in.bad()) fail(Errc::io_failure, "read error on " + path.string());
    return data;
}

/// Write via a temp sibling and rename, so readers never observe a
/// half-written file.
inline void write_file_atomic(const fs::path& path, std::string_view data) {
    fs::path dir = path.parent_path();
    if (dir.empty()) dir = ".";
    std::random_device rd;
    fs::path tmp = dir / (".tmp-" + path.filename().string() + "-" + std::to_string(rd()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(Errc::io_failure, "cannot create " + tmp.string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            fail(Errc::io_failure, "write error on " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        fail(Errc::io_failure, "cannot move output into place at " + path.string());
    }
}

/// Populate a directory under a temp name, then rename into place.
/// The target must not already exist.
template <typename Fill>
inline void write_dir_atomic(const fs::path& target, Fill&& fill) {
    if (fs::exists(target)) fail(Errc::io_failure, "output already exists: " + target.string());
    fs::path parent = target.parent_path();
    if (parent.empty()) parent = ".";
    std::error_code ec;
    fs::create_directories(parent, ec);
    std::random_device rd;
    fs::path tmp = parent / (".tmp-" + target.filename().string() + "-" + std::to_string(rd()));
    if (!fs::create_directory(tmp, ec) || ec)
        fail(Errc::io_failure, "cannot create directory " + tmp.string());
    try {
        fill(tmp);
    } catch (...) {
        fs::remove_all(tmp, ec);
        throw;
    }
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove_all(tmp, ec);
        fail(Errc::io_failure, "cannot move output into place at " + target.string());
    }
}

// ---- identifiers and manifest text ----------------------------------------

/// Model ids become file names, so stay within a portable character set.
inline bool valid_model_id(std::string_view id) {
    if (id.empty() || id.size() > 128) return false;
    for (char c : id) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '.' || c == '_' || c == '-';
        if (!ok) return false;
    }
    return id != "." && id != "..";
}

inline void require_model_id(std::string_view id) {
    if (!valid_model_id(id))
        fail(Errc::invalid_config, "model id '" + std::string(id) +
                                       "' is not file-name safe ([A-Za-z0-9._-], max 128)");
}

inline bool valid_stimulus_id(std::string_view id) {
    if (id.empty()) return false;
    for (char c : id)
        if (c == '\t' || c == '\n' || c == '\r') return false;
    return true;
}

inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        lines.emplace_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

inline std::vector<std::string> split_on(std::string_view text, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t end = text.find(sep, start);
        if (end == std::string_view::npos) {
            parts.emplace_back(text.substr(start));
            return parts;
        }
        parts.emplace_back(text.substr(start, end - start));
        start = end + 1;
    }
}

struct KvLine {
    std::string key;
    std::string value;
};

/// "key: value" lines; blank lines are not allowed in v1 documents.
inline std::vector<KvLine> parse_kv_document(std::string_view text, const std::string& where) {
    std::vector<KvLine> out;
    for (const std::string& line : split_lines(text)) {
        std::size_t sep = line.find(": ");
        if (sep == std::string::npos) {
            if (!line.empty() && line.back() == ':')
                out.push_back({line.substr(0, line.size() - 1), ""});
            else
                fail(Errc::manifest_parse, where + ": malformed line '" + line + "'");
        } else {
            out.push_back({line.substr(0, sep), line.substr(sep + 2)});
        }
    }
    if (out.empty()) fail(Errc::manifest_parse, where + ": empty document");
    return out;
}

inline void require_format(const std::vector<KvLine>& doc, std::string_view expected,
                           const std::string& where) {
    if (doc.empty() || doc.front().key != "format")
        fail(Errc::manifest_parse, where + ": first line must declare the format");
    const std::string& got = doc.front().value;
    std::size_t slash = got.find('/');
    std::size_t exp_slash = expected.find('/');
    if (slash == std::string::npos ||
        std::string_view(got).substr(0, slash) != expected.substr(0, exp_slash))
        fail(Errc::manifest_parse, where + ": expected format " + std::string(expected) +
                                       ", found '" + got + "'");
    if (got != expected)
        fail(Errc::version_unsupported, where + ": unsupported version '" + got + "'");
}

}  // namespace detail

// ---- matrix files -----------------------------------------------------------

/// Serialize to the fixed binary layout: magic, version u16, rows u64,
/// cols u64, then row-major little-endian doubles. File length is exactly
/// 26 + 8*rows*cols bytes.
inline std::string encode_matrix(const Matrix& m) {
    std::string out;
    out.reserve(26 + static_cast<std::size_t>(m.size()) * 8);
    out.append(kMatrixMagic);
    detail::put_u16_le(out, kMatrixVersion);
    detail::put_u64_le(out, static_cast<std::uint64_t>(m.rows()));
    detail::put_u64_le(out, static_cast<std::uint64_t>(m.cols()));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) detail::put_f64_le(out, m(r, c));
    return out;
}

inline Matrix decode_matrix(std::string_view data, const std::string& where) {
    if (data.size() < 8 || data.substr(0, 8) != kMatrixMagic)
        fail(Errc::bad_magic, where + ": not a matrix file");
    if (data.size() < 26) fail(Errc::truncated_payload, where + ": header cut short");
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    std::uint16_t version = detail::get_u16_le(p + 8);
    if (version != kMatrixVersion)
        fail(Errc::version_unsupported,
             where + ": matrix format version " + std::to_string(version));
    std::uint64_t rows = detail::get_u64_le(p + 10);
    std::uint64_t cols = detail::get_u64_le(p + 18);
    if (rows > (1ULL << 31) || cols > (1ULL << 31))
        fail(Errc::parse_failure, where + ": implausible dimensions");
    std::uint64_t expected = 26 + 8 * rows * cols;
    if (data.size() < expected) fail(Errc::truncated_payload, where + ": payload cut short");
    if (data.size() > expected) fail(Errc::parse_failure, where + ": trailing bytes");
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    std::size_t offset = 26;
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c, offset += 8) m(r, c) = detail::get_f64_le(p + offset);
    return m;
}

inline void save_matrix(const Matrix& m, const fs::path& path) {
    detail::write_file_atomic(path, encode_matrix(m));
}

inline Matrix load_matrix(const fs::path& path) {
    return decode_matrix(detail::read_file(path), path.string());
}

// ---- stimulus sidecar ---------------------------------------------------------

inline std::string encode_stimuli(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) {
        if (!detail::valid_stimulus_id(id))
            fail(Errc::invalid_config, "stimulus id '" + id + "' is empty or has control chars");
        out += id;
        out += '\n';
    }
    return out;
}

inline std::vector<std::string> load_stimuli(const fs::path& path) {
    std::vector<std::string> ids = detail::split_lines(detail::read_file(path));
    for (const auto& id : ids)
        if (!detail::valid_stimulus_id(id))
            fail(Errc::parse_failure, path.string() + ": bad stimulus id line");
    if (ids.empty()) fail(Errc::parse_failure, path.string() + ": no stimulus ids");
    return ids;
}

// ---- CSV members ----------------------------------------------------------------

/// Text alternative to the binary format: header row names the id column
/// and the feature columns; each data row is a stimulus id followed by
/// its feature values.
inline ReprMatrix load_csv_member(const std::string& model_id, std::string_view data,
                                  const std::string& where) {
    std::vector<std::string> lines = detail::split_lines(data);
    if (lines.size() < 2) fail(Errc::parse_failure, where + ": CSV needs a header and rows");
    std::size_t n_fields = detail::split_on(lines[0], ',').size();
    if (n_fields < 2) fail(Errc::parse_failure, where + ": CSV needs at least one feature column");

    ReprMatrix member;
    member.model_id = model_id;
    const std::size_t rows = lines.size() - 1;
    member.data.resize(static_cast<Index>(rows), static_cast<Index>(n_fields - 1));
    member.stimulus_ids.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<std::string> fields = detail::split_on(lines[r + 1], ',');
        if (fields.size() != n_fields)
            fail(Errc::parse_failure,
                 where + ": row " + std::to_string(r + 1) + " has " +
                     std::to_string(fields.size()) + " fields, header has " +
                     std::to_string(n_fields));
        member.stimulus_ids.push_back(fields[0]);
        for (std::size_t c = 1; c < n_fields; ++c)
            member.data(static_cast<Index>(r), static_cast<Index>(c - 1)) = detail::parse_double(
                fields[c], where + " row " + std::to_string(r + 1));
    }
    return member;
}

// ---- pool directories ---------------------------------------------------------

/// Write a pool as a directory: manifest, stimulus sidecar, one matrix
/// file per member. Members are stored at their original width, so the
/// padding applied by build_pool is not baked into the files.
inline void save_pool(const ModelPool& pool, const fs::path& dir) {
    for (const auto& m : pool.members) detail::require_model_id(m.model_id);
    detail::write_dir_atomic(dir, [&](const fs::path& tmp) {
        detail::write_file_atomic(tmp / kStimulusFileName, encode_stimuli(pool.stimulus_ids()));
        std::string manifest;
        manifest += "format: ";
        manifest += kPoolFormat;
        manifest += "\nname: " + pool.name;
        manifest += "\nstimulus_file: ";
        manifest += kStimulusFileName;
        manifest += "\ncommon_width: " + std::to_string(pool.common_width);
        manifest += "\nmembers: " + std::to_string(pool.members.size()) + "\n";
        for (std::size_t i = 0; i < pool.members.size(); ++i) {
            const auto& m = pool.members[i];
            Index width = pool.original_widths[i];
            std::string file = m.model_id + ".mat";
            save_matrix(m.data.leftCols(width), tmp / file);
            manifest += "member: " + m.model_id + "\t" + std::to_string(width) + "\t" + file + "\n";
        }
        detail::write_file_atomic(tmp / kPoolManifestName, manifest);
    });
}

/// Read a pool manifest and rebuild the pool through build_pool. Member
/// matrices may be binary or CSV; CSV rows carry their own stimulus ids,
/// which must agree with the sidecar.
inline ModelPool load_pool(const fs::path& manifest_path) {
    const std::string where = manifest_path.string();
    std::vector<detail::KvLine> doc =
        detail::parse_kv_document(detail::read_file(manifest_path), where);
    detail::require_format(doc, kPoolFormat, where);
    const fs::path base = manifest_path.parent_path();

    std::string name;
    fs::path stimulus_file;
    Index common_width = -1;
    long long declared_members = -1;
    struct Entry {
        std::string id;
        Index width;
        std::string file;
    };
    std::vector<Entry> entries;

    for (std::size_t i = 1; i < doc.size(); ++i) {
        const auto& [key, value] = doc[i];
        if (key == "name") {
            name = value;
        } else if (key == "stimulus_file") {
            stimulus_file = base / value;
        } else if (key == "common_width") {
            common_width = static_cast<Index>(detail::parse_integer(value, where));
        } else if (key == "members") {
            declared_members = detail::parse_integer(value, where);
        } else if (key == "member") {
            std::vector<std::string> fields = detail::split_on(value, '\t');
            if (fields.size() != 3)
                fail(Errc::manifest_parse, where + ": member line needs id, width, file");
            entries.push_back({fields[0],
                               static_cast<Index>(detail::parse_integer(fields[1], where)),
                               fields[2]});
        } else {
            fail(Errc::manifest_parse, where + ": unknown key '" + key + "'");
        }
    }
    if (stimulus_file.empty()) fail(Errc::manifest_parse, where + ": missing stimulus_file");
    if (common_width < 1) fail(Errc::manifest_parse, where + ": missing or bad common_width");
    if (declared_members != static_cast<long long>(entries.size()))
        fail(Errc::manifest_parse, where + ": members count does not match member lines");

    std::vector<std::string> stimulus_ids = load_stimuli(stimulus_file);

    std::vector<ReprMatrix> members;
    members.reserve(entries.size());
    for (const auto& entry : entries) {
        fs::path file = base / entry.file;
        std::string data = detail::read_file(file);
        ReprMatrix member;
        if (data.size() >= 8 && std::string_view(data).substr(0, 8) == kMatrixMagic) {
            member.model_id = entry.id;
            member.data = decode_matrix(data, file.string());
            member.stimulus_ids = stimulus_ids;
        } else {
            member = load_csv_member(entry.id, data, file.string());
            if (member.stimulus_ids != stimulus_ids)
                fail(Errc::mismatched_stimuli,
                     file.string() + ": CSV stimulus ids disagree with the sidecar");
        }
        if (member.data.cols() != entry.width)
            fail(Errc::manifest_parse, where + ": member '" + entry.id + "' declares width " +
                                           std::to_string(entry.width) + " but file has " +
                                           std::to_string(member.data.cols()));
        members.push_back(std::move(member));
    }

    ModelPool pool = build_pool(std::move(members), common_width);
    pool.name = name;
    return pool;
}

// ---- projected pools -------------------------------------------------------------

inline void save_projected(const ProjectedPool& projected, const fs::path& dir) {
    for (const auto& id : projected.model_ids) detail::require_model_id(id);
    detail::write_dir_atomic(dir, [&](const fs::path& tmp) {
        detail::write_file_atomic(tmp / kStimulusFileName,
                                  encode_stimuli(projected.stimulus_ids));
        std::string manifest;
        manifest += "format: ";
        manifest += kProjectedFormat;
        manifest += "\nstimulus_file: ";
        manifest += kStimulusFileName;
        manifest += "\nwidth: " + std::to_string(projected.width());
        manifest += "\nmembers: " + std::to_string(projected.members.size()) + "\n";
        for (std::size_t i = 0; i < projected.members.size(); ++i) {
            std::string file = projected.model_ids[i] + ".mat";
            save_matrix(projected.members[i], tmp / file);
            manifest += "member: " + projected.model_ids[i] + "\t" + file + "\n";
        }
        detail::write_file_atomic(tmp / kProjectedManifestName, manifest);
    });
}

inline ProjectedPool load_projected(const fs::path& manifest_path) {
    const std::string where = manifest_path.string();
    std::vector<detail::KvLine> doc =
        detail::parse_kv_document(detail::read_file(manifest_path), where);
    detail::require_format(doc, kProjectedFormat, where);
    const fs::path base = manifest_path.parent_path();

    fs::path stimulus_file;
    Index width = -1;
    long long declared_members = -1;
    std::vector<std::pair<std::string, std::string>> entries;
    for (std::size_t i = 1; i < doc.size(); ++i) {
        const auto& [key, value] = doc[i];
        if (key == "stimulus_file") {
            stimulus_file = base / value;
        } else if (key == "width") {
            width = static_cast<Index>(detail::parse_integer(value, where));
        } else if (key == "members") {
            declared_members = detail::parse_integer(value, where);
        } else if (key == "member") {
            std::vector<std::string> fields = detail::split_on(value, '\t');
            if (fields.size() != 2)
                fail(Errc::manifest_parse, where + ": member line needs id, file");
            entries.emplace_back(fields[0], fields[1]);
        } else {
            fail(Errc::manifest_parse, where + ": unknown key '" + key + "'");
        }
    }
    if (stimulus_file.empty()) fail(Errc::manifest_parse, where + ": missing stimulus_file");
    if (width < 1) fail(Errc::manifest_parse, where + ": missing or bad width");
    if (declared_members != static_cast<long long>(entries.size()))
        fail(Errc::manifest_parse, where + ": members count does not match member lines");

    ProjectedPool out;
    out.stimulus_ids = load_stimuli(stimulus_file);
    for (const auto& [id, file] : entries) {
        Matrix m = load_matrix(base / file);
        if (m.cols() != width)
            fail(Errc::manifest_parse,
                 where + ": member '" + id + "' width differs from manifest");
        if (m.rows() != static_cast<Index>(out.stimulus_ids.size()))
            fail(Errc::stimulus_mismatch,
                 where + ": member '" + id + "' row count differs from stimulus list");
        out.model_ids.push_back(id);
        out.members.push_back(std::move(m));
    }
    if (out.members.size() < 2)
        fail(Errc::too_few_models, where + ": projected pool needs at least 2 members");
    return out;
}

// ---- alignment model bundles ---------------------------------------------------

/// A trained model plus the optional per-model column means removed
/// before training (empty when centering was off).
struct ModelBundle {
    AlignmentModel model;
    bool centered = false;
    std::vector<Vector> column_means;  // one per model, at original width
};

inline void save_model_bundle(const ModelBundle& bundle, const fs::path& dir) {
    const AlignmentModel& model = bundle.model;
    for (const auto& id : model.model_ids) detail::require_model_id(id);
    if (bundle.centered && bundle.column_means.size() != model.model_ids.size())
        fail(Errc::invalid_config, "centered bundle needs one mean vector per model");

    detail::write_dir_atomic(dir, [&](const fs::path& tmp) {
        save_matrix(model.barycenter, tmp / "barycenter.mat");
        std::string meta;
        meta += "format: ";
        meta += kModelFormat;
        meta += "\ngenerator: ";
        meta += kGeneratorId;
        meta += "\nwidth: " + std::to_string(model.width());
        meta += "\nepsilon: " + detail::format_double(model.meta.epsilon);
        meta += "\nmax_iterations: " + std::to_string(model.meta.max_iterations);
        meta += "\niterations_run: " + std::to_string(model.meta.iterations_run);
        meta += "\nfinal_objective: " + detail::format_double(model.meta.final_objective);
        meta += "\nfinal_relative_change: " +
                detail::format_double(model.meta.final_relative_change);
        meta += std::string("\nconverged: ") + (model.meta.converged ? "true" : "false");
        meta += std::string("\ncentered: ") + (bundle.centered ? "true" : "false");
        meta += "\nmodels: " + std::to_string(model.model_ids.size()) + "\n";
        for (std::size_t i = 0; i < model.model_ids.size(); ++i) {
            const std::string& id = model.model_ids[i];
            std::string transform_file = "transform_" + id + ".mat";
            save_matrix(model.transforms[i], tmp / transform_file);
            meta += "member: " + id + "\t" + std::to_string(model.original_widths[i]) + "\t" +
                    transform_file;
            if (bundle.centered) {
                std::string means_file = "colmeans_" + id + ".mat";
                save_matrix(bundle.column_means[i].transpose(), tmp / means_file);
                meta += "\t" + means_file;
            }
            meta += "\n";
        }
        detail::write_file_atomic(tmp / kModelMetaName, meta);
    });
}

inline ModelBundle load_model_bundle(const fs::path& dir) {
    const fs::path meta_path = dir / kModelMetaName;
    const std::string where = meta_path.string();
    std::vector<detail::KvLine> doc =
        detail::parse_kv_document(detail::read_file(meta_path), where);
    detail::require_format(doc, kModelFormat, where);

    ModelBundle bundle;
    AlignmentModel& model = bundle.model;
    Index width = -1;
    long long declared = -1;
    struct Entry {
        std::string id;
        Index width;
        std::string transform_file;
        std::string means_file;
    };
    std::vector<Entry> entries;

    for (std::size_t i = 1; i < doc.size(); ++i) {
        const auto& [key, value] = doc[i];
        if (key == "generator") {
            if (value != kGeneratorId)
                fail(Errc::version_unsupported, where + ": unknown generator '" + value + "'");
        } else if (key == "width") {
            width = static_cast<Index>(detail::parse_integer(value, where));
        } else if (key == "epsilon") {
            model.meta.epsilon = detail::parse_double(value, where);
        } else if (key == "max_iterations") {
            model.meta.max_iterations =
                static_cast<Index>(detail::parse_integer(value, where));
        } else if (key == "iterations_run") {
            model.meta.iterations_run = static_cast<Index>(detail::parse_integer(value, where));
        } else if (key == "final_objective") {
            model.meta.final_objective = detail::parse_double(value, where);
        } else if (key == "final_relative_change") {
            model.meta.final_relative_change = detail::parse_double(value, where);
        } else if (key == "converged") {
            model.meta.converged = value == "true";
        } else if (key == "centered") {
            bundle.centered = value == "true";
        } else if (key == "models") {
            declared = detail::parse_integer(value, where);
        } else if (key == "member") {
            std::vector<std::string> fields = detail::split_on(value, '\t');
            if (fields.size() != 3 && fields.size() != 4)
                fail(Errc::manifest_parse, where + ": member line needs 3 or 4 fields");
            Entry e{fields[0], static_cast<Index>(detail::parse_integer(fields[1], where)),
                    fields[2], fields.size() == 4 ? fields[3] : ""};
            entries.push_back(std::move(e));
        } else {
            fail(Errc::manifest_parse, where + ": unknown key '" + key + "'");
        }
    }
    if (width < 1) fail(Errc::manifest_parse, where + ": missing width");
    if (declared != static_cast<long long>(entries.size()))
        fail(Errc::manifest_parse, where + ": models count does not match member lines");

    model.barycenter = load_matrix(dir / "barycenter.mat");
    if (model.barycenter.cols() != width)
        fail(Errc::manifest_parse, where + ": barycenter width differs from metadata");
    for (const auto& entry : entries) {
        if (!bundle.centered && !entry.means_file.empty())
            fail(Errc::manifest_parse,
                 where + ": member '" + entry.id + "' lists means but centered is false");
        Matrix transform = load_matrix(dir / entry.transform_file);
        if (transform.rows() != width || transform.cols() != width)
            fail(Errc::manifest_parse, where + ": transform for '" + entry.id + "' is not " +
                                           std::to_string(width) + "x" + std::to_string(width));
        model.model_ids.push_back(entry.id);
        model.original_widths.push_back(entry.width);
        model.transforms.push_back(std::move(transform));
        if (bundle.centered) {
            if (entry.means_file.empty())
                fail(Errc::manifest_parse,
                     where + ": centered bundle lacks means for '" + entry.id + "'");
            Matrix means = load_matrix(dir / entry.means_file);
            if (means.rows() != 1 || means.cols() != entry.width)
                fail(Errc::manifest_parse, where + ": means for '" + entry.id +
                                               "' must be 1x" + std::to_string(entry.width));
            bundle.column_means.push_back(means.row(0).transpose());
        }
    }
    return bundle;
}

// ---- report tables ----------------------------------------------------------------

inline std::string encode_consistency_report(const ConsistencyReport& report) {
    std::string out;
    out += "# format: ";
    out += kScoreFormat;
    out += "\n# similarity: ";
    out += similarity_name(report.similarity_kind);
    out += "\n# models: ";
    for (std::size_t i = 0; i < report.pool_model_ids.size(); ++i) {
        if (i) out += ',';
        out += report.pool_model_ids[i];
    }
    out += "\n# zero_norm_rows: " + std::to_string(report.zero_norm_rows);
    out += "\nstimulus_id\tscore\n";
    for (std::size_t j = 0; j < report.stimulus_ids.size(); ++j)
        out += report.stimulus_ids[j] + "\t" + detail::format_double(report.scores[j]) + "\n";
    return out;
}

inline void save_consistency_report(const ConsistencyReport& report, const fs::path& path) {
    detail::write_file_atomic(path, encode_consistency_report(report));
}

inline ConsistencyReport load_consistency_report(const fs::path& path) {
    const std::string where = path.string();
    std::vector<std::string> lines = detail::split_lines(detail::read_file(path));
    ConsistencyReport report;
    std::size_t i = 0;
    bool format_seen = false;
    for (; i < lines.size() && !lines[i].empty() && lines[i][0] == '#'; ++i) {
        std::string_view line(lines[i]);
        std::size_t sep = line.find(": ");
        if (sep == std::string_view::npos || line.substr(0, 2) != "# ")
            fail(Errc::parse_failure, where + ": malformed metadata line");
        std::string key(line.substr(2, sep - 2));
        std::string value(line.substr(sep + 2));
        if (key == "format") {
            if (value != kScoreFormat)
                fail(Errc::parse_failure, where + ": expected " + std::string(kScoreFormat));
            format_seen = true;
        } else if (key == "similarity") {
            if (value != "cosine") fail(Errc::parse_failure, where + ": unknown similarity");
            report.similarity_kind = Similarity::cosine;
        } else if (key == "models") {
            report.pool_model_ids = detail::split_on(value, ',');
        } else if (key == "zero_norm_rows") {
            report.zero_norm_rows = static_cast<Index>(detail::parse_integer(value, where));
        } else {
            fail(Errc::parse_failure, where + ": unknown metadata key '" + key + "'");
        }
    }
    if (!format_seen) fail(Errc::parse_failure, where + ": missing format line");
    if (i >= lines.size() || lines[i] != "stimulus_id\tscore")
        fail(Errc::parse_failure, where + ": missing column header");
    for (++i; i < lines.size(); ++i) {
        std::vector<std::string> fields = detail::split_on(lines[i], '\t');
        if (fields.size() != 2) fail(Errc::parse_failure, where + ": bad data row");
        report.stimulus_ids.push_back(fields[0]);
        report.scores.push_back(detail::parse_double(fields[1], where));
    }
    if (report.stimulus_ids.empty())
        fail(Errc::parse_failure, where + ": report has no data rows");
    return report;
}

inline std::string encode_eval_report(const EvalReport& report) {
    std::string out;
    out += "# format: ";
    out += kEvalFormat;
    out += "\n# stimuli: " + std::to_string(report.n_stimuli);
    out += "\n# ks: ";
    for (std::size_t t = 0; t < report.ks.size(); ++t) {
        if (t) out += ',';
        out += std::to_string(report.ks[t]);
    }
    out += "\n# chance: ";
    for (std::size_t t = 0; t < report.chance.size(); ++t) {
        if (t) out += ',';
        out += detail::format_double(report.chance[t]);
    }
    out += "\n# skipped_constant_dimensions: " +
           std::to_string(report.skipped_constant_dimensions);
    out += "\nmodel_id\tcorrelation\trms";
    for (Index k : report.ks) out += "\tacc@" + std::to_string(k);
    out += "\n";
    for (std::size_t i = 0; i < report.model_ids.size(); ++i) {
        out += report.model_ids[i];
        out += "\t" + detail::format_double(report.correlation[i]);
        out += "\t" + detail::format_double(report.rms[i]);
        for (std::size_t t = 0; t < report.ks.size(); ++t)
            out += "\t" + detail::format_double(report.retrieval[i][t]);
        out += "\n";
    }
    return out;
}

inline void save_eval_report(const EvalReport& report, const fs::path& path) {
    detail::write_file_atomic(path, encode_eval_report(report));
}

inline EvalReport load_eval_report(const fs::path& path) {
    const std::string where = path.string();
    std::vector<std::string> lines = detail::split_lines(detail::read_file(path));
    EvalReport report;
    std::size_t i = 0;
    bool format_seen = false;
    for (; i < lines.size() && !lines[i].empty() && lines[i][0] == '#'; ++i) {
        std::string_view line(lines[i]);
        std::size_t sep = line.find(": ");
        if (sep == std::string_view::npos || line.substr(0, 2) != "# ")
            fail(Errc::parse_failure, where + ": malformed metadata line");
        std::string key(line.substr(2, sep - 2));
        std::string value(line.substr(sep + 2));
        if (key == "format") {
            if (value != kEvalFormat)
                fail(Errc::parse_failure, where + ": expected " + std::string(kEvalFormat));
            format_seen = true;
        } else if (key == "stimuli") {
            report.n_stimuli = static_cast<Index>(detail::parse_integer(value, where));
        } else if (key == "ks") {
            for (const auto& field : detail::split_on(value, ','))
                report.ks.push_back(static_cast<Index>(detail::parse_integer(field, where)));
        } else if (key == "chance") {
            for (const auto& field : detail::split_on(value, ','))
                report.chance.push_back(detail::parse_double(field, where));
        } else if (key == "skipped_constant_dimensions") {
            report.skipped_constant_dimensions =
                static_cast<Index>(detail::parse_integer(value, where));
        } else {
            fail(Errc::parse_failure, where + ": unknown metadata key '" + key + "'");
        }
    }
    if (!format_seen) fail(Errc::parse_failure, where + ": missing format line");
    std::string expected_header = "model_id\tcorrelation\trms";
    for (Index k : report.ks) expected_header += "\tacc@" + std::to_string(k);
    if (i >= lines.size() || lines[i] != expected_header)
        fail(Errc::parse_failure, where + ": missing or wrong column header");
    for (++i; i < lines.size(); ++i) {
        std::vector<std::string> fields = detail::split_on(lines[i], '\t');
        if (fields.size() != 3 + report.ks.size())
            fail(Errc::parse_failure, where + ": bad data row");
        report.model_ids.push_back(fields[0]);
        report.correlation.push_back(detail::parse_double(fields[1], where));
        report.rms.push_back(detail::parse_double(fields[2], where));
        std::vector<double> accs;
        for (std::size_t t = 0; t < report.ks.size(); ++t)
            accs.push_back(detail::parse_double(fields[3 + t], where));
        report.retrieval.push_back(std::move(accs));
    }
    if (report.model_ids.empty()) fail(Errc::parse_failure, where + ": report has no data rows");
    return report;
}

// ---- synthetic ground truth ---------------------------------------------------

/// Write train/test pools plus the generating latents and bases, so
/// downstream checks can compare against ground truth.
inline void save_synth_bundle(const SynthPools& pools, const SynthSpec& spec,
                              const fs::path& dir) {
    detail::write_dir_atomic(dir, [&](const fs::path& tmp) {
        save_pool(pools.train, tmp / "train");
        save_pool(pools.test, tmp / "test");
        save_matrix(pools.latent_train, tmp / "latent_train.mat");
        save_matrix(pools.latent_test, tmp / "latent_test.mat");
        std::string meta;
        meta += "format: ";
        meta += kSynthFormat;
        meta += "\ngenerator: ";
        meta += kGeneratorId;
        meta += "\nseed: " + std::to_string(spec.seed);
        meta += "\nn_train: " + std::to_string(spec.n_train);
        meta += "\nm_test: " + std::to_string(spec.m_test);
        meta += "\nd: " + std::to_string(spec.d);
        meta += "\nmodels: " + std::to_string(spec.n_models);
        meta += "\nnoise_sigma: " + detail::format_double(spec.noise_sigma);
        meta += "\nwidths: ";
        if (spec.width_schedule.empty()) {
            meta += "full";
        } else {
            for (std::size_t i = 0; i < spec.width_schedule.size(); ++i) {
                if (i) meta += ',';
                meta += std::to_string(spec.width_schedule[i]);
            }
        }
        meta += "\nlatent_train: latent_train.mat";
        meta += "\nlatent_test: latent_test.mat\n";
        for (std::size_t i = 0; i < pools.rotations.size(); ++i) {
            const std::string& id = pools.train.members[i].model_id;
            std::string file = "rotation_" + id + ".mat";
            save_matrix(pools.rotations[i], tmp / file);
            meta += "rotation: " + id + "\t" + file + "\n";
        }
        detail::write_file_atomic(tmp / kSynthMetaName, meta);
    });
}

}  // namespace baryalign
