#include "context.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "cncreg/tensor_io.hpp"

namespace cncreg::cli {

namespace {

constexpr std::string_view kAllowedKeys[] = {
    "seed",
    "output_root",
    "geometry.image_size",
    "geometry.n_angles",
    "geometry.n_detectors",
    "geometry.arc_degrees",
    "phantom.n_train",
    "phantom.n_test",
    "simulate.noise_sigma",
    "train.mode",
    "train.iterations",
    "train.batch_size",
    "train.lr",
    "train.gp_weight",
    "train.mu",
    "train.checkpoint_every",
    "train.log_every",
    "train.certify_samples",
    "train.resume",
    "train.icnn_channels",
    "train.icnn_ksize",
    "train.icnn_strides",
    "train.smooth_channels",
    "train.smooth_ksize",
    "train.smooth_strides",
    "train.smooth_out_dim",
    "train.inner_widths",
    "reconstruct.method",
    "reconstruct.alpha",
    "reconstruct.steps",
    "reconstruct.step_size",
    "reconstruct.solver",
    "reconstruct.checkpoint",
    "tv.weight",
    "tv.epsilon",
    "tv.step_size",
    "tv.steps",
    "theory.negative_control",
    "theory.samples",
};

} // namespace

Context make_context(const std::string& config_path,
                     const std::optional<std::uint64_t>& seed_override,
                     bool force) {
    Context ctx;
    ctx.cfg = Config::parse_file(config_path);
    if (seed_override)
        ctx.cfg.set("seed", std::to_string(*seed_override));
    ctx.cfg.check_allowed(kAllowedKeys);
    ctx.root = ctx.cfg.require_string("output_root");
    ctx.hash = ctx.cfg.hash();
    ctx.seed = ctx.cfg.get_uint64("seed", 0);
    ctx.force = force;
    return ctx;
}

RadonGeometry geometry_from(const Config& cfg) {
    const int size = cfg.get_int("geometry.image_size", 64);
    const int n_angles = cfg.get_int("geometry.n_angles", 30);
    const double arc_deg = cfg.get_double("geometry.arc_degrees", 180.0);
    int n_det = cfg.get_int("geometry.n_detectors", 0);
    if (size < 1 || n_angles < 1)
        throw ValueError("geometry needs a positive image size and angle count");
    if (!(arc_deg > 0.0) || arc_deg > 180.0)
        throw ValueError("geometry.arc_degrees must lie in (0, 180]");
    if (n_det == 0) {
        // enough unit-spaced bins to cover the image diagonal
        n_det = static_cast<int>(
            std::ceil(static_cast<double>(size) * std::sqrt(2.0)));
        if (n_det % 2 == 0)
            ++n_det;
    }
    if (n_det < 1)
        throw ValueError("geometry needs a positive detector count");
    return RadonGeometry::uniform(size, n_angles, n_det,
                                  arc_deg * M_PI / 180.0);
}

void guard_overwrite(const Context& ctx, const std::filesystem::path& manifest) {
    if (!std::filesystem::exists(manifest) || ctx.force)
        return;
    std::string note = "previous run";
    try {
        const Config old = Config::parse_file(manifest.string());
        note = old.get_string("config_hash", "") == ctx.hash
                   ? "same configuration"
                   : "different configuration";
    } catch (const std::exception&) {
        // unreadable manifest still counts as existing artifacts
    }
    throw ValueError("artifacts already exist (" + note +
                     "): " + manifest.string() + "; pass --force to overwrite");
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, std::string>>& kv) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec)
        throw IoError(IoError::Code::WriteFailed,
                      "cannot create directory: " + path.parent_path().string());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw IoError(IoError::Code::OpenFailed,
                          "cannot open for writing: " + tmp.string());
        for (const auto& [k, v] : kv)
            f << k << " = " << v << "\n";
        if (!f.flush())
            throw IoError(IoError::Code::WriteFailed,
                          "cannot write: " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw IoError(IoError::Code::WriteFailed,
                      "cannot finalize: " + path.string());
}

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError(IoError::Code::WriteFailed,
                      "cannot create directory: " + dir.string());
}

std::filesystem::path phantom_file(const std::filesystem::path& root,
                                   const std::string& split, int index) {
    char name[32];
    std::snprintf(name, sizeof(name), "phantom_%04d.cnct", index);
    return root / "phantoms" / split / name;
}

std::filesystem::path data_file(const std::filesystem::path& root,
                                const std::string& split, const char* stem,
                                int index) {
    char name[48];
    std::snprintf(name, sizeof(name), "%s_%04d.cnct", stem, index);
    return root / "data" / split / name;
}

namespace {

int req_int(const Config& c, const std::string& k) {
    if (!c.has(k))
        throw ValueError("manifest is missing key: " + k);
    return c.get_int(k, 0);
}

double req_double(const Config& c, const std::string& k) {
    if (!c.has(k))
        throw ValueError("manifest is missing key: " + k);
    return c.get_double(k, 0.0);
}

std::vector<double> read_deltas(const Config& c, const std::string& split,
                                int count) {
    std::vector<double> d(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        d[static_cast<std::size_t>(i)] =
            req_double(c, "delta." + split + "." + std::to_string(i));
    return d;
}

} // namespace

DataManifest read_data_manifest(const std::filesystem::path& root) {
    const Config c = Config::parse_file((root / "data" / "manifest.txt").string());
    DataManifest m;
    const int size = req_int(c, "geometry.image_size");
    const int n_angles = req_int(c, "geometry.n_angles");
    const int n_det = req_int(c, "geometry.n_detectors");
    const double arc = req_double(c, "geometry.arc_degrees");
    m.geom = RadonGeometry::uniform(size, n_angles, n_det, arc * M_PI / 180.0);
    m.sigma = req_double(c, "noise_sigma");
    m.operator_norm = req_double(c, "operator_norm");
    m.n_train = req_int(c, "n_train");
    m.n_test = req_int(c, "n_test");
    m.delta_train = read_deltas(c, "train", m.n_train);
    m.delta_test = read_deltas(c, "test", m.n_test);
    return m;
}

PhantomManifest read_phantom_manifest(const std::filesystem::path& root) {
    const Config c =
        Config::parse_file((root / "phantoms" / "manifest.txt").string());
    PhantomManifest m;
    m.image_size = req_int(c, "image_size");
    m.n_train = req_int(c, "n_train");
    m.n_test = req_int(c, "n_test");
    return m;
}

std::vector<double> load_vector(const std::filesystem::path& path) {
    return read_tensor(path).to_doubles();
}

} // namespace cncreg::cli
