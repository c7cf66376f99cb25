#include <cstdio>

#include "cncreg/rng.hpp"
#include "cncreg/tensor_io.hpp"
#include "context.hpp"

namespace cncreg::cli {

namespace {

Image load_image(const std::filesystem::path& path) {
    Tensor t = read_tensor(path);
    if (t.ndim() != 2)
        throw ValueError("expected a rank-2 image tensor: " + path.string());
    Image img(t.shape()[0], t.shape()[1]);
    img.tensor = std::move(t);
    return img;
}

std::vector<double> simulate_split(const Context& ctx, const LinearOperator& op,
                                   const RadonGeometry& geom,
                                   const std::string& split, int count,
                                   double sigma, std::uint64_t stream) {
    std::vector<double> deltas;
    deltas.reserve(static_cast<std::size_t>(count));
    ensure_dir(ctx.root / "data" / split);
    for (int i = 0; i < count; ++i) {
        const Image img = load_image(phantom_file(ctx.root, split, i));

        NoiseModel noise;
        noise.sigma = sigma;
        noise.seed = Rng::fork(ctx.seed, stream + static_cast<std::uint64_t>(i));
        const Measurement m = simulate_measurement(op, img, noise);
        deltas.push_back(m.delta);

        const std::vector<double> clean = op.apply(img.tensor.to_doubles());
        write_tensor(
            Tensor::from_doubles({static_cast<std::uint32_t>(geom.n_angles),
                                  static_cast<std::uint32_t>(geom.n_detectors)},
                                 clean),
            data_file(ctx.root, split, "clean", i));
        write_tensor(m.y.tensor, data_file(ctx.root, split, "noisy", i));
        write_tensor(fbp(m.y, geom).tensor, data_file(ctx.root, split, "fbp", i));
    }
    return deltas;
}

} // namespace

int cmd_simulate(const Context& ctx) {
    const PhantomManifest ph = read_phantom_manifest(ctx.root);
    const RadonGeometry geom = geometry_from(ctx.cfg);
    if (geom.image_size != ph.image_size)
        throw ValueError(
            "geometry mismatch with existing data: configured image size " +
            std::to_string(geom.image_size) + ", phantoms were generated at " +
            std::to_string(ph.image_size));

    const double sigma = ctx.cfg.get_double("simulate.noise_sigma", 0.5);
    if (sigma < 0.0)
        throw ValueError("noise level must be nonnegative");

    const std::filesystem::path manifest = ctx.root / "data" / "manifest.txt";
    guard_overwrite(ctx, manifest);

    const LinearOperator op = LinearOperator::radon(geom);
    const NormEstimate nrm = estimate_operator_norm(op, 1000, 1e-12, 17);
    if (nrm.zero_operator)
        throw ValueError("degenerate geometry: zero forward operator");

    const std::vector<double> dt =
        simulate_split(ctx, op, geom, "train", ph.n_train, sigma, 0x300000);
    const std::vector<double> de =
        simulate_split(ctx, op, geom, "test", ph.n_test, sigma, 0x400000);

    std::vector<std::pair<std::string, std::string>> kv = {
        {"config_hash", ctx.hash},
        {"geometry.image_size", std::to_string(geom.image_size)},
        {"geometry.n_angles", std::to_string(geom.n_angles)},
        {"geometry.n_detectors", std::to_string(geom.n_detectors)},
        {"geometry.arc_degrees",
         fmt_g17(ctx.cfg.get_double("geometry.arc_degrees", 180.0))},
        {"noise_sigma", fmt_g17(sigma)},
        {"operator_norm", fmt_g17(nrm.value)},
        {"n_train", std::to_string(ph.n_train)},
        {"n_test", std::to_string(ph.n_test)},
    };
    for (std::size_t i = 0; i < dt.size(); ++i)
        kv.emplace_back("delta.train." + std::to_string(i), fmt_g17(dt[i]));
    for (std::size_t i = 0; i < de.size(); ++i)
        kv.emplace_back("delta.test." + std::to_string(i), fmt_g17(de[i]));
    write_manifest(manifest, kv);

    std::printf("simulate: %d+%d sinograms, %d angles x %d detectors, "
                "sigma %g, operator norm %.6g\n",
                ph.n_train, ph.n_test, geom.n_angles, geom.n_detectors, sigma,
                nrm.value);
    return 0;
}

} // namespace cncreg::cli
