#include <cstdio>
#include <fstream>

#include "cncreg/checkpoint.hpp"
#include "cncreg/training.hpp"
#include "context.hpp"

namespace cncreg::cli {

namespace {

std::vector<std::vector<double>> load_pool(const Context& ctx,
                                           const std::string& split,
                                           const char* stem, int count,
                                           double scale) {
    std::vector<std::vector<double>> pool;
    pool.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        std::vector<double> v = stem == nullptr
                                    ? load_vector(phantom_file(ctx.root, split, i))
                                    : load_vector(data_file(ctx.root, split,
                                                            stem, i));
        if (scale != 1.0)
            for (double& x : v)
                x *= scale;
        pool.push_back(std::move(v));
    }
    return pool;
}

RegularizerCnc fresh_init(const Context& ctx, const RadonGeometry& geom,
                          bool constrained) {
    const int icnn_ch = ctx.cfg.get_int("train.icnn_channels", 16);
    const int icnn_k = ctx.cfg.get_int("train.icnn_ksize", 3);
    const std::vector<int> icnn_strides =
        ctx.cfg.get_int_list("train.icnn_strides", {2, 2, 1});
    const int sm_ch = ctx.cfg.get_int("train.smooth_channels", 8);
    const int sm_k = ctx.cfg.get_int("train.smooth_ksize", 3);
    const std::vector<int> sm_strides =
        ctx.cfg.get_int_list("train.smooth_strides", {2, 2, 1, 1, 1});
    const int m = ctx.cfg.get_int("train.smooth_out_dim", 64);
    const std::vector<int> inner_widths =
        ctx.cfg.get_int_list("train.inner_widths", {48, 48});

    RegularizerCnc r;
    r.mu = ctx.cfg.get_double("train.mu", 0.01);
    if (!(r.mu > 0.0))
        throw ValueError("train.mu must be positive");
    r.theta1 = IcnnParams::conv(geom.image_size, geom.image_size,
                                static_cast<int>(icnn_strides.size()), icnn_ch,
                                icnn_k, icnn_strides,
                                Rng::fork(ctx.seed, 0x10));
    r.theta1.constrained = constrained;
    r.theta2.smooth = SmoothNetParams::conv(
        geom.n_angles, geom.n_detectors, static_cast<int>(sm_strides.size()),
        sm_ch, sm_k, sm_strides, m, Rng::fork(ctx.seed, 0x11));
    r.theta2.inner =
        IcnnParams::dense(m, inner_widths, Rng::fork(ctx.seed, 0x12));
    return r;
}

} // namespace

int cmd_train(const Context& ctx) {
    const std::string mode = ctx.cfg.get_string("train.mode", "acncr");
    if (mode != "acncr" && mode != "ar")
        throw ValueError("unknown training mode: " + mode);

    const PhantomManifest ph = read_phantom_manifest(ctx.root);
    const DataManifest data = read_data_manifest(ctx.root);
    const RadonGeometry cfg_geom = geometry_from(ctx.cfg);
    if (cfg_geom.image_size != data.geom.image_size ||
        cfg_geom.n_angles != data.geom.n_angles ||
        cfg_geom.n_detectors != data.geom.n_detectors)
        throw ValueError("geometry mismatch with existing data: re-run "
                         "simulate or fix the geometry block");
    if (ph.n_train < 1)
        throw ValueError("training needs a non-empty train split");

    const std::filesystem::path ckpt_dir = ctx.root / "checkpoints" / mode;
    if (!ctx.force && std::filesystem::exists(ckpt_dir / "manifest.txt"))
        throw ValueError("checkpoint already exists: " + ckpt_dir.string() +
                         "; pass --force to overwrite");

    // the critics run in normalized operator units, so the sinogram corpora
    // are rescaled by the norm recorded at simulation time
    const LinearOperator op =
        LinearOperator::radon(data.geom).scaled(1.0 / data.operator_norm);
    const double yscale = 1.0 / data.operator_norm;

    TrainDataset pools;
    pools.real_images = load_pool(ctx, "train", nullptr, ph.n_train, 1.0);
    pools.artifact_images = load_pool(ctx, "train", "fbp", ph.n_train, 1.0);
    pools.clean_sinograms = load_pool(ctx, "train", "clean", ph.n_train, yscale);
    pools.noisy_sinograms = load_pool(ctx, "train", "noisy", ph.n_train, yscale);

    RegularizerCnc init;
    const std::string resume = ctx.cfg.get_string("train.resume", "");
    if (!resume.empty()) {
        LoadedCheckpoint ck = load_checkpoint(resume);
        if (ck.kind != mode)
            throw ValueError("resume checkpoint was trained in mode " +
                             ck.kind + ", requested " + mode);
        init = std::move(ck.params);
    } else {
        init = fresh_init(ctx, data.geom, mode == "acncr");
    }

    TrainConfig tc;
    tc.n_iterations = ctx.cfg.get_int("train.iterations", 1000);
    tc.batch_size = ctx.cfg.get_int("train.batch_size", 16);
    tc.lr = ctx.cfg.get_double("train.lr", 1e-4);
    tc.gp_weight = ctx.cfg.get_double("train.gp_weight", 10.0);
    tc.checkpoint_every = ctx.cfg.get_int("train.checkpoint_every", 0);
    tc.log_every = ctx.cfg.get_int("train.log_every", 1);
    tc.seed = Rng::fork(ctx.seed, 0x13);

    std::error_code ec;
    std::filesystem::create_directories(ctx.root, ec);
    const std::filesystem::path log_path = ctx.root / "train_log.jsonl";
    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log)
        throw IoError(IoError::Code::OpenFailed,
                      "cannot open for writing: " + log_path.string());

    const CheckpointHook hook = [&](int iter, const RegularizerCnc& r) {
        char sub[48];
        std::snprintf(sub, sizeof(sub), "%s-it%06d", mode.c_str(), iter);
        save_checkpoint(ctx.root / "checkpoints" / sub, r, mode,
                        {{"config_hash", ctx.hash}}, true);
    };

    TrainResult result = train_acncr(std::move(init), op, pools, tc, hook, &log);

    const int cert_samples = ctx.cfg.get_int("train.certify_samples", 1000);
    const ModulusCertificate cert = certify_weak_convexity(
        result.params, cert_samples, Rng::fork(ctx.seed, 0xce));

    std::map<std::string, std::string> extra = {
        {"config_hash", ctx.hash},
        {"iterations_run", std::to_string(result.iterations_run)},
        {"certificate.lipschitz", fmt_g17(cert.lipschitz)},
        {"certificate.beta", fmt_g17(cert.beta)},
        {"certificate.rho_bound", fmt_g17(cert.rho_bound)},
        {"certificate.empirical_rho", fmt_g17(cert.empirical_rho)},
        {"certificate.samples", std::to_string(cert.samples)},
        {"certificate.seed", std::to_string(cert.seed)},
    };
    if (mode == "ar")
        extra.emplace("guarantees", "none");
    save_checkpoint(ckpt_dir, result.params, mode, extra, true);

    if (result.aborted_nonfinite)
        throw ValueError("training aborted on a non-finite loss after " +
                         std::to_string(result.iterations_run) +
                         " iterations; last stable parameters were saved to " +
                         ckpt_dir.string());

    std::printf("train: %d iterations (%s), rho bound %.6g (empirical %.6g), "
                "checkpoint %s\n",
                result.iterations_run, mode.c_str(), cert.rho_bound,
                cert.empirical_rho, ckpt_dir.string().c_str());
    return 0;
}

} // namespace cncreg::cli
