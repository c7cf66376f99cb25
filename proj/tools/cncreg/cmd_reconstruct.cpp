#include <chrono>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "cncreg/checkpoint.hpp"
#include "cncreg/metrics.hpp"
#include "cncreg/networks.hpp"
#include "cncreg/solvers.hpp"
#include "cncreg/tensor_io.hpp"
#include "context.hpp"

namespace cncreg::cli {

namespace {

using nlohmann::json;

Image to_image(const std::vector<double>& v, int size) {
    Image img(static_cast<std::size_t>(size), static_cast<std::size_t>(size));
    auto d = img.tensor.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = static_cast<float>(std::clamp(v[i], 0.0, 1.0));
    return img;
}

// the R^wc ablation: a copy whose measurement-domain term is constant zero,
// so only the convex image-domain part acts
RegularizerCnc without_measurement_term(RegularizerCnc r) {
    for (double& w : r.theta2.inner.net.head.w)
        w = 0.0;
    for (double& b : r.theta2.inner.net.head_bias)
        b = 0.0;
    return r;
}

struct PerImage {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
    int best_iteration = -1; // learned methods only
};

} // namespace

int cmd_reconstruct(const Context& ctx) {
    const std::string method = ctx.cfg.get_string("reconstruct.method", "");
    if (method == "ar-convexified")
        throw ValueError("method ar-convexified is not supported: the "
                         "convexified adversarial baseline carries no "
                         "guarantees and is out of scope");
    if (method != "fbp" && method != "tv" && method != "acncr" &&
        method != "acr")
        throw ValueError("unknown reconstruction method: " + method);

    const PhantomManifest ph = read_phantom_manifest(ctx.root);
    const DataManifest data = read_data_manifest(ctx.root);
    if (ph.n_test < 1)
        throw ValueError("reconstruction needs a non-empty test split");

    const std::filesystem::path out_dir = ctx.root / "recon" / method;
    const std::filesystem::path report_path = out_dir / "report.json";
    if (!ctx.force && std::filesystem::exists(report_path))
        throw ValueError("report already exists: " + report_path.string() +
                         "; pass --force to overwrite");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw IoError(IoError::Code::WriteFailed,
                      "cannot create directory: " + out_dir.string());

    const bool learned = method == "acncr" || method == "acr";
    RegularizerCnc reg;
    std::size_t n_params = 0;
    if (learned) {
        const std::string ck_path = ctx.cfg.get_string(
            "reconstruct.checkpoint",
            (ctx.root / "checkpoints" / "acncr").string());
        LoadedCheckpoint ck = load_checkpoint(ck_path);
        if (ck.kind != "acncr")
            throw ValueError("method " + method +
                             " needs an acncr checkpoint, found kind " +
                             ck.kind + " at " + ck_path);
        n_params = param_count(ck.params);
        reg = method == "acr" ? without_measurement_term(std::move(ck.params))
                              : std::move(ck.params);
    }

    const LinearOperator raw_op = LinearOperator::radon(data.geom);
    const LinearOperator op = raw_op.scaled(1.0 / data.operator_norm);
    const double yscale = 1.0 / data.operator_norm;

    SolveConfig base;
    base.alpha = ctx.cfg.get_double("reconstruct.alpha", 0.05);
    base.n_steps = ctx.cfg.get_int("reconstruct.steps", 300);
    base.step_size = ctx.cfg.get_double("reconstruct.step_size", 0.1);
    base.method = SolveMethod::Accelerated;
    const std::string solver =
        ctx.cfg.get_string("reconstruct.solver", "accelerated");
    if (solver == "subgradient")
        base.method = SolveMethod::Subgradient;
    else if (solver != "accelerated")
        throw ValueError("unknown solver: " + solver);

    TvConfig tv_cfg;
    tv_cfg.weight = ctx.cfg.get_double("tv.weight", 0.01);
    tv_cfg.epsilon = ctx.cfg.get_double("tv.epsilon", 1e-6);
    tv_cfg.step_size = ctx.cfg.get_double("tv.step_size", 0.1);
    tv_cfg.n_steps = ctx.cfg.get_int("tv.steps", 300);

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<PerImage> rows;
    for (int i = 0; i < ph.n_test; ++i) {
        const Image truth(read_tensor(phantom_file(ctx.root, "test", i)));
        const Sinogram noisy(
            read_tensor(data_file(ctx.root, "test", "noisy", i)));

        Image recon(static_cast<std::size_t>(data.geom.image_size),
                    static_cast<std::size_t>(data.geom.image_size));
        PerImage row;
        if (method == "fbp") {
            recon = fbp(noisy, data.geom);
            auto d = recon.tensor.data();
            for (auto& v : d)
                v = std::clamp(v, 0.0f, 1.0f);
        } else {
            std::vector<double> y = noisy.tensor.to_doubles();
            for (double& v : y)
                v *= yscale;
            if (method == "tv") {
                recon = to_image(tv_reconstruct(op, y, tv_cfg),
                                 data.geom.image_size);
            } else {
                SolveConfig cfg = base;
                cfg.reference = truth.tensor.to_doubles();
                const SolveResult sol = solve_variational(op, reg, y, cfg);
                if (sol.aborted_nonfinite)
                    throw ValueError("solver aborted on a non-finite iterate "
                                     "for test image " +
                                     std::to_string(i));
                // reported iterate chosen by reference quality (oracle stop)
                recon = to_image(sol.best_x, data.geom.image_size);
                row.best_iteration = sol.best_iteration;
            }
        }

        char name[32];
        std::snprintf(name, sizeof(name), "img_%04d", i);
        write_tensor(recon.tensor, out_dir / (std::string(name) + ".cnct"));
        row.name = name;
        row.psnr = psnr(recon, truth);
        row.ssim = ssim(recon, truth);
        rows.push_back(row);
    }
    const double wallclock =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    double mean_psnr = 0.0, mean_ssim = 0.0;
    for (const PerImage& r : rows) {
        mean_psnr += r.psnr;
        mean_ssim += r.ssim;
    }
    mean_psnr /= static_cast<double>(rows.size());
    mean_ssim /= static_cast<double>(rows.size());

    json report;
    report["method"] = method;
    report["config_hash"] = ctx.hash;
    report["oracle_stopped"] = learned;
    report["n_parameters"] = n_params;
    report["wallclock_seconds"] = wallclock;
    report["images"] = json::array();
    for (const PerImage& r : rows) {
        json j{{"name", r.name}, {"psnr", r.psnr}, {"ssim", r.ssim}};
        if (r.best_iteration >= 0)
            j["best_iteration"] = r.best_iteration;
        report["images"].push_back(std::move(j));
    }
    report["aggregates"] = {{"psnr", mean_psnr}, {"ssim", mean_ssim}};

    {
        std::ofstream f(report_path, std::ios::binary | std::ios::trunc);
        if (!f || !(f << report.dump(2) << "\n"))
            throw IoError(IoError::Code::WriteFailed,
                          "cannot write: " + report_path.string());
    }
    {
        const std::filesystem::path csv_path = out_dir / "report.csv";
        std::ofstream f(csv_path, std::ios::binary | std::ios::trunc);
        if (!f)
            throw IoError(IoError::Code::OpenFailed,
                          "cannot open for writing: " + csv_path.string());
        f << "method,image,psnr,ssim\n";
        char buf[160];
        for (const PerImage& r : rows) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%.12g,%.12g\n",
                          method.c_str(), r.name.c_str(), r.psnr, r.ssim);
            f << buf;
        }
        std::snprintf(buf, sizeof(buf), "%s,mean,%.12g,%.12g\n", method.c_str(),
                      mean_psnr, mean_ssim);
        f << buf;
        if (!f.flush())
            throw IoError(IoError::Code::WriteFailed,
                          "cannot write: " + csv_path.string());
    }

    std::printf("reconstruct %s: %d images, mean psnr %.2f dB, mean ssim %.4f "
                "(%.1f s)\n",
                method.c_str(), ph.n_test, mean_psnr, mean_ssim, wallclock);
    return 0;
}

} // namespace cncreg::cli
