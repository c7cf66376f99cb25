#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "context.hpp"

namespace cncreg::cli {

namespace {

using nlohmann::json;

struct MethodRow {
    std::string method;
    double psnr = 0.0;
    double ssim = 0.0;
    std::size_t n_parameters = 0;
    bool oracle_stopped = false;
    std::vector<std::string> image_names;
};

int method_rank(const std::string& m) {
    if (m == "fbp") return 0;
    if (m == "tv") return 1;
    if (m == "acncr") return 2;
    if (m == "acr") return 3;
    return 4;
}

MethodRow read_report(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError(IoError::Code::OpenFailed,
                      "cannot open: " + path.string());
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ValueError("malformed report " + path.string() + ": " +
                         e.what());
    }
    MethodRow row;
    row.method = j.at("method").get<std::string>();
    row.psnr = j.at("aggregates").at("psnr").get<double>();
    row.ssim = j.at("aggregates").at("ssim").get<double>();
    row.n_parameters = j.at("n_parameters").get<std::size_t>();
    row.oracle_stopped = j.value("oracle_stopped", false);
    double mean_psnr = 0.0, mean_ssim = 0.0;
    for (const json& img : j.at("images")) {
        row.image_names.push_back(img.at("name").get<std::string>());
        mean_psnr += img.at("psnr").get<double>();
        mean_ssim += img.at("ssim").get<double>();
    }
    if (row.image_names.empty())
        throw ValueError("report lists no images: " + path.string());
    mean_psnr /= static_cast<double>(row.image_names.size());
    mean_ssim /= static_cast<double>(row.image_names.size());
    if (std::abs(mean_psnr - row.psnr) > 1e-9 ||
        std::abs(mean_ssim - row.ssim) > 1e-9)
        throw ValueError("report aggregate does not match its per-image "
                         "rows: " +
                         path.string());
    return row;
}

} // namespace

int cmd_evaluate(const Context& ctx) {
    const std::filesystem::path recon_dir = ctx.root / "recon";
    std::vector<MethodRow> rows;
    if (std::filesystem::is_directory(recon_dir)) {
        std::vector<std::filesystem::path> reports;
        for (const auto& entry :
             std::filesystem::directory_iterator(recon_dir))
            if (entry.is_directory() &&
                std::filesystem::exists(entry.path() / "report.json"))
                reports.push_back(entry.path() / "report.json");
        std::sort(reports.begin(), reports.end());
        for (const auto& p : reports)
            rows.push_back(read_report(p));
    }
    if (rows.empty())
        throw ValueError("no reconstruction reports found under " +
                         recon_dir.string());

    for (const MethodRow& r : rows)
        if (r.image_names != rows.front().image_names)
            throw ValueError("reports cover different test sets: " +
                             rows.front().method + " vs " + r.method);

    std::sort(rows.begin(), rows.end(),
              [](const MethodRow& a, const MethodRow& b) {
                  const int ra = method_rank(a.method),
                            rb = method_rank(b.method);
                  return ra != rb ? ra < rb : a.method < b.method;
              });

    const std::filesystem::path out_dir = ctx.root / "evaluate";
    const std::filesystem::path csv_path = out_dir / "summary.csv";
    guard_overwrite(ctx, csv_path);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw IoError(IoError::Code::WriteFailed,
                      "cannot create directory: " + out_dir.string());

    std::string table;
    {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-10s %10s %8s %12s  %s\n", "method",
                      "psnr[dB]", "ssim", "#param", "notes");
        table += buf;
        for (const MethodRow& r : rows) {
            std::snprintf(buf, sizeof(buf), "%-10s %10.2f %8.4f %12zu  %s\n",
                          r.method.c_str(), r.psnr, r.ssim, r.n_parameters,
                          r.oracle_stopped ? "oracle-stopped" : "");
            table += buf;
        }
    }
    std::fputs(table.c_str(), stdout);
    std::printf("(%zu test images per method)\n",
                rows.front().image_names.size());

    {
        std::ofstream f(out_dir / "summary.txt",
                        std::ios::binary | std::ios::trunc);
        if (!f || !(f << table))
            throw IoError(IoError::Code::WriteFailed,
                          "cannot write: " + (out_dir / "summary.txt").string());
    }
    {
        std::ofstream f(csv_path, std::ios::binary | std::ios::trunc);
        if (!f)
            throw IoError(IoError::Code::OpenFailed,
                          "cannot open for writing: " + csv_path.string());
        f << "method,psnr,ssim,n_parameters,oracle_stopped,config_hash\n";
        char buf[200];
        for (const MethodRow& r : rows) {
            std::snprintf(buf, sizeof(buf), "%s,%.12g,%.12g,%zu,%d,%s\n",
                          r.method.c_str(), r.psnr, r.ssim, r.n_parameters,
                          r.oracle_stopped ? 1 : 0, ctx.hash.c_str());
            f << buf;
        }
        if (!f.flush())
            throw IoError(IoError::Code::WriteFailed,
                          "cannot write: " + csv_path.string());
    }
    return 0;
}

} // namespace cncreg::cli
