#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cncreg/config.hpp"
#include "cncreg/operators.hpp"

namespace cncreg::cli {

// Everything a subcommand needs: the validated configuration, the artifact
// root, and the hash that stamps every artifact this run produces. A --seed
// on the command line replaces the config's seed before hashing, so the hash
// always describes the effective configuration.
struct Context {
    Config cfg;
    std::filesystem::path root;
    std::string hash;
    std::uint64_t seed = 0;
    bool force = false;
};

Context make_context(const std::string& config_path,
                     const std::optional<std::uint64_t>& seed_override,
                     bool force);

RadonGeometry geometry_from(const Config& cfg);

// Refuses to clobber artifacts of a previous run unless --force is given.
// The existing manifest's hash decides the wording only; either way the
// caller must pass --force.
void guard_overwrite(const Context& ctx, const std::filesystem::path& manifest);

// Plain `key = value` manifest with deterministic ordering, written through a
// temp file so readers never see a half-written manifest.
void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, std::string>>& kv);

std::string fmt_g17(double v);

void ensure_dir(const std::filesystem::path& dir);

// phantoms/<split>/phantom_%04d.cnct
std::filesystem::path phantom_file(const std::filesystem::path& root,
                                   const std::string& split, int index);
std::filesystem::path data_file(const std::filesystem::path& root,
                                const std::string& split, const char* stem,
                                int index);

struct DataManifest {
    RadonGeometry geom;
    double sigma = 0.0;
    double operator_norm = 0.0;
    int n_train = 0;
    int n_test = 0;
    std::vector<double> delta_train;
    std::vector<double> delta_test;
};

DataManifest read_data_manifest(const std::filesystem::path& root);

struct PhantomManifest {
    int image_size = 0;
    int n_train = 0;
    int n_test = 0;
};

PhantomManifest read_phantom_manifest(const std::filesystem::path& root);

std::vector<double> load_vector(const std::filesystem::path& path);

int cmd_phantom(const Context& ctx);
int cmd_simulate(const Context& ctx);
int cmd_train(const Context& ctx);
int cmd_reconstruct(const Context& ctx);
int cmd_theory_check(const Context& ctx);
int cmd_evaluate(const Context& ctx);

} // namespace cncreg::cli
