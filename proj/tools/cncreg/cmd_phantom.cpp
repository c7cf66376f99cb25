#include <cstdio>

#include "cncreg/phantom.hpp"
#include "cncreg/rng.hpp"
#include "cncreg/tensor_io.hpp"
#include "context.hpp"

namespace cncreg::cli {

namespace {

void write_split(const Context& ctx, const std::string& split, int count,
                 int size, std::uint64_t stream) {
    ensure_dir(ctx.root / "phantoms" / split);
    for (int i = 0; i < count; ++i) {
        const std::uint64_t s =
            Rng::fork(ctx.seed, stream + static_cast<std::uint64_t>(i));
        Rng rng(s);
        PhantomSpec spec;
        spec.size = size;
        spec.n_ellipses = 3 + static_cast<int>(rng.uniform() * 5.0);
        spec.seed = Rng::fork(s, 1);
        write_tensor(generate_phantom(spec).tensor,
                     phantom_file(ctx.root, split, i));
    }
}

} // namespace

int cmd_phantom(const Context& ctx) {
    const int n_train = ctx.cfg.get_int("phantom.n_train", 200);
    const int n_test = ctx.cfg.get_int("phantom.n_test", 20);
    const int size = ctx.cfg.get_int("geometry.image_size", 64);
    if (n_train < 0 || n_test < 0)
        throw ValueError("phantom counts must be nonnegative");
    if (n_train + n_test == 0)
        throw ValueError("empty dataset");
    if (size < 1)
        throw ValueError("geometry needs a positive image size");

    const std::filesystem::path dir = ctx.root / "phantoms";
    const std::filesystem::path manifest = dir / "manifest.txt";
    guard_overwrite(ctx, manifest);
    if (!ctx.force && std::filesystem::exists(dir) &&
        !std::filesystem::is_empty(dir))
        throw ValueError("output directory is not empty: " + dir.string() +
                         "; pass --force to overwrite");

    write_split(ctx, "train", n_train, size, 0x100000);
    write_split(ctx, "test", n_test, size, 0x200000);

    write_manifest(manifest, {
                                 {"config_hash", ctx.hash},
                                 {"image_size", std::to_string(size)},
                                 {"n_train", std::to_string(n_train)},
                                 {"n_test", std::to_string(n_test)},
                             });
    std::printf("phantom: wrote %d train and %d test images at %dx%d under %s\n",
                n_train, n_test, size, size, dir.string().c_str());
    return 0;
}

} // namespace cncreg::cli
