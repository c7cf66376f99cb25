#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <unistd.h>
#include <vector>

#include "cncreg/checkpoint.hpp"
#include "cncreg/errors.hpp"
#include "cncreg/rng.hpp"

using namespace cncreg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() /
               ("cncreg_ckpt_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RegularizerCnc sample_reg(std::uint64_t seed) {
    RegularizerCnc r;
    r.theta1 = IcnnParams::conv(8, 8, 2, 4, 3, std::array<int, 2>{2, 1}, seed);
    r.theta2.smooth =
        SmoothNetParams::dense(6, std::array<int, 2>{8, 8}, 5, seed + 1);
    r.theta2.inner = IcnnParams::dense(5, std::array<int, 1>{8}, seed + 2);
    r.mu = 0.03;
    return r;
}

std::vector<double> flatten(const RegularizerCnc& r) {
    auto& mut = const_cast<RegularizerCnc&>(r);
    std::vector<double> out{r.mu};
    for (const ParamRef& ref : param_refs(mut))
        out.insert(out.end(), ref.values->begin(), ref.values->end());
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void edit_manifest(const fs::path& dir,
                   const std::function<std::string(std::string)>& fn) {
    const fs::path m = dir / "manifest.txt";
    std::string text = read_file(m);
    text = fn(std::move(text));
    std::ofstream f(m, std::ios::binary | std::ios::trunc);
    f << text;
}

} // namespace

TEST_CASE("save, load, save is byte stable") {
    TempDir a("rt_a"), b("rt_b");
    const RegularizerCnc orig = sample_reg(5);
    save_checkpoint(a.path, orig, "acncr", {{"note", "first"}}, false);

    CHECK(fs::exists(a.path / "manifest.txt"));
    CHECK_FALSE(fs::exists(a.path / "manifest.txt.tmp"));
    CHECK(fs::exists(a.path / "theta1.b0.main.cnct"));
    CHECK(fs::exists(a.path / "theta1.b1.skip.cnct"));
    CHECK(fs::exists(a.path / "theta2.inner.head.cnct"));

    const LoadedCheckpoint first = load_checkpoint(a.path);
    CHECK(first.kind == "acncr");
    CHECK(first.extra.at("note") == "first");
    CHECK(first.params.theta1.constrained);
    CHECK(first.params.mu == doctest::Approx(orig.mu).epsilon(1e-12));

    // weights live as float32 on disk: one round trip settles them, after
    // which the representation is a fixed point
    const auto vals = flatten(first.params);
    const auto raw = flatten(orig);
    REQUIRE(vals.size() == raw.size());
    for (std::size_t i = 0; i < vals.size(); ++i)
        CHECK(vals[i] == doctest::Approx(raw[i]).epsilon(1e-6));

    save_checkpoint(b.path, first.params, "acncr", {{"note", "first"}}, false);
    const LoadedCheckpoint second = load_checkpoint(b.path);
    CHECK(flatten(second.params) == flatten(first.params));
    for (const auto& entry : fs::directory_iterator(a.path)) {
        const fs::path other = b.path / entry.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(read_file(entry.path()) == read_file(other));
    }
}

TEST_CASE("an ar checkpoint keeps the unconstrained flag and weights") {
    TempDir t("ar");
    RegularizerCnc r = sample_reg(7);
    r.theta1.constrained = false;
    r.theta1.net.blocks[1].main.w[0] = -0.75;
    save_checkpoint(t.path, r, "ar", {}, false);
    const LoadedCheckpoint ck = load_checkpoint(t.path);
    CHECK(ck.kind == "ar");
    CHECK_FALSE(ck.params.theta1.constrained);
    CHECK(ck.params.theta1.net.blocks[1].main.w[0] ==
          doctest::Approx(-0.75).epsilon(1e-12));
}

TEST_CASE("kind and extra metadata are validated on save") {
    TempDir t("vals");
    const RegularizerCnc r = sample_reg(9);
    CHECK_THROWS_WITH_AS(save_checkpoint(t.path, r, "xyz", {}, false),
                         doctest::Contains("acncr or ar"), ValueError);
    CHECK_THROWS_AS(save_checkpoint(t.path, r, "acncr", {{"a b", "1"}}, false),
                    ValueError);
    CHECK_THROWS_AS(
        save_checkpoint(t.path, r, "acncr", {{"note", "two\nlines"}}, false),
        ValueError);
    save_checkpoint(t.path, r, "acncr",
                    {{"iterations", "100"}, {"config_hash", "abc123"}}, false);
    const LoadedCheckpoint ck = load_checkpoint(t.path);
    CHECK(ck.extra.size() == 2);
    CHECK(ck.extra.at("iterations") == "100");
    CHECK(ck.extra.at("config_hash") == "abc123");
}

TEST_CASE("overwrite must be explicit") {
    TempDir t("ow");
    const RegularizerCnc r = sample_reg(11);
    save_checkpoint(t.path, r, "acncr", {}, false);
    CHECK_THROWS_WITH_AS(save_checkpoint(t.path, r, "acncr", {}, false),
                         doctest::Contains("already exists"), ValueError);

    RegularizerCnc r2 = sample_reg(11);
    r2.mu = 0.5;
    save_checkpoint(t.path, r2, "acncr", {}, true);
    CHECK(load_checkpoint(t.path).params.mu == doctest::Approx(0.5));
}

TEST_CASE("loader names what is wrong with a damaged checkpoint") {
    const RegularizerCnc r = sample_reg(13);

    SUBCASE("missing directory") {
        CHECK_THROWS_WITH_AS(load_checkpoint("/tmp/cncreg_no_such_ckpt"),
                             doctest::Contains("checkpoint not found"),
                             IoError);
    }
    SUBCASE("missing manifest key") {
        TempDir t("miss");
        save_checkpoint(t.path, r, "acncr", {}, false);
        edit_manifest(t.path, [](std::string text) {
            const auto pos = text.find("mu = ");
            const auto end = text.find('\n', pos);
            text.erase(pos, end - pos + 1);
            return text;
        });
        CHECK_THROWS_WITH_AS(load_checkpoint(t.path),
                             doctest::Contains("missing configuration key: mu"),
                             ValueError);
    }
    SUBCASE("unknown manifest key") {
        TempDir t("unk");
        save_checkpoint(t.path, r, "acncr", {}, false);
        edit_manifest(t.path, [](std::string text) {
            return text + "bogus = 1\n";
        });
        CHECK_THROWS_WITH_AS(
            load_checkpoint(t.path),
            doctest::Contains("unknown manifest key: bogus"), ValueError);
    }
    SUBCASE("unsupported format tag") {
        TempDir t("fmt");
        save_checkpoint(t.path, r, "acncr", {}, false);
        edit_manifest(t.path, [](std::string text) {
            const auto pos = text.find("cncreg-checkpoint-v1");
            text.replace(pos, 20, "cncreg-checkpoint-v9");
            return text;
        });
        CHECK_THROWS_WITH_AS(load_checkpoint(t.path),
                             doctest::Contains("unsupported format"),
                             ValueError);
    }
    SUBCASE("tensor with the wrong shape") {
        TempDir t("shape");
        save_checkpoint(t.path, r, "acncr", {}, false);
        // swap in a tensor of the wrong length for a named parameter
        const fs::path victim = t.path / "theta2.inner.b0.bias.cnct";
        REQUIRE(fs::exists(victim));
        fs::copy_file(t.path / "theta1.head.cnct", victim,
                      fs::copy_options::overwrite_existing);
        CHECK_THROWS_WITH_AS(
            load_checkpoint(t.path),
            doctest::Contains("tensor shape mismatch: theta2.inner.b0.bias"),
            ValueError);
    }
    SUBCASE("missing tensor file") {
        TempDir t("gone");
        save_checkpoint(t.path, r, "acncr", {}, false);
        fs::remove(t.path / "theta2.smooth.head.cnct");
        CHECK_THROWS_AS(load_checkpoint(t.path), IoError);
    }
}
