#include "cncreg/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cncreg/config.hpp"
#include "cncreg/tensor_io.hpp"
#include "net_engine.hpp"

namespace cncreg {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* act_name(Activation a) {
    switch (a) {
    case Activation::None:
        return "none";
    case Activation::LeakyRelu:
        return "leaky_relu";
    case Activation::Silu:
        return "silu";
    }
    throw ValueError("unknown activation");
}

Activation act_from(const std::string& s) {
    if (s == "none")
        return Activation::None;
    if (s == "leaky_relu")
        return Activation::LeakyRelu;
    if (s == "silu")
        return Activation::Silu;
    throw ValueError("checkpoint: unknown activation: " + s);
}

std::vector<std::uint32_t> map_shape(const LayerMap& m) {
    if (m.kind == LayerMap::Kind::Dense)
        return {static_cast<std::uint32_t>(m.out_dim),
                static_cast<std::uint32_t>(m.in_dim)};
    return {static_cast<std::uint32_t>(m.out_ch),
            static_cast<std::uint32_t>(m.in_ch),
            static_cast<std::uint32_t>(m.ksize),
            static_cast<std::uint32_t>(m.ksize)};
}

void save_map(const std::filesystem::path& dir, const std::string& name,
              const LayerMap& m) {
    write_tensor(Tensor::from_doubles(map_shape(m), m.w), dir / (name + ".cnct"));
}

void save_vector(const std::filesystem::path& dir, const std::string& name,
                 const std::vector<double>& v) {
    write_tensor(
        Tensor::from_doubles({static_cast<std::uint32_t>(v.size())}, v),
        dir / (name + ".cnct"));
}

void describe_map(std::ostringstream& out, const std::string& key,
                  const LayerMap& m) {
    if (m.kind == LayerMap::Kind::Dense) {
        out << key << ".kind = dense\n";
        out << key << ".out_dim = " << m.out_dim << "\n";
        out << key << ".in_dim = " << m.in_dim << "\n";
        return;
    }
    out << key << ".kind = conv\n";
    out << key << ".in_ch = " << m.in_ch << "\n";
    out << key << ".out_ch = " << m.out_ch << "\n";
    out << key << ".ksize = " << m.ksize << "\n";
    out << key << ".stride = " << m.stride << "\n";
    out << key << ".in_h = " << m.in_h << "\n";
    out << key << ".in_w = " << m.in_w << "\n";
}

void save_net(const std::filesystem::path& dir, std::ostringstream& out,
              const std::string& prefix, const FeedForwardNet& net) {
    out << prefix << ".act = " << act_name(net.act) << "\n";
    out << prefix << ".leaky_slope = " << fmt_double(net.leaky_slope) << "\n";
    out << prefix << ".head_pool = " << (net.head_pool ? "true" : "false")
        << "\n";
    out << prefix << ".head_nonneg = " << (net.head_nonneg ? "true" : "false")
        << "\n";
    out << prefix << ".n_blocks = " << net.blocks.size() << "\n";
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        const Block& b = net.blocks[i];
        const std::string bk = prefix + ".b" + std::to_string(i);
        describe_map(out, bk + ".main", b.main);
        out << bk << ".main_nonneg = " << (b.main_nonneg ? "true" : "false")
            << "\n";
        out << bk << ".has_skip = " << (b.skip ? "true" : "false") << "\n";
        if (b.skip)
            describe_map(out, bk + ".skip", *b.skip);
        save_map(dir, bk + ".main", b.main);
        if (b.skip)
            save_map(dir, bk + ".skip", *b.skip);
        save_vector(dir, bk + ".bias", b.bias);
    }
    out << prefix << ".head.out_dim = " << net.head.out_dim << "\n";
    out << prefix << ".head.in_dim = " << net.head.in_dim << "\n";
    save_map(dir, prefix + ".head", net.head);
    save_vector(dir, prefix + ".head_bias", net.head_bias);
}

// manifest reader that records every key it consumes, so leftovers can be
// rejected afterwards
struct ManifestReader {
    const Config& c;
    std::set<std::string>& used;

    std::string str(const std::string& k) {
        used.insert(k);
        return c.require_string(k);
    }
    int integer(const std::string& k) {
        if (!c.has(k))
            throw ValueError("missing configuration key: " + k);
        used.insert(k);
        return c.get_int(k, 0);
    }
    double real(const std::string& k) {
        if (!c.has(k))
            throw ValueError("missing configuration key: " + k);
        used.insert(k);
        return c.get_double(k, 0.0);
    }
    bool flag(const std::string& k) {
        if (!c.has(k))
            throw ValueError("missing configuration key: " + k);
        used.insert(k);
        return c.get_bool(k, false);
    }
};

LayerMap load_map_structure(ManifestReader& r, const std::string& key) {
    const std::string kind = r.str(key + ".kind");
    if (kind == "dense")
        return LayerMap::dense(r.integer(key + ".out_dim"),
                               r.integer(key + ".in_dim"));
    if (kind == "conv") {
        const int in_ch = r.integer(key + ".in_ch");
        const int out_ch = r.integer(key + ".out_ch");
        const int ksize = r.integer(key + ".ksize");
        const int stride = r.integer(key + ".stride");
        const int in_h = r.integer(key + ".in_h");
        const int in_w = r.integer(key + ".in_w");
        return LayerMap::conv(in_ch, out_ch, ksize, stride, in_h, in_w);
    }
    throw ValueError("checkpoint: unknown layer kind: " + kind);
}

void fill_map(const std::filesystem::path& dir, const std::string& name,
              LayerMap& m) {
    const Tensor t = read_tensor(dir / (name + ".cnct"));
    if (t.shape() != map_shape(m))
        throw ValueError("checkpoint: tensor shape mismatch: " + name);
    m.w = t.to_doubles();
}

void fill_vector(const std::filesystem::path& dir, const std::string& name,
                 std::size_t expect, std::vector<double>& v) {
    const Tensor t = read_tensor(dir / (name + ".cnct"));
    if (t.ndim() != 1 || t.size() != expect)
        throw ValueError("checkpoint: tensor shape mismatch: " + name);
    v = t.to_doubles();
}

FeedForwardNet load_net(const std::filesystem::path& dir, ManifestReader& r,
                        const std::string& prefix) {
    FeedForwardNet net;
    net.act = act_from(r.str(prefix + ".act"));
    net.leaky_slope = r.real(prefix + ".leaky_slope");
    net.head_pool = r.flag(prefix + ".head_pool");
    net.head_nonneg = r.flag(prefix + ".head_nonneg");
    const int n_blocks = r.integer(prefix + ".n_blocks");
    if (n_blocks < 0)
        throw ValueError("checkpoint: negative block count");
    for (int i = 0; i < n_blocks; ++i) {
        const std::string bk = prefix + ".b" + std::to_string(i);
        Block b;
        b.main = load_map_structure(r, bk + ".main");
        b.main_nonneg = r.flag(bk + ".main_nonneg");
        if (r.flag(bk + ".has_skip"))
            b.skip = load_map_structure(r, bk + ".skip");
        fill_map(dir, bk + ".main", b.main);
        if (b.skip)
            fill_map(dir, bk + ".skip", *b.skip);
        // conv blocks carry one bias per channel, dense blocks one per unit
        fill_vector(dir, bk + ".bias",
                    static_cast<std::size_t>(b.main.kind == LayerMap::Kind::Conv
                                                 ? b.main.out_ch
                                                 : b.main.out_dim),
                    b.bias);
        net.blocks.push_back(std::move(b));
    }
    net.head = LayerMap::dense(r.integer(prefix + ".head.out_dim"),
                               r.integer(prefix + ".head.in_dim"));
    fill_map(dir, prefix + ".head", net.head);
    fill_vector(dir, prefix + ".head_bias",
                static_cast<std::size_t>(net.head.out_dim), net.head_bias);
    return net;
}

} // namespace

void save_checkpoint(const std::filesystem::path& dir, const RegularizerCnc& r,
                     const std::string& kind,
                     const std::map<std::string, std::string>& extra,
                     bool overwrite) {
    if (kind != "acncr" && kind != "ar")
        throw ValueError("checkpoint kind must be acncr or ar");
    detail::validate_icnn_structure(r.theta1);
    detail::validate_smooth_structure(r.theta2.smooth);
    detail::validate_icnn_structure(r.theta2.inner);
    for (const auto& [k, v] : extra) {
        if (k.empty() || k.find_first_of(" \t=\n") != std::string::npos)
            throw ValueError("bad extra key: " + k);
        if (v.find('\n') != std::string::npos)
            throw ValueError("extra values must be single-line: " + k);
    }

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError(IoError::Code::WriteFailed,
                      "cannot create checkpoint directory: " + dir.string());
    const std::filesystem::path manifest = dir / "manifest.txt";
    if (std::filesystem::exists(manifest) && !overwrite)
        throw ValueError("checkpoint already exists: " + dir.string());

    std::ostringstream out;
    out << "format = cncreg-checkpoint-v1\n";
    out << "kind = " << kind << "\n";
    out << "mu = " << fmt_double(r.mu) << "\n";
    out << "theta1.constrained = " << (r.theta1.constrained ? "true" : "false")
        << "\n";
    save_net(dir, out, "theta1", r.theta1.net);
    save_net(dir, out, "theta2.smooth", r.theta2.smooth.net);
    save_net(dir, out, "theta2.inner", r.theta2.inner.net);
    for (const auto& [k, v] : extra)
        out << "extra." << k << " = " << v << "\n";

    // the manifest lands last and atomically: its presence marks a complete
    // checkpoint
    const std::filesystem::path tmp = dir / "manifest.txt.tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f || !(f << out.str()) || !f.flush())
            throw IoError(IoError::Code::WriteFailed,
                          "cannot write: " + tmp.string());
    }
    std::filesystem::rename(tmp, manifest, ec);
    if (ec)
        throw IoError(IoError::Code::WriteFailed,
                      "cannot finalize: " + manifest.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
    const std::filesystem::path manifest = dir / "manifest.txt";
    if (!std::filesystem::exists(manifest))
        throw IoError(IoError::Code::OpenFailed,
                      "checkpoint not found: " + dir.string());
    const Config c = Config::parse_file(manifest.string());
    std::set<std::string> used;
    ManifestReader r{c, used};

    if (r.str("format") != "cncreg-checkpoint-v1")
        throw ValueError("checkpoint: unsupported format");

    LoadedCheckpoint ck;
    ck.kind = r.str("kind");
    if (ck.kind != "acncr" && ck.kind != "ar")
        throw ValueError("checkpoint: unknown kind: " + ck.kind);
    ck.params.mu = r.real("mu");
    ck.params.theta1.constrained = r.flag("theta1.constrained");
    ck.params.theta1.net = load_net(dir, r, "theta1");
    ck.params.theta2.smooth.net = load_net(dir, r, "theta2.smooth");
    ck.params.theta2.inner.net = load_net(dir, r, "theta2.inner");

    for (const std::string& k : c.keys()) {
        if (k.rfind("extra.", 0) == 0) {
            ck.extra.emplace(k.substr(6), c.get_string(k, ""));
            continue;
        }
        if (!used.count(k))
            throw ValueError("checkpoint: unknown manifest key: " + k);
    }

    detail::validate_icnn_structure(ck.params.theta1);
    detail::validate_smooth_structure(ck.params.theta2.smooth);
    detail::validate_icnn_structure(ck.params.theta2.inner);
    return ck;
}

} // namespace cncreg
