#include "csm/checkpoint.hpp"

#include <bit>
#include <map>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace csm {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'M', 'C', 'K', 'P', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t x) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((x >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

std::uint64_t get_u64(std::istream& in) {
    char buf[8];
    in.read(buf, 8);
    if (!in) throw std::runtime_error("truncated checkpoint");
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return x;
}

void put_string(std::ostream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    std::string s(get_u64(in), '\0');
    in.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in) throw std::runtime_error("truncated checkpoint");
    return s;
}

void put_tensor(std::ostream& out, const Tensor& t) {
    put_u64(out, t.shape.size());
    for (std::size_t d : t.shape) put_u64(out, d);
    for (double x : t.v) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

Tensor get_tensor(std::istream& in) {
    Tensor t;
    const std::uint64_t rank = get_u64(in);
    if (rank > 2) throw std::runtime_error("checkpoint tensor rank out of range");
    std::size_t count = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
        t.shape.push_back(get_u64(in));
        count *= t.shape.back();
    }
    t.v.resize(count);
    for (std::size_t i = 0; i < count; ++i) t.v[i] = std::bit_cast<double>(get_u64(in));
    return t;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    out.write(kMagic, sizeof(kMagic));
    const ModelConfig& mc = ckpt.params.config;
    put_u64(out, static_cast<std::uint64_t>(mc.n_positions));
    put_u64(out, static_cast<std::uint64_t>(mc.state_dim));
    put_u64(out, static_cast<std::uint64_t>(mc.pos_dim));
    put_u64(out, static_cast<std::uint64_t>(mc.attn_dim));
    put_u64(out, mc.feed_fresh_attention ? 1 : 0);
    put_u64(out, static_cast<std::uint64_t>(mc.max_train_clicks));
    put_u64(out, ckpt.stats_fingerprint);
    put_u64(out, ckpt.config_fingerprint);

    std::uint64_t n_tensors = 0;
    ckpt.params.for_each([&n_tensors](const std::string&, const Tensor&) { ++n_tensors; });
    put_u64(out, n_tensors);
    ckpt.params.for_each([&out](const std::string& name, const Tensor& t) {
        put_string(out, name);
        put_tensor(out, t);
    });
}

LoadedCheckpoint load_checkpoint(std::istream& in, std::uint64_t expected_stats_fingerprint) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::string_view(magic, 8) != std::string_view(kMagic, 8)) {
        throw std::runtime_error("not a checkpoint file (bad magic)");
    }

    ModelConfig mc;
    mc.n_positions = static_cast<int>(get_u64(in));
    mc.state_dim = static_cast<int>(get_u64(in));
    mc.pos_dim = static_cast<int>(get_u64(in));
    mc.attn_dim = static_cast<int>(get_u64(in));
    mc.feed_fresh_attention = get_u64(in) != 0;
    mc.max_train_clicks = static_cast<int>(get_u64(in));

    LoadedCheckpoint loaded;
    loaded.checkpoint.stats_fingerprint = get_u64(in);
    loaded.checkpoint.config_fingerprint = get_u64(in);
    loaded.checkpoint.params = CsmParams::init(mc, 0);

    const std::uint64_t n_tensors = get_u64(in);
    std::uint64_t seen = 0;
    std::map<std::string, Tensor> tensors;
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        std::string name = get_string(in);
        tensors.emplace(std::move(name), get_tensor(in));
    }
    loaded.checkpoint.params.for_each([&tensors, &seen](const std::string& name, Tensor& t) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::runtime_error("checkpoint missing tensor: " + name);
        if (it->second.shape != t.shape) {
            throw std::runtime_error("checkpoint tensor shape mismatch: " + name);
        }
        t = std::move(it->second);
        ++seen;
    });
    if (seen != n_tensors) throw std::runtime_error("checkpoint holds unexpected tensors");

    if (expected_stats_fingerprint != 0 &&
        loaded.checkpoint.stats_fingerprint != expected_stats_fingerprint) {
        loaded.stats_mismatch = true;
    }
    return loaded;
}

std::uint64_t file_fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace csm
