#include "florg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "florg/errors.hpp"

namespace florg {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'R', 'G', 'C', 'K', 'P', 'T'};

// byte-wise little-endian packing keeps the format host-independent

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
    const unsigned char* p;
    size_t left;
    std::string path;

    void need(size_t n) const {
        if (left < n) throw IoError("truncated checkpoint '" + path + "'");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        left -= 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
};

} // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, 0); // reserved
    put_u64(buf, ckpt.config_text.size());
    buf.append(ckpt.config_text);
    put_u32(buf, static_cast<std::uint32_t>(ckpt.rounds));
    put_u32(buf, static_cast<std::uint32_t>(ckpt.matrices.size()));
    for (const auto& [name, m] : ckpt.matrices) {
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf.append(name);
        put_u64(buf, static_cast<std::uint64_t>(m.rows()));
        put_u64(buf, static_cast<std::uint64_t>(m.cols()));
        const double* d = m.data();
        for (long long i = 0; i < static_cast<long long>(m.rows()) * m.cols(); ++i) {
            put_f64(buf, d[i]);
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    out.flush();
    if (!out) throw IoError("short write to '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{reinterpret_cast<const unsigned char*>(data.data()), data.size(), path};

    const std::string magic = r.bytes(sizeof(kMagic));
    if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
        throw IoError("'" + path + "' is not a checkpoint (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) + " in '" +
                      path + "'");
    }
    r.u32(); // reserved

    Checkpoint ckpt;
    const std::uint64_t cfg_len = r.u64();
    ckpt.config_text = r.bytes(cfg_len);
    ckpt.rounds = static_cast<int>(r.u32());
    const std::uint32_t count = r.u32();
    ckpt.matrices.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        std::string name = r.bytes(name_len);
        const std::uint64_t rows = r.u64();
        const std::uint64_t cols = r.u64();
        if (rows > (1u << 20) || cols > (1u << 20)) {
            throw IoError("implausible matrix shape in '" + path + "'");
        }
        Matrix m(static_cast<int>(rows), static_cast<int>(cols));
        double* d = m.data();
        for (std::uint64_t j = 0; j < rows * cols; ++j) d[j] = r.f64();
        ckpt.matrices.emplace_back(std::move(name), std::move(m));
    }
    if (r.left != 0) throw IoError("trailing bytes in checkpoint '" + path + "'");
    return ckpt;
}

} // namespace florg
