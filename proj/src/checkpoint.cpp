#include "rfnet/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace rfnet {

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

float get_f32(std::istream& is) {
    const std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write("RFNT", 4);
    put_u16(os, kCheckpointVersion);
    put_u32(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u32(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        os.put(static_cast<char>(e.shape.size()));
        for (int extent : e.shape) put_u32(os, static_cast<std::uint32_t>(extent));
        for (float v : e.data) put_f32(os, v);
    }
    if (!os) throw IoError("checkpoint write failed: " + path);
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "RFNT", 4) != 0) throw IoError("not a checkpoint file: " + path);
    const std::uint16_t version = get_u16(is);
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    }
    const std::uint32_t count = get_u32(is);
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        CheckpointEntry e;
        const std::uint32_t name_len = get_u32(is);
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        const int rank = is.get();
        if (rank <= 0) throw IoError("corrupt checkpoint tensor header: " + path);
        std::size_t n = 1;
        for (int i = 0; i < rank; ++i) {
            const std::uint32_t extent = get_u32(is);
            e.shape.push_back(static_cast<int>(extent));
            n *= extent;
        }
        e.data.resize(n);
        for (std::size_t i = 0; i < n; ++i) e.data[i] = get_f32(is);
        if (!is) throw IoError("truncated checkpoint: " + path);
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace rfnet
