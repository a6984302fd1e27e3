#include "shapenet/binary_io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "shapenet/error.hpp"

namespace shapenet {

void ByteReader::need(std::size_t n) {
    if (data_.size() - pos_ < n) throw DataError("unexpected end of file");
}

std::string ByteReader::bytes(std::size_t n) {
    need(n);
    std::string s(data_.begin() + static_cast<std::ptrdiff_t>(pos_), data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
}

std::uint8_t ByteReader::u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
}

float ByteReader::f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp" + std::to_string(std::random_device{}());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw DataError("short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw DataError("cannot rename onto " + path.string());
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& contents) {
    write_file_atomic(path, std::string_view(contents.data(), contents.size()));
}

namespace {

void expect_magic(ByteReader& r, std::string_view magic) {
    if (r.bytes(magic.size()) != magic) throw DataError("bad magic, expected " + std::string(magic));
}

Dims3 read_dims(ByteReader& r) {
    Dims3 d;
    d.x = static_cast<int>(r.u32());
    d.y = static_cast<int>(r.u32());
    d.z = static_cast<int>(r.u32());
    if (d.x <= 0 || d.y <= 0 || d.z <= 0 || d.volume() > (1u << 30)) throw DataError("implausible grid dims");
    return d;
}

void write_dims(ByteWriter& w, const Dims3& d) {
    w.u32(static_cast<std::uint32_t>(d.x));
    w.u32(static_cast<std::uint32_t>(d.y));
    w.u32(static_cast<std::uint32_t>(d.z));
}

} // namespace

std::vector<char> encode_voxels(const VoxelGrid& grid) {
    ByteWriter w;
    w.bytes("VOX1");
    write_dims(w, grid.dims());
    for (auto c : grid.cells()) w.u8(c ? 1 : 0);
    return w.data();
}

VoxelGrid decode_voxels(std::vector<char> data, int payload_origin) {
    ByteReader r(std::move(data));
    expect_magic(r, "VOX1");
    const Dims3 d = read_dims(r);
    if (r.remaining() != d.volume()) throw DataError("voxel payload size does not match dims");
    VoxelGrid g(d, 0);
    for (std::size_t i = 0; i < d.volume(); ++i) {
        const auto v = r.u8();
        if (v > 1) throw DataError("voxel value outside {0,1}");
        g[i] = v;
    }
    if (payload_origin == 0) return g;
    VoxelGrid padded(d, payload_origin);
    padded.cells() = g.cells();
    return padded;
}

void save_voxels(const std::filesystem::path& path, const VoxelGrid& grid) {
    write_file_atomic(path, encode_voxels(grid));
}

VoxelGrid load_voxels(const std::filesystem::path& path, int payload_origin) {
    return decode_voxels(read_file(path), payload_origin);
}

std::vector<char> encode_observation(const ObservationGrid& obs) {
    ByteWriter w;
    w.bytes("OBS1");
    write_dims(w, obs.dims());
    for (auto s : obs.states()) w.u8(static_cast<std::uint8_t>(s));
    return w.data();
}

ObservationGrid decode_observation(std::vector<char> data) {
    ByteReader r(std::move(data));
    expect_magic(r, "OBS1");
    const Dims3 d = read_dims(r);
    if (r.remaining() != d.volume()) throw DataError("observation payload size does not match dims");
    ObservationGrid obs(d);
    for (std::size_t i = 0; i < d.volume(); ++i) {
        const auto v = r.u8();
        if (v > 2) throw DataError("observation code outside {0,1,2}");
        obs[i] = static_cast<VoxelState>(v);
    }
    return obs;
}

void save_observation(const std::filesystem::path& path, const ObservationGrid& obs) {
    write_file_atomic(path, encode_observation(obs));
}

ObservationGrid load_observation(const std::filesystem::path& path) { return decode_observation(read_file(path)); }

std::vector<char> encode_depth(const DepthMap& depth) {
    ByteWriter w;
    w.bytes("DPT1");
    w.u32(static_cast<std::uint32_t>(depth.width));
    w.u32(static_cast<std::uint32_t>(depth.height));
    w.f32(static_cast<float>(depth.focal_px));
    for (float d : depth.depths) w.f32(d);
    return w.data();
}

DepthMap decode_depth(std::vector<char> data) {
    ByteReader r(std::move(data));
    expect_magic(r, "DPT1");
    DepthMap d;
    d.width = static_cast<int>(r.u32());
    d.height = static_cast<int>(r.u32());
    d.focal_px = r.f32();
    if (d.width <= 0 || d.height <= 0) throw DataError("depth map dims must be positive");
    const auto n = static_cast<std::size_t>(d.width) * static_cast<std::size_t>(d.height);
    if (r.remaining() != 4 * n) throw DataError("depth payload size does not match dims");
    d.depths.resize(n);
    for (auto& v : d.depths) {
        v = r.f32();
        if (std::isnan(v) || v <= 0) throw DataError("depth values must be positive or +inf");
    }
    return d;
}

void save_depth(const std::filesystem::path& path, const DepthMap& depth) {
    write_file_atomic(path, encode_depth(depth));
}

DepthMap load_depth(const std::filesystem::path& path) { return decode_depth(read_file(path)); }

} // namespace shapenet
