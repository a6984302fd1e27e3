#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "shapenet/camera.hpp"
#include "shapenet/voxel_grid.hpp"

namespace shapenet {

/// Little-endian byte sink.
class ByteWriter {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    const std::vector<char>& data() const { return buf_; }

private:
    std::vector<char> buf_;
};

/// Little-endian byte source; throws DataError when reading past the end.
class ByteReader {
public:
    explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

    std::string bytes(std::size_t n);
    std::uint8_t u8();
    std::uint32_t u32();
    float f32();
    bool at_end() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n);
    std::vector<char> data_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames it over `path`, so a
/// partially written file is never visible under the final name.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& contents);

std::vector<char> encode_voxels(const VoxelGrid& grid);
VoxelGrid decode_voxels(std::vector<char> data, int payload_origin = 0);
void save_voxels(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid load_voxels(const std::filesystem::path& path, int payload_origin = 0);

std::vector<char> encode_observation(const ObservationGrid& obs);
ObservationGrid decode_observation(std::vector<char> data);
void save_observation(const std::filesystem::path& path, const ObservationGrid& obs);
ObservationGrid load_observation(const std::filesystem::path& path);

std::vector<char> encode_depth(const DepthMap& depth);
DepthMap decode_depth(std::vector<char> data);
void save_depth(const std::filesystem::path& path, const DepthMap& depth);
DepthMap load_depth(const std::filesystem::path& path);

} // namespace shapenet
