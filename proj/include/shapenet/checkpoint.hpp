#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "shapenet/cdbn.hpp"
#include "shapenet/error.hpp"

namespace shapenet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public DataError {
public:
    enum class Code { Io, Truncated, BadMagic, VersionMismatch, ShapeInconsistent };

    CheckpointError(Code code, const std::string& what) : DataError(what), code_(code) {}
    Code code() const noexcept { return code_; }

private:
    Code code_;
};

/// "CDB1" layout: magic, u32 version, u32 layer count, then per layer a u8
/// kind tag (0 conv, 1 dense, 2 top, 3 classifier head), u32 shape header and
/// little-endian f32 parameters; trailing u32 class count and u32 duplication.
std::vector<char> encode_checkpoint(const NetworkParams& net);
NetworkParams decode_checkpoint(std::vector<char> bytes);

void save_checkpoint(const NetworkParams& net, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

} // namespace shapenet
