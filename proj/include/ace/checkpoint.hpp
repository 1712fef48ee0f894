#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "ace/serialization.hpp"
#include "ace/trainer.hpp"

namespace ace {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to continue a run, plus the caller's experiment description.
struct CheckpointContents {
  TrainRun run;
  Json experiment;
};

Json run_to_json(const TrainRun& run);
TrainRun run_from_json(const Json& json);

/// Container: 8-byte magic, u32 version, u64 payload length, CBOR payload, u32 CRC-32 of the payload.
void save_checkpoint(const TrainRun& run, const std::filesystem::path& path, const Json& experiment = Json::object());
/// Throws CheckpointError on a bad magic, version mismatch, truncation or checksum failure.
CheckpointContents load_checkpoint(const std::filesystem::path& path);

}  // namespace ace
