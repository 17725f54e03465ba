#pragma once

// EDCF: container for externally captured raw sensor frames, and ingestion of
// such files into baseband dataset records.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "echodoa/dataset.hpp"
#include "echodoa/signal_sim.hpp"

namespace echodoa {

inline constexpr char kCaptureMagic[] = "EDCF";
inline constexpr std::uint8_t kCaptureVersion = 1;

/// Layout (little-endian): "EDCF", u8 version, f64 sample_rate, u32 channels,
/// f64 element_x[channels], u32 annotation length + UTF-8 text, u64 frame count,
/// frames as f64[channels] each, u32 CRC32 of everything before it.
struct CaptureFile {
  double sample_rate = 0.0;
  std::uint32_t channels = 0;
  std::vector<double> element_x;
  /// `key=value` pairs separated by ';' or newlines. Recognized labels:
  /// doa_deg, range_m, snr_db.
  std::string annotation;
  std::vector<double> frames;  ///< frame-major: frames[f * channels + ch]

  std::uint64_t frame_count() const { return channels == 0 ? 0 : frames.size() / channels; }
};

std::vector<std::uint8_t> capture_to_bytes(const CaptureFile& capture);
CaptureFile capture_from_bytes(std::span<const std::uint8_t> bytes);
void write_capture(const CaptureFile& capture, const std::filesystem::path& path);
CaptureFile read_capture(const std::filesystem::path& path);

/// Concatenates equally sized waveforms into one capture (one listen window each).
CaptureFile capture_from_waveforms(std::span<const RealWaveform> waves, const ArrayGeometry& geometry,
                                   std::string annotation = {});

/// Splits the frames into listen-window records and demodulates each one.
/// Throws bad_magic, version_mismatch, rate_mismatch or shape_mismatch.
std::vector<DatasetRecord> ingest_capture(const std::filesystem::path& path, const ArrayGeometry& geometry,
                                          const SimConfig& config);
std::vector<DatasetRecord> ingest_capture(const CaptureFile& capture, const ArrayGeometry& geometry,
                                          const SimConfig& config);

}  // namespace echodoa
