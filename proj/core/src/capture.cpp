#include "echodoa/capture.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "echodoa/binary_io.hpp"
#include "echodoa/config_file.hpp"
#include "echodoa/error.hpp"

namespace echodoa {

std::vector<std::uint8_t> capture_to_bytes(const CaptureFile& capture) {
  require(capture.channels > 0 && capture.frames.size() % capture.channels == 0,
          ErrorKind::shape_mismatch, "capture: frame payload is not a whole number of frames");
  require(capture.element_x.size() == capture.channels, ErrorKind::shape_mismatch,
          "capture: one element position per channel required");
  ByteWriter w;
  w.tag(std::string_view(kCaptureMagic, 4));
  w.u8(kCaptureVersion);
  w.f64(capture.sample_rate);
  w.u32(capture.channels);
  for (double x : capture.element_x) w.f64(x);
  w.string(capture.annotation);
  w.u64(capture.frame_count());
  for (double v : capture.frames) w.f64(v);
  w.finish_with_crc();
  return w.take();
}

CaptureFile capture_from_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader header(bytes);
  header.expect_tag(std::string_view(kCaptureMagic, 4));
  const std::uint8_t version = header.u8();
  require(version == kCaptureVersion, ErrorKind::version_mismatch,
          "capture version " + std::to_string(version) + " is not supported");
  ByteReader r(verified_body(bytes));
  r.bytes(5);
  CaptureFile c;
  c.sample_rate = r.f64();
  require(std::isfinite(c.sample_rate) && c.sample_rate > 0.0, ErrorKind::invalid_argument,
          "capture: sample rate must be > 0");
  c.channels = r.u32();
  require(c.channels >= 1 && c.channels <= 4096, ErrorKind::truncated, "capture: implausible channel count");
  c.element_x.resize(c.channels);
  for (auto& x : c.element_x) x = r.f64();
  c.annotation = r.string();
  const std::uint64_t frames = r.u64();
  require(r.remaining() == frames * c.channels * 8, ErrorKind::truncated,
          "capture: declared frame count does not match the payload length");
  c.frames.resize(frames * c.channels);
  for (auto& v : c.frames) v = r.f64();
  return c;
}

void write_capture(const CaptureFile& capture, const std::filesystem::path& path) {
  write_file_bytes(path, capture_to_bytes(capture));
}

CaptureFile read_capture(const std::filesystem::path& path) { return capture_from_bytes(read_file_bytes(path)); }

CaptureFile capture_from_waveforms(std::span<const RealWaveform> waves, const ArrayGeometry& geometry,
                                   std::string annotation) {
  require(!waves.empty(), ErrorKind::invalid_argument, "capture_from_waveforms: no waveforms");
  CaptureFile c;
  c.sample_rate = waves.front().sample_rate;
  c.channels = static_cast<std::uint32_t>(waves.front().channels);
  c.element_x = geometry.element_x;
  c.annotation = std::move(annotation);
  require(c.element_x.size() == c.channels, ErrorKind::shape_mismatch,
          "capture_from_waveforms: geometry does not match the channel count");
  for (const auto& w : waves) {
    require(w.channels == c.channels && w.samples_per_channel == waves.front().samples_per_channel &&
                w.sample_rate == c.sample_rate,
            ErrorKind::shape_mismatch, "capture_from_waveforms: waveforms differ in shape or rate");
    for (std::size_t n = 0; n < w.samples_per_channel; ++n)
      for (std::size_t ch = 0; ch < w.channels; ++ch) c.frames.push_back(w.data[ch * w.samples_per_channel + n]);
  }
  return c;
}

std::vector<DatasetRecord> ingest_capture(const std::filesystem::path& path, const ArrayGeometry& geometry,
                                          const SimConfig& config) {
  return ingest_capture(read_capture(path), geometry, config);
}

std::vector<DatasetRecord> ingest_capture(const CaptureFile& capture, const ArrayGeometry& geometry,
                                          const SimConfig& config) {
  config.validate();
  geometry.validate();
  require(std::abs(capture.sample_rate - config.sample_rate) <= 1e-9 * config.sample_rate,
          ErrorKind::rate_mismatch,
          "capture sample rate " + std::to_string(capture.sample_rate) + " differs from configured " +
              std::to_string(config.sample_rate));
  require(capture.channels == geometry.size(), ErrorKind::shape_mismatch,
          "capture channel count does not match the array geometry");

  // labels from the annotation
  std::string text = capture.annotation;
  for (char& ch : text)
    if (ch == ';') ch = '\n';
  const KeyValueMap labels = parse_key_values(text);
  auto label = [&](const char* key, double fallback) {
    const auto it = labels.find(key);
    return it == labels.end() ? fallback : parse_double(key, it->second);
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double doa = label("doa_deg", nan);
  const double range = label("range_m", nan);
  const double snr = label("snr_db", nan);

  const std::size_t per_record = config.listen_samples();
  const std::uint64_t frames = capture.frame_count();
  require(capture.frames.size() == frames * capture.channels && frames % per_record == 0,
          ErrorKind::shape_mismatch,
          "capture holds " + std::to_string(capture.frames.size()) + " values, not a whole number of " +
              std::to_string(per_record) + "-frame listen windows");
  std::vector<DatasetRecord> out;
  for (std::uint64_t start = 0; start + per_record <= frames; start += per_record) {
    RealWaveform wave;
    wave.channels = capture.channels;
    wave.samples_per_channel = per_record;
    wave.sample_rate = capture.sample_rate;
    wave.data.resize(wave.channels * per_record);
    for (std::size_t n = 0; n < per_record; ++n)
      for (std::size_t ch = 0; ch < wave.channels; ++ch)
        wave.data[ch * per_record + n] = capture.frames[(start + n) * capture.channels + ch];

    DatasetRecord rec;
    rec.doa_deg = doa;
    rec.range_m = range;
    rec.snr_db = snr;
    rec.seed = out.size();
    rec.payload = to_baseband(wave, config);
    try {
      rec.time_of_flight = detect_echo_window(rec.payload, DetectOptions{}).time_of_flight;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::no_echo_found) throw;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace echodoa
