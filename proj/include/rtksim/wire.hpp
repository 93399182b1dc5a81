#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "rtksim/observation.hpp"

namespace rtksim {

// Correction wire format. Outer framing follows the RTCM 3 layout
// (0xD3 preamble, 10-bit payload length, CRC-24Q trailer); the payloads
// are this project's own simplified station-coordinate and observation
// messages. docs/wire_format.md is the normative field table.

inline constexpr std::uint8_t kFramePreamble = 0xD3;
inline constexpr std::size_t kMaxPayloadBytes = 1023;

inline constexpr unsigned kMsgStationCoords = 1005;
inline constexpr unsigned kMsgObservations = 1074;

/// CRC-24Q: polynomial 0x1864CFB, zero init, no reflection, no final xor,
/// MSB-first.
std::uint32_t crc24q(const std::uint8_t* data, std::size_t len);
std::uint32_t crc24q(const std::vector<std::uint8_t>& data);

/// MSB-first bit packing over a byte vector.
class BitWriter {
 public:
  void put(std::uint64_t value, unsigned bits);
  void put_signed(std::int64_t value, unsigned bits);
  std::vector<std::uint8_t> take();  // zero-pads the final byte

 private:
  std::vector<std::uint8_t> bytes_;
  unsigned bit_pos_ = 0;
};

class BitReader {
 public:
  BitReader(const std::uint8_t* data, std::size_t len)
      : data_(data), bits_(8 * len) {}

  std::uint64_t get(unsigned bits);
  std::int64_t get_signed(unsigned bits);
  bool overflowed() const { return overflow_; }

 private:
  const std::uint8_t* data_;
  std::size_t bits_;
  std::size_t pos_ = 0;
  bool overflow_ = false;
};

/// Reference-station survey coordinates, 0.1 mm units, signed 38 bit.
struct StationCoordsMsg {
  std::uint16_t station_id = 0;   // 12 bit
  std::uint32_t epoch_ms = 0;     // 30 bit, ms since scenario epoch
  std::int64_t x_units = 0;
  std::int64_t y_units = 0;
  std::int64_t z_units = 0;

  static StationCoordsMsg from_ecef(std::uint16_t station_id, double t,
                                    const EcefCoord& pos);
  EcefCoord to_ecef() const;
  double t() const { return epoch_ms * 1e-3; }

  friend bool operator==(const StationCoordsMsg&,
                         const StationCoordsMsg&) = default;
};

/// One satellite in an observation message. The carrier phase travels as
/// an offset from the pseudorange-implied cycle count so it fits its
/// 40-bit field; both sides derive the same base from the transmitted
/// pseudorange, which keeps the round trip lossless.
struct ObsEntry {
  std::uint8_t constellation = 0;      // 2 bit
  std::uint8_t prn = 0;                // 6 bit
  std::uint64_t pseudorange_units = 0; // 38 bit, 0.001 m
  std::int64_t phase_offset_units = 0; // 40 bit, 0.0001 cycles
  std::uint8_t cn0_units = 0;          // 8 bit, 0.25 dB-Hz
  bool lock = false;                   // 1 bit, true = measurements valid

  friend bool operator==(const ObsEntry&, const ObsEntry&) = default;
};

struct ObservationsMsg {
  std::uint16_t station_id = 0;
  std::uint32_t epoch_ms = 0;
  std::vector<ObsEntry> entries;  // up to 63

  static ObservationsMsg from_epoch(std::uint16_t station_id,
                                    const EpochObservations& epoch);
  EpochObservations to_epoch(const std::string& receiver_id) const;
  double t() const { return epoch_ms * 1e-3; }

  friend bool operator==(const ObservationsMsg&,
                         const ObservationsMsg&) = default;
};

using CorrectionMessage = std::variant<StationCoordsMsg, ObservationsMsg>;

enum class DecodeError {
  BadPreamble,
  TruncatedFrame,
  BadCrc,
  UnknownMessageType,
  BadLength,
};

std::vector<std::uint8_t> encode_message(const CorrectionMessage& m);

struct DecodeResult {
  std::optional<CorrectionMessage> message;
  DecodeError error = DecodeError::BadPreamble;  // meaningful when !message
  std::size_t consumed = 0;                      // bytes used from the input
};

/// Decodes one frame from the start of `data`. On error, `consumed` tells
/// the caller how far it is safe to skip.
DecodeResult decode_message(const std::uint8_t* data, std::size_t len);
DecodeResult decode_message(const std::vector<std::uint8_t>& data);

/// Incremental decoder with skip-and-resync: garbage between frames and
/// frames that fail the CRC are skipped by scanning forward to the next
/// 0xD3 byte.
class StreamDecoder {
 public:
  void push(const std::uint8_t* data, std::size_t len);
  void push(const std::vector<std::uint8_t>& data);

  /// Next complete message, if one is buffered.
  std::optional<CorrectionMessage> next();

  std::size_t skipped_bytes() const { return skipped_bytes_; }
  std::size_t bad_frames() const { return bad_frames_; }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t skipped_bytes_ = 0;
  std::size_t bad_frames_ = 0;
};

}  // namespace rtksim
