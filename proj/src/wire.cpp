#include "rtksim/wire.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>

namespace rtksim {

namespace {

constexpr std::uint32_t kCrcPoly = 0x1864CFB;

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t b = 0; b < 256; ++b) {
    std::uint32_t crc = b << 16;
    for (int i = 0; i < 8; ++i) {
      crc <<= 1;
      if (crc & 0x1000000) crc ^= kCrcPoly;
    }
    table[b] = crc & 0xFFFFFF;
  }
  return table;
}

const std::array<std::uint32_t, 256> kCrcTable = make_crc_table();

}  // namespace

std::uint32_t crc24q(const std::uint8_t* data, std::size_t len) {
  std::uint32_t crc = 0;
  for (std::size_t i = 0; i < len; ++i) {
    crc = ((crc << 8) & 0xFFFFFF) ^ kCrcTable[(crc >> 16) ^ data[i]];
  }
  return crc;
}

std::uint32_t crc24q(const std::vector<std::uint8_t>& data) {
  return crc24q(data.data(), data.size());
}

void BitWriter::put(std::uint64_t value, unsigned bits) {
  assert(bits <= 64);
  for (unsigned i = bits; i-- > 0;) {
    if (bit_pos_ % 8 == 0) bytes_.push_back(0);
    if ((value >> i) & 1ULL) {
      bytes_.back() |= static_cast<std::uint8_t>(0x80 >> (bit_pos_ % 8));
    }
    ++bit_pos_;
  }
}

void BitWriter::put_signed(std::int64_t value, unsigned bits) {
  put(static_cast<std::uint64_t>(value) & ((bits == 64 ? ~0ULL : (1ULL << bits) - 1)),
      bits);
}

std::vector<std::uint8_t> BitWriter::take() { return std::move(bytes_); }

std::uint64_t BitReader::get(unsigned bits) {
  std::uint64_t v = 0;
  for (unsigned i = 0; i < bits; ++i) {
    if (pos_ >= bits_) {
      overflow_ = true;
      return 0;
    }
    v = (v << 1) | ((data_[pos_ / 8] >> (7 - pos_ % 8)) & 1U);
    ++pos_;
  }
  return v;
}

std::int64_t BitReader::get_signed(unsigned bits) {
  std::uint64_t v = get(bits);
  if (bits < 64 && (v & (1ULL << (bits - 1)))) {
    v |= ~((1ULL << bits) - 1);  // sign-extend
  }
  return static_cast<std::int64_t>(v);
}

namespace {

constexpr double kPrUnit = 0.001;        // m
constexpr double kPhaseUnit = 0.0001;    // cycles
constexpr double kCoordUnit = 0.0001;    // m
constexpr double kCn0Unit = 0.25;        // dB-Hz
constexpr std::uint32_t kEpochMsMask = (1U << 30) - 1;

/// Cycle count implied by the transmitted pseudorange, in phase units.
/// Evaluated identically by encoder and decoder, so the phase offset
/// round-trips exactly.
std::int64_t phase_base_units(std::uint64_t pr_units) {
  const double pr_m = static_cast<double>(pr_units) * kPrUnit;
  return static_cast<std::int64_t>(
      std::floor(pr_m / kCarrierWavelength / kPhaseUnit));
}

std::uint32_t to_epoch_ms(double t) {
  return static_cast<std::uint32_t>(std::llround(t * 1000.0)) & kEpochMsMask;
}

}  // namespace

StationCoordsMsg StationCoordsMsg::from_ecef(std::uint16_t station_id,
                                             double t, const EcefCoord& pos) {
  StationCoordsMsg m;
  m.station_id = station_id & 0xFFF;
  m.epoch_ms = to_epoch_ms(t);
  m.x_units = std::llround(pos.x() / kCoordUnit);
  m.y_units = std::llround(pos.y() / kCoordUnit);
  m.z_units = std::llround(pos.z() / kCoordUnit);
  return m;
}

EcefCoord StationCoordsMsg::to_ecef() const {
  return EcefCoord{x_units * kCoordUnit, y_units * kCoordUnit,
                   z_units * kCoordUnit};
}

ObservationsMsg ObservationsMsg::from_epoch(std::uint16_t station_id,
                                            const EpochObservations& epoch) {
  ObservationsMsg m;
  m.station_id = station_id & 0xFFF;
  m.epoch_ms = to_epoch_ms(epoch.t);
  for (const auto& obs : epoch.observations) {
    if (m.entries.size() >= 63) break;
    ObsEntry e;
    e.constellation = static_cast<std::uint8_t>(obs.sat.constellation);
    e.prn = static_cast<std::uint8_t>(obs.sat.prn);
    e.cn0_units = static_cast<std::uint8_t>(
        std::clamp<long long>(std::llround(obs.cn0 / kCn0Unit), 0, 255));
    e.lock = !obs.loss_of_lock;
    if (e.lock) {
      constexpr std::int64_t pr_max = (1LL << 38) - 1;
      constexpr std::int64_t off_max = (1LL << 39) - 1;
      e.pseudorange_units = static_cast<std::uint64_t>(
          std::clamp(std::llround(obs.pseudorange / kPrUnit), 0LL,
                     static_cast<long long>(pr_max)));
      e.phase_offset_units = std::clamp<std::int64_t>(
          std::llround(obs.carrier_phase / kPhaseUnit) -
              phase_base_units(e.pseudorange_units),
          -off_max - 1, off_max);
    }
    m.entries.push_back(e);
  }
  return m;
}

EpochObservations ObservationsMsg::to_epoch(
    const std::string& receiver_id) const {
  EpochObservations epoch;
  epoch.receiver_id = receiver_id;
  epoch.t = t();
  for (const auto& e : entries) {
    Observation obs;
    obs.sat = SatelliteId{static_cast<ConstellationKind>(e.constellation),
                          e.prn};
    obs.cn0 = e.cn0_units * kCn0Unit;
    obs.loss_of_lock = !e.lock;
    if (e.lock) {
      obs.pseudorange = static_cast<double>(e.pseudorange_units) * kPrUnit;
      obs.carrier_phase =
          static_cast<double>(phase_base_units(e.pseudorange_units) +
                              e.phase_offset_units) *
          kPhaseUnit;
    }
    epoch.observations.push_back(obs);
  }
  std::sort(epoch.observations.begin(), epoch.observations.end(),
            [](const Observation& a, const Observation& b) {
              return a.sat < b.sat;
            });
  return epoch;
}

namespace {

std::vector<std::uint8_t> frame(const std::vector<std::uint8_t>& payload) {
  assert(payload.size() <= kMaxPayloadBytes);
  std::vector<std::uint8_t> out;
  out.reserve(payload.size() + 6);
  out.push_back(kFramePreamble);
  out.push_back(static_cast<std::uint8_t>((payload.size() >> 8) & 0x03));
  out.push_back(static_cast<std::uint8_t>(payload.size() & 0xFF));
  out.insert(out.end(), payload.begin(), payload.end());
  const std::uint32_t crc = crc24q(out.data(), out.size());
  out.push_back(static_cast<std::uint8_t>((crc >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((crc >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>(crc & 0xFF));
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_message(const CorrectionMessage& m) {
  BitWriter w;
  if (const auto* sc = std::get_if<StationCoordsMsg>(&m)) {
    w.put(kMsgStationCoords, 12);
    w.put(sc->station_id, 12);
    w.put(sc->epoch_ms, 30);
    w.put_signed(sc->x_units, 38);
    w.put_signed(sc->y_units, 38);
    w.put_signed(sc->z_units, 38);
  } else {
    const auto& om = std::get<ObservationsMsg>(m);
    w.put(kMsgObservations, 12);
    w.put(om.station_id, 12);
    w.put(om.epoch_ms, 30);
    w.put(om.entries.size(), 6);
    for (const auto& e : om.entries) {
      w.put(e.constellation, 2);
      w.put(e.prn, 6);
      w.put(e.pseudorange_units, 38);
      w.put_signed(e.phase_offset_units, 40);
      w.put(e.cn0_units, 8);
      w.put(e.lock ? 1 : 0, 1);
    }
  }
  return frame(w.take());
}

namespace {

std::size_t payload_bytes_for(unsigned msg_type, std::size_t n_entries) {
  const std::size_t bits = msg_type == kMsgStationCoords
                               ? 12u + 12u + 30u + 3u * 38u
                               : 12u + 12u + 30u + 6u + n_entries * 95u;
  return (bits + 7) / 8;
}

}  // namespace

DecodeResult decode_message(const std::uint8_t* data, std::size_t len) {
  DecodeResult r;
  if (len < 1 || data[0] != kFramePreamble) {
    r.error = DecodeError::BadPreamble;
    r.consumed = len >= 1 ? 1 : 0;
    return r;
  }
  if (len < 3) {
    r.error = DecodeError::TruncatedFrame;
    return r;
  }
  if ((data[1] & 0xFC) != 0) {  // reserved bits must be zero
    r.error = DecodeError::BadPreamble;
    r.consumed = 1;
    return r;
  }
  const std::size_t payload_len = (static_cast<std::size_t>(data[1] & 0x03) << 8) | data[2];
  const std::size_t frame_len = 3 + payload_len + 3;
  if (len < frame_len) {
    r.error = DecodeError::TruncatedFrame;
    return r;
  }
  const std::uint32_t want = (static_cast<std::uint32_t>(data[3 + payload_len]) << 16) |
                             (static_cast<std::uint32_t>(data[4 + payload_len]) << 8) |
                             data[5 + payload_len];
  if (crc24q(data, 3 + payload_len) != want) {
    r.error = DecodeError::BadCrc;
    r.consumed = 1;  // the preamble byte was spurious or the frame corrupt
    return r;
  }

  BitReader br(data + 3, payload_len);
  const unsigned msg_type = static_cast<unsigned>(br.get(12));
  if (msg_type != kMsgStationCoords && msg_type != kMsgObservations) {
    r.error = DecodeError::UnknownMessageType;
    r.consumed = frame_len;  // valid frame, unknown content: skip whole
    return r;
  }
  if (msg_type == kMsgStationCoords) {
    if (payload_len != payload_bytes_for(msg_type, 0)) {
      r.error = DecodeError::BadLength;
      r.consumed = frame_len;
      return r;
    }
    StationCoordsMsg m;
    m.station_id = static_cast<std::uint16_t>(br.get(12));
    m.epoch_ms = static_cast<std::uint32_t>(br.get(30));
    m.x_units = br.get_signed(38);
    m.y_units = br.get_signed(38);
    m.z_units = br.get_signed(38);
    r.message = m;
  } else {
    ObservationsMsg m;
    m.station_id = static_cast<std::uint16_t>(br.get(12));
    m.epoch_ms = static_cast<std::uint32_t>(br.get(30));
    const std::size_t n = br.get(6);
    if (payload_len != payload_bytes_for(msg_type, n)) {
      r.error = DecodeError::BadLength;
      r.consumed = frame_len;
      return r;
    }
    for (std::size_t i = 0; i < n; ++i) {
      ObsEntry e;
      e.constellation = static_cast<std::uint8_t>(br.get(2));
      e.prn = static_cast<std::uint8_t>(br.get(6));
      e.pseudorange_units = br.get(38);
      e.phase_offset_units = br.get_signed(40);
      e.cn0_units = static_cast<std::uint8_t>(br.get(8));
      e.lock = br.get(1) != 0;
      m.entries.push_back(e);
    }
    r.message = m;
  }
  r.consumed = frame_len;
  return r;
}

DecodeResult decode_message(const std::vector<std::uint8_t>& data) {
  return decode_message(data.data(), data.size());
}

void StreamDecoder::push(const std::uint8_t* data, std::size_t len) {
  buf_.insert(buf_.end(), data, data + len);
}

void StreamDecoder::push(const std::vector<std::uint8_t>& data) {
  push(data.data(), data.size());
}

std::optional<CorrectionMessage> StreamDecoder::next() {
  std::size_t pos = 0;
  while (pos < buf_.size()) {
    if (buf_[pos] != kFramePreamble) {
      ++pos;
      ++skipped_bytes_;
      continue;
    }
    DecodeResult r = decode_message(buf_.data() + pos, buf_.size() - pos);
    if (r.message) {
      buf_.erase(buf_.begin(), buf_.begin() + pos + r.consumed);
      return r.message;
    }
    if (r.error == DecodeError::TruncatedFrame) {
      break;  // wait for more bytes
    }
    // Bad CRC / spurious preamble / unknown type: skip and resync.
    ++bad_frames_;
    pos += std::max<std::size_t>(r.consumed, 1);
    skipped_bytes_ += std::max<std::size_t>(r.consumed, 1);
  }
  buf_.erase(buf_.begin(), buf_.begin() + pos);
  return std::nullopt;
}

}  // namespace rtksim
