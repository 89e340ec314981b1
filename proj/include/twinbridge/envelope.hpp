#pragma once

// Bridge wire frame. Little-endian, fixed layout:
//
//   offset  size  field
//   0       4     magic "TWBR"
//   4       1     version (1)
//   5       1     tier (0 critical, 1 standard, 2 bulk)
//   6       1     flags (bit0 = replay)
//   7       8     seq, per (topic, direction)
//   15      8     sim_time_us
//   23      2     topic_len
//   25      n     topic, UTF-8
//   25+n    1     kind
//   26+n    4     payload_len
//   30+n    m     payload
//   30+n+m  4     crc32 (IEEE) over every preceding byte
//
// A link packet carries one or more frames back to back.

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <zlib.h>

#include "twinbridge/msgbus.hpp"
#include "twinbridge/sim_time.hpp"

namespace twinbridge {

enum class Tier : std::uint8_t { Critical = 0, Standard = 1, Bulk = 2 };
inline constexpr std::size_t kTierCount = 3;

inline std::string_view tier_name(Tier t) {
  switch (t) {
    case Tier::Critical: return "critical";
    case Tier::Standard: return "standard";
    case Tier::Bulk: return "bulk";
  }
  return "?";
}

inline std::optional<Tier> parse_tier(std::string_view s) {
  if (s == "critical") return Tier::Critical;
  if (s == "standard") return Tier::Standard;
  if (s == "bulk") return Tier::Bulk;
  return std::nullopt;
}

namespace wire {

inline constexpr std::array<std::uint8_t, 4> kMagic{'T', 'W', 'B', 'R'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kFlagReplay = 0x01;
inline constexpr std::size_t kHeaderBeforeTopic = 25;
inline constexpr std::size_t kFixedOverhead = 36 - 2;  // every field except topic and payload bytes

inline std::size_t frame_size(std::size_t topic_len, std::size_t payload_len) {
  return kFixedOverhead + topic_len + payload_len;
}

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[offset + i]) << (8 * i);
  return v;
}

}  // namespace wire

struct Envelope {
  Tier tier = Tier::Standard;
  std::uint8_t flags = 0;
  std::uint64_t seq = 0;
  std::uint64_t sim_time_us = 0;
  std::string topic;
  MessageKind kind = MessageKind::Blob;
  std::vector<std::uint8_t> payload;

  bool is_replay() const { return (flags & wire::kFlagReplay) != 0; }

  Message to_message() const {
    return Message{topic, kind, payload, SimDuration{static_cast<std::int64_t>(sim_time_us)}};
  }

  static Envelope from_message(const Message& m, Tier tier, std::uint64_t seq, std::uint8_t flags = 0) {
    if (m.publish_time < SimDuration::zero()) throw std::invalid_argument("Envelope: negative publish time");
    return Envelope{tier, flags, seq, static_cast<std::uint64_t>(m.publish_time.count()), m.topic, m.kind,
                    m.payload};
  }

  std::size_t encoded_size() const { return wire::frame_size(topic.size(), payload.size()); }

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

enum class EnvelopeErrorCode { PayloadTooLarge, TopicTooLong };

class EnvelopeError : public std::runtime_error {
 public:
  EnvelopeError(EnvelopeErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  EnvelopeErrorCode code() const { return code_; }

 private:
  EnvelopeErrorCode code_;
};

// Writes a frame built with an arbitrary version byte. Only the decoder
// tests need a version other than the current one.
inline std::vector<std::uint8_t> encode_frame(const Envelope& e, std::uint8_t version) {
  if (e.payload.size() > kMaxPayloadBytes) {
    throw EnvelopeError(EnvelopeErrorCode::PayloadTooLarge, "payload exceeds 16 MiB");
  }
  if (e.topic.size() > 0xFFFF) throw EnvelopeError(EnvelopeErrorCode::TopicTooLong, "topic exceeds 65535 bytes");
  std::vector<std::uint8_t> out;
  out.reserve(e.encoded_size());
  for (std::uint8_t b : wire::kMagic) out.push_back(b);
  out.push_back(version);
  out.push_back(static_cast<std::uint8_t>(e.tier));
  out.push_back(e.flags);
  wire::put_le<std::uint64_t>(out, e.seq);
  wire::put_le<std::uint64_t>(out, e.sim_time_us);
  wire::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.topic.size()));
  out.insert(out.end(), e.topic.begin(), e.topic.end());
  out.push_back(static_cast<std::uint8_t>(e.kind));
  wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.payload.size()));
  out.insert(out.end(), e.payload.begin(), e.payload.end());
  wire::put_le<std::uint32_t>(out, wire::crc32(out));
  return out;
}

inline std::vector<std::uint8_t> encode_envelope(const Envelope& e) { return encode_frame(e, wire::kVersion); }

inline std::vector<std::uint8_t> encode_envelope(const Message& m, Tier tier, std::uint64_t seq,
                                                 std::uint8_t flags = 0) {
  if (m.payload.size() > kMaxPayloadBytes) {
    throw EnvelopeError(EnvelopeErrorCode::PayloadTooLarge, "payload exceeds 16 MiB");
  }
  return encode_envelope(Envelope::from_message(m, tier, seq, flags));
}

enum class DecodeError { BadMagic, BadVersion, CrcMismatch, Truncated, TrailingBytes, BadField };

inline std::string_view decode_error_name(DecodeError e) {
  switch (e) {
    case DecodeError::BadMagic: return "BadMagic";
    case DecodeError::BadVersion: return "BadVersion";
    case DecodeError::CrcMismatch: return "CrcMismatch";
    case DecodeError::Truncated: return "Truncated";
    case DecodeError::TrailingBytes: return "TrailingBytes";
    case DecodeError::BadField: return "BadField";
  }
  return "?";
}

struct DecodedFrame {
  Envelope envelope;
  std::size_t consumed = 0;
};

// Decodes the frame at the start of `bytes`. Check order: length, magic,
// frame extent, crc, then the crc-protected field values. Any corruption of
// a protected byte therefore surfaces as CrcMismatch (or Truncated when a
// length field grows past the buffer).
inline std::variant<DecodedFrame, DecodeError> decode_frame(std::span<const std::uint8_t> bytes) {
  using namespace wire;
  if (bytes.size() < kMagic.size()) return DecodeError::Truncated;
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) return DecodeError::BadMagic;
  if (bytes.size() < kHeaderBeforeTopic) return DecodeError::Truncated;
  const std::size_t topic_len = get_le<std::uint16_t>(bytes, 23);
  const std::size_t kind_at = kHeaderBeforeTopic + topic_len;
  if (bytes.size() < kind_at + 1 + 4) return DecodeError::Truncated;
  const std::size_t payload_len = get_le<std::uint32_t>(bytes, kind_at + 1);
  const std::size_t total = frame_size(topic_len, payload_len);
  if (bytes.size() < total) return DecodeError::Truncated;
  const std::uint32_t stored = get_le<std::uint32_t>(bytes, total - 4);
  if (crc32(bytes.first(total - 4)) != stored) return DecodeError::CrcMismatch;
  if (bytes[4] != kVersion) return DecodeError::BadVersion;
  if (bytes[5] >= kTierCount || !is_valid_kind(bytes[kind_at]) || payload_len > kMaxPayloadBytes) {
    return DecodeError::BadField;
  }

  DecodedFrame out;
  Envelope& e = out.envelope;
  e.tier = static_cast<Tier>(bytes[5]);
  e.flags = bytes[6];
  e.seq = get_le<std::uint64_t>(bytes, 7);
  e.sim_time_us = get_le<std::uint64_t>(bytes, 15);
  e.topic.assign(reinterpret_cast<const char*>(bytes.data() + kHeaderBeforeTopic), topic_len);
  e.kind = static_cast<MessageKind>(bytes[kind_at]);
  const auto payload = bytes.subspan(kind_at + 5, payload_len);
  e.payload.assign(payload.begin(), payload.end());
  out.consumed = total;
  return out;
}

// Decodes exactly one frame; bytes after it are an error.
inline std::variant<Envelope, DecodeError> decode_envelope(std::span<const std::uint8_t> bytes) {
  auto r = decode_frame(bytes);
  if (auto* err = std::get_if<DecodeError>(&r)) return *err;
  auto& f = std::get<DecodedFrame>(r);
  if (f.consumed != bytes.size()) return DecodeError::TrailingBytes;
  return std::move(f.envelope);
}

// Splits a link packet into frames. Stops at the first bad frame and
// reports it; frames before it are still returned.
struct PacketDecode {
  std::vector<Envelope> frames;
  std::optional<DecodeError> error;
};

inline PacketDecode decode_packet(std::span<const std::uint8_t> bytes) {
  PacketDecode out;
  while (!bytes.empty()) {
    auto r = decode_frame(bytes);
    if (auto* err = std::get_if<DecodeError>(&r)) {
      out.error = *err;
      break;
    }
    auto& f = std::get<DecodedFrame>(r);
    bytes = bytes.subspan(f.consumed);
    out.frames.push_back(std::move(f.envelope));
  }
  return out;
}

}  // namespace twinbridge
