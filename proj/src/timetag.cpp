#include <cstring>

#include <fmt/format.h>

#include "qlan/error.hpp"
#include "qlan/timing.hpp"

namespace qlan {

namespace {

constexpr std::uint64_t kWrap = std::uint64_t{1} << 32;
constexpr std::uint64_t kHalfWrap = std::uint64_t{1} << 31;

void put_le(std::vector<std::byte>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::span<const std::byte> in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  return v;
}

// Unwraps u32 indices by monotonicity, continuing from `last`/`wraps`.
void decode_body(std::span<const std::byte> data, std::uint8_t basis, EventStream& out, std::uint64_t& last,
                 std::uint64_t& wraps, bool& have_last) {
  const std::size_t body = data.size() - kTimetagHeaderBytes;
  if (body % 4 != 0) throw ValidationError("timetag body is not a whole number of 32-bit indices");
  for (std::size_t pos = kTimetagHeaderBytes; pos < data.size(); pos += 4) {
    const std::uint64_t raw = get_le(data, pos, 4);
    if (have_last && raw < last) {
      if (last - raw > kHalfWrap) {
        ++wraps;
      } else {
        throw ValidationError(fmt::format("timetag indices decrease ({} -> {}) without a wrap", last, raw));
      }
    }
    last = raw;
    have_last = true;
    out.events.push_back({static_cast<std::int64_t>(wraps * kWrap + raw), basis, 0});
  }
}

}  // namespace

std::vector<std::byte> encode_timetags(const EventStream& stream) {
  stream.validate();
  if (stream.epoch_start < 0) throw ValidationError("epoch_start must be non-negative");
  std::uint8_t basis = stream.empty() ? 0 : stream.events.front().basis;
  for (const auto& e : stream.events) {
    if (e.basis != basis) throw ValidationError("a timetag segment holds a single analyzer setting");
  }
  std::vector<std::byte> out;
  out.reserve(kTimetagHeaderBytes + 4 * stream.size());
  for (char c : {'Q', 'T', 'T', '1'}) out.push_back(static_cast<std::byte>(c));
  put_le(out, stream.node, 2);
  out.push_back(static_cast<std::byte>(basis));
  out.push_back(std::byte{0});
  put_le(out, static_cast<std::uint64_t>(stream.epoch_start), 8);
  for (const auto& e : stream.events) put_le(out, static_cast<std::uint64_t>(e.bin) % kWrap, 4);
  return out;
}

TimetagHeader decode_timetag_header(std::span<const std::byte> data) {
  if (data.size() < kTimetagHeaderBytes) throw ValidationError("timetag data shorter than its header");
  if (std::memcmp(data.data(), "QTT1", 4) != 0) throw ValidationError("timetag magic is not QTT1");
  TimetagHeader h;
  h.node = static_cast<std::uint16_t>(get_le(data, 4, 2));
  h.basis = static_cast<std::uint8_t>(data[6]);
  h.epoch_start = get_le(data, 8, 8);
  return h;
}

EventStream decode_timetags(std::span<const std::byte> data) {
  const TimetagHeader h = decode_timetag_header(data);
  EventStream out{h.node, static_cast<std::int64_t>(h.epoch_start), {}};
  std::uint64_t last = 0, wraps = 0;
  bool have_last = false;
  decode_body(data, h.basis, out, last, wraps, have_last);
  return out;
}

std::vector<std::vector<std::byte>> encode_segments(const EventStream& stream) {
  std::vector<std::vector<std::byte>> out;
  std::size_t start = 0;
  while (start < stream.events.size()) {
    std::size_t end = start;
    while (end < stream.events.size() && stream.events[end].basis == stream.events[start].basis) ++end;
    EventStream seg{stream.node, stream.epoch_start,
                    {stream.events.begin() + static_cast<std::ptrdiff_t>(start),
                     stream.events.begin() + static_cast<std::ptrdiff_t>(end)}};
    out.push_back(encode_timetags(seg));
    start = end;
  }
  if (out.empty()) out.push_back(encode_timetags(EventStream{stream.node, stream.epoch_start, {}}));
  return out;
}

EventStream decode_segments(std::span<const std::vector<std::byte>> segments) {
  if (segments.empty()) throw ValidationError("no timetag segments to decode");
  const TimetagHeader first = decode_timetag_header(segments.front());
  EventStream out{first.node, static_cast<std::int64_t>(first.epoch_start), {}};
  std::uint64_t last = 0, wraps = 0;
  bool have_last = false;
  for (const auto& seg : segments) {
    const TimetagHeader h = decode_timetag_header(seg);
    if (h.node != first.node || h.epoch_start != first.epoch_start) {
      throw ValidationError("timetag segments disagree on node or epoch");
    }
    decode_body(seg, h.basis, out, last, wraps, have_last);
  }
  return out;
}

}  // namespace qlan
