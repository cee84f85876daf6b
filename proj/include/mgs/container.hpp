#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mgs/common.hpp"

namespace mgs {

// On-disk framing: magic, version, then the six sections in fixed order,
// each [u8 id][u64 length][bytes]. Section interiors are defined by the
// codec; the metadata section is LZ-compressed and holds the frequency
// tables, so a decoder slices all sections first and reads metadata before
// the entropy-coded ones.

inline constexpr char kContainerMagic[4] = {'M', 'G', 'S', '2'};
inline constexpr uint16_t kContainerVersion = 1;

enum class Section : uint8_t {
  Octree = 1,
  TransformFlags = 2,
  DcCoefficients = 3,
  GroupRecords = 4,
  ShCodebook = 5,
  Metadata = 6,
};

inline constexpr size_t kSectionCount = 6;

using SectionBytes = std::array<std::vector<uint8_t>, kSectionCount>;

inline std::vector<uint8_t> pack_container(const SectionBytes& sections) {
  ByteWriter w;
  w.bytes(reinterpret_cast<const uint8_t*>(kContainerMagic), 4);
  w.u16(kContainerVersion);
  w.u8(uint8_t(kSectionCount));
  for (size_t i = 0; i < kSectionCount; ++i) {
    w.u8(uint8_t(i + 1));
    w.u64(sections[i].size());
    w.bytes(sections[i]);
  }
  return w.take();
}

inline SectionBytes unpack_container(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 7) throw ContainerError("container too short");
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kContainerMagic, 4) != 0)
    throw ContainerError("bad container magic");
  uint16_t version = r.u16();
  if (version != kContainerVersion)
    throw ContainerError("unsupported container version " + std::to_string(version));
  uint8_t count = r.u8();
  if (count != kSectionCount)
    throw ContainerError("unexpected section count " + std::to_string(count));
  SectionBytes out;
  for (size_t i = 0; i < kSectionCount; ++i) {
    uint8_t id = r.u8();
    if (id != i + 1)
      throw ContainerError("section " + std::to_string(id) + " out of order (expected " +
                           std::to_string(i + 1) + ")");
    uint64_t len = r.u64();
    if (len > r.remaining()) throw ContainerError("section " + std::to_string(id) + " truncated");
    out[i] = r.bytes(size_t(len));
  }
  if (!r.done()) throw ContainerError("trailing bytes after the last section");
  return out;
}

}  // namespace mgs
