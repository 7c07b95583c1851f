#include "hfgcn/container.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace hfgcn {

namespace {

constexpr char kMagic[4] = {'H', 'F', 'G', '1'};

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void read_exact(std::istream& is, unsigned char* dst, std::size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw ContainerError(std::string("container: truncated ") + what);
}

std::uint32_t read_u32(std::istream& is, std::vector<unsigned char>& payload, const char* what) {
  unsigned char b[4];
  read_exact(is, b, 4, what);
  payload.insert(payload.end(), b, b + 4);
  return get_u32(b);
}

}  // namespace

std::uint32_t crc32_bytes(std::span<const unsigned char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded chunks
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void write_container(std::ostream& os, std::span<const SkeletonSequence> samples, const ContainerInfo& info) {
  std::vector<unsigned char> header(kMagic, kMagic + 4);
  put_u32(header, info.version);
  put_u32(header, static_cast<std::uint32_t>(samples.size()));
  put_u32(header, info.joints);
  put_u32(header, info.max_persons);
  os.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));

  std::vector<unsigned char> payload;
  for (const SkeletonSequence& s : samples) {
    s.validate();
    if (s.joints != info.joints || s.person_slots != info.max_persons) {
      throw ContainerError("container: sample '" + s.sample_id + "' has " + std::to_string(s.joints) + " joints and " +
                           std::to_string(s.person_slots) + " person slots; container expects " +
                           std::to_string(info.joints) + " and " + std::to_string(info.max_persons));
    }
    payload.clear();
    put_u32(payload, static_cast<std::uint32_t>(s.sample_id.size()));
    payload.insert(payload.end(), s.sample_id.begin(), s.sample_id.end());
    put_u32(payload, s.label);
    put_u32(payload, static_cast<std::uint32_t>(s.frames));
    for (float v : s.coords) put_u32(payload, std::bit_cast<std::uint32_t>(v));
    const std::uint32_t crc = crc32_bytes(payload);
    put_u32(payload, crc);
    os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  }
  if (!os) throw ContainerError("container: write failed");
}

std::vector<SkeletonSequence> read_container(std::istream& is, ContainerInfo* info_out) {
  unsigned char head[20];
  read_exact(is, head, sizeof head, "header");
  if (std::memcmp(head, kMagic, 4) != 0) throw ContainerError("container: bad magic");
  ContainerInfo info;
  info.version = get_u32(head + 4);
  if (info.version != kContainerVersion) {
    throw ContainerError("container: version " + std::to_string(info.version) + " unsupported (expected " +
                         std::to_string(kContainerVersion) + ")");
  }
  const std::uint32_t count = get_u32(head + 8);
  info.joints = get_u32(head + 12);
  info.max_persons = get_u32(head + 16);
  if (info_out) *info_out = info;

  std::vector<SkeletonSequence> samples;
  samples.reserve(count);
  std::vector<unsigned char> payload;
  for (std::uint32_t i = 0; i < count; ++i) {
    payload.clear();
    const std::uint32_t id_len = read_u32(is, payload, "sample id length");
    std::string id(id_len, '\0');
    read_exact(is, reinterpret_cast<unsigned char*>(id.data()), id_len, "sample id");
    payload.insert(payload.end(), id.begin(), id.end());
    const std::uint32_t label = read_u32(is, payload, "label");
    const std::uint32_t frames = read_u32(is, payload, "frame count");
    SkeletonSequence s(std::move(id), label, info.max_persons, frames, info.joints);
    const std::size_t values = s.coords.size();
    const std::size_t start = payload.size();
    payload.resize(start + values * 4);
    read_exact(is, payload.data() + start, values * 4, "coordinates");
    for (std::size_t k = 0; k < values; ++k) s.coords[k] = std::bit_cast<float>(get_u32(payload.data() + start + 4 * k));
    unsigned char crc_bytes[4];
    read_exact(is, crc_bytes, 4, "checksum");
    if (get_u32(crc_bytes) != crc32_bytes(payload)) {
      throw ContainerError("container: checksum failure in sample " + std::to_string(i) + " ('" + s.sample_id + "')");
    }
    // Slot 0 always holds a person; later slots are present when non-zero.
    const std::size_t slot = frames * info.joints * 3;
    for (std::size_t m = 0; m < s.person_slots; ++m) {
      bool any = m == 0;
      for (std::size_t k = 0; k < slot && !any; ++k) any = s.coords[m * slot + k] != 0.0f;
      s.present[m] = any;
    }
    s.validate();
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_container(const std::filesystem::path& path, std::span<const SkeletonSequence> samples,
                     const ContainerInfo& info) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ContainerError("container: cannot open " + tmp.string() + " for writing");
    write_container(os, samples, info);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<SkeletonSequence> read_container(const std::filesystem::path& path, ContainerInfo* info) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContainerError("container: cannot open " + path.string());
  return read_container(is, info);
}

}  // namespace hfgcn
