#include "mstn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

namespace mstn {
namespace {

constexpr char kMagic[4] = {'M', 'S', 'T', 'N'};

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(std::string bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  size_t remaining() const { return bytes_.size() - pos_; }

  const char* take(size_t n, const char* what) {
    if (remaining() < n) {
      throw IoError("corrupt checkpoint " + path_ + ": truncated while reading " +
                    what + " (need " + std::to_string(n) + " bytes, have " +
                    std::to_string(remaining()) + ")");
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  uint16_t u16(const char* what) {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(2, what));
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }

  uint32_t u32(const char* what) {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4, what));
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) |
           (static_cast<uint32_t>(p[3]) << 24);
  }

  uint64_t u64(const char* what) {
    uint64_t lo = u32(what);
    uint64_t hi = u32(what);
    return lo | (hi << 32);
  }

  const std::string& path() const { return path_; }

 private:
  std::string bytes_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void save_checkpoint_file(const std::string& path, const CheckpointData& data) {
  std::string out;
  out.append(kMagic, 4);
  {
    std::string tmp;
    put_u32(tmp, kCheckpointVersion);
    put_u64(tmp, data.meta_json.size());
    out += tmp;
  }
  out += data.meta_json;
  {
    std::string tmp;
    if (data.tensors.size() > std::numeric_limits<uint32_t>::max()) {
      throw UsageError("save_checkpoint_file: too many tensors");
    }
    put_u32(tmp, static_cast<uint32_t>(data.tensors.size()));
    out += tmp;
  }
  for (const auto& t : data.tensors) {
    if (t.name.size() > std::numeric_limits<uint16_t>::max()) {
      throw UsageError("save_checkpoint_file: tensor name too long: " + t.name);
    }
    if (static_cast<long long>(t.data.size()) != t.shape.numel()) {
      throw UsageError("save_checkpoint_file: data/shape mismatch for " +
                       t.name);
    }
    std::string tmp;
    put_u16(tmp, static_cast<uint16_t>(t.name.size()));
    tmp += t.name;
    put_u32(tmp, static_cast<uint32_t>(t.shape.n));
    put_u32(tmp, static_cast<uint32_t>(t.shape.c));
    put_u32(tmp, static_cast<uint32_t>(t.shape.h));
    put_u32(tmp, static_cast<uint32_t>(t.shape.w));
    tmp.reserve(tmp.size() + t.data.size() * 4);
    for (float v : t.data) put_f32(tmp, v);
    out += tmp;
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to checkpoint: " + path);
}

CheckpointData load_checkpoint_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path);

  const char* magic = r.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("corrupt checkpoint " + path + ": bad magic (not an MSTN file)");
  }
  const uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint " + path + ": unsupported version " +
                  std::to_string(version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  }
  const uint64_t meta_len = r.u64("meta length");
  CheckpointData data;
  data.meta_json.assign(r.take(meta_len, "meta JSON"), meta_len);

  const uint32_t count = r.u32("tensor count");
  data.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const uint16_t name_len = r.u16("tensor name length");
    t.name.assign(r.take(name_len, "tensor name"), name_len);
    uint32_t dims[4];
    for (auto& d : dims) d = r.u32("tensor shape");
    for (uint32_t d : dims) {
      if (d == 0 || d > (1u << 30)) {
        throw IoError("corrupt checkpoint " + path +
                      ": implausible dimension " + std::to_string(d) +
                      " for tensor '" + t.name + "'");
      }
    }
    t.shape = Shape{static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                    static_cast<int>(dims[2]), static_cast<int>(dims[3])};
    const uint64_t numel = static_cast<uint64_t>(t.shape.numel());
    if (r.remaining() / 4 < numel) {
      throw IoError("corrupt checkpoint " + path +
                    ": truncated tensor data for '" + t.name + "'");
    }
    t.data.resize(numel);
    const char* src = r.take(numel * 4, "tensor data");
    std::memcpy(t.data.data(), src, numel * 4);
    data.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw IoError("corrupt checkpoint " + path + ": " +
                  std::to_string(r.remaining()) + " trailing bytes");
  }
  return data;
}

}  // namespace mstn
