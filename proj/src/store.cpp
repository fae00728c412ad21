// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include "json.hpp"
#include "oocd/error.hpp"
#include "oocd/hash.hpp"

namespace oocd {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Artifact a) {
  switch (a) {
    case Artifact::kImage: return "I";
    case Artifact::kCaption: return "C";
    case Artifact::kGeneratedImage: return "I'";
    case Artifact::kGeneratedCaption: return "C'";
  }
  return "?";
}

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
         (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

void put_floats(std::string& buf, std::span<const float> values) {
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(buf, bits);
  }
}

std::string file_name_for(const std::string& encoder_id) {
  std::string safe;
  for (char c : encoder_id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    safe.push_back(ok ? c : '_');
  }
  if (safe != encoder_id || safe.empty() || safe[0] == '.') {
    safe += "-" + to_hex64(fnv1a64(encoder_id)).substr(0, 8);
  }
  return safe + ".emb";
}

std::string index_key(const std::string& id, std::uint8_t tag) {
  std::string k = id;
  k.push_back('\0');
  k.push_back(static_cast<char>(tag));
  return k;
}

void write_all(int fd, const std::string& buf, off_t offset,
               const fs::path& file) {
  std::size_t done = 0;
  while (done < buf.size()) {
    ssize_t n = pwrite(fd, buf.data() + done, buf.size() - done,
                       offset + static_cast<off_t>(done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("write to '" + file.string() + "' failed: " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

}  // namespace

struct Partition {
  std::string encoder_id;
  std::uint32_t dim = 0;
  fs::path file;
  int fd = -1;
  off_t end = 0;
  std::mutex write_mutex;
  // index key -> byte offset of the vector payload
  std::unordered_map<std::string, off_t> index;
  std::vector<std::pair<std::string, std::uint8_t>> order;

  ~Partition() {
    if (fd >= 0) close(fd);
  }
};

struct EmbeddingStore::Impl {
  fs::path dir;
  mutable std::shared_mutex mutex;
  std::map<std::string, std::unique_ptr<Partition>> parts;

  Partition* find(const std::string& encoder_id) const {
    auto it = parts.find(encoder_id);
    return it == parts.end() ? nullptr : it->second.get();
  }

  void load_partition(const fs::path& file);
  bool append(Partition& p, const std::string& id, std::uint8_t tag,
              std::span<const float> vector);
  std::vector<float> read_vector(const Partition& p, off_t offset) const;
};

void EmbeddingStore::Impl::load_partition(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open partition '" + file.string() + "'");
  unsigned char head[6];
  in.read(reinterpret_cast<char*>(head), 6);
  if (!in || std::memcmp(head, kMagic, 4) != 0) {
    throw StoreCorrupt("'" + file.string() + "' is not an EMB1 partition");
  }
  std::string encoder_id(get_u16(head + 4), '\0');
  in.read(encoder_id.data(), static_cast<std::streamsize>(encoder_id.size()));
  unsigned char dim_bytes[4];
  in.read(reinterpret_cast<char*>(dim_bytes), 4);
  if (!in) throw StoreCorrupt("truncated header in '" + file.string() + "'");

  auto p = std::make_unique<Partition>();
  p->encoder_id = encoder_id;
  p->dim = get_u32(dim_bytes);
  p->file = file;
  in.seekg(0, std::ios::end);
  const off_t file_size = static_cast<off_t>(in.tellg());
  off_t pos = static_cast<off_t>(10 + encoder_id.size());
  in.seekg(pos);
  const off_t payload = static_cast<off_t>(p->dim) * 4;

  while (pos + 3 <= file_size) {
    unsigned char len_bytes[2];
    in.read(reinterpret_cast<char*>(len_bytes), 2);
    std::string id(get_u16(len_bytes), '\0');
    in.read(id.data(), static_cast<std::streamsize>(id.size()));
    char tag = 0;
    in.read(&tag, 1);
    if (!in) break;
    const off_t vec_off = pos + 3 + static_cast<off_t>(id.size());
    if (vec_off + payload > file_size) break;
    pos = vec_off + payload;
    in.seekg(pos);
    auto key = index_key(id, static_cast<std::uint8_t>(tag));
    if (p->index.emplace(key, vec_off).second) {
      p->order.emplace_back(id, static_cast<std::uint8_t>(tag));
    }
  }
  p->end = pos;

  p->fd = ::open(file.c_str(), O_RDWR | O_CLOEXEC);
  if (p->fd < 0) {
    throw IoError("cannot open '" + file.string() + "': " + std::strerror(errno));
  }
  // Drop a torn tail left by an interrupted append.
  if (ftruncate(p->fd, p->end) != 0) {
    throw IoError("cannot truncate '" + file.string() + "'");
  }
  if (parts.count(encoder_id)) {
    throw StoreCorrupt("two partition files for encoder '" + encoder_id + "'");
  }
  parts.emplace(encoder_id, std::move(p));
}

bool EmbeddingStore::Impl::append(Partition& p, const std::string& id,
                                  std::uint8_t tag,
                                  std::span<const float> vector) {
  if (vector.size() != p.dim) {
    throw DimensionMismatch("encoder '" + p.encoder_id + "' expects dim " +
                            std::to_string(p.dim) + ", got " +
                            std::to_string(vector.size()));
  }
  for (float f : vector) {
    if (!std::isfinite(f)) {
      throw EncoderFailure("non-finite component in vector for '" + id + "'");
    }
  }
  if (id.size() > 0xffff) throw IoError("sample id too long: " + id.substr(0, 64));

  std::lock_guard write_lock(p.write_mutex);
  const auto key = index_key(id, tag);
  {
    std::shared_lock read_lock(mutex);
    if (p.index.count(key)) return false;
  }
  std::string buf;
  buf.reserve(3 + id.size() + vector.size() * 4);
  put_u16(buf, static_cast<std::uint16_t>(id.size()));
  buf += id;
  buf.push_back(static_cast<char>(tag));
  put_floats(buf, vector);
  write_all(p.fd, buf, p.end, p.file);

  std::unique_lock publish(mutex);
  p.index.emplace(key, p.end + 3 + static_cast<off_t>(id.size()));
  p.order.emplace_back(id, tag);
  p.end += static_cast<off_t>(buf.size());
  return true;
}

std::vector<float> EmbeddingStore::Impl::read_vector(const Partition& p,
                                                     off_t offset) const {
  std::vector<unsigned char> raw(std::size_t{p.dim} * 4);
  std::size_t done = 0;
  while (done < raw.size()) {
    ssize_t n = pread(p.fd, raw.data() + done, raw.size() - done,
                      offset + static_cast<off_t>(done));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw StoreCorrupt("short read from '" + p.file.string() + "'");
    done += static_cast<std::size_t>(n);
  }
  std::vector<float> out(p.dim);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t bits = get_u32(raw.data() + 4 * i);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

EmbeddingStore::EmbeddingStore(std::unique_ptr<Impl> impl)
    : impl_(std::move(impl)) {}
EmbeddingStore::EmbeddingStore(EmbeddingStore&&) noexcept = default;
EmbeddingStore& EmbeddingStore::operator=(EmbeddingStore&&) noexcept = default;

EmbeddingStore::~EmbeddingStore() {
  if (!impl_) return;
  try {
    flush();
  } catch (...) {
  }
}

EmbeddingStore EmbeddingStore::open(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create store directory '" + dir.string() + "'");
  auto impl = std::make_unique<Impl>();
  impl->dir = dir;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".emb") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) impl->load_partition(f);
  return EmbeddingStore(std::move(impl));
}

void EmbeddingStore::ensure_partition(const std::string& encoder_id,
                                      std::uint32_t dim) {
  if (dim == 0) throw DimensionMismatch("partition dim must be positive");
  std::unique_lock lock(impl_->mutex);
  if (auto* p = impl_->find(encoder_id)) {
    if (p->dim != dim) {
      throw DimensionMismatch("partition '" + encoder_id + "' has dim " +
                              std::to_string(p->dim) + ", requested " +
                              std::to_string(dim));
    }
    return;
  }
  auto p = std::make_unique<Partition>();
  p->encoder_id = encoder_id;
  p->dim = dim;
  p->file = impl_->dir / file_name_for(encoder_id);
  p->fd = ::open(p->file.c_str(), O_RDWR | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (p->fd < 0) {
    throw IoError("cannot create '" + p->file.string() + "': " + std::strerror(errno));
  }
  std::string header(kMagic, 4);
  put_u16(header, static_cast<std::uint16_t>(encoder_id.size()));
  header += encoder_id;
  put_u32(header, dim);
  write_all(p->fd, header, 0, p->file);
  p->end = static_cast<off_t>(header.size());
  impl_->parts.emplace(encoder_id, std::move(p));
}

std::optional<std::uint32_t> EmbeddingStore::partition_dim(
    const std::string& encoder_id) const {
  std::shared_lock lock(impl_->mutex);
  if (auto* p = impl_->find(encoder_id)) return p->dim;
  return std::nullopt;
}

std::vector<std::string> EmbeddingStore::partitions() const {
  std::shared_lock lock(impl_->mutex);
  std::vector<std::string> out;
  for (const auto& [id, p] : impl_->parts) out.push_back(id);
  return out;
}

bool EmbeddingStore::put(const EmbeddingRecord& record) {
  return put_raw(record.encoder_id, record.sample_id,
                 static_cast<std::uint8_t>(record.artifact), record.vector);
}

bool EmbeddingStore::put_raw(const std::string& encoder_id,
                             const std::string& id, std::uint8_t tag,
                             std::span<const float> vector) {
  Partition* p;
  {
    std::shared_lock lock(impl_->mutex);
    p = impl_->find(encoder_id);
  }
  if (!p) {
    throw DimensionMismatch("no partition registered for encoder '" +
                            encoder_id + "'");
  }
  return impl_->append(*p, id, tag, vector);
}

bool EmbeddingStore::contains(const std::string& sample_id, Artifact artifact,
                              const std::string& encoder_id) const {
  std::shared_lock lock(impl_->mutex);
  const auto* p = impl_->find(encoder_id);
  return p && p->index.count(
                  index_key(sample_id, static_cast<std::uint8_t>(artifact)));
}

std::optional<std::vector<float>> EmbeddingStore::get(
    const std::string& sample_id, Artifact artifact,
    const std::string& encoder_id) const {
  return get_raw(encoder_id, sample_id, static_cast<std::uint8_t>(artifact));
}

std::optional<std::vector<float>> EmbeddingStore::get_raw(
    const std::string& encoder_id, const std::string& id,
    std::uint8_t tag) const {
  const Partition* p;
  off_t offset;
  {
    std::shared_lock lock(impl_->mutex);
    p = impl_->find(encoder_id);
    if (!p) return std::nullopt;
    auto it = p->index.find(index_key(id, tag));
    if (it == p->index.end()) return std::nullopt;
    offset = it->second;
  }
  return impl_->read_vector(*p, offset);
}

std::size_t EmbeddingStore::count(const std::string& encoder_id) const {
  std::shared_lock lock(impl_->mutex);
  const auto* p = impl_->find(encoder_id);
  return p ? p->index.size() : 0;
}

std::size_t EmbeddingStore::size() const {
  std::shared_lock lock(impl_->mutex);
  std::size_t n = 0;
  for (const auto& [id, p] : impl_->parts) n += p->index.size();
  return n;
}

void EmbeddingStore::for_each(
    const std::string& encoder_id,
    const std::function<void(const std::string&, std::uint8_t,
                             std::span<const float>)>& fn) const {
  const Partition* p;
  std::vector<std::pair<std::string, std::uint8_t>> order;
  std::vector<off_t> offsets;
  {
    std::shared_lock lock(impl_->mutex);
    p = impl_->find(encoder_id);
    if (!p) return;
    order = p->order;
    for (const auto& [id, tag] : order) offsets.push_back(p->index.at(index_key(id, tag)));
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto v = impl_->read_vector(*p, offsets[i]);
    fn(order[i].first, order[i].second, v);
  }
}

void EmbeddingStore::flush() const {
  json parts = json::array();
  {
    std::shared_lock lock(impl_->mutex);
    for (const auto& [id, p] : impl_->parts) {
      parts.push_back({{"encoder_id", id},
                       {"file", p->file.filename().string()},
                       {"dim", p->dim},
                       {"count", p->index.size()}});
    }
  }
  json manifest = {{"format", "EMB1"}, {"partitions", parts}};
  const fs::path tmp = impl_->dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write store manifest in '" + impl_->dir.string() + "'");
    out << manifest.dump(2) << '\n';
  }
  fs::rename(tmp, impl_->dir / "manifest.json");
}

const fs::path& EmbeddingStore::dir() const { return impl_->dir; }

void write_partition_file(const fs::path& file, const PartitionFile& partition) {
  std::string buf(kMagic, 4);
  put_u16(buf, static_cast<std::uint16_t>(partition.encoder_id.size()));
  buf += partition.encoder_id;
  put_u32(buf, partition.dim);
  for (const auto& r : partition.records) {
    if (r.vector.size() != partition.dim) {
      throw DimensionMismatch("record '" + r.id + "' has length " +
                              std::to_string(r.vector.size()) + ", expected " +
                              std::to_string(partition.dim));
    }
    put_u16(buf, static_cast<std::uint16_t>(r.id.size()));
    buf += r.id;
    buf.push_back(static_cast<char>(r.tag));
    put_floats(buf, r.vector);
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("cannot write '" + file.string() + "'");
}

PartitionFile read_partition_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open '" + file.string() + "'");
  const std::string buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const std::size_t n = buf.size();
  if (n < 10 || std::memcmp(p, kMagic, 4) != 0) {
    throw StoreCorrupt("'" + file.string() + "' is not an EMB1 partition");
  }
  PartitionFile out;
  std::size_t pos = 4;
  const std::size_t enc_len = get_u16(p + pos);
  pos += 2;
  if (pos + enc_len + 4 > n) throw StoreCorrupt("truncated header in '" + file.string() + "'");
  out.encoder_id.assign(buf, pos, enc_len);
  pos += enc_len;
  out.dim = get_u32(p + pos);
  pos += 4;
  const std::size_t payload = std::size_t{out.dim} * 4;
  while (pos < n) {
    if (pos + 2 > n) throw StoreCorrupt("truncated record in '" + file.string() + "'");
    const std::size_t id_len = get_u16(p + pos);
    pos += 2;
    if (pos + id_len + 1 + payload > n) {
      throw StoreCorrupt("truncated record in '" + file.string() + "'");
    }
    PartitionRecord r;
    r.id.assign(buf, pos, id_len);
    pos += id_len;
    r.tag = p[pos++];
    r.vector.resize(out.dim);
    for (std::size_t i = 0; i < out.dim; ++i) {
      const std::uint32_t bits = get_u32(p + pos + 4 * i);
      std::memcpy(&r.vector[i], &bits, 4);
    }
    pos += payload;
    out.records.push_back(std::move(r));
  }
  return out;
}

}  // namespace oocd
