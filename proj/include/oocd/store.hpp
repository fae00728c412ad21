// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace oocd {

// Which of the four per-sample artifacts a vector was computed from.
enum class Artifact : std::uint8_t {
  kImage = 0,             // original image I
  kCaption = 1,           // original caption C
  kGeneratedImage = 2,    // synthetic image I' (from C)
  kGeneratedCaption = 3,  // synthetic caption C' (from I)
};

std::string to_string(Artifact a);

struct EmbeddingRecord {
  std::string sample_id;
  Artifact artifact = Artifact::kImage;
  std::string encoder_id;
  std::vector<float> vector;
};

// Content-addressed vector store keyed by (sample_id, artifact, encoder_id).
//
// On disk: one partition file per encoder,
//
//   header:  "EMB1" [u16 encoder_id length][encoder_id][u32 dim]
//   records: [u16 id length][id bytes][u8 artifact][dim x f32 little-endian]
//
// plus manifest.json listing partitions and record counts. Appends never
// rewrite earlier bytes; a trailing partial record (interrupted write) is
// ignored on open and cut off before the next append.
//
// Thread safety: concurrent readers are fine; writes take a per-partition
// lock and become visible to readers only once the full record is on disk.
// The first write of a key wins; later puts of the same key are discarded.
class EmbeddingStore {
 public:
  // Opens (creating if needed) a store directory.
  static EmbeddingStore open(const std::filesystem::path& dir);

  EmbeddingStore(EmbeddingStore&&) noexcept;
  EmbeddingStore& operator=(EmbeddingStore&&) noexcept;
  ~EmbeddingStore();

  // Registers the partition for an encoder. Throws DimensionMismatch if the
  // partition exists with a different dim.
  void ensure_partition(const std::string& encoder_id, std::uint32_t dim);
  std::optional<std::uint32_t> partition_dim(const std::string& encoder_id) const;
  std::vector<std::string> partitions() const;

  // Returns false when the key was already present (record discarded).
  // Throws DimensionMismatch for an unknown partition or wrong length and
  // EncoderFailure for non-finite components.
  bool put(const EmbeddingRecord& record);
  // Raw form used for exports where the artifact byte carries other data.
  bool put_raw(const std::string& encoder_id, const std::string& id,
               std::uint8_t tag, std::span<const float> vector);

  bool contains(const std::string& sample_id, Artifact artifact,
                const std::string& encoder_id) const;
  std::optional<std::vector<float>> get(const std::string& sample_id,
                                        Artifact artifact,
                                        const std::string& encoder_id) const;
  std::optional<std::vector<float>> get_raw(const std::string& encoder_id,
                                            const std::string& id,
                                            std::uint8_t tag) const;

  std::size_t count(const std::string& encoder_id) const;
  std::size_t size() const;

  // Visits records of one partition in file order.
  void for_each(const std::string& encoder_id,
                const std::function<void(const std::string& id,
                                         std::uint8_t tag,
                                         std::span<const float> vector)>& fn)
      const;

  // Rewrites manifest.json. Also called from the destructor.
  void flush() const;

  const std::filesystem::path& dir() const;

 private:
  struct Impl;
  explicit EmbeddingStore(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

// Single-partition file in the same layout (header + records).
struct PartitionRecord {
  std::string id;
  std::uint8_t tag = 0;
  std::vector<float> vector;
};
struct PartitionFile {
  std::string encoder_id;
  std::uint32_t dim = 0;
  std::vector<PartitionRecord> records;
};
void write_partition_file(const std::filesystem::path& file,
                          const PartitionFile& partition);
// Throws StoreCorrupt on a bad header or a truncated record.
PartitionFile read_partition_file(const std::filesystem::path& file);

}  // namespace oocd
