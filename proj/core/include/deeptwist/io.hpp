#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "deeptwist/lowrank.hpp"
#include "deeptwist/nn.hpp"
#include "deeptwist/trainer.hpp"

namespace deeptwist {

namespace fs = std::filesystem;

// ------------------------------------------------------------- datasets

/// IDX image file (magic 0x00000803, big-endian n/rows/cols, u8 pixels)
/// plus matching label file (magic 0x00000801). Pixels scale to [0, 1].
/// Malformed input throws FormatError carrying the byte offset.
Dataset load_idx(const fs::path& images, const fs::path& labels);

/// CIFAR-10 binary batch: records of 1 label byte + 3072 channel-major
/// pixels. Produces [3, 32, 32] images in [0, 1] and labels 0..9.
Dataset load_cifar10_binary(const fs::path& path);

struct BlobOptions {
  std::size_t channels = 1;
  double noise = 1.0;       // per-pixel std around each centroid
  double separation = 1.0;  // per-pixel std of the centroids themselves
};

/// Gaussian class-centroid images, deterministic in `seed`. Samples are
/// interleaved by class (0, 1, …, C−1, 0, 1, …).
Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t image_size,
                    std::uint64_t seed, const BlobOptions& options = {});

// ----------------------------------------------------------- checkpoint

inline constexpr char kCheckpointMagic[4] = {'D', 'T', 'W', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelState& model);
ModelState decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ModelState& model, const fs::path& path);
ModelState load_checkpoint(const fs::path& path);

// -------------------------------------------------------------- metrics

inline constexpr const char* kMetricsHeader = "step,epoch,lr,loss_pre,loss_post,rel_loss_jump,delta_w,test_acc";

std::string format_metrics(const std::vector<DistortionRecord>& log);
void write_metrics(const std::vector<DistortionRecord>& log, const fs::path& path);
std::vector<DistortionRecord> read_metrics(const fs::path& path);

/// `bin_lo,bin_hi,count` rows.
void write_histogram(const std::vector<HistogramBin>& bins, const fs::path& path);

// ------------------------------------------------------------- plumbing

/// Writes to a sibling temporary and renames over `path`.
void write_file_atomic(const fs::path& path, const std::string& contents);
std::vector<std::uint8_t> read_file_bytes(const fs::path& path);

/// SHA-1 of "blob <size>\0<contents>", hex encoded (what `git hash-object` prints).
std::string git_blob_hash(const std::string& contents);

/// Flat `key = value` text; '#' starts a comment. Throws ArgumentError on a
/// line without '=' or a duplicated key.
std::map<std::string, std::string> parse_key_values(const std::string& text);

}  // namespace deeptwist
