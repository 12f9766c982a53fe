#pragma once

// Compression-aware training. Every S_D batches the targeted convolution
// kernels are replaced in place by their low-rank reconstruction (a
// "distortion"); between distortions training is ordinary SGD. The run always
// ends on a distortion so the last weights factor exactly.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "deeptwist/lowrank.hpp"
#include "deeptwist/nn.hpp"

namespace deeptwist {

enum class CompressionMethod { tucker, svd_full, svd_tiled };

const char* to_string(CompressionMethod method);
CompressionMethod parse_method(const std::string& text);

struct CompressionSpec {
  CompressionMethod method = CompressionMethod::tucker;
  double rc = 0.5;            // tucker
  std::size_t rank = 1;       // svd_full / svd_tiled
  std::size_t tile_h = 64;    // svd_tiled
  std::size_t tile_w = 64;
  std::size_t min_in_channels = 1;  // conv layers with S below this are left alone
  TuckerOptions tucker{};

  /// Throws ArgumentError for rc outside (0, 1] or zero rank / tile sizes.
  void validate() const;
  bool targets(const LayerSpec& layer) const;
};

/// Factors produced for one distorted layer.
struct LayerFactors {
  std::size_t layer_index = 0;
  std::variant<TuckerFactors, TileGridSvd> factors;
};

struct Distortion {
  ModelState model;
  double delta_w = 0.0;         // ‖w − w̃‖²_F / N over targeted kernels
  std::size_t targeted_weights = 0;
  std::vector<LayerFactors> factors;
};

/// Replaces every targeted conv kernel by its low-rank reconstruction.
/// Biases and all other layers are untouched. Errors leave `model` as is.
Distortion distort_weights(const ModelState& model, const CompressionSpec& spec);

/// Rebuilds a kernel from exported factors (tucker or lowered tiled SVD).
Kernel4 reconstruct_kernel(const LayerFactors& factors, const Kernel4& shape_like);

/// Replaces each Tucker-factored conv(d, S→T) with
/// conv1×1(S→Rs) → conv d×d(Rs→Rt) → conv1×1(Rt→T); the original bias moves
/// to the last stage. Layer names gain ".ps", ".core", ".pt" suffixes.
ModelState build_decomposed_model(const ModelState& model, const std::vector<LayerFactors>& factors);

/// S·Rs + d²·Rs·Rt + T·Rt for a Tucker-factored layer.
std::size_t decomposed_parameter_count(const TuckerFactors& factors);

struct DistortionRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss_pre = 0.0;
  double loss_post = 0.0;
  double rel_loss_jump = 0.0;
  double delta_w = 0.0;
  double test_acc = 0.0;
};

struct TrainData {
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;   // accuracy reporting; falls back to train
  const Dataset* probe = nullptr;  // loss before/after distortion; falls back to a train prefix
};

struct DeepTwistConfig {
  std::size_t sd = 200;
  CompressionSpec compression{};
  LrSchedule schedule{};
  std::size_t total_steps = 1000;
  std::size_t batch_size = 32;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::uint64_t shuffle_seed = 1;
  std::size_t probe_size = 512;

  /// Rounds total_steps up to a multiple of sd; throws ArgumentError when
  /// either is zero or sd exceeds total_steps.
  void normalize();
  std::size_t distortion_count() const { return total_steps / sd; }
};

struct TrainResult {
  ModelState model;                  // final weights, original structure
  std::vector<LayerFactors> factors; // from the last distortion
  std::optional<ModelState> decomposed;  // tucker only
  std::vector<DistortionRecord> log;
};

/// Called after every appended record; lets callers stream the log.
using RecordSink = std::function<void(const DistortionRecord&)>;

/// Plain SGD for `steps` batches with no compression awareness.
ModelState train_plain(ModelState model, const TrainData& data, const DeepTwistConfig& cfg,
                       std::size_t steps);

TrainResult deeptwist_train(ModelState model, const TrainData& data, DeepTwistConfig cfg,
                            const RecordSink& sink = {});

/// One-shot Tucker decomposition, then SGD on the decomposed structure for
/// cfg.total_steps batches. Records are logged every cfg.sd steps (no
/// distortion happens, so loss_pre == loss_post and delta_w == 0).
/// Throws ArgumentError for SVD methods, which have no trainable
/// decomposed structure.
TrainResult baseline_finetune(const ModelState& model, const TrainData& data, DeepTwistConfig cfg,
                              const RecordSink& sink = {});

}  // namespace deeptwist
