#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "c2f/pframe.hpp"

namespace c2f {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace c2f

namespace c2f::train {

enum class Distortion { MSE, MSSSIM };

/// Rate terms are bits per original pixel. `distortion` is what the loss
/// weights: [0, 1]-scale MSE, or 1 - MS-SSIM.
struct RDLossTerms {
  torch::Tensor bpp_coarse;
  torch::Tensor bpp_fine;
  torch::Tensor bpp_residual;
  torch::Tensor distortion;
  double lambda = 0.0;

  torch::Tensor bpp() const { return bpp_coarse + bpp_fine + bpp_residual; }
};

/// bpp_coarse + bpp_fine + bpp_residual + lambda * distortion.
torch::Tensor rd_loss(const RDLossTerms& terms);

/// 255-scale MSE (what PSNR is computed from).
torch::Tensor distortion_mse(const torch::Tensor& x, const torch::Tensor& x_hat);
/// 1 - MS-SSIM, averaged over the batch.
torch::Tensor distortion_msssim(const torch::Tensor& x, const torch::Tensor& x_hat);

struct RolloutOptions {
  double lambda = 1024;
  Distortion metric = Distortion::MSE;
  /// Per-P-frame distortion weights; empty means uniform.
  std::vector<double> frame_weights;
  modes::GumbelConfig gumbel;
};

struct RolloutResult {
  std::vector<RDLossTerms> terms;     // one per P-frame
  std::vector<torch::Tensor> recon;   // (N, 3, H, W) per frame, frame 0 included
  torch::Tensor loss;                 // mean over P-frames of rd_loss
  std::vector<PFrameSegments> coded;  // Infer mode only
};

/// Codes frames 1..n-1 of `clip` (N, T, 3, H, W) sequentially, each against
/// the previous reconstruction. Frame 0 stands in for the intra frame and is
/// taken at 8-bit precision. Train mode keeps the whole unroll differentiable;
/// Infer mode runs the real encoder (batch size 1).
RolloutResult rollout(PFrameModel& model, const torch::Tensor& clip, int64_t n, CodingMode mode,
                      NoiseSource& noise, const RolloutOptions& options);

struct StageConfig {
  int stage = 1;
  int64_t frames = 2;
  int64_t steps = 20000;
  int64_t batch = 4;
  int64_t crop = 64;
  double lr = 1e-4;
  double lr_decay = 0.2;
  std::vector<double> decay_at = {0.75, 0.9};
  double lambda = 1024;
  Distortion metric = Distortion::MSE;
  uint64_t seed = 1;
  int64_t log_every = 50;
  uint8_t model_id = 1;

  /// Desk-scale defaults for stages 1, 2, 3.
  static StageConfig defaults(int stage);
  bool mode_prediction() const { return stage == 3; }
  void validate() const;
};

void to_json(nlohmann::json& j, const StageConfig& c);
void from_json(const nlohmann::json& j, StageConfig& c);
StageConfig load_stage_config(const std::filesystem::path& path);

double learning_rate(const StageConfig& cfg, int64_t step);

/// (N, T, 3, H, W) training clips for a given step.
using ClipSampler = std::function<torch::Tensor(int64_t step)>;

/// Random synthetic clips (translation plus moving objects).
ClipSampler synthetic_sampler(const StageConfig& cfg);

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct CheckpointMeta {
  ModelConfig config;
  int stage = 0;
  int64_t step = 0;
  double lambda = 0;
  Distortion metric = Distortion::MSE;
  uint8_t model_id = 0;
  nlohmann::json history = nlohmann::json::array();
};

/// Container: "C2FK", u32 version, u32 header length, JSON header (meta and
/// the parameter table), then raw float32 parameter data in table order.
void save_checkpoint(const std::filesystem::path& path, PFrameModel& model,
                     const CheckpointMeta& meta);

struct LoadedModel {
  PFrameModel model{nullptr};
  CheckpointMeta meta;
};
LoadedModel load_checkpoint(const std::filesystem::path& path);

struct StageResult {
  CheckpointMeta meta;
  std::vector<double> losses;  // per step
};

/// Adam with step decays. Enables HAMC/HARC in stage 3. Appends one JSON
/// record per `log_every` steps to `log_path` when given, and aborts with a
/// diagnostic dump next to it on a non-finite loss.
StageResult train_stage(PFrameModel& model, const StageConfig& cfg, const ClipSampler& sampler,
                        const std::optional<std::filesystem::path>& log_path = std::nullopt,
                        nlohmann::json history = nlohmann::json::array());

}  // namespace c2f::train

namespace c2f::train {

/// The full desk-scale schedule: three stages per lambda for the
/// coarse-to-fine model, plus a single-stage-motion variant at one lambda.
struct LadderConfig {
  std::vector<double> lambdas = {256, 512, 1024, 2048};
  std::string preset = "toy";
  StageConfig stage1;
  StageConfig stage2;
  StageConfig stage3;
  double variant_lambda = 1024;
  uint64_t seed = 7;

  LadderConfig();
  /// model_id of a ladder checkpoint; the single-stage variant uses 13 and up.
  uint8_t model_id(size_t lambda_index, int stage, bool single_stage) const;
};

void to_json(nlohmann::json& j, const LadderConfig& c);
void from_json(const nlohmann::json& j, LadderConfig& c);

std::filesystem::path ladder_checkpoint(const std::filesystem::path& dir, double lambda,
                                        int stage, bool single_stage);

/// Trains every missing checkpoint of the ladder into `dir`, resuming from
/// whatever is already there. A cache written with a different config is
/// discarded. `progress` receives one line per finished stage.
void run_ladder(const LadderConfig& cfg, const std::filesystem::path& dir,
                const std::function<void(const std::string&)>& progress = {});

}  // namespace c2f::train
