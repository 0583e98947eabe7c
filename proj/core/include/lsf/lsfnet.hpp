#pragma once

// Loss-switching fusion network: a tied-weight autoencoder
// D_in -> H -> D_code -> H -> D_in whose encoder is shared with a softmax
// classifier head. Training alternates a reconstruction step and a
// classification step on every batch; inference runs only the encoder.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "lsf/descriptor_io.hpp"

namespace lsf {

struct LayerDims {
  Eigen::Index input = 426;
  Eigen::Index hidden = 256;
  Eigen::Index code = 128;

  bool operator==(const LayerDims&) const = default;
};

enum class Activation : std::uint8_t { identity = 0, relu = 1 };

/// Activation of the hidden layers (both sides) and of the encoding layer.
/// The reconstruction output and the logits are always affine.
struct ActivationSpec {
  Activation hidden = Activation::relu;
  Activation code = Activation::identity;

  bool operator==(const ActivationSpec&) const = default;
};

/// Every trainable tensor. Also used as the gradient container.
struct NetParams {
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // code x hidden
  Eigen::VectorXd b2;  // code
  Eigen::VectorXd b3;  // hidden, decoder
  Eigen::VectorXd b4;  // input, decoder
  Eigen::MatrixXd wh;  // classes x code
  Eigen::VectorXd bh;  // classes

  static NetParams zeros(const LayerDims& dims, int classes);

  struct Tensor {
    std::string_view name;
    std::span<double> values;
  };
  struct ConstTensor {
    std::string_view name;
    std::span<const double> values;
  };
  // Declared order: w1 b1 w2 b2 b3 b4 wh bh (also the model-file order).
  std::vector<Tensor> tensors();
  std::vector<ConstTensor> tensors() const;
  std::size_t parameter_count() const;
};

/// Tied-weight autoencoder plus classifier head. The decoder has no weight
/// storage of its own; it applies w2^T and w1^T.
class LsfNetModel {
 public:
  LsfNetModel(LayerDims dims, int classes, ActivationSpec activations = {});

  const LayerDims& dims() const { return dims_; }
  int num_classes() const { return classes_; }
  const ActivationSpec& activations() const { return activations_; }
  const NetParams& params() const { return params_; }
  // Mutable access for initialisation, tests and optimisers. Shapes must be kept.
  NetParams& params() { return params_; }

  // Throws unless every tensor has the shape implied by dims/classes and is finite.
  void validate() const;

 private:
  LayerDims dims_;
  int classes_;
  ActivationSpec activations_;
  NetParams params_;
};

/// Glorot-uniform weights (bound gain * sqrt(6 / (fan_in + fan_out))), zero biases.
LsfNetModel init_model(const LayerDims& dims, int classes, std::uint64_t seed,
                       ActivationSpec activations = {}, double gain = 1.0);

/// rows: S x D_in -> S x D_code.
Eigen::MatrixXd encode(const LsfNetModel& model, const Eigen::MatrixXd& rows);
/// Encoder followed by the tied decoder; same shape as `rows`.
Eigen::MatrixXd reconstruct(const LsfNetModel& model, const Eigen::MatrixXd& rows);
/// Affine head on the code: S x C. Softmax is applied only inside the loss.
Eigen::MatrixXd classify_logits(const LsfNetModel& model, const Eigen::MatrixXd& rows);

/// L1: squared reconstruction error summed over the D_in features of a row,
/// averaged over rows.
double reconstruction_loss(const LsfNetModel& model, const Eigen::MatrixXd& rows);
/// L2: mean softmax cross-entropy against integer labels.
double classification_loss(const LsfNetModel& model, const Eigen::MatrixXd& rows,
                           std::span<const int> labels);

struct LossAndGradient {
  double loss = 0.0;
  NetParams grad;
};

/// Analytic gradients. Contributions of w1/w2 from both the encoder and the
/// tied decoder are summed. Classification leaves b3, b4 with zero gradient;
/// reconstruction leaves wh, bh with zero gradient.
LossAndGradient reconstruction_gradient(const LsfNetModel& model, const Eigen::MatrixXd& rows);
LossAndGradient classification_gradient(const LsfNetModel& model, const Eigen::MatrixXd& rows,
                                        std::span<const int> labels);

struct TrainConfig {
  double lr_autoencoder = 1e-3;
  double lr_classifier = 1e-2;
  int epochs = 200;
  Eigen::Index batch_size = 256;
  std::uint64_t seed = 0;
  double init_gain = 1.0;
  bool early_stop = false;  // stop when both epoch losses improve < 1e-6 relative over 10 epochs
};

/// One SGD step on {w1,b1,w2,b2,b3,b4} against L1. Returns the pre-step loss.
double train_step_ae(LsfNetModel& model, const Eigen::MatrixXd& rows, double lr);
/// One SGD step on {w1,b1,w2,b2,wh,bh} against L2. Returns the pre-step loss.
double train_step_cls(LsfNetModel& model, const Eigen::MatrixXd& rows, std::span<const int> labels,
                      double lr);

struct LossRecord {
  int epoch;
  int batch;
  double reconstruction;   // L1, pre-step
  double classification;   // L2, pre-step
};

struct TrainResult {
  std::vector<LossRecord> history;  // exactly one record (one L1, one L2) per batch
  int epochs_run = 0;

  // Mean over the batches of one epoch.
  double epoch_reconstruction(int epoch) const;
  double epoch_classification(int epoch) const;
};

using EpochCallback = std::function<void(int epoch, double l1, double l2)>;

/// Each epoch shuffles the sample (seeded) into batches and applies, per batch,
/// train_step_ae followed by train_step_cls. Throws DivergenceError naming the
/// epoch and batch when a loss turns non-finite.
TrainResult train(LsfNetModel& model, const LabeledDescriptorBatch& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Model file: "LSFM", u16 version, u32 input/hidden/code, u32 classes,
/// u8 hidden/code activation, then tensors in declared order as f64.
void save_model(const std::filesystem::path& path, const LsfNetModel& model);
LsfNetModel load_model(const std::filesystem::path& path);
/// JSON copy of the model header, written next to the model as <path>.json.
void save_model_sidecar(const std::filesystem::path& path, const LsfNetModel& model);

struct GradientCheckEntry {
  std::string tensor;
  double max_relative_error;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> reconstruction;
  std::vector<GradientCheckEntry> classification;
  double worst() const;
};

/// Central-difference check of both analytic gradients on a random model
/// (random biases included) and a random labeled batch. Per entry the relative
/// error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-7).
GradientCheckReport gradient_check(const LayerDims& dims, int classes, Eigen::Index batch_rows,
                                   std::uint64_t seed, double step = 1e-6);

}  // namespace lsf
