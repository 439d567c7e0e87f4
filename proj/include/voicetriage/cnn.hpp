#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace vt {

struct CnnConfig {
  std::vector<int> filters = {32, 64, 128};
  std::size_t input_rows = 128;
  std::size_t input_cols = 256;
  int max_epochs = 50;
  int patience = 5;  // 0 disables early stopping
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  // Stop as soon as an epoch's mean training loss falls below this (0: off).
  double target_train_loss = 0.0;
  std::uint64_t seed = 0;

  // Throws InvalidArgument on empty filters, non-positive sizes, or input
  // dimensions not divisible by 2^blocks.
  void validate() const;
  // Filters (32, 64, 128) on a 128 x 256 input.
  bool is_reference() const;
  std::size_t blocks() const { return filters.size(); }
  std::size_t flat_dim() const;
  // Filters (2, 2, 2) on a 16 x 16 input, for gradient checks.
  static CnnConfig tiny();
};

enum class CnnMode { Train, Infer };

// conv3x3 (same) -> ReLU -> batch-norm -> maxpool 2x2 per block, then
// flatten -> affine(2) -> softmax. Tensors are stored flat, row-major:
// conv weights [out][in][3][3], head weights [2][flat_dim].
template <class T>
struct BasicCnnModel {
  struct Block {
    int in_channels = 0;
    int out_channels = 0;
    std::vector<T> weight;
    std::vector<T> bias;
    std::vector<T> gamma;
    std::vector<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;
  };

  CnnConfig config;
  std::vector<Block> blocks;
  std::vector<T> head_weight;
  std::vector<T> head_bias;

  // Learnable tensors in a fixed order (per block: weight, bias, gamma,
  // beta; then head weight, head bias).
  std::vector<std::span<T>> parameters();
  std::vector<std::span<const T>> parameters() const;
  // Same shapes, all zero (used for gradients and optimizer moments).
  BasicCnnModel zeros_like() const;
  std::size_t parameter_count() const;
};

using CnnModel = BasicCnnModel<float>;
using CnnModel64 = BasicCnnModel<double>;

// He-uniform conv and head weights, zero biases, gamma 1, beta 0, running
// mean 0 and running variance 1. Deterministic per config.seed.
template <class T>
BasicCnnModel<T> cnn_init(const CnnConfig& cfg);

// Images stacked as N x rows x cols.
template <class T>
struct BasicImageSet {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> pixels;
  std::vector<int> labels;  // 0 NonPathological, 1 Pathological

  std::size_t size() const { return labels.size(); }
  std::span<const T> image(std::size_t i) const { return {pixels.data() + i * rows * cols, rows * cols}; }
};

using ImageSet = BasicImageSet<float>;

// Softmax probabilities per image. Train mode normalizes with batch
// statistics and updates the running statistics; Infer uses the running
// statistics. Errors: ShapeMismatch.
template <class T>
std::vector<std::array<double, 2>> cnn_forward(BasicCnnModel<T>& model, std::span<const T> batch,
                                               std::size_t count, CnnMode mode);
template <class T>
std::vector<std::array<double, 2>> cnn_predict(const BasicCnnModel<T>& model, std::span<const T> batch,
                                               std::size_t count);

// Mean cross-entropy of a batch with train-mode batch-norm (running
// statistics untouched); gradients accumulate into `grad` if given.
template <class T>
double cnn_loss_gradient(const BasicCnnModel<T>& model, std::span<const T> batch, std::span<const int> labels,
                         BasicCnnModel<T>* grad);

// Mean cross-entropy with infer-mode batch-norm.
template <class T>
double cnn_infer_loss(const BasicCnnModel<T>& model, std::span<const T> batch, std::span<const int> labels);

// Max over every learnable scalar of |g - g_fd| / max(|g| + |g_fd|, 1e-7),
// g_fd the central difference with step h.
double cnn_gradient_check(const CnnModel64& model, std::span<const double> batch, std::span<const int> labels,
                          double h = 1e-5);

// Output shape (channels, rows, cols) after each block.
std::vector<std::array<std::size_t, 3>> cnn_block_shapes(const CnnConfig& cfg);

// Tracks the best validation loss; signals a stop after `patience`
// consecutive epochs without strict improvement. Epochs are 1-based.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  // Returns true when training should stop after this epoch.
  bool update(int epoch, double val_loss);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
  int stale_ = 0;
  bool improved_ = false;
};

struct CnnEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

template <class T>
struct BasicCnnTrainResult {
  BasicCnnModel<T> model;  // parameters of the best validation epoch
  std::vector<CnnEpochLog> log;
  int best_epoch = 0;
  bool early_stopped = false;
};

// Mini-batch Adam on cross-entropy. The epoch order comes from one seeded
// shuffle stream, so two runs with the same seed are bit-identical.
// Errors: InsufficientData (empty set), ShapeMismatch, Diverged (non-finite
// loss).
template <class T>
BasicCnnTrainResult<T> cnn_train(const BasicImageSet<T>& train, const BasicImageSet<T>& val, const CnnConfig& cfg);

// CSV header: epoch,train_loss,val_loss,val_acc
void write_training_log(std::ostream& out, std::span<const CnnEpochLog> log);

namespace layers {

// Same-padded 3x3 convolution of one C_in x H x W image.
template <class T>
void conv3x3_forward(std::span<const T> input, int in_channels, std::size_t rows, std::size_t cols,
                     std::span<const T> weight, std::span<const T> bias, int out_channels, std::span<T> output);

}  // namespace layers

}  // namespace vt
