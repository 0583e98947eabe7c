#include "lsf/lsfnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "lsf/binary_io.hpp"
#include "lsf/error.hpp"

namespace lsf {
namespace {

constexpr io::Magic kModelMagic{'L', 'S', 'F', 'M'};
constexpr std::uint16_t kModelVersion = 1;

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename M>
std::span<double> span_of(M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename M>
std::span<const double> span_of(const M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

MatrixXd activate(const MatrixXd& pre, Activation a) {
  return a == Activation::relu ? MatrixXd(pre.cwiseMax(0.0)) : pre;
}

// Multiplies an upstream gradient by the activation derivative at `pre`.
MatrixXd backprop_activation(const MatrixXd& upstream, const MatrixXd& pre, Activation a) {
  if (a == Activation::identity) return upstream;
  return upstream.array() * (pre.array() > 0.0).cast<double>();
}

struct EncoderPass {
  MatrixXd pre_hidden;  // S x H
  MatrixXd hidden;      // S x H
  MatrixXd pre_code;    // S x D_code
  MatrixXd code;        // S x D_code
};

struct DecoderPass {
  MatrixXd pre_hidden;  // S x H
  MatrixXd hidden;      // S x H
  MatrixXd output;      // S x D_in
};

void check_input(const LsfNetModel& model, const MatrixXd& rows) {
  if (rows.cols() != model.dims().input) {
    throw DataError("input width " + std::to_string(rows.cols()) + " does not match model input " +
                    std::to_string(model.dims().input));
  }
  if (!rows.allFinite()) throw DataError("non-finite value in network input");
}

void check_labels(const LsfNetModel& model, const MatrixXd& rows, std::span<const int> labels) {
  if (labels.size() != static_cast<std::size_t>(rows.rows())) {
    throw UsageError("label count does not match row count");
  }
  for (int l : labels) {
    if (l < 0 || l >= model.num_classes()) throw DataError("label " + std::to_string(l) + " out of range");
  }
}

EncoderPass run_encoder(const LsfNetModel& model, const MatrixXd& rows) {
  const auto& p = model.params();
  EncoderPass e;
  e.pre_hidden = (rows * p.w1.transpose()).rowwise() + p.b1.transpose();
  e.hidden = activate(e.pre_hidden, model.activations().hidden);
  e.pre_code = (e.hidden * p.w2.transpose()).rowwise() + p.b2.transpose();
  e.code = activate(e.pre_code, model.activations().code);
  return e;
}

DecoderPass run_decoder(const LsfNetModel& model, const MatrixXd& code) {
  const auto& p = model.params();
  DecoderPass d;
  d.pre_hidden = (code * p.w2).rowwise() + p.b3.transpose();
  d.hidden = activate(d.pre_hidden, model.activations().hidden);
  d.output = (d.hidden * p.w1).rowwise() + p.b4.transpose();
  return d;
}

MatrixXd logits_from_code(const LsfNetModel& model, const MatrixXd& code) {
  const auto& p = model.params();
  return (code * p.wh.transpose()).rowwise() + p.bh.transpose();
}

// Row-wise softmax and the mean cross-entropy against `labels`.
double softmax_cross_entropy(const MatrixXd& logits, std::span<const int> labels, MatrixXd* probs) {
  double total = 0.0;
  if (probs) probs->resize(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(i).array() - m;
    const double log_z = std::log(shifted.array().exp().sum());
    total += log_z - shifted(labels[static_cast<std::size_t>(i)]);
    if (probs) probs->row(i) = (shifted.array() - log_z).exp();
  }
  return total / static_cast<double>(logits.rows());
}

// Accumulates encoder gradients given dL/d(code) into `g`.
void backprop_encoder(const LsfNetModel& model, const MatrixXd& rows, const EncoderPass& enc,
                      const MatrixXd& d_code, NetParams& g) {
  const auto& p = model.params();
  const MatrixXd d_pre_code = backprop_activation(d_code, enc.pre_code, model.activations().code);
  g.w2.noalias() += d_pre_code.transpose() * enc.hidden;
  g.b2 += d_pre_code.colwise().sum().transpose();
  const MatrixXd d_hidden = d_pre_code * p.w2;
  const MatrixXd d_pre_hidden = backprop_activation(d_hidden, enc.pre_hidden, model.activations().hidden);
  g.w1.noalias() += d_pre_hidden.transpose() * rows;
  g.b1 += d_pre_hidden.colwise().sum().transpose();
}

void require_finite_loss(double loss, const char* which) {
  if (!std::isfinite(loss)) throw DivergenceError(std::string(which) + " loss is not finite");
}

}  // namespace

NetParams NetParams::zeros(const LayerDims& dims, int classes) {
  NetParams p;
  p.w1 = MatrixXd::Zero(dims.hidden, dims.input);
  p.b1 = VectorXd::Zero(dims.hidden);
  p.w2 = MatrixXd::Zero(dims.code, dims.hidden);
  p.b2 = VectorXd::Zero(dims.code);
  p.b3 = VectorXd::Zero(dims.hidden);
  p.b4 = VectorXd::Zero(dims.input);
  p.wh = MatrixXd::Zero(classes, dims.code);
  p.bh = VectorXd::Zero(classes);
  return p;
}

std::vector<NetParams::Tensor> NetParams::tensors() {
  return {{"w1", span_of(w1)}, {"b1", span_of(b1)}, {"w2", span_of(w2)}, {"b2", span_of(b2)},
          {"b3", span_of(b3)}, {"b4", span_of(b4)}, {"wh", span_of(wh)}, {"bh", span_of(bh)}};
}

std::vector<NetParams::ConstTensor> NetParams::tensors() const {
  return {{"w1", span_of(w1)}, {"b1", span_of(b1)}, {"w2", span_of(w2)}, {"b2", span_of(b2)},
          {"b3", span_of(b3)}, {"b4", span_of(b4)}, {"wh", span_of(wh)}, {"bh", span_of(bh)}};
}

std::size_t NetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.values.size();
  return n;
}

LsfNetModel::LsfNetModel(LayerDims dims, int classes, ActivationSpec activations)
    : dims_(dims), classes_(classes), activations_(activations) {
  if (dims.input <= 0 || dims.hidden <= 0 || dims.code <= 0) {
    throw UsageError("layer dimensions must be positive");
  }
  if (classes < 2) throw UsageError("classifier head needs at least 2 classes");
  params_ = NetParams::zeros(dims, classes);
}

void LsfNetModel::validate() const {
  const NetParams expected = NetParams::zeros(dims_, classes_);
  const auto want = expected.tensors();
  const auto have = params_.tensors();
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i].values.size() != have[i].values.size()) {
      throw DataError("tensor " + std::string(have[i].name) + " has the wrong shape");
    }
    for (double v : have[i].values) {
      if (!std::isfinite(v)) throw DivergenceError("tensor " + std::string(have[i].name) + " is not finite");
    }
  }
  if (params_.w1.rows() != dims_.hidden || params_.w2.rows() != dims_.code || params_.wh.rows() != classes_) {
    throw DataError("weight matrices have inconsistent shapes");
  }
}

LsfNetModel init_model(const LayerDims& dims, int classes, std::uint64_t seed, ActivationSpec activations,
                       double gain) {
  LsfNetModel model(dims, classes, activations);
  std::mt19937_64 rng(seed);
  auto fill = [&](MatrixXd& w) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < w.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    }
  };
  auto& p = model.params();
  fill(p.w1);
  fill(p.w2);
  fill(p.wh);
  return model;
}

MatrixXd encode(const LsfNetModel& model, const MatrixXd& rows) {
  check_input(model, rows);
  return run_encoder(model, rows).code;
}

MatrixXd reconstruct(const LsfNetModel& model, const MatrixXd& rows) {
  check_input(model, rows);
  return run_decoder(model, run_encoder(model, rows).code).output;
}

MatrixXd classify_logits(const LsfNetModel& model, const MatrixXd& rows) {
  check_input(model, rows);
  return logits_from_code(model, run_encoder(model, rows).code);
}

double reconstruction_loss(const LsfNetModel& model, const MatrixXd& rows) {
  const MatrixXd diff = reconstruct(model, rows) - rows;
  return diff.squaredNorm() / static_cast<double>(rows.rows());
}

double classification_loss(const LsfNetModel& model, const MatrixXd& rows, std::span<const int> labels) {
  check_labels(model, rows, labels);
  return softmax_cross_entropy(classify_logits(model, rows), labels, nullptr);
}

LossAndGradient reconstruction_gradient(const LsfNetModel& model, const MatrixXd& rows) {
  check_input(model, rows);
  if (rows.rows() == 0) throw UsageError("empty batch");
  const auto& p = model.params();
  const EncoderPass enc = run_encoder(model, rows);
  const DecoderPass dec = run_decoder(model, enc.code);
  const double n = static_cast<double>(rows.rows());

  LossAndGradient out{(dec.output - rows).squaredNorm() / n,
                      NetParams::zeros(model.dims(), model.num_classes())};
  NetParams& g = out.grad;

  // Decoder: output = hidden_d * w1 + b4, pre_hidden_d = code * w2 + b3.
  const MatrixXd d_output = (2.0 / n) * (dec.output - rows);
  g.w1.noalias() += dec.hidden.transpose() * d_output;
  g.b4 = d_output.colwise().sum().transpose();
  const MatrixXd d_dec_hidden = d_output * p.w1.transpose();
  const MatrixXd d_dec_pre = backprop_activation(d_dec_hidden, dec.pre_hidden, model.activations().hidden);
  g.w2.noalias() += enc.code.transpose() * d_dec_pre;
  g.b3 = d_dec_pre.colwise().sum().transpose();
  const MatrixXd d_code = d_dec_pre * p.w2.transpose();

  backprop_encoder(model, rows, enc, d_code, g);
  return out;
}

LossAndGradient classification_gradient(const LsfNetModel& model, const MatrixXd& rows,
                                        std::span<const int> labels) {
  check_input(model, rows);
  check_labels(model, rows, labels);
  if (rows.rows() == 0) throw UsageError("empty batch");
  const auto& p = model.params();
  const EncoderPass enc = run_encoder(model, rows);
  MatrixXd probs;
  LossAndGradient out{softmax_cross_entropy(logits_from_code(model, enc.code), labels, &probs),
                      NetParams::zeros(model.dims(), model.num_classes())};
  NetParams& g = out.grad;

  MatrixXd d_logits = probs;
  for (Index i = 0; i < d_logits.rows(); ++i) d_logits(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  d_logits /= static_cast<double>(rows.rows());
  g.wh.noalias() = d_logits.transpose() * enc.code;
  g.bh = d_logits.colwise().sum().transpose();
  const MatrixXd d_code = d_logits * p.wh;

  backprop_encoder(model, rows, enc, d_code, g);
  return out;
}

double train_step_ae(LsfNetModel& model, const MatrixXd& rows, double lr) {
  const LossAndGradient lg = reconstruction_gradient(model, rows);
  require_finite_loss(lg.loss, "reconstruction");
  auto& p = model.params();
  p.w1 -= lr * lg.grad.w1;
  p.b1 -= lr * lg.grad.b1;
  p.w2 -= lr * lg.grad.w2;
  p.b2 -= lr * lg.grad.b2;
  p.b3 -= lr * lg.grad.b3;
  p.b4 -= lr * lg.grad.b4;
  return lg.loss;
}

double train_step_cls(LsfNetModel& model, const MatrixXd& rows, std::span<const int> labels, double lr) {
  const LossAndGradient lg = classification_gradient(model, rows, labels);
  require_finite_loss(lg.loss, "classification");
  auto& p = model.params();
  p.w1 -= lr * lg.grad.w1;
  p.b1 -= lr * lg.grad.b1;
  p.w2 -= lr * lg.grad.w2;
  p.b2 -= lr * lg.grad.b2;
  p.wh -= lr * lg.grad.wh;
  p.bh -= lr * lg.grad.bh;
  return lg.loss;
}

double TrainResult::epoch_reconstruction(int epoch) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : history) {
    if (r.epoch == epoch) sum += r.reconstruction, ++n;
  }
  return n ? sum / n : std::nan("");
}

double TrainResult::epoch_classification(int epoch) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : history) {
    if (r.epoch == epoch) sum += r.classification, ++n;
  }
  return n ? sum / n : std::nan("");
}

TrainResult train(LsfNetModel& model, const LabeledDescriptorBatch& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (config.lr_autoencoder <= 0 || config.lr_classifier <= 0) {
    throw UsageError("learning rates must be positive");
  }
  if (config.epochs < 1) throw UsageError("epochs must be at least 1");
  if (config.batch_size < 1) throw UsageError("batch size must be at least 1");
  const Index total = data.rows.rows();
  if (total == 0) throw DataError("training sample is empty");
  check_input(model, data.rows);
  check_labels(model, data.rows, data.labels);

  std::mt19937_64 rng(config.seed);
  std::vector<Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Index{0});

  TrainResult result;
  std::vector<double> epoch_l1;
  std::vector<double> epoch_l2;
  MatrixXd batch;
  std::vector<int> labels;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_l1 = 0.0;
    double sum_l2 = 0.0;
    int batches = 0;
    for (Index start = 0; start < total; start += config.batch_size) {
      const Index count = std::min(config.batch_size, total - start);
      batch.resize(count, data.rows.cols());
      labels.resize(static_cast<std::size_t>(count));
      for (Index i = 0; i < count; ++i) {
        const Index src = order[static_cast<std::size_t>(start + i)];
        batch.row(i) = data.rows.row(src);
        labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(src)];
      }
      LossRecord rec{epoch, batches, 0.0, 0.0};
      try {
        rec.reconstruction = train_step_ae(model, batch, config.lr_autoencoder);
        rec.classification = train_step_cls(model, batch, labels, config.lr_classifier);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches));
      }
      result.history.push_back(rec);
      sum_l1 += rec.reconstruction;
      sum_l2 += rec.classification;
      ++batches;
    }
    result.epochs_run = epoch + 1;
    epoch_l1.push_back(sum_l1 / batches);
    epoch_l2.push_back(sum_l2 / batches);
    if (on_epoch) on_epoch(epoch, epoch_l1.back(), epoch_l2.back());

    if (config.early_stop && epoch >= 10) {
      auto stalled = [&](const std::vector<double>& curve) {
        const double before = curve[curve.size() - 11];
        const double now = curve.back();
        return (before - now) < 1e-6 * std::abs(before);
      };
      if (stalled(epoch_l1) && stalled(epoch_l2)) break;
    }
  }
  model.validate();
  return result;
}

void save_model(const std::filesystem::path& path, const LsfNetModel& model) {
  model.validate();
  std::ofstream out = io::open_output(path);
  io::BinaryWriter w(out);
  w.magic(kModelMagic);
  w.u16(kModelVersion);
  w.u32(static_cast<std::uint32_t>(model.dims().input));
  w.u32(static_cast<std::uint32_t>(model.dims().hidden));
  w.u32(static_cast<std::uint32_t>(model.dims().code));
  w.u32(static_cast<std::uint32_t>(model.num_classes()));
  w.u8(static_cast<std::uint8_t>(model.activations().hidden));
  w.u8(static_cast<std::uint8_t>(model.activations().code));
  // Eigen stores column-major; matrices are written row-major (rows x cols).
  auto write_matrix = [&](const MatrixXd& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    w.f64s(span_of(rm));
  };
  const auto& p = model.params();
  write_matrix(p.w1);
  w.f64s(span_of(p.b1));
  write_matrix(p.w2);
  w.f64s(span_of(p.b2));
  w.f64s(span_of(p.b3));
  w.f64s(span_of(p.b4));
  write_matrix(p.wh);
  w.f64s(span_of(p.bh));
  if (!out) throw DataError(path.string() + ": write failed");
}

LsfNetModel load_model(const std::filesystem::path& path) {
  std::ifstream in = io::open_input(path);
  io::BinaryReader r(in, path.string());
  r.expect_magic(kModelMagic);
  const auto version = r.u16();
  if (version != kModelVersion) {
    throw DataError(path.string() + ": unsupported model format version " + std::to_string(version));
  }
  LayerDims dims;
  dims.input = r.u32();
  dims.hidden = r.u32();
  dims.code = r.u32();
  const auto classes = static_cast<int>(r.u32());
  ActivationSpec act;
  auto read_act = [&]() {
    const auto code = r.u8();
    if (code > 1) throw DataError(path.string() + ": unknown activation code " + std::to_string(code));
    return static_cast<Activation>(code);
  };
  act.hidden = read_act();
  act.code = read_act();
  LsfNetModel model(dims, classes, act);
  auto& p = model.params();
  auto read_matrix = [&](MatrixXd& m) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(m.rows(), m.cols());
    r.f64s(span_of(rm));
    m = rm;
  };
  read_matrix(p.w1);
  r.f64s(span_of(p.b1));
  read_matrix(p.w2);
  r.f64s(span_of(p.b2));
  r.f64s(span_of(p.b3));
  r.f64s(span_of(p.b4));
  read_matrix(p.wh);
  r.f64s(span_of(p.bh));
  r.expect_end();
  model.validate();
  return model;
}

void save_model_sidecar(const std::filesystem::path& path, const LsfNetModel& model) {
  auto act_name = [](Activation a) { return a == Activation::relu ? "relu" : "identity"; };
  nlohmann::ordered_json j;
  j["magic"] = "LSFM";
  j["version"] = kModelVersion;
  j["dims"] = {{"input", model.dims().input}, {"hidden", model.dims().hidden}, {"code", model.dims().code}};
  j["classes"] = model.num_classes();
  j["activations"] = {{"hidden", act_name(model.activations().hidden)},
                      {"code", act_name(model.activations().code)},
                      {"output", "identity"}};
  j["tied_decoder"] = true;
  j["parameter_count"] = model.params().parameter_count();
  std::ofstream out(path.string() + ".json", std::ios::trunc);
  if (!out) throw DataError(path.string() + ".json: cannot open for writing");
  out << j.dump(2) << '\n';
}

double GradientCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : reconstruction) w = std::max(w, e.max_relative_error);
  for (const auto& e : classification) w = std::max(w, e.max_relative_error);
  return w;
}

GradientCheckReport gradient_check(const LayerDims& dims, int classes, Index batch_rows, std::uint64_t seed,
                                   double step) {
  if (batch_rows < 1) throw UsageError("gradient check needs at least one row");
  LsfNetModel model = init_model(dims, classes, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto* b : {&model.params().b1, &model.params().b2, &model.params().b3, &model.params().b4,
                  &model.params().bh}) {
    for (Index i = 0; i < b->size(); ++i) (*b)(i) = 0.1 * normal(rng);
  }
  MatrixXd rows(batch_rows, dims.input);
  for (Index i = 0; i < rows.size(); ++i) rows.data()[i] = normal(rng);
  std::vector<int> labels(static_cast<std::size_t>(batch_rows));
  std::uniform_int_distribution<int> pick(0, classes - 1);
  for (auto& l : labels) l = pick(rng);

  auto check = [&](auto&& loss_fn, const NetParams& analytic) {
    std::vector<GradientCheckEntry> entries;
    auto params = model.params().tensors();
    const auto grads = analytic.tensors();
    for (std::size_t t = 0; t < params.size(); ++t) {
      double worst = 0.0;
      for (std::size_t k = 0; k < params[t].values.size(); ++k) {
        double& x = params[t].values[k];
        const double saved = x;
        x = saved + step;
        const double up = loss_fn();
        x = saved - step;
        const double down = loss_fn();
        x = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double a = grads[t].values[k];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-7});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
      entries.push_back({std::string(params[t].name), worst});
    }
    return entries;
  };

  GradientCheckReport report;
  const NetParams g1 = reconstruction_gradient(model, rows).grad;
  report.reconstruction = check([&] { return reconstruction_loss(model, rows); }, g1);
  const NetParams g2 = classification_gradient(model, rows, labels).grad;
  report.classification = check([&] { return classification_loss(model, rows, labels); }, g2);
  return report;
}

}  // namespace lsf
