#ifndef MARGINFORGE_MODEL_HPP_
#define MARGINFORGE_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "marginforge/math.hpp"

namespace marginforge {

/// y = x W + b with W stored input-major (in x out).
struct DenseLayer {
  Matrix weights;
  Vector bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct TowerSpec {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;  // 0: single affine layer
  std::size_t output_dim = 0;

  friend bool operator==(const TowerSpec&, const TowerSpec&) = default;
};

/// Activations kept from a batched forward pass.
struct TowerCache {
  Matrix input;   // B x input_dim
  Matrix hidden;  // B x hidden_dim after tanh; empty without a hidden layer
  Matrix output;  // B x output_dim
};

/// Affine, or affine -> tanh -> affine, encoder.
class Tower {
 public:
  Tower() = default;
  explicit Tower(const TowerSpec& spec);

  const TowerSpec& spec() const noexcept { return spec_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  Vector encode(std::span<const double> input) const;
  TowerCache forward(const Matrix& inputs) const;
  /// Gradient of the parameters given dL/d(outputs); same layout as layers().
  std::vector<DenseLayer> backward(const TowerCache& cache, const Matrix& grad_outputs) const;

  friend bool operator==(const Tower&, const Tower&) = default;

 private:
  TowerSpec spec_;
  std::vector<DenseLayer> layers_;
};

struct ModelDims {
  std::size_t video_input = 0;
  std::size_t text_input = 0;
  std::size_t hidden_dim = 0;
  std::size_t joint_dim = 0;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct TwoTowerModel {
  Tower video;
  Tower text;

  ModelDims dims() const;
  friend bool operator==(const TwoTowerModel&, const TwoTowerModel&) = default;
};

struct ForwardState {
  TowerCache video;
  TowerCache text;
};

struct ModelGrad {
  std::vector<DenseLayer> video;
  std::vector<DenseLayer> text;
};

/// Glorot-uniform weights, a = sqrt(6 / (fan_in + fan_out)); zero biases.
TwoTowerModel init_params(const ModelDims& dims, std::uint64_t seed);
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

/// Adds `offset` to every output bias of both towers. Large offsets make all
/// representations nearly collinear.
void offset_output_bias(TwoTowerModel& model, double offset);

Vector encode_video(const TwoTowerModel& model, std::span<const double> pooled_features);
Vector encode_text(const TwoTowerModel& model, std::span<const double> text_features);

ForwardState forward(const TwoTowerModel& model, const Matrix& video_inputs,
                     const Matrix& text_inputs);
ModelGrad backward(const TwoTowerModel& model, const ForwardState& state,
                   const Matrix& grad_video_outputs, const Matrix& grad_text_outputs);

// Flat parameter order: video tower then text tower; per layer the weight
// matrix row-major followed by the bias.
std::size_t parameter_count(const TwoTowerModel& model);
Vector flatten(const TwoTowerModel& model);
Vector flatten(const ModelGrad& grad);
void assign_flat(TwoTowerModel& model, std::span<const double> flat);
std::vector<std::string> tensor_names(const TwoTowerModel& model);

}  // namespace marginforge

#endif  // MARGINFORGE_MODEL_HPP_
