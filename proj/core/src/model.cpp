#include "marginforge/model.hpp"

#include <cmath>
#include <string>

#include "marginforge/error.hpp"

namespace marginforge {

namespace {

DenseLayer make_layer(std::size_t in, std::size_t out) {
  return {Matrix(in, out, 0.0), Vector(out, 0.0)};
}

void require_positive(std::size_t v, const char* what) {
  if (v == 0) fail(ErrorCode::kInvalidArgument, std::string(what) + " must be positive");
}

// out(b, :) = in(b, :) W + bias
Matrix affine(const Matrix& in, const DenseLayer& layer) {
  const std::size_t out_dim = layer.weights.cols();
  Matrix out(in.rows(), out_dim);
  for (std::size_t b = 0; b < in.rows(); ++b) {
    auto dst = out.row(b);
    std::copy(layer.bias.begin(), layer.bias.end(), dst.begin());
    const auto src = in.row(b);
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double x = src[i];
      const auto w = layer.weights.row(i);
      for (std::size_t k = 0; k < out_dim; ++k) dst[k] += x * w[k];
    }
  }
  return out;
}

// Accumulates parameter grads for one affine layer and returns dL/d(input).
Matrix affine_backward(const Matrix& in, const DenseLayer& layer, const Matrix& grad_out,
                       DenseLayer& grad) {
  const std::size_t in_dim = layer.weights.rows();
  const std::size_t out_dim = layer.weights.cols();
  Matrix grad_in(in.rows(), in_dim);
  for (std::size_t b = 0; b < in.rows(); ++b) {
    const auto x = in.row(b);
    const auto g = grad_out.row(b);
    for (std::size_t k = 0; k < out_dim; ++k) grad.bias[k] += g[k];
    for (std::size_t i = 0; i < in_dim; ++i) {
      auto gw = grad.weights.row(i);
      const auto w = layer.weights.row(i);
      double acc = 0.0;
      for (std::size_t k = 0; k < out_dim; ++k) {
        gw[k] += x[i] * g[k];
        acc += w[k] * g[k];
      }
      grad_in(b, i) = acc;
    }
  }
  return grad_in;
}

template <typename Fn>
void for_each_layer(std::vector<DenseLayer>& video, std::vector<DenseLayer>& text, Fn&& fn) {
  for (auto& l : video) fn(l);
  for (auto& l : text) fn(l);
}

}  // namespace

Tower::Tower(const TowerSpec& spec) : spec_(spec) {
  require_positive(spec.input_dim, "tower input dim");
  require_positive(spec.output_dim, "tower output dim");
  if (spec.hidden_dim == 0) {
    layers_.push_back(make_layer(spec.input_dim, spec.output_dim));
  } else {
    layers_.push_back(make_layer(spec.input_dim, spec.hidden_dim));
    layers_.push_back(make_layer(spec.hidden_dim, spec.output_dim));
  }
}

Vector Tower::encode(std::span<const double> input) const {
  if (input.size() != spec_.input_dim) {
    fail(ErrorCode::kDimMismatch, "tower expects input dim " + std::to_string(spec_.input_dim) +
                                      ", got " + std::to_string(input.size()));
  }
  Matrix in(1, input.size());
  std::copy(input.begin(), input.end(), in.row(0).begin());
  const TowerCache cache = forward(in);
  const auto row = cache.output.row(0);
  return Vector(row.begin(), row.end());
}

TowerCache Tower::forward(const Matrix& inputs) const {
  if (inputs.cols() != spec_.input_dim) {
    fail(ErrorCode::kDimMismatch, "tower expects input dim " + std::to_string(spec_.input_dim) +
                                      ", got " + std::to_string(inputs.cols()));
  }
  TowerCache cache;
  cache.input = inputs;
  if (layers_.size() == 1) {
    cache.output = affine(inputs, layers_[0]);
  } else {
    cache.hidden = affine(inputs, layers_[0]);
    for (double& v : cache.hidden.values()) v = std::tanh(v);
    cache.output = affine(cache.hidden, layers_[1]);
  }
  return cache;
}

std::vector<DenseLayer> Tower::backward(const TowerCache& cache, const Matrix& grad_outputs) const {
  if (grad_outputs.rows() != cache.output.rows() || grad_outputs.cols() != cache.output.cols() ||
      cache.input.cols() != spec_.input_dim) {
    fail(ErrorCode::kShapeMismatch, "backward shapes do not match the forward state");
  }
  std::vector<DenseLayer> grads;
  for (const auto& l : layers_) grads.push_back(make_layer(l.weights.rows(), l.weights.cols()));
  if (layers_.size() == 1) {
    affine_backward(cache.input, layers_[0], grad_outputs, grads[0]);
    return grads;
  }
  Matrix grad_hidden = affine_backward(cache.hidden, layers_[1], grad_outputs, grads[1]);
  // tanh' = 1 - tanh^2, using the cached post-activation values.
  auto h = cache.hidden.values();
  auto g = grad_hidden.values();
  for (std::size_t k = 0; k < g.size(); ++k) g[k] *= 1.0 - h[k] * h[k];
  affine_backward(cache.input, layers_[0], grad_hidden, grads[0]);
  return grads;
}

ModelDims TwoTowerModel::dims() const {
  return {video.spec().input_dim, text.spec().input_dim, video.spec().hidden_dim,
          video.spec().output_dim};
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

TwoTowerModel init_params(const ModelDims& dims, std::uint64_t seed) {
  require_positive(dims.video_input, "video input dim");
  require_positive(dims.text_input, "text input dim");
  require_positive(dims.joint_dim, "joint dim");
  TwoTowerModel model{Tower({dims.video_input, dims.hidden_dim, dims.joint_dim}),
                      Tower({dims.text_input, dims.hidden_dim, dims.joint_dim})};
  Rng rng(seed, "init");
  for_each_layer(model.video.layers(), model.text.layers(), [&](DenseLayer& layer) {
    const double a = glorot_limit(layer.weights.rows(), layer.weights.cols());
    for (double& w : layer.weights.values()) w = rng.uniform(-a, a);
  });
  return model;
}

void offset_output_bias(TwoTowerModel& model, double offset) {
  for (double& b : model.video.layers().back().bias) b += offset;
  for (double& b : model.text.layers().back().bias) b += offset;
}

Vector encode_video(const TwoTowerModel& model, std::span<const double> pooled_features) {
  return model.video.encode(pooled_features);
}

Vector encode_text(const TwoTowerModel& model, std::span<const double> text_features) {
  return model.text.encode(text_features);
}

ForwardState forward(const TwoTowerModel& model, const Matrix& video_inputs,
                     const Matrix& text_inputs) {
  return {model.video.forward(video_inputs), model.text.forward(text_inputs)};
}

ModelGrad backward(const TwoTowerModel& model, const ForwardState& state,
                   const Matrix& grad_video_outputs, const Matrix& grad_text_outputs) {
  return {model.video.backward(state.video, grad_video_outputs),
          model.text.backward(state.text, grad_text_outputs)};
}

namespace {

std::size_t count_layers(const std::vector<DenseLayer>& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

void append(const std::vector<DenseLayer>& layers, Vector& out) {
  for (const auto& l : layers) {
    out.insert(out.end(), l.weights.values().begin(), l.weights.values().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
}

}  // namespace

std::size_t parameter_count(const TwoTowerModel& model) {
  return count_layers(model.video.layers()) + count_layers(model.text.layers());
}

Vector flatten(const TwoTowerModel& model) {
  Vector out;
  out.reserve(parameter_count(model));
  append(model.video.layers(), out);
  append(model.text.layers(), out);
  return out;
}

Vector flatten(const ModelGrad& grad) {
  Vector out;
  out.reserve(count_layers(grad.video) + count_layers(grad.text));
  append(grad.video, out);
  append(grad.text, out);
  return out;
}

void assign_flat(TwoTowerModel& model, std::span<const double> flat) {
  if (flat.size() != parameter_count(model)) {
    fail(ErrorCode::kShapeMismatch, "flat parameter vector has " + std::to_string(flat.size()) +
                                        " entries, model has " +
                                        std::to_string(parameter_count(model)));
  }
  std::size_t k = 0;
  for_each_layer(model.video.layers(), model.text.layers(), [&](DenseLayer& layer) {
    for (double& w : layer.weights.values()) w = flat[k++];
    for (double& b : layer.bias) b = flat[k++];
  });
}

std::vector<std::string> tensor_names(const TwoTowerModel& model) {
  std::vector<std::string> names;
  auto add = [&names](const std::string& tower, std::size_t count) {
    for (std::size_t l = 0; l < count; ++l) {
      names.push_back(tower + "." + std::to_string(l) + ".weight");
      names.push_back(tower + "." + std::to_string(l) + ".bias");
    }
  };
  add("video", model.video.layers().size());
  add("text", model.text.layers().size());
  return names;
}

}  // namespace marginforge
