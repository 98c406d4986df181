#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "luxmix/nn/param_store.hpp"

namespace luxmix::nn {

// Tensor shapes are either (batch, channels, length) for the convolutional
// stages or (batch, features) after flattening. Storage layouts:
//   rank 3: MatrixXd (batch*length, channels), row index = b*length + t
//   rank 2: MatrixXd (batch, features), feature index = c*length + t
struct Shape {
  int batch = 0;
  int channels = 0;  // 0 marks rank 2
  int length = 0;    // features when rank 2

  static Shape rank3(int b, int c, int l) { return {b, c, l}; }
  static Shape rank2(int b, int f) { return {b, 0, f}; }
  static Shape scalar() { return {1, 0, 1}; }

  bool is_rank3() const { return channels > 0; }
  int features() const { return is_rank3() ? channels * length : length; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

class Graph;

// Cheap handle into a Graph node.
struct Tensor {
  Graph* graph = nullptr;
  int node = -1;
};

// Eager single-use computation tape. Ops compute values immediately and
// record a backward closure; creation order is the topological order.
// Deterministic: identical inputs produce bit-identical values and gradients.
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor input(const Shape& shape, Eigen::MatrixXd storage);
  // Binds a ParamStore entry (copying its current value). Repeated binds of
  // the same name return the same node, so weight sharing is structural.
  Tensor param(ParamStore& store, const std::string& name, bool trainable = true);

  const Eigen::MatrixXd& value(Tensor t) const;
  const Shape& shape(Tensor t) const;
  double scalar(Tensor t) const;

  void backward(Tensor loss);
  const Eigen::MatrixXd& grad(Tensor t) const;
  // Gradients accumulated per bound parameter name (trainable params only).
  GradMap param_grads() const;

  // --- internal plumbing used by the op implementations ---
  int add_node(const Shape& shape, Eigen::MatrixXd value, std::vector<int> parents,
               std::function<void(Graph&, int)> backward_fn, const char* op_name);
  bool requires_grad(int node) const { return nodes_[node].requires_grad; }
  Eigen::MatrixXd& grad_ref(int node) { return nodes_[node].grad; }
  const Eigen::MatrixXd& value_ref(int node) const { return nodes_[node].value; }
  const Shape& shape_ref(int node) const { return nodes_[node].shape; }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Shape shape;
    Eigen::MatrixXd grad;
    std::vector<int> parents;
    std::function<void(Graph&, int)> backward_fn;
    std::string param_name;  // nonempty for bound parameters
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::map<std::string, int> param_nodes_;
  bool backward_done_ = false;

  friend Tensor bind_param_node(Graph&, ParamStore&, const std::string&, bool);
};

// ---- kernels -------------------------------------------------------------

// Same-length 1D cross-correlation, zero padding (k-1)/2 per side. Weight
// storage (c_in*k, c_out) with row index ci*k + j; bias (1, c_out).
Tensor conv1d_same(Tensor x, Tensor w, Tensor bias, int k);

// Window max with stride k; the trailing L mod k elements are dropped.
// Backward routes to the first argmax of each window.
Tensor maxpool1d(Tensor x, int k);

// x (b, f_in) * W^T + bias with W stored (f_out, f_in), bias (1, f_out).
Tensor dense(Tensor x, Tensor W, Tensor bias);

Tensor relu(Tensor x);
Tensor add(Tensor a, Tensor b);
Tensor flatten(Tensor x);            // rank 3 -> rank 2
Tensor scale(Tensor x, double c);
Tensor sum(Tensor x);                // scalar: sum of all elements

// Reinterprets a (batch*length, channels) rank-2 tensor as rank 3; the
// storage layouts coincide, so this is a pure metadata view.
Tensor as_rank3(Tensor x, int batch, int channels, int length);

// Mean of squared element differences (both sides differentiable).
Tensor mse_loss(Tensor a, Tensor b);

// Mean over rows of -log softmax(row)[target]; stabilized by max-subtraction.
Tensor softmax_ce(Tensor logits, const std::vector<int>& targets);

// Rows mapped through the fixed matrix: out_row = (M * z_row^T)^T. M gets no
// gradient; per-row GEMV keeps the forward bit-identical to mix().
Tensor fixed_linear(Tensor z, const Eigen::MatrixXd& M);

// (1/b) * sum_i (z(i, col) - targets[i])^2
Tensor index_sq_err(Tensor z, int col, const Eigen::VectorXd& targets);

// Rows scaled to unit L2 norm; all-zero rows pass through unchanged.
Tensor l2_normalize_rows(Tensor z);

// sum_i [ L_i * exp(-2 s_i) / 2 ] + sum_i s_i  with s_i = log sigma_i.
Tensor homoscedastic(const std::vector<Tensor>& task_losses,
                     const std::vector<Tensor>& log_sigmas);

// Plain-number variant for direct evaluation in reports and tests.
double homoscedastic_loss(const std::vector<double>& task_losses,
                          const std::vector<double>& log_sigmas);

}  // namespace luxmix::nn
