#include "luxmix/nn/graph.hpp"

#include <malloc.h>

#include <cmath>
#include <mutex>

#include "luxmix/errors.hpp"

namespace luxmix::nn {

namespace {

// Graphs allocate many ~0.5 MB buffers per step; with glibc's default mmap
// threshold those go through mmap/munmap and the page faults serialize the
// worker threads. Keeping large blocks in the arenas removes that wall.
void tune_allocator_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { mallopt(M_MMAP_THRESHOLD, 256 << 20); });
}

}  // namespace

std::string to_string(const Shape& s) {
  if (s.is_rank3())
    return "(" + std::to_string(s.batch) + "," + std::to_string(s.channels) + "," +
           std::to_string(s.length) + ")";
  return "(" + std::to_string(s.batch) + "," + std::to_string(s.length) + ")";
}

namespace {

void check_storage(const Shape& s, const Eigen::MatrixXd& m, const char* who) {
  const Eigen::Index rows = s.is_rank3() ? static_cast<Eigen::Index>(s.batch) * s.length
                                         : static_cast<Eigen::Index>(s.batch);
  const Eigen::Index cols = s.is_rank3() ? s.channels : s.length;
  if (m.rows() != rows || m.cols() != cols)
    throw DimensionError(std::string(who) + ": storage does not match shape " + to_string(s));
}

}  // namespace

// ---- ParamStore ------------------------------------------------------------

ParamEntry& ParamStore::add(const std::string& name, Eigen::MatrixXd value,
                            std::vector<int> logical_shape, bool no_decay) {
  if (entries_.count(name)) throw UsageError("parameter '" + name + "' already exists");
  ParamEntry e;
  e.value = std::move(value);
  e.logical_shape = std::move(logical_shape);
  e.no_decay = no_decay;
  e.m = Eigen::MatrixXd::Zero(e.value.rows(), e.value.cols());
  e.v = Eigen::MatrixXd::Zero(e.value.rows(), e.value.cols());
  return entries_.emplace(name, std::move(e)).first->second;
}

ParamEntry& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

const ParamEntry& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

long ParamStore::total_coefficients() const {
  long n = 0;
  for (const auto& [name, e] : entries_) n += static_cast<long>(e.value.size());
  return n;
}

std::uint64_t ParamStore::value_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, e] : entries_) {
    mix_bytes(name.data(), name.size());
    mix_bytes(e.value.data(), sizeof(double) * static_cast<std::size_t>(e.value.size()));
  }
  return h;
}

// ---- Graph core ------------------------------------------------------------

Graph::Graph() { tune_allocator_once(); }

int Graph::add_node(const Shape& shape, Eigen::MatrixXd value, std::vector<int> parents,
                    std::function<void(Graph&, int)> backward_fn, const char* op_name) {
  if (!value.allFinite())
    throw NumericError(std::string("non-finite values after ") + op_name);
  Node n;
  n.value = std::move(value);
  n.shape = shape;
  n.parents = std::move(parents);
  n.backward_fn = std::move(backward_fn);
  for (int p : n.parents)
    if (nodes_[p].requires_grad) n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Graph::input(const Shape& shape, Eigen::MatrixXd storage) {
  check_storage(shape, storage, "input");
  return {this, add_node(shape, std::move(storage), {}, nullptr, "input")};
}

Tensor Graph::param(ParamStore& store, const std::string& name, bool trainable) {
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) return {this, it->second};
  const ParamEntry& e = store.at(name);
  Node n;
  n.value = e.value;
  n.shape = Shape::rank2(static_cast<int>(e.value.rows()), static_cast<int>(e.value.cols()));
  n.param_name = name;
  n.requires_grad = trainable;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(name, id);
  return {this, id};
}

const Eigen::MatrixXd& Graph::value(Tensor t) const { return nodes_.at(t.node).value; }
const Shape& Graph::shape(Tensor t) const { return nodes_.at(t.node).shape; }

double Graph::scalar(Tensor t) const {
  const Node& n = nodes_.at(t.node);
  if (n.value.size() != 1) throw UsageError("scalar() on non-scalar tensor");
  return n.value(0, 0);
}

void Graph::backward(Tensor loss) {
  if (loss.graph != this) throw UsageError("backward: tensor belongs to another graph");
  const Node& ln = nodes_.at(loss.node);
  if (ln.value.size() != 1) throw UsageError("backward: loss must be scalar");
  for (Node& n : nodes_) {
    if (n.requires_grad)
      n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    else
      n.grad.resize(0, 0);
  }
  if (!nodes_[loss.node].requires_grad) {
    backward_done_ = true;  // nothing trainable reaches the loss
    return;
  }
  nodes_[loss.node].grad(0, 0) = 1.0;
  for (int i = loss.node; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward_fn) n.backward_fn(*this, i);
  }
  backward_done_ = true;
}

const Eigen::MatrixXd& Graph::grad(Tensor t) const {
  if (!backward_done_) throw UsageError("grad() before backward()");
  const Node& n = nodes_.at(t.node);
  if (n.grad.size() == 0) throw UsageError("grad() on a node that does not require gradients");
  return n.grad;
}

GradMap Graph::param_grads() const {
  if (!backward_done_) throw UsageError("param_grads() before backward()");
  GradMap out;
  for (const auto& [name, id] : param_nodes_) {
    const Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    if (n.grad.size() == 0)
      out[name] = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    else
      out[name] = n.grad;
  }
  return out;
}

// ---- helpers ---------------------------------------------------------------

namespace {

Graph& same_graph(Tensor a, Tensor b, const char* op) {
  if (a.graph == nullptr || a.graph != b.graph)
    throw UsageError(std::string(op) + ": tensors belong to different graphs");
  return *a.graph;
}

void accumulate(Graph& g, int parent, const Eigen::MatrixXd& contribution) {
  if (g.requires_grad(parent)) g.grad_ref(parent) += contribution;
}

}  // namespace

// ---- kernels ---------------------------------------------------------------

Tensor conv1d_same(Tensor x, Tensor w, Tensor bias, int k) {
  Graph& g = same_graph(x, w, "conv1d_same");
  same_graph(x, bias, "conv1d_same");
  if (k < 1 || k % 2 == 0) throw ConfigError("conv1d_same: kernel size must be odd");
  const Shape xs = g.shape(x);
  if (!xs.is_rank3()) throw DimensionError("conv1d_same: input must be rank 3");
  const int b = xs.batch, cin = xs.channels, L = xs.length;
  const Eigen::MatrixXd& wv = g.value(w);
  if (wv.rows() != static_cast<Eigen::Index>(cin) * k)
    throw DimensionError("conv1d_same: weight rows must equal c_in*k");
  const int cout = static_cast<int>(wv.cols());
  const Eigen::MatrixXd& bv = g.value(bias);
  if (bv.rows() != 1 || bv.cols() != cout)
    throw DimensionError("conv1d_same: bias must be (1, c_out)");
  const int pad = (k - 1) / 2;

  const Eigen::MatrixXd& xv = g.value(x);
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(b) * L,
                                               static_cast<Eigen::Index>(cin) * k);
  for (int ci = 0; ci < cin; ++ci)
    for (int j = 0; j < k; ++j) {
      const int o = j - pad;
      const int len = L - std::abs(o);
      if (len <= 0) continue;
      const int dst0 = std::max(0, -o);
      const int src0 = std::max(0, o);
      for (int bi = 0; bi < b; ++bi)
        cols.col(static_cast<Eigen::Index>(ci) * k + j)
            .segment(static_cast<Eigen::Index>(bi) * L + dst0, len) =
            xv.col(ci).segment(static_cast<Eigen::Index>(bi) * L + src0, len);
    }

  Eigen::MatrixXd out = cols * wv;
  out.rowwise() += bv.row(0);

  auto backward = [xi = x.node, wi = w.node, bi_ = bias.node, cols = std::move(cols), b,
                   cin, L, k, pad](Graph& gg, int self) {
    const Eigen::MatrixXd& go = gg.grad_ref(self);
    if (gg.requires_grad(wi)) gg.grad_ref(wi) += cols.transpose() * go;
    if (gg.requires_grad(bi_)) gg.grad_ref(bi_) += go.colwise().sum();
    if (gg.requires_grad(xi)) {
      const Eigen::MatrixXd gcols = go * gg.value_ref(wi).transpose();
      Eigen::MatrixXd& gx = gg.grad_ref(xi);
      for (int ci = 0; ci < cin; ++ci)
        for (int j = 0; j < k; ++j) {
          const int o = j - pad;
          const int len = L - std::abs(o);
          if (len <= 0) continue;
          const int dst0 = std::max(0, -o);
          const int src0 = std::max(0, o);
          for (int bb = 0; bb < b; ++bb)
            gx.col(ci).segment(static_cast<Eigen::Index>(bb) * L + src0, len) +=
                gcols.col(static_cast<Eigen::Index>(ci) * k + j)
                    .segment(static_cast<Eigen::Index>(bb) * L + dst0, len);
        }
    }
  };
  return {&g, g.add_node(Shape::rank3(b, cout, L), std::move(out),
                         {x.node, w.node, bias.node}, std::move(backward), "conv1d_same")};
}

Tensor maxpool1d(Tensor x, int k) {
  Graph& g = *x.graph;
  const Shape xs = g.shape(x);
  if (!xs.is_rank3()) throw DimensionError("maxpool1d: input must be rank 3");
  if (k < 1) throw ConfigError("maxpool1d: window must be >= 1");
  if (k > xs.length) throw ConfigError("maxpool1d: window larger than input length");
  const int b = xs.batch, c = xs.channels, L = xs.length, L2 = xs.length / k;

  const Eigen::MatrixXd& xv = g.value(x);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(b) * L2, c);
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> arg(
      static_cast<Eigen::Index>(b) * L2, c);
  for (int ch = 0; ch < c; ++ch)
    for (int bi = 0; bi < b; ++bi)
      for (int t2 = 0; t2 < L2; ++t2) {
        const Eigen::Index base = static_cast<Eigen::Index>(bi) * L + t2 * k;
        double best = xv(base, ch);
        Eigen::Index best_i = base;
        for (int u = 1; u < k; ++u)
          if (xv(base + u, ch) > best) {  // strict: ties keep the first index
            best = xv(base + u, ch);
            best_i = base + u;
          }
        out(static_cast<Eigen::Index>(bi) * L2 + t2, ch) = best;
        arg(static_cast<Eigen::Index>(bi) * L2 + t2, ch) = best_i;
      }

  auto backward = [xi = x.node, arg = std::move(arg)](Graph& gg, int self) {
    if (!gg.requires_grad(xi)) return;
    const Eigen::MatrixXd& go = gg.grad_ref(self);
    Eigen::MatrixXd& gx = gg.grad_ref(xi);
    for (Eigen::Index ch = 0; ch < go.cols(); ++ch)
      for (Eigen::Index r = 0; r < go.rows(); ++r) gx(arg(r, ch), ch) += go(r, ch);
  };
  return {&g, g.add_node(Shape::rank3(b, c, L2), std::move(out), {x.node},
                         std::move(backward), "maxpool1d")};
}

Tensor dense(Tensor x, Tensor W, Tensor bias) {
  Graph& g = same_graph(x, W, "dense");
  same_graph(x, bias, "dense");
  const Shape xs = g.shape(x);
  if (xs.is_rank3()) throw DimensionError("dense: input must be rank 2");
  const Eigen::MatrixXd& Wv = g.value(W);
  const Eigen::MatrixXd& bv = g.value(bias);
  if (Wv.cols() != xs.length) throw DimensionError("dense: weight f_in mismatch");
  if (bv.rows() != 1 || bv.cols() != Wv.rows())
    throw DimensionError("dense: bias must be (1, f_out)");

  Eigen::MatrixXd out = g.value(x) * Wv.transpose();
  out.rowwise() += bv.row(0);

  auto backward = [xi = x.node, wi = W.node, bi = bias.node](Graph& gg, int self) {
    const Eigen::MatrixXd& go = gg.grad_ref(self);
    if (gg.requires_grad(wi)) gg.grad_ref(wi) += go.transpose() * gg.value_ref(xi);
    if (gg.requires_grad(bi)) gg.grad_ref(bi) += go.colwise().sum();
    if (gg.requires_grad(xi)) gg.grad_ref(xi) += go * gg.value_ref(wi);
  };
  return {&g, g.add_node(Shape::rank2(xs.batch, static_cast<int>(Wv.rows())), std::move(out),
                         {x.node, W.node, bias.node}, std::move(backward), "dense")};
}

Tensor relu(Tensor x) {
  Graph& g = *x.graph;
  Eigen::MatrixXd out = g.value(x).cwiseMax(0.0);
  auto backward = [xi = x.node](Graph& gg, int self) {
    if (!gg.requires_grad(xi)) return;
    const Eigen::MatrixXd& go = gg.grad_ref(self);
    gg.grad_ref(xi).array() += (gg.value_ref(xi).array() > 0.0).cast<double>() * go.array();
  };
  return {&g, g.add_node(g.shape(x), std::move(out), {x.node}, std::move(backward), "relu")};
}

Tensor add(Tensor a, Tensor b) {
  Graph& g = same_graph(a, b, "add");
  if (!(g.shape(a) == g.shape(b))) throw DimensionError("add: shape mismatch");
  Eigen::MatrixXd out = g.value(a) + g.value(b);
  auto backward = [ai = a.node, bi = b.node](Graph& gg, int self) {
    const Eigen::MatrixXd& go = gg.grad_ref(self);
    accumulate(gg, ai, go);
    accumulate(gg, bi, go);
  };
  return {&g, g.add_node(g.shape(a), std::move(out), {a.node, b.node}, std::move(backward),
                         "add")};
}

Tensor flatten(Tensor x) {
  Graph& g = *x.graph;
  const Shape xs = g.shape(x);
  if (!xs.is_rank3()) throw DimensionError("flatten: input must be rank 3");
  const int b = xs.batch, c = xs.channels, L = xs.length;
  const Eigen::MatrixXd& xv = g.value(x);
  Eigen::MatrixXd out(b, static_cast<Eigen::Index>(c) * L);
  for (int bi = 0; bi < b; ++bi)
    for (int ch = 0; ch < c; ++ch)
      for (int t = 0; t < L; ++t)
        out(bi, static_cast<Eigen::Index>(ch) * L + t) =
            xv(static_cast<Eigen::Index>(bi) * L + t, ch);
  auto backward = [xi = x.node, b, c, L](Graph& gg, int self) {
    if (!gg.requires_grad(xi)) return;
    const Eigen::MatrixXd& go = gg.grad_ref(self);
    Eigen::MatrixXd& gx = gg.grad_ref(xi);
    for (int bi = 0; bi < b; ++bi)
      for (int ch = 0; ch < c; ++ch)
        for (int t = 0; t < L; ++t)
          gx(static_cast<Eigen::Index>(bi) * L + t, ch) +=
              go(bi, static_cast<Eigen::Index>(ch) * L + t);
  };
  return {&g, g.add_node(Shape::rank2(b, c * L), std::move(out), {x.node},
                         std::move(backward), "flatten")};
}

Tensor as_rank3(Tensor x, int batch, int channels, int length) {
  Graph& g = *x.graph;
  const Eigen::MatrixXd& xv = g.value(x);
  if (xv.rows() != static_cast<Eigen::Index>(batch) * length || xv.cols() != channels)
    throw DimensionError("as_rank3: storage does not match the requested shape");
  auto backward = [xi = x.node](Graph& gg, int self) {
    accumulate(gg, xi, gg.grad_ref(self));
  };
  return {&g, g.add_node(Shape::rank3(batch, channels, length), xv, {x.node},
                         std::move(backward), "as_rank3")};
}

Tensor scale(Tensor x, double c) {
  Graph& g = *x.graph;
  Eigen::MatrixXd out = c * g.value(x);
  auto backward = [xi = x.node, c](Graph& gg, int self) {
    accumulate(gg, xi, c * gg.grad_ref(self));
  };
  return {&g, g.add_node(g.shape(x), std::move(out), {x.node}, std::move(backward), "scale")};
}

Tensor sum(Tensor x) {
  Graph& g = *x.graph;
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = g.value(x).sum();
  auto backward = [xi = x.node](Graph& gg, int self) {
    if (!gg.requires_grad(xi)) return;
    gg.grad_ref(xi).array() += gg.grad_ref(self)(0, 0);
  };
  return {&g, g.add_node(Shape::scalar(), std::move(out), {x.node}, std::move(backward),
                         "sum")};
}

Tensor mse_loss(Tensor a, Tensor b) {
  Graph& g = same_graph(a, b, "mse_loss");
  if (!(g.shape(a) == g.shape(b))) throw DimensionError("mse_loss: shape mismatch");
  Eigen::MatrixXd diff = g.value(a) - g.value(b);
  const double n = static_cast<double>(diff.size());
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = diff.array().square().sum() / n;
  auto backward = [ai = a.node, bi = b.node, diff = std::move(diff), n](Graph& gg, int self) {
    const double go = gg.grad_ref(self)(0, 0);
    const Eigen::MatrixXd d = (2.0 * go / n) * diff;
    accumulate(gg, ai, d);
    accumulate(gg, bi, -d);
  };
  return {&g, g.add_node(Shape::scalar(), std::move(out), {a.node, b.node},
                         std::move(backward), "mse_loss")};
}

Tensor softmax_ce(Tensor logits, const std::vector<int>& targets) {
  Graph& g = *logits.graph;
  const Shape s = g.shape(logits);
  if (s.is_rank3()) throw DimensionError("softmax_ce: logits must be rank 2");
  const int b = s.batch, K = s.length;
  if (static_cast<int>(targets.size()) != b)
    throw DimensionError("softmax_ce: one target per batch row required");
  for (int t : targets)
    if (t < 0 || t >= K) throw DimensionError("softmax_ce: target index out of range");

  const Eigen::MatrixXd& lv = g.value(logits);
  Eigen::MatrixXd P(b, K);
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    const double mx = lv.row(i).maxCoeff();
    Eigen::ArrayXd e = (lv.row(i).array() - mx).exp();
    const double Z = e.sum();
    P.row(i) = (e / Z).matrix();
    total += -(lv(i, targets[i]) - mx - std::log(Z));
  }
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = total / b;

  auto backward = [li = logits.node, P, targets, b](Graph& gg, int self) {
    if (!gg.requires_grad(li)) return;
    const double go = gg.grad_ref(self)(0, 0);
    Eigen::MatrixXd d = P;
    for (int i = 0; i < b; ++i) d(i, targets[i]) -= 1.0;
    gg.grad_ref(li) += (go / b) * d;
  };
  return {&g, g.add_node(Shape::scalar(), std::move(out), {logits.node},
                         std::move(backward), "softmax_ce")};
}

Tensor fixed_linear(Tensor z, const Eigen::MatrixXd& M) {
  Graph& g = *z.graph;
  const Shape s = g.shape(z);
  if (s.is_rank3()) throw DimensionError("fixed_linear: input must be rank 2");
  if (M.cols() != s.length) throw DimensionError("fixed_linear: matrix column mismatch");
  const int b = s.batch, m = static_cast<int>(M.rows());
  const Eigen::MatrixXd& zv = g.value(z);
  Eigen::MatrixXd out(b, m);
  // per-row GEMV so the result matches mix(B, z) bit for bit
  for (int i = 0; i < b; ++i) out.row(i) = (M * zv.row(i).transpose()).transpose();
  auto backward = [zi = z.node, M](Graph& gg, int self) {
    if (!gg.requires_grad(zi)) return;
    gg.grad_ref(zi) += gg.grad_ref(self) * M;
  };
  return {&g, g.add_node(Shape::rank2(b, m), std::move(out), {z.node}, std::move(backward),
                         "fixed_linear")};
}

Tensor index_sq_err(Tensor z, int col, const Eigen::VectorXd& targets) {
  Graph& g = *z.graph;
  const Shape s = g.shape(z);
  if (s.is_rank3()) throw DimensionError("index_sq_err: input must be rank 2");
  if (col < 0 || col >= s.length) throw DimensionError("index_sq_err: column out of range");
  if (targets.size() != s.batch)
    throw DimensionError("index_sq_err: one target per batch row required");
  const int b = s.batch;
  const Eigen::VectorXd diff = g.value(z).col(col) - targets;
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = diff.squaredNorm() / b;
  auto backward = [zi = z.node, col, diff, b](Graph& gg, int self) {
    if (!gg.requires_grad(zi)) return;
    gg.grad_ref(zi).col(col) += (2.0 * gg.grad_ref(self)(0, 0) / b) * diff;
  };
  return {&g, g.add_node(Shape::scalar(), std::move(out), {z.node}, std::move(backward),
                         "index_sq_err")};
}

Tensor l2_normalize_rows(Tensor z) {
  Graph& g = *z.graph;
  const Shape s = g.shape(z);
  if (s.is_rank3()) throw DimensionError("l2_normalize_rows: input must be rank 2");
  const Eigen::MatrixXd& zv = g.value(z);
  Eigen::MatrixXd out = zv;
  Eigen::VectorXd norms(s.batch);
  for (int i = 0; i < s.batch; ++i) {
    norms[i] = zv.row(i).norm();
    if (norms[i] > 0.0) out.row(i) /= norms[i];
  }
  auto backward = [zi = z.node, norms = std::move(norms)](Graph& gg, int self) {
    if (!gg.requires_grad(zi)) return;
    const Eigen::MatrixXd& go = gg.grad_ref(self);
    const Eigen::MatrixXd& y = gg.value_ref(self);  // the normalized rows
    Eigen::MatrixXd& gz = gg.grad_ref(zi);
    for (Eigen::Index i = 0; i < go.rows(); ++i) {
      if (norms[i] <= 0.0) continue;  // all-zero row: pass-through, zero grad
      const double dot = y.row(i).dot(go.row(i));
      gz.row(i) += (go.row(i) - dot * y.row(i)) / norms[i];
    }
  };
  return {&g, g.add_node(s, std::move(out), {z.node}, std::move(backward),
                         "l2_normalize_rows")};
}

Tensor homoscedastic(const std::vector<Tensor>& task_losses,
                     const std::vector<Tensor>& log_sigmas) {
  if (task_losses.empty() || task_losses.size() != log_sigmas.size())
    throw ConfigError("homoscedastic: task/weight count mismatch");
  Graph& g = *task_losses.front().graph;
  std::vector<int> parents;
  double total = 0.0;
  std::vector<double> Ls, ss;
  for (std::size_t i = 0; i < task_losses.size(); ++i) {
    same_graph(task_losses[i], log_sigmas[i], "homoscedastic");
    const double L = g.scalar(task_losses[i]);
    const double s = g.scalar(log_sigmas[i]);
    total += L * std::exp(-2.0 * s) / 2.0 + s;
    Ls.push_back(L);
    ss.push_back(s);
    parents.push_back(task_losses[i].node);
    parents.push_back(log_sigmas[i].node);
  }
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = total;
  auto backward = [parents, Ls, ss](Graph& gg, int self) {
    const double go = gg.grad_ref(self)(0, 0);
    for (std::size_t i = 0; i < Ls.size(); ++i) {
      const int Li = parents[2 * i], si = parents[2 * i + 1];
      const double w = std::exp(-2.0 * ss[i]);
      if (gg.requires_grad(Li)) gg.grad_ref(Li)(0, 0) += go * w / 2.0;
      if (gg.requires_grad(si)) gg.grad_ref(si)(0, 0) += go * (1.0 - Ls[i] * w);
    }
  };
  return {&g, g.add_node(Shape::scalar(), std::move(out), parents, std::move(backward),
                         "homoscedastic")};
}

double homoscedastic_loss(const std::vector<double>& task_losses,
                          const std::vector<double>& log_sigmas) {
  if (task_losses.empty() || task_losses.size() != log_sigmas.size())
    throw ConfigError("homoscedastic_loss: task/weight count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < task_losses.size(); ++i)
    total += task_losses[i] * std::exp(-2.0 * log_sigmas[i]) / 2.0 + log_sigmas[i];
  return total;
}

}  // namespace luxmix::nn
