#include "avsd/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace avsd::nn {

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& a : arrays_) n += static_cast<std::size_t>(a.value.size());
  return n;
}

void ParamStore::zero_grads() {
  for (auto& a : arrays_) a.grad.setZero();
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& a : arrays_) sq += a.grad.squaredNorm();
  return std::sqrt(sq);
}

void ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& a : arrays_) a.grad *= s;
  }
}

bool ParamStore::grads_finite() const {
  for (const auto& a : arrays_)
    if (!a.grad.allFinite()) return false;
  return true;
}

bool ParamStore::values_finite() const {
  for (const auto& a : arrays_)
    if (!a.value.allFinite()) return false;
  return true;
}

int Tape::input(Vec v) {
  Node n;
  n.op = Op::input;
  n.value = std::move(v);
  return push(std::move(n));
}

int Tape::zeros(int len) {
  return input(Vec::Zero(len));
}

int Tape::lookup(int param, int row) {
  Node n;
  n.op = Op::lookup;
  n.param = param;
  n.aux = row;
  n.value = (*params_)[param].value.row(row).transpose();
  return push(std::move(n));
}

int Tape::affine(int w, int b, int x) {
  Node n;
  n.op = Op::affine;
  n.param = w;
  n.param2 = b;
  n.a = x;
  n.value = (*params_)[w].value * value(x) + (*params_)[b].value.col(0);
  return push(std::move(n));
}

int Tape::matvec(int w, int x) {
  Node n;
  n.op = Op::matvec;
  n.param = w;
  n.a = x;
  n.value = (*params_)[w].value * value(x);
  return push(std::move(n));
}

int Tape::tanh_(int x) {
  Node n;
  n.op = Op::tanh_;
  n.a = x;
  n.value = value(x).array().tanh();
  return push(std::move(n));
}

int Tape::sigmoid_(int x) {
  Node n;
  n.op = Op::sigmoid_;
  n.a = x;
  n.value = 1.0 / (1.0 + (-value(x).array()).exp());
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  Node n;
  n.op = Op::add;
  n.a = a;
  n.b = b;
  n.value = value(a) + value(b);
  return push(std::move(n));
}

int Tape::add_many(const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("add_many: empty list");
  Node n;
  n.op = Op::add_many;
  n.list = xs;
  n.value = value(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) n.value += value(xs[i]);
  return push(std::move(n));
}

int Tape::cmul(int a, int b) {
  Node n;
  n.op = Op::cmul;
  n.a = a;
  n.b = b;
  n.value = value(a).cwiseProduct(value(b));
  return push(std::move(n));
}

int Tape::slice(int x, int offset, int len) {
  Node n;
  n.op = Op::slice;
  n.a = x;
  n.aux = offset;
  n.value = value(x).segment(offset, len);
  return push(std::move(n));
}

int Tape::concat(const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: empty list");
  Node n;
  n.op = Op::concat;
  n.list = xs;
  Eigen::Index total = 0;
  for (int x : xs) total += value(x).size();
  n.value.resize(total);
  Eigen::Index off = 0;
  for (int x : xs) {
    n.value.segment(off, value(x).size()) = value(x);
    off += value(x).size();
  }
  return push(std::move(n));
}

int Tape::dot(int a, int b) {
  Node n;
  n.op = Op::dot;
  n.a = a;
  n.b = b;
  n.value.resize(1);
  n.value[0] = value(a).dot(value(b));
  return push(std::move(n));
}

int Tape::softmax(int x) {
  Node n;
  n.op = Op::softmax;
  n.a = x;
  const Vec& v = value(x);
  const double m = v.maxCoeff();
  n.value = (v.array() - m).exp();
  n.value /= n.value.sum();
  return push(std::move(n));
}

int Tape::weighted_sum(int weights, const std::vector<int>& memory) {
  if (memory.empty()) throw std::invalid_argument("weighted_sum: empty memory");
  if (size(weights) != static_cast<int>(memory.size()))
    throw std::invalid_argument("weighted_sum: weights/memory size mismatch");
  Node n;
  n.op = Op::weighted_sum;
  n.a = weights;
  n.list = memory;
  const Vec& w = value(weights);
  n.value = Vec::Zero(value(memory[0]).size());
  for (std::size_t i = 0; i < memory.size(); ++i)
    n.value += w[static_cast<Eigen::Index>(i)] * value(memory[i]);
  return push(std::move(n));
}

int Tape::pick_neg_log_softmax(int logits, int target) {
  Node n;
  n.op = Op::pnls;
  n.a = logits;
  n.aux = target;
  const Vec& v = value(logits);
  const double m = v.maxCoeff();
  Vec e = (v.array() - m).exp();
  const double z = e.sum();
  n.cache = e / z;  // probabilities, reused in backward
  n.value.resize(1);
  n.value[0] = -(v[target] - m - std::log(z));
  return push(std::move(n));
}

int Tape::scale(int x, double s) {
  Node n;
  n.op = Op::scale;
  n.a = x;
  n.caux = s;
  n.value = s * value(x);
  return push(std::move(n));
}

int Tape::mean_of(const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty list");
  Node n;
  n.op = Op::mean_of;
  n.list = xs;
  n.value = value(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) n.value += value(xs[i]);
  n.value /= static_cast<double>(xs.size());
  return push(std::move(n));
}

void Tape::backward(int loss) {
  if (size(loss) != 1) throw std::invalid_argument("backward: loss must be scalar");
  for (auto& n : nodes_) n.grad = Vec::Zero(n.value.size());
  nodes_[static_cast<std::size_t>(loss)].grad[0] = 1.0;

  for (int idx = static_cast<int>(nodes_.size()) - 1; idx >= 0; --idx) {
    Node& n = nodes_[static_cast<std::size_t>(idx)];
    if (n.grad.isZero(0.0)) continue;
    auto& g = n.grad;
    switch (n.op) {
      case Op::input:
        break;
      case Op::lookup:
        (*params_)[n.param].grad.row(n.aux) += g.transpose();
        break;
      case Op::affine: {
        auto& W = (*params_)[n.param];
        auto& b = (*params_)[n.param2];
        W.grad.noalias() += g * value(n.a).transpose();
        b.grad.col(0) += g;
        nodes_[static_cast<std::size_t>(n.a)].grad.noalias() += W.value.transpose() * g;
        break;
      }
      case Op::matvec: {
        auto& W = (*params_)[n.param];
        W.grad.noalias() += g * value(n.a).transpose();
        nodes_[static_cast<std::size_t>(n.a)].grad.noalias() += W.value.transpose() * g;
        break;
      }
      case Op::tanh_:
        nodes_[static_cast<std::size_t>(n.a)].grad.array() +=
            g.array() * (1.0 - n.value.array().square());
        break;
      case Op::sigmoid_:
        nodes_[static_cast<std::size_t>(n.a)].grad.array() +=
            g.array() * n.value.array() * (1.0 - n.value.array());
        break;
      case Op::add:
        nodes_[static_cast<std::size_t>(n.a)].grad += g;
        nodes_[static_cast<std::size_t>(n.b)].grad += g;
        break;
      case Op::add_many:
        for (int x : n.list) nodes_[static_cast<std::size_t>(x)].grad += g;
        break;
      case Op::cmul:
        nodes_[static_cast<std::size_t>(n.a)].grad.array() += g.array() * value(n.b).array();
        nodes_[static_cast<std::size_t>(n.b)].grad.array() += g.array() * value(n.a).array();
        break;
      case Op::slice:
        nodes_[static_cast<std::size_t>(n.a)].grad.segment(n.aux, n.value.size()) += g;
        break;
      case Op::concat: {
        Eigen::Index off = 0;
        for (int x : n.list) {
          auto& xg = nodes_[static_cast<std::size_t>(x)].grad;
          xg += g.segment(off, xg.size());
          off += xg.size();
        }
        break;
      }
      case Op::dot:
        nodes_[static_cast<std::size_t>(n.a)].grad += g[0] * value(n.b);
        nodes_[static_cast<std::size_t>(n.b)].grad += g[0] * value(n.a);
        break;
      case Op::softmax: {
        // dx = y .* (g - (y . g))
        const double yd = n.value.dot(g);
        nodes_[static_cast<std::size_t>(n.a)].grad.array() +=
            n.value.array() * (g.array() - yd);
        break;
      }
      case Op::weighted_sum: {
        const Vec& w = value(n.a);
        auto& wg = nodes_[static_cast<std::size_t>(n.a)].grad;
        for (std::size_t i = 0; i < n.list.size(); ++i) {
          wg[static_cast<Eigen::Index>(i)] += g.dot(value(n.list[i]));
          nodes_[static_cast<std::size_t>(n.list[i])].grad +=
              w[static_cast<Eigen::Index>(i)] * g;
        }
        break;
      }
      case Op::pnls: {
        Vec d = n.cache;
        d[n.aux] -= 1.0;
        nodes_[static_cast<std::size_t>(n.a)].grad += g[0] * d;
        break;
      }
      case Op::scale:
        nodes_[static_cast<std::size_t>(n.a)].grad += n.caux * g;
        break;
      case Op::mean_of: {
        const double s = 1.0 / static_cast<double>(n.list.size());
        for (int x : n.list) nodes_[static_cast<std::size_t>(x)].grad += s * g;
        break;
      }
    }
  }
}

void init_uniform(Mat& m, Rng& rng, double scale) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-scale, scale);
}

}  // namespace avsd::nn
