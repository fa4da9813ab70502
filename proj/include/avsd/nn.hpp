#ifndef AVSD_NN_HPP
#define AVSD_NN_HPP

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "avsd/rng.hpp"

namespace avsd::nn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Named parameter arrays with paired gradient storage. Ids are stable
// indices handed to tape ops.
class ParamStore {
 public:
  struct Array {
    std::string name;
    Mat value;
    Mat grad;
  };

  int add(const std::string& name, int rows, int cols) {
    arrays_.push_back({name, Mat::Zero(rows, cols), Mat::Zero(rows, cols)});
    return static_cast<int>(arrays_.size()) - 1;
  }

  Array& operator[](int id) { return arrays_[static_cast<std::size_t>(id)]; }
  const Array& operator[](int id) const { return arrays_[static_cast<std::size_t>(id)]; }
  int count() const { return static_cast<int>(arrays_.size()); }
  std::vector<Array>& arrays() { return arrays_; }
  const std::vector<Array>& arrays() const { return arrays_; }

  std::size_t total_size() const;
  void zero_grads();
  double grad_norm() const;
  /// Scales all gradients so the global norm is at most max_norm.
  void clip_grad_norm(double max_norm);
  bool grads_finite() const;
  bool values_finite() const;

 private:
  std::vector<Array> arrays_;
};

// Tape of eagerly evaluated vector ops; backward() replays it in reverse and
// accumulates parameter gradients into the bound ParamStore.
class Tape {
 public:
  explicit Tape(ParamStore* params) : params_(params) {}

  int input(Vec v);
  int zeros(int n);
  int lookup(int param, int row);
  int affine(int w, int b, int x);  // W*x + b
  int matvec(int w, int x);
  int tanh_(int x);
  int sigmoid_(int x);
  int add(int a, int b);
  int add_many(const std::vector<int>& xs);
  int cmul(int a, int b);
  int slice(int x, int offset, int len);
  int concat(const std::vector<int>& xs);
  int dot(int a, int b);                                // 1-dim result
  int softmax(int x);
  int weighted_sum(int weights, const std::vector<int>& memory);
  int pick_neg_log_softmax(int logits, int target);     // 1-dim result
  int scale(int x, double s);
  int mean_of(const std::vector<int>& xs);

  const Vec& value(int node) const { return nodes_[static_cast<std::size_t>(node)].value; }
  double scalar(int node) const { return value(node)[0]; }
  int size(int node) const { return static_cast<int>(value(node).size()); }

  /// Seeds d(loss)=1 at `loss` and accumulates parameter gradients.
  void backward(int loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    input, lookup, affine, matvec, tanh_, sigmoid_, add, add_many, cmul,
    slice, concat, dot, softmax, weighted_sum, pnls, scale, mean_of
  };

  struct Node {
    Op op;
    int a = -1, b = -1;
    int param = -1, param2 = -1;
    int aux = 0;
    double caux = 0.0;
    std::vector<int> list;
    Vec value;
    Vec grad;
    Vec cache;  // softmax probs for pnls
  };

  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  ParamStore* params_;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Initializers

/// Uniform in [-scale, scale].
void init_uniform(Mat& m, Rng& rng, double scale);

}  // namespace avsd::nn

#endif
