#pragma once

// Reverse-mode autodiff over small dense double tensors. Values live in flat
// row-major storage; 2-D ops map onto Eigen. The graph is a tape of
// shared_ptr nodes with per-node backward closures; Tensor is a cheap handle.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace rpt {

using Shape = std::vector<int>;

namespace detail {
struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  Eigen::VectorXd value;
  Eigen::VectorXd grad;   // lazily sized
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;  // accumulates into parents' grads

  Eigen::VectorXd& ensure_grad() {
    if (grad.size() != value.size()) grad = Eigen::VectorXd::Zero(value.size());
    return grad;
  }
};
}  // namespace detail

/// When false, ops do not record the tape (inference mode).
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev); }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor from(Shape shape, const Eigen::VectorXd& data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  long size() const { return node_->value.size(); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  const Eigen::VectorXd& value() const { return node_->value; }
  Eigen::VectorXd& mutable_value() { return node_->value; }
  const Eigen::VectorXd& grad() const;
  bool requires_grad() const { return node_->requires_grad; }

  double item() const { return node_->value[0]; }
  double at(long i) const { return node_->value[i]; }

  /// Copy of the value with no graph attached.
  Tensor detach() const;
  /// Same data viewed under a different shape (copies; identity backward).
  Tensor reshape(Shape shape) const;

  /// Seed d(self)=1 and run the tape backwards. Scalar tensors only.
  void backward() const;
  void zero_grad();

  // 2-D views (row-major flat storage).
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  mat() const;

  detail::NodePtr node() const { return node_; }
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

 private:
  detail::NodePtr node_;
};

// ---- elementwise (shapes equal, or one operand scalar-sized for broadcast) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
/// Elementwise product with a constant (no-grad) coefficient array.
Tensor mul_const(const Tensor& a, const Eigen::VectorXd& c);
/// Elementwise sum with a constant array (e.g. additive attention masks).
Tensor add_const(const Tensor& a, const Eigen::VectorXd& c);
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [N,C] -> [1,C] column means (GAP over the token axis).
Tensor row_mean(const Tensor& a);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);   // [m,k]x[k,n]
Tensor transpose(const Tensor& a);                 // [m,n]->[n,m]
/// y = x W^T + b with x:[N,Cin], W:[Cout,Cin], b:[Cout] -> [N,Cout]
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);

// ---- shape-structured ops ----
Tensor softmax_rows(const Tensor& a);              // [N,M], softmax per row
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);              // x:[N,C], per-row
Tensor col_slice(const Tensor& a, int c0, int len);   // [N,C] -> [N,len]
Tensor col_concat(const std::vector<Tensor>& parts); // inverse of col_slice
/// input:[Cin,H,W], weight:[Cout, Cin*kh*kw], bias:[Cout]
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int kh, int kw, int stride, int pad, int dilation = 1);
/// x:[H,W] -> [H2,W2], align-corners bilinear; exact for H2==H,W2==W.
Tensor upsample_bilinear(const Tensor& x, int h2, int w2);

/// Throws NumericError naming `stage` if any value is non-finite.
void check_finite(const Tensor& t, const std::string& stage);

}  // namespace rpt
