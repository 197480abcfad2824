#include "rpt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "rpt/errors.hpp"

namespace rpt {

using detail::Node;
using detail::NodePtr;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

namespace {

thread_local bool g_grad_enabled = true;

long numel(const Shape& s) {
  long n = 1;
  for (int d : s) n *= d;
  return n;
}

NodePtr make_leaf(Shape shape, Eigen::VectorXd v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

bool track(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs)
    if (t->node()->requires_grad) return true;
  return false;
}

Tensor make_op(Shape shape, Eigen::VectorXd v, std::vector<NodePtr> parents,
               std::function<void(Node&)> bw, bool tracked) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(v);
  if (tracked) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  return Tensor(n);
}

// rows*cols view helpers for 2-D nodes
std::pair<long, long> dims2(const Node& n) {
  return {n.shape[0], n.shape.size() > 1 ? numel(n.shape) / n.shape[0] : 1};
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  long n = numel(shape);
  return Tensor(make_leaf(std::move(shape), Eigen::VectorXd::Zero(n), requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  long n = numel(shape);
  return Tensor(make_leaf(std::move(shape), Eigen::VectorXd::Constant(n, v), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<long>(data.size()));
  if (numel(shape) != v.size()) throw ParameterError("Tensor::from: shape/data size mismatch");
  return Tensor(make_leaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from(Shape shape, const Eigen::VectorXd& data, bool requires_grad) {
  if (numel(shape) != data.size()) throw ParameterError("Tensor::from: shape/data size mismatch");
  return Tensor(make_leaf(std::move(shape), data, requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return full({1, 1}, v, requires_grad);
}

const Eigen::VectorXd& Tensor::grad() const { return node_->ensure_grad(); }

Tensor Tensor::detach() const {
  return Tensor(make_leaf(node_->shape, node_->value, false));
}

Tensor Tensor::reshape(Shape shape) const {
  if (numel(shape) != size()) throw ParameterError("reshape: element count mismatch");
  NodePtr p = node_;
  return make_op(std::move(shape), node_->value, {p},
                 [p](Node& self) { p->ensure_grad() += self.grad; },
                 track({this}));
}

void Tensor::zero_grad() { node_->ensure_grad().setZero(); }

Eigen::Map<const RowMat> Tensor::mat() const {
  auto [r, c] = dims2(*node_);
  return CMatMap(node_->value.data(), r, c);
}

void Tensor::backward() const {
  if (size() != 1) throw ParameterError("backward() requires a scalar tensor");
  // post-order DFS, then reverse sweep
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->grad.size() == n->value.size() ? void() : void(n->ensure_grad());
      n->backward_fn(*n);
    }
  }
}

// ---------------------------------------------------------------- elementwise

namespace {

enum class BinOp { Add, Sub, Mul, Div };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  NodePtr na = a.node(), nb = b.node();
  const bool as = na->value.size() == 1, bs = nb->value.size() == 1;
  if (!as && !bs && na->shape != nb->shape)
    throw ParameterError("elementwise op: shape mismatch");
  const Shape& out_shape = bs ? na->shape : (as ? nb->shape : na->shape);
  long n = std::max(na->value.size(), nb->value.size());
  Eigen::VectorXd v(n);
  auto av = [&](long i) { return na->value[as ? 0 : i]; };
  auto bv = [&](long i) { return nb->value[bs ? 0 : i]; };
  for (long i = 0; i < n; ++i) {
    switch (op) {
      case BinOp::Add: v[i] = av(i) + bv(i); break;
      case BinOp::Sub: v[i] = av(i) - bv(i); break;
      case BinOp::Mul: v[i] = av(i) * bv(i); break;
      case BinOp::Div: v[i] = av(i) / bv(i); break;
    }
  }
  return make_op(out_shape, std::move(v), {na, nb},
                 [na, nb, as, bs, op, n](Node& self) {
                   auto av = [&](long i) { return na->value[as ? 0 : i]; };
                   auto bv = [&](long i) { return nb->value[bs ? 0 : i]; };
                   if (na->requires_grad) {
                     auto& ga = na->ensure_grad();
                     for (long i = 0; i < n; ++i) {
                       double d;
                       switch (op) {
                         case BinOp::Add:
                         case BinOp::Sub: d = self.grad[i]; break;
                         case BinOp::Mul: d = self.grad[i] * bv(i); break;
                         default: d = self.grad[i] / bv(i); break;
                       }
                       ga[as ? 0 : i] += d;
                     }
                   }
                   if (nb->requires_grad) {
                     auto& gb = nb->ensure_grad();
                     for (long i = 0; i < n; ++i) {
                       double d;
                       switch (op) {
                         case BinOp::Add: d = self.grad[i]; break;
                         case BinOp::Sub: d = -self.grad[i]; break;
                         case BinOp::Mul: d = self.grad[i] * av(i); break;
                         default: d = -self.grad[i] * av(i) / (bv(i) * bv(i)); break;
                       }
                       gb[bs ? 0 : i] += d;
                     }
                   }
                 },
                 track({&a, &b}));
}

Tensor unary(const Tensor& a, std::function<double(double)> f,
             std::function<double(double, double)> df /* (x, y) -> dy/dx */) {
  NodePtr na = a.node();
  Eigen::VectorXd v = na->value.unaryExpr(f);
  Eigen::VectorXd vv = v;
  return make_op(na->shape, std::move(v), {na},
                 [na, df = std::move(df), vv = std::move(vv)](Node& self) {
                   auto& ga = na->ensure_grad();
                   for (long i = 0; i < vv.size(); ++i)
                     ga[i] += self.grad[i] * df(na->value[i], vv[i]);
                 },
                 track({&a}));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Div); }

Tensor add_scalar(const Tensor& a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}
Tensor mul_scalar(const Tensor& a, double c) {
  return unary(a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}
Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }
Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}
Tensor sigmoid(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}
Tensor log_t(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}
Tensor sqrt_t(const Tensor& a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}
Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
               [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor mul_const(const Tensor& a, const Eigen::VectorXd& c) {
  NodePtr na = a.node();
  if (na->value.size() != c.size()) throw ParameterError("mul_const: size mismatch");
  Eigen::VectorXd v = na->value.cwiseProduct(c);
  return make_op(na->shape, std::move(v), {na},
                 [na, c](Node& self) { na->ensure_grad() += self.grad.cwiseProduct(c); },
                 track({&a}));
}

Tensor add_const(const Tensor& a, const Eigen::VectorXd& c) {
  NodePtr na = a.node();
  if (na->value.size() != c.size()) throw ParameterError("add_const: size mismatch");
  Eigen::VectorXd v = na->value + c;
  return make_op(na->shape, std::move(v), {na},
                 [na](Node& self) { na->ensure_grad() += self.grad; },
                 track({&a}));
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  NodePtr na = a.node();
  Eigen::VectorXd v(1);
  v[0] = na->value.sum();
  return make_op({1, 1}, std::move(v), {na},
                 [na](Node& self) { na->ensure_grad().array() += self.grad[0]; },
                 track({&a}));
}

Tensor mean(const Tensor& a) {
  NodePtr na = a.node();
  double n = static_cast<double>(na->value.size());
  Eigen::VectorXd v(1);
  v[0] = na->value.sum() / n;
  return make_op({1, 1}, std::move(v), {na},
                 [na, n](Node& self) { na->ensure_grad().array() += self.grad[0] / n; },
                 track({&a}));
}

Tensor row_mean(const Tensor& a) {
  NodePtr na = a.node();
  long rows = na->shape[0], cols = na->value.size() / rows;
  CMatMap m(na->value.data(), rows, cols);
  Eigen::VectorXd v(cols);
  Eigen::Map<Eigen::RowVectorXd>(v.data(), cols) = m.colwise().mean();
  return make_op({1, static_cast<int>(cols)}, std::move(v), {na},
                 [na, rows, cols](Node& self) {
                   MatMap g(na->ensure_grad().data(), rows, cols);
                   g.rowwise() += Eigen::Map<Eigen::RowVectorXd>(self.grad.data(), cols) /
                                  static_cast<double>(rows);
                 },
                 track({&a}));
}

// ------------------------------------------------------------ linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  NodePtr na = a.node(), nb = b.node();
  long m = na->shape[0], k = na->value.size() / m;
  long k2 = nb->shape[0], n = nb->value.size() / k2;
  if (k != k2) throw ParameterError("matmul: inner dimension mismatch");
  Eigen::VectorXd v(m * n);
  MatMap(v.data(), m, n) = CMatMap(na->value.data(), m, k) * CMatMap(nb->value.data(), k, n);
  return make_op({static_cast<int>(m), static_cast<int>(n)}, std::move(v), {na, nb},
                 [na, nb, m, k, n](Node& self) {
                   CMatMap G(self.grad.data(), m, n);
                   if (na->requires_grad)
                     MatMap(na->ensure_grad().data(), m, k) +=
                         G * CMatMap(nb->value.data(), k, n).transpose();
                   if (nb->requires_grad)
                     MatMap(nb->ensure_grad().data(), k, n) +=
                         CMatMap(na->value.data(), m, k).transpose() * G;
                 },
                 track({&a, &b}));
}

Tensor transpose(const Tensor& a) {
  NodePtr na = a.node();
  long m = na->shape[0], n = na->value.size() / m;
  Eigen::VectorXd v(m * n);
  MatMap(v.data(), n, m) = CMatMap(na->value.data(), m, n).transpose();
  return make_op({static_cast<int>(n), static_cast<int>(m)}, std::move(v), {na},
                 [na, m, n](Node& self) {
                   MatMap(na->ensure_grad().data(), m, n) +=
                       CMatMap(self.grad.data(), n, m).transpose();
                 },
                 track({&a}));
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  NodePtr nx = x.node(), nw = W.node(), nb = b.node();
  long N = nx->shape[0], cin = nx->value.size() / N;
  long cout = nw->shape[0];
  if (nw->value.size() != cout * cin || nb->value.size() != cout)
    throw ParameterError("linear: weight/bias shape mismatch");
  Eigen::VectorXd v(N * cout);
  MatMap y(v.data(), N, cout);
  y = CMatMap(nx->value.data(), N, cin) * CMatMap(nw->value.data(), cout, cin).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(nb->value.data(), cout);
  return make_op({static_cast<int>(N), static_cast<int>(cout)}, std::move(v), {nx, nw, nb},
                 [nx, nw, nb, N, cin, cout](Node& self) {
                   CMatMap G(self.grad.data(), N, cout);
                   if (nx->requires_grad)
                     MatMap(nx->ensure_grad().data(), N, cin) +=
                         G * CMatMap(nw->value.data(), cout, cin);
                   if (nw->requires_grad)
                     MatMap(nw->ensure_grad().data(), cout, cin) +=
                         G.transpose() * CMatMap(nx->value.data(), N, cin);
                   if (nb->requires_grad)
                     Eigen::Map<Eigen::RowVectorXd>(nb->ensure_grad().data(), cout) +=
                         G.colwise().sum();
                 },
                 track({&x, &W, &b}));
}

// --------------------------------------------------------- structured ops

Tensor softmax_rows(const Tensor& a) {
  NodePtr na = a.node();
  long rows = na->shape[0], cols = na->value.size() / rows;
  Eigen::VectorXd v(rows * cols);
  MatMap y(v.data(), rows, cols);
  CMatMap x(na->value.data(), rows, cols);
  for (long r = 0; r < rows; ++r) {
    // scalar std::exp: vectorized exp can return denormals for very negative
    // inputs, and additive-mask logits rely on exact underflow to zero
    double mx = x.row(r).maxCoeff();
    Eigen::RowVectorXd e(cols);
    for (long c = 0; c < cols; ++c) e[c] = std::exp(x(r, c) - mx);
    y.row(r) = e / e.sum();
  }
  Eigen::VectorXd vv = v;
  return make_op(na->shape, std::move(v), {na},
                 [na, rows, cols, vv](Node& self) {
                   CMatMap y(vv.data(), rows, cols);
                   CMatMap G(self.grad.data(), rows, cols);
                   MatMap gx(na->ensure_grad().data(), rows, cols);
                   for (long r = 0; r < rows; ++r) {
                     double dot = G.row(r).cwiseProduct(y.row(r)).sum();
                     gx.row(r) += y.row(r).cwiseProduct(G.row(r).array().matrix() -
                                                        Eigen::RowVectorXd::Constant(cols, dot));
                   }
                 },
                 track({&a}));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  NodePtr nx = x.node(), ng = gamma.node(), nb = beta.node();
  long rows = nx->shape[0], cols = nx->value.size() / rows;
  if (ng->value.size() != cols || nb->value.size() != cols)
    throw ParameterError("layer_norm: gamma/beta size mismatch");
  Eigen::VectorXd v(rows * cols);
  Eigen::VectorXd xhat(rows * cols), inv_std(rows);
  CMatMap X(nx->value.data(), rows, cols);
  MatMap Y(v.data(), rows, cols);
  MatMap XH(xhat.data(), rows, cols);
  for (long r = 0; r < rows; ++r) {
    double mu = X.row(r).mean();
    double var = (X.row(r).array() - mu).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    XH.row(r) = (X.row(r).array() - mu) * inv_std[r];
    Y.row(r) = XH.row(r).cwiseProduct(Eigen::Map<const Eigen::RowVectorXd>(ng->value.data(), cols)) +
               Eigen::Map<const Eigen::RowVectorXd>(nb->value.data(), cols);
  }
  return make_op(nx->shape, std::move(v), {nx, ng, nb},
                 [nx, ng, nb, rows, cols, xhat, inv_std](Node& self) {
                   CMatMap G(self.grad.data(), rows, cols);
                   CMatMap XH(xhat.data(), rows, cols);
                   Eigen::Map<const Eigen::RowVectorXd> gm(ng->value.data(), cols);
                   if (ng->requires_grad) {
                     Eigen::Map<Eigen::RowVectorXd> gg(ng->ensure_grad().data(), cols);
                     for (long r = 0; r < rows; ++r) gg += G.row(r).cwiseProduct(XH.row(r));
                   }
                   if (nb->requires_grad) {
                     Eigen::Map<Eigen::RowVectorXd> gb(nb->ensure_grad().data(), cols);
                     gb += G.colwise().sum();
                   }
                   if (nx->requires_grad) {
                     MatMap gx(nx->ensure_grad().data(), rows, cols);
                     for (long r = 0; r < rows; ++r) {
                       Eigen::RowVectorXd dxh = G.row(r).cwiseProduct(gm);
                       double m1 = dxh.mean();
                       double m2 = dxh.cwiseProduct(XH.row(r)).mean();
                       gx.row(r) += inv_std[r] *
                                    (dxh.array() - m1 - XH.row(r).array() * m2).matrix();
                     }
                   }
                 },
                 track({&x, &gamma, &beta}));
}

Tensor col_slice(const Tensor& a, int c0, int len) {
  NodePtr na = a.node();
  long rows = na->shape[0], cols = na->value.size() / rows;
  if (c0 < 0 || c0 + len > cols) throw ParameterError("col_slice: out of range");
  Eigen::VectorXd v(rows * len);
  MatMap(v.data(), rows, len) = CMatMap(na->value.data(), rows, cols).middleCols(c0, len);
  return make_op({static_cast<int>(rows), len}, std::move(v), {na},
                 [na, rows, cols, c0, len](Node& self) {
                   MatMap(na->ensure_grad().data(), rows, cols).middleCols(c0, len) +=
                       CMatMap(self.grad.data(), rows, len);
                 },
                 track({&a}));
}

Tensor col_concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ParameterError("col_concat: empty");
  long rows = parts[0].node()->shape[0];
  long cols = 0;
  std::vector<NodePtr> nodes;
  bool tracked = false;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    cols += p.node()->value.size() / rows;
    if (g_grad_enabled && p.node()->requires_grad) tracked = true;
  }
  Eigen::VectorXd v(rows * cols);
  MatMap Y(v.data(), rows, cols);
  long off = 0;
  for (const auto& n : nodes) {
    long w = n->value.size() / rows;
    Y.middleCols(off, w) = CMatMap(n->value.data(), rows, w);
    off += w;
  }
  return make_op({static_cast<int>(rows), static_cast<int>(cols)}, std::move(v), nodes,
                 [nodes, rows, cols](Node& self) {
                   CMatMap G(self.grad.data(), rows, cols);
                   long off = 0;
                   for (const auto& n : nodes) {
                     long w = n->value.size() / rows;
                     if (n->requires_grad)
                       MatMap(n->ensure_grad().data(), rows, w) += G.middleCols(off, w);
                     off += w;
                   }
                 },
                 tracked);
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int kh, int kw, int stride, int pad, int dilation) {
  NodePtr ni = input.node(), nw = weight.node(), nb = bias.node();
  if (ni->shape.size() != 3) throw ParameterError("conv2d: input must be [C,H,W]");
  long cin = ni->shape[0], h = ni->shape[1], w = ni->shape[2];
  long cout = nw->shape[0];
  long K = static_cast<long>(cin) * kh * kw;
  if (nw->value.size() != cout * K) throw ParameterError("conv2d: weight shape mismatch");
  long eff_kh = (kh - 1) * dilation + 1, eff_kw = (kw - 1) * dilation + 1;
  long ho = (h + 2 * pad - eff_kh) / stride + 1;
  long wo = (w + 2 * pad - eff_kw) / stride + 1;
  long P = ho * wo;

  auto col = std::make_shared<RowMat>(K, P);
  col->setZero();
  {
    CMatMap X(ni->value.data(), cin, h * w);
    long kidx = 0;
    for (long c = 0; c < cin; ++c)
      for (long dy = 0; dy < kh; ++dy)
        for (long dx = 0; dx < kw; ++dx, ++kidx) {
          for (long oy = 0; oy < ho; ++oy) {
            long iy = oy * stride - pad + dy * dilation;
            if (iy < 0 || iy >= h) continue;
            for (long ox = 0; ox < wo; ++ox) {
              long ix = ox * stride - pad + dx * dilation;
              if (ix < 0 || ix >= w) continue;
              (*col)(kidx, oy * wo + ox) = X(c, iy * w + ix);
            }
          }
        }
  }
  Eigen::VectorXd v(cout * P);
  MatMap Y(v.data(), cout, P);
  Y = CMatMap(nw->value.data(), cout, K) * (*col);
  Y.colwise() += Eigen::Map<const Eigen::VectorXd>(nb->value.data(), cout);

  return make_op({static_cast<int>(cout), static_cast<int>(ho), static_cast<int>(wo)},
                 std::move(v), {ni, nw, nb},
                 [ni, nw, nb, col, cin, h, w, cout, kh, kw, stride, pad, dilation, ho, wo,
                  K, P](Node& self) {
                   CMatMap G(self.grad.data(), cout, P);
                   if (nw->requires_grad)
                     MatMap(nw->ensure_grad().data(), cout, K) += G * col->transpose();
                   if (nb->requires_grad)
                     Eigen::Map<Eigen::VectorXd>(nb->ensure_grad().data(), cout) +=
                         G.rowwise().sum();
                   if (ni->requires_grad) {
                     RowMat dcol = CMatMap(nw->value.data(), cout, K).transpose() * G;
                     MatMap gX(ni->ensure_grad().data(), cin, h * w);
                     long kidx = 0;
                     for (long c = 0; c < cin; ++c)
                       for (long dy = 0; dy < kh; ++dy)
                         for (long dx = 0; dx < kw; ++dx, ++kidx)
                           for (long oy = 0; oy < ho; ++oy) {
                             long iy = oy * stride - pad + dy * dilation;
                             if (iy < 0 || iy >= h) continue;
                             for (long ox = 0; ox < wo; ++ox) {
                               long ix = ox * stride - pad + dx * dilation;
                               if (ix < 0 || ix >= w) continue;
                               gX(c, iy * w + ix) += dcol(kidx, oy * wo + ox);
                             }
                           }
                   }
                 },
                 track({&input, &weight, &bias}));
}

Tensor upsample_bilinear(const Tensor& x, int h2, int w2) {
  NodePtr nx = x.node();
  long h = nx->shape[0], w = nx->value.size() / h;
  // align-corners sampling grid
  auto coords = [](long out, long in) {
    Eigen::VectorXd c(out);
    for (long i = 0; i < out; ++i)
      c[i] = (out == 1) ? 0.0 : static_cast<double>(i) * (in - 1) / (out - 1);
    return c;
  };
  Eigen::VectorXd cy = coords(h2, h), cx = coords(w2, w);
  Eigen::VectorXd v(static_cast<long>(h2) * w2);
  struct Tap { long src; double wgt; };
  auto taps = std::make_shared<std::vector<std::array<Tap, 4>>>(v.size());
  for (long oy = 0; oy < h2; ++oy) {
    long y0 = static_cast<long>(cy[oy]);
    long y1 = std::min(y0 + 1, h - 1);
    double fy = cy[oy] - y0;
    for (long ox = 0; ox < w2; ++ox) {
      long x0 = static_cast<long>(cx[ox]);
      long x1 = std::min(x0 + 1, w - 1);
      double fx = cx[ox] - x0;
      long o = oy * w2 + ox;
      (*taps)[o] = {Tap{y0 * w + x0, (1 - fy) * (1 - fx)}, Tap{y0 * w + x1, (1 - fy) * fx},
                    Tap{y1 * w + x0, fy * (1 - fx)}, Tap{y1 * w + x1, fy * fx}};
      double s = 0;
      for (auto& t : (*taps)[o]) s += nx->value[t.src] * t.wgt;
      v[o] = s;
    }
  }
  return make_op({h2, w2}, std::move(v), {nx},
                 [nx, taps](Node& self) {
                   auto& g = nx->ensure_grad();
                   for (long o = 0; o < self.grad.size(); ++o)
                     for (auto& t : (*taps)[o]) g[t.src] += self.grad[o] * t.wgt;
                 },
                 track({&x}));
}

void check_finite(const Tensor& t, const std::string& stage) {
  if (!t.value().allFinite())
    throw NumericError("non-finite value in stage: " + stage);
}

}  // namespace rpt
