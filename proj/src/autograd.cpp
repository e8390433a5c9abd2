#include "c2m/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace c2m::ag {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("autograd: ") + what);
}

Tensor make_result(Matrix value, std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

double Tensor::item() const {
  require(rows() == 1 && cols() == 1, "item() on a non-scalar tensor");
  return value()(0, 0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& root) {
  require(root.rows() == 1 && root.cols() == 1, "backward() needs a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    if (n->grad.size() > 0) n->backward(*n);
    // Interior gradients are consumed here so a graph can be backpropagated again.
    n->grad.resize(0, 0);
  }
}

Tensor detach(const Tensor& a) { return Tensor::constant(a.value()); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul shape mismatch");
  return make_result(a.value() * b.value(), {a.node(), b.node()}, [](Node& self) {
    Node& a = parent(self, 0);
    Node& b = parent(self, 1);
    if (a.requires_grad) a.grad_buffer().noalias() += self.grad * b.value.transpose();
    if (b.requires_grad) b.grad_buffer().noalias() += a.value.transpose() * self.grad;
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.cols(), "matmul_nt shape mismatch");
  return make_result(a.value() * b.value().transpose(), {a.node(), b.node()}, [](Node& self) {
    Node& a = parent(self, 0);
    Node& b = parent(self, 1);
    if (a.requires_grad) a.grad_buffer().noalias() += self.grad * b.value;
    if (b.requires_grad) b.grad_buffer().noalias() += self.grad.transpose() * a.value;
  });
}

Tensor transpose(const Tensor& a) {
  return make_result(a.value().transpose(), {a.node()}, [](Node& self) {
    parent(self, 0).grad_buffer() += self.grad.transpose();
  });
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(x.cols() == weight.rows(), "affine input width mismatch");
  require(bias.rows() == 1 && bias.cols() == weight.cols(), "affine bias shape mismatch");
  Matrix y = x.value() * weight.value();
  y.rowwise() += bias.value().row(0);
  return make_result(std::move(y), {x.node(), weight.node(), bias.node()}, [](Node& self) {
    Node& x = parent(self, 0);
    Node& w = parent(self, 1);
    Node& b = parent(self, 2);
    if (x.requires_grad) x.grad_buffer().noalias() += self.grad * w.value.transpose();
    if (w.requires_grad) w.grad_buffer().noalias() += x.value.transpose() * self.grad;
    if (b.requires_grad) b.grad_buffer() += self.grad.colwise().sum();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  return make_result(a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).grad_buffer() += self.grad;
    if (parent(self, 1).requires_grad) parent(self, 1).grad_buffer() += self.grad;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
  return make_result(a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).grad_buffer() += self.grad;
    if (parent(self, 1).requires_grad) parent(self, 1).grad_buffer() -= self.grad;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul shape mismatch");
  return make_result(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& self) {
    Node& a = parent(self, 0);
    Node& b = parent(self, 1);
    if (a.requires_grad) a.grad_buffer() += self.grad.cwiseProduct(b.value);
    if (b.requires_grad) b.grad_buffer() += self.grad.cwiseProduct(a.value);
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.value() * s, {a.node()}, [s](Node& self) {
    parent(self, 0).grad_buffer() += self.grad * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return make_result(a.value().array() + s, {a.node()}, [](Node& self) {
    parent(self, 0).grad_buffer() += self.grad;
  });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  require(s.rows() == 1 && s.cols() == 1, "scale_by needs a 1x1 scale");
  return make_result(a.value() * s.value()(0, 0), {a.node(), s.node()}, [](Node& self) {
    Node& a = parent(self, 0);
    Node& s = parent(self, 1);
    if (a.requires_grad) a.grad_buffer() += self.grad * s.value(0, 0);
    if (s.requires_grad) s.grad_buffer()(0, 0) += self.grad.cwiseProduct(a.value).sum();
  });
}

Tensor reciprocal(const Tensor& a) {
  return make_result(a.value().cwiseInverse(), {a.node()}, [](Node& self) {
    Node& a = parent(self, 0);
    a.grad_buffer().array() -= self.grad.array() * self.value.array().square();
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return make_result(a.value().cwiseMax(lo).cwiseMin(hi), {a.node()}, [lo, hi](Node& self) {
    Node& a = parent(self, 0);
    auto inside = (a.value.array() >= lo && a.value.array() <= hi).cast<double>();
    a.grad_buffer().array() += self.grad.array() * inside;
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row shape mismatch");
  Matrix y = a.value();
  y.rowwise() += row.value().row(0);
  return make_result(std::move(y), {a.node(), row.node()}, [](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).grad_buffer() += self.grad;
    if (parent(self, 1).requires_grad) parent(self, 1).grad_buffer() += self.grad.colwise().sum();
  });
}

Tensor elu(const Tensor& a) {
  Matrix y = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  return make_result(std::move(y), {a.node()}, [](Node& self) {
    Node& a = parent(self, 0);
    auto d = a.value.unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
    a.grad_buffer().array() += self.grad.array() * d.array();
  });
}

Tensor relu(const Tensor& a) {
  return make_result(a.value().cwiseMax(0.0), {a.node()}, [](Node& self) {
    Node& a = parent(self, 0);
    a.grad_buffer().array() += self.grad.array() * (a.value.array() > 0.0).cast<double>();
  });
}

Tensor exp(const Tensor& a) {
  return make_result(a.value().array().exp().matrix(), {a.node()}, [](Node& self) {
    parent(self, 0).grad_buffer().array() += self.grad.array() * self.value.array();
  });
}

Tensor log_clamped(const Tensor& a, double floor) {
  Matrix y = a.value().cwiseMax(floor).array().log().matrix();
  return make_result(std::move(y), {a.node()}, [floor](Node& self) {
    Node& a = parent(self, 0);
    auto live = (a.value.array() > floor).cast<double>();
    a.grad_buffer().array() += self.grad.array() * live / a.value.array().max(floor);
  });
}

namespace {

Matrix row_log_softmax(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    y.row(i) = x.row(i).array() - lse;
  }
  return y;
}

}  // namespace

Tensor softmax_rows(const Tensor& a) {
  Matrix y = row_log_softmax(a.value()).array().exp().matrix();
  return make_result(std::move(y), {a.node()}, [](Node& self) {
    const Matrix& y = self.value;
    Eigen::VectorXd dots = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix gx = self.grad;
    gx.colwise() -= dots;
    parent(self, 0).grad_buffer() += gx.cwiseProduct(y);
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  return make_result(row_log_softmax(a.value()), {a.node()}, [](Node& self) {
    Matrix p = self.value.array().exp().matrix();
    Eigen::VectorXd gsum = self.grad.rowwise().sum();
    Matrix gx = self.grad;
    for (Eigen::Index i = 0; i < gx.rows(); ++i) gx.row(i) -= gsum(i) * p.row(i);
    parent(self, 0).grad_buffer() += gx;
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm gamma shape");
  require(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm beta shape");
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
  }
  Matrix y = xhat;
  for (Eigen::Index i = 0; i < n; ++i) {
    y.row(i) = y.row(i).cwiseProduct(gamma.value().row(0)) + beta.value().row(0);
  }
  return make_result(std::move(y), {x.node(), gamma.node(), beta.node()},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       Node& x = parent(self, 0);
                       Node& g = parent(self, 1);
                       Node& b = parent(self, 2);
                       if (g.requires_grad) {
                         g.grad_buffer() += self.grad.cwiseProduct(xhat).colwise().sum();
                       }
                       if (b.requires_grad) b.grad_buffer() += self.grad.colwise().sum();
                       if (x.requires_grad) {
                         Matrix& gx = x.grad_buffer();
                         for (Eigen::Index i = 0; i < self.grad.rows(); ++i) {
                           RowVector dxhat = self.grad.row(i).cwiseProduct(g.value.row(0));
                           const double m1 = dxhat.mean();
                           const double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
                           gx.row(i).array() +=
                               inv_std(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2);
                         }
                       }
                     });
}

Tensor l2_normalize_rows(const Tensor& a, double eps, std::vector<Eigen::Index>* zero_rows) {
  Matrix y = a.value();
  Eigen::VectorXd norms = a.value().rowwise().norm();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    if (norms(i) < eps) {
      y.row(i).setZero();
      if (zero_rows) zero_rows->push_back(i);
    } else {
      y.row(i) /= norms(i);
    }
  }
  return make_result(std::move(y), {a.node()}, [norms = std::move(norms), eps](Node& self) {
    Matrix& ga = parent(self, 0).grad_buffer();
    for (Eigen::Index i = 0; i < self.value.rows(); ++i) {
      if (norms(i) < eps) continue;
      const double proj = self.value.row(i).dot(self.grad.row(i));
      ga.row(i) += (self.grad.row(i) - proj * self.value.row(i)) / norms(i);
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows of nothing");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows width mismatch");
    rows += p.rows();
    parents.push_back(p.node());
  }
  Matrix y(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    y.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_result(std::move(y), std::move(parents), [](Node& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const Eigen::Index r = p->value.rows();
      if (p->requires_grad) p->grad_buffer() += self.grad.middleRows(at, r);
      at += r;
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols height mismatch");
    cols += p.cols();
    parents.push_back(p.node());
  }
  Matrix y(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    y.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result(std::move(y), std::move(parents), [](Node& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const Eigen::Index c = p->value.cols();
      if (p->requires_grad) p->grad_buffer() += self.grad.middleCols(at, c);
      at += c;
    }
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows out of range");
  return make_result(a.value().middleRows(start, count), {a.node()}, [start, count](Node& self) {
    parent(self, 0).grad_buffer().middleRows(start, count) += self.grad;
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols out of range");
  return make_result(a.value().middleCols(start, count), {a.node()}, [start, count](Node& self) {
    parent(self, 0).grad_buffer().middleCols(start, count) += self.grad;
  });
}

Tensor mean_rows(const Tensor& a) {
  require(a.rows() > 0, "mean_rows of an empty tensor");
  return make_result(a.value().colwise().mean(), {a.node()}, [](Node& self) {
    Matrix& ga = parent(self, 0).grad_buffer();
    const double inv = 1.0 / static_cast<double>(ga.rows());
    ga.rowwise() += self.grad.row(0) * inv;
  });
}

Tensor sum(const Tensor& a) {
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  return make_result(std::move(y), {a.node()}, [](Node& self) {
    parent(self, 0).grad_buffer().array() += self.grad(0, 0);
  });
}

Tensor mean(const Tensor& a) {
  require(a.value().size() > 0, "mean of an empty tensor");
  Matrix y(1, 1);
  y(0, 0) = a.value().mean();
  return make_result(std::move(y), {a.node()}, [](Node& self) {
    Matrix& ga = parent(self, 0).grad_buffer();
    ga.array() += self.grad(0, 0) / static_cast<double>(ga.size());
  });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  Matrix y(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < table.rows(), "gather_rows id out of range");
    y.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  return make_result(std::move(y), {table.node()},
                     [ids = std::vector<int>(ids.begin(), ids.end())](Node& self) {
                       Matrix& g = parent(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         g.row(ids[i]) += self.grad.row(static_cast<Eigen::Index>(i));
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require(static_cast<Eigen::Index>(targets.size()) == logits.rows(),
          "cross_entropy target count mismatch");
  Matrix logp = row_log_softmax(logits.value());
  double total = 0.0;
  int valid = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0) continue;
    require(targets[i] < logits.cols(), "cross_entropy target out of range");
    total -= logp(static_cast<Eigen::Index>(i), targets[i]);
    ++valid;
  }
  Matrix y(1, 1);
  y(0, 0) = valid > 0 ? total / valid : 0.0;
  return make_result(
      std::move(y), {logits.node()},
      [logp = std::move(logp), t = std::vector<int>(targets.begin(), targets.end()),
       valid](Node& self) {
        if (valid == 0) return;
        Matrix& g = parent(self, 0).grad_buffer();
        const double s = self.grad(0, 0) / valid;
        for (std::size_t i = 0; i < t.size(); ++i) {
          if (t[i] < 0) continue;
          const auto r = static_cast<Eigen::Index>(i);
          g.row(r) += s * logp.row(r).array().exp().matrix();
          g(r, t[i]) -= s;
        }
      });
}

Tensor attention(const Tensor& queries, const Tensor& keys, const Tensor& values, int heads,
                 std::optional<Eigen::Index> causal_offset) {
  const Eigen::Index d = queries.cols();
  require(heads > 0 && d % heads == 0, "attention width must divide into heads");
  require(keys.cols() == d && values.cols() == d, "attention width mismatch");
  require(keys.rows() == values.rows() && keys.rows() > 0, "attention key/value mismatch");
  const Eigen::Index n = queries.rows();
  const Eigen::Index m = keys.rows();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  Matrix out(n, d);
  for (int h = 0; h < heads; ++h) {
    Matrix s = queries.value().middleCols(h * dh, dh) *
               keys.value().middleCols(h * dh, dh).transpose() * scale;
    if (causal_offset) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + *causal_offset + 1; j < m; ++j) {
          s(i, j) = -std::numeric_limits<double>::infinity();
        }
      }
    }
    Matrix p = row_log_softmax(s).array().exp().matrix();
    out.middleCols(h * dh, dh).noalias() = p * values.value().middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(p);
  }

  return make_result(
      std::move(out), {queries.node(), keys.node(), values.node()},
      [probs = std::move(probs), heads, dh, scale](Node& self) {
        Node& q = parent(self, 0);
        Node& k = parent(self, 1);
        Node& v = parent(self, 2);
        for (int h = 0; h < heads; ++h) {
          const Matrix& p = probs[static_cast<std::size_t>(h)];
          const auto g = self.grad.middleCols(h * dh, dh);
          if (v.requires_grad) {
            v.grad_buffer().middleCols(h * dh, dh).noalias() += p.transpose() * g;
          }
          if (!q.requires_grad && !k.requires_grad) continue;
          Matrix dp = g * v.value.middleCols(h * dh, dh).transpose();
          Eigen::VectorXd dots = dp.cwiseProduct(p).rowwise().sum();
          dp.colwise() -= dots;
          Matrix ds = p.cwiseProduct(dp) * scale;
          if (q.requires_grad) {
            q.grad_buffer().middleCols(h * dh, dh).noalias() += ds * k.value.middleCols(h * dh, dh);
          }
          if (k.requires_grad) {
            k.grad_buffer().middleCols(h * dh, dh).noalias() +=
                ds.transpose() * q.value.middleCols(h * dh, dh);
          }
        }
      });
}

Tensor select_straight_through(std::span<const Tensor> options, const Tensor& weights,
                               std::size_t chosen) {
  require(!options.empty() && chosen < options.size(), "select: chosen index out of range");
  require(weights.rows() == 1 && weights.cols() == static_cast<Eigen::Index>(options.size()),
          "select: weights must be 1 x |options|");
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& o : options) {
    require(o.rows() == options.front().rows() && o.cols() == options.front().cols(),
            "select: options must share a shape");
    parents.push_back(o.node());
  }
  parents.push_back(weights.node());
  return make_result(options[chosen].value(), std::move(parents), [chosen](Node& self) {
    const std::size_t k = self.parents.size() - 1;
    Node& w = *self.parents[k];
    for (std::size_t i = 0; i < k; ++i) {
      Node& o = *self.parents[i];
      if (i == chosen && o.requires_grad) o.grad_buffer() += self.grad;
      if (w.requires_grad) {
        w.grad_buffer()(0, static_cast<Eigen::Index>(i)) += self.grad.cwiseProduct(o.value).sum();
      }
    }
  });
}

}  // namespace c2m::ag
