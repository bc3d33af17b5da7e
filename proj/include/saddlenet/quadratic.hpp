#pragma once

// Convex-concave quadratic test problem on the full state
//
//   phi(x, y) = 1/2 x^T P x + p^T x + x^T K y - 1/2 y^T Q y - q^T y
//
// with x = (w, D) and y = (mu, z), P and Q positive semidefinite.

#include <saddlenet/common.hpp>
#include <saddlenet/dynamics.hpp>

#include <memory>

namespace saddlenet {

struct QuadraticSaddleData {
  Matrix P, K, Q;
  Vector p, q;
};

inline SaddleProblem make_quadratic_saddle(const SaddleDims& dims, QuadraticSaddleData data, ConvexSet w_set,
                                           ConvexSet d_set, ConvexSet mu_set, ConvexSet z_set) {
  const int nx = dims.w + dims.agents * dims.d;
  const int ny = dims.mu + dims.agents * dims.z;
  require(data.P.rows() == nx && data.P.cols() == nx, "P must be square of size |w| + N|D|");
  require(data.Q.rows() == ny && data.Q.cols() == ny, "Q must be square of size |mu| + N|z|");
  require(data.K.rows() == nx && data.K.cols() == ny, "K must be |x| by |y|");
  require(data.p.size() == nx && data.q.size() == ny, "linear terms have wrong size");
  require((data.P - data.P.transpose()).norm() <= 1e-12 * (1.0 + data.P.norm()), "P must be symmetric");
  require((data.Q - data.Q.transpose()).norm() <= 1e-12 * (1.0 + data.Q.norm()), "Q must be symmetric");
  if (nx > 0)
    require(Eigen::SelfAdjointEigenSolver<Matrix>(data.P).eigenvalues().minCoeff() >= -1e-10, "P must be PSD");
  if (ny > 0)
    require(Eigen::SelfAdjointEigenSolver<Matrix>(data.Q).eigenvalues().minCoeff() >= -1e-10, "Q must be PSD");

  auto d = std::make_shared<const QuadraticSaddleData>(std::move(data));
  auto split_x = [](const Iterate& s) {
    Vector x(s.w.size() + s.D.size());
    x << s.w, s.D;
    return x;
  };
  auto split_y = [](const Iterate& s) {
    Vector y(s.mu.size() + s.z.size());
    y << s.mu, s.z;
    return y;
  };
  const int nw = dims.w, nmu = dims.mu;

  SaddleProblem prob;
  prob.dims = dims;
  prob.w_set = std::move(w_set);
  prob.d_set = std::move(d_set);
  prob.mu_set = std::move(mu_set);
  prob.z_set = std::move(z_set);
  prob.value = [d, split_x, split_y](const Iterate& s) {
    const Vector x = split_x(s), y = split_y(s);
    return 0.5 * x.dot(d->P * x) + d->p.dot(x) + x.dot(d->K * y) - 0.5 * y.dot(d->Q * y) - d->q.dot(y);
  };
  auto gx = [d, split_x, split_y](const Iterate& s) -> Vector {
    return d->P * split_x(s) + d->p + d->K * split_y(s);
  };
  auto gy = [d, split_x, split_y](const Iterate& s) -> Vector {
    return d->K.transpose() * split_x(s) - d->Q * split_y(s) - d->q;
  };
  prob.grad_w = [gx, nw](const Iterate& s) -> Vector { return gx(s).head(nw); };
  prob.grad_D = [gx, nw](const Iterate& s) -> Vector {
    const Vector g = gx(s);
    return g.tail(g.size() - nw);
  };
  prob.grad_mu = [gy, nmu](const Iterate& s) -> Vector { return gy(s).head(nmu); };
  prob.grad_z = [gy, nmu](const Iterate& s) -> Vector {
    const Vector g = gy(s);
    return g.tail(g.size() - nmu);
  };
  return prob;
}

}  // namespace saddlenet
