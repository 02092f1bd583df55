#include "vlogger/evalkit.hpp"

#include <cmath>

#include <json.hpp>

#include "vlogger/errors.hpp"

namespace vlogger {

FeatureSet fit_features(const Tensor& rows) {
  if (rows.rank() != 2) throw ShapeError("fit_features: rows must be rank-2");
  Index n = rows.shape[0], d = rows.shape[1];
  if (n < 2) throw DomainError("fit_features: need at least 2 samples");
  FeatureSet fs;
  fs.n = n;
  auto m = rows.mat();
  fs.mean = m.colwise().mean().transpose();
  Eigen::MatrixXd centered = m.rowwise() - fs.mean.transpose();
  fs.cov = centered.transpose() * centered / double(n - 1);
  (void)d;
  return fs;
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  if (a.mean.size() != b.mean.size())
    throw ShapeError("frechet_distance: dimension mismatch");
  Index d = a.mean.size();
  const double eps = 1e-6;
  Eigen::MatrixXd sa = a.cov + eps * Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd sb = b.cov + eps * Eigen::MatrixXd::Identity(d, d);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esa(sa);
  if (esa.info() != Eigen::Success)
    throw NumericalError("frechet_distance: eigendecomposition of Sa failed");
  Eigen::VectorXd ev = esa.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd sa_half = esa.eigenvectors() *
                            ev.cwiseSqrt().asDiagonal() *
                            esa.eigenvectors().transpose();

  // tr((Sa Sb)^(1/2)) = tr((Sa^(1/2) Sb Sa^(1/2))^(1/2)), and the inner
  // product is symmetric PSD, so a self-adjoint solver suffices.
  Eigen::MatrixXd inner = sa_half * sb * sa_half;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esi(inner);
  if (esi.info() != Eigen::Success)
    throw NumericalError("frechet_distance: matrix square root failed");
  double tr_sqrt = esi.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  double mean_term = (a.mean - b.mean).squaredNorm();
  double value = mean_term + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  if (!std::isfinite(value))
    throw NumericalError("frechet_distance: non-finite result");
  return value;
}

namespace {

double mean_cosine(const Tensor& query, const Tensor& frame_embs,
                   const char* what) {
  if (query.rank() != 2 || query.shape[0] != 1)
    throw ShapeError(std::string(what) + ": query must be [1 x d]");
  if (frame_embs.rank() != 2 || frame_embs.shape[1] != query.shape[1])
    throw ShapeError(std::string(what) + ": dimension mismatch");
  Index n = frame_embs.shape[0], d = query.shape[1];
  Eigen::VectorXd q = query.mat(1, d).row(0).transpose();
  double qn = q.norm();
  if (qn == 0.0) throw DomainError(std::string(what) + ": zero query vector");
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    Eigen::VectorXd f = frame_embs.mat().row(i).transpose();
    double fn = f.norm();
    if (fn == 0.0)
      throw DomainError(std::string(what) + ": zero frame vector");
    acc += q.dot(f) / (qn * fn);
  }
  return acc / double(n);
}

}  // namespace

double cosine_text_video(const Tensor& text_emb, const Tensor& frame_embs) {
  return mean_cosine(text_emb, frame_embs, "cosine_text_video");
}

double cosine_image_video(const Tensor& ref_emb, const Tensor& frame_embs) {
  return mean_cosine(ref_emb, frame_embs, "cosine_image_video");
}

double psnr(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "psnr");
  double mse = (a.data - b.data).square().mean();
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

std::string metric_report(const std::string& metric, double value,
                          Index n_samples, const std::string& embedder_id,
                          std::uint64_t seed) {
  nlohmann::json j = {{"metric", metric},
                      {"value", value},
                      {"n_samples", n_samples},
                      {"embedder_id", embedder_id},
                      {"seed", seed}};
  return j.dump(2);
}

}  // namespace vlogger
