#pragma once

#include <string>
#include <vector>

#include "vlogger/tensor.hpp"

namespace vlogger {

struct FeatureSet {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Index n = 0;
};

// Gaussian fit of row features [n x d]; covariance uses the 1/(n-1) estimator.
FeatureSet fit_features(const Tensor& rows);

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)), computed through the
// symmetric product Sa^(1/2) Sb Sa^(1/2) after 1e-6 regularization.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

// Mean cosine similarity between one query row and each feature row.
double cosine_text_video(const Tensor& text_emb, const Tensor& frame_embs);
double cosine_image_video(const Tensor& ref_emb, const Tensor& frame_embs);

// 10 log10(1/MSE) on [0,1] frames, capped at 99 dB for identical inputs.
double psnr(const Tensor& a, const Tensor& b);

std::string metric_report(const std::string& metric, double value,
                          Index n_samples, const std::string& embedder_id,
                          std::uint64_t seed);

}  // namespace vlogger
