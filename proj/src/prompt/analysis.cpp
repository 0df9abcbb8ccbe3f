#include "tap/prompt/analysis.hpp"

#include <Eigen/SVD>

#include <cmath>

#include "tap/core/errors.hpp"
#include "tap/tensor/ops.hpp"

namespace tap::prompt {

Tensor task_similarity(const PromptBank& bank, std::size_t layer, Slot slot, Compare what) {
  const std::size_t n = bank.task_count();
  std::vector<Tensor> rows;
  for (std::size_t t = 0; t < n; ++t) {
    const Tensor p = what == Compare::Heads ? bank.head(t, layer, slot) : bank.materialize(t, layer, slot);
    rows.push_back(reshape(p, {1, p.numel()}));
  }
  const Tensor h = concat(rows, 0);
  const Tensor unit = div(h, sqrt(sum(square(h), 1, true)));
  return matmul(unit, transpose(unit, 0, 1));
}

std::vector<std::vector<double>> similarity_matrix(const PromptBank& bank, Compare what) {
  const std::size_t n = bank.task_count();
  if (n < 2) throw ConfigError("similarity matrix needs at least two tasks");
  NoGradGuard guard;
  std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
  std::size_t count = 0;
  for (std::size_t l = 0; l < bank.layer_count(); ++l) {
    for (Slot s : bank.slots()) {
      const Tensor t = task_similarity(bank, l, s, what);
      const auto sim = t.data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i][j] += sim[i * n + j];
      ++count;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i][j] /= static_cast<double>(count);
    out[i][i] = 1.0;
  }
  // Average the two triangles so the matrix is exactly symmetric.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out[i][j] = out[j][i] = 0.5 * (out[i][j] + out[j][i]);
  return out;
}

SvdEnergy svd_energy(const Tensor& matrix) {
  if (matrix.dim() != 2) throw ShapeError("svd_energy expects a matrix, got " + shape_str(matrix.shape()));
  const auto data = matrix.data();
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError("svd_energy: non-finite entry");
  }
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const Mat> m(data.data(), static_cast<Eigen::Index>(matrix.size(0)),
                                static_cast<Eigen::Index>(matrix.size(1)));
  const Eigen::JacobiSVD<Mat> svd(m);
  SvdEnergy e;
  const auto& sv = svd.singularValues();
  double total = 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    e.singular_values.push_back(sv[i]);
    total += sv[i] * sv[i];
  }
  double run = 0.0;
  for (double s : e.singular_values) {
    run += s * s;
    e.cumulative.push_back(total > 0.0 ? run / total : 1.0);
  }
  return e;
}

}  // namespace tap::prompt
