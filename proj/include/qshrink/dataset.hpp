#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qshrink/error.hpp"

namespace qshrink {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

/// Per-column location/scale recorded when a dataset has been centered or
/// standardized; `scales` is all ones for plain centering.
struct Centering {
  VectorXd means;
  VectorXd scales;
};

/// Response vector and covariate matrix. The intercept column is never
/// stored; when `intercept` is set every fit prepends an implicit column of
/// ones, so coefficient vectors have length p + 1 with the intercept first.
struct Dataset {
  MatrixXd X;
  VectorXd y;
  std::vector<std::string> labels;
  bool intercept = true;
  std::optional<Centering> centering;

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
  Index n_coef() const { return X.cols() + (intercept ? 1 : 0); }

  void validate() const {
    if (X.rows() < 1) throw DataError("dataset needs at least one observation");
    if (X.cols() < 1) throw DataError("dataset needs at least one covariate column");
    if (y.size() != X.rows()) {
      throw DataError("response length " + std::to_string(y.size()) + " does not match " +
                      std::to_string(X.rows()) + " design rows");
    }
    if (!labels.empty() && static_cast<Index>(labels.size()) != X.cols()) {
      throw DataError("label count does not match covariate count");
    }
    if (!X.allFinite() || !y.allFinite()) throw DataError("dataset contains non-finite entries");
    if (centering && (centering->means.size() != X.cols() || centering->scales.size() != X.cols())) {
      throw DataError("centering metadata must have one entry per covariate");
    }
  }

  std::string label(Index j) const {
    if (static_cast<std::size_t>(j) < labels.size()) return labels[static_cast<std::size_t>(j)];
    return "x" + std::to_string(j + 1);
  }
};

inline Dataset make_dataset(MatrixXd X, VectorXd y, bool intercept = true,
                            std::vector<std::string> labels = {}) {
  Dataset d{std::move(X), std::move(y), std::move(labels), intercept, std::nullopt};
  if (d.labels.empty()) {
    for (Index j = 0; j < d.X.cols(); ++j) d.labels.push_back("x" + std::to_string(j + 1));
  }
  d.validate();
  return d;
}

/// Design matrix including the implicit intercept column (first) when present.
inline MatrixXd design_matrix(const Dataset& d) {
  if (!d.intercept) return d.X;
  MatrixXd Z(d.n(), d.p() + 1);
  Z.col(0).setOnes();
  Z.rightCols(d.p()) = d.X;
  return Z;
}

/// Linear predictor for a full-length coefficient vector (intercept first when present).
inline VectorXd predict(const Dataset& d, const VectorXd& beta) {
  if (beta.size() != d.n_coef()) throw DataError("coefficient length does not match dataset");
  if (d.intercept) return (d.X * beta.tail(d.p())).array() + beta(0);
  return d.X * beta;
}

inline Dataset subset_rows(const Dataset& d, std::span<const Index> rows) {
  Dataset out;
  out.X.resize(static_cast<Index>(rows.size()), d.p());
  out.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Index>(i)) = d.X.row(rows[i]);
    out.y(static_cast<Index>(i)) = d.y(rows[i]);
  }
  out.labels = d.labels;
  out.intercept = d.intercept;
  out.centering = d.centering;
  return out;
}

inline VectorXd column_means(const MatrixXd& X) { return X.colwise().mean().transpose(); }

/// Subtracts the given column means (typically training means) from every row.
inline Dataset center_by(const Dataset& d, const VectorXd& means) {
  if (means.size() != d.p()) throw DataError("centering vector length does not match covariates");
  Dataset out = d;
  out.X.rowwise() -= means.transpose();
  out.centering = Centering{means, VectorXd::Ones(d.p())};
  return out;
}

/// Column selection in covariate space.
inline Dataset select_columns(const Dataset& d, std::span<const Index> cols) {
  Dataset out;
  out.X.resize(d.n(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.X.col(static_cast<Index>(j)) = d.X.col(cols[j]);
    out.labels.push_back(d.label(cols[j]));
  }
  out.y = d.y;
  out.intercept = d.intercept;
  return out;
}

/// Split of the covariate columns into a retained block (beta_1) and a
/// tested block (beta_2). Indices are 0-based covariate columns and need not
/// be contiguous. The intercept, when present, always belongs to the
/// retained block, so `keep` may be empty for intercept models.
struct PartitionSpec {
  std::vector<Index> keep;
  std::vector<Index> test;

  Index p1() const { return static_cast<Index>(keep.size()); }
  Index p2() const { return static_cast<Index>(test.size()); }

  void validate(Index p, bool intercept) const {
    std::vector<int> seen(static_cast<std::size_t>(p), 0);
    auto mark = [&](Index j) {
      if (j < 0 || j >= p) throw DataError("partition index " + std::to_string(j) + " out of range");
      if (seen[static_cast<std::size_t>(j)]++) {
        throw DataError("partition index " + std::to_string(j) + " listed twice");
      }
    };
    for (Index j : keep) mark(j);
    for (Index j : test) mark(j);
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
      throw DataError("partition must cover every covariate column");
    }
    if (test.empty()) throw DataError("partition needs at least one tested column");
    if (keep.empty() && !intercept) throw DataError("partition needs at least one retained column");
  }

  static PartitionSpec from_keep(Index p, std::vector<Index> keep) {
    std::sort(keep.begin(), keep.end());
    PartitionSpec s;
    for (Index j = 0; j < p; ++j) {
      if (std::binary_search(keep.begin(), keep.end(), j)) s.keep.push_back(j);
      else s.test.push_back(j);
    }
    return s;
  }
};

/// Positions of the two blocks inside a full coefficient vector (intercept first).
struct CoefBlocks {
  std::vector<Index> keep;
  std::vector<Index> test;
};

inline CoefBlocks coef_blocks(const PartitionSpec& part, bool intercept) {
  CoefBlocks b;
  const Index off = intercept ? 1 : 0;
  if (intercept) b.keep.push_back(0);
  for (Index j : part.keep) b.keep.push_back(j + off);
  for (Index j : part.test) b.test.push_back(j + off);
  return b;
}

inline VectorXd gather(const VectorXd& v, std::span<const Index> idx) {
  VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = v(idx[i]);
  return out;
}

inline MatrixXd gather(const MatrixXd& m, std::span<const Index> rows, std::span<const Index> cols) {
  MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) = m(rows[i], cols[j]);
  return out;
}

}  // namespace qshrink
