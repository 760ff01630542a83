#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stjm/gmrf.hpp"
#include "stjm/graph.hpp"
#include "stjm/hyper.hpp"
#include "stjm/panel.hpp"
#include "stjm/sparse.hpp"

namespace stjm {

// Block offsets of the latent field: U (2 per loan), beta1, beta2, nu0, v,
// u (spatial variants), delta (M3). Predictors are linear maps over these
// blocks rather than augmented latent variables.
struct LatentLayout {
  int n_loans = 0;
  int n_covariates = 0;
  int T = 0;
  int A = 0;
  bool has_survival = true;
  bool has_u = false;
  bool has_delta = false;

  int off_U = 0;
  int off_beta1 = 0;
  int off_beta2 = -1;
  int off_nu0 = -1;
  int off_v = -1;
  int off_u = -1;
  int off_delta = -1;
  int dim = 0;

  int u0(int loan) const { return off_U + 2 * loan; }
  int u1(int loan) const { return off_U + 2 * loan + 1; }
  int v(int s) const { return off_v + s - 1; }              // s is 1-based
  int u(int area0) const { return off_u + area0; }
  int delta(int area0, int s) const { return off_delta + (s - 1) * A + area0; }
};

struct ModelConfig {
  double tau_f = 1e-3;
  std::vector<std::string> covariates;  // empty selects all panel covariates
  bool include_survival = true;         // off: Gaussian-only diagnostic model
  HyperPriorSettings priors;
};

struct SparseVec {
  std::vector<int> idx;
  std::vector<double> val;
  double dot(const Eigen::VectorXd& mu) const {
    double s = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) s += val[k] * mu(idx[k]);
    return s;
  }
};

// Precomputed per-row design. Survival U-block coefficients are stored as
// (1, s) and scaled by lambda at evaluation time.
struct RowDesign {
  int loan = 0;
  int s = 0;
  double y = 0.0;
  int x = 0;
  SparseVec x_static;  // nu0, beta2, v_s, [u_a], [delta_{a,s}]
};

// Separable pieces of mu' Q_prior(theta) mu, cached so hyperparameter
// updates do not rescan the latent vector.
struct PriorQuad {
  double su00 = 0.0, su01 = 0.0, su11 = 0.0;  // sums over loans of U products
  double qf = 0.0;                            // fixed-effect squared norm
  double qv = 0.0, qu = 0.0, qd = 0.0;        // structure-matrix quadratic forms
};

class ModelDefinition {
 public:
  static ModelDefinition build(std::shared_ptr<const PanelDataset> panel,
                               std::shared_ptr<const AdjacencyGraph> graph,
                               Variant variant, ModelConfig config = {});

  Variant variant() const { return variant_; }
  const LatentLayout& layout() const { return layout_; }
  const PanelDataset& panel() const { return *panel_; }
  std::shared_ptr<const PanelDataset> panel_ptr() const { return panel_; }
  const AdjacencyGraph* graph() const { return graph_.get(); }
  const ModelConfig& config() const { return config_; }
  double tau_f() const { return config_.tau_f; }
  const ConstraintSet& constraints() const { return constraints_; }
  const std::vector<Hyper>& active_hypers() const { return active_hypers_; }
  HyperMap hyper_map(HyperParams base = {}) const { return HyperMap(active_hypers_, base); }

  const SparseSymmetric& structure_v() const { return Rv_; }
  const SparseSymmetric& structure_u() const { return Ru_; }
  const SparseSymmetric& structure_delta() const { return Rdelta_; }

  const std::vector<RowDesign>& row_designs() const { return row_designs_; }
  // Covariate value of the selected design column j for a loan.
  double covariate(int loan, int j) const { return Z_(loan, j); }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  // Prior precision of the latent field: per-loan Q_U blocks, tau_f * I on
  // the fixed effects, scaled structure matrices on v, u, delta.
  SparseSymmetric assemble_precision(const HyperParams& theta) const;

  // Design rows of the two predictors at (loan, s); loan is 0-based, s is
  // the 1-based month and must lie in 1..t_i.
  std::pair<SparseVec, SparseVec> design_rows(int loan, int s, double lambda) const;

  double eta_y(const Eigen::VectorXd& mu, const RowDesign& r) const;
  double eta_x(const Eigen::VectorXd& mu, const RowDesign& r, double lambda) const;

  double log_likelihood(const Eigen::VectorXd& mu, const HyperParams& theta) const;

  PriorQuad prior_quad(const Eigen::VectorXd& mu) const;
  double prior_quad_value(const PriorQuad& q, const HyperParams& theta) const;
  // Theta-dependent normalizer of the latent prior under the intrinsic-GMRF
  // convention: rank/2 log scale terms plus fixed generalized determinants.
  double latent_prior_normalizer(const HyperParams& theta) const;
  double log_latent_prior(const Eigen::VectorXd& mu, const HyperParams& theta) const;

  int rank_v() const { return rank_v_; }
  int rank_u() const { return rank_u_; }
  int rank_delta() const { return rank_delta_; }

 private:
  Variant variant_ = Variant::M1;
  std::shared_ptr<const PanelDataset> panel_;
  std::shared_ptr<const AdjacencyGraph> graph_;
  ModelConfig config_;
  LatentLayout layout_;
  ConstraintSet constraints_;
  std::vector<Hyper> active_hypers_;
  std::vector<std::string> covariate_names_;
  Eigen::MatrixXd Z_;  // n_loans x selected covariates
  SparseSymmetric Rv_, Ru_, Rdelta_;
  std::vector<RowDesign> row_designs_;
  int rank_v_ = 0, rank_u_ = 0, rank_delta_ = 0;
  double loggdet_v_ = 0.0, loggdet_u_ = 0.0, loggdet_delta_ = 0.0;
};

// Rank and log generalized determinant with eigenvalues below
// 1e-9 * max treated as zero.
std::pair<int, double> rank_and_loggdet(const Eigen::MatrixXd& m);

double logistic(double eta);
double log1p_exp(double eta);  // log(1 + exp(eta)), overflow-safe

}  // namespace stjm
