#include "admpc/conic.hpp"

#include <cmath>
#include <ostream>

namespace admpc {

namespace {
const double kSqrt2 = std::sqrt(2.0);
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::NumericalTrouble: return "NumericalTrouble";
  }
  return "UnknownStatus";
}

int svec_len(int d) { return d * (d + 1) / 2; }

int svec_index(int r, int c, int d) {
  // Column-major lower triangle: column c starts after c columns of
  // decreasing height d, d-1, ...
  return c * d - c * (c - 1) / 2 + (r - c);
}

VectorXd svec(const MatrixXd& M) {
  const int d = static_cast<int>(M.rows());
  VectorXd v(svec_len(d));
  for (int c = 0; c < d; ++c)
    for (int r = c; r < d; ++r) v[svec_index(r, c, d)] = (r == c) ? M(r, c) : kSqrt2 * M(r, c);
  return v;
}

MatrixXd smat(const VectorXd& v) {
  const int len = static_cast<int>(v.size());
  int d = static_cast<int>(std::round((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0));
  MatrixXd M(d, d);
  for (int c = 0; c < d; ++c)
    for (int r = c; r < d; ++r) {
      double val = v[svec_index(r, c, d)];
      if (r != c) val /= kSqrt2;
      M(r, c) = val;
      M(c, r) = val;
    }
  return M;
}

double psd_residual(const MatrixXd& M) {
  if (M.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

int ConicProblem::add_vars(int count) {
  if (count < 0) throw Error(ErrorKind::BuildError, "variable count must be nonnegative");
  int first = nvar_;
  nvar_ += count;
  c_.resize(nvar_, 0.0);
  return first;
}

void ConicProblem::add_objective(int var, double coeff) {
  if (var < 0 || var >= nvar_) throw Error(ErrorKind::BuildError, "objective variable out of range");
  c_[var] += coeff;
}

int ConicProblem::begin_block(ConeKind kind, int rows) {
  if (block_open_) throw Error(ErrorKind::BuildError, "previous block still open");
  if (kind == ConeKind::Psd) throw Error(ErrorKind::BuildError, "use begin_psd_block for PSD blocks");
  if (rows < 1) throw Error(ErrorKind::BuildError, "block needs at least one row");
  Block b;
  b.kind = kind;
  b.rows = rows;
  b.constants.assign(rows, 0.0);
  blocks_.push_back(std::move(b));
  block_open_ = true;
  return static_cast<int>(blocks_.size()) - 1;
}

int ConicProblem::begin_psd_block(int matdim) {
  if (block_open_) throw Error(ErrorKind::BuildError, "previous block still open");
  if (matdim < 1) throw Error(ErrorKind::BuildError, "PSD block needs matdim >= 1");
  Block b;
  b.kind = ConeKind::Psd;
  b.matdim = matdim;
  b.rows = svec_len(matdim);
  b.constants.assign(b.rows, 0.0);
  blocks_.push_back(std::move(b));
  block_open_ = true;
  return static_cast<int>(blocks_.size()) - 1;
}

ConicProblem::Block& ConicProblem::open_block() {
  if (!block_open_) throw Error(ErrorKind::BuildError, "no block open");
  return blocks_.back();
}

void ConicProblem::add_coeff(int row, int var, double coeff) {
  Block& b = open_block();
  if (b.kind == ConeKind::Psd) throw Error(ErrorKind::BuildError, "use add_psd_coeff on PSD blocks");
  if (row < 0 || row >= b.rows) throw Error(ErrorKind::BuildError, "row out of range");
  if (var < 0 || var >= nvar_) throw Error(ErrorKind::BuildError, "variable out of range");
  if (coeff != 0.0) b.triplets.push_back({row, var, coeff});
}

void ConicProblem::add_constant(int row, double value) {
  Block& b = open_block();
  if (b.kind == ConeKind::Psd) throw Error(ErrorKind::BuildError, "use add_psd_constant on PSD blocks");
  if (row < 0 || row >= b.rows) throw Error(ErrorKind::BuildError, "row out of range");
  b.constants[row] += value;
}

void ConicProblem::add_psd_coeff(int r, int c, int var, double coeff) {
  Block& b = open_block();
  if (b.kind != ConeKind::Psd) throw Error(ErrorKind::BuildError, "block is not PSD");
  if (c > r || c < 0 || r >= b.matdim) throw Error(ErrorKind::BuildError, "need matdim > r >= c >= 0");
  if (var < 0 || var >= nvar_) throw Error(ErrorKind::BuildError, "variable out of range");
  if (coeff == 0.0) return;
  double scale = (r == c) ? 1.0 : kSqrt2;
  b.triplets.push_back({svec_index(r, c, b.matdim), var, scale * coeff});
}

void ConicProblem::add_psd_constant(int r, int c, double value) {
  Block& b = open_block();
  if (b.kind != ConeKind::Psd) throw Error(ErrorKind::BuildError, "block is not PSD");
  if (c > r || c < 0 || r >= b.matdim) throw Error(ErrorKind::BuildError, "need matdim > r >= c >= 0");
  double scale = (r == c) ? 1.0 : kSqrt2;
  b.constants[svec_index(r, c, b.matdim)] += scale * value;
}

void ConicProblem::end_block() {
  if (!block_open_) throw Error(ErrorKind::BuildError, "no block open");
  block_open_ = false;
}

VectorXd ConicProblem::block_value(int block, const VectorXd& x) const {
  if (block < 0 || block >= static_cast<int>(blocks_.size()))
    throw Error(ErrorKind::BuildError, "block index out of range");
  if (x.size() != nvar_) throw Error(ErrorKind::DimensionMismatch, "x has wrong length");
  const Block& b = blocks_[block];
  VectorXd v = Eigen::Map<const VectorXd>(b.constants.data(), b.rows);
  for (const Triplet& t : b.triplets) v[t.row] += t.coeff * x[t.var];
  return v;
}

MatrixXd ConicProblem::psd_block_value(int block, const VectorXd& x) const {
  const Block& b = blocks_.at(block);
  if (b.kind != ConeKind::Psd) throw Error(ErrorKind::BuildError, "block is not PSD");
  return smat(block_value(block, x));
}

void ConicProblem::dump(std::ostream& os) const {
  os.precision(17);
  os << "admpc-conic 1\n";
  os << "vars " << nvar_ << "\n";
  int onnz = 0;
  for (double v : c_)
    if (v != 0.0) ++onnz;
  os << "objective " << onnz << "\n";
  for (int i = 0; i < nvar_; ++i)
    if (c_[i] != 0.0) os << i << " " << c_[i] << "\n";
  os << "blocks " << blocks_.size() << "\n";
  for (const Block& b : blocks_) {
    const char* kind = b.kind == ConeKind::Zero      ? "zero"
                       : b.kind == ConeKind::Nonneg  ? "nonneg"
                       : b.kind == ConeKind::SecondOrder ? "soc"
                                                      : "psd";
    os << "block " << kind << " " << b.rows;
    if (b.kind == ConeKind::Psd) os << " " << b.matdim;
    os << "\n";
    int cnnz = 0;
    for (double v : b.constants)
      if (v != 0.0) ++cnnz;
    os << "const " << cnnz << "\n";
    for (int r = 0; r < b.rows; ++r)
      if (b.constants[r] != 0.0) os << r << " " << b.constants[r] << "\n";
    os << "coeff " << b.triplets.size() << "\n";
    for (const Triplet& t : b.triplets) os << t.row << " " << t.var << " " << t.coeff << "\n";
  }
}

}  // namespace admpc
