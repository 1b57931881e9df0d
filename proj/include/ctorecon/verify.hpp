#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ctorecon::verify {

/// One measured property against a fixed threshold.
struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool lowerIsBetter = true;  // pass iff value < threshold, else value >= threshold
  bool pass = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;
  bool passed() const;
};

/// adjoint, equivariance, slice, disco, gradcheck.
const std::vector<std::string>& suite_names();

/// Runs one suite ("all" is not accepted here; see run_suites).
SuiteReport run_suite(const std::string& name);
/// Expands "all" to every suite.
std::vector<SuiteReport> run_suites(const std::string& name);

void write_report(std::ostream& os, const std::vector<SuiteReport>& reports);

// Individual checks, shared with the acceptance runner.

/// Max relative dot-product error of the projector over `pairs` random pairs
/// at 64x64 / 45 views / 96 detectors.
Check projector_adjoint(std::size_t pairs = 20);
/// <P x, y> = <x, P^T y> for each linear tape primitive.
std::vector<Check> primitive_adjoints();
/// p(theta + pi, r) = p(theta, -r) on Shepp-Logan over [0, 2pi).
Check pi_flip();
/// Gaussian blob (sigma 8 px, 128x128) over |omega| <= 0.25 Nyquist.
Check fourier_slice_blob();
/// Off-centre blob: projection spectrum magnitudes independent of theta.
Check fourier_slice_offcentre();
/// DFT along r commutes with a permutation of theta rows.
Check dft_row_permutation();
/// Circular padding: DISCO commutes with integer shifts.
Check circular_shift_equivariance();
/// Flipped-circular theta padding with r-symmetric coefficients.
Check flipped_shift_equivariance();
/// Composed NO_s with r-symmetric coefficients, stride-aligned shifts.
Check nos_equivariance();
std::vector<Check> basis_values();
Check self_point_scaling();
Check disco_linearity();
/// eps32 / eps64 on the 32/64/128 ladder (value is the ratio).
Check resolution_convergence();
/// Central differences on 20 sampled parameters of CTO-mini.
Check cto_gradcheck(std::size_t samples = 20);
std::vector<Check> branch_gradchecks();

}  // namespace ctorecon::verify
