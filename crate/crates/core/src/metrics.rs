//! Fidelity against pure targets and quantum Fisher information.

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigh, hermiticity_defect, CMatrix};
use crate::spin_algebra::{rotate_basis, OperatorMatrix, SpinState};

/// Pairs whose eigenvalue sum falls below this are dropped from the QFI sum.
pub const QFI_PAIR_CUTOFF: f64 = 1e-12;
/// Negative eigenvalues down to this size are treated as rounding noise.
pub const NEGATIVE_EIGENVALUE_TOLERANCE: f64 = 1e-10;

const HERMITIAN_TOLERANCE: f64 = 1e-8;

/// Eigenpairs of a Hermitian matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns.
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn of(matrix: &CMatrix) -> Self {
        let (eigenvalues, eigenvectors) = hermitian_eigh(matrix);
        Self { eigenvalues, eigenvectors }
    }

    pub fn reconstruct(&self) -> CMatrix {
        let v = &self.eigenvectors;
        let n = v.nrows();
        let scaled = CMatrix::from_fn(n, n, |i, j| v[(i, j)] * self.eigenvalues[j]);
        scaled * v.adjoint()
    }

    /// Clamps rounding-level negative eigenvalues to zero and renormalizes the
    /// spectrum to unit sum. Larger violations are reported as errors.
    pub fn regularize_density(&mut self) -> Result<()> {
        let min = self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -NEGATIVE_EIGENVALUE_TOLERANCE {
            return Err(Error::Positivity(min));
        }
        for v in &mut self.eigenvalues {
            *v = v.max(0.0);
        }
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return Err(Error::Numeric("density matrix has zero trace".into()));
        }
        for v in &mut self.eigenvalues {
            *v /= total;
        }
        Ok(())
    }
}

/// `<Ψ|ρ|Ψ>` for a pure target, which is the general fidelity formula
/// specialised to `|Ψ><Ψ|`.
pub fn fidelity(rho: &DensityMatrix, target: &SpinState) -> Result<f64> {
    let spin = rho.space.spin();
    if target.spin != spin || rho.matrix.nrows() != spin.dim() {
        return Err(Error::DimensionMismatch { expected: rho.matrix.nrows(), found: target.spin.dim() });
    }
    if rho.basis() != target.basis {
        return Err(Error::BasisMismatch);
    }
    let defect = hermiticity_defect(&rho.matrix);
    if defect > HERMITIAN_TOLERANCE {
        return Err(Error::NotHermitian(defect));
    }
    let psi = &target.amplitudes;
    let f = psi.dotc(&(&rho.matrix * psi)).re;
    Ok(f.clamp(0.0, 1.0))
}

/// Fidelity with the target brought into the density matrix's basis first.
pub fn fidelity_any_basis(rho: &DensityMatrix, target: &SpinState) -> Result<f64> {
    fidelity(rho, &rotate_basis(target, rho.basis()))
}

/// Spectral QFI sum `2 Σ (λk-λk')²/(λk+λk') |<ek|G|ek'>|²` over the given
/// (not renormalized) eigenpairs.
pub fn qfi_spectral_sum(eigenvalues: &[f64], eigenvectors: &CMatrix, generator: &CMatrix) -> f64 {
    let g = eigenvectors.adjoint() * generator * eigenvectors;
    let n = eigenvalues.len();
    let mut total = 0.0;
    for k in 0..n {
        for kp in 0..n {
            let sum = eigenvalues[k] + eigenvalues[kp];
            if sum < QFI_PAIR_CUTOFF {
                continue;
            }
            let diff = eigenvalues[k] - eigenvalues[kp];
            total += diff * diff / sum * g[(k, kp)].norm_sqr();
        }
    }
    2.0 * total
}

/// Quantum Fisher information of `rho` with respect to `generator`.
pub fn qfi(rho: &DensityMatrix, generator: &OperatorMatrix) -> Result<f64> {
    if generator.matrix.nrows() != rho.matrix.nrows() {
        return Err(Error::DimensionMismatch { expected: rho.matrix.nrows(), found: generator.matrix.nrows() });
    }
    if generator.basis != rho.basis() {
        return Err(Error::BasisMismatch);
    }
    let defect = hermiticity_defect(&generator.matrix);
    if defect > HERMITIAN_TOLERANCE {
        return Err(Error::NotHermitian(defect));
    }
    let mut spec = SpectralDecomposition::of(&rho.matrix);
    spec.regularize_density()?;
    Ok(qfi_spectral_sum(&spec.eigenvalues, &spec.eigenvectors, &generator.matrix))
}

/// Pure-state QFI `4(<G²> - |<G>|²)`.
pub fn qfi_pure(psi: &SpinState, generator: &OperatorMatrix) -> Result<f64> {
    let mean = psi.expectation(generator)?;
    let g_psi = &generator.matrix * &psi.amplitudes;
    let second = g_psi.norm_squared();
    let norm2 = psi.amplitudes.norm_squared();
    Ok((4.0 * (second / norm2 - (mean / norm2).norm_sqr())).max(0.0))
}
