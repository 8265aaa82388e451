//! Density matrices over a declared state space.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigh, hermiticity_defect, outer, trace, CMatrix};
use crate::spin_algebra::{Basis, BasisRotation, OperatorMatrix, SpinQuantum, SpinState};

/// Hilbert space a density matrix lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSpace {
    /// Collective spin alone, in the given basis.
    SpinOnly { spin: SpinQuantum, basis: Basis },
    /// Collective spin (Z basis) ⊗ bosonic Fock space truncated at `nmax`
    /// quanta. Index = spin_index · (nmax+1) + n.
    SpinBoson { spin: SpinQuantum, nmax: usize },
}

impl StateSpace {
    pub fn spin_boson(spin: SpinQuantum, nmax: usize) -> Result<Self> {
        if nmax < 1 {
            return Err(Error::invalid("boson truncation nmax must be at least 1"));
        }
        Ok(StateSpace::SpinBoson { spin, nmax })
    }

    pub fn spin(&self) -> SpinQuantum {
        match *self {
            StateSpace::SpinOnly { spin, .. } | StateSpace::SpinBoson { spin, .. } => spin,
        }
    }

    pub fn dimension(&self) -> usize {
        match *self {
            StateSpace::SpinOnly { spin, .. } => spin.dim(),
            StateSpace::SpinBoson { spin, nmax } => spin.dim() * (nmax + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub space: StateSpace,
    pub matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(space: StateSpace, matrix: CMatrix) -> Result<Self> {
        let d = space.dimension();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: matrix.nrows() });
        }
        Ok(Self { space, matrix })
    }

    pub fn from_pure(state: &SpinState) -> Self {
        Self { space: StateSpace::SpinOnly { spin: state.spin, basis: state.basis }, matrix: outer(&state.amplitudes) }
    }

    pub fn maximally_mixed(spin: SpinQuantum, basis: Basis) -> Self {
        let d = spin.dim();
        Self { space: StateSpace::SpinOnly { spin, basis }, matrix: CMatrix::identity(d, d) * c(1.0 / d as f64) }
    }

    /// Spin-only state tensored with the boson Fock state `|n>`.
    pub fn spin_boson_product(spin_state: &SpinState, nmax: usize, n: usize) -> Result<Self> {
        let space = StateSpace::spin_boson(spin_state.spin, nmax)?;
        if n > nmax {
            return Err(Error::invalid(format!("Fock state {n} beyond truncation {nmax}")));
        }
        let z = crate::spin_algebra::rotate_basis(spin_state, Basis::Z);
        let mut fock = crate::linalg::CVector::zeros(nmax + 1);
        fock[n] = c(1.0);
        let psi = z.amplitudes.kronecker(&fock);
        Self::new(space, outer(&psi))
    }

    pub fn basis(&self) -> Basis {
        match self.space {
            StateSpace::SpinOnly { basis, .. } => basis,
            StateSpace::SpinBoson { .. } => Basis::Z,
        }
    }

    pub fn trace(&self) -> Complex64 {
        trace(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    /// Checks Hermiticity, unit trace and positivity within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let h = self.hermiticity_defect();
        if h > tol {
            return Err(Error::NotHermitian(h));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::TraceDrift { trace: tr.re });
        }
        let min = self.min_eigenvalue();
        if min < -tol {
            return Err(Error::Positivity(min));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (vals, _) = hermitian_eigh(&self.matrix);
        vals.last().copied().unwrap_or(0.0)
    }

    /// `Tr(ρ O)` for an operator on the same space.
    pub fn expectation_matrix(&self, op: &CMatrix) -> Result<Complex64> {
        if op.nrows() != self.matrix.nrows() {
            return Err(Error::DimensionMismatch { expected: self.matrix.nrows(), found: op.nrows() });
        }
        // Tr(ρO) = Σ_ij ρ_ij O_ji
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..op.ncols() {
            for i in 0..op.nrows() {
                acc += self.matrix[(i, j)] * op[(j, i)];
            }
        }
        Ok(acc)
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> Result<Complex64> {
        match self.space {
            StateSpace::SpinOnly { spin, basis } => {
                if op.spin != spin {
                    return Err(Error::DimensionMismatch { expected: spin.dim(), found: op.spin.dim() });
                }
                if op.basis != basis {
                    return Err(Error::BasisMismatch);
                }
                self.expectation_matrix(&op.matrix)
            }
            StateSpace::SpinBoson { .. } => self.spin_reduced()?.expectation(op),
        }
    }

    /// Partial trace over the boson; identity for spin-only states.
    pub fn spin_reduced(&self) -> Result<DensityMatrix> {
        match self.space {
            StateSpace::SpinOnly { .. } => Ok(self.clone()),
            StateSpace::SpinBoson { spin, nmax } => {
                let ds = spin.dim();
                let nb = nmax + 1;
                let m = CMatrix::from_fn(ds, ds, |a, b| (0..nb).map(|n| self.matrix[(a * nb + n, b * nb + n)]).sum());
                DensityMatrix::new(StateSpace::SpinOnly { spin, basis: Basis::Z }, m)
            }
        }
    }

    /// Mean boson number (zero for spin-only states).
    pub fn boson_number(&self) -> f64 {
        match self.space {
            StateSpace::SpinOnly { .. } => 0.0,
            StateSpace::SpinBoson { nmax, .. } => {
                let nb = nmax + 1;
                (0..self.matrix.nrows()).map(|i| (i % nb) as f64 * self.matrix[(i, i)].re).sum()
            }
        }
    }

    /// Re-expresses a spin-only density matrix in basis `to`.
    pub fn to_basis(&self, to: Basis, rotation: Option<&BasisRotation>) -> Result<DensityMatrix> {
        let StateSpace::SpinOnly { spin, basis } = self.space else {
            return Err(Error::invalid("basis change is only defined for spin-only states"));
        };
        if basis == to {
            return Ok(self.clone());
        }
        let owned;
        let rot = match rotation {
            Some(r) => r,
            None => {
                owned = BasisRotation::new(spin);
                &owned
            }
        };
        let matrix = match to {
            Basis::X => rot.operator_to_x(&self.matrix),
            Basis::Z => rot.operator_to_z(&self.matrix),
        };
        DensityMatrix::new(StateSpace::SpinOnly { spin, basis: to }, matrix)
    }

    /// Diagonal populations in the matrix's own basis.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|v| v.re).collect()
    }
}
