//! Brute-force reference for permutation-invariant dynamics: `N` explicit
//! qubits in the full `2^N` Hilbert space, a dense Lindblad generator and its
//! superoperator exponential.
#![allow(dead_code)]

use dicke_twist::linalg::{c, hermitian_eigh, CMatrix};
use dicke_twist::local_dissipation::{BlockDensity, DickeSpace, LocalChannels};
use nalgebra::DVector;
use num_complex::Complex64;

/// Qubit `n` is bit `n` of the basis index; a clear bit is spin up.
pub struct Qubits {
    pub n: usize,
    pub dim: usize,
}

impl Qubits {
    pub fn new(n: usize) -> Self {
        Self { n, dim: 1 << n }
    }

    fn site(&self, site: usize, op: [[f64; 2]; 2]) -> CMatrix {
        CMatrix::from_fn(self.dim, self.dim, |r, col| {
            if (r ^ col) & !(1 << site) != 0 {
                return c(0.0);
            }
            c(op[(r >> site) & 1][(col >> site) & 1])
        })
    }

    pub fn sigma_z_half(&self, site: usize) -> CMatrix {
        self.site(site, [[0.5, 0.0], [0.0, -0.5]])
    }

    pub fn sigma_plus(&self, site: usize) -> CMatrix {
        self.site(site, [[0.0, 1.0], [0.0, 0.0]])
    }

    pub fn sigma_minus(&self, site: usize) -> CMatrix {
        self.site(site, [[0.0, 0.0], [1.0, 0.0]])
    }

    fn collective(&self, f: impl Fn(usize) -> CMatrix) -> CMatrix {
        (0..self.n).fold(CMatrix::zeros(self.dim, self.dim), |acc, k| acc + f(k))
    }

    pub fn sz(&self) -> CMatrix {
        self.collective(|k| self.sigma_z_half(k))
    }

    pub fn s_plus(&self) -> CMatrix {
        self.collective(|k| self.sigma_plus(k))
    }

    pub fn sx(&self) -> CMatrix {
        let sp = self.s_plus();
        (&sp + sp.adjoint()) * c(0.5)
    }
}

/// Lindblad generator on the full space: twisting `-Λ Sx²`, the no-jump part
/// of collective decay `-Γ{Sx², ρ}` and every single-qubit channel written out
/// site by site.
pub struct FullLindblad {
    h_eff: CMatrix,
    h_eff_dag: CMatrix,
    jumps: Vec<(f64, CMatrix)>,
}

impl FullLindblad {
    pub fn new(q: &Qubits, lambda: f64, gamma: f64, ch: &LocalChannels) -> Self {
        let sx = q.sx();
        let sx2 = &sx * &sx;
        let mut jumps = Vec::new();
        for k in 0..q.n {
            if ch.dephasing > 0.0 {
                jumps.push((ch.dephasing, q.sigma_z_half(k)));
            }
            if ch.raising > 0.0 {
                jumps.push((ch.raising, q.sigma_plus(k)));
            }
            if ch.lowering > 0.0 {
                jumps.push((ch.lowering, q.sigma_minus(k)));
            }
        }
        let mut h_eff = &sx2 * c(-lambda) - &sx2 * Complex64::new(0.0, gamma);
        for (r, a) in &jumps {
            h_eff -= a.adjoint() * a * Complex64::new(0.0, 0.5 * r);
        }
        Self { h_eff_dag: h_eff.adjoint(), h_eff, jumps }
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let i = Complex64::new(0.0, 1.0);
        let mut out = (&self.h_eff * rho - rho * &self.h_eff_dag) * (-i);
        for (r, a) in &self.jumps {
            out += a * rho * a.adjoint() * c(*r);
        }
        out
    }

    /// Column-stacked superoperator, `vec(AXB) = (Bᵀ ⊗ A) vec(X)`.
    pub fn superoperator(&self) -> CMatrix {
        let d = self.h_eff.nrows();
        let id = CMatrix::identity(d, d);
        let i = Complex64::new(0.0, 1.0);
        let mut out = id.kronecker(&self.h_eff) * (-i) + self.h_eff_dag.transpose().kronecker(&id) * i;
        for (r, a) in &self.jumps {
            out += a.conjugate().kronecker(a) * c(*r);
        }
        out
    }

    /// `exp(L t) ρ` by Taylor series on the sparse superoperator, stepping so
    /// that each step has `h‖L‖₁ ≤ 1/2`. No renormalization.
    pub fn evolve(&self, rho: &CMatrix, t: f64) -> CMatrix {
        let d = rho.nrows();
        let sup = self.superoperator();
        let mut entries = Vec::new();
        for col in 0..sup.ncols() {
            for row in 0..sup.nrows() {
                if sup[(row, col)] != c(0.0) {
                    entries.push((row, col, sup[(row, col)]));
                }
            }
        }
        let norm = (0..sup.ncols()).map(|k| sup.column(k).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
        let steps = ((t * norm / 0.5).ceil() as usize).max(1);
        let h = t / steps as f64;
        let mut v: Vec<Complex64> = rho.as_slice().to_vec();
        for _ in 0..steps {
            let mut term = v.clone();
            for k in 1..40 {
                let mut next = vec![c(0.0); term.len()];
                for &(r, col, a) in &entries {
                    next[r] += a * term[col];
                }
                let scale = h / k as f64;
                let mut size: f64 = 0.0;
                for (x, acc) in next.iter_mut().zip(v.iter_mut()) {
                    *x *= scale;
                    *acc += *x;
                    size = size.max(x.norm());
                }
                term = next;
                if size < 1e-18 {
                    break;
                }
            }
        }
        CMatrix::from_column_slice(d, d, &v)
    }
}

/// Orthonormal basis `|j, m, copy>` of the full space, built by lowering the
/// highest-weight vectors of each `Sz = j` sector.
pub struct CoupledBasis {
    /// Indexed like `DickeSpace::blocks`: per block, per copy, the vectors for
    /// `m = j, j-1, …, -j`.
    pub vectors: Vec<Vec<Vec<DVector<Complex64>>>>,
}

impl CoupledBasis {
    pub fn new(q: &Qubits, space: &DickeSpace) -> Self {
        let sp = q.s_plus();
        let sm = sp.adjoint();
        let mut vectors = Vec::new();
        for block in space.blocks() {
            let j = block.j;
            // sector with Sz = j: exactly n/2 - j flipped qubits
            let flips = q.n / 2 - j;
            let sector: Vec<usize> = (0..q.dim).filter(|b| b.count_ones() as usize == flips).collect();
            let casimir_gap = &sm * &sp;
            let restricted = CMatrix::from_fn(sector.len(), sector.len(), |r, col| casimir_gap[(sector[r], sector[col])]);
            let (vals, vecs) = hermitian_eigh(&restricted);
            let mut copies = Vec::new();
            for (k, v) in vals.iter().enumerate() {
                if v.abs() > 1e-9 {
                    continue;
                }
                let mut top = DVector::zeros(q.dim);
                for (r, &b) in sector.iter().enumerate() {
                    top[b] = vecs[(r, k)];
                }
                let mut ladder = vec![top.clone()];
                let mut cur = top;
                for _ in 0..2 * j {
                    cur = &sm * cur;
                    let norm = cur.norm();
                    cur /= c(norm);
                    ladder.push(cur.clone());
                }
                copies.push(ladder);
            }
            assert_eq!(copies.len() as u128, block.degeneracy, "multiplicity of j={j}");
            vectors.push(copies);
        }
        Self { vectors }
    }

    /// `⊕_j (R_j / d_j) ⊗ 1_{d_j}` in the qubit basis.
    pub fn embed(&self, rho: &BlockDensity) -> CMatrix {
        let dim = self.vectors[0][0][0].len();
        let mut out = CMatrix::zeros(dim, dim);
        for (k, copies) in self.vectors.iter().enumerate() {
            let d = copies.len() as f64;
            let r = &rho.blocks[k];
            for ladder in copies {
                for (a, va) in ladder.iter().enumerate() {
                    for (b, vb) in ladder.iter().enumerate() {
                        out += va * vb.adjoint() * (r[(a, b)] / d);
                    }
                }
            }
        }
        out
    }

    /// `R_j[a, b] = Σ_copies <j a c| ρ |j b c>`.
    pub fn project(&self, space: &DickeSpace, rho: &CMatrix) -> BlockDensity {
        let mut out = BlockDensity::zeros(space);
        for (k, copies) in self.vectors.iter().enumerate() {
            for ladder in copies {
                for (a, va) in ladder.iter().enumerate() {
                    let row = va.adjoint() * rho;
                    for (b, vb) in ladder.iter().enumerate() {
                        out.blocks[k][(a, b)] += (&row * vb)[(0, 0)];
                    }
                }
            }
        }
        out
    }

    /// Symmetric-block state `|ψ>` expanded over qubits, `ψ` given in `m`-descending order.
    pub fn symmetric_vector(&self, amplitudes: &DVector<Complex64>) -> DVector<Complex64> {
        let ladder = &self.vectors[0][0];
        ladder.iter().zip(amplitudes.iter()).fold(DVector::zeros(ladder[0].len()), |acc, (v, a)| acc + v * *a)
    }
}

/// All seven non-empty combinations of the three channels, scaled by `rates`.
pub fn channel_combinations(rates: [f64; 3]) -> Vec<LocalChannels> {
    (1..8u8)
        .map(|mask| LocalChannels {
            dephasing: if mask & 1 != 0 { rates[0] } else { 0.0 },
            raising: if mask & 2 != 0 { rates[1] } else { 0.0 },
            lowering: if mask & 4 != 0 { rates[2] } else { 0.0 },
        })
        .collect()
}

pub fn expectation(rho: &CMatrix, op: &CMatrix) -> f64 {
    (rho * op).trace().re
}
