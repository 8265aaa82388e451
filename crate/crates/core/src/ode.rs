//! Adaptive Dormand–Prince 5(4) integrator for complex-valued linear systems.
//!
//! The state is a flat `[Complex64]` slice so that density matrices (column
//! major) and block-structured states can share the same stepping code.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; estimated from the right-hand side when `None`.
    pub initial_step: Option<f64>,
    /// Largest step ever attempted.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, initial_step: None, max_step: f64::INFINITY, max_steps: 50_000_000 }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b* (fifth minus embedded fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Stateful stepper. Keeps the last accepted step size between calls so a
/// sequence of `advance` calls over an output grid does not restart cold.
pub struct DormandPrince {
    opts: OdeOptions,
    n: usize,
    k: [Vec<Complex64>; 7],
    ytmp: Vec<Complex64>,
    ynew: Vec<Complex64>,
    h: Option<f64>,
    fsal_valid: bool,
    pub stats: OdeStats,
}

impl DormandPrince {
    pub fn new(n: usize, opts: OdeOptions) -> Self {
        let z = || vec![Complex64::new(0.0, 0.0); n];
        Self {
            opts,
            n,
            k: [z(), z(), z(), z(), z(), z(), z()],
            ytmp: z(),
            ynew: z(),
            h: opts.initial_step,
            fsal_valid: false,
            stats: OdeStats::default(),
        }
    }

    /// Marks the cached derivative stale, e.g. after the caller modified `y`
    /// between calls.
    pub fn invalidate(&mut self) {
        self.fsal_valid = false;
    }

    /// Integrates `y` in place from `t0` to `t1`. `on_accept` runs after every
    /// accepted step and may rescale `y` (any modification invalidates FSAL).
    pub fn advance<F, G>(&mut self, rhs: &mut F, t0: f64, t1: f64, y: &mut [Complex64], mut on_accept: G) -> Result<()>
    where
        F: FnMut(f64, &[Complex64], &mut [Complex64]),
        G: FnMut(f64, &mut [Complex64]) -> Result<bool>,
    {
        assert_eq!(y.len(), self.n);
        if t1 <= t0 {
            return Ok(());
        }
        let span = t1 - t0;
        let mut t = t0;
        if !self.fsal_valid {
            rhs(t, y, &mut self.k[0]);
            self.stats.rhs_evals += 1;
            self.fsal_valid = true;
        }
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step_guess(y),
        }
        .min(self.opts.max_step)
        .min(span);

        while t < t1 {
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps {
                return Err(Error::StepBudget(self.opts.max_steps));
            }
            let last = t + h >= t1 || (t1 - (t + h)) < 1e-12 * span;
            let h_step = if last { t1 - t } else { h };
            if h_step <= f64::EPSILON * t.abs().max(span) * 4.0 {
                return Err(Error::StepUnderflow { t });
            }

            let err = self.try_step(rhs, t, h_step, y);
            if err <= 1.0 {
                t = if last { t1 } else { t + h_step };
                y.copy_from_slice(&self.ynew);
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                if on_accept(t, y)? {
                    self.fsal_valid = false;
                    rhs(t, y, &mut self.k[0]);
                    self.stats.rhs_evals += 1;
                    self.fsal_valid = true;
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a clipped final step says nothing about the natural step size
                if !last || h_step >= h {
                    h = (h_step * factor).min(self.opts.max_step);
                }
            } else {
                self.stats.rejected += 1;
                h = h_step * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        self.h = Some(h);
        Ok(())
    }

    fn initial_step_guess(&self, y: &[Complex64]) -> f64 {
        let scale = |v: &Complex64| self.opts.atol + self.opts.rtol * v.norm();
        let d0 = rms(y.iter().map(|v| v.norm() / scale(v)));
        let d1 = rms(self.k[0].iter().zip(y).map(|(f, v)| f.norm() / scale(v)));
        if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
    }

    fn try_step<F>(&mut self, rhs: &mut F, t: f64, h: f64, y: &[Complex64]) -> f64
    where
        F: FnMut(f64, &[Complex64], &mut [Complex64]),
    {
        let n = self.n;
        macro_rules! stage {
            ($idx:expr, $c:expr, [$(($kk:expr, $a:expr)),*]) => {{
                for i in 0..n {
                    let mut acc = y[i];
                    $( acc += self.k[$kk][i] * (h * $a); )*
                    self.ytmp[i] = acc;
                }
                let (head, tail) = self.k.split_at_mut($idx);
                let _ = head;
                rhs(t + $c * h, &self.ytmp, &mut tail[0]);
            }};
        }
        stage!(1, C2, [(0, A21)]);
        stage!(2, C3, [(0, A31), (1, A32)]);
        stage!(3, C4, [(0, A41), (1, A42), (2, A43)]);
        stage!(4, C5, [(0, A51), (1, A52), (2, A53), (3, A54)]);
        stage!(5, 1.0, [(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        for i in 0..n {
            self.ynew[i] = y[i] + (self.k[0][i] * B1 + self.k[2][i] * B3 + self.k[3][i] * B4 + self.k[4][i] * B5 + self.k[5][i] * B6) * h;
        }
        {
            let (head, tail) = self.k.split_at_mut(6);
            let _ = head;
            rhs(t + h, &self.ynew, &mut tail[0]);
        }
        self.stats.rhs_evals += 6;

        // max norm: the RMS norm lets the small off-diagonal elements of a
        // nearly pure density matrix drift enough to break positivity
        let mut worst = 0.0;
        for i in 0..n {
            let e =
                (self.k[0][i] * E1 + self.k[2][i] * E3 + self.k[3][i] * E4 + self.k[4][i] * E5 + self.k[5][i] * E6 + self.k[6][i] * E7) * h;
            let sc = self.opts.atol + self.opts.rtol * y[i].norm().max(self.ynew[i].norm());
            let r = e.norm() / sc;
            worst = f64::max(worst, r);
        }
        worst
    }
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (s / n.max(1) as f64).sqrt()
}
