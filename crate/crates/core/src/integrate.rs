//! Fixed-step integrators.
//!
//! TR-BDF2 is the default: L-stable and second order, which the thin shell at
//! two-phase onset needs (its diffusion eigenvalues scale with the inverse
//! square of the shell width). Both TR-BDF2 stages share the iteration matrix
//! `I - d h J`, so one factorization serves a whole step. RK4 and forward
//! Euler remain available; they sub-step to stay inside their stability limits.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::model::AffineSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Trbdf2,
    Rk4,
    Euler,
}

impl std::str::FromStr for Method {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trbdf2" | "tr-bdf2" => Ok(Method::Trbdf2),
            "rk4" => Ok(Method::Rk4),
            "euler" => Ok(Method::Euler),
            other => Err(ModelError::Config(format!("unknown integration method '{other}'"))),
        }
    }
}

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
/// Diagonal coefficient of both stages, `gamma / 2 = 1 - 1/sqrt(2)`.
const D: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
const BDF_A: f64 = 1.0 / (GAMMA * (2.0 - GAMMA));
const BDF_B: f64 = -(1.0 - GAMMA) * (1.0 - GAMMA) / (GAMMA * (2.0 - GAMMA));

/// Explicit stability limits on the negative real axis.
const RK4_LIMIT: f64 = 2.5;
const EULER_LIMIT: f64 = 1.8;

/// Sub-steps an explicit method needs for a spectral radius bound `rho`.
pub fn explicit_substeps(method: Method, rho: f64, h: f64) -> usize {
    let limit = match method {
        Method::Rk4 => RK4_LIMIT,
        Method::Euler => EULER_LIMIT,
        Method::Trbdf2 => return 1,
    };
    ((rho * h / limit).ceil() as usize).max(1)
}

/// Factored TR-BDF2 iteration matrix of a linear system for one step size.
#[derive(Debug, Clone)]
pub struct LinearTrbdf2 {
    h: f64,
    lu: LU<f64, Dyn, Dyn>,
}

impl LinearTrbdf2 {
    pub fn new(sys: &AffineSystem, h: f64) -> Self {
        let n = sys.dim();
        let m = DMatrix::identity(n, n) - &sys.a * (D * h);
        LinearTrbdf2 { h, lu: m.lu() }
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn step(&self, sys: &AffineSystem, y: &[f64], u: f64) -> Result<Vec<f64>> {
        let h = self.h;
        let n = y.len();
        let mut f = vec![0.0; n];
        sys.apply_f64(y, u, &mut f);
        let forcing = |i: usize| sys.b[i] * u + sys.g.as_ref().map_or(0.0, |g| g[i]);
        let rhs1 = DVector::from_fn(n, |i, _| y[i] + D * h * f[i] + D * h * forcing(i));
        let yg = self.lu.solve(&rhs1).ok_or_else(|| ModelError::Numerical("singular step matrix".into()))?;
        let rhs2 = DVector::from_fn(n, |i, _| BDF_A * yg[i] + BDF_B * y[i] + D * h * forcing(i));
        let y1 = self.lu.solve(&rhs2).ok_or_else(|| ModelError::Numerical("singular step matrix".into()))?;
        Ok(y1.as_slice().to_vec())
    }
}

/// One explicit step of a linear system, sub-stepped for stability.
pub fn explicit_linear_step(method: Method, sys: &AffineSystem, y: &[f64], u: f64, h: f64) -> Vec<f64> {
    let f = |x: &[f64], out: &mut [f64]| sys.apply_f64(x, u, out);
    explicit_step(method, &f, y, h, explicit_substeps(method, sys.gershgorin_bound(), h))
}

pub fn explicit_step(
    method: Method,
    f: &dyn Fn(&[f64], &mut [f64]),
    y: &[f64],
    h: f64,
    substeps: usize,
) -> Vec<f64> {
    let n = y.len();
    let hs = h / substeps as f64;
    let mut x = y.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..substeps {
        f(&x, &mut k1);
        match method {
            Method::Euler | Method::Trbdf2 => {
                for i in 0..n {
                    x[i] += hs * k1[i];
                }
            }
            Method::Rk4 => {
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * hs * k1[i];
                }
                f(&tmp, &mut k2);
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * hs * k2[i];
                }
                f(&tmp, &mut k3);
                for i in 0..n {
                    tmp[i] = x[i] + hs * k3[i];
                }
                f(&tmp, &mut k4);
                for i in 0..n {
                    x[i] += hs / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
    }
    x
}

/// Sparsity of a Jacobian: tridiagonal plus a few dense columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrowPattern {
    pub dense: Vec<usize>,
}

/// `M = I - c J` stored as tridiagonal part plus dense column corrections,
/// solved in O(n) by the Woodbury identity.
#[derive(Debug, Clone)]
struct ArrowMatrix {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    dense: Vec<usize>,
    /// `Tri^{-1} U`, one column per dense index.
    w: Vec<Vec<f64>>,
    cap: LU<f64, Dyn, Dyn>,
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { sup[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        if i + 1 < n {
            c[i] = sup[i] / m;
        }
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

impl ArrowMatrix {
    /// From the Jacobian columns: `cols[j][i] = dF_i/dx_j` for dense `j`,
    /// and tridiagonal bands for the rest.
    fn new(jac_tri: (&[f64], &[f64], &[f64]), dense_cols: &[(usize, Vec<f64>)], c: f64) -> Result<Self> {
        let n = jac_tri.1.len();
        let sub: Vec<f64> = jac_tri.0.iter().map(|v| -c * v).collect();
        let diag: Vec<f64> = jac_tri.1.iter().map(|v| 1.0 - c * v).collect();
        let sup: Vec<f64> = jac_tri.2.iter().map(|v| -c * v).collect();
        let dense: Vec<usize> = dense_cols.iter().map(|(j, _)| *j).collect();
        let mut w = Vec::with_capacity(dense.len());
        for (j, col) in dense_cols {
            // residual of column j of M outside its tridiagonal band
            let mut u: Vec<f64> = col.iter().map(|v| -c * v).collect();
            u[*j] = 0.0;
            if *j > 0 {
                u[j - 1] = 0.0;
            }
            if j + 1 < n {
                u[j + 1] = 0.0;
            }
            w.push(thomas(&sub, &diag, &sup, &u));
        }
        let k = dense.len();
        let cap = DMatrix::from_fn(k, k, |a, b| if a == b { 1.0 } else { 0.0 } + w[b][dense[a]]).lu();
        let m = ArrowMatrix { sub, diag, sup, dense, w, cap };
        if m.diag.iter().any(|v| !v.is_finite() || *v == 0.0) {
            return Err(ModelError::Numerical("degenerate iteration matrix".into()));
        }
        Ok(m)
    }

    fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut z = thomas(&self.sub, &self.diag, &self.sup, f);
        if self.dense.is_empty() {
            return Ok(z);
        }
        let ez = DVector::from_iterator(self.dense.len(), self.dense.iter().map(|&j| z[j]));
        let y = self.cap.solve(&ez).ok_or_else(|| ModelError::Numerical("singular capacitance".into()))?;
        for (k, wk) in self.w.iter().enumerate() {
            for i in 0..z.len() {
                z[i] -= wk[i] * y[k];
            }
        }
        Ok(z)
    }
}

/// TR-BDF2 for `y' = f(y)` with an arrow-structured Jacobian, simplified
/// Newton iterations and finite-difference Jacobians refreshed on stalls.
pub struct NonlinearTrbdf2<'a> {
    pub f: &'a dyn Fn(&[f64], &mut [f64]),
    pub pattern: &'a ArrowPattern,
    /// Characteristic magnitude of each component (convergence and FD steps).
    pub scale: &'a [f64],
    /// Newton tolerance on the scaled max-norm of the update.
    pub tol: f64,
}

impl NonlinearTrbdf2<'_> {
    fn jacobian(&self, y: &[f64], c: f64) -> Result<ArrowMatrix> {
        let n = y.len();
        let mut f0 = vec![0.0; n];
        (self.f)(y, &mut f0);
        let mut fp = vec![0.0; n];
        let step = |j: usize| 1e-7 * self.scale[j].max(y[j].abs());
        let (mut sub, mut diag, mut sup) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut dense_cols = Vec::new();
        let is_dense = |j: usize| self.pattern.dense.contains(&j);
        // dense columns one at a time
        for &j in &self.pattern.dense {
            let mut yp = y.to_vec();
            let hj = step(j);
            yp[j] += hj;
            (self.f)(&yp, &mut fp);
            let col: Vec<f64> = (0..n).map(|i| (fp[i] - f0[i]) / hj).collect();
            diag[j] = col[j];
            if j > 0 {
                sup[j - 1] = col[j - 1];
            }
            if j + 1 < n {
                sub[j + 1] = col[j + 1];
            }
            dense_cols.push((j, col));
        }
        // remaining columns in three interleaved groups
        for g in 0..3 {
            let cols: Vec<usize> = (g..n).step_by(3).filter(|&j| !is_dense(j)).collect();
            if cols.is_empty() {
                continue;
            }
            let mut yp = y.to_vec();
            for &j in &cols {
                yp[j] += step(j);
            }
            (self.f)(&yp, &mut fp);
            for &j in &cols {
                let hj = step(j);
                diag[j] = (fp[j] - f0[j]) / hj;
                if j > 0 {
                    sup[j - 1] = (fp[j - 1] - f0[j - 1]) / hj;
                }
                if j + 1 < n {
                    sub[j + 1] = (fp[j + 1] - f0[j + 1]) / hj;
                }
            }
        }
        ArrowMatrix::new((&sub, &diag, &sup), &dense_cols, c)
    }

    /// Solve `y - c f(y) = rhs` starting from `guess`.
    fn stage(&self, m: &mut ArrowMatrix, rhs: &[f64], guess: Vec<f64>, c: f64) -> Result<Vec<f64>> {
        let n = rhs.len();
        let mut y = guess;
        let mut fy = vec![0.0; n];
        for refresh in 0..3 {
            if refresh > 0 {
                *m = self.jacobian(&y, c)?;
            }
            for _ in 0..12 {
                (self.f)(&y, &mut fy);
                let r: Vec<f64> = (0..n).map(|i| y[i] - c * fy[i] - rhs[i]).collect();
                let dy = m.solve(&r)?;
                let mut err: f64 = 0.0;
                for i in 0..n {
                    y[i] -= dy[i];
                    err = err.max((dy[i] / self.scale[i]).abs());
                }
                if !err.is_finite() {
                    return Err(ModelError::Numerical("non-finite Newton update".into()));
                }
                if err < self.tol {
                    return Ok(y);
                }
            }
        }
        Err(ModelError::Numerical("Newton iteration did not converge".into()))
    }

    pub fn step(&self, y: &[f64], h: f64) -> Result<Vec<f64>> {
        let n = y.len();
        let c = D * h;
        let mut m = self.jacobian(y, c)?;
        let mut f = vec![0.0; n];
        (self.f)(y, &mut f);
        let rhs1: Vec<f64> = (0..n).map(|i| y[i] + c * f[i]).collect();
        let guess: Vec<f64> = (0..n).map(|i| y[i] + GAMMA * h * f[i]).collect();
        let yg = self.stage(&mut m, &rhs1, guess, c)?;
        let rhs2: Vec<f64> = (0..n).map(|i| BDF_A * yg[i] + BDF_B * y[i]).collect();
        // extrapolated guess through (t_n, y), (t_n + gamma h, yg)
        let guess2: Vec<f64> = (0..n).map(|i| y[i] + (yg[i] - y[i]) / GAMMA).collect();
        self.stage(&mut m, &rhs2, guess2, c)
    }
}
