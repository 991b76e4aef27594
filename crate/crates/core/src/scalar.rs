//! Scalar abstraction shared by the model equations so the same code runs on
//! plain `f64` (simulation) and on [`Jet`] (exact Lie derivatives).
//!
//! A [`Jet`] is a truncated Taylor series in time whose coefficients are
//! forward-mode dual numbers carrying a gradient with respect to the initial
//! state. Propagating a jet through the dynamics yields every time derivative of
//! the output together with its state gradient, without nested differencing.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Value of the leading (order-zero, primal) component.
    fn value(&self) -> f64;
    /// A constant with the same shape as `self`.
    fn lift(&self, v: f64) -> Self;
    fn sqrt(&self) -> Self;
    fn asinh(&self) -> Self;
    fn ln(&self) -> Self;

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }

    fn cube(&self) -> Self {
        self.clone() * self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn lift(&self, v: f64) -> Self {
        v
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn asinh(&self) -> Self {
        f64::asinh(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
}

/// Taylor series of order `order` in time with dual-number coefficients of
/// gradient length `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Jet {
    fn stride(&self) -> usize {
        self.dim + 1
    }

    pub fn constant(order: usize, dim: usize, v: f64) -> Self {
        let mut data = vec![0.0; (order + 1) * (dim + 1)];
        data[0] = v;
        Jet { order, dim, data }
    }

    /// Independent variable `index` with value `v` (unit seed in the gradient).
    pub fn variable(order: usize, dim: usize, v: f64, index: usize) -> Self {
        let mut j = Jet::constant(order, dim, v);
        j.data[1 + index] = 1.0;
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Taylor coefficient `k` as `[value, gradient...]`.
    pub fn coeff(&self, k: usize) -> &[f64] {
        let s = self.stride();
        &self.data[k * s..(k + 1) * s]
    }

    pub fn set_coeff(&mut self, k: usize, c: &[f64]) {
        let s = self.stride();
        self.data[k * s..(k + 1) * s].copy_from_slice(c);
    }

    fn zeros_like(&self) -> Self {
        Jet { order: self.order, dim: self.dim, data: vec![0.0; self.data.len()] }
    }

    fn check(&self, other: &Jet) {
        debug_assert!(self.order == other.order && self.dim == other.dim, "jet shape mismatch");
    }
}

// Dual-number helpers over coefficient slices `[v, g...]`.
fn dual_mul_acc(out: &mut [f64], a: &[f64], b: &[f64], scale: f64) {
    out[0] += scale * a[0] * b[0];
    for i in 1..out.len() {
        out[i] += scale * (a[0] * b[i] + b[0] * a[i]);
    }
}

fn dual_div(x: &[f64], y: &[f64]) -> Vec<f64> {
    let q = x[0] / y[0];
    let mut out = vec![0.0; x.len()];
    out[0] = q;
    for i in 1..x.len() {
        out[i] = (x[i] - q * y[i]) / y[0];
    }
    out
}

fn dual_map(a: &[f64], f: f64, df: f64) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    out[0] = f;
    for i in 1..a.len() {
        out[i] = df * a[i];
    }
    out
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        self.check(&rhs);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        self.check(&rhs);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for a in self.data.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        self.check(&rhs);
        let mut out = self.zeros_like();
        let s = self.stride();
        for k in 0..=self.order {
            for j in 0..=k {
                let (a, b) = (self.coeff(j), rhs.coeff(k - j));
                dual_mul_acc(&mut out.data[k * s..(k + 1) * s], a, b, 1.0);
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        self.check(&rhs);
        let mut out = self.zeros_like();
        let s = self.stride();
        for k in 0..=self.order {
            let mut num = self.coeff(k).to_vec();
            for j in 1..=k {
                let (b, c) = (rhs.coeff(j).to_vec(), out.coeff(k - j).to_vec());
                dual_mul_acc(&mut num, &b, &c, -1.0);
            }
            let q = dual_div(&num, rhs.coeff(0));
            out.data[k * s..(k + 1) * s].copy_from_slice(&q);
        }
        out
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.data[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.data[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for a in self.data.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(mut self, rhs: f64) -> Jet {
        for a in self.data.iter_mut() {
            *a /= rhs;
        }
        self
    }
}

impl Scalar for Jet {
    fn value(&self) -> f64 {
        self.data[0]
    }

    fn lift(&self, v: f64) -> Self {
        Jet::constant(self.order, self.dim, v)
    }

    fn sqrt(&self) -> Self {
        let mut out = self.zeros_like();
        let s = self.stride();
        let a0 = self.coeff(0);
        let r = a0[0].sqrt();
        let s0 = dual_map(a0, r, 0.5 / r);
        out.data[..s].copy_from_slice(&s0);
        let two_s0: Vec<f64> = s0.iter().map(|v| 2.0 * v).collect();
        for k in 1..=self.order {
            let mut num = self.coeff(k).to_vec();
            for j in 1..k {
                let (a, b) = (out.coeff(j).to_vec(), out.coeff(k - j).to_vec());
                dual_mul_acc(&mut num, &a, &b, -1.0);
            }
            let q = dual_div(&num, &two_s0);
            out.data[k * s..(k + 1) * s].copy_from_slice(&q);
        }
        out
    }

    fn ln(&self) -> Self {
        let mut out = self.zeros_like();
        let s = self.stride();
        let a0 = self.coeff(0).to_vec();
        out.data[..s].copy_from_slice(&dual_map(&a0, a0[0].ln(), 1.0 / a0[0]));
        // a * l' = a'  =>  k a0 l_k = k a_k - sum_{j=1}^{k-1} j l_j a_{k-j}
        for k in 1..=self.order {
            let mut num: Vec<f64> = self.coeff(k).iter().map(|v| v * k as f64).collect();
            for j in 1..k {
                let (l, a) = (out.coeff(j).to_vec(), self.coeff(k - j).to_vec());
                dual_mul_acc(&mut num, &l, &a, -(j as f64));
            }
            let mut q = dual_div(&num, &a0);
            q.iter_mut().for_each(|v| *v /= k as f64);
            out.data[k * s..(k + 1) * s].copy_from_slice(&q);
        }
        out
    }

    fn asinh(&self) -> Self {
        let q = (self.square() + 1.0).sqrt();
        let mut out = self.zeros_like();
        let s = self.stride();
        let a0 = self.coeff(0);
        out.data[..s].copy_from_slice(&dual_map(a0, a0[0].asinh(), 1.0 / q.data[0]));
        // q * s' = a'  =>  k q0 s_k = k a_k - sum_{j=1}^{k-1} (k-j) q_j s_{k-j}
        for k in 1..=self.order {
            let mut num: Vec<f64> = self.coeff(k).iter().map(|v| v * k as f64).collect();
            for j in 1..k {
                let (qj, sk) = (q.coeff(j).to_vec(), out.coeff(k - j).to_vec());
                dual_mul_acc(&mut num, &qj, &sk, -((k - j) as f64));
            }
            let mut r = dual_div(&num, q.coeff(0));
            r.iter_mut().for_each(|v| *v /= k as f64);
            out.data[k * s..(k + 1) * s].copy_from_slice(&r);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Jet of t -> x0 + t with gradient seed on x0.
    fn line(order: usize, x0: f64) -> Jet {
        let mut j = Jet::variable(order, 1, x0, 0);
        j.set_coeff(1, &[1.0, 0.0]);
        j
    }

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|v| v as f64).product()
    }

    // Derivatives of g(x0 + t) at t = 0 equal k! * coeff_k, and the gradient of
    // coeff_k with respect to x0 equals g^{(k+1)}(x0) / k!.
    fn check_function(f: impl Fn(&Jet) -> Jet, derivs: &[f64], x0: f64) {
        let order = derivs.len() - 2;
        let j = f(&line(order, x0));
        for k in 0..=order {
            let c = j.coeff(k);
            assert_relative_eq!(c[0] * factorial(k), derivs[k], max_relative = 1e-12);
            assert_relative_eq!(c[1] * factorial(k), derivs[k + 1], max_relative = 1e-12);
        }
    }

    #[test]
    fn sqrt_ln_asinh_match_closed_form_derivatives() {
        let x: f64 = 0.7;
        check_function(
            |j| j.sqrt(),
            &[
                x.sqrt(),
                0.5 * x.powf(-0.5),
                -0.25 * x.powf(-1.5),
                0.375 * x.powf(-2.5),
                -0.9375 * x.powf(-3.5),
            ],
            x,
        );
        check_function(|j| j.ln(), &[x.ln(), 1.0 / x, -1.0 / x.powi(2), 2.0 / x.powi(3), -6.0 / x.powi(4)], x);
        let q = 1.0 + x * x;
        check_function(
            |j| j.asinh(),
            &[
                x.asinh(),
                q.powf(-0.5),
                -x * q.powf(-1.5),
                (2.0 * x * x - 1.0) * q.powf(-2.5),
                (9.0 * x - 6.0 * x.powi(3)) * q.powf(-3.5),
            ],
            x,
        );
    }

    #[test]
    fn division_and_products_are_consistent() {
        let x = 1.3;
        check_function(
            |j| j.lift(1.0) / j.clone(),
            &[1.0 / x, -1.0 / x.powi(2), 2.0 / x.powi(3), -6.0 / x.powi(4)],
            x,
        );
        check_function(|j| j.cube() * 2.0 - 1.0, &[2.0 * x.powi(3) - 1.0, 6.0 * x * x, 12.0 * x, 12.0], x);
    }
}
