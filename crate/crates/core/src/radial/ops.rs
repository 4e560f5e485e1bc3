//! Differential operators, pairings and norms on radial functions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::function::{Decay, RadialFunction};
use crate::error::Result;

/// Discrete radial Laplacian `f'' + (N-1)/r f'`.
pub fn laplacian(f: &RadialFunction) -> RadialFunction {
    let values = f.grid().laplacian(f.values());
    RadialFunction::from_complex(f.grid().clone(), values, f.decay())
}

/// Radial derivative `∂_r f`.
pub fn derivative(f: &RadialFunction) -> RadialFunction {
    let values = f.grid().derivative(f.values());
    RadialFunction::from_complex(f.grid().clone(), values, f.decay())
}

/// `(f, g)₂ = Re ∫ f ḡ`.
pub fn inner(f: &RadialFunction, g: &RadialFunction) -> Result<f64> {
    f.check_grid(g)?;
    Ok(inner_slices(f.grid().weights(), f.values(), g.values()))
}

pub(crate) fn inner_slices(w: &[f64], f: &[Complex64], g: &[Complex64]) -> f64 {
    w.iter()
        .zip(f.iter().zip(g))
        .map(|(w, (a, b))| w * (a.re * b.re + a.im * b.im))
        .sum()
}

/// Scaling generator `Λf = (N/2) f + r f'`.
pub fn lambda_op(f: &RadialFunction) -> RadialFunction {
    let half_n = 0.5 * f.grid().dim() as f64;
    let df = f.grid().derivative(f.values());
    let values = f
        .values()
        .iter()
        .zip(&df)
        .zip(f.grid().nodes())
        .map(|((v, d), r)| v * half_n + d * *r)
        .collect();
    RadialFunction::from_complex(f.grid().clone(), values, f.decay())
}

/// `‖f‖₂²`.
pub fn mass(f: &RadialFunction) -> f64 {
    f.values()
        .iter()
        .zip(f.grid().weights())
        .map(|(v, w)| w * v.norm_sqr())
        .sum()
}

/// `‖∇f‖₂²` from the stiffness form.
pub fn grad_sq(f: &RadialFunction) -> f64 {
    let kf = f.grid().stiffness_apply(f.values());
    f.values()
        .iter()
        .zip(&kf)
        .map(|(a, b)| a.re * b.re + a.im * b.im)
        .sum()
}

/// `‖f‖_{H¹}² = ‖f‖₂² + ‖∇f‖₂²`.
pub fn h1_sq(f: &RadialFunction) -> f64 {
    mass(f) + grad_sq(f)
}

/// `‖f‖_q^q`.
pub fn lp_pow(f: &RadialFunction, q: f64) -> f64 {
    f.values()
        .iter()
        .zip(f.grid().weights())
        .map(|(v, w)| w * v.norm().powf(q))
        .sum()
}

/// `‖ |x|^k f ‖₂²`.
pub fn moment_sq(f: &RadialFunction, k: f64) -> f64 {
    f.values()
        .iter()
        .zip(f.grid().weights())
        .zip(f.grid().nodes())
        .map(|((v, w), r)| w * r.powf(2.0 * k) * v.norm_sqr())
        .sum()
}

/// Multiplies by `|x|^k`.
pub fn times_power(f: &RadialFunction, k: i32) -> RadialFunction {
    f.map(|r, v| v * r.powi(k)).with_decay(Decay::Polynomial)
}

/// Residuals of the three virial-type pairings of a real decaying `w`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PairingReport {
    /// `|(|x|^{2m} w, Λw) + m ‖|x|^m w‖²|`
    pub moment: f64,
    /// `|(−Δw, Λw) − ‖∇w‖²|`
    pub kinetic: f64,
    /// `|(|w|^q w, Λw) − Nq/(2(q+2)) ‖w‖_{q+2}^{q+2}|`
    pub power: f64,
}

impl PairingReport {
    pub fn max(&self) -> f64 {
        self.moment.max(self.kinetic).max(self.power)
    }
}

/// Evaluates the pairing identities with moment exponent `m = 1`.
pub fn check_pairing_identities(w: &RadialFunction, q: f64) -> PairingReport {
    check_pairing_identities_with_moment(w, q, 1)
}

pub fn check_pairing_identities_with_moment(w: &RadialFunction, q: f64, m: i32) -> PairingReport {
    let grid = w.grid();
    let n = grid.dim() as f64;
    let lw = lambda_op(w);
    let weights = grid.weights();

    let xw = times_power(w, 2 * m);
    let moment = (inner_slices(weights, xw.values(), lw.values()) + m as f64 * moment_sq(w, m as f64)).abs();

    let neg_lap = laplacian(w).scale(Complex64::new(-1.0, 0.0));
    let kinetic = (inner_slices(weights, neg_lap.values(), lw.values()) - grad_sq(w)).abs();

    let pw = w.map(|_, v| v * v.norm().powf(q));
    let power = (inner_slices(weights, pw.values(), lw.values()) - n * q / (2.0 * (q + 2.0)) * lp_pow(w, q + 2.0)).abs();

    PairingReport { moment, kinetic, power }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::radial::make_grid;

    fn gauss(dim: usize) -> RadialFunction {
        let g = make_grid(dim, 20.0, 2048).unwrap();
        RadialFunction::from_fn(g, |r| (-0.5 * r * r).exp(), Decay::Exponential)
    }

    #[test]
    fn laplacian_of_gaussian() {
        for dim in 1..=5 {
            let f = gauss(dim);
            let lf = laplacian(&f);
            let n = dim as f64;
            let err = f
                .grid()
                .nodes()
                .iter()
                .zip(lf.values())
                .map(|(r, v)| (v.re - (r * r - n) * (-0.5 * r * r).exp()).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "dim {dim}: {err}");
        }
    }

    #[test]
    fn laplacian_of_constant_and_square() {
        let g = make_grid(3, 20.0, 256).unwrap();
        let c = RadialFunction::from_fn(g.clone(), |_| 2.5, Decay::Polynomial);
        let lc = laplacian(&c);
        // the Dirichlet node at rmax only touches the last element
        let inner_nodes = g.len() - g.order();
        assert!(lc.values()[..inner_nodes].iter().all(|v| v.norm() < 1e-9));
        let sq = RadialFunction::from_fn(g.clone(), |r| r * r, Decay::Polynomial);
        let ls = laplacian(&sq);
        assert!(ls.values()[..inner_nodes].iter().all(|v| (v.re - 6.0).abs() < 1e-7));
    }

    #[test]
    fn inner_products() {
        let f = gauss(1);
        assert!((inner(&f, &f).unwrap() - PI.sqrt()).abs() / PI.sqrt() < 1e-10);
        let g = f.scale(Complex64::i());
        assert_eq!(inner(&f, &g).unwrap(), 0.0);
    }

    #[test]
    fn lambda_is_antisymmetric_up_to_shift() {
        for dim in 1..=4 {
            let f = gauss(dim);
            let one = RadialFunction::from_fn(f.grid().clone(), |_| 1.0, Decay::Polynomial);
            let l1 = lambda_op(&one);
            let interior = l1.len() - f.grid().order();
            assert!(l1.values()[..interior].iter().all(|v| (v.re - dim as f64 / 2.0).abs() < 1e-10));
            let pairing = inner(&lambda_op(&f), &f).unwrap();
            assert!(pairing.abs() < 1e-10, "dim {dim}: {pairing}");
        }
    }

    #[test]
    fn laplacian_is_self_adjoint() {
        let g = make_grid(2, 20.0, 512).unwrap();
        let f = RadialFunction::from_fn(g.clone(), |r| (-r * r / 2.0).exp() * (1.0 + r), Decay::Exponential);
        let h = RadialFunction::from_fn(g, |r| (-r).exp() / (1.0 + r * r), Decay::Exponential);
        let a = inner(&laplacian(&f), &h).unwrap();
        let b = inner(&f, &laplacian(&h)).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn pairings_for_gaussian_and_zero() {
        let rep = check_pairing_identities(&gauss(1), 2.0);
        assert!(rep.max() < 1e-8, "{rep:?}");
        let g = make_grid(2, 20.0, 256).unwrap();
        let z = RadialFunction::zeros(g);
        assert_eq!(check_pairing_identities(&z, 2.0).max(), 0.0);
    }
}
