//! Radial spectral-element grid.
//!
//! `[0, rmax]` is split into elements carrying Lobatto nodes of degree
//! `order`. The first element uses the Gauss–Lobatto–Jacobi rule for the
//! weight `r^{N-1}`, so the origin is a node with a positive weight; the
//! rest use Gauss–Lobatto–Legendre. The node at `rmax` carries the Dirichlet
//! condition and is dropped. The lumped weights double as the quadrature for
//! `∫_{R^N} f(|x|) dx`, and the stiffness matrix `K` defines the Laplacian
//! `Δ_h = -W^{-1} K`, which is self-adjoint in the weighted inner product.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::nodes::{barycentric_weights, differentiation_matrix, lagrange_row, lobatto_jacobi};
use crate::banded::{BandMatrix, Scalar};
use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 8;
const MIN_NODES: usize = 64;
const MIN_NODES_PER_UNIT: f64 = 8.0;
const GAUSSIAN_TOL: f64 = 1e-10;

/// Surface area of the unit sphere in `R^N`.
pub fn sphere_area(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * PI.powf(n / 2.0) / gamma(n / 2.0)
}

/// Gamma function for half-integers and small positive arguments.
fn gamma(x: f64) -> f64 {
    if (x - x.round()).abs() < 1e-12 && x > 0.0 {
        return (1..x.round() as u64).map(|k| k as f64).product();
    }
    if (2.0 * x - (2.0 * x).round()).abs() < 1e-12 {
        // Γ(k + 1/2) = (2k)! / (4^k k!) √π
        let k = (x - 0.5).round() as u64;
        let mut g = PI.sqrt();
        for j in 0..k {
            g *= j as f64 + 0.5;
        }
        return g;
    }
    panic!("gamma only implemented for half-integers, got {x}");
}

#[derive(Debug, Clone)]
struct ElementBasis {
    /// reference nodes on [-1, 1]
    x: Vec<f64>,
    /// reference weights (including (1+x)^{N-1} for the first element)
    w: Vec<f64>,
    bary: Vec<f64>,
    /// differentiation on [-1, 1]
    d: Vec<Vec<f64>>,
}

impl ElementBasis {
    fn new(order: usize, jacobi_power: usize) -> Self {
        let (x, w) = lobatto_jacobi(order, jacobi_power);
        let bary = barycentric_weights(&x);
        let d = differentiation_matrix(&x);
        Self { x, w, bary, d }
    }
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    dim: usize,
    order: usize,
    edges: Vec<f64>,
    r: Vec<f64>,
    weights: Vec<f64>,
    stiffness: BandMatrix<f64>,
    first: ElementBasis,
    rest: ElementBasis,
    id: u64,
}

/// Serialized grid description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub rmax: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
}

fn next_id() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static NEXT: AtomicU64 = AtomicU64::new(1);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

/// Uniform grid of `n` nodes on `[0, rmax]` in dimension `dim`.
pub fn make_grid(dim: usize, rmax: f64, n: usize) -> Result<Arc<RadialGrid>> {
    make_grid_with_order(dim, rmax, n, DEFAULT_ORDER)
}

pub fn make_grid_with_order(dim: usize, rmax: f64, n: usize, order: usize) -> Result<Arc<RadialGrid>> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    if !(rmax > 0.0 && rmax.is_finite()) {
        return Err(Error::InvalidArgument(format!("rmax must be positive, got {rmax}")));
    }
    if n < MIN_NODES {
        return Err(Error::GridTooCoarse(format!("{n} nodes < {MIN_NODES}")));
    }
    if order < 2 {
        return Err(Error::InvalidArgument("element order must be >= 2".into()));
    }
    if (n as f64) / rmax < MIN_NODES_PER_UNIT {
        return Err(Error::GridTooCoarse(format!(
            "{:.2} nodes per unit radius < {MIN_NODES_PER_UNIT}",
            n as f64 / rmax
        )));
    }
    let elements = n.div_ceil(order);
    let edges: Vec<f64> = (0..=elements)
        .map(|e| rmax * e as f64 / elements as f64)
        .collect();
    let grid = RadialGrid::from_edges(dim, edges, order)?;
    let err = grid.gaussian_check();
    if err > GAUSSIAN_TOL {
        return Err(Error::GridTooCoarse(format!(
            "Gaussian quadrature relative error {err:.2e} > {GAUSSIAN_TOL:.0e}"
        )));
    }
    Ok(Arc::new(grid))
}

impl RadialGrid {
    /// Grid on arbitrary element edges `0 = e_0 < e_1 < ... < e_E = rmax`.
    pub fn from_edges(dim: usize, edges: Vec<f64>, order: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if edges.len() < 2 || edges[0] != 0.0 {
            return Err(Error::InvalidArgument("edges must start at 0 and contain an element".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("edges must be strictly increasing".into()));
        }
        let first = ElementBasis::new(order, dim - 1);
        let rest = ElementBasis::new(order, 0);
        let ne = edges.len() - 1;
        let total = ne * order + 1;
        let n = total - 1;
        let area = sphere_area(dim);
        let mut r = vec![0.0; total];
        let mut weights = vec![0.0; total];
        let mut stiffness = BandMatrix::<f64>::zeros(n, order, order);
        for e in 0..ne {
            let basis = if e == 0 { &first } else { &rest };
            let (a, h) = (edges[e], edges[e + 1] - edges[e]);
            let half = 0.5 * h;
            let local_w: Vec<f64> = basis
                .x
                .iter()
                .zip(&basis.w)
                .map(|(&x, &w)| {
                    let rr = a + (x + 1.0) * half;
                    if e == 0 {
                        area * w * half.powi(dim as i32)
                    } else {
                        area * w * half * rr.powi(dim as i32 - 1)
                    }
                })
                .collect();
            for k in 0..=order {
                let g = e * order + k;
                r[g] = a + (basis.x[k] + 1.0) * half;
                weights[g] += local_w[k];
            }
            // K_e = D^T diag(w) D with D scaled by 1/half
            for i in 0..=order {
                let gi = e * order + i;
                if gi >= n {
                    continue;
                }
                for j in 0..=order {
                    let gj = e * order + j;
                    if gj >= n {
                        continue;
                    }
                    let mut s = 0.0;
                    for k in 0..=order {
                        s += basis.d[k][i] * local_w[k] * basis.d[k][j];
                    }
                    stiffness.add_to(gi, gj, s / (half * half));
                }
            }
        }
        r.truncate(n);
        weights.truncate(n);
        Ok(Self {
            dim,
            order,
            edges,
            r,
            weights,
            stiffness,
            first,
            rest,
            id: next_id(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn rmax(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.r
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn stiffness(&self) -> &BandMatrix<f64> {
        &self.stiffness
    }

    pub fn elements(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn spec(&self) -> GridSpec {
        let uniform = self
            .edges
            .windows(2)
            .all(|w| ((w[1] - w[0]) - self.rmax() / self.elements() as f64).abs() < 1e-12 * self.rmax());
        GridSpec {
            dim: self.dim,
            rmax: self.rmax(),
            n: self.len(),
            order: (self.order != DEFAULT_ORDER).then_some(self.order),
            edges: (!uniform).then(|| self.edges.clone()),
        }
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Arc<RadialGrid>> {
        let order = spec.order.unwrap_or(DEFAULT_ORDER);
        match &spec.edges {
            Some(edges) => Ok(Arc::new(RadialGrid::from_edges(spec.dim, edges.clone(), order)?)),
            None => make_grid_with_order(spec.dim, spec.rmax, spec.n, order),
        }
    }

    /// Identity token; grids built separately never compare equal.
    pub fn same(&self, other: &RadialGrid) -> bool {
        self.id == other.id
    }

    /// Relative error of the quadrature of `exp(-r²/2)` against `(2π)^{N/2}`.
    pub fn gaussian_check(&self) -> f64 {
        let q: f64 = self
            .r
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * (-0.5 * r * r).exp())
            .sum();
        let exact = (2.0 * PI).powf(self.dim as f64 / 2.0);
        (q - exact).abs() / exact
    }

    /// `∫ f` over `R^N` for a radial profile sampled on the nodes.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Discrete Laplacian `-W^{-1} K f`.
    pub fn laplacian<T: Scalar>(&self, f: &[T]) -> Vec<T> {
        let kf = self.stiffness_apply(f);
        kf.iter()
            .zip(&self.weights)
            .map(|(&v, &w)| -v * T::from_real(1.0 / w))
            .collect()
    }

    /// `K f`; `Re(f̄ · K f) = ‖∇f‖²` exactly for the discrete form.
    pub fn stiffness_apply<T: Scalar>(&self, f: &[T]) -> Vec<T> {
        assert_eq!(f.len(), self.len());
        let k = &self.stiffness;
        (0..self.len())
            .map(|i| {
                let mut acc = T::default();
                for (&a, &v) in k.row_entries(i).iter().zip(&f[k.row_range(i)]) {
                    acc += v.scale(a);
                }
                acc
            })
            .collect()
    }

    fn element_basis(&self, e: usize) -> &ElementBasis {
        if e == 0 {
            &self.first
        } else {
            &self.rest
        }
    }

    /// Nodal values of element `e`, with the dropped boundary node as zero.
    fn element_values<T: Scalar>(&self, f: &[T], e: usize) -> Vec<T> {
        (0..=self.order)
            .map(|k| {
                let g = e * self.order + k;
                if g < f.len() {
                    f[g]
                } else {
                    T::default()
                }
            })
            .collect()
    }

    /// Radial derivative `f'` at the nodes; interface nodes take the mean of
    /// both one-sided element derivatives and the origin is set to zero.
    pub fn derivative<T: Scalar>(&self, f: &[T]) -> Vec<T> {
        assert_eq!(f.len(), self.len());
        let n = self.len();
        let mut out = vec![T::default(); n];
        let mut count = vec![0u8; n];
        for e in 0..self.elements() {
            let basis = self.element_basis(e);
            let half = 0.5 * (self.edges[e + 1] - self.edges[e]);
            let vals = self.element_values(f, e);
            for i in 0..=self.order {
                let g = e * self.order + i;
                if g >= n {
                    continue;
                }
                let mut acc = T::default();
                for (j, &v) in vals.iter().enumerate() {
                    acc += T::from_real(basis.d[i][j] / half) * v;
                }
                out[g] += acc;
                count[g] += 1;
            }
        }
        for (v, &c) in out.iter_mut().zip(&count) {
            if c > 1 {
                *v = *v * T::from_real(1.0 / c as f64);
            }
        }
        out[0] = T::default();
        out
    }

    /// Index of the element containing radius `r` (clamped to the grid).
    pub fn locate(&self, r: f64) -> usize {
        let ne = self.elements();
        match self.edges.binary_search_by(|e| e.partial_cmp(&r).unwrap()) {
            Ok(i) => i.min(ne - 1),
            Err(i) => i.saturating_sub(1).min(ne - 1),
        }
    }

    /// Spectral interpolation of nodal values at radius `r`; zero beyond `rmax`.
    pub fn interpolate<T: Scalar>(&self, f: &[T], r: f64) -> T {
        if r >= self.rmax() || r < 0.0 {
            return T::default();
        }
        let e = self.locate(r);
        let basis = self.element_basis(e);
        let (a, b) = (self.edges[e], self.edges[e + 1]);
        let t = 2.0 * (r - a) / (b - a) - 1.0;
        let row = lagrange_row(&basis.x, &basis.bary, t);
        let mut acc = T::default();
        for (k, l) in row.iter().enumerate() {
            let g = e * self.order + k;
            if g < f.len() {
                acc += T::from_real(*l) * f[g];
            }
        }
        acc
    }

    /// Interpolates `f` onto each of the radii in `rs`.
    pub fn interpolate_many<T: Scalar>(&self, f: &[T], rs: &[f64]) -> Vec<T> {
        rs.iter().map(|&r| self.interpolate(f, r)).collect()
    }

    /// Largest spacing between consecutive nodes.
    pub fn max_spacing(&self) -> f64 {
        let mut m = self.r.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        if let Some(last) = self.r.last() {
            m = m.max(self.rmax() - last);
        }
        m
    }
}
