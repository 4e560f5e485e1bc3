use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::RadialGrid;
use crate::error::{Error, Result};

/// Decay class of a sampled function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    /// exponentially decaying (the tail must vanish at `rmax`)
    Exponential,
    /// polynomially weighted or untagged
    #[default]
    Polynomial,
}

const TAIL_TOL: f64 = 1e-12;

/// Complex samples of a radial function on a [`RadialGrid`].
#[derive(Debug, Clone)]
pub struct RadialFunction {
    grid: Arc<RadialGrid>,
    values: Vec<Complex64>,
    decay: Decay,
}

impl RadialFunction {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<Complex64>, decay: Decay) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
        let f = Self { grid, values, decay };
        if decay == Decay::Exponential && !f.tail_is_negligible() {
            return Err(Error::InvalidArgument(format!(
                "tail {:.2e} not negligible against peak {:.2e}",
                f.values.last().map_or(0.0, |v| v.norm()),
                f.sup_norm()
            )));
        }
        Ok(f)
    }

    /// Real function; the tag is not validated (used for intermediate results).
    pub fn from_real(grid: Arc<RadialGrid>, values: Vec<f64>, decay: Decay) -> Self {
        assert_eq!(values.len(), grid.len());
        let values = values.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        Self { grid, values, decay }
    }

    pub fn from_complex(grid: Arc<RadialGrid>, values: Vec<Complex64>, decay: Decay) -> Self {
        assert_eq!(values.len(), grid.len());
        Self { grid, values, decay }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64, decay: Decay) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::from_real(grid, values, decay)
    }

    pub fn from_complex_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> Complex64, decay: Decay) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self { grid, values, decay }
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![Complex64::default(); n], decay: Decay::Exponential }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn decay(&self) -> Decay {
        self.decay
    }

    pub fn with_decay(mut self, decay: Decay) -> Self {
        self.decay = decay;
        self
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.im).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `|f(rmax⁻)| ≤ 1e-12 · max|f|`, checked on the last node.
    pub fn tail_is_negligible(&self) -> bool {
        let tail = self.values.last().map_or(0.0, |v| v.norm());
        tail <= TAIL_TOL * self.sup_norm()
    }

    pub fn check_grid(&self, other: &RadialFunction) -> Result<()> {
        if self.grid.same(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("functions live on different grids".into()))
        }
    }

    pub fn map(&self, f: impl Fn(f64, Complex64) -> Complex64) -> Self {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&r, &v)| f(r, v))
            .collect();
        Self { grid: self.grid.clone(), values, decay: self.decay }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|_, v| v * c)
    }

    /// `self + c·other` on the same grid.
    pub fn axpy(&self, c: Complex64, other: &RadialFunction) -> Result<Self> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(Self { grid: self.grid.clone(), values, decay: self.decay })
    }

    pub fn conj(&self) -> Self {
        self.map(|_, v| v.conj())
    }

    pub fn at(&self, r: f64) -> Complex64 {
        self.grid.interpolate(&self.values, r)
    }

    /// Resamples onto another grid of the same dimension by spectral interpolation.
    pub fn resample(&self, target: Arc<RadialGrid>) -> Result<Self> {
        if target.dim() != self.grid.dim() {
            return Err(Error::GridMismatch("dimension differs".into()));
        }
        let values = self.grid.interpolate_many(&self.values, target.nodes());
        Ok(Self { grid: target, values, decay: self.decay })
    }

    /// CSV with header `r,re,im`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,re,im\n");
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(s, "{r:.17e},{:.17e},{:.17e}", v.re, v.im);
        }
        s
    }

    /// Parses CSV written by [`to_csv`](Self::to_csv); radii must match the grid nodes.
    pub fn from_csv(grid: Arc<RadialGrid>, text: &str, decay: Decay) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("r,re,im") => {}
            other => return Err(Error::Parse(format!("bad header {other:?}"))),
        }
        let mut values = Vec::with_capacity(grid.len());
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 columns", i + 2)));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))
            };
            let (r, re, im) = (num(cols[0])?, num(cols[1])?, num(cols[2])?);
            match grid.nodes().get(i) {
                Some(&node) if (node - r).abs() <= 1e-12 * (1.0 + node) => {}
                _ => return Err(Error::GridMismatch(format!("row {i} radius {r} is not a grid node"))),
            }
            values.push(Complex64::new(re, im));
        }
        Self::new(grid, values, decay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::make_grid;

    #[test]
    fn csv_roundtrip() {
        let g = make_grid(2, 20.0, 256).unwrap();
        let f = RadialFunction::from_complex_fn(
            g.clone(),
            |r| Complex64::new((-r * r).exp(), 0.5 * (-r * r).exp() * r),
            Decay::Exponential,
        );
        let text = f.to_csv();
        assert!(text.starts_with("r,re,im\n"));
        let h = RadialFunction::from_csv(g, &text, Decay::Exponential).unwrap();
        assert_eq!(h.values(), f.values());
    }

    #[test]
    fn exponential_tag_checks_tail() {
        let g = make_grid(1, 20.0, 256).unwrap();
        let ok = RadialFunction::new(g.clone(), g.nodes().iter().map(|r| Complex64::from((-r * r).exp())).collect(), Decay::Exponential);
        assert!(ok.is_ok());
        let bad = RadialFunction::new(g.clone(), vec![Complex64::from(1.0); g.len()], Decay::Exponential);
        assert!(bad.is_err());
        let nan = RadialFunction::new(g.clone(), vec![Complex64::new(f64::NAN, 0.0); g.len()], Decay::Polynomial);
        assert!(nan.is_err());
    }

    #[test]
    fn different_grids_do_not_mix() {
        let g = make_grid(1, 20.0, 256).unwrap();
        let h = make_grid(1, 20.0, 256).unwrap();
        let a = RadialFunction::zeros(g);
        let b = RadialFunction::zeros(h);
        assert!(matches!(a.axpy(Complex64::from(1.0), &b), Err(Error::GridMismatch(_))));
    }
}
