//! Gauss–Legendre and Gauss–Lobatto–Jacobi nodes on `[-1, 1]`.

use nalgebra::DMatrix;

/// Jacobi polynomial `P_n^{(a,b)}(x)` and its derivative.
pub fn jacobi(n: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p0 = 1.0;
    let mut p1 = 0.5 * (a - b + (a + b + 2.0) * x);
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + a + b;
        let c1 = 2.0 * k * (k + a + b) * (s - 2.0);
        let c2 = (s - 1.0) * (a * a - b * b);
        let c3 = (s - 2.0) * (s - 1.0) * s;
        let c4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s;
        let p2 = ((c2 + c3 * x) * p1 - c4 * p0) / c1;
        p0 = p1;
        p1 = p2;
    }
    // d/dx P_n^{(a,b)} = (n+a+b+1)/2 P_{n-1}^{(a+1,b+1)}
    let nf = n as f64;
    let (q, _) = jacobi(n - 1, a + 1.0, b + 1.0, x);
    (p1, 0.5 * (nf + a + b + 1.0) * q)
}

/// Zeros of `P_n^{(a,b)}` via the Golub–Welsch matrix, polished by Newton.
pub fn jacobi_zeros(n: usize, a: f64, b: f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut t = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        let diag = if s.abs() < 1e-300 || (s + 2.0).abs() < 1e-300 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        t[(k, k)] = diag;
        if k + 1 < n {
            let k1 = kf + 1.0;
            let s1 = 2.0 * k1 + a + b;
            let num = 4.0 * k1 * (k1 + a) * (k1 + b) * (k1 + a + b);
            let den = s1 * s1 * (s1 + 1.0) * (s1 - 1.0);
            let off = (num / den).sqrt();
            t[(k, k + 1)] = off;
            t[(k + 1, k)] = off;
        }
    }
    let eig = t.symmetric_eigenvalues();
    let mut xs: Vec<f64> = eig.iter().copied().collect();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    for x in xs.iter_mut() {
        for _ in 0..20 {
            let (p, dp) = jacobi(n, a, b, *x);
            let dx = p / dp;
            *x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
    }
    xs
}

/// Gauss–Legendre rule with `n` points.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let x = jacobi_zeros(n, 0.0, 0.0);
    let w = x
        .iter()
        .map(|&xi| {
            let (_, dp) = jacobi(n, 0.0, 0.0, xi);
            2.0 / ((1.0 - xi * xi) * dp * dp)
        })
        .collect();
    (x, w)
}

/// Barycentric weights for the node set `x`.
pub fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let prod: f64 = (0..x.len())
                .filter(|&j| j != i)
                .map(|j| x[i] - x[j])
                .product();
            1.0 / prod
        })
        .collect()
}

/// Values of all Lagrange cardinal functions of `x` at the point `t`.
pub fn lagrange_row(x: &[f64], bw: &[f64], t: f64) -> Vec<f64> {
    if let Some(k) = x.iter().position(|&xi| xi == t) {
        let mut row = vec![0.0; x.len()];
        row[k] = 1.0;
        return row;
    }
    let terms: Vec<f64> = x.iter().zip(bw).map(|(&xi, &wi)| wi / (t - xi)).collect();
    let s: f64 = terms.iter().sum();
    terms.iter().map(|v| v / s).collect()
}

/// Lobatto nodes and weights for `∫_{-1}^{1} (1+x)^a f(x) dx` with `p+1` points.
///
/// Both endpoints are nodes and receive positive weights even when the
/// weight function vanishes at `x = -1`.
pub fn lobatto_jacobi(p: usize, a: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(p >= 1);
    let mut x = vec![-1.0];
    x.extend(jacobi_zeros(p - 1, 1.0, 1.0 + a as f64));
    x.push(1.0);
    let bw = barycentric_weights(&x);
    let (gx, gw) = gauss_legendre(p + a / 2 + 2);
    let mut w = vec![0.0; p + 1];
    for (&t, &wt) in gx.iter().zip(&gw) {
        let row = lagrange_row(&x, &bw, t);
        let jac = (1.0 + t).powi(a as i32);
        for (wi, li) in w.iter_mut().zip(&row) {
            *wi += wt * jac * li;
        }
    }
    (x, w)
}

/// Spectral differentiation matrix on the node set `x`.
pub fn differentiation_matrix(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let bw = barycentric_weights(x);
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                d[i][j] = bw[j] / bw[i] / (x[i] - x[j]);
                diag -= d[i][j];
            }
        }
        d[i][i] = diag;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        for k in 0..12 {
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn lobatto_jacobi_exact_to_degree_2p_minus_1() {
        for a in 0..5usize {
            let p = 8;
            let (x, w) = lobatto_jacobi(p, a);
            assert!(w.iter().all(|&v| v > 0.0), "a={a}: {w:?}");
            for k in 0..(2 * p) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
                // exact ∫(1+x)^a x^k via a high-order Legendre rule
                let (gx, gw) = gauss_legendre(20);
                let e: f64 = gx
                    .iter()
                    .zip(&gw)
                    .map(|(t, wt)| wt * (1.0 + t).powi(a as i32) * t.powi(k as i32))
                    .sum();
                assert!((q - e).abs() < 1e-12, "a={a} k={k}: {q} vs {e}");
            }
        }
    }

    #[test]
    fn differentiation_is_exact_on_polynomials() {
        let (x, _) = lobatto_jacobi(6, 0);
        let d = differentiation_matrix(&x);
        let f: Vec<f64> = x.iter().map(|t| t.powi(5) - 2.0 * t).collect();
        for i in 0..x.len() {
            let df: f64 = (0..x.len()).map(|j| d[i][j] * f[j]).sum();
            let exact = 5.0 * x[i].powi(4) - 2.0;
            assert!((df - exact).abs() < 1e-11);
        }
    }
}
