//! Real spherical harmonics sampled on a DFS grid (test fixtures and oracles).

use ndarray::Array2;
use rand::Rng;

use crate::dfs::{extend_bmc, Grid, SphereField};

/// Unnormalized associated Legendre function `P_d^m(x)`, `0 ≤ m ≤ d`, without
/// the Condon–Shortley phase.
pub fn assoc_legendre(d: usize, m: usize, x: f64) -> f64 {
    assert!(m <= d, "order exceeds degree");
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 0..m {
        pmm *= (2 * i + 1) as f64 * s;
    }
    if d == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if d == m + 1 {
        return pm1;
    }
    let mut pm2 = pmm;
    for n in m + 2..=d {
        let p = ((2 * n - 1) as f64 * x * pm1 - (n + m - 1) as f64 * pm2) / (n - m) as f64;
        pm2 = pm1;
        pm1 = p;
    }
    pm1
}

/// Real harmonic of degree `d`: `P_d^{|m|}(cos θ)·cos(mφ)` for `m ≥ 0`,
/// `P_d^{|m|}(cos θ)·sin(|m|φ)` for `m < 0`.
pub fn real_harmonic(d: usize, m: i64, phi: f64, theta: f64) -> f64 {
    let am = m.unsigned_abs() as usize;
    let p = assoc_legendre(d, am, theta.cos());
    if m >= 0 {
        p * (m as f64 * phi).cos()
    } else {
        p * (am as f64 * phi).sin()
    }
}

pub fn harmonic_field(grid: Grid, d: usize, m: i64) -> SphereField {
    SphereField::from_native_fn(grid, |phi, theta| real_harmonic(d, m, phi, theta))
}

/// Eigenvalue of `-Δ` on degree-`d` harmonics.
pub fn laplace_eigenvalue(d: usize) -> f64 {
    (d * (d + 1)) as f64
}

/// Table `p[m][d] = P_d^m(x)` for `0 ≤ m ≤ d ≤ dmax`.
pub fn legendre_table(dmax: usize, x: f64) -> Vec<Vec<f64>> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut table = Vec::with_capacity(dmax + 1);
    let mut pmm = 1.0;
    for m in 0..=dmax {
        if m > 0 {
            pmm *= (2 * m - 1) as f64 * s;
        }
        let mut col = vec![0.0; dmax + 1];
        col[m] = pmm;
        if m < dmax {
            col[m + 1] = x * (2 * m + 1) as f64 * pmm;
        }
        for n in m + 2..=dmax {
            col[n] = ((2 * n - 1) as f64 * x * col[n - 1] - (n + m - 1) as f64 * col[n - 2])
                / (n - m) as f64;
        }
        table.push(col);
    }
    table
}

/// Random combination of real harmonics of degree `dmin..=dmax`.
///
/// Each harmonic is scaled by `1/P_d^m` magnitude (`(d+m)!/(d-m)!` grows
/// quickly) so all modes contribute comparably.
pub fn random_harmonic_sum(
    grid: Grid,
    dmin: usize,
    dmax: usize,
    rng: &mut impl Rng,
) -> SphereField {
    let mut cos_c = vec![vec![0.0; dmax + 1]; dmax + 1];
    let mut sin_c = vec![vec![0.0; dmax + 1]; dmax + 1];
    for d in dmin..=dmax {
        for m in 0..=d {
            let scale = 1.0 / norm_factor(d, m);
            cos_c[m][d] = rng.gen_range(-1.0..1.0) * scale;
            if m > 0 {
                sin_c[m][d] = rng.gen_range(-1.0..1.0) * scale;
            }
        }
    }
    let (n_phi, rows) = grid.native_shape();
    let mut native = Array2::zeros((n_phi, rows));
    for r in 0..rows {
        let p = legendre_table(dmax, grid.native_theta(r).cos());
        let (a, b): (Vec<f64>, Vec<f64>) = (0..=dmax)
            .map(|m| {
                let pm = &p[m];
                (
                    (m..=dmax).map(|d| cos_c[m][d] * pm[d]).sum::<f64>(),
                    (m..=dmax).map(|d| sin_c[m][d] * pm[d]).sum::<f64>(),
                )
            })
            .unzip();
        for i in 0..n_phi {
            let phi = grid.phi(i);
            native[[i, r]] = (0..=dmax)
                .map(|m| {
                    let (s, c) = (m as f64 * phi).sin_cos();
                    a[m] * c + b[m] * s
                })
                .sum();
        }
    }
    extend_bmc(grid, &native).expect("native shape")
}

/// `sqrt((d+m)!/(d-m)!)`, the size of `P_d^m` relative to `P_d`.
fn norm_factor(d: usize, m: usize) -> f64 {
    ((d - m + 1)..=(d + m))
        .map(|v| v as f64)
        .product::<f64>()
        .sqrt()
}
