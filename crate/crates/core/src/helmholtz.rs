//! Spectral Helmholtz/Poisson solver on the sphere.
//!
//! `(-Δ + α) u = f` is multiplied through by `sin²θ`, which removes the
//! coordinate singularities:
//!
//! ```text
//! -sin²θ u_θθ - sinθ cosθ u_θ - u_φφ + α sin²θ u = sin²θ f
//! ```
//!
//! In DFS coefficients every azimuthal mode `l` decouples into a real
//! pentadiagonal system on the polar coefficients. The systems are solved on
//! the symmetric index set `|k| ≤ n_θ/2 - 1`; the polar Nyquist coefficient is
//! zeroed, which keeps the truncated operator commuting with `k ↦ -k` and the
//! solution exactly real. For `α = 0` the `l = 0` system is singular
//! (constants); its `k = 0` row is replaced by the zero-mean constraint.

use std::collections::HashMap;

use nalgebra::{DMatrix, Dyn, LU};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::banded::{BandLu, BandMatrix};
use crate::dfs::{
    analyze, derivative, integrate_sphere, norm_l2, remove_mean, synthesize, Derivative, Grid,
    SpectralCoeffs, SphereField,
};
use crate::error::{Error, Result};
use crate::harmonics::random_harmonic_sum;

/// Relative tolerance of the zero-mean precondition for `α = 0`.
pub const MEAN_TOLERANCE: f64 = 1e-8;

/// Assembled mode operator `-S²D² - SCD + l² + αS²` on `|k| ≤ K - 1`.
#[derive(Clone, Debug)]
pub struct ModeMatrix {
    pub l: i64,
    pub alpha: f64,
    band: BandMatrix,
}

impl ModeMatrix {
    /// Polar wavenumber range `[-k_max, k_max]`.
    pub fn k_max(&self) -> i64 {
        (self.band.n() as i64 - 1) / 2
    }

    pub fn dim(&self) -> usize {
        self.band.n()
    }

    pub fn entry(&self, k: i64, j: i64) -> f64 {
        let km = self.k_max();
        self.band.get((k + km) as usize, (j + km) as usize)
    }

    /// Applies the operator to a polar coefficient vector ordered by ascending `k`.
    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.band.apply(u)
    }
}

pub fn assemble_mode(l: i64, alpha: f64, n_theta: usize) -> Result<ModeMatrix> {
    if n_theta < 4 || n_theta % 2 != 0 {
        return Err(Error::param("n_theta", "must be even and at least 4"));
    }
    check_alpha(alpha)?;
    let km = (n_theta / 2 - 1) as i64;
    let m = (2 * km + 1) as usize;
    let mut band = BandMatrix::zeros(m, 2, 2);
    let l2 = (l * l) as f64;
    for p in 0..m {
        let j = p as i64 - km;
        let jf = j as f64;
        band.set(p, p, 0.5 * jf * jf + l2 + 0.5 * alpha);
        if p + 2 < m {
            band.set(p + 2, p, -0.25 * (jf * jf + jf + alpha));
        }
        if p >= 2 {
            band.set(p - 2, p, -0.25 * (jf * jf - jf + alpha));
        }
    }
    Ok(ModeMatrix { l, alpha, band })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::param(
            "alpha",
            format!("must be finite and nonnegative, got {alpha}"),
        ));
    }
    Ok(())
}

/// Zero-mean constraint functional: `v_k = (1 + (-1)^k)/(1 - k²)`, `v_{±1} = 0`.
pub fn constraint_vector(k_max: i64) -> Vec<f64> {
    (-k_max..=k_max)
        .map(|k| {
            if k.abs() == 1 || k % 2 != 0 {
                0.0
            } else {
                2.0 / (1.0 - (k * k) as f64)
            }
        })
        .collect()
}

/// `sin²θ · f` on polar coefficients: `½f_k - ¼f_{k-2} - ¼f_{k+2}`.
fn sin2_multiply(f: &[Complex64]) -> Vec<Complex64> {
    let m = f.len();
    (0..m)
        .map(|p| {
            let mut v = f[p] * 0.5;
            if p >= 2 {
                v -= f[p - 2] * 0.25;
            }
            if p + 2 < m {
                v -= f[p + 2] * 0.25;
            }
            v
        })
        .collect()
}

#[derive(Clone, Debug)]
enum ModeFactor {
    Band(BandLu),
    Dense(LU<f64, Dyn, Dyn>),
}

impl ModeFactor {
    fn solve(&self, rhs: &mut [Complex64], l: i64, alpha: f64) -> Result<()> {
        match self {
            ModeFactor::Band(lu) => lu.solve_in_place(rhs),
            ModeFactor::Dense(lu) => {
                let m = rhs.len();
                let b = DMatrix::from_fn(m, 2, |i, c| if c == 0 { rhs[i].re } else { rhs[i].im });
                let x = lu.solve(&b).ok_or(Error::SingularMode { l, alpha })?;
                for (i, z) in rhs.iter_mut().enumerate() {
                    *z = Complex64::new(x[(i, 0)], x[(i, 1)]);
                }
            }
        }
        Ok(())
    }
}

/// Factorizations of all modes `|l| = 0 … n_φ/2` for one shift.
#[derive(Clone, Debug)]
struct ShiftFactors {
    alpha: f64,
    modes: Vec<ModeFactor>,
}

impl ShiftFactors {
    fn build(grid: Grid, alpha: f64) -> Result<Self> {
        let modes = (0..=grid.n_phi() / 2)
            .map(|l| factor_mode(l as i64, alpha, grid.n_theta()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { alpha, modes })
    }
}

fn factor_mode(l: i64, alpha: f64, n_theta: usize) -> Result<ModeFactor> {
    let a = assemble_mode(l, alpha, n_theta)?;
    if l == 0 && alpha == 0.0 {
        let km = a.k_max();
        let m = a.dim();
        let v = constraint_vector(km);
        let zero_row = km as usize;
        let dense = DMatrix::from_fn(m, m, |i, j| {
            if i == zero_row {
                2.0 * std::f64::consts::PI * v[j]
            } else {
                a.band.get(i, j)
            }
        });
        let lu = dense.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularMode { l, alpha });
        }
        return Ok(ModeFactor::Dense(lu));
    }
    a.band
        .factorize()
        .map(ModeFactor::Band)
        .map_err(|_| Error::SingularMode { l, alpha })
}

/// Immutable set of per-mode factorizations, keyed by shift `α`.
#[derive(Clone, Debug)]
pub struct SolverPlan {
    grid: Grid,
    shifts: HashMap<u64, ShiftFactors>,
}

impl SolverPlan {
    /// Factorizes every mode for `α = 0` and for each listed shift.
    pub fn new(grid: Grid, alphas: &[f64]) -> Result<Self> {
        let mut shifts = HashMap::new();
        for &alpha in std::iter::once(&0.0).chain(alphas) {
            check_alpha(alpha)?;
            let key = alpha_key(alpha);
            if !shifts.contains_key(&key) {
                shifts.insert(key, ShiftFactors::build(grid, alpha)?);
            }
        }
        Ok(Self { grid, shifts })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn has_shift(&self, alpha: f64) -> bool {
        self.shifts.contains_key(&alpha_key(alpha))
    }

    pub fn shifts(&self) -> Vec<f64> {
        let mut a: Vec<f64> = self.shifts.values().map(|s| s.alpha).collect();
        a.sort_by(f64::total_cmp);
        a
    }

    /// Solves `(-Δ + α) u = f`. Shifts absent from the plan are factorized
    /// for this call only.
    pub fn solve(&self, f: &SphereField, alpha: f64) -> Result<SphereField> {
        if f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        check_alpha(alpha)?;
        if alpha == 0.0 {
            let mean = integrate_sphere(f);
            let norm = norm_l2(f);
            if mean.abs() > MEAN_TOLERANCE * norm {
                return Err(Error::MeanViolation { mean, norm });
            }
        }
        self.solve_unchecked(f, alpha)
    }

    fn solve_unchecked(&self, f: &SphereField, alpha: f64) -> Result<SphereField> {
        let uhat = self.solve_coeffs(&analyze(f), alpha)?;
        Ok(synthesize(&uhat))
    }

    /// Coefficient-space solve; the polar Nyquist input is ignored and the
    /// output's polar Nyquist row is zero.
    pub fn solve_coeffs(&self, fhat: &SpectralCoeffs, alpha: f64) -> Result<SpectralCoeffs> {
        if fhat.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        check_alpha(alpha)?;
        let transient;
        let factors = match self.shifts.get(&alpha_key(alpha)) {
            Some(s) => s,
            None => {
                transient = ShiftFactors::build(self.grid, alpha)?;
                &transient
            }
        };
        let grid = self.grid;
        let km = (grid.n_theta() / 2 - 1) as i64;
        let m = (2 * km + 1) as usize;
        let src = fhat.coeffs();
        let mut out = Array2::<Complex64>::zeros(grid.shape());
        let mut f = vec![Complex64::new(0.0, 0.0); m];
        for il in 0..grid.n_phi() {
            let l = grid.phi_wavenumber(il);
            for (p, fp) in f.iter_mut().enumerate() {
                *fp = src[[il, grid.theta_index(p as i64 - km)]];
            }
            let mut rhs = sin2_multiply(&f);
            if l == 0 && alpha == 0.0 {
                rhs[km as usize] = Complex64::new(0.0, 0.0);
            }
            factors.modes[l.unsigned_abs() as usize].solve(&mut rhs, l, alpha)?;
            for (p, x) in rhs.iter().enumerate() {
                out[[il, grid.theta_index(p as i64 - km)]] = *x;
            }
        }
        SpectralCoeffs::new(grid, out)
    }

    /// `(-Δ)⁻¹ f` for zero-mean `f`.
    pub fn inv_laplacian(&self, f: &SphereField) -> Result<SphereField> {
        self.solve(f, 0.0)
    }

    /// `(-Δ)⁻¹ (f - f̄)`, defined for any `f`.
    pub fn inv_laplacian_projected(&self, f: &SphereField) -> Result<SphereField> {
        if f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        self.solve_unchecked(&remove_mean(f), 0.0)
    }
}

fn alpha_key(alpha: f64) -> u64 {
    // +0.0 and -0.0 share a key
    (alpha + 0.0).to_bits()
}

/// Free-function form of [`SolverPlan::solve`].
pub fn solve_helmholtz(plan: &SolverPlan, f: &SphereField, alpha: f64) -> Result<SphereField> {
    plan.solve(f, alpha)
}

pub fn inv_laplacian(plan: &SolverPlan, f: &SphereField) -> Result<SphereField> {
    plan.inv_laplacian(f)
}

/// Largest observed `‖(-Δ)⁻¹f‖ / ‖f‖` over seeded random zero-mean fields.
///
/// Trials draw [`random_zero_mean_field`] samples from one random stream, so
/// the estimate is monotone in `trials`.
pub fn estimate_inv_norm(plan: &SolverPlan, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let grid = plan.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0_f64;
    for _ in 0..trials {
        let f = random_zero_mean_field(grid, &mut rng);
        let norm = norm_l2(&f);
        if norm == 0.0 {
            continue;
        }
        let u = plan.inv_laplacian(&f)?;
        best = best.max(norm_l2(&u) / norm);
    }
    Ok(best)
}

/// Random smooth zero-mean field: a combination of real spherical harmonics
/// of degree `1..=D` with uniform coefficients, `D` drawn uniformly from
/// `1..=min(n/4, 16)`.
pub fn random_zero_mean_field(grid: Grid, rng: &mut impl Rng) -> SphereField {
    let max_degree = (grid.n_theta().min(grid.n_phi()) / 4).clamp(1, 16);
    let degree = rng.gen_range(1..=max_degree);
    remove_mean(&random_harmonic_sum(grid, 1, degree, rng))
}

/// Relative residual `max|Aû - S²f̂| / max|S²f̂|` of the assembled mode
/// operators (without the constraint row) applied to the solution.
pub fn operator_residual(u: &SphereField, f: &SphereField, alpha: f64) -> Result<f64> {
    let grid = u.grid();
    if f.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let uh = analyze(u);
    let fh = analyze(f);
    let km = (grid.n_theta() / 2 - 1) as i64;
    let m = (2 * km + 1) as usize;
    let mut num = 0.0_f64;
    let mut den = 0.0_f64;
    for il in 0..grid.n_phi() {
        let l = grid.phi_wavenumber(il);
        let a = assemble_mode(l, alpha, grid.n_theta())?;
        let gather = |c: &SpectralCoeffs| -> Vec<Complex64> {
            (0..m)
                .map(|p| c.coeffs()[[il, grid.theta_index(p as i64 - km)]])
                .collect()
        };
        let lhs = a.apply(&gather(&uh));
        let rhs = sin2_multiply(&gather(&fh));
        for (x, y) in lhs.iter().zip(&rhs) {
            num = num.max((x - y).norm());
            den = den.max(y.norm());
        }
    }
    Ok(num / den.max(f64::MIN_POSITIVE))
}

/// Relative max-norm residual of the `sin²θ`-form equation evaluated in value
/// space with spectral derivatives.
pub fn value_residual(u: &SphereField, f: &SphereField, alpha: f64) -> Result<f64> {
    let grid = u.grid();
    if f.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let utt = derivative(u, Derivative::ThetaTheta);
    let ut = derivative(u, Derivative::Theta);
    let upp = derivative(u, Derivative::PhiPhi);
    let mut num = 0.0_f64;
    let mut den = 0.0_f64;
    for ((i, j), &fv) in f.values().indexed_iter() {
        let t = grid.theta(j);
        let (s, c) = t.sin_cos();
        let rhs = s * s * fv;
        let lhs =
            -s * s * utt.values()[[i, j]] - s * c * ut.values()[[i, j]] - upp.values()[[i, j]]
                + alpha * s * s * u.values()[[i, j]];
        num = num.max((lhs - rhs).abs());
        den = den.max(rhs.abs());
    }
    Ok(num / den.max(f64::MIN_POSITIVE))
}
