//! Double Fourier sphere (DFS) discretization.
//!
//! A function on the unit sphere, given in colatitude/longitude coordinates
//! `(φ, θ) ∈ [-π, π) × [0, π]`, is extended to the doubled torus
//! `[-π, π) × [-π, π)` by the glide reflection `f(φ, -θ) = f(φ + π, θ)`.
//! The extended function is periodic in both directions and can be
//! represented by a double Fourier series
//!
//! ```text
//! f(φ, θ) = Σ_{k,l} û_{kl} e^{ikθ} e^{ilφ}
//! ```
//!
//! Index convention used throughout the crate: `k` is always the polar
//! (θ) wavenumber and `l` the azimuthal (φ) wavenumber. Coefficient arrays
//! are laid out as `[l_index, k_index]` in FFT order, so the polar vector of
//! one azimuthal mode is contiguous.
//!
//! Grid nodes are `φ_i = -π + i·h_φ` and `θ_j = -π + j·h_θ`; the rows
//! `θ = -π` (`j = 0`, identified with `θ = π`) and `θ = 0` (`j = n_θ/2`)
//! are the two poles.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Surface area of the unit sphere.
pub const SPHERE_AREA: f64 = 4.0 * PI;

/// Area of the doubled coordinate torus, used by the unweighted diagnostics.
pub const DOUBLED_AREA: f64 = 4.0 * PI * PI;

/// Absolute glide-symmetry tolerance (scaled by `max(1, ‖f‖∞)`).
pub const BMC_TOLERANCE: f64 = 1e-12;

/// Uniform tensor grid on the doubled domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    n_phi: usize,
    n_theta: usize,
}

impl Grid {
    pub fn new(n_phi: usize, n_theta: usize) -> Result<Self> {
        if n_phi < 4 || n_theta < 4 || n_phi % 2 != 0 || n_theta % 2 != 0 {
            return Err(Error::InvalidGrid { n_phi, n_theta });
        }
        Ok(Self { n_phi, n_theta })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_phi, self.n_theta)
    }

    pub fn h_phi(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }

    pub fn h_theta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn phi(&self, i: usize) -> f64 {
        -PI + i as f64 * self.h_phi()
    }

    pub fn theta(&self, j: usize) -> f64 {
        -PI + j as f64 * self.h_theta()
    }

    /// Number of polar rows of the native domain `θ ∈ [0, π]`, both poles included.
    pub fn native_rows(&self) -> usize {
        self.n_theta / 2 + 1
    }

    pub fn native_shape(&self) -> (usize, usize) {
        (self.n_phi, self.native_rows())
    }

    /// Colatitude of native row `r`.
    pub fn native_theta(&self, r: usize) -> f64 {
        r as f64 * self.h_theta()
    }

    /// Doubled-grid row holding native row `r` (`θ = r·h_θ`).
    pub fn native_to_doubled_row(&self, r: usize) -> usize {
        (self.n_theta / 2 + r) % self.n_theta
    }

    /// Row of the pole `θ = 0`.
    pub fn north_row(&self) -> usize {
        self.n_theta / 2
    }

    /// Row of the pole `θ = ±π`.
    pub fn south_row(&self) -> usize {
        0
    }

    pub fn is_pole_row(&self, j: usize) -> bool {
        j == self.north_row() || j == self.south_row()
    }

    /// Image of node `(i, j)` under the glide reflection `(φ, θ) ↦ (φ + π, -θ)`.
    pub fn glide(&self, i: usize, j: usize) -> (usize, usize) {
        (
            (i + self.n_phi / 2) % self.n_phi,
            (self.n_theta - j) % self.n_theta,
        )
    }

    /// Azimuthal wavenumber `l` stored at FFT index `idx`.
    pub fn phi_wavenumber(&self, idx: usize) -> i64 {
        wavenumber(idx, self.n_phi)
    }

    /// Polar wavenumber `k` stored at FFT index `idx`.
    pub fn theta_wavenumber(&self, idx: usize) -> i64 {
        wavenumber(idx, self.n_theta)
    }

    pub fn phi_index(&self, l: i64) -> usize {
        index_of(l, self.n_phi)
    }

    pub fn theta_index(&self, k: i64) -> usize {
        index_of(k, self.n_theta)
    }
}

fn wavenumber(idx: usize, n: usize) -> i64 {
    if idx < n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

fn index_of(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Real grid function on the doubled domain, `values[[i, j]] = f(φ_i, θ_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereField {
    grid: Grid,
    values: Array2<f64>,
}

impl SphereField {
    pub fn new(grid: Grid, values: Array2<f64>) -> Result<Self> {
        check_shape(grid.shape(), values.dim())?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: Array2::from_elem(grid.shape(), c),
        }
    }

    /// Samples `f(φ, θ)` at every node of the doubled grid.
    ///
    /// The caller is responsible for `f` being glide-symmetric; use
    /// [`SphereField::from_native_fn`] to sample only the native half.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = Array2::from_shape_fn(grid.shape(), |(i, j)| f(grid.phi(i), grid.theta(j)));
        Self { grid, values }
    }

    /// Samples `f(φ, θ)` on the native rows `θ ∈ [0, π]` and extends by glide reflection.
    pub fn from_native_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let native = Array2::from_shape_fn(grid.native_shape(), |(i, r)| {
            f(grid.phi(i), grid.native_theta(r))
        });
        extend_bmc(grid, &native).expect("native shape is derived from the grid")
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.mapv(f),
        }
    }

    pub fn zip_map(&self, other: &SphereField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let mut values = self.values.clone();
        Zip::from(&mut values)
            .and(&other.values)
            .for_each(|a, &b| *a = f(*a, b));
        Self {
            grid: self.grid,
            values,
        }
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &SphereField, b: f64) -> Self {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        self.map(|x| x + c)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest violation of the BMC-I structure: glide mismatch and pole-row variation.
    pub fn symmetry_defect(&self) -> f64 {
        let g = self.grid;
        let mut defect = 0.0_f64;
        for i in 0..g.n_phi {
            for j in 0..g.n_theta {
                let (gi, gj) = g.glide(i, j);
                defect = defect.max((self.values[[i, j]] - self.values[[gi, gj]]).abs());
            }
        }
        for j in [g.north_row(), g.south_row()] {
            let first = self.values[[0, j]];
            for i in 1..g.n_phi {
                defect = defect.max((self.values[[i, j]] - first).abs());
            }
        }
        defect
    }

    pub fn is_bmc(&self) -> bool {
        self.symmetry_defect() <= BMC_TOLERANCE * self.max_abs().max(1.0)
    }
}

impl Add for &SphereField {
    type Output = SphereField;
    fn add(self, rhs: &SphereField) -> SphereField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &SphereField {
    type Output = SphereField;
    fn sub(self, rhs: &SphereField) -> SphereField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &SphereField {
    type Output = SphereField;
    fn mul(self, rhs: f64) -> SphereField {
        self.map(|a| a * rhs)
    }
}

fn check_shape(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch { expected, got });
    }
    Ok(())
}

/// Extends native samples (`n_phi × (n_theta/2 + 1)`, rows `θ = 0 … π`) to
/// the doubled domain. Native rows are copied verbatim, so
/// `restrict(extend_bmc(x)) == x` bit for bit.
pub fn extend_bmc(grid: Grid, native: &Array2<f64>) -> Result<SphereField> {
    check_shape(grid.native_shape(), native.dim())?;
    let (n_phi, n_theta) = grid.shape();
    let half = n_theta / 2;
    let mut values = Array2::zeros(grid.shape());
    for i in 0..n_phi {
        for r in 0..=half {
            values[[i, grid.native_to_doubled_row(r)]] = native[[i, r]];
        }
        let shifted = (i + n_phi / 2) % n_phi;
        for r in 1..half {
            // θ = -r·h lives at row half - r
            values[[i, half - r]] = native[[shifted, r]];
        }
    }
    Ok(SphereField { grid, values })
}

/// Diagnostic attached to a restriction of a field that is not BMC-I.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BmcWarning {
    pub defect: f64,
}

#[derive(Clone, Debug)]
pub struct Restriction {
    pub values: Array2<f64>,
    pub warning: Option<BmcWarning>,
}

/// Native-domain samples of `f`. A symmetry violation is reported in
/// [`Restriction::warning`] but the samples are returned regardless.
pub fn restrict(f: &SphereField) -> Restriction {
    let grid = f.grid;
    let values = Array2::from_shape_fn(grid.native_shape(), |(i, r)| {
        f.values[[i, grid.native_to_doubled_row(r)]]
    });
    let defect = f.symmetry_defect();
    let warning = (defect > BMC_TOLERANCE * f.max_abs().max(1.0)).then_some(BmcWarning { defect });
    Restriction { values, warning }
}

/// Projects onto BMC-I fields: averages each node with its glide image and
/// replaces a non-constant pole row by its mean. Idempotent.
pub fn symmetrize_bmc(f: &SphereField) -> SphereField {
    let grid = f.grid;
    let (n_phi, n_theta) = grid.shape();
    let mut values = f.values.clone();
    for i in 0..n_phi {
        for j in 0..n_theta {
            let (gi, gj) = grid.glide(i, j);
            // visit each unordered pair once
            if (gi, gj) < (i, j) {
                continue;
            }
            let avg = 0.5 * (f.values[[i, j]] + f.values[[gi, gj]]);
            values[[i, j]] = avg;
            values[[gi, gj]] = avg;
        }
    }
    for j in [grid.north_row(), grid.south_row()] {
        let first = values[[0, j]];
        if (1..n_phi).all(|i| values[[i, j]] == first) {
            continue;
        }
        let mean = (0..n_phi).map(|i| values[[i, j]]).sum::<f64>() / n_phi as f64;
        for i in 0..n_phi {
            values[[i, j]] = mean;
        }
    }
    SphereField { grid, values }
}

/// Double Fourier coefficients, `coeffs[[l_idx, k_idx]] = û_{kl}` in FFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCoeffs {
    grid: Grid,
    coeffs: Array2<Complex64>,
}

impl SpectralCoeffs {
    pub fn new(grid: Grid, coeffs: Array2<Complex64>) -> Result<Self> {
        check_shape(grid.shape(), coeffs.dim())?;
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: Array2::zeros(grid.shape()),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coeffs(&self) -> &Array2<Complex64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.coeffs
    }

    /// Coefficient at polar wavenumber `k`, azimuthal wavenumber `l`.
    pub fn get(&self, k: i64, l: i64) -> Complex64 {
        self.coeffs[[self.grid.phi_index(l), self.grid.theta_index(k)]]
    }

    pub fn set(&mut self, k: i64, l: i64, value: Complex64) {
        let idx = [self.grid.phi_index(l), self.grid.theta_index(k)];
        self.coeffs[idx] = value;
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    planner()
        .lock()
        .expect("fft planner poisoned")
        .plan_fft(n, direction)
}

/// Unnormalized 2-D transform of a `[n_phi, n_theta]` array in place.
fn fft2(data: &mut Array2<Complex64>, direction: FftDirection) {
    let (n_phi, n_theta) = data.dim();
    let theta_fft = plan(n_theta, direction);
    let phi_fft = plan(n_phi, direction);

    let mut buf = data.as_standard_layout().into_owned();
    theta_fft.process(buf.as_slice_mut().expect("standard layout"));

    let mut cols = buf.t().as_standard_layout().into_owned();
    phi_fft.process(cols.as_slice_mut().expect("standard layout"));
    data.assign(&cols.t());
}

fn parity_sign(il: usize, ik: usize) -> f64 {
    if (il + ik) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Forward transform with the `1/(n_φ n_θ)` normalization.
///
/// The `(-1)^{k+l}` factor moves the phase origin from the first node
/// (`φ = θ = -π`) to `φ = θ = 0`, so coefficients refer to `e^{ikθ}e^{ilφ}`
/// in true angular coordinates.
pub fn analyze(f: &SphereField) -> SpectralCoeffs {
    let grid = f.grid;
    let mut data = f.values.mapv(|v| Complex64::new(v, 0.0));
    fft2(&mut data, FftDirection::Forward);
    let scale = 1.0 / (grid.n_phi * grid.n_theta) as f64;
    for ((il, ik), c) in data.indexed_iter_mut() {
        *c *= scale * parity_sign(il, ik);
    }
    SpectralCoeffs { grid, coeffs: data }
}

/// Inverse transform returning the complex grid values.
pub fn synthesize_complex(c: &SpectralCoeffs) -> Array2<Complex64> {
    let mut data = c.coeffs.clone();
    for ((il, ik), v) in data.indexed_iter_mut() {
        *v *= parity_sign(il, ik);
    }
    fft2(&mut data, FftDirection::Inverse);
    data
}

/// Inverse transform; the imaginary part (rounding for conjugate-symmetric input) is dropped.
pub fn synthesize(c: &SpectralCoeffs) -> SphereField {
    let values = synthesize_complex(c).mapv(|z| z.re);
    SphereField {
        grid: c.grid,
        values,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Derivative {
    Theta,
    ThetaTheta,
    Phi,
    PhiPhi,
    PhiTheta,
}

/// Spectral differentiation by coefficient-wise multiplication.
///
/// First derivatives zero the Nyquist coefficient in the differentiated
/// direction so real fields stay real.
pub fn diff(c: &SpectralCoeffs, which: Derivative) -> SpectralCoeffs {
    let grid = c.grid;
    let nyq_k = -(grid.n_theta as i64) / 2;
    let nyq_l = -(grid.n_phi as i64) / 2;
    let mut out = c.coeffs.clone();
    for ((il, ik), v) in out.indexed_iter_mut() {
        let l = grid.phi_wavenumber(il);
        let k = grid.theta_wavenumber(ik);
        let factor = match which {
            Derivative::Theta if k == nyq_k => Complex64::new(0.0, 0.0),
            Derivative::Theta => Complex64::new(0.0, k as f64),
            Derivative::ThetaTheta => Complex64::new(-((k * k) as f64), 0.0),
            Derivative::Phi if l == nyq_l => Complex64::new(0.0, 0.0),
            Derivative::Phi => Complex64::new(0.0, l as f64),
            Derivative::PhiPhi => Complex64::new(-((l * l) as f64), 0.0),
            Derivative::PhiTheta if k == nyq_k || l == nyq_l => Complex64::new(0.0, 0.0),
            Derivative::PhiTheta => Complex64::new(-((k * l) as f64), 0.0),
        };
        *v *= factor;
    }
    SpectralCoeffs { grid, coeffs: out }
}

/// Value-space derivative of a field.
pub fn derivative(f: &SphereField, which: Derivative) -> SphereField {
    synthesize(&diff(&analyze(f), which))
}

/// `∫₀^π e^{ikθ} sin θ dθ`.
pub fn quad_weight(k: i64) -> Complex64 {
    match k {
        1 => Complex64::new(0.0, PI / 2.0),
        -1 => Complex64::new(0.0, -PI / 2.0),
        _ => {
            let even = if k % 2 == 0 { 2.0 } else { 0.0 };
            Complex64::new(even / (1.0 - (k * k) as f64), 0.0)
        }
    }
}

/// Polar quadrature weights `w_k` for one grid, in FFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadWeights {
    weights: Vec<Complex64>,
}

impl QuadWeights {
    pub fn new(n_theta: usize) -> Self {
        let weights = (0..n_theta)
            .map(|idx| quad_weight(wavenumber(idx, n_theta)))
            .collect();
        Self { weights }
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn get(&self, k: i64) -> Complex64 {
        self.weights[index_of(k, self.weights.len())]
    }
}

/// Nodal form of the polar rule: `∫∫ f sin θ = Σ_j q_j · mean_φ f(·, θ_j)`.
fn nodal_weights(n_theta: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("quadrature cache poisoned");
    map.entry(n_theta)
        .or_insert_with(|| {
            let w = QuadWeights::new(n_theta);
            let h = 2.0 * PI / n_theta as f64;
            let q = (0..n_theta)
                .map(|j| {
                    let theta = -PI + j as f64 * h;
                    let s: Complex64 = w
                        .as_slice()
                        .iter()
                        .enumerate()
                        .map(|(idx, wk)| {
                            let k = wavenumber(idx, n_theta) as f64;
                            wk * Complex64::from_polar(1.0, -k * theta)
                        })
                        .sum();
                    2.0 * PI * s.re / n_theta as f64
                })
                .collect();
            Arc::new(q)
        })
        .clone()
}

/// Spherical integral `∫₀^π ∫_{-π}^{π} f sin θ dφ dθ` of a BMC-I field.
///
/// Exact for band-limited integrands; the reduction order is fixed.
pub fn integrate_sphere(f: &SphereField) -> f64 {
    let grid = f.grid;
    let q = nodal_weights(grid.n_theta);
    let mut total = 0.0;
    for (j, qj) in q.iter().enumerate() {
        let row: f64 = (0..grid.n_phi).map(|i| f.values[[i, j]]).sum();
        total += qj * row;
    }
    total / grid.n_phi as f64
}

/// The same integral evaluated from coefficients: `2π Re Σ_k w_k û_{k0}`.
pub fn integrate_sphere_coeffs(c: &SpectralCoeffs) -> f64 {
    let grid = c.grid;
    let w = QuadWeights::new(grid.n_theta);
    let row = c.coeffs.row(0);
    let s: Complex64 = row.iter().zip(w.as_slice()).map(|(u, wk)| u * wk).sum();
    2.0 * PI * s.re
}

/// Plain Riemann sum `h_φ h_θ Σ f` over the doubled grid (no Jacobian).
pub fn integrate_unweighted(f: &SphereField) -> f64 {
    let g = f.grid;
    g.h_phi() * g.h_theta() * f.values.iter().sum::<f64>()
}

/// Spherical L² inner product.
pub fn inner_weighted(f: &SphereField, g: &SphereField) -> f64 {
    assert_eq!(f.grid, g.grid, "grid mismatch");
    integrate_sphere(&f.zip_map(g, |a, b| a * b))
}

pub fn norm_l2(f: &SphereField) -> f64 {
    inner_weighted(f, f).max(0.0).sqrt()
}

pub fn norm_linf(f: &SphereField) -> f64 {
    f.max_abs()
}

/// Spherical mean `∫f / 4π`.
pub fn sphere_mean(f: &SphereField) -> f64 {
    integrate_sphere(f) / SPHERE_AREA
}

/// `f` minus its spherical mean.
pub fn remove_mean(f: &SphereField) -> SphereField {
    f.add_scalar(-sphere_mean(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    mod approx_eq {
        pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol * b.abs().max(1e-300)
        }
    }

    fn random_native(grid: Grid, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::from_shape_fn(grid.native_shape(), |_| rng.gen_range(-1.0..1.0));
        // pole rows must be single-valued
        for r in [0, grid.native_rows() - 1] {
            let c = a[[0, r]];
            a.column_mut(r).fill(c);
        }
        a
    }

    #[test]
    fn grid_rejects_odd_sizes() {
        assert!(Grid::new(15, 16).is_err());
        assert!(Grid::new(16, 2).is_err());
        assert!(Grid::new(16, 8).is_ok());
    }

    #[test]
    fn extend_even_polar_function_is_global() {
        let g = Grid::new(16, 16).unwrap();
        let f = SphereField::from_native_fn(g, |_, t| t.cos());
        let direct = SphereField::from_fn(g, |_, t| t.cos());
        for (a, b) in f.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn extend_sin_cos_is_global() {
        let g = Grid::new(16, 12).unwrap();
        let f = SphereField::from_native_fn(g, |p, t| t.sin() * p.cos());
        let direct = SphereField::from_fn(g, |p, t| t.sin() * p.cos());
        for (a, b) in f.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn extend_matches_block_layout() {
        // g on θ ∈ [0, π] for φ ∈ [-π, 0), h for φ ∈ [0, π); lower blocks are
        // their glide images.
        let grid = Grid::new(8, 8).unwrap();
        let native = random_native(grid, 3);
        let f = extend_bmc(grid, &native).unwrap();
        let (n_phi, n_theta) = grid.shape();
        for i in 0..n_phi {
            for j in 0..n_theta {
                let theta = grid.theta(j);
                let expected = if theta >= 0.0 {
                    native[[i, j - n_theta / 2]]
                } else if j == 0 {
                    native[[i, n_theta / 2]]
                } else {
                    native[[(i + n_phi / 2) % n_phi, n_theta / 2 - j]]
                };
                assert_eq!(f.values()[[i, j]], expected, "node ({i},{j})");
            }
        }
    }

    #[test]
    fn extend_rejects_wrong_shape() {
        let grid = Grid::new(8, 8).unwrap();
        assert!(extend_bmc(grid, &Array2::zeros((8, 4))).is_err());
    }

    #[test]
    fn restrict_roundtrip_is_bit_exact() {
        let grid = Grid::new(16, 12).unwrap();
        let native = random_native(grid, 11);
        let back = restrict(&extend_bmc(grid, &native).unwrap());
        assert_eq!(back.values, native);
        assert!(back.warning.is_none());
    }

    #[test]
    fn restrict_constant() {
        let grid = Grid::new(8, 8).unwrap();
        let r = restrict(&SphereField::constant(grid, 1.0));
        assert!(r.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn restrict_flags_asymmetric_input() {
        let grid = Grid::new(8, 8).unwrap();
        let mut f = SphereField::constant(grid, 1.0);
        f.values_mut()[[1, 2]] = 3.0;
        let r = restrict(&f);
        let w = r.warning.expect("asymmetry must be reported");
        assert!((w.defect - 2.0).abs() < 1e-15);
        assert_eq!(r.values.dim(), grid.native_shape());
    }

    #[test]
    fn symmetrize_fixed_point_and_idempotent() {
        let grid = Grid::new(16, 16).unwrap();
        let f = extend_bmc(grid, &random_native(grid, 5)).unwrap();
        let s = symmetrize_bmc(&f);
        assert_eq!(s, f);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let raw = SphereField::new(
            grid,
            Array2::from_shape_fn(grid.shape(), |_| rng.gen::<f64>()),
        )
        .unwrap();
        let once = symmetrize_bmc(&raw);
        assert!(once.symmetry_defect() <= 1e-15);
        assert_eq!(symmetrize_bmc(&once), once);
    }

    #[test]
    fn symmetrize_removes_antisymmetric_perturbation() {
        let grid = Grid::new(16, 8).unwrap();
        let f = extend_bmc(grid, &random_native(grid, 21)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let g = Array2::from_shape_fn(grid.shape(), |_| rng.gen_range(-1.0..1.0));
        let delta = Array2::from_shape_fn(grid.shape(), |(i, j)| {
            let (gi, gj) = grid.glide(i, j);
            g[[i, j]] - g[[gi, gj]]
        });
        let perturbed = SphereField::new(grid, f.values() + &delta).unwrap();
        let s = symmetrize_bmc(&perturbed);
        for (a, b) in s.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn single_mode_has_one_conjugate_pair() {
        let grid = Grid::new(16, 16).unwrap();
        let f = SphereField::from_fn(grid, |p, t| (2.0 * t + 3.0 * p).cos());
        let c = analyze(&f);
        for ((il, ik), v) in c.coeffs().indexed_iter() {
            let (l, k) = (grid.phi_wavenumber(il), grid.theta_wavenumber(ik));
            if (k, l) == (2, 3) || (k, l) == (-2, -3) {
                assert!((v - Complex64::new(0.5, 0.0)).norm() < 1e-15);
            } else {
                assert!(v.norm() < 1e-15, "({k},{l}) = {v}");
            }
        }
    }

    #[test]
    fn roundtrip_and_parseval() {
        let grid = Grid::new(32, 24).unwrap();
        let f = extend_bmc(grid, &random_native(grid, 7)).unwrap();
        let c = analyze(&f);
        let back = synthesize(&c);
        let err = (&back - &f).max_abs();
        assert!(err <= 1e-13 * f.max_abs());
        assert!(back.symmetry_defect() <= 1e-13);

        let lhs = grid.h_phi() * grid.h_theta() * f.values().iter().map(|v| v * v).sum::<f64>();
        let rhs = 4.0 * PI * PI * c.coeffs().iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!(rel_close(lhs, rhs, 1e-12));
    }

    #[test]
    fn real_field_coeffs_are_conjugate_symmetric() {
        let grid = Grid::new(16, 16).unwrap();
        let f = extend_bmc(grid, &random_native(grid, 8)).unwrap();
        let c = analyze(&f);
        for k in -7..8 {
            for l in -7..8 {
                assert!((c.get(-k, -l) - c.get(k, l).conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn derivative_eigenmodes() {
        let grid = Grid::new(16, 16).unwrap();
        let cos_t = SphereField::from_fn(grid, |_, t| t.cos());
        let c = analyze(&cos_t);
        let d = diff(&c, Derivative::ThetaTheta);
        for (a, b) in d.coeffs().iter().zip(c.coeffs()) {
            assert!((a + b).norm() < 1e-14);
        }

        let one = SphereField::constant(grid, 1.0);
        assert!(derivative(&one, Derivative::Phi).max_abs() < 1e-15);

        let f = SphereField::from_fn(grid, |p, t| t.sin() * p.cos());
        let fpp = derivative(&f, Derivative::PhiPhi);
        assert!((&fpp + &f).max_abs() < 1e-14);

        let g = SphereField::from_fn(grid, |p, t| (3.0 * t).sin() * (2.0 * p).sin());
        let gpt = derivative(&g, Derivative::PhiTheta);
        let exact = SphereField::from_fn(grid, |p, t| 6.0 * (3.0 * t).cos() * (2.0 * p).cos());
        assert!((&gpt - &exact).max_abs() < 1e-12);
    }

    #[test]
    fn quadrature_weights() {
        assert_eq!(quad_weight(0), Complex64::new(2.0, 0.0));
        for k in [3, 5, -7, 9] {
            assert_eq!(quad_weight(k), Complex64::new(0.0, 0.0));
        }
        assert!((quad_weight(2).re + 2.0 / 3.0).abs() < 1e-16);
        // direct integration for k = ±1
        let n = 20000;
        let h = PI / n as f64;
        let direct: Complex64 = (0..n)
            .map(|m| {
                let t = (m as f64 + 0.5) * h;
                Complex64::from_polar(1.0, t) * t.sin() * h
            })
            .sum();
        assert!((direct - quad_weight(1)).norm() < 1e-8);
        assert_eq!(QuadWeights::new(8).get(0), QuadWeights::new(64).get(0));
    }

    #[test]
    fn sphere_integrals() {
        let grid = Grid::new(16, 16).unwrap();
        let one = SphereField::constant(grid, 1.0);
        assert!(rel_close(integrate_sphere(&one), 4.0 * PI, 1e-14));
        let c2 = SphereField::from_fn(grid, |_, t| t.cos().powi(2));
        assert!(rel_close(integrate_sphere(&c2), 4.0 * PI / 3.0, 1e-13));
        let sc = SphereField::from_fn(grid, |p, t| t.sin() * p.cos());
        assert!(integrate_sphere(&sc).abs() < 1e-14);
        let c = analyze(&c2);
        assert!(rel_close(
            integrate_sphere_coeffs(&c),
            4.0 * PI / 3.0,
            1e-13
        ));
        assert!(rel_close(
            inner_weighted(
                &SphereField::from_fn(grid, |_, t| t.cos()),
                &SphereField::from_fn(grid, |_, t| t.cos())
            ),
            4.0 * PI / 3.0,
            1e-13
        ));
        assert!(rel_close(inner_weighted(&one, &one), 4.0 * PI, 1e-14));
    }

    #[test]
    fn nodal_and_coefficient_quadrature_agree() {
        let grid = Grid::new(24, 20).unwrap();
        let f = extend_bmc(grid, &random_native(grid, 31)).unwrap();
        let a = integrate_sphere(&f);
        let b = integrate_sphere_coeffs(&analyze(&f));
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn cauchy_schwarz_on_random_pairs() {
        let grid = Grid::new(16, 16).unwrap();
        for seed in 0..20 {
            let f = extend_bmc(grid, &random_native(grid, 100 + seed)).unwrap();
            let g = extend_bmc(grid, &random_native(grid, 200 + seed)).unwrap();
            let lhs = inner_weighted(&f, &g).abs();
            assert!(lhs <= norm_l2(&f) * norm_l2(&g) * (1.0 + 1e-12));
        }
    }
}
