//! Double-well potentials, discrete energies and step-size bounds.

use serde::{Deserialize, Serialize};

use crate::dfs::{
    derivative, inner_weighted, integrate_sphere, integrate_unweighted, remove_mean, Derivative,
    SphereField, DOUBLED_AREA, SPHERE_AREA,
};
use crate::error::{Error, Result};
use crate::helmholtz::SolverPlan;

/// Lower end of the window on which `W` is the quartic well.
pub const WELL_LOWER: f64 = -0.5;
/// Upper end of the window on which `W` is the quartic well.
pub const WELL_UPPER: f64 = 1.5;

/// Mesh-independent bound on `‖(-Δ)⁻¹‖` used when no estimate is supplied.
pub const DEFAULT_INV_NORM_BOUND: f64 = 2.0;

fn quartic(u: f64) -> f64 {
    let q = u * u - u;
    18.0 * q * q
}

fn quartic_p(u: f64) -> f64 {
    36.0 * u * (u - 1.0) * (2.0 * u - 1.0)
}

fn quartic_pp(u: f64) -> f64 {
    36.0 * (6.0 * u * u - 6.0 * u + 1.0)
}

/// Nearest window end and offset when `u` lies outside the window.
fn outside(u: f64) -> Option<(f64, f64)> {
    if u < WELL_LOWER {
        Some((WELL_LOWER, u - WELL_LOWER))
    } else if u > WELL_UPPER {
        Some((WELL_UPPER, u - WELL_UPPER))
    } else {
        None
    }
}

/// `W(u) = 18(u² - u)²` on the window, continued by its second-order Taylor
/// polynomial at the window ends.
pub fn w(u: f64) -> f64 {
    match outside(u) {
        Some((a, d)) => quartic(a) + quartic_p(a) * d + 0.5 * quartic_pp(a) * d * d,
        None => quartic(u),
    }
}

pub fn wp(u: f64) -> f64 {
    match outside(u) {
        Some((a, d)) => quartic_p(a) + quartic_pp(a) * d,
        None => quartic_p(u),
    }
}

pub fn wpp(u: f64) -> f64 {
    match outside(u) {
        Some((a, _)) => quartic_pp(a),
        None => quartic_pp(u),
    }
}

/// Functional used for the volume penalty `(M/2)(I(u) - ω·I(1))²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeIntegral {
    /// Spherical integral, `I(1) = 4π`.
    #[default]
    Spherical,
    /// Plain grid sum over the doubled domain, `I(1) = 4π²`.
    Unweighted,
}

impl VolumeIntegral {
    pub fn integrate(&self, f: &SphereField) -> f64 {
        match self {
            VolumeIntegral::Spherical => integrate_sphere(f),
            VolumeIntegral::Unweighted => integrate_unweighted(f),
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            VolumeIntegral::Spherical => SPHERE_AREA,
            VolumeIntegral::Unweighted => DOUBLED_AREA,
        }
    }

    /// `I(u) - ω·I(1)`.
    pub fn deviation(&self, f: &SphereField, omega: f64) -> f64 {
        self.integrate(f) - omega * self.measure()
    }
}

/// Description of the extended potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialSpec {
    pub lower: f64,
    pub upper: f64,
    /// `sup |W''|` over the real line.
    pub l_wpp: f64,
}

impl PotentialSpec {
    pub fn standard() -> Self {
        // W'' is an upward parabola with vertex at 1/2 and constant outside the
        // window, so its extreme values sit at the vertex and the window ends.
        let l_wpp = [WELL_LOWER, 0.5, WELL_UPPER]
            .iter()
            .map(|&u| quartic_pp(u).abs())
            .fold(0.0, f64::max);
        Self {
            lower: WELL_LOWER,
            upper: WELL_UPPER,
            l_wpp,
        }
    }
}

/// `W₂(u₁, u₂) = ½[W(u₁) + W(u₂) + W(1 - u₁ - u₂)]`.
pub fn w2(u1: f64, u2: f64) -> f64 {
    0.5 * (w(u1) + w(u2) + w(1.0 - u1 - u2))
}

pub fn w2_partials(u1: f64, u2: f64) -> (f64, f64) {
    let c = wp(1.0 - u1 - u2);
    (0.5 * (wp(u1) - c), 0.5 * (wp(u2) - c))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SokParams {
    pub epsilon: f64,
    pub omega: f64,
    pub gamma: f64,
    pub m: f64,
    pub kappa: f64,
    pub beta: f64,
    pub kappa_star: f64,
    pub beta_star: f64,
    pub tau: f64,
}

impl SokParams {
    pub fn validate(&self) -> Result<()> {
        positive("epsilon", self.epsilon)?;
        positive("tau", self.tau)?;
        unit_open("omega", self.omega)?;
        for (name, v) in [
            ("gamma", self.gamma),
            ("M", self.m),
            ("kappa", self.kappa),
            ("beta", self.beta),
            ("kappa_star", self.kappa_star),
            ("beta_star", self.beta_star),
        ] {
            nonnegative(name, v)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnoParams {
    pub epsilon: f64,
    pub omega: [f64; 2],
    pub gamma11: f64,
    pub gamma22: f64,
    pub gamma12: f64,
    pub m: [f64; 2],
    pub kappa: [f64; 2],
    pub beta: [f64; 2],
    pub kappa_star: [f64; 2],
    pub beta_star: [f64; 2],
    pub tau: f64,
}

impl SnoParams {
    pub fn validate(&self) -> Result<()> {
        positive("epsilon", self.epsilon)?;
        positive("tau", self.tau)?;
        unit_open("omega1", self.omega[0])?;
        unit_open("omega2", self.omega[1])?;
        if self.omega[0] + self.omega[1] >= 1.0 {
            return Err(Error::param("omega", "omega1 + omega2 must be below 1"));
        }
        nonnegative("gamma11", self.gamma11)?;
        nonnegative("gamma22", self.gamma22)?;
        nonnegative("gamma12", self.gamma12)?;
        for i in 0..2 {
            nonnegative("M", self.m[i])?;
            nonnegative("kappa", self.kappa[i])?;
            nonnegative("beta", self.beta[i])?;
            nonnegative("kappa_star", self.kappa_star[i])?;
            nonnegative("beta_star", self.beta_star[i])?;
        }
        Ok(())
    }

    /// `γ_ij` with the symmetric off-diagonal entry.
    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.gamma11,
            (1, 1) => self.gamma22,
            _ => self.gamma12,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::param(name, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn nonnegative(name: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::param(name, format!("must be nonnegative, got {v}")));
    }
    Ok(())
}

fn unit_open(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::param(name, format!("must lie in (0, 1), got {v}")));
    }
    Ok(())
}

/// Tangential gradient components `(u_θ, u_φ / sin θ)` on the doubled grid.
///
/// At the pole rows the second component is replaced by its limit
/// `±u_φθ` (the sign follows `sin θ ≈ ±(θ - θ_pole)`).
pub fn gradient_components(u: &SphereField) -> (SphereField, SphereField) {
    let grid = u.grid();
    let ut = derivative(u, Derivative::Theta);
    let up = derivative(u, Derivative::Phi);
    let upt = derivative(u, Derivative::PhiTheta);
    let mut v = up;
    let north = grid.north_row();
    let south = grid.south_row();
    for ((i, j), x) in v.values_mut().indexed_iter_mut() {
        *x = if j == north {
            upt.values()[[i, j]]
        } else if j == south {
            -upt.values()[[i, j]]
        } else {
            *x / grid.theta(j).sin()
        };
    }
    (ut, v)
}

/// `∫ ∇u · ∇w` over the sphere.
pub fn gradient_inner(u: &SphereField, w: &SphereField) -> f64 {
    let (ut, uv) = gradient_components(u);
    let (wt, wv) = gradient_components(w);
    let integrand = ut
        .zip_map(&wt, |a, b| a * b)
        .axpby(1.0, &uv.zip_map(&wv, |a, b| a * b), 1.0);
    integrate_sphere(&integrand)
}

/// `∫ |∇u|²` over the sphere.
pub fn gradient_energy(u: &SphereField) -> f64 {
    let (ut, v) = gradient_components(u);
    integrate_sphere(&ut.zip_map(&v, |a, b| a * a + b * b))
}

/// `⟨(-Δ)⁻¹(f - f̄), g - ḡ⟩`.
pub fn nonlocal_form(plan: &SolverPlan, f: &SphereField, g: &SphereField) -> Result<f64> {
    let gf = plan.inv_laplacian_projected(f)?;
    Ok(inner_weighted(&gf, &remove_mean(g)))
}

/// Individual terms of a discrete energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergyTerms {
    pub gradient: f64,
    pub bulk: f64,
    pub nonlocal: f64,
    pub penalty: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.gradient + self.bulk + self.nonlocal + self.penalty
    }
}

pub fn energy_terms_sok(u: &SphereField, p: &SokParams, plan: &SolverPlan) -> Result<EnergyTerms> {
    energy_terms_sok_in(u, p, plan, VolumeIntegral::Spherical)
}

pub fn energy_terms_sok_in(
    u: &SphereField,
    p: &SokParams,
    plan: &SolverPlan,
    volume: VolumeIntegral,
) -> Result<EnergyTerms> {
    let gradient = 0.5 * p.epsilon * gradient_energy(u);
    let bulk = integrate_sphere(&u.map(w)) / p.epsilon;
    let nonlocal = if p.gamma == 0.0 {
        0.0
    } else {
        0.5 * p.gamma * nonlocal_form(plan, u, u)?
    };
    let dev = volume.deviation(u, p.omega);
    Ok(EnergyTerms {
        gradient,
        bulk,
        nonlocal,
        penalty: 0.5 * p.m * dev * dev,
    })
}

pub fn energy_sok(u: &SphereField, p: &SokParams, plan: &SolverPlan) -> Result<f64> {
    Ok(energy_terms_sok(u, p, plan)?.total())
}

pub fn energy_terms_sno(
    u1: &SphereField,
    u2: &SphereField,
    p: &SnoParams,
    plan: &SolverPlan,
) -> Result<EnergyTerms> {
    energy_terms_sno_in(u1, u2, p, plan, VolumeIntegral::Spherical)
}

pub fn energy_terms_sno_in(
    u1: &SphereField,
    u2: &SphereField,
    p: &SnoParams,
    plan: &SolverPlan,
    volume: VolumeIntegral,
) -> Result<EnergyTerms> {
    let gradient =
        0.5 * p.epsilon * (gradient_energy(u1) + gradient_energy(u2) + gradient_inner(u1, u2));
    let bulk = integrate_sphere(&u1.zip_map(u2, w2)) / p.epsilon;
    let u = [u1, u2];
    let mut nonlocal = 0.0;
    for i in 0..2 {
        for j in i..2 {
            let g = p.gamma(i, j);
            if g == 0.0 {
                continue;
            }
            // off-diagonal pair counted twice in the symmetric double sum
            let weight = if i == j { 0.5 } else { 1.0 };
            nonlocal += weight * g * nonlocal_form(plan, u[i], u[j])?;
        }
    }
    let mut penalty = 0.0;
    for i in 0..2 {
        let dev = volume.deviation(u[i], p.omega[i]);
        penalty += 0.5 * p.m[i] * dev * dev;
    }
    Ok(EnergyTerms {
        gradient,
        bulk,
        nonlocal,
        penalty,
    })
}

pub fn energy_sno(
    u1: &SphereField,
    u2: &SphereField,
    p: &SnoParams,
    plan: &SolverPlan,
) -> Result<f64> {
    Ok(energy_terms_sno(u1, u2, p, plan)?.total())
}

/// `C = L_W''/(2ε) + γ/2·‖(-Δ)⁻¹‖ + M/2·4π`.
pub fn stability_constant_sok(p: &SokParams, inv_norm_bound: f64) -> f64 {
    let l = PotentialSpec::standard().l_wpp;
    l / (2.0 * p.epsilon) + 0.5 * p.gamma * inv_norm_bound + 0.5 * p.m * SPHERE_AREA
}

pub fn tau_max_sok(p: &SokParams, inv_norm_bound: f64) -> f64 {
    1.0 / (3.0 * stability_constant_sok(p, inv_norm_bound))
}

/// `C_i = L_W''/(2ε) + (γ_i1 + γ_i2)/2·‖(-Δ)⁻¹‖ + M_i/2·4π`.
pub fn stability_constants_sno(p: &SnoParams, inv_norm_bound: f64) -> [f64; 2] {
    let l = PotentialSpec::standard().l_wpp;
    [0, 1].map(|i| {
        l / (2.0 * p.epsilon)
            + 0.5 * (p.gamma(i, 0) + p.gamma(i, 1)) * inv_norm_bound
            + 0.5 * p.m[i] * SPHERE_AREA
    })
}

pub fn tau_max_sno(p: &SnoParams, inv_norm_bound: f64) -> f64 {
    let c = stability_constants_sno(p, inv_norm_bound);
    (1.0 / (3.0 * c[0])).min(1.0 / (3.0 * c[1]))
}

fn history_terms(
    plan: &SolverPlan,
    delta: &SphereField,
    quad_coeff: f64,
    nonlocal_coeff: f64,
) -> Result<f64> {
    let mut extra = quad_coeff * inner_weighted(delta, delta);
    if nonlocal_coeff != 0.0 {
        extra += nonlocal_coeff * nonlocal_form(plan, delta, delta)?;
    }
    Ok(extra)
}

/// Modified energy with the stability constant built from `inv_norm_bound`.
pub fn energy_modified_sok_with(
    u_n: &SphereField,
    u_nm1: &SphereField,
    p: &SokParams,
    plan: &SolverPlan,
    inv_norm_bound: f64,
    volume: VolumeIntegral,
) -> Result<f64> {
    let e = energy_terms_sok_in(u_n, p, plan, volume)?.total();
    let c = stability_constant_sok(p, inv_norm_bound);
    let delta = u_n - u_nm1;
    let quad = p.kappa / (2.0 * p.epsilon) + 1.0 / (4.0 * p.tau) + c;
    Ok(e + history_terms(plan, &delta, quad, 0.5 * p.gamma * p.beta)?)
}

pub fn energy_modified_sok(
    u_n: &SphereField,
    u_nm1: &SphereField,
    p: &SokParams,
    plan: &SolverPlan,
) -> Result<f64> {
    energy_modified_sok_with(
        u_n,
        u_nm1,
        p,
        plan,
        DEFAULT_INV_NORM_BOUND,
        VolumeIntegral::Spherical,
    )
}

pub fn energy_modified_sno_with(
    u_n: [&SphereField; 2],
    u_nm1: [&SphereField; 2],
    p: &SnoParams,
    plan: &SolverPlan,
    inv_norm_bound: f64,
    volume: VolumeIntegral,
) -> Result<f64> {
    let mut e = energy_terms_sno_in(u_n[0], u_n[1], p, plan, volume)?.total();
    let c = stability_constants_sno(p, inv_norm_bound);
    for i in 0..2 {
        let delta = u_n[i] - u_nm1[i];
        let quad = p.kappa[i] / (2.0 * p.epsilon) + 1.0 / (4.0 * p.tau) + c[i];
        e += history_terms(plan, &delta, quad, 0.5 * p.gamma(i, i) * p.beta[i])?;
    }
    Ok(e)
}

pub fn energy_modified_sno(
    u_n: [&SphereField; 2],
    u_nm1: [&SphereField; 2],
    p: &SnoParams,
    plan: &SolverPlan,
) -> Result<f64> {
    energy_modified_sno_with(
        u_n,
        u_nm1,
        p,
        plan,
        DEFAULT_INV_NORM_BOUND,
        VolumeIntegral::Spherical,
    )
}
