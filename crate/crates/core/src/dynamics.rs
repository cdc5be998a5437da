//! Stabilized semi-implicit BDF1/BDF2 time stepping for the penalized
//! Allen–Cahn flows of both models.
//!
//! Every step reduces to one shifted Helmholtz solve per species (two when the
//! nonlocal stabilizer `β` is positive). The stabilized implicit operator is
//!
//! ```text
//! L = ε(-Δ) + λ + γβ(-Δ)⁻¹,    λ = 3/(2τ) + κ/ε   (BDF2)
//!                             λ = 1/τ₁ + κ*/ε    (BDF1 start-up)
//! ```
//!
//! Dividing by `ε` gives `(-Δ + λ/ε)` for `β = 0`. For `β > 0` the zero-mean
//! part is inverted by partial fractions over the two real roots of
//! `εs² + λs + γβ`, and the mean is inverted as a scalar.
//!
//! The volume penalty is treated implicitly by default. Its explicit
//! extrapolation `M(I(2uⁿ - uⁿ⁻¹) - ω|Ω|)` is unstable in the mean mode once
//! `3M|Ω| > 4/τ + 4κ/ε`, which holds for `M = 1000` at the usual step sizes;
//! the explicit form remains available through [`PenaltyTreatment::Explicit`].
//! Since the penalty only acts on constants, its implicit form costs a scalar
//! correction: constants are eigenfunctions of `L` with eigenvalue `λ`.

use serde::{Deserialize, Serialize};

use crate::dfs::{sphere_mean, symmetrize_bmc, Grid, SphereField};
use crate::energetics::{
    energy_modified_sno_with, energy_modified_sok_with, energy_terms_sno_in, energy_terms_sok_in,
    w2_partials, wp, SnoParams, SokParams, VolumeIntegral, DEFAULT_INV_NORM_BOUND,
};
use crate::error::{Error, Result};
use crate::helmholtz::SolverPlan;

/// `‖u‖∞` above which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e3;

/// Relative slack allowed in the runtime modified-energy check.
pub const MODIFIED_ENERGY_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyTreatment {
    #[default]
    Implicit,
    Explicit,
}

/// Size of the BDF1 start-up step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Startup {
    /// `τ₁ = τ`: the uniform BDF2 steps that follow see equally spaced history.
    #[default]
    FullStep,
    /// `τ₁ = min(τ², 1)`. The uniform BDF2 formula then treats `u⁰` and `u¹`
    /// as `τ` apart although they are `τ₁` apart, which leaves an `O(τ)` error.
    ShortStep,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeOptions {
    pub penalty: PenaltyTreatment,
    pub volume: VolumeIntegral,
    pub startup: Startup,
}

/// Start-up step `τ₁` for step size `τ`.
pub fn first_step(tau: f64, startup: Startup) -> f64 {
    match startup {
        Startup::FullStep => tau,
        Startup::ShortStep => (tau * tau).min(1.0),
    }
}

/// Time of step `n`: `0` for `n = 0`, else `τ₁ + (n - 1)τ`.
pub fn step_time(n: usize, tau: f64, startup: Startup) -> f64 {
    if n == 0 {
        0.0
    } else {
        first_step(tau, startup) + (n - 1) as f64 * tau
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shifts {
    Single(f64),
    /// `L⁻¹ = (1/ε) Σ cᵢ (-Δ + aᵢ)⁻¹` on zero-mean fields.
    Pair {
        a: [f64; 2],
        c: [f64; 2],
    },
}

#[derive(Clone, Copy, Debug)]
struct ImplicitOperator {
    epsilon: f64,
    lambda: f64,
    gamma_beta: f64,
    /// `(M, ω)` when the penalty is part of the implicit operator.
    penalty: Option<(f64, f64)>,
    volume: VolumeIntegral,
}

impl ImplicitOperator {
    fn shifts(&self) -> Result<Shifts> {
        if self.gamma_beta == 0.0 {
            return Ok(Shifts::Single(self.lambda / self.epsilon));
        }
        let disc = self.lambda * self.lambda - 4.0 * self.gamma_beta * self.epsilon;
        if disc <= 0.0 {
            return Err(Error::UnsupportedShift(format!(
                "nonlocal stabilizer too strong: λ² - 4γβε = {disc:e} must be positive"
            )));
        }
        let r = disc.sqrt();
        let a1 = (self.lambda - r) / (2.0 * self.epsilon);
        let a2 = (self.lambda + r) / (2.0 * self.epsilon);
        Ok(Shifts::Pair {
            a: [a1, a2],
            c: [-a1 / (a2 - a1), a2 / (a2 - a1)],
        })
    }

    fn alphas(&self) -> Result<Vec<f64>> {
        Ok(match self.shifts()? {
            Shifts::Single(a) => vec![a],
            Shifts::Pair { a, .. } => a.to_vec(),
        })
    }

    /// Solves `L u (+ M(I(u) - ω|Ω|)) = rhs + c·Δw` for `lap = Some((c, w))`.
    fn solve(
        &self,
        plan: &SolverPlan,
        rhs: &SphereField,
        lap: Option<(f64, &SphereField)>,
    ) -> Result<SphereField> {
        let eps = self.epsilon;
        // (-Δ + a)⁻¹ Δw = a (-Δ + a)⁻¹ w - w keeps the pole-singular Δ out of value space
        let mut u = match self.shifts()? {
            Shifts::Single(alpha) => match lap {
                None => plan.solve(&(rhs * (1.0 / eps)), alpha)?,
                Some((c, w)) => {
                    let src = rhs.axpby(1.0 / eps, w, c * alpha / eps);
                    plan.solve(&src, alpha)?.axpby(1.0, w, -c / eps)
                }
            },
            Shifts::Pair { a, c: coef } => {
                let mean = sphere_mean(rhs);
                let r = rhs.add_scalar(-mean);
                let wt = lap.map(|(c, w)| (c, w.add_scalar(-sphere_mean(w))));
                let mut u = SphereField::constant(rhs.grid(), mean / self.lambda);
                for i in 0..2 {
                    let src = match &wt {
                        None => r.clone(),
                        Some((c, w)) => r.axpby(1.0, w, c * a[i]),
                    };
                    u = u.axpby(1.0, &plan.solve(&src, a[i])?, coef[i] / eps);
                }
                if let Some((c, w)) = &wt {
                    u = u.axpby(1.0, w, -c / eps);
                }
                u
            }
        };
        if let Some((m, omega)) = self.penalty {
            if m != 0.0 {
                let dev = self.volume.deviation(&u, omega);
                let s = m * dev / (1.0 + m * self.volume.measure() / self.lambda);
                u = u.add_scalar(-s / self.lambda);
            }
        }
        Ok(symmetrize_bmc(&u))
    }
}

fn projected_inv(plan: &SolverPlan, coef: f64, f: &SphereField) -> Result<Option<SphereField>> {
    if coef == 0.0 {
        return Ok(None);
    }
    Ok(Some(&plan.inv_laplacian_projected(f)? * coef))
}

fn add_opt(acc: SphereField, term: Option<SphereField>) -> SphereField {
    match term {
        Some(t) => &acc + &t,
        None => acc,
    }
}

fn explicit_penalty(
    opts: SchemeOptions,
    acc: SphereField,
    m: f64,
    omega: f64,
    state: &SphereField,
) -> SphereField {
    if opts.penalty == PenaltyTreatment::Explicit && m != 0.0 {
        acc.add_scalar(-m * opts.volume.deviation(state, omega))
    } else {
        acc
    }
}

fn implicit_penalty(opts: SchemeOptions, m: f64, omega: f64) -> Option<(f64, f64)> {
    (opts.penalty == PenaltyTreatment::Implicit).then_some((m, omega))
}

fn sok_operator(p: &SokParams, opts: SchemeOptions, bdf2: bool) -> ImplicitOperator {
    let (lambda, beta) = if bdf2 {
        (1.5 / p.tau + p.kappa / p.epsilon, p.beta)
    } else {
        (
            1.0 / first_step(p.tau, opts.startup) + p.kappa_star / p.epsilon,
            p.beta_star,
        )
    };
    ImplicitOperator {
        epsilon: p.epsilon,
        lambda,
        gamma_beta: p.gamma * beta,
        penalty: implicit_penalty(opts, p.m, p.omega),
        volume: opts.volume,
    }
}

/// BDF1 start-up step with a caller-supplied bulk force `f ≈ W'`.
pub fn bdf1_step_with_force(
    u0: &SphereField,
    p: &SokParams,
    plan: &SolverPlan,
    opts: SchemeOptions,
    force: impl Fn(f64) -> f64,
) -> Result<SphereField> {
    let op = sok_operator(p, opts, false);
    let rhs = u0.zip_map(&u0.map(&force), |u, f| u * op.lambda - f / p.epsilon);
    let rhs = add_opt(rhs, projected_inv(plan, p.gamma * (p.beta_star - 1.0), u0)?);
    let rhs = explicit_penalty(opts, rhs, p.m, p.omega, u0);
    op.solve(plan, &rhs, None)
}

pub fn bdf1_step_sok(
    u0: &SphereField,
    p: &SokParams,
    plan: &SolverPlan,
    opts: SchemeOptions,
) -> Result<SphereField> {
    bdf1_step_with_force(u0, p, plan, opts, wp)
}

/// BDF2 step with a caller-supplied bulk force `f ≈ W'`.
pub fn bdf2_step_with_force(
    u_n: &SphereField,
    u_nm1: &SphereField,
    p: &SokParams,
    plan: &SolverPlan,
    opts: SchemeOptions,
    force: impl Fn(f64) -> f64,
) -> Result<SphereField> {
    let op = sok_operator(p, opts, true);
    let ext = u_n.axpby(2.0, u_nm1, -1.0);
    let bulk = u_n.map(&force).axpby(2.0, &u_nm1.map(&force), -1.0);
    let mut rhs = u_n.axpby(2.0 / p.tau, u_nm1, -0.5 / p.tau);
    rhs = rhs.axpby(1.0, &bulk, -1.0 / p.epsilon);
    rhs = rhs.axpby(1.0, &ext, p.kappa / p.epsilon);
    rhs = add_opt(rhs, projected_inv(plan, p.gamma * (p.beta - 1.0), &ext)?);
    rhs = explicit_penalty(opts, rhs, p.m, p.omega, &ext);
    op.solve(plan, &rhs, None)
}

pub fn bdf2_step_sok(
    u_n: &SphereField,
    u_nm1: &SphereField,
    p: &SokParams,
    plan: &SolverPlan,
    opts: SchemeOptions,
) -> Result<SphereField> {
    bdf2_step_with_force(u_n, u_nm1, p, plan, opts, wp)
}

fn sno_operator(p: &SnoParams, opts: SchemeOptions, i: usize, bdf2: bool) -> ImplicitOperator {
    let (lambda, beta) = if bdf2 {
        (1.5 / p.tau + p.kappa[i] / p.epsilon, p.beta[i])
    } else {
        (
            1.0 / first_step(p.tau, opts.startup) + p.kappa_star[i] / p.epsilon,
            p.beta_star[i],
        )
    };
    ImplicitOperator {
        epsilon: p.epsilon,
        lambda,
        gamma_beta: p.gamma(i, i) * beta,
        penalty: implicit_penalty(opts, p.m[i], p.omega[i]),
        volume: opts.volume,
    }
}

fn partial(i: usize, a: &SphereField, b: &SphereField) -> SphereField {
    a.zip_map(b, |x, y| {
        let (d1, d2) = w2_partials(x, y);
        if i == 0 {
            d1
        } else {
            d2
        }
    })
}

fn into_pair(mut v: Vec<SphereField>) -> [SphereField; 2] {
    let u2 = v.pop().expect("two species");
    let u1 = v.pop().expect("two species");
    [u1, u2]
}

/// BDF1 start-up for the two-species flow. Species 1 sees the initial
/// partner, species 2 sees the freshly computed species 1.
pub fn bdf1_step_sno(
    u0: [&SphereField; 2],
    p: &SnoParams,
    plan: &SolverPlan,
    opts: SchemeOptions,
) -> Result<[SphereField; 2]> {
    let mut out: Vec<SphereField> = Vec::with_capacity(2);
    for i in 0..2 {
        let op = sno_operator(p, opts, i, false);
        let partner = if i == 0 { u0[1] } else { &out[0] };
        let d = if i == 0 {
            partial(0, u0[0], u0[1])
        } else {
            partial(1, &out[0], u0[1])
        };
        let mut rhs = u0[i].axpby(op.lambda, &d, -1.0 / p.epsilon);
        rhs = add_opt(
            rhs,
            projected_inv(plan, p.gamma(i, i) * (p.beta_star[i] - 1.0), u0[i])?,
        );
        rhs = add_opt(rhs, projected_inv(plan, -p.gamma12, partner)?);
        rhs = explicit_penalty(opts, rhs, p.m[i], p.omega[i], u0[i]);
        let next = op.solve(plan, &rhs, Some((0.5 * p.epsilon, partner)))?;
        out.push(next);
    }
    Ok(into_pair(out))
}

/// BDF2 Gauss–Seidel sweep.
///
/// Species 1 extrapolates its partner as `2u₂ⁿ - u₂ⁿ⁻¹` and evaluates the
/// bulk partials at `(u₁ⁿ, u₂ⁿ)` and `(u₁ⁿ⁻¹, u₂ⁿ⁻¹)`. Species 2 then uses
/// the new `u₁ⁿ⁺¹` in place of both partner slots: `2u₁ⁿ⁺¹ - u₁ⁿ⁺¹`, and
/// partials at `(u₁ⁿ⁺¹, u₂ⁿ)` and `(u₁ⁿ⁺¹, u₂ⁿ⁻¹)`.
pub fn bdf2_step_sno(
    u_n: [&SphereField; 2],
    u_nm1: [&SphereField; 2],
    p: &SnoParams,
    plan: &SolverPlan,
    opts: SchemeOptions,
) -> Result<[SphereField; 2]> {
    let mut out: Vec<SphereField> = Vec::with_capacity(2);
    for i in 0..2 {
        let op = sno_operator(p, opts, i, true);
        let ext = u_n[i].axpby(2.0, u_nm1[i], -1.0);
        let (partner, d_n, d_nm1) = if i == 0 {
            (
                u_n[1].axpby(2.0, u_nm1[1], -1.0),
                partial(0, u_n[0], u_n[1]),
                partial(0, u_nm1[0], u_nm1[1]),
            )
        } else {
            (
                out[0].clone(),
                partial(1, &out[0], u_n[1]),
                partial(1, &out[0], u_nm1[1]),
            )
        };
        let mut rhs = u_n[i].axpby(2.0 / p.tau, u_nm1[i], -0.5 / p.tau);
        rhs = rhs.axpby(1.0, &d_n.axpby(2.0, &d_nm1, -1.0), -1.0 / p.epsilon);
        rhs = rhs.axpby(1.0, &ext, p.kappa[i] / p.epsilon);
        rhs = add_opt(
            rhs,
            projected_inv(plan, p.gamma(i, i) * (p.beta[i] - 1.0), &ext)?,
        );
        rhs = add_opt(rhs, projected_inv(plan, -p.gamma12, &partner)?);
        rhs = explicit_penalty(opts, rhs, p.m[i], p.omega[i], &ext);
        let next = op.solve(plan, &rhs, Some((0.5 * p.epsilon, &partner)))?;
        out.push(next);
    }
    Ok(into_pair(out))
}

/// Common interface of the two flows, used by the run driver.
pub trait PhaseSystem: Sync {
    fn species(&self) -> usize;
    fn tau(&self) -> f64;
    fn scheme(&self) -> SchemeOptions;
    /// Helmholtz shifts used by the implicit steps.
    fn shifts(&self) -> Result<Vec<f64>>;
    fn bdf1(&self, plan: &SolverPlan, u0: &[SphereField]) -> Result<Vec<SphereField>>;
    fn bdf2(
        &self,
        plan: &SolverPlan,
        u_n: &[SphereField],
        u_nm1: &[SphereField],
    ) -> Result<Vec<SphereField>>;
    fn energy(&self, plan: &SolverPlan, u: &[SphereField]) -> Result<f64>;
    fn modified_energy(
        &self,
        plan: &SolverPlan,
        u_n: &[SphereField],
        u_nm1: &[SphereField],
    ) -> Result<f64>;

    fn first_step(&self) -> f64 {
        first_step(self.tau(), self.scheme().startup)
    }

    fn step_time(&self, n: usize) -> f64 {
        step_time(n, self.tau(), self.scheme().startup)
    }
}

#[derive(Clone, Debug)]
pub struct SokSystem {
    pub params: SokParams,
    pub scheme: SchemeOptions,
    pub inv_norm_bound: f64,
}

impl SokSystem {
    pub fn new(params: SokParams) -> Self {
        Self {
            params,
            scheme: SchemeOptions::default(),
            inv_norm_bound: DEFAULT_INV_NORM_BOUND,
        }
    }
}

impl PhaseSystem for SokSystem {
    fn species(&self) -> usize {
        1
    }

    fn tau(&self) -> f64 {
        self.params.tau
    }

    fn scheme(&self) -> SchemeOptions {
        self.scheme
    }

    fn shifts(&self) -> Result<Vec<f64>> {
        let mut a = sok_operator(&self.params, self.scheme, false).alphas()?;
        a.extend(sok_operator(&self.params, self.scheme, true).alphas()?);
        Ok(a)
    }

    fn bdf1(&self, plan: &SolverPlan, u0: &[SphereField]) -> Result<Vec<SphereField>> {
        Ok(vec![bdf1_step_sok(
            &u0[0],
            &self.params,
            plan,
            self.scheme,
        )?])
    }

    fn bdf2(
        &self,
        plan: &SolverPlan,
        u_n: &[SphereField],
        u_nm1: &[SphereField],
    ) -> Result<Vec<SphereField>> {
        Ok(vec![bdf2_step_sok(
            &u_n[0],
            &u_nm1[0],
            &self.params,
            plan,
            self.scheme,
        )?])
    }

    fn energy(&self, plan: &SolverPlan, u: &[SphereField]) -> Result<f64> {
        Ok(energy_terms_sok_in(&u[0], &self.params, plan, self.scheme.volume)?.total())
    }

    fn modified_energy(
        &self,
        plan: &SolverPlan,
        u_n: &[SphereField],
        u_nm1: &[SphereField],
    ) -> Result<f64> {
        energy_modified_sok_with(
            &u_n[0],
            &u_nm1[0],
            &self.params,
            plan,
            self.inv_norm_bound,
            self.scheme.volume,
        )
    }
}

#[derive(Clone, Debug)]
pub struct SnoSystem {
    pub params: SnoParams,
    pub scheme: SchemeOptions,
    pub inv_norm_bound: f64,
}

impl SnoSystem {
    pub fn new(params: SnoParams) -> Self {
        Self {
            params,
            scheme: SchemeOptions::default(),
            inv_norm_bound: DEFAULT_INV_NORM_BOUND,
        }
    }
}

impl PhaseSystem for SnoSystem {
    fn species(&self) -> usize {
        2
    }

    fn tau(&self) -> f64 {
        self.params.tau
    }

    fn scheme(&self) -> SchemeOptions {
        self.scheme
    }

    fn shifts(&self) -> Result<Vec<f64>> {
        let mut a = Vec::new();
        for i in 0..2 {
            for bdf2 in [false, true] {
                a.extend(sno_operator(&self.params, self.scheme, i, bdf2).alphas()?);
            }
        }
        Ok(a)
    }

    fn bdf1(&self, plan: &SolverPlan, u0: &[SphereField]) -> Result<Vec<SphereField>> {
        Ok(bdf1_step_sno([&u0[0], &u0[1]], &self.params, plan, self.scheme)?.into())
    }

    fn bdf2(
        &self,
        plan: &SolverPlan,
        u_n: &[SphereField],
        u_nm1: &[SphereField],
    ) -> Result<Vec<SphereField>> {
        Ok(bdf2_step_sno(
            [&u_n[0], &u_n[1]],
            [&u_nm1[0], &u_nm1[1]],
            &self.params,
            plan,
            self.scheme,
        )?
        .into())
    }

    fn energy(&self, plan: &SolverPlan, u: &[SphereField]) -> Result<f64> {
        Ok(energy_terms_sno_in(&u[0], &u[1], &self.params, plan, self.scheme.volume)?.total())
    }

    fn modified_energy(
        &self,
        plan: &SolverPlan,
        u_n: &[SphereField],
        u_nm1: &[SphereField],
    ) -> Result<f64> {
        energy_modified_sno_with(
            [&u_n[0], &u_n[1]],
            [&u_nm1[0], &u_nm1[1]],
            &self.params,
            plan,
            self.inv_norm_bound,
            self.scheme.volume,
        )
    }
}

/// Solver plan holding every shift the system's steps need.
pub fn build_plan(grid: Grid, system: &dyn PhaseSystem) -> Result<SolverPlan> {
    SolverPlan::new(grid, &system.shifts()?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopCriterion {
    /// Threshold on `Σᵢ ‖uᵢⁿ⁺¹ - uᵢⁿ‖∞ / τ`.
    pub tol: f64,
    pub max_steps: usize,
    pub max_time: f64,
}

impl Default for StopCriterion {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_steps: 1_000_000,
            max_time: f64::INFINITY,
        }
    }
}

impl StopCriterion {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::param("max_steps", "must be at least 1"));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::param("max_time", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub stop: StopCriterion,
    /// Trace rows are written every `record_every` steps (and at the last step).
    pub record_every: usize,
    /// Evaluate energies for trace rows.
    pub record_energy: bool,
    /// Evaluate the modified energy every step and collect non-monotone steps.
    pub check_modified_energy: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stop: StopCriterion::default(),
            record_every: 100,
            record_energy: true,
            check_modified_energy: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub modified_energy: f64,
    /// `Σᵢ ‖uᵢⁿ - uᵢⁿ⁻¹‖∞ / Δt`; NaN for the initial row.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    StepCap,
    TimeCap,
    Diverged,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    /// Last accepted state, one field per species.
    pub fields: Vec<SphereField>,
    pub previous: Vec<SphereField>,
    pub trace: Vec<TraceRow>,
    pub stop_reason: StopReason,
    pub steps: usize,
    pub time: f64,
    pub residual: f64,
    /// Steps at which the modified energy rose by more than the allowed slack.
    pub modified_energy_violations: Vec<usize>,
}

fn change_norm(a: &[SphereField], b: &[SphereField]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).max_abs()).sum()
}

fn diverged(u: &[SphereField]) -> Option<f64> {
    let max = u.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
    let finite = u.iter().all(|f| f.is_finite());
    (!finite || max > DIVERGENCE_THRESHOLD).then_some(max)
}

/// Observer invoked after every accepted step (and for the initial state)
/// with `(step, time, fields)`.
pub type Observer<'a> = dyn FnMut(usize, f64, &[SphereField]) + 'a;

/// Runs one BDF1 step and then BDF2 steps until a stop criterion fires.
pub fn run_to_equilibrium(
    system: &dyn PhaseSystem,
    plan: &SolverPlan,
    init: Vec<SphereField>,
    opts: &RunOptions,
    observer: &mut Observer<'_>,
) -> Result<RunReport> {
    opts.stop.validate()?;
    if init.len() != system.species() {
        return Err(Error::param("init", "one field per species required"));
    }
    if opts.record_every == 0 {
        return Err(Error::param("record_every", "must be at least 1"));
    }
    let mut trace = Vec::new();
    let mut violations = Vec::new();
    let row = |step: usize,
               un: &[SphereField],
               unm1: &[SphereField],
               residual: f64|
     -> Result<TraceRow> {
        let (energy, modified_energy) = if opts.record_energy {
            (
                system.energy(plan, un)?,
                system.modified_energy(plan, un, unm1)?,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(TraceRow {
            step,
            time: system.step_time(step),
            energy,
            modified_energy,
            residual,
        })
    };

    let mut u_nm1 = init.clone();
    let mut u_n = init;
    trace.push(row(0, &u_n, &u_nm1, f64::NAN)?);
    observer(0, 0.0, &u_n);

    let first = system.bdf1(plan, &u_n)?;
    if diverged(&first).is_some() {
        return Ok(RunReport {
            fields: u_n,
            previous: u_nm1,
            trace,
            stop_reason: StopReason::Diverged,
            steps: 0,
            time: 0.0,
            residual: f64::NAN,
            modified_energy_violations: violations,
        });
    }
    let mut residual = change_norm(&first, &u_n) / system.first_step();
    u_nm1 = std::mem::replace(&mut u_n, first);
    let mut step = 1;
    let mut last_modified = if opts.check_modified_energy {
        Some(system.modified_energy(plan, &u_n, &u_nm1)?)
    } else {
        None
    };
    observer(step, system.step_time(step), &u_n);
    let mut recorded = false;
    if step % opts.record_every == 0 {
        trace.push(row(step, &u_n, &u_nm1, residual)?);
        recorded = true;
    }

    let stop_reason = loop {
        if step >= opts.stop.max_steps {
            break StopReason::StepCap;
        }
        if system.step_time(step) >= opts.stop.max_time {
            break StopReason::TimeCap;
        }
        let next = system.bdf2(plan, &u_n, &u_nm1)?;
        if diverged(&next).is_some() {
            break StopReason::Diverged;
        }
        residual = change_norm(&next, &u_n) / system.tau();
        u_nm1 = std::mem::replace(&mut u_n, next);
        step += 1;
        recorded = false;

        if let Some(prev) = last_modified {
            let cur = system.modified_energy(plan, &u_n, &u_nm1)?;
            if cur > prev + MODIFIED_ENERGY_SLACK * prev.abs() {
                violations.push(step);
            }
            last_modified = Some(cur);
        }
        observer(step, system.step_time(step), &u_n);
        let converged = residual <= opts.stop.tol;
        if step % opts.record_every == 0 || converged {
            trace.push(row(step, &u_n, &u_nm1, residual)?);
            recorded = true;
        }
        if converged {
            break StopReason::Converged;
        }
    };
    if !recorded {
        trace.push(row(step, &u_n, &u_nm1, residual)?);
    }
    Ok(RunReport {
        fields: u_n,
        previous: u_nm1,
        trace,
        stop_reason,
        steps: step,
        time: system.step_time(step),
        residual,
        modified_energy_violations: violations,
    })
}

/// Runs exactly `steps` steps (one BDF1, then BDF2) without energy bookkeeping.
pub fn integrate_steps(
    system: &dyn PhaseSystem,
    plan: &SolverPlan,
    init: Vec<SphereField>,
    steps: usize,
) -> Result<Vec<SphereField>> {
    if steps == 0 {
        return Ok(init);
    }
    let mut u_nm1 = init.clone();
    let mut u_n = system.bdf1(plan, &init)?;
    for n in 1..steps {
        let next = system.bdf2(plan, &u_n, &u_nm1)?;
        if let Some(max_abs) = diverged(&next) {
            return Err(Error::Diverged {
                step: n + 1,
                max_abs,
            });
        }
        u_nm1 = std::mem::replace(&mut u_n, next);
    }
    Ok(u_n)
}
