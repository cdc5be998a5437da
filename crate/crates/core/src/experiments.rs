//! Initial conditions, bubble diagnostics, convergence studies, and γ sweeps.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dfs::{
    extend_bmc, integrate_sphere, norm_l2, restrict, symmetrize_bmc, Grid, SphereField,
};
use crate::dynamics::{
    build_plan, integrate_steps, run_to_equilibrium, PhaseSystem, RunOptions, SchemeOptions,
    SnoSystem, SokSystem, StopReason,
};
use crate::energetics::{SnoParams, SokParams};
use crate::error::{Error, Result};

/// Default threshold separating the two phases.
pub const BUBBLE_THRESHOLD: f64 = 0.5;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coordinate disk `(φ - φ₀)² + (θ - θ₀)² < r²` on the native domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub phi0: f64,
    pub theta0: f64,
    pub radius: f64,
}

impl Circle {
    pub fn contains(&self, phi: f64, theta: f64) -> bool {
        let dp = phi - self.phi0;
        let dt = theta - self.theta0;
        dp * dp + dt * dt < self.radius * self.radius
    }

    fn random_center(radius: f64, rng: &mut impl Rng) -> Self {
        Self {
            phi0: rng.gen_range(-PI..=PI),
            theta0: rng.gen_range(0.0..=PI),
            radius,
        }
    }
}

fn from_native(grid: Grid, native: &Array2<f64>) -> SphereField {
    symmetrize_bmc(&extend_bmc(grid, native).expect("native shape is derived from the grid"))
}

fn circle_mask(grid: Grid, circle: &Circle) -> Array2<f64> {
    Array2::from_shape_fn(grid.native_shape(), |(i, r)| {
        if circle.contains(grid.phi(i), grid.native_theta(r)) {
            1.0
        } else {
            0.0
        }
    })
}

/// Radius `√(2πω) + offset` of the random-circle initial data.
pub fn circle_radius(omega: f64, offset: f64) -> f64 {
    (2.0 * PI * omega).sqrt() + offset
}

/// Indicator of one random coordinate disk of radius `√(2πω) + 0.2`.
pub fn init_circle(grid: Grid, omega: f64, seed: u64) -> Result<SphereField> {
    check_omega("omega", omega)?;
    let mut rng = rng_from_seed(seed);
    let c = Circle::random_center(circle_radius(omega, 0.2), &mut rng);
    Ok(from_native(grid, &circle_mask(grid, &c)))
}

/// Two random disks of radii `√(2πωᵢ) + 0.1`; the second is cleared where
/// the first is set.
pub fn init_two_circles(
    grid: Grid,
    omega1: f64,
    omega2: f64,
    seed: u64,
) -> Result<[SphereField; 2]> {
    check_omega("omega1", omega1)?;
    check_omega("omega2", omega2)?;
    let mut rng = rng_from_seed(seed);
    let c1 = Circle::random_center(circle_radius(omega1, 0.1), &mut rng);
    let c2 = Circle::random_center(circle_radius(omega2, 0.1), &mut rng);
    let u1 = circle_mask(grid, &c1);
    let mut u2 = circle_mask(grid, &c2);
    u2.zip_mut_with(&u1, |b, &a| *b = b.min(1.0 - a));
    Ok([from_native(grid, &u1), from_native(grid, &u2)])
}

fn check_omega(name: &'static str, omega: f64) -> Result<()> {
    if omega > 0.0 && omega < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, "must lie in (0, 1)"))
    }
}

/// Piecewise-constant uniform `[0, 1]` noise on `ratio × ratio` native blocks.
///
/// The last native row (the south pole) joins the final block row.
pub fn init_random_blocks(grid: Grid, ratio: usize, seed: u64) -> Result<SphereField> {
    let (n_phi, n_theta) = grid.shape();
    if ratio == 0 || n_phi % ratio != 0 || n_theta % ratio != 0 {
        return Err(Error::param(
            "ratio",
            format!("must divide both grid sizes {n_phi}×{n_theta}"),
        ));
    }
    let bp = n_phi / ratio;
    let bt = (n_theta / 2 / ratio).max(1);
    let mut rng = rng_from_seed(seed);
    let blocks = Array2::from_shape_fn((bp, bt), |_| rng.gen_range(0.0..=1.0));
    let native = Array2::from_shape_fn(grid.native_shape(), |(i, r)| {
        blocks[[i / ratio, (r / ratio).min(bt - 1)]]
    });
    Ok(from_native(grid, &native))
}

/// Circle placed into one species of a two-species initial condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeciesCircle {
    /// `0` for `u₁`, `1` for `u₂`.
    pub species: usize,
    pub circle: Circle,
}

/// Places the circles in order; where a circle meets a node already owned by
/// the other species, the later circle is truncated there.
pub fn init_from_circles(grid: Grid, circles: &[SpeciesCircle]) -> Result<[SphereField; 2]> {
    let mut u = [
        Array2::<f64>::zeros(grid.native_shape()),
        Array2::<f64>::zeros(grid.native_shape()),
    ];
    for sc in circles {
        if sc.species > 1 {
            return Err(Error::param("species", "must be 0 or 1"));
        }
        let other = 1 - sc.species;
        for ((i, r), v) in circle_mask(grid, &sc.circle).indexed_iter() {
            if *v > 0.0 && u[other][[i, r]] == 0.0 {
                u[sc.species][[i, r]] = 1.0;
            }
        }
    }
    Ok([from_native(grid, &u[0]), from_native(grid, &u[1])])
}

/// Random patches of the native domain, each holding one random circle of
/// each species; the two may overlap. Radii are drawn around the disk size
/// that gives each species its target volume fraction.
pub fn semi_random_circles(omega1: f64, omega2: f64, seed: u64) -> Result<Vec<SpeciesCircle>> {
    check_omega("omega1", omega1)?;
    check_omega("omega2", omega2)?;
    if omega1 + omega2 >= 1.0 {
        return Err(Error::param("omega", "omega1 + omega2 must be below 1"));
    }
    let mut rng = rng_from_seed(seed);
    let np: usize = rng.gen_range(3..=6);
    let nt: usize = rng.gen_range(2..=4);
    let (wp, wt) = (2.0 * PI / np as f64, PI / nt as f64);
    let total = np * nt;
    let mut out = Vec::with_capacity(2 * total);
    for idx in 0..total {
        let (a, b) = (idx % np, idx / np);
        for (species, omega) in [(0, omega1), (1, omega2)] {
            // planar disk area πr² matching 4πω split over the patches
            let r_mean = (4.0 * omega / total as f64).sqrt();
            out.push(SpeciesCircle {
                species,
                circle: Circle {
                    phi0: -PI + wp * (a as f64 + rng.gen_range(0.0..1.0)),
                    theta0: wt * (b as f64 + rng.gen_range(0.0..1.0)),
                    radius: r_mean * rng.gen_range(0.8..1.2),
                },
            });
        }
    }
    Ok(out)
}

pub fn init_semi_random(
    grid: Grid,
    omega1: f64,
    omega2: f64,
    seed: u64,
) -> Result<[SphereField; 2]> {
    init_from_circles(grid, &semi_random_circles(omega1, omega2, seed)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub area: f64,
    /// Unit vector of the area-weighted centroid direction.
    pub centroid: [f64; 3],
}

impl Bubble {
    /// Diameter of the planar disk of equal area.
    pub fn diameter(&self) -> f64 {
        2.0 * (self.area / PI).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleReport {
    pub count: usize,
    pub bubbles: Vec<Bubble>,
    pub threshold: f64,
}

impl BubbleReport {
    pub fn areas(&self) -> Vec<f64> {
        self.bubbles.iter().map(|b| b.area).collect()
    }
}

/// Spherical area represented by each native node (cells of width `h` centered
/// on the node, pole cells are caps of radius `h/2`).
pub fn native_cell_areas(grid: Grid) -> Vec<f64> {
    let h = grid.h_theta();
    let hp = grid.h_phi();
    let last = grid.native_rows() - 1;
    (0..=last)
        .map(|r| {
            if r == 0 || r == last {
                hp * (1.0 - (0.5 * h).cos())
            } else {
                let t = grid.native_theta(r);
                hp * ((t - 0.5 * h).cos() - (t + 0.5 * h).cos())
            }
        })
        .collect()
}

/// Connected components of `{u ≥ threshold}` on the native grid.
///
/// Nodes are 4-connected with periodic wrap in `φ`; all super-threshold nodes
/// of a pole row are joined, since the row samples a single point.
pub fn count_bubbles(u: &SphereField, threshold: f64) -> BubbleReport {
    let grid = u.grid();
    let native = restrict(u).values;
    let (n_phi, rows) = native.dim();
    let last = rows - 1;
    let on = |i: usize, r: usize| native[[i, r]] >= threshold;
    let mut label = Array2::<usize>::from_elem((n_phi, rows), usize::MAX);
    let areas = native_cell_areas(grid);
    let mut bubbles = Vec::new();
    let mut stack = Vec::new();
    for i0 in 0..n_phi {
        for r0 in 0..rows {
            if !on(i0, r0) || label[[i0, r0]] != usize::MAX {
                continue;
            }
            let id = bubbles.len();
            let mut area = 0.0;
            let mut c = [0.0; 3];
            label[[i0, r0]] = id;
            stack.push((i0, r0));
            while let Some((i, r)) = stack.pop() {
                let a = areas[r];
                let (st, ct) = grid.native_theta(r).sin_cos();
                let (sp, cp) = grid.phi(i).sin_cos();
                area += a;
                c[0] += a * st * cp;
                c[1] += a * st * sp;
                c[2] += a * ct;
                let mut visit = |ni: usize, nr: usize, stack: &mut Vec<(usize, usize)>| {
                    if on(ni, nr) && label[[ni, nr]] == usize::MAX {
                        label[[ni, nr]] = id;
                        stack.push((ni, nr));
                    }
                };
                visit((i + 1) % n_phi, r, &mut stack);
                visit((i + n_phi - 1) % n_phi, r, &mut stack);
                if r > 0 {
                    visit(i, r - 1, &mut stack);
                }
                if r < last {
                    visit(i, r + 1, &mut stack);
                }
                if r == 0 || r == last {
                    for ni in 0..n_phi {
                        visit(ni, r, &mut stack);
                    }
                }
            }
            let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            let centroid = if norm > 0.0 {
                [c[0] / norm, c[1] / norm, c[2] / norm]
            } else {
                [0.0, 0.0, 1.0]
            };
            bubbles.push(Bubble { area, centroid });
        }
    }
    BubbleReport {
        count: bubbles.len(),
        bubbles,
        threshold,
    }
}

/// Geodesic distance between two unit vectors.
pub fn angular_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let s = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    s.atan2(dot)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyKind {
    AllDouble,
    AllSingle,
    Mixed,
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingSummary {
    /// Matched `(u₁ bubble, u₂ bubble)` index pairs.
    pub pairs: Vec<(usize, usize)>,
    pub double: usize,
    pub single: [usize; 2],
    pub kind: AssemblyKind,
}

/// Greedily pairs `u₁` and `u₂` bubbles whose centroids lie within one
/// bubble diameter (the larger of the two), closest pairs first.
pub fn classify_pairs(b1: &BubbleReport, b2: &BubbleReport) -> PairingSummary {
    let mut cand = Vec::new();
    for (i, x) in b1.bubbles.iter().enumerate() {
        for (j, y) in b2.bubbles.iter().enumerate() {
            let d = angular_distance(x.centroid, y.centroid);
            if d <= x.diameter().max(y.diameter()) {
                cand.push((d, i, j));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used1 = vec![false; b1.count];
    let mut used2 = vec![false; b2.count];
    let mut pairs = Vec::new();
    for (_, i, j) in cand {
        if !used1[i] && !used2[j] {
            used1[i] = true;
            used2[j] = true;
            pairs.push((i, j));
        }
    }
    let double = pairs.len();
    let single = [b1.count - double, b2.count - double];
    let kind = match (double, single[0] + single[1]) {
        (0, 0) => AssemblyKind::Empty,
        (_, 0) => AssemblyKind::AllDouble,
        (0, _) => AssemblyKind::AllSingle,
        _ => AssemblyKind::Mixed,
    };
    PairingSummary {
        pairs,
        double,
        single,
        kind,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(ln γ, ln count)`.
pub fn fit_two_thirds(pairs: &[(f64, f64)]) -> Result<PowerFit> {
    if pairs.len() < 2 {
        return Err(Error::param("pairs", "at least two pairs required"));
    }
    if pairs.iter().any(|&(g, k)| !(g > 0.0 && k > 0.0)) {
        return Err(Error::param("pairs", "all values must be positive"));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("pairs", "γ values must not all coincide"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(PowerFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Either flow with its scheme options.
#[derive(Clone, Debug)]
pub enum Model {
    Sok(SokSystem),
    Sno(SnoSystem),
}

impl Model {
    pub fn system(&self) -> &dyn PhaseSystem {
        match self {
            Model::Sok(s) => s,
            Model::Sno(s) => s,
        }
    }

    pub fn tau(&self) -> f64 {
        self.system().tau()
    }

    pub fn with_scheme(&self, scheme: SchemeOptions) -> Self {
        let mut m = self.clone();
        match &mut m {
            Model::Sok(s) => s.scheme = scheme,
            Model::Sno(s) => s.scheme = scheme,
        }
        m
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        let mut m = self.clone();
        match &mut m {
            Model::Sok(s) => s.params.tau = tau,
            Model::Sno(s) => s.params.tau = tau,
        }
        m
    }

    /// Sets `γ` (single species) or `γ₁₁ = γ₂₂` (two species).
    pub fn with_gamma(&self, gamma: f64) -> Self {
        let mut m = self.clone();
        match &mut m {
            Model::Sok(s) => s.params.gamma = gamma,
            Model::Sno(s) => {
                s.params.gamma11 = gamma;
                s.params.gamma22 = gamma;
            }
        }
        m
    }

    pub fn with_gamma12(&self, gamma12: f64) -> Result<Self> {
        let mut m = self.clone();
        match &mut m {
            Model::Sok(_) => return Err(Error::param("gamma12", "requires the two-species model")),
            Model::Sno(s) => s.params.gamma12 = gamma12,
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Sok(s) => s.params.validate(),
            Model::Sno(s) => s.params.validate(),
        }
    }

    pub fn sok(params: SokParams) -> Self {
        Model::Sok(SokSystem::new(params))
    }

    pub fn sno(params: SnoParams) -> Self {
        Model::Sno(SnoSystem::new(params))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub tau: f64,
    pub error: f64,
    /// Observed order against the previous (larger) step; `None` for the first row.
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub final_time: f64,
    pub benchmark_tau: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn rates(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.rate).collect()
    }

    pub fn errors_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }
}

/// Number of steps `n` with `τ₁ + (n - 1)τ` closest to `final_time`.
pub fn steps_to(system: &dyn PhaseSystem, final_time: f64) -> usize {
    let tau = system.tau();
    1 + ((final_time - system.first_step()) / tau).round().max(0.0) as usize
}

/// Errors at `final_time` against a small-step benchmark, and observed orders.
pub fn convergence_harness(
    model: &Model,
    init: &[SphereField],
    ladder: &[f64],
    benchmark_tau: f64,
    final_time: f64,
) -> Result<ConvergenceTable> {
    if ladder.is_empty() {
        return Err(Error::param("ladder", "must not be empty"));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("ladder", "must be strictly decreasing"));
    }
    if !(benchmark_tau > 0.0 && benchmark_tau < *ladder.last().expect("non-empty")) {
        return Err(Error::param("benchmark_tau", "must lie below the ladder"));
    }
    if !(final_time > 0.0) {
        return Err(Error::param("final_time", "must be positive"));
    }
    model.validate()?;
    let grid = init[0].grid();
    let mut taus = vec![benchmark_tau];
    taus.extend_from_slice(ladder);
    let finals: Vec<Vec<SphereField>> = taus
        .par_iter()
        .map(|&tau| {
            let m = model.with_tau(tau);
            let plan = build_plan(grid, m.system())?;
            integrate_steps(
                m.system(),
                &plan,
                init.to_vec(),
                steps_to(m.system(), final_time),
            )
        })
        .collect::<Result<_>>()?;
    let bench = &finals[0];
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(ladder.len());
    for (k, &tau) in ladder.iter().enumerate() {
        let error: f64 = finals[k + 1]
            .iter()
            .zip(bench)
            .map(|(a, b)| norm_l2(&(a - b)))
            .sum();
        let rate = rows
            .last()
            .map(|prev| (prev.error / error).ln() / (prev.tau / tau).ln());
        rows.push(ConvergenceRow { tau, error, rate });
    }
    Ok(ConvergenceTable {
        final_time,
        benchmark_tau,
        rows,
    })
}

/// Outcome of one equilibrium run of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub seed: u64,
    pub energy: f64,
    pub stop_reason: StopReason,
    pub steps: usize,
    /// Bubble count per species.
    pub counts: Vec<usize>,
    pub pairing: Option<PairingSummary>,
    /// Volume integral `∫uᵢ` per species.
    pub volumes: Vec<f64>,
}

impl SweepRun {
    /// Bubble count for one species, double-bubble count for two.
    pub fn primary_count(&self) -> usize {
        match &self.pairing {
            Some(p) => p.double,
            None => self.counts[0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    /// Lowest-energy finished run, if any run finished.
    pub best: Option<SweepRun>,
    pub runs: Vec<SweepRun>,
    /// `(seed, message)` for runs that returned an error.
    pub failures: Vec<(u64, String)>,
}

impl SweepRow {
    pub fn best_count(&self) -> Option<usize> {
        self.best.as_ref().map(SweepRun::primary_count)
    }
}

/// Runs one model to equilibrium from `init` and summarizes the final state.
pub fn equilibrium_run(
    model: &Model,
    init: Vec<SphereField>,
    seed: u64,
    opts: &RunOptions,
) -> Result<SweepRun> {
    equilibrium_state(model, init, seed, opts).map(|(run, _)| run)
}

/// As [`equilibrium_run`], also returning the final fields.
pub fn equilibrium_state(
    model: &Model,
    init: Vec<SphereField>,
    seed: u64,
    opts: &RunOptions,
) -> Result<(SweepRun, Vec<SphereField>)> {
    model.validate()?;
    let grid = init
        .first()
        .ok_or_else(|| Error::param("init", "one field per species required"))?
        .grid();
    let plan = build_plan(grid, model.system())?;
    let report = run_to_equilibrium(model.system(), &plan, init, opts, &mut |_, _, _| {})?;
    let energy = model.system().energy(&plan, &report.fields)?;
    let bubbles: Vec<BubbleReport> = report
        .fields
        .iter()
        .map(|f| count_bubbles(f, BUBBLE_THRESHOLD))
        .collect();
    let pairing = (bubbles.len() == 2).then(|| classify_pairs(&bubbles[0], &bubbles[1]));
    let run = SweepRun {
        seed,
        energy,
        stop_reason: report.stop_reason,
        steps: report.steps,
        counts: bubbles.iter().map(|b| b.count).collect(),
        pairing,
        volumes: report.fields.iter().map(integrate_sphere).collect(),
    };
    Ok((run, report.fields))
}

/// Picks the lowest-energy run among those that did not diverge; ties go to
/// the smaller seed so the choice does not depend on run order.
pub fn select_best(runs: &[SweepRun]) -> Option<SweepRun> {
    runs.iter()
        .filter(|r| r.stop_reason != StopReason::Diverged && r.energy.is_finite())
        .min_by(|a, b| a.energy.total_cmp(&b.energy).then(a.seed.cmp(&b.seed)))
        .cloned()
}

/// Receives `(parameter, run, final fields)` for every finished sweep run.
pub type SweepSink<'a> = dyn Fn(f64, &SweepRun, &[SphereField]) -> Result<()> + Sync + 'a;

/// Initial data for a given seed.
pub type SeededInit<'a> = dyn Fn(u64) -> Result<Vec<SphereField>> + Sync + 'a;

/// Equilibrium runs over `models × seeds`, executed concurrently.
fn sweep(
    models: &[(f64, Model)],
    seeds: &[u64],
    init: &SeededInit<'_>,
    opts: &RunOptions,
    sink: Option<&SweepSink<'_>>,
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(Error::param("seeds", "at least one seed per γ required"));
    }
    let jobs: Vec<(usize, u64)> = (0..models.len())
        .flat_map(|g| seeds.iter().map(move |&s| (g, s)))
        .collect();
    let results: Vec<(usize, u64, Result<SweepRun>)> = jobs
        .par_iter()
        .map(|&(g, seed)| {
            let (param, model) = &models[g];
            let res = init(seed)
                .and_then(|u0| equilibrium_state(model, u0, seed, opts))
                .and_then(|(run, fields)| {
                    if let Some(sink) = sink {
                        sink(*param, &run, &fields)?;
                    }
                    Ok(run)
                });
            (g, seed, res)
        })
        .collect();
    let mut rows: Vec<SweepRow> = models
        .iter()
        .map(|(gamma, _)| SweepRow {
            gamma: *gamma,
            best: None,
            runs: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for (g, seed, res) in results {
        match res {
            Ok(run) => rows[g].runs.push(run),
            Err(e) => rows[g].failures.push((seed, e.to_string())),
        }
    }
    for row in &mut rows {
        row.best = select_best(&row.runs);
    }
    Ok(rows)
}

/// For each `γ` (or `γ₁₁ = γ₂₂`), the lowest-energy equilibrium over `seeds`.
pub fn gamma_sweep(
    base: &Model,
    gammas: &[f64],
    seeds: &[u64],
    init: &SeededInit<'_>,
    opts: &RunOptions,
    sink: Option<&SweepSink<'_>>,
) -> Result<Vec<SweepRow>> {
    let models: Vec<(f64, Model)> = gammas.iter().map(|&g| (g, base.with_gamma(g))).collect();
    sweep(&models, seeds, init, opts, sink)
}

/// As [`gamma_sweep`] but varying the cross repulsion `γ₁₂` of the two-species model.
pub fn gamma12_sweep(
    base: &Model,
    gamma12s: &[f64],
    seeds: &[u64],
    init: &SeededInit<'_>,
    opts: &RunOptions,
    sink: Option<&SweepSink<'_>>,
) -> Result<Vec<SweepRow>> {
    let models = gamma12s
        .iter()
        .map(|&g| Ok((g, base.with_gamma12(g)?)))
        .collect::<Result<Vec<_>>>()?;
    sweep(&models, seeds, init, opts, sink)
}
