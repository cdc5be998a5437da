//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing output capture) and then asserts.
//!
//! Slow criteria are ignored by default:
//! `cargo test --release -p oksphere --test acceptance -- --include-ignored`.

use std::f64::consts::PI;
use std::fmt::Display;
use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;

use oksphere::dfs::{extend_bmc, integrate_sphere, Grid, SphereField};
use oksphere::dynamics::{
    build_plan, run_to_equilibrium, RunOptions, SchemeOptions, SnoSystem, SokSystem, Startup,
    StopCriterion, StopReason,
};
use oksphere::energetics::{tau_max_sok, SnoParams, SokParams, DEFAULT_INV_NORM_BOUND};
use oksphere::experiments::{
    convergence_harness, count_bubbles, fit_two_thirds, gamma_sweep, init_circle,
    init_random_blocks, init_semi_random, init_two_circles, rng_from_seed, ConvergenceTable, Model,
    SweepRow,
};
use oksphere::helmholtz::{estimate_inv_norm, SolverPlan};
use oksphere::io::{read_snapshot, write_snapshot};

fn report(id: &str, name: &str, pass: bool, detail: impl Display) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "{verdict} criterion {id}: {name} ({detail})"
    );
}

fn info(id: &str, detail: impl Display) {
    let _ = writeln!(std::io::stderr(), "INFO criterion {id}: {detail}");
}

/// Mesh width of the 256-point grid; interface widths are given in its units.
const H256: f64 = 2.0 * PI / 256.0;

/// Interface width for equilibrium experiments. `ε = 10h` makes the uniform
/// state the minimizer at these volume fractions, so no bubbles form.
const EQUILIBRIUM_EPSILON: f64 = 3.0 * H256;

fn sok(epsilon: f64, gamma: f64, tau: f64) -> SokParams {
    SokParams {
        epsilon,
        omega: 0.15,
        gamma,
        m: 1000.0,
        kappa: 2000.0,
        beta: 0.0,
        kappa_star: 2000.0,
        beta_star: 0.0,
        tau,
    }
}

fn sno(epsilon: f64, gamma: f64, tau: f64) -> SnoParams {
    SnoParams {
        epsilon,
        omega: [0.09, 0.09],
        gamma11: gamma,
        gamma22: gamma,
        gamma12: 0.0,
        m: [1000.0; 2],
        kappa: [2000.0; 2],
        beta: [0.0; 2],
        kappa_star: [2000.0; 2],
        beta_star: [0.0; 2],
        tau,
    }
}

// ---------------------------------------------------------------- criterion 1

/// `Re/Im (a·x)^d` for an isotropic `a = u + iv` (`u ⊥ v`, `|u| = |v| = 1`) is
/// a harmonic polynomial, so its trace on the sphere has `-Δ` eigenvalue
/// `d(d+1)`.
fn isotropic_harmonic(grid: Grid, d: i32, u: [f64; 3], v: [f64; 3], imag: bool) -> SphereField {
    SphereField::from_native_fn(grid, |phi, theta| {
        let x = [
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        ];
        let re = u[0] * x[0] + u[1] * x[1] + u[2] * x[2];
        let im = v[0] * x[0] + v[1] * x[1] + v[2] * x[2];
        let z = num_complex::Complex64::new(re, im).powi(d);
        if imag {
            z.im
        } else {
            z.re
        }
    })
}

fn random_frame(rng: &mut impl Rng) -> ([f64; 3], [f64; 3]) {
    let mut g = || {
        let v: [f64; 3] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        v
    };
    let norm = |a: [f64; 3]| {
        let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        [a[0] / n, a[1] / n, a[2] / n]
    };
    let u = norm(g());
    let w = g();
    let dot = u[0] * w[0] + u[1] * w[1] + u[2] * w[2];
    let v = norm([w[0] - dot * u[0], w[1] - dot * u[1], w[2] - dot * u[2]]);
    (u, v)
}

#[test]
fn criterion_1_helmholtz_oracle() {
    let start = Instant::now();
    let mut rng = rng_from_seed(1);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for n in [32, 64] {
        let g = Grid::square(n).unwrap();
        let plan = SolverPlan::new(g, &[0.0]).unwrap();
        for d in 1..=4 {
            for _ in 0..3 {
                let (u, v) = random_frame(&mut rng);
                for imag in [false, true] {
                    let y = isotropic_harmonic(g, d, u, v, imag);
                    let expect = &y * (1.0 / f64::from(d * (d + 1)));
                    let got = plan.inv_laplacian(&y).unwrap();
                    worst = worst.max((&got - &expect).max_abs() / expect.max_abs());
                    cases += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-10 && secs < 1.0;
    report(
        "1",
        "inverse Laplacian on harmonics of degree 1-4, n = 32, 64",
        pass,
        format!("{cases} harmonics, max rel error {worst:.2e} <= 1e-10, {secs:.3} s < 1 s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_inverse_norm_bound() {
    let start = Instant::now();
    let mut values = Vec::new();
    for n in [16, 32, 64, 128] {
        let plan = SolverPlan::new(Grid::square(n).unwrap(), &[0.0]).unwrap();
        values.push((n, estimate_inv_norm(&plan, 200, 7).unwrap()));
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = values.iter().map(|v| v.1).fold(0.0, f64::max);
    let pass = worst <= DEFAULT_INV_NORM_BOUND && secs < 60.0;
    let detail: Vec<String> = values
        .iter()
        .map(|(n, v)| format!("n={n}: {v:.4}"))
        .collect();
    report(
        "2",
        "estimated inverse-Laplacian norm <= 2 over 200 trials",
        pass,
        format!("{}, {secs:.1} s", detail.join(", ")),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 3

const LADDER: [f64; 5] = [5e-4, 2.5e-4, 1.25e-4, 6.25e-5, 3.125e-5];

fn table_line(t: &ConvergenceTable) -> String {
    t.rows
        .iter()
        .map(|r| match r.rate {
            Some(rate) => format!("{:.3e} ({rate:.2})", r.error),
            None => format!("{:.3e}", r.error),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn convergence(model: &Model, init: &[SphereField], band: (f64, f64), id: &str, name: &str) {
    let start = Instant::now();
    let t = convergence_harness(model, init, &LADDER, 1e-6, 0.01).unwrap();
    let rates = t.rates();
    let pass = t.errors_decreasing() && rates.iter().all(|r| (band.0..=band.1).contains(r));
    report(
        id,
        name,
        pass,
        format!(
            "rates in [{}, {}]; {}; {:.0} s",
            band.0,
            band.1,
            table_line(&t),
            start.elapsed().as_secs_f64()
        ),
    );
    let short = model.with_scheme(SchemeOptions {
        startup: Startup::ShortStep,
        ..model.system().scheme()
    });
    let ts = convergence_harness(&short, init, &LADDER, 1e-6, 0.01).unwrap();
    info(
        id,
        format!("with the tau^2 first step: {}", table_line(&ts)),
    );
    assert!(pass);
}

#[test]
#[ignore = "slow: about two minutes per model in release mode"]
fn criterion_3a_convergence_sok() {
    let g = Grid::square(128).unwrap();
    let p = sok(10.0 * g.h_phi(), 100.0, 1e-3);
    let init = vec![init_circle(g, 0.15, 0).unwrap()];
    convergence(
        &Model::sok(p),
        &init,
        (1.6, 2.2),
        "3a",
        "SOK temporal order, n = 128",
    );
}

#[test]
#[ignore = "slow: about two minutes per model in release mode"]
fn criterion_3b_convergence_sno() {
    let g = Grid::square(128).unwrap();
    let p = sno(10.0 * g.h_phi(), 100.0, 2e-4);
    let init: Vec<SphereField> = init_two_circles(g, 0.09, 0.09, 0).unwrap().into();
    convergence(
        &Model::sno(p),
        &init,
        (1.55, 2.2),
        "3b",
        "SNO temporal order, n = 128",
    );
}

// ------------------------------------------------------------ criteria 4 and 5

struct Dissipation {
    rises: usize,
    worst: f64,
}

fn energy_rises(trace: &[oksphere::dynamics::TraceRow], modified: bool) -> Dissipation {
    let mut d = Dissipation {
        rises: 0,
        worst: 0.0,
    };
    for w in trace.windows(2) {
        let (a, b) = if modified {
            (w[0].modified_energy, w[1].modified_energy)
        } else {
            (w[0].energy, w[1].energy)
        };
        let rel = (b - a) / a.abs().max(f64::MIN_POSITIVE);
        if rel > 1e-10 {
            d.rises += 1;
            d.worst = d.worst.max(rel);
        }
    }
    d
}

fn every_step(max_steps: usize) -> RunOptions {
    RunOptions {
        stop: StopCriterion {
            max_steps,
            ..Default::default()
        },
        record_every: 1,
        record_energy: true,
        check_modified_energy: false,
    }
}

/// Volume error of an equilibrium relative to `ω·4π`.
fn volume_error(u: &SphereField, omega: f64) -> f64 {
    (integrate_sphere(u) - omega * 4.0 * PI).abs() / (omega * 4.0 * PI)
}

#[test]
fn criterion_4_energy_dissipation() {
    let start = Instant::now();
    let g = Grid::square(64).unwrap();
    let p = sok(10.0 * g.h_phi(), 1500.0, 1e-3);
    let sys = SokSystem::new(p.clone());
    let plan = build_plan(g, &sys).unwrap();
    let mut rises = 0;
    let mut worst = 0.0_f64;
    let mut steps = Vec::new();
    for seed in 0..5 {
        let init = vec![init_random_blocks(g, 4, seed).unwrap()];
        let r =
            run_to_equilibrium(&sys, &plan, init, &every_step(100_000), &mut |_, _, _| {}).unwrap();
        let d = energy_rises(&r.trace, false);
        rises += d.rises;
        worst = worst.max(d.worst);
        steps.push(r.steps);
    }
    let plain_ok = rises == 0;

    let tau = tau_max_sok(&p, DEFAULT_INV_NORM_BOUND);
    let small = SokSystem::new(SokParams { tau, ..p.clone() });
    let plan_small = build_plan(g, &small).unwrap();
    let opts = RunOptions {
        stop: StopCriterion {
            max_steps: 200,
            tol: 1e-300,
            ..Default::default()
        },
        record_every: 1,
        record_energy: true,
        check_modified_energy: true,
    };
    let init = vec![init_random_blocks(g, 4, 11).unwrap()];
    let r = run_to_equilibrium(&small, &plan_small, init, &opts, &mut |_, _, _| {}).unwrap();
    let modified_ok = r.steps == 200 && r.modified_energy_violations.is_empty();
    let secs = start.elapsed().as_secs_f64();
    let pass = plain_ok && modified_ok && secs < 600.0;
    report(
        "4",
        "energy dissipation, SOK n = 64, gamma = 1500, tau = 1e-3, eps = 10h",
        pass,
        format!(
            "5 seeds run to equilibrium in {steps:?} steps with {rises} energy rises \
             (worst rel {worst:.1e}); 200 steps at tau_max = {tau:.3e} with {} modified-energy \
             rises; {secs:.1} s",
            r.modified_energy_violations.len()
        ),
    );

    // same test in the phase-separating regime, reported only
    let eps = 4.0 * H256;
    let p = sok(eps, 1500.0, 1e-3);
    let sys = SokSystem::new(p);
    let plan = build_plan(g, &sys).unwrap();
    let init = vec![init_random_blocks(g, 4, 0).unwrap()];
    let r = run_to_equilibrium(&sys, &plan, init, &every_step(2000), &mut |_, _, _| {}).unwrap();
    let plain = energy_rises(&r.trace, false);
    let modified = energy_rises(&r.trace, true);
    info(
        "4",
        format!(
            "eps = {eps:.4}: over {} steps the energy rises at {} steps (worst rel {:.1e}), \
             the modified energy at {}",
            r.steps, plain.rises, plain.worst, modified.rises
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_volume_control() {
    let start = Instant::now();
    let mut errors = Vec::new();
    let mut all_converged = true;
    let g = Grid::square(64).unwrap();
    for (eps, seeds) in [(10.0 * g.h_phi(), 0..5), (4.0 * H256, 0..2)] {
        let p = sok(eps, 1500.0, 1e-3);
        let sys = SokSystem::new(p);
        let plan = build_plan(g, &sys).unwrap();
        for seed in seeds {
            let init = vec![init_random_blocks(g, 4, seed).unwrap()];
            let opts = RunOptions {
                stop: StopCriterion {
                    max_steps: 200_000,
                    ..Default::default()
                },
                record_every: 10_000,
                record_energy: false,
                check_modified_energy: false,
            };
            let r = run_to_equilibrium(&sys, &plan, init, &opts, &mut |_, _, _| {}).unwrap();
            all_converged &= r.stop_reason == StopReason::Converged;
            errors.push((
                eps,
                volume_error(&r.fields[0], 0.15),
                count_bubbles(&r.fields[0], 0.5).count,
            ));
        }
    }
    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let pass = all_converged && worst <= 0.05;
    let detail: Vec<String> = errors
        .iter()
        .map(|(e, v, c)| format!("eps {e:.3}: {:.2}% ({c} bubbles)", 100.0 * v))
        .collect();
    report(
        "5",
        "SOK equilibrium volume within 5% of omega*4pi",
        pass,
        format!(
            "{}; {:.1} s",
            detail.join(", "),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 6

fn equilibrium_options() -> RunOptions {
    RunOptions {
        stop: StopCriterion {
            max_steps: 2_000_000,
            ..Default::default()
        },
        record_every: 10_000,
        record_energy: false,
        check_modified_energy: false,
    }
}

fn sweep_line(rows: &[SweepRow]) -> String {
    rows.iter()
        .map(|r| {
            let counts: Vec<usize> = r.runs.iter().map(|x| x.primary_count()).collect();
            format!("gamma {}: best {:?} of {counts:?}", r.gamma, r.best_count())
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn counts_ok(rows: &[SweepRow], targets: &[(usize, usize)]) -> bool {
    let best: Vec<Option<usize>> = rows.iter().map(SweepRow::best_count).collect();
    let within = best
        .iter()
        .zip(targets)
        .all(|(b, (want, tol))| b.is_some_and(|b| b.abs_diff(*want) <= *tol));
    let monotone = best.windows(2).all(|w| w[0] <= w[1]);
    within && monotone
}

#[test]
#[ignore = "slow: equilibrium sweeps at n = 128"]
fn criterion_6a_equilibrium_counts_sok() {
    let start = Instant::now();
    let g = Grid::square(128).unwrap();
    let base = Model::sok(sok(EQUILIBRIUM_EPSILON, 600.0, 1e-3));
    let init = |seed| Ok(vec![init_random_blocks(g, 8, seed)?]);
    let rows = gamma_sweep(
        &base,
        &[600.0, 1500.0],
        &[0, 1, 2, 3, 4],
        &init,
        &equilibrium_options(),
        None,
    )
    .unwrap();
    let pass = counts_ok(&rows, &[(10, 2), (18, 2)]);
    report(
        "6a",
        "SOK best-of-5 bubble counts, gamma 600 -> 10 +- 2, 1500 -> 18 +- 2",
        pass,
        format!(
            "eps = {EQUILIBRIUM_EPSILON:.4}; {}; {:.0} s",
            sweep_line(&rows),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
#[ignore = "slow: equilibrium sweeps at n = 128"]
fn criterion_6b_equilibrium_counts_sno() {
    let start = Instant::now();
    let g = Grid::square(128).unwrap();
    let base = Model::sno(sno(EQUILIBRIUM_EPSILON, 350.0, 2e-4));
    let init = |seed| Ok(init_semi_random(g, 0.09, 0.09, seed)?.into());
    let rows = gamma_sweep(
        &base,
        &[350.0, 500.0],
        &[0, 1, 2, 3, 4],
        &init,
        &equilibrium_options(),
        None,
    )
    .unwrap();
    let pass = counts_ok(&rows, &[(6, 1), (8, 1)]);
    report(
        "6b",
        "SNO best-of-5 double-bubble counts, gamma 350 -> 6 +- 1, 500 -> 8 +- 1",
        pass,
        format!(
            "eps = {EQUILIBRIUM_EPSILON:.4}; {}; {:.0} s",
            sweep_line(&rows),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 7

/// Ordinary least squares slope of `ln k` against `ln γ`.
fn oracle_slope(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[test]
fn criterion_7_two_thirds_law() {
    let start = Instant::now();
    let sok_pairs = [
        (600.0, 10.0),
        (1500.0, 18.0),
        (7000.0, 48.0),
        (9000.0, 58.0),
        (11000.0, 68.0),
        (13000.0, 80.0),
    ];
    let sno_pairs = [
        (350.0, 6.0),
        (500.0, 8.0),
        (4000.0, 36.0),
        (5000.0, 42.0),
        (6000.0, 48.0),
        (8000.0, 58.0),
    ];
    let a = fit_two_thirds(&sok_pairs).unwrap();
    let b = fit_two_thirds(&sno_pairs).unwrap();
    let oa = oracle_slope(&sok_pairs);
    let ob = oracle_slope(&sno_pairs);
    let secs = start.elapsed().as_secs_f64();
    let pass = (0.62..=0.72).contains(&a.slope)
        && (0.60..=0.74).contains(&b.slope)
        && (a.slope - oa).abs() < 1e-12
        && (b.slope - ob).abs() < 1e-12
        && secs < 1.0;
    report(
        "7",
        "two-thirds law fit on published counts",
        pass,
        format!(
            "SOK slope {:.4} (oracle {oa:.4}, r2 {:.4}), SNO slope {:.4} (oracle {ob:.4}, r2 {:.4})",
            a.slope, a.r_squared, b.slope, b.r_squared
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 8

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

/// Components of `{u ≥ t}` on the doubled torus, with each node joined to its
/// glide image and each pole row joined into one point.
fn oracle_count(u: &SphereField, t: f64) -> usize {
    let g = u.grid();
    let (np, nt) = g.shape();
    let v = u.values();
    let idx = |i: usize, j: usize| i * nt + j;
    let on = |i: usize, j: usize| v[[i, j]] >= t;
    let mut dsu = Dsu((0..np * nt).collect());
    for i in 0..np {
        for j in 0..nt {
            if !on(i, j) {
                continue;
            }
            for (a, b) in [((i + 1) % np, j), (i, (j + 1) % nt), g.glide(i, j)] {
                if on(a, b) {
                    dsu.union(idx(i, j), idx(a, b));
                }
            }
        }
    }
    for pole in [g.north_row(), g.south_row()] {
        let members: Vec<usize> = (0..np).filter(|&i| on(i, pole)).collect();
        for w in members.windows(2) {
            dsu.union(idx(w[0], pole), idx(w[1], pole));
        }
    }
    let mut roots: Vec<usize> = (0..np)
        .flat_map(|i| (0..nt).map(move |j| (i, j)))
        .filter(|&(i, j)| on(i, j))
        .map(|(i, j)| dsu.find(idx(i, j)))
        .collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

/// Field from native samples; each pole row takes its `i = 0` value, since
/// it samples a single point.
fn native_field(g: Grid, mut f: impl FnMut(usize, usize) -> f64) -> SphereField {
    let mut x = Array2::from_shape_fn(g.native_shape(), |(i, r)| f(i, r));
    let last = x.ncols() - 1;
    for r in [0, last] {
        let c = x[[0, r]];
        x.column_mut(r).fill(c);
    }
    extend_bmc(g, &x).unwrap()
}

#[test]
fn criterion_8_bubble_counter_oracle() {
    let start = Instant::now();
    let g = Grid::square(32).unwrap();
    let (np, rows) = g.native_shape();
    let mut fields: Vec<(String, SphereField)> = Vec::new();

    // a band across the φ seam, a polar cap, a cap seen through both poles,
    // and a meridian strip from pole to pole
    fields.push((
        "seam band".into(),
        native_field(g, |i, r| {
            f64::from(u8::from((i < 3 || i > np - 4) && (5..10).contains(&r)))
        }),
    ));
    fields.push((
        "north cap".into(),
        native_field(g, |_, r| f64::from(u8::from(r < 4))),
    ));
    fields.push((
        "two caps".into(),
        native_field(g, |_, r| f64::from(u8::from(r < 3 || r > rows - 4))),
    ));
    fields.push((
        "meridian".into(),
        native_field(g, |i, _| f64::from(u8::from(i == 7))),
    ));
    fields.push((
        "pole spokes".into(),
        native_field(g, |i, r| {
            f64::from(u8::from(r == 0 || (r < 6 && [0, 9, 16].contains(&i))))
        }),
    ));
    fields.push((
        "polar ring".into(),
        native_field(g, |_, r| f64::from(u8::from(r == 2 || r == rows - 3))),
    ));

    let mut rng = rng_from_seed(8);
    while fields.len() < 50 {
        let k = fields.len();
        let f = match k % 3 {
            0 => init_random_blocks(g, [2, 4, 8][k % 9 / 3], k as u64).unwrap(),
            1 => {
                let density: f64 = rng.gen_range(0.2..0.6);
                native_field(g, |_, _| f64::from(u8::from(rng.gen_bool(density))))
            }
            _ => {
                let (u, v) = random_frame(&mut rng);
                let d = rng.gen_range(2..=6);
                isotropic_harmonic(g, d, u, v, k % 2 == 0)
            }
        };
        fields.push((format!("random {k}"), f));
    }

    let mut mismatches = Vec::new();
    let mut seam = 0;
    let mut pole = 0;
    for (name, f) in &fields {
        // harmonic sums are signed; cut them at zero
        let t = if f.values().iter().all(|v| (0.0..=1.0).contains(v)) {
            0.5
        } else {
            0.0
        };
        let got = count_bubbles(f, t).count;
        let want = oracle_count(f, t);
        if got != want {
            mismatches.push(format!("{name}: {got} vs {want}"));
        }
        let native = oksphere::dfs::restrict(f).values;
        seam += usize::from((0..rows).any(|r| native[[0, r]] >= t && native[[np - 1, r]] >= t));
        pole += usize::from((0..np).any(|i| native[[i, 0]] >= t || native[[i, rows - 1]] >= t));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = mismatches.is_empty() && seam > 0 && pole > 0 && secs < 10.0;
    report(
        "8",
        "bubble counter agrees with union-find on the doubled grid",
        pass,
        format!(
            "{} fields, {seam} cross the seam, {pole} touch a pole, mismatches {mismatches:?}, {secs:.2} s",
            fields.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 9

fn bits(rows: &[oksphere::dynamics::TraceRow]) -> Vec<[u64; 4]> {
    rows.iter()
        .map(|r| {
            [
                r.time.to_bits(),
                r.energy.to_bits(),
                r.modified_energy.to_bits(),
                r.residual.to_bits(),
            ]
        })
        .collect()
}

#[test]
fn criterion_9_determinism_and_structure() {
    let g = Grid::square(32).unwrap();
    let opts = RunOptions {
        stop: StopCriterion {
            max_steps: 100,
            tol: 1e-300,
            ..Default::default()
        },
        record_every: 1,
        record_energy: true,
        check_modified_energy: false,
    };
    let sok_sys = SokSystem::new(sok(10.0 * g.h_phi(), 1500.0, 1e-3));
    let sno_sys = SnoSystem::new(sno(10.0 * g.h_phi(), 350.0, 2e-4));
    let mut identical = true;
    let mut defect = 0.0_f64;
    let mut last = Vec::new();
    for (sys, init) in [
        (
            &sok_sys as &dyn oksphere::dynamics::PhaseSystem,
            vec![init_random_blocks(g, 4, 3).unwrap()],
        ),
        (&sno_sys, init_semi_random(g, 0.09, 0.09, 3).unwrap().into()),
    ] {
        let plan = build_plan(g, sys).unwrap();
        let a = run_to_equilibrium(sys, &plan, init.clone(), &opts, &mut |_, _, _| {}).unwrap();
        let b = run_to_equilibrium(sys, &plan, init, &opts, &mut |_, _, _| {}).unwrap();
        identical &= a.steps == 100 && bits(&a.trace) == bits(&b.trace);
        identical &= a.fields.iter().zip(&b.fields).all(|(x, y)| {
            x.values()
                .iter()
                .zip(y.values())
                .all(|(p, q)| p.to_bits() == q.to_bits())
        });
        defect = a
            .fields
            .iter()
            .map(SphereField::symmetry_defect)
            .fold(defect, f64::max);
        last = a.fields;
    }

    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("state");
    write_snapshot(&stem, &last, 100, 0.02, None).unwrap();
    let (_, back) = read_snapshot(&stem).unwrap();
    let exact = back.iter().zip(&last).all(|(x, y)| {
        x.values()
            .iter()
            .zip(y.values())
            .all(|(p, q)| p.to_bits() == q.to_bits())
    });

    let pass = identical && defect <= 1e-12 && exact;
    report(
        "9",
        "determinism, symmetry and snapshot roundtrip",
        pass,
        format!(
            "repeated runs bit-identical: {identical}; BMC defect after 100 steps {defect:.1e} <= 1e-12; \
             snapshot roundtrip bit-exact: {exact}"
        ),
    );
    assert!(pass);
}
