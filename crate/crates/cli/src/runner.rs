//! Check registry and orchestration: runs every selected check over every
//! applicable chart's grid and assembles a deterministic report.
//!
//! Chart/check tasks run on a worker pool; entries are sorted by
//! (chart, check, point) afterwards so parallelism never changes the output.
//! Random sampling inside a task uses a generator seeded from the run seed
//! and the task identity, never from scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use slantlab_core::ambient::ambient_params;
use slantlab_core::calculus::{self, Dist, NormalField, TangentField};
use slantlab_core::catalog::ChartRole;
use slantlab_core::exprmap;
use slantlab_core::geometry::ImmersionChart;
use slantlab_core::report::{CheckEntry, ResidualMax, Status};
use slantlab_core::slant::{self, SlantKind, CLUSTER_TOL};
use slantlab_core::warped::{self, FrameLevelInstance};
use slantlab_core::{DMat, DVec, Result as CoreResult};

use crate::config::{ChartRun, RunConfig};
use crate::report::{Report, ReportEntry};

/// Grid cap for derivative-heavy checks; points are stride-subsampled
/// deterministically and entries keep their full-grid indices.
const HEAVY_POINT_CAP: usize = 24;
/// Random frame-level instances appended to the inequality check.
const FRAME_LEVEL_INSTANCES: usize = 50;

struct CheckDef {
    name: &'static str,
    tolerance: f64,
    heavy: bool,
    role: ChartRole,
}

const CHECKS: &[CheckDef] = &[
    CheckDef { name: "classification", tolerance: CLUSTER_TOL, heavy: false, role: ChartRole::Plain },
    CheckDef { name: "conformal_invariance", tolerance: 1e-10, heavy: false, role: ChartRole::Plain },
    CheckDef { name: "constancy_criterion", tolerance: 1e-5, heavy: true, role: ChartRole::Plain },
    CheckDef { name: "covariant_identities", tolerance: 1e-5, heavy: true, role: ChartRole::Plain },
    CheckDef { name: "foliation_d1", tolerance: 1e-5, heavy: true, role: ChartRole::Plain },
    CheckDef { name: "foliation_d2", tolerance: 1e-5, heavy: true, role: ChartRole::Plain },
    CheckDef { name: "gauss_weingarten", tolerance: 1.0, heavy: false, role: ChartRole::Plain },
    CheckDef { name: "integrability_d1", tolerance: 1e-5, heavy: true, role: ChartRole::Plain },
    CheckDef { name: "integrability_d2", tolerance: 1e-5, heavy: true, role: ChartRole::Plain },
    CheckDef { name: "nonexistence_probe", tolerance: 0.0, heavy: false, role: ChartRole::WarpedReversed },
    CheckDef { name: "omega_closedness", tolerance: 1e-4, heavy: true, role: ChartRole::Plain },
    CheckDef { name: "orthogonality_preservation", tolerance: 1e-9, heavy: false, role: ChartRole::Plain },
    CheckDef { name: "pointwise_constancy", tolerance: CLUSTER_TOL, heavy: false, role: ChartRole::Plain },
    CheckDef { name: "structure_algebra", tolerance: 1e-12, heavy: false, role: ChartRole::Plain },
    CheckDef { name: "tensor_identities", tolerance: 1e-8, heavy: false, role: ChartRole::Plain },
    CheckDef { name: "umbilic", tolerance: 1e-6, heavy: false, role: ChartRole::Plain },
    CheckDef { name: "warp_identities", tolerance: 1e-4, heavy: true, role: ChartRole::Warped },
    CheckDef { name: "warp_inequality", tolerance: 1e-6, heavy: false, role: ChartRole::Warped },
    CheckDef { name: "warped_lemmas", tolerance: 1e-4, heavy: false, role: ChartRole::Warped },
];

/// All registered check names, sorted.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.name).collect()
}

fn check_def(name: &str) -> &'static CheckDef {
    CHECKS
        .iter()
        .find(|c| c.name == name)
        .expect("check name validated at config time")
}

fn applicable(def: &CheckDef, run: &ChartRun) -> bool {
    match def.role {
        ChartRole::Plain => true,
        ChartRole::Warped => {
            run.built.warped.is_some() && run.built.role == ChartRole::Warped
        }
        ChartRole::WarpedReversed => run.built.role == ChartRole::WarpedReversed,
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn task_rng(seed: u64, chart: &str, check: &str) -> ChaCha12Rng {
    let tag = fnv1a(format!("{chart}\u{1f}{check}").as_bytes());
    ChaCha12Rng::seed_from_u64(seed ^ tag)
}

/// Execute every selected check over every applicable chart.
pub fn run_catalog(config: &RunConfig) -> Report {
    let mut tasks: Vec<(usize, &'static CheckDef)> = Vec::new();
    for (chart_idx, run) in config.charts.iter().enumerate() {
        for check in &config.checks {
            let def = check_def(check);
            if applicable(def, run) {
                tasks.push((chart_idx, def));
            }
        }
    }

    let mut entries: Vec<ReportEntry> = tasks
        .par_iter()
        .flat_map(|(chart_idx, def)| {
            let run = &config.charts[*chart_idx];
            let tolerance = config
                .tolerances
                .get(def.name)
                .copied()
                .unwrap_or(def.tolerance);
            let raw = run_check(config.seed, run, def, tolerance);
            raw.into_iter()
                .map(|e| ReportEntry::from_check(&run.built.name, def.name, e))
                .collect::<Vec<_>>()
        })
        .collect();

    // a selected probe with no candidates still reports that fact
    if config.checks.iter().any(|c| c == "nonexistence_probe")
        && !config
            .charts
            .iter()
            .any(|r| r.built.role == ChartRole::WarpedReversed)
    {
        entries.push(ReportEntry::from_check(
            "(none)",
            "nonexistence_probe",
            CheckEntry::skipped(0, "no candidates in this configuration"),
        ));
    }

    entries.sort_by(|a, b| {
        (a.chart.as_str(), a.check.as_str(), a.point).cmp(&(
            b.chart.as_str(),
            b.check.as_str(),
            b.point,
        ))
    });

    Report::new(&config.source, config.seed, entries)
}

fn run_check(
    seed: u64,
    run: &ChartRun,
    def: &CheckDef,
    tolerance: f64,
) -> Vec<CheckEntry> {
    let chart = &run.built.chart;
    let full_grid = match chart.domain().grid(&run.grid_resolution) {
        Ok(g) => g,
        Err(err) => return vec![CheckEntry::skipped(0, err.to_string())],
    };
    let (grid, index_map): (Vec<DVec>, Vec<usize>) = if def.heavy {
        subsample(&full_grid, HEAVY_POINT_CAP)
    } else {
        (full_grid.clone(), (0..full_grid.len()).collect())
    };
    let mut rng = task_rng(seed, &run.built.name, def.name);

    let outcome: CoreResult<Vec<CheckEntry>> = match def.name {
        "structure_algebra" => structure_algebra(chart, &grid, &mut rng, tolerance),
        "gauss_weingarten" => gauss_weingarten(chart, &grid, &mut rng, tolerance),
        "classification" => classification(chart, &grid, tolerance),
        "pointwise_constancy" => {
            slant::check_pointwise_constancy(chart, &grid, CLUSTER_TOL, tolerance)
        }
        "tensor_identities" => tensor_identities(chart, &grid, tolerance),
        "covariant_identities" => {
            calculus::covariant_identities_check(chart, &grid, &mut rng, CLUSTER_TOL, tolerance)
        }
        "integrability_d1" => {
            calculus::integrability_check_d1(chart, &grid, CLUSTER_TOL, tolerance)
        }
        "integrability_d2" => {
            calculus::integrability_check_d2(chart, &grid, CLUSTER_TOL, tolerance)
        }
        "foliation_d1" => {
            calculus::foliation_check(chart, &grid, Dist::D1, CLUSTER_TOL, tolerance)
        }
        "foliation_d2" => {
            calculus::foliation_check(chart, &grid, Dist::D2, CLUSTER_TOL, tolerance)
        }
        "umbilic" => calculus::umbilic_check(chart, &grid, CLUSTER_TOL, tolerance),
        "orthogonality_preservation" => slant::orthogonality_preservation_check(
            chart, &grid, &mut rng, 5, CLUSTER_TOL, tolerance,
        ),
        "conformal_invariance" => {
            let fields = conformal_scale_fields(chart);
            slant::conformal_invariance_check(chart, &grid, &fields, CLUSTER_TOL, tolerance)
        }
        "constancy_criterion" => {
            slant::constancy_criterion_check(chart, &grid, CLUSTER_TOL, tolerance)
        }
        "omega_closedness" => {
            calculus::omega_closedness_check(chart, &grid, &mut rng, 3, CLUSTER_TOL, tolerance)
        }
        "warp_identities" => {
            warped::warp_identities_check(run.built.warped.as_ref().unwrap(), &grid, tolerance)
        }
        "warped_lemmas" => warped::warped_lemma_residuals(
            run.built.warped.as_ref().unwrap(),
            &grid,
            CLUSTER_TOL,
            tolerance,
        ),
        "warp_inequality" => warp_inequality(run, &grid, &mut rng, tolerance),
        "nonexistence_probe" => warped::nonexistence_probe(
            run.built.warped.as_ref().unwrap(),
            &grid,
            CLUSTER_TOL,
        ),
        other => unreachable!("unknown check {other}"),
    };

    let mut entries = match outcome {
        Ok(entries) => entries,
        Err(err) => vec![CheckEntry::from_residual(0, f64::MAX, tolerance)
            .force_fail(err.to_string())
            .finalize()],
    };
    for e in &mut entries {
        if let Some(&orig) = index_map.get(e.point) {
            e.point = orig;
        }
    }
    entries
}

fn subsample(grid: &[DVec], cap: usize) -> (Vec<DVec>, Vec<usize>) {
    if grid.len() <= cap {
        return (grid.to_vec(), (0..grid.len()).collect());
    }
    let stride = grid.len().div_ceil(cap);
    let mut points = Vec::new();
    let mut indices = Vec::new();
    let mut i = 0;
    while i < grid.len() {
        points.push(grid[i].clone());
        indices.push(i);
        i += stride;
    }
    (points, indices)
}

fn conformal_scale_fields(chart: &ImmersionChart) -> Vec<exprmap::Expression> {
    let y = ambient_params(chart.ambient_dim());
    let y_refs: Vec<&str> = y.iter().map(|s| s.as_str()).collect();
    vec![
        exprmap::Expression::constant(0.0, &y_refs),
        exprmap::Expression::constant(1.0, &y_refs),
        exprmap::parse("0.1*y1 + 0.2*y2", &y_refs).expect("static expression"),
    ]
}

// ---------------------------------------------------------------------------
// runner-implemented checks
// ---------------------------------------------------------------------------

/// Quaternionic Hermitian relations of the structure triple at chart image
/// points, plus metric compatibility and skewness on random vectors.
fn structure_algebra(
    chart: &ImmersionChart,
    grid: &[DVec],
    rng: &mut ChaCha12Rng,
    tolerance: f64,
) -> CoreResult<Vec<CheckEntry>> {
    use rand::Rng;
    let basis = chart.basis();
    let dim = chart.ambient_dim();
    let mut entries = Vec::with_capacity(grid.len());
    for (idx, x) in grid.iter().enumerate() {
        let p = chart.point(x)?;
        let [i_mat, j_mat, k_mat] = basis.triple_at(&p)?;
        let mut worst = ResidualMax::default();
        worst.update(
            "quaternionic relations",
            slantlab_core::ambient::quaternionic_residual(&i_mat, &j_mat, &k_mat),
        );
        for _ in 0..4 {
            let v = DVec::from_iterator(dim, (0..dim).map(|_| rng.random_range(-1.0..1.0)));
            for (label, mat) in [("I", &i_mat), ("J", &j_mat), ("K", &k_mat)] {
                let rv = mat * &v;
                worst.update(
                    &format!("metric compatibility ({label})"),
                    rv.norm_squared() - v.norm_squared(),
                );
                worst.update(&format!("skewness ({label})"), rv.dot(&v));
            }
        }
        let mut entry = worst.entry(idx, tolerance);
        if basis.rotation_degenerate_at(&p)? {
            entry = entry.with_label("degenerate-rotation");
        }
        entries.push(entry.finalize());
    }
    Ok(entries)
}

/// Gauss formula, shape-operator duality, Weingarten reconstruction, frame
/// orthogonality, and frame independence of `||h||^2`, each against its own
/// tolerance; the entry residual is the worst tolerance-normalized ratio.
fn gauss_weingarten(
    chart: &ImmersionChart,
    grid: &[DVec],
    rng: &mut ChaCha12Rng,
    tolerance: f64,
) -> CoreResult<Vec<CheckEntry>> {
    
    const GAUSS_TOL: f64 = 1e-8;
    const DUALITY_TOL: f64 = 1e-10;
    const WEINGARTEN_TOL: f64 = 1e-5;
    const FRAME_TOL: f64 = 1e-10;
    const REMIX_TOL: f64 = 1e-9;

    let n = chart.param_dim();
    let dim = chart.ambient_dim();
    let z_field = NormalField::random_normal(rng, chart);
    let mut entries = Vec::with_capacity(grid.len());
    for (idx, x) in grid.iter().enumerate() {
        let pg = match chart.second_fundamental_form(x) {
            Ok(g) => g,
            Err(err) => {
                entries.push(CheckEntry::skipped(idx, err.to_string()));
                continue;
            }
        };
        let jets = chart.jets(x)?;
        let mut worst = ResidualMax::default();

        // Gauss formula residual per coordinate pair
        for i in 0..n {
            let ei = pg.gs_upper.column(i).into_owned();
            for j in 0..n {
                let ej = pg.gs_upper.column(j).into_owned();
                let mut w = DVec::zeros(dim);
                for c in 0..dim {
                    w[c] = jets.hessians[c][(i, j)];
                }
                let tangential = &pg.tangent_projector * &w;
                let h_ij = pg.h_apply(&ei, &ej)?;
                worst.update(
                    &format!("Gauss formula (d{i}, d{j})"),
                    (w - tangential - h_ij).norm() / GAUSS_TOL,
                );
            }
        }

        // duality <A_Z X, Y> = <h(X, Y), Z> on random data
        if pg.normal_dim() > 0 {
            for _ in 0..3 {
                let xc = random_vec(rng, n);
                let yc = random_vec(rng, n);
                let zc = random_vec(rng, pg.normal_dim());
                let z = pg.from_normal_coords(&zc);
                let a_z = pg.shape_operator(&z)?;
                let lhs = (a_z * &xc).dot(&yc);
                let rhs = pg.h_apply(&xc, &yc)?.dot(&z);
                worst.update("shape operator duality", (lhs - rhs) / DUALITY_TOL);
            }

            // Weingarten: tangential part of the field derivative is -A_Z X
            let z0 = z_field.value_at(x)?;
            for axis in 0..n {
                let xf = TangentField::coordinate(axis, n);
                let step = slantlab_core::calculus::FD_STEP;
                let mut dir = DVec::zeros(n);
                dir[axis] = 1.0;
                let plus = z_field.value_at(&(x + &dir * step))?;
                let minus = z_field.value_at(&(x - &dir * step))?;
                let derivative = (plus - minus) / (2.0 * step);
                let tangential = &pg.tangent_projector * derivative;
                let x_amb = calculus::ambient_of(chart, &xf, x)?;
                let a_z = pg.shape_operator(&z0)?;
                let a_z_x = pg.from_frame_coords(&(a_z * pg.to_frame_coords(&x_amb)));
                worst.update(
                    &format!("Weingarten reconstruction (d{axis})"),
                    (tangential + a_z_x).norm() / WEINGARTEN_TOL,
                );
            }
        }

        // frame orthogonality and projector completeness
        let mut combined = DMat::zeros(dim, dim);
        for c in 0..n {
            combined.set_column(c, &pg.tangent_frame.column(c));
        }
        for c in 0..pg.normal_dim() {
            combined.set_column(n + c, &pg.normal_frame.column(c));
        }
        worst.update(
            "combined frame orthogonality",
            (combined.transpose() * &combined - DMat::identity(dim, dim))
                .abs()
                .max()
                / FRAME_TOL,
        );
        worst.update(
            "projector completeness",
            (&pg.tangent_projector + &pg.normal_projector - DMat::identity(dim, dim))
                .abs()
                .max()
                / FRAME_TOL,
        );

        // frame independence of ||h||^2
        let base = pg.sff_norm_squared()?;
        let q = random_orthogonal(rng, n);
        let mixed = pg.remix_frame(&q)?.sff_norm_squared()?;
        worst.update("||h||^2 frame independence", (base - mixed) / REMIX_TOL);

        entries.push(
            worst
                .entry(idx, tolerance)
                .with_label("residual is max over families of residual/tolerance")
                .finalize(),
        );
    }
    Ok(entries)
}

fn random_vec(rng: &mut ChaCha12Rng, n: usize) -> DVec {
    use rand::Rng;
    DVec::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)))
}

fn random_orthogonal(rng: &mut ChaCha12Rng, n: usize) -> DMat {
    let raw = DMat::from_fn(n, n, |_, _| {
        use rand::Rng;
        rng.random_range(-1.0..1.0)
    });
    let qr = (raw + DMat::identity(n, n) * 2.0).qr();
    qr.q()
}

/// Per-point slant classification with labels and angles.
fn classification(
    chart: &ImmersionChart,
    grid: &[DVec],
    tolerance: f64,
) -> CoreResult<Vec<CheckEntry>> {
    let mut entries = Vec::with_capacity(grid.len());
    for (idx, x) in grid.iter().enumerate() {
        match slant::classify_point(chart, x, tolerance) {
            Err(err) => entries.push(
                CheckEntry::from_residual(idx, f64::MAX, tolerance)
                    .force_fail(err.to_string())
                    .finalize(),
            ),
            Ok(class) => {
                let spread = class
                    .analyses
                    .iter()
                    .map(|a| a.d2_spread)
                    .fold(0.0f64, f64::max);
                let non_conforming = class
                    .analyses
                    .iter()
                    .any(|a| a.kind == SlantKind::NonConforming);
                let mut entry = CheckEntry::from_residual(idx, spread, tolerance);
                if non_conforming {
                    entry.status = Status::NonConforming;
                }
                entry = entry.with_theta(class.theta_triple());
                for label in class.labels() {
                    entry = entry.with_label(label);
                }
                entries.push(entry.finalize());
            }
        }
    }
    Ok(entries)
}

/// Pointwise tensor identities for all three structures.
fn tensor_identities(
    chart: &ImmersionChart,
    grid: &[DVec],
    tolerance: f64,
) -> CoreResult<Vec<CheckEntry>> {
    let mut entries = Vec::with_capacity(grid.len());
    for (idx, x) in grid.iter().enumerate() {
        let class = match slant::classify_point(chart, x, CLUSTER_TOL) {
            Ok(c) => c,
            Err(err) => {
                entries.push(CheckEntry::skipped(idx, err.to_string()));
                continue;
            }
        };
        let mut worst = ResidualMax::default();
        for sa in &class.analyses {
            for (name, value) in slant::identity_residuals(sa) {
                worst.update(&format!("{} ({})", name, sa.structure().label()), value);
            }
        }
        entries.push(
            worst
                .entry(idx, tolerance)
                .with_theta(class.theta_triple())
                .finalize(),
        );
    }
    Ok(entries)
}

/// Chart-level inequality check plus the frame-level expansion oracle.
fn warp_inequality(
    run: &ChartRun,
    grid: &[DVec],
    rng: &mut ChaCha12Rng,
    tolerance: f64,
) -> CoreResult<Vec<CheckEntry>> {
    let wc = run.built.warped.as_ref().unwrap();
    let mut entries = warped::inequality_check(wc, grid, CLUSTER_TOL, tolerance)?;
    let base = grid.len();

    // worked value: n2 = 1, theta = pi/4, |grad ln f|^2 = 1, no fiber terms
    let worked = FrameLevelInstance::new(
        std::f64::consts::FRAC_PI_4,
        1,
        1,
        DVec::from_row_slice(&[1.0, 0.0, 0.0, 0.0]),
        vec![0.0; 8],
    )?;
    let out = warped::frame_level_expansion(&worked)?;
    entries.push(
        CheckEntry::from_residual(base, (out.lhs - 12.0).abs().max(out.gap.abs()), 1e-12)
            .with_label("frame-level oracle: worked value ||h||^2 = 12")
            .finalize(),
    );

    for i in 0..FRAME_LEVEL_INSTANCES {
        let inst = FrameLevelInstance::random(rng, 2, 3);
        let out = warped::frame_level_expansion(&inst)?;
        let residual = (out.gap - out.fiber_sum)
            .abs()
            .max((-out.gap).max(0.0))
            .max(out.cross_structure_spread);
        entries.push(
            CheckEntry::from_residual(base + 1 + i, residual, 1e-10)
                .with_label(format!(
                    "frame-level oracle: n1={} n2={} theta={:.4} gap={:.6e}",
                    inst.n1, inst.n2, inst.theta, out.gap
                ))
                .finalize(),
        );
    }
    Ok(entries)
}
