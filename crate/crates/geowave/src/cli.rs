//! Batch orchestration: verify property suites, simulate DtN responses,
//! run recoveries, and sweep the Hölder consistency fit. Every command
//! writes plot-ready CSV artifacts plus a manifest of all consumed knobs.

use crate::config::{RunConfig, RunMode};
use crate::csvio::{fmt17, write_csv, write_manifest};
use crate::error::{Error, Result};
use crate::geodesics::{PhasePoint, Tracer, TracerConfig};
use crate::manifold::{BoundaryId, CoefficientField, FieldShape, MetricField};
use crate::probes::{attenuation_residual, transport_residual, FiberWeight, ProbeSpec};
use crate::recover::{
    poisson_checks, recover_absorption_bypass, recover_pair_full, recover_potential_bypass,
    MollifierKernel,
};
use crate::wavesim::{
    dtn_gap_norm, BoundarySignal, DtnOperator, SpaceTimeGrid, WaveSolver,
};
use crate::xray::{l2_norm_disk, FanGrid, PixelGrid, RayImage};
use num_complex::Complex64;
use std::path::{Path, PathBuf};

/// One line of a verification report.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check(name: &str, value: f64, tolerance: f64) -> CheckRow {
    CheckRow {
        name: name.to_string(),
        value,
        tolerance,
        pass: value <= tolerance,
    }
}

/// Cache directory: the environment override wins, then the out dir.
pub fn cache_dir(cfg: &RunConfig) -> PathBuf {
    std::env::var_os("GEOWAVE_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.out_dir.join("cache"))
}

fn write_report(path: &Path, rows: &[CheckRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    use std::io::Write;
    writeln!(out, "check,value,tolerance,pass")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.name,
            fmt17(r.value),
            fmt17(r.tolerance),
            u8::from(r.pass)
        )?;
    }
    Ok(())
}

fn write_pixel_grid(path: &Path, grid: &PixelGrid) -> Result<()> {
    let mut rows = Vec::with_capacity(grid.n * grid.n);
    for i in 0..grid.n {
        for j in 0..grid.n {
            let x = grid.center(i, j);
            rows.push(vec![x[0], x[1], grid.values[i * grid.n + j]]);
        }
    }
    write_csv(path, "x,y,value", &rows)
}

fn write_ray_image(path: &Path, img: &RayImage, fan: &FanGrid) -> Result<()> {
    let mut rows = Vec::with_capacity(fan.len());
    for (k, ray) in fan.rays.iter().enumerate() {
        rows.push(vec![ray.s, ray.beta, img.values[k], fan.weights[k]]);
    }
    write_csv(path, "s,beta,value,weight", &rows)
}

/// Smooth pulse profile for gap-norm probes.
fn pulse(s: f64, len: f64) -> f64 {
    if s <= 0.0 || s >= len {
        0.0
    } else {
        (4.0 - len * len / (s * (len - s))).exp()
    }
}

fn gap_probes(
    grid: &SpaceTimeGrid,
    metric: &MetricField,
    count: usize,
) -> Result<Vec<BoundarySignal>> {
    (0..count)
        .map(|i| {
            let dir = std::f64::consts::TAU * i as f64 / count as f64;
            let e = [dir.cos(), dir.sin()];
            let len = 0.8 + 0.1 * (i % 3) as f64;
            let r = metric.radius_m;
            BoundarySignal::from_fn(grid, metric, move |x, t| {
                Complex64::new(pulse(t - x[0] * e[0] - x[1] * e[1] - r, len), 0.0)
            })
        })
        .collect()
}

// ----------------------------------------------------------------------------
// verify
// ----------------------------------------------------------------------------

/// Run the eikonal, transport, kinetic, kernel, energy and plane-wave
/// property suites; returns the rows and writes `verify_report.csv`.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Vec<CheckRow>> {
    let metric = cfg.build_metric()?;
    cfg.validate_horizon(&metric)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let tracer = Tracer::new(&metric, TracerConfig::default());
    let mut rows = Vec::new();

    // Eikonal: |grad rho|_g = 1 at interior samples. The Euclidean family
    // takes the analytic distance path; curved families difference the
    // distance field itself.
    let y = metric.boundary_point(std::f64::consts::PI, BoundaryId::Outer);
    let samples = interior_samples(&metric, 25);
    let euclidean = matches!(metric.family, crate::manifold::MetricFamily::Euclidean);
    let mut eik: f64 = 0.0;
    for &x in &samples {
        let resid = if euclidean {
            let d = tracer.distance(y, x)?;
            (metric.eval(x)?.g.norm(d.grad) - 1.0).abs()
        } else {
            // Central differences of the distance function.
            let step = 1e-4;
            let mut grad = [0.0; 2];
            for axis in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[axis] += step;
                xm[axis] -= step;
                grad[axis] =
                    (tracer.distance(y, xp)?.rho - tracer.distance(y, xm)?.rho) / (2.0 * step);
            }
            (metric.eval(x)?.inv.dot(grad, grad).sqrt() - 1.0).abs()
        };
        eik = eik.max(resid);
    }
    rows.push(check(
        "eikonal_residual",
        eik,
        if euclidean { 1e-10 } else { 1e-3 },
    ));

    // Transport residuals at two finite-difference steps: values and the
    // observed convergence order.
    let spec = ProbeSpec {
        y_angle: std::f64::consts::PI,
        h: *cfg.probe_h_sweep.first().unwrap(),
        eps: cfg.probe_eps_lengths,
        weight: FiberWeight::Uniform,
    };
    let a1 = cfg.a1.build()?;
    // Attenuation checks need a nonzero coefficient; fall back to a bump.
    let a_check = if matches!(a1.shape, FieldShape::Zero) {
        CoefficientField::new(
            FieldShape::Gaussian {
                amp: 0.3,
                center: [0.1 * metric.radius_m, 0.0],
                sigma: 0.4 * metric.radius_m,
            },
            0.3,
        )
    } else {
        a1
    };
    let t_samples: Vec<[f64; 2]> = samples.iter().copied().step_by(7).take(6).collect();
    let fd = [4e-2, 2e-2, 1e-2];
    let mut tr = vec![0.0f64; fd.len()];
    let mut at = vec![0.0f64; fd.len()];
    for &x in &t_samples {
        // Evaluation times inside the moving cutoff support at this point.
        let rho = tracer.distance(y, x)?.rho;
        let times = [
            rho + 0.35 * cfg.probe_eps_lengths,
            rho + 0.6 * cfg.probe_eps_lengths,
        ];
        for (i, &d) in fd.iter().enumerate() {
            tr[i] = tr[i].max(transport_residual(&metric, &spec, &[x], &times, d)?);
            at[i] = at[i].max(attenuation_residual(
                &metric, &spec, &a_check, &[x], &times, d,
            )?);
        }
    }
    let order = |v: &[f64]| -> f64 {
        let o1 = (v[0] / v[1]).log2();
        let o2 = (v[1] / v[2]).log2();
        o1.min(o2)
    };
    rows.push(CheckRow {
        name: "transport_order".into(),
        value: order(&tr),
        tolerance: 1.8,
        pass: order(&tr) >= 1.8,
    });
    rows.push(CheckRow {
        name: "attenuation_order".into(),
        value: order(&at),
        tolerance: 1.8,
        pass: order(&at) >= 1.8,
    });

    // Kinetic equation for f = 1 plus degree -1 homogeneity.
    let one = CoefficientField::new(FieldShape::Constant(1.0), 1.0);
    let phase_samples: Vec<PhasePoint> = samples
        .iter()
        .take(16)
        .enumerate()
        .map(|(i, &x)| {
            let ang = 0.37 + 0.61 * i as f64;
            PhasePoint {
                x,
                xi: [ang.cos(), ang.sin()],
            }
        })
        .collect();
    let kin = crate::xray::kinetic_check(&metric, &one, &phase_samples, 1e-3)?;
    rows.push(check("kinetic_residual", kin.max_residual, 1e-3));
    let mut hom: f64 = 0.0;
    for p in phase_samples.iter().take(6) {
        let u1 = crate::xray::ray_integral_u(&metric, &tracer, &one, p)?;
        for lam in [2.0, 0.5] {
            let ul = crate::xray::ray_integral_u(
                &metric,
                &tracer,
                &one,
                &PhasePoint {
                    x: p.x,
                    xi: [lam * p.xi[0], lam * p.xi[1]],
                },
            )?;
            hom = hom.max((lam * ul - u1).abs());
        }
    }
    rows.push(check("kinetic_homogeneity", hom, 1e-6));

    // Poisson kernel checks at the configured kappas.
    let kernel = poisson_checks(&cfg.kernel_check_kappas)?;
    let worst_norm = kernel
        .rows
        .iter()
        .map(|r| r.normalization_error)
        .fold(0.0, f64::max);
    let worst_bound = kernel
        .rows
        .iter()
        .map(|r| r.max_bound_ratio)
        .fold(0.0, f64::max);
    rows.push(check("kernel_normalization", worst_norm, 1e-6));
    rows.push(check("kernel_pointwise_bound", worst_bound, 1.0 + 1e-12));

    // Wave solver: plane-wave oracle, Neumann trace, energy conservation.
    let n = cfg.grid_cells_per_axis.min(128);
    let grid = SpaceTimeGrid::new(&metric, n, 2.4 * metric.radius_m + 0.4, cfg.time_cfl_ratio, 192)?;
    if euclidean {
        let solver = WaveSolver::new(
            &metric,
            &CoefficientField::zero(),
            &CoefficientField::zero(),
            &grid,
        )?;
        let len = 1.5;
        let r = metric.radius_m;
        let exact = move |x: [f64; 2], t: f64| Complex64::new(pulse(t - x[0] - r, len), 0.0);
        let f = BoundarySignal::from_fn(&grid, &metric, exact)?;
        let mut num2 = 0.0;
        let mut den2 = 0.0;
        let neumann = solver.solve(&f, None, |_, t, view| {
            for &node in solver.interior_nodes() {
                let k = node as usize;
                let ue = exact(view.node_point(k), t);
                num2 += (view.data[k] - ue).norm_sqr();
                den2 += ue.norm_sqr();
            }
        })?;
        rows.push(check("plane_wave_interior", (num2 / den2).sqrt(), 0.02));
        let mut tn = 0.0;
        let mut td = 0.0;
        for t_idx in 0..neumann.n_t {
            let t = t_idx as f64 * grid.dt;
            for k in 0..grid.n_boundary {
                let phi = grid.boundary_angle(k);
                let x = [r * phi.cos(), r * phi.sin()];
                let s = t - x[0] - r;
                let wp = if s <= 0.0 || s >= len {
                    0.0
                } else {
                    pulse(s, len) * len * len * (len - 2.0 * s)
                        / (s * s * (len - s) * (len - s))
                };
                let expected = -wp * x[0] / r;
                let got = neumann.at(t_idx, k).re;
                tn += (got - expected) * (got - expected) * neumann.arc_weights[k];
                td += expected * expected * neumann.arc_weights[k];
            }
        }
        rows.push(check("plane_wave_neumann", (tn / td).sqrt(), 0.03));
    }
    // Energy conservation of the undamped source-free variant.
    {
        let solver = WaveSolver::new(
            &metric,
            &CoefficientField::zero(),
            &CoefficientField::zero(),
            &grid,
        )?;
        let r = metric.radius_m;
        let u0 = move |x: [f64; 2]| {
            let r2 = (x[0] * x[0] + x[1] * x[1]) / (0.36 * r * r);
            if r2 >= 1.0 {
                Complex64::default()
            } else {
                Complex64::new((1.0 - 1.0 / (1.0 - r2)).exp(), 0.0)
            }
        };
        let mut prev: Option<Vec<Complex64>> = None;
        let mut energies = Vec::new();
        solver.solve_from_initial(u0, |_| Complex64::default(), |_, _, view| {
            if let Some(p) = &prev {
                energies.push(solver.energy_staggered(p, view.data));
            }
            prev = Some(view.data.to_vec());
        })?;
        let e0 = energies[1];
        let drift = energies
            .iter()
            .skip(1)
            .map(|e| (e - e0).abs() / e0)
            .fold(0.0, f64::max);
        rows.push(check("energy_drift", drift, 0.005));
    }

    write_report(&cfg.out_dir.join("verify_report.csv"), &rows)?;
    write_manifest(&cfg.out_dir.join("manifest.csv"), &cfg.manifest_entries())?;
    Ok(rows)
}

fn interior_samples(metric: &MetricField, n: usize) -> Vec<[f64; 2]> {
    let r = metric.radius_m;
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = [
                -0.8 * r + 1.6 * r * i as f64 / (n - 1) as f64,
                -0.8 * r + 1.6 * r * j as f64 / (n - 1) as f64,
            ];
            if x[0].hypot(x[1]) < 0.8 * r {
                out.push(x);
            }
        }
    }
    out
}

// ----------------------------------------------------------------------------
// simulate-dtn
// ----------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub responses_cached: usize,
    pub cache_hits: usize,
    pub gap_norm: f64,
}

/// Precompute the DtN responses of the recovery probe sweep for both
/// coefficient pairs, persisting them under the content-addressed cache.
pub fn cmd_simulate_dtn(cfg: &RunConfig) -> Result<SimulateReport> {
    let metric = cfg.build_metric()?;
    cfg.validate_horizon(&metric)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let cache = cache_dir(cfg);
    std::fs::create_dir_all(&cache)?;
    let grid = SpaceTimeGrid::new(
        &metric,
        cfg.grid_cells_per_axis,
        cfg.time_horizon_lengths,
        cfg.time_cfl_ratio,
        cfg.grid_boundary_samples,
    )?;
    let (a1, q1, a2, q2) = (
        cfg.a1.build()?,
        cfg.q1.build()?,
        cfg.a2.build()?,
        cfg.q2.build()?,
    );
    let op1 = DtnOperator::new(&metric, &a1, &q1, &grid, Some(cache.clone()))?;
    let op2 = DtnOperator::new(&metric, &a2, &q2, &grid, Some(cache.clone()))?;
    let h = crate::recover::choose_h(&cfg.probe_h_sweep)?;
    let mut cached = 0;
    let mut hits = 0;
    for i in 0..cfg.fan_boundary_points {
        let y_angle = std::f64::consts::TAU * i as f64 / cfg.fan_boundary_points as f64;
        let spec = ProbeSpec {
            y_angle,
            h,
            eps: cfg.probe_eps_lengths,
            weight: FiberWeight::Uniform,
        };
        let f_h = crate::probes::probe_trace(
            &metric,
            &grid,
            &spec,
            &FiberWeight::Uniform,
            &a2,
            1.0,
        )?;
        for op in [&op1, &op2] {
            let key = op.response_key(&f_h);
            if cache.join(format!("{key}.csv")).exists() {
                hits += 1;
            } else {
                cached += 1;
            }
            op.apply(&f_h)?;
        }
    }
    let probes = gap_probes(&grid, &metric, cfg.holder_probe_count.max(1))?;
    let gap = dtn_gap_norm(&op1, &op2, &probes)?;
    write_csv(
        &cfg.out_dir.join("dtn_report.csv"),
        "gap_norm,max_single_probe,responses_new,cache_hits",
        &[vec![
            gap.value,
            gap.max_single,
            cached as f64,
            hits as f64,
        ]],
    )?;
    write_manifest(&cfg.out_dir.join("manifest.csv"), &cfg.manifest_entries())?;
    Ok(SimulateReport {
        responses_cached: cached,
        cache_hits: hits,
        gap_norm: gap.value,
    })
}

// ----------------------------------------------------------------------------
// recover
// ----------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RecoverReport {
    pub a_rel_error: f64,
    pub q_rel_error: f64,
    pub a_norm: f64,
    pub q_norm: f64,
    pub h_used: f64,
    pub kappa_used: f64,
    pub failed_nodes: usize,
    pub stage: String,
}

/// Run the reconstruction pipeline and write the recovered fields, fan
/// images, diagnostics and the run manifest.
pub fn cmd_recover(cfg: &RunConfig) -> Result<RecoverReport> {
    if cfg.mode == RunMode::VerifyOnly {
        return Err(Error::ModeGated {
            mode: "verify-only",
            operation: "recover",
        });
    }
    let metric = cfg.build_metric()?;
    cfg.validate_horizon(&metric)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let (a1, q1, a2, q2) = (
        cfg.a1.build()?,
        cfg.q1.build()?,
        cfg.a2.build()?,
        cfg.q2.build()?,
    );
    let a_true = CoefficientField::new(
        FieldShape::difference(&a1.shape, &a2.shape),
        a1.bound + a2.bound,
    );
    let q_true = CoefficientField::new(
        FieldShape::difference(&q1.shape, &q2.shape),
        q1.bound + q2.bound,
    );
    // The admissible difference fields vanish on the extension annulus.
    for (name, field) in [("a1-a2", &a_true), ("q1-q2", &q_true)] {
        if !field.vanishes_outside(metric.radius_m, metric.radius_m1) {
            return Err(Error::Config {
                line: 0,
                message: format!("difference field {name} must vanish on M1 minus M"),
            });
        }
    }
    let fan = FanGrid::build(
        &metric,
        cfg.fan_boundary_points,
        cfg.fan_entry_angles,
        BoundaryId::Outer,
    )?;
    let rcfg = cfg.recovery_config();

    let (absorption, potential, stage) = match cfg.mode {
        RunMode::Bypass => {
            let a_out = recover_absorption_bypass(&metric, &a_true, &fan, &rcfg)?;
            let q_out = recover_potential_bypass(&metric, &q_true, &fan, &rcfg)?;
            (a_out, q_out, "xray+mollifier only".to_string())
        }
        RunMode::Full => {
            let grid = SpaceTimeGrid::new(
                &metric,
                cfg.grid_cells_per_axis,
                cfg.time_horizon_lengths,
                cfg.time_cfl_ratio,
                cfg.grid_boundary_samples,
            )?;
            let cache = cache_dir(cfg);
            let op1 = DtnOperator::new(&metric, &a1, &q1, &grid, Some(cache.clone()))?;
            let op2 = DtnOperator::new(&metric, &a2, &q2, &grid, Some(cache))?;
            let full = recover_pair_full(&metric, &op1, &op2, &grid, &fan, &rcfg)?;
            (
                full.absorption,
                full.potential,
                "full pipeline".to_string(),
            )
        }
        RunMode::VerifyOnly => unreachable!(),
    };

    let quad = 160;
    let a_norm = l2_norm_disk(&metric, |x| a_true.eval(x), quad);
    let q_norm = l2_norm_disk(&metric, |x| q_true.eval(x), quad);
    let a_err = l2_norm_disk(&metric, |x| absorption.field.eval(x) - a_true.eval(x), quad);
    let q_err = l2_norm_disk(&metric, |x| potential.field.eval(x) - q_true.eval(x), quad);

    write_pixel_grid(&cfg.out_dir.join("a_hat.csv"), &absorption.field)?;
    write_pixel_grid(&cfg.out_dir.join("q_hat.csv"), &potential.field)?;
    let truth_a = PixelGrid::sample(|x| a_true.eval(x), cfg.invert_pixels_per_axis, metric.radius_m);
    let truth_q = PixelGrid::sample(|x| q_true.eval(x), cfg.invert_pixels_per_axis, metric.radius_m);
    write_pixel_grid(&cfg.out_dir.join("a_true.csv"), &truth_a)?;
    write_pixel_grid(&cfg.out_dir.join("q_true.csv"), &truth_q)?;
    write_ray_image(&cfg.out_dir.join("iota_a.csv"), &absorption.image, &fan)?;
    write_ray_image(&cfg.out_dir.join("iota_q.csv"), &potential.image, &fan)?;

    let mut manifest = cfg.manifest_entries();
    manifest.push(("derived.h_used".into(), fmt17(absorption.diagnostics.h_used)));
    manifest.push((
        "derived.kappa_used".into(),
        fmt17(absorption.diagnostics.kappa_used),
    ));
    manifest.push((
        "derived.failed_nodes".into(),
        absorption.diagnostics.failed_nodes.to_string(),
    ));
    manifest.push((
        "derived.mean_error_bar_a".into(),
        fmt17(absorption.diagnostics.mean_error_bar),
    ));
    manifest.push((
        "derived.mean_error_bar_q".into(),
        fmt17(potential.diagnostics.mean_error_bar),
    ));
    manifest.push((
        "derived.max_imag_residue_a".into(),
        fmt17(absorption.diagnostics.max_imag_residue),
    ));
    manifest.push(("derived.stage".into(), stage.clone()));
    manifest.push(("result.a_rel_error".into(), fmt17(safe_div(a_err, a_norm))));
    manifest.push(("result.q_rel_error".into(), fmt17(safe_div(q_err, q_norm))));
    manifest.push(("result.a_abs_error".into(), fmt17(a_err)));
    manifest.push(("result.q_abs_error".into(), fmt17(q_err)));
    write_manifest(&cfg.out_dir.join("manifest.csv"), &manifest)?;

    Ok(RecoverReport {
        a_rel_error: safe_div(a_err, a_norm),
        q_rel_error: safe_div(q_err, q_norm),
        a_norm: l2_norm_disk(&metric, |x| absorption.field.eval(x), quad),
        q_norm: l2_norm_disk(&metric, |x| potential.field.eval(x), quad),
        h_used: absorption.diagnostics.h_used,
        kappa_used: absorption.diagnostics.kappa_used,
        failed_nodes: absorption.diagnostics.failed_nodes,
        stage,
    })
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

// ----------------------------------------------------------------------------
// holder
// ----------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct HolderReport {
    pub slope: f64,
    pub rows: Vec<(f64, f64, f64)>,
}

/// Amplitude sweep: gap norms against coefficient norms with the fitted
/// log-log slope standing in for the Hölder exponent.
pub fn cmd_holder(cfg: &RunConfig) -> Result<HolderReport> {
    if cfg.holder_amplitudes.len() < 4 {
        return Err(Error::DegenerateSweep(format!(
            "need at least 4 amplitudes, have {}",
            cfg.holder_amplitudes.len()
        )));
    }
    let metric = cfg.build_metric()?;
    cfg.validate_horizon(&metric)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let grid = SpaceTimeGrid::new(
        &metric,
        cfg.grid_cells_per_axis,
        cfg.time_horizon_lengths,
        cfg.time_cfl_ratio,
        cfg.grid_boundary_samples,
    )?;
    let probes = gap_probes(&grid, &metric, cfg.holder_probe_count.max(1))?;
    let q_base = cfg.q2.build()?;
    let a_base = cfg.a2.build()?;
    let mut gaps = Vec::new();
    let mut norms = Vec::new();
    let mut rows = Vec::new();
    for &amp in &cfg.holder_amplitudes {
        // Scale the configured perturbation shapes to the sweep amplitude.
        let mut a_spec = cfg.a1.clone();
        let mut q_spec = cfg.q1.clone();
        if a_spec.shape != "zero" {
            a_spec.amp = amp;
        }
        if q_spec.shape != "zero" {
            q_spec.amp = amp;
        }
        let a1 = a_spec.build()?;
        let q1 = q_spec.build()?;
        let op1 = DtnOperator::new(&metric, &a1, &q1, &grid, Some(cache_dir(cfg)))?;
        let op2 = DtnOperator::new(&metric, &a_base, &q_base, &grid, Some(cache_dir(cfg)))?;
        let gap = dtn_gap_norm(&op1, &op2, &probes)?.value;
        let a_diff = FieldShape::difference(&a1.shape, &a_base.shape);
        let q_diff = FieldShape::difference(&q1.shape, &q_base.shape);
        let norm = l2_norm_disk(&metric, |x| a_diff.eval(x), 140)
            + l2_norm_disk(&metric, |x| q_diff.eval(x), 140);
        rows.push((amp, gap, norm));
        gaps.push(gap);
        norms.push(norm);
    }
    let fit = crate::recover::holder_fit(&gaps, &norms)?;
    let csv_rows: Vec<Vec<f64>> = rows.iter().map(|&(a, g, n)| vec![a, g, n]).collect();
    write_csv(
        &cfg.out_dir.join("holder.csv"),
        "amplitude,gap_norm,coeff_norm",
        &csv_rows,
    )?;
    let mut manifest = cfg.manifest_entries();
    manifest.push(("result.holder_slope".into(), fmt17(fit.slope)));
    manifest.push(("result.holder_intercept".into(), fmt17(fit.intercept)));
    write_manifest(&cfg.out_dir.join("manifest.csv"), &manifest)?;
    Ok(HolderReport {
        slope: fit.slope,
        rows,
    })
}

// Keep the mollifier type visible to CLI users inspecting kernels.
pub use crate::recover::kappa_rule;

/// Kernel sanity used by the verify examples: reject mollifier requests
/// outside (0, 1) before any work.
pub fn validate_kernel_kappas(kappas: &[f64]) -> Result<()> {
    for &k in kappas {
        MollifierKernel::new(0.0, k)?;
    }
    Ok(())
}
