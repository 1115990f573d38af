//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured values (run with `--nocapture` to see
//! the lines for passing criteria too).
//!
//! Criteria are property- and oracle-based at fixed tolerances; run them
//! with `cargo test --test acceptance`.

use geowave::manifold::{
    BoundaryId, CoefficientField, ConformalProfile, FieldShape, MetricField, MetricFamily,
};
use geowave::recover::{
    kappa_rule, log_invert, poisson_checks, recover_absorption_bypass, recover_pair_full,
    BypassEngine, MollifierKernel, RecoveryConfig,
};
use geowave::wavesim::{dtn_gap_norm, BoundarySignal, DtnOperator, SpaceTimeGrid, WaveSolver};
use geowave::xray::{
    forward, invert, kinetic_check, l2_norm_disk, random_phantoms, ray_integral_u, FanGrid,
};
use geowave::geodesics::{PhasePoint, Tracer, TracerConfig};
use geowave::probes::{
    attenuation_residual, remainder_norm, transport_residual, FiberWeight, ProbeSpec,
};
use num_complex::Complex64;
use std::time::Instant;

fn euclid() -> MetricField {
    MetricField::new(MetricFamily::Euclidean, 1.0, 1.2).unwrap()
}

fn conformal() -> MetricField {
    MetricField::new(
        MetricFamily::Conformal(ConformalProfile::Bump {
            amp: 0.12,
            sigma: 0.5,
            center: [0.15, -0.1],
        }),
        1.0,
        1.2,
    )
    .unwrap()
}

fn interior_samples(r: f64, n: usize) -> Vec<[f64; 2]> {
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

fn status(criterion: &str, pass: bool, details: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} — {details}",
        if pass { "PASS" } else { "FAIL" }
    );
}

/// Criterion 1 — eikonal residual: < 1e-10 on the Euclidean analytic path,
/// < 1e-3 on conformal perturbations, in under 10 seconds.
#[test]
fn c01_eikonal() {
    let t0 = Instant::now();
    let m_e = euclid();
    let tracer_e = Tracer::new(&m_e, TracerConfig::default());
    let y = m_e.boundary_point(std::f64::consts::PI, BoundaryId::Outer);
    let mut euclid_resid: f64 = 0.0;
    for &x in &interior_samples(1.0, 15) {
        let d = tracer_e.distance(y, x).unwrap();
        euclid_resid = euclid_resid.max((m_e.eval(x).unwrap().g.norm(d.grad) - 1.0).abs());
    }
    let m_c = conformal();
    let tracer_c = Tracer::new(&m_c, TracerConfig::default());
    let mut conf_resid: f64 = 0.0;
    for &x in interior_samples(1.0, 9).iter() {
        let step = 1e-4;
        let mut grad = [0.0; 2];
        for axis in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[axis] += step;
            xm[axis] -= step;
            grad[axis] = (tracer_c.distance(y, xp).unwrap().rho
                - tracer_c.distance(y, xm).unwrap().rho)
                / (2.0 * step);
        }
        let n = m_c.eval(x).unwrap().inv.dot(grad, grad).sqrt();
        conf_resid = conf_resid.max((n - 1.0).abs());
    }
    let dt = t0.elapsed();
    let pass = euclid_resid < 1e-10 && conf_resid < 1e-3 && dt.as_secs_f64() < 10.0;
    status(
        "C1 eikonal",
        pass,
        &format!("euclidean {euclid_resid:.2e} (<1e-10), conformal {conf_resid:.2e} (<1e-3), {dt:.1?} (<10s)"),
    );
    assert!(pass);
}

/// Criterion 2 — transport residuals of theta and psi_a decrease at
/// observed order >= 1.8 over two refinements, in under 30 seconds.
#[test]
fn c02_transport() {
    let t0 = Instant::now();
    let m = conformal();
    let tracer = Tracer::new(&m, TracerConfig::default());
    let y_angle = std::f64::consts::PI;
    let y = m.boundary_point(y_angle, BoundaryId::Outer);
    let spec = ProbeSpec {
        y_angle,
        h: 0.1,
        eps: 0.45,
        weight: FiberWeight::Uniform,
    };
    let a = CoefficientField::new(
        FieldShape::Gaussian {
            amp: 0.3,
            center: [0.1, 0.0],
            sigma: 0.4,
        },
        0.3,
    );
    let samples: Vec<[f64; 2]> = interior_samples(1.0, 7).into_iter().take(5).collect();
    let fd = [4e-2, 2e-2, 1e-2];
    let mut tr = vec![0.0f64; 3];
    let mut at = vec![0.0f64; 3];
    for &x in &samples {
        let rho = tracer.distance(y, x).unwrap().rho;
        let times = [rho + 0.35 * 0.45, rho + 0.6 * 0.45];
        for (i, &d) in fd.iter().enumerate() {
            tr[i] = tr[i].max(transport_residual(&m, &spec, &[x], &times, d).unwrap());
            at[i] = at[i].max(attenuation_residual(&m, &spec, &a, &[x], &times, d).unwrap());
        }
    }
    let order = |v: &[f64]| ((v[0] / v[1]).log2()).min((v[1] / v[2]).log2());
    let (o_t, o_a) = (order(&tr), order(&at));
    let dt = t0.elapsed();
    let pass = o_t >= 1.8 && o_a >= 1.8 && dt.as_secs_f64() < 30.0;
    status(
        "C2 transport",
        pass,
        &format!("theta order {o_t:.2}, psi order {o_a:.2} (>=1.8), {dt:.1?} (<30s)"),
    );
    assert!(pass);
}

/// Criterion 3 — kinetic equation: max |Hu + f| < 1e-3 for f = 1 on the
/// Euclidean disk; degree -1 homogeneity of u to 1e-6.
#[test]
fn c03_kinetic() {
    let m = euclid();
    let tracer = Tracer::new(&m, TracerConfig::default());
    let one = CoefficientField::new(FieldShape::Constant(1.0), 1.0);
    let samples: Vec<PhasePoint> = interior_samples(1.0, 9)
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let ang = 0.37 + 0.61 * i as f64;
            PhasePoint {
                x,
                xi: [ang.cos(), ang.sin()],
            }
        })
        .collect();
    let rep = kinetic_check(&m, &one, &samples, 1e-3).unwrap();
    let mut hom: f64 = 0.0;
    for p in samples.iter().take(8) {
        let u1 = ray_integral_u(&m, &tracer, &one, p).unwrap();
        for lam in [2.0, 0.5, 3.0] {
            let ul = ray_integral_u(
                &m,
                &tracer,
                &one,
                &PhasePoint {
                    x: p.x,
                    xi: [lam * p.xi[0], lam * p.xi[1]],
                },
            )
            .unwrap();
            hom = hom.max((lam * ul - u1).abs());
        }
    }
    let pass = rep.max_residual < 1e-3 && hom < 1e-6;
    status(
        "C3 kinetic",
        pass,
        &format!(
            "residual {:.2e} (<1e-3) over {} samples ({} skipped), homogeneity {hom:.2e} (<1e-6)",
            rep.max_residual, rep.evaluated, rep.skipped
        ),
    );
    assert!(pass);
}

/// Criterion 4 — Poisson kernel: normalization to 1e-6 at kappa in
/// {0.5, 0.9, 0.99}; the pointwise bound on a 10^4 grid; first-moment
/// power-law constant stable within +-25% across a decade of (1-kappa).
#[test]
fn c04_poisson_kernel() {
    let report = poisson_checks(&[0.5, 0.9, 0.99]).unwrap();
    let worst_norm = report
        .rows
        .iter()
        .map(|r| r.normalization_error)
        .fold(0.0, f64::max);
    let worst_bound = report
        .rows
        .iter()
        .map(|r| r.max_bound_ratio)
        .fold(0.0, f64::max);
    // Moment power-law across a decade of (1 - kappa).
    let kappas: Vec<f64> = (0..9)
        .map(|i| 1.0 - 0.1 * (0.1f64).powf(i as f64 / 8.0))
        .collect();
    let moments: Vec<(f64, f64)> = kappas
        .iter()
        .map(|&k| {
            let kern = MollifierKernel::new(0.0, k).unwrap();
            ((1.0 - k).ln(), kern.first_moment().ln())
        })
        .collect();
    let n = moments.len() as f64;
    let sx: f64 = moments.iter().map(|p| p.0).sum();
    let sy: f64 = moments.iter().map(|p| p.1).sum();
    let sxx: f64 = moments.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = moments.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let c_fit = intercept.exp();
    let mut worst_dev: f64 = 0.0;
    for &(lx, ly) in &moments {
        let c_i = (ly - slope * lx).exp();
        worst_dev = worst_dev.max((c_i / c_fit - 1.0).abs());
    }
    let pass = worst_norm < 1e-6 && worst_bound <= 1.0 + 1e-12 && worst_dev < 0.25;
    status(
        "C4 poisson-kernel",
        pass,
        &format!(
            "normalization {worst_norm:.2e} (<1e-6), bound ratio {worst_bound:.6} (<=1), moment-law slope {slope:.2}, constant spread {:.1}% (<25%)",
            100.0 * worst_dev
        ),
    );
    assert!(pass);
}

/// Criterion 5 — X-ray forward chord oracles to 1e-4 relative; Gaussian
/// round trip < 5% relative L2 at 64^2 pixels with a 128x64 fan; under
/// two minutes.
#[test]
fn c05_xray_forward_and_inversion() {
    let t0 = Instant::now();
    // Fan on the unit circle so the classical chord formulas apply.
    let m = MetricField::new(MetricFamily::Euclidean, 0.8, 1.0).unwrap();
    let grid = FanGrid::build(&m, 32, 17, BoundaryId::Outer).unwrap();
    // Example 1: f = 0.
    let zero_img = forward(&m, &CoefficientField::zero(), &grid);
    let zero_max = zero_img.values.iter().cloned().fold(0.0f64, f64::max);
    // Example 2: f = 1 -> If = chord length 2 cos(beta).
    let one = CoefficientField::new(FieldShape::Constant(1.0), 1.0);
    let img_one = forward(&m, &one, &grid);
    let mut rel_one: f64 = 0.0;
    for (k, ray) in grid.rays.iter().enumerate() {
        let expect = 2.0 * ray.beta.cos();
        rel_one = rel_one.max((img_one.values[k] - expect).abs() / expect.max(1e-9));
    }
    // Example 3: f = 1 - |x|^2 along the central chord -> 4/3.
    let mid = grid.ray_index(0, 8);
    let parab = geowave::xray::ray_quadrature(&grid.paths[mid], |x| {
        1.0 - (x[0] * x[0] + x[1] * x[1])
    });
    let rel_parab = (parab - 4.0 / 3.0).abs() / (4.0 / 3.0);

    // Round trip at the pinned resolution.
    let m1 = euclid();
    let fan = FanGrid::build(&m1, 128, 64, BoundaryId::Outer).unwrap();
    let phantom = CoefficientField::new(
        FieldShape::Gaussian {
            amp: 1.0,
            center: [0.0, 0.0],
            sigma: 0.25,
        },
        1.0,
    );
    let img = forward(&m1, &phantom, &fan);
    let (rec, _) = invert(&img, &fan, &m1, 1e-4, 64).unwrap();
    let err = l2_norm_disk(&m1, |x| rec.eval(x) - phantom.eval(x), 160);
    let norm = l2_norm_disk(&m1, |x| phantom.eval(x), 160);
    let round_trip = err / norm;
    let dt = t0.elapsed();
    let pass = zero_max == 0.0
        && rel_one < 1e-4
        && rel_parab < 1e-4
        && round_trip < 0.05
        && dt.as_secs_f64() < 120.0;
    status(
        "C5 xray",
        pass,
        &format!(
            "zero {zero_max:.1e}, constant {rel_one:.2e} (<1e-4), chord {rel_parab:.2e} (<1e-4), round trip {round_trip:.3} (<0.05), {dt:.1?} (<2min)"
        ),
    );
    assert!(pass);
}

/// Criterion 6 — stability ratio over 50 random band-limited phantoms
/// changes < 10% under fan doubling, on the Euclidean and hyperbolic
/// metrics.
#[test]
fn c06_stability_ratio() {
    let mut all_pass = true;
    let mut details = String::new();
    for (name, metric, support) in [
        ("euclidean", euclid(), 0.8),
        (
            "hyperbolic",
            MetricField::new(
                MetricFamily::Conformal(ConformalProfile::HyperbolicPatch),
                0.5,
                0.6,
            )
            .unwrap(),
            0.4,
        ),
    ] {
        let phantoms = random_phantoms(50, 20260809, support, 4, 3);
        let fan1 = FanGrid::build(&metric, 128, 64, BoundaryId::Outer).unwrap();
        let fan2 = FanGrid::build(&metric, 256, 128, BoundaryId::Outer).unwrap();
        let s1 = geowave::xray::stability_ratio(&metric, &phantoms, &fan1).unwrap();
        let s2 = geowave::xray::stability_ratio(&metric, &phantoms, &fan2).unwrap();
        let change = (s2.max - s1.max).abs() / s1.max;
        let ok = change < 0.10 && s1.anomalies == 0;
        all_pass &= ok;
        details.push_str(&format!(
            "{name}: max {:.3} -> {:.3} ({:.1}% change), ",
            s1.max,
            s2.max,
            100.0 * change
        ));
    }
    status("C6 stability-ratio", all_pass, details.trim_end_matches(", "));
    assert!(all_pass);
}

/// Criterion 7 — wave solver: plane-wave interior < 2% L2(Q), Neumann
/// trace < 3%, observed order >= 1.8, energy drift < 0.5%, solve under
/// five minutes at 128^2.
#[test]
fn c07_wave_solver() {
    let m = euclid();
    let zero = CoefficientField::zero();
    let len = 1.5;
    let pulse = move |s: f64| {
        if s <= 0.0 || s >= len {
            0.0
        } else {
            (4.0 - len * len / (s * (len - s))).exp()
        }
    };
    let pulse_d = move |s: f64| {
        if s <= 0.0 || s >= len {
            0.0
        } else {
            pulse(s) * len * len * (len - 2.0 * s) / (s * s * (len - s) * (len - s))
        }
    };
    let exact = move |x: [f64; 2], t: f64| Complex64::new(pulse(t - x[0] - 1.0), 0.0);

    let mut errs = Vec::new();
    let mut solve_time = 0.0f64;
    let mut neumann_rel = 0.0;
    for n in [64usize, 128] {
        let grid = SpaceTimeGrid::new(&m, n, 2.4, 0.45, 192).unwrap();
        let solver = WaveSolver::new(&m, &zero, &zero, &grid).unwrap();
        let f = BoundarySignal::from_fn(&grid, &m, exact).unwrap();
        let mut num2 = 0.0;
        let mut den2 = 0.0;
        let t0 = Instant::now();
        let neumann = solver
            .solve(&f, None, |_, t, view| {
                for &node in solver.interior_nodes() {
                    let k = node as usize;
                    let ue = exact(view.node_point(k), t);
                    num2 += (view.data[k] - ue).norm_sqr();
                    den2 += ue.norm_sqr();
                }
            })
            .unwrap();
        solve_time = t0.elapsed().as_secs_f64();
        errs.push((num2 / den2).sqrt());
        if n == 128 {
            let mut tn = 0.0;
            let mut td = 0.0;
            for t_idx in 0..neumann.n_t {
                let t = t_idx as f64 * grid.dt;
                for k in 0..grid.n_boundary {
                    let phi = grid.boundary_angle(k);
                    let x = [phi.cos(), phi.sin()];
                    let expected = -pulse_d(t - x[0] - 1.0) * x[0];
                    let got = neumann.at(t_idx, k).re;
                    tn += (got - expected) * (got - expected) * neumann.arc_weights[k];
                    td += expected * expected * neumann.arc_weights[k];
                }
            }
            neumann_rel = (tn / td).sqrt();
        }
    }
    let order = (errs[0] / errs[1]).log2();

    // Energy conservation: undamped source-free variant with initial data.
    let grid = SpaceTimeGrid::new(&m, 128, 2.4, 0.45, 64).unwrap();
    let solver = WaveSolver::new(&m, &zero, &zero, &grid).unwrap();
    let u0 = |x: [f64; 2]| {
        let r2 = (x[0] * x[0] + x[1] * x[1]) / 0.36;
        if r2 >= 1.0 {
            Complex64::default()
        } else {
            Complex64::new((1.0 - 1.0 / (1.0 - r2)).exp(), 0.0)
        }
    };
    let mut prev: Option<Vec<Complex64>> = None;
    let mut energies = Vec::new();
    solver
        .solve_from_initial(u0, |_| Complex64::default(), |_, _, view| {
            if let Some(p) = &prev {
                energies.push(solver.energy_staggered(p, view.data));
            }
            prev = Some(view.data.to_vec());
        })
        .unwrap();
    let e0 = energies[1];
    let drift = energies
        .iter()
        .skip(1)
        .map(|e| (e - e0).abs() / e0)
        .fold(0.0, f64::max);

    let pass = errs[1] < 0.02
        && neumann_rel < 0.03
        && order >= 1.8
        && drift < 0.005
        && solve_time < 300.0;
    status(
        "C7 wave-solver",
        pass,
        &format!(
            "interior {:.4} (<0.02), neumann {neumann_rel:.4} (<0.03), order {order:.2} (>=1.8), drift {drift:.4} (<0.005), solve {solve_time:.1}s (<300s)",
            errs[1]
        ),
    );
    assert!(pass);
}

/// Criterion 8 — remainder scaling over the h sweep {0.1, 0.05, 0.025}:
/// successive ratios within [0.4, 0.7] before the discretization floor.
/// The floor is detected by grid refinement: entries that change by more
/// than 25% between resolutions are floor-dominated and reported as such.
#[test]
fn c08_remainder_scaling() {
    let m = euclid();
    let zero = CoefficientField::zero();
    let eps = 0.35;
    let spec = ProbeSpec {
        y_angle: std::f64::consts::PI,
        h: 0.1,
        eps,
        weight: FiberWeight::Uniform,
    };
    let sweep = [0.1, 0.05, 0.025];
    let horizon = 2.5 + 2.0 * eps + 0.2;
    let mut norms = Vec::new();
    for n in [512usize, 768] {
        let grid = SpaceTimeGrid::new(&m, n, horizon, 0.45, 2048).unwrap();
        let rep = remainder_norm(&m, &zero, &zero, &grid, &spec, &sweep).unwrap();
        norms.push(rep.per_h);
    }
    // Richardson extrapolation of the second-order solver error and floor
    // detection per sweep entry.
    let mut extrap = Vec::new();
    let mut converged = Vec::new();
    let mut details = String::new();
    for i in 0..sweep.len() {
        let (h, r_coarse) = norms[0][i];
        let (_, r_fine) = norms[1][i];
        let factor = (768.0f64 / 512.0).powi(2);
        let r_inf = (r_fine * factor - r_coarse) / (factor - 1.0);
        let is_converged = (r_fine - r_coarse).abs() / r_fine < 0.25;
        details.push_str(&format!(
            "h={h}: r={r_fine:.4} ({}), ",
            if is_converged { "converged" } else { "floor" }
        ));
        extrap.push(r_inf.max(0.0));
        converged.push(is_converged);
    }
    // Monotone decrease of the grid-converged extrapolated norms, with
    // pre-floor ratios inside the window.
    let mut pass = true;
    let mut n_checked = 0;
    for i in 1..sweep.len() {
        if converged[i] && converged[i - 1] {
            let ratio = extrap[i] / extrap[i - 1];
            details.push_str(&format!("ratio {:.2}, ", ratio));
            pass &= ratio >= 0.4 && ratio <= 0.7;
            n_checked += 1;
        }
    }
    pass &= n_checked >= 1;
    status(
        "C8 remainder-scaling",
        pass,
        &format!("{}pre-floor ratios checked: {n_checked}", details),
    );
    assert!(pass);
}

/// Criterion 9 — bypass-mode recovery: pointwise extraction within the
/// mollifier blur bound at every fan node; assembled field < 15% relative
/// L2 error.
#[test]
fn c09_bypass_recovery() {
    let m = euclid();
    let bump = CoefficientField::new(
        FieldShape::Bump {
            amp: 0.2,
            center: [0.0, 0.0],
            radius: 0.6,
        },
        0.2,
    );
    let h = 1e-12;
    let kappa = kappa_rule(h, 2).unwrap();
    let fan = FanGrid::build(&m, 64, 48, BoundaryId::Outer).unwrap();
    // Pointwise blur bound at every fan node.
    let mut worst_excess: f64 = 0.0;
    let mut checked = 0;
    for i in 0..fan.n_s {
        let y_angle = std::f64::consts::TAU * i as f64 / fan.n_s as f64;
        let engine = BypassEngine::build(&m, &bump, y_angle, 2048).unwrap();
        let mut l_eta: f64 = 0.0;
        let mut m_max: f64 = 0.0;
        for w in engine.iota.windows(2) {
            l_eta = l_eta.max((w[1] - w[0]).abs() / engine.d_eta);
        }
        for &v in &engine.iota {
            m_max = m_max.max(v.abs());
        }
        for j in 0..fan.n_beta {
            let beta = fan.rays[fan.ray_index(i, j)].beta;
            let kernel = MollifierKernel::new(beta, kappa).unwrap();
            let s = engine.weighted_exp(&kernel.weight());
            let got = log_invert(Complex64::new(s, 0.0)).unwrap();
            let exact = engine.iota_at(beta);
            let bound =
                m_max.exp() * l_eta * std::f64::consts::FRAC_PI_2 * kernel.first_moment() + 1e-6;
            worst_excess = worst_excess.max((got - exact).abs() - bound);
            checked += 1;
        }
    }
    // Assembled recovery.
    let cfg = RecoveryConfig {
        h_sweep: vec![h],
        n_pixels: 64,
        n_fiber: 2048,
        lambda_rel: 1e-4,
        ..RecoveryConfig::default()
    };
    let out = recover_absorption_bypass(&m, &bump, &fan, &cfg).unwrap();
    let err = l2_norm_disk(&m, |x| out.field.eval(x) - bump.eval(x), 160);
    let norm = l2_norm_disk(&m, |x| bump.eval(x), 160);
    let rel = err / norm;
    let pass = worst_excess <= 0.0 && rel < 0.15;
    status(
        "C9 bypass-recovery",
        pass,
        &format!(
            "blur bound holds at all {checked} nodes (worst excess {worst_excess:.2e}), assembled rel error {rel:.3} (<0.15)"
        ),
    );
    assert!(pass);
}

/// Criterion 10 — full-pipeline recovery at desk scale: absorption-only
/// bump (amplitude 0.2) to < 35%, potential-only bump (amplitude 0.3) to
/// < 40%, identical pairs below a 1% noise floor, total under 45 minutes.
#[test]
fn c10_full_recovery() {
    let t0 = Instant::now();
    let m = euclid();
    let zero = CoefficientField::zero();
    let grid = SpaceTimeGrid::new(&m, 128, 3.5, 0.45, 384).unwrap();
    let fan = FanGrid::build(&m, 96, 64, BoundaryId::Outer).unwrap();
    let cfg = RecoveryConfig {
        h_sweep: vec![0.1, 0.05],
        eps: 0.45,
        lambda_rel: 1e-3,
        n_pixels: 64,
        kappa_override: Some(0.96),
        ..RecoveryConfig::default()
    };

    // Absorption-only pair.
    let a_bump = CoefficientField::new(
        FieldShape::Bump {
            amp: 0.2,
            center: [0.0, 0.0],
            radius: 0.7,
        },
        0.2,
    );
    let op1 = DtnOperator::new(&m, &a_bump, &zero, &grid, None).unwrap();
    let op2 = DtnOperator::new(&m, &zero, &zero, &grid, None).unwrap();
    let out_a = recover_pair_full(&m, &op1, &op2, &grid, &fan, &cfg).unwrap();
    let a_norm = l2_norm_disk(&m, |x| a_bump.eval(x), 160);
    let a_rel = l2_norm_disk(&m, |x| out_a.absorption.field.eval(x) - a_bump.eval(x), 160) / a_norm;

    // Potential-only pair.
    let q_bump = CoefficientField::new(
        FieldShape::Bump {
            amp: 0.3,
            center: [0.0, 0.0],
            radius: 0.7,
        },
        0.3,
    );
    let op1q = DtnOperator::new(&m, &zero, &q_bump, &grid, None).unwrap();
    let out_q = recover_pair_full(&m, &op1q, &op2, &grid, &fan, &cfg).unwrap();
    let q_norm = l2_norm_disk(&m, |x| q_bump.eval(x), 160);
    let q_rel = l2_norm_disk(&m, |x| out_q.potential.field.eval(x) - q_bump.eval(x), 160) / q_norm;

    // Identical pairs: outputs below the noise floor (1% of the bump scale).
    let op_same = DtnOperator::new(&m, &a_bump, &q_bump, &grid, None).unwrap();
    let op_same2 = DtnOperator::new(&m, &a_bump, &q_bump, &grid, None).unwrap();
    let fan_small = FanGrid::build(&m, 24, 16, BoundaryId::Outer).unwrap();
    let out_same = recover_pair_full(&m, &op_same, &op_same2, &grid, &fan_small, &cfg).unwrap();
    let same_a = l2_norm_disk(&m, |x| out_same.absorption.field.eval(x), 120);
    let same_q = l2_norm_disk(&m, |x| out_same.potential.field.eval(x), 120);
    let floor = 0.01 * a_norm.min(q_norm);

    let dt = t0.elapsed();
    let pass = a_rel < 0.35
        && q_rel < 0.40
        && same_a < floor
        && same_q < floor
        && dt.as_secs_f64() < 45.0 * 60.0;
    status(
        "C10 full-recovery",
        pass,
        &format!(
            "a rel {a_rel:.3} (<0.35), q rel {q_rel:.3} (<0.40), identical-pair norms {same_a:.2e}/{same_q:.2e} (<{floor:.2e}), {:.0?} (<45min)",
            dt
        ),
    );
    assert!(pass);
}

/// Criterion 11 — Hölder consistency: log-log slope over the 4-point
/// amplitude sweep is positive and changes < 15% when the probe family
/// doubles.
#[test]
fn c11_holder_consistency() {
    let m = euclid();
    let grid = SpaceTimeGrid::new(&m, 96, 2.6, 0.45, 128).unwrap();
    let zero = CoefficientField::zero();
    let len_pulse = 0.9;
    let probes_for = |count: usize| -> Vec<BoundarySignal> {
        (0..count)
            .map(|i| {
                let dir = std::f64::consts::TAU * i as f64 / count as f64;
                let e = [dir.cos(), dir.sin()];
                BoundarySignal::from_fn(&grid, &m, move |x, t| {
                    let s = t - x[0] * e[0] - x[1] * e[1] - 1.0;
                    let v = if s <= 0.0 || s >= len_pulse {
                        0.0
                    } else {
                        (4.0 - len_pulse * len_pulse / (s * (len_pulse - s))).exp()
                    };
                    Complex64::new(v, 0.0)
                })
                .unwrap()
            })
            .collect()
    };
    let amplitudes = [0.05, 0.1, 0.2, 0.4];
    let mut slopes = Vec::new();
    for count in [3usize, 6] {
        let probes = probes_for(count);
        let mut gaps = Vec::new();
        let mut norms = Vec::new();
        for &amp in &amplitudes {
            let a1 = CoefficientField::new(
                FieldShape::Bump {
                    amp,
                    center: [0.0, 0.0],
                    radius: 0.6,
                },
                amp,
            );
            let op1 = DtnOperator::new(&m, &a1, &zero, &grid, None).unwrap();
            let op2 = DtnOperator::new(&m, &zero, &zero, &grid, None).unwrap();
            gaps.push(dtn_gap_norm(&op1, &op2, &probes).unwrap().value);
            norms.push(l2_norm_disk(&m, |x| a1.eval(x), 140));
        }
        let fit = geowave::recover::holder_fit(&gaps, &norms).unwrap();
        slopes.push(fit.slope);
    }
    let change = (slopes[1] - slopes[0]).abs() / slopes[0];
    let pass = slopes[0] > 0.0 && slopes[0] <= 1.2 && change < 0.15;
    status(
        "C11 holder",
        pass,
        &format!(
            "slope {:.3} in (0, 1.2], probe-doubling change {:.1}% (<15%)",
            slopes[0],
            100.0 * change
        ),
    );
    assert!(pass);
}
