//! Browser demo bindings: geodesic fans, X-ray sinograms with inversion
//! round trips, and wave snapshots driven by geometric-optics probes.
//!
//! Everything returns flat `Vec<f64>` buffers with small headers so the
//! page can draw directly onto canvases without a framework.

use geowave::manifold::{
    BoundaryId, CoefficientField, ConformalProfile, FieldShape, MetricField, MetricFamily,
};
use geowave::probes::{probe_trace, FiberWeight, ProbeSpec};
use geowave::wavesim::{SpaceTimeGrid, WaveSolver};
use geowave::xray::{forward, invert, FanGrid, PixelGrid};
use num_complex::Complex64;
use wasm_bindgen::prelude::*;

fn build_metric(family: &str, strength: f64) -> Result<MetricField, JsValue> {
    let family = match family {
        "euclidean" => MetricFamily::Euclidean,
        "conformal-bump" => MetricFamily::Conformal(ConformalProfile::Bump {
            amp: strength,
            sigma: 0.5,
            center: [0.25, 0.1],
        }),
        "sphere-patch" => MetricFamily::Conformal(ConformalProfile::SpherePatch),
        "hyperbolic-patch" => MetricFamily::Conformal(ConformalProfile::HyperbolicPatch),
        other => return Err(JsValue::from_str(&format!("unknown family {other}"))),
    };
    let (rm, r1) = if matches!(
        family,
        MetricFamily::Conformal(ConformalProfile::HyperbolicPatch)
    ) {
        (0.5, 0.6)
    } else {
        (1.0, 1.2)
    };
    MetricField::new(family, rm, r1).map_err(err_js)
}

fn err_js(e: geowave::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Trace a fan of geodesics from one boundary source across entry angles.
///
/// Returns `[r_m, r_m1, n_rays, {n_pts, x0, y0, x1, y1, ...} per ray]`.
#[wasm_bindgen]
pub fn trace_fan(
    family: &str,
    strength: f64,
    source_angle: f64,
    n_rays: u32,
) -> Result<Vec<f64>, JsValue> {
    use geowave::geodesics::{PhasePoint, Tracer, TracerConfig};
    let metric = build_metric(family, strength)?;
    let tracer = Tracer::new(&metric, TracerConfig::default());
    let y = metric.boundary_point(source_angle, BoundaryId::Outer);
    let frame = metric.fiber_frame(y, BoundaryId::Outer).map_err(err_js)?;
    let mut out = vec![metric.radius_m, metric.radius_m1, n_rays as f64];
    for k in 0..n_rays {
        let beta = -1.35 + 2.7 * (k as f64 + 0.5) / n_rays as f64;
        let p = PhasePoint {
            x: y,
            xi: frame.direction(beta),
        };
        let exit = tracer.exit(&p, BoundaryId::Outer).map_err(err_js)?;
        let n_pts = 48usize;
        out.push(n_pts as f64);
        for i in 0..n_pts {
            let t = exit.time * i as f64 / (n_pts - 1) as f64;
            let q = tracer.flow(&p, t).map_err(err_js)?;
            out.push(q.x[0]);
            out.push(q.x[1]);
        }
    }
    Ok(out)
}

/// Forward X-ray transform of a bump phantom plus the regularized
/// inversion round trip.
///
/// Returns `[n_s, n_beta, sinogram..., n_pix, recon..., truth...]`.
#[wasm_bindgen]
pub fn xray_roundtrip(
    family: &str,
    strength: f64,
    bump_x: f64,
    bump_y: f64,
    bump_radius: f64,
    lambda_rel: f64,
) -> Result<Vec<f64>, JsValue> {
    let metric = build_metric(family, strength)?;
    let phantom = CoefficientField::new(
        FieldShape::Bump {
            amp: 1.0,
            center: [bump_x, bump_y],
            radius: bump_radius.max(0.05),
        },
        1.0,
    );
    let (n_s, n_beta, n_pix) = (48usize, 32usize, 40usize);
    let fan = FanGrid::build(&metric, n_s, n_beta, BoundaryId::Outer).map_err(err_js)?;
    let img = forward(&metric, &phantom, &fan);
    let (recon, _diag) =
        invert(&img, &fan, &metric, lambda_rel.max(1e-6), n_pix).map_err(err_js)?;
    let truth = PixelGrid::sample(|x| phantom.eval(x), n_pix, metric.radius_m);
    let mut out = vec![n_s as f64, n_beta as f64];
    out.extend_from_slice(&img.values);
    out.push(n_pix as f64);
    out.extend_from_slice(&recon.values);
    out.extend_from_slice(&truth.values);
    Ok(out)
}

/// Solve the damped wave equation driven by a geometric-optics probe and
/// return |u| at a requested fraction of the horizon.
///
/// Returns `[n, half, |u| values (row-major)...]`.
#[wasm_bindgen]
pub fn wave_snapshot(
    family: &str,
    strength: f64,
    source_angle: f64,
    h: f64,
    absorption: f64,
    t_fraction: f64,
) -> Result<Vec<f64>, JsValue> {
    let metric = build_metric(family, strength)?;
    let n = 72usize;
    let horizon = (2.6 * metric.radius_m1).max(1.0);
    let grid = SpaceTimeGrid::new(&metric, n, horizon, 0.45, 192).map_err(err_js)?;
    let a = CoefficientField::new(
        FieldShape::Bump {
            amp: absorption,
            center: [0.0, 0.0],
            radius: 0.7 * metric.radius_m,
        },
        absorption.abs(),
    );
    let q = CoefficientField::zero();
    let solver = WaveSolver::new(&metric, &a, &q, &grid).map_err(err_js)?;
    let spec = ProbeSpec {
        y_angle: source_angle,
        h: h.clamp(0.08, 0.4),
        eps: 0.35 * metric.radius_m,
        weight: FiberWeight::Uniform,
    };
    let datum = probe_trace(&metric, &grid, &spec, &FiberWeight::Uniform, &a, 1.0)
        .map_err(err_js)?;
    let target_step = ((t_fraction.clamp(0.0, 1.0) * grid.n_steps as f64) as usize)
        .min(grid.n_steps);
    let mut snapshot: Vec<Complex64> = Vec::new();
    solver
        .solve(&datum, None, |step, _t, view| {
            if step == target_step {
                snapshot = view.data.to_vec();
            }
        })
        .map_err(err_js)?;
    let mut out = vec![n as f64, grid.half];
    out.extend(snapshot.iter().map(|v| v.norm()));
    Ok(out)
}
