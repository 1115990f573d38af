//! Geometric-optics (WKB) probes: smooth time cutoff, oscillatory phase,
//! transport amplitude, attenuation weight, boundary traces, and the
//! remainder scaling study.
//!
//! A probe concentrates along the geodesics leaving a source point `y` on
//! the outer boundary. Its Dirichlet trace on the inner cylinder is
//!
//! ```text
//! f_h(x, t) = alpha^{-1/4} chi(t - rho(x)) Psi(angle) psi(x, t) e^{i (rho(x) - t)/h}
//! ```
//!
//! where `rho` is the geodesic distance from `y`, `alpha = j^2` the squared
//! polar volume element, `chi` a bump supported in (0, eps), `Psi` a fiber
//! weight and `psi` the attenuation along the connecting ray.

use crate::error::{Error, Result};
use crate::geodesics::{PolarRecord, Tracer, TracerConfig};
use crate::manifold::{BoundaryId, CoefficientField, FiberFrame, MetricField, Vec2};
use crate::wavesim::{BoundarySignal, SpaceTimeGrid, WaveSolver};
use crate::xray::par_try_map;
use num_complex::Complex64;

/// Smooth bump supported in (0, eps) with all derivatives vanishing at the
/// endpoints; normalized to peak value one at eps/2.
#[derive(Debug, Clone, Copy)]
pub struct Cutoff {
    pub eps: f64,
}

impl Cutoff {
    pub fn new(eps: f64) -> Result<Cutoff> {
        if eps <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "eps",
                value: eps,
                reason: "cutoff support must be positive",
            });
        }
        Ok(Cutoff { eps })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s = t / self.eps;
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            (4.0 - 1.0 / (s * (1.0 - s))).exp()
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let s = t / self.eps;
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            let d = (2.0 * s - 1.0) / (s * s * (1.0 - s) * (1.0 - s));
            self.eval(t) * d / self.eps
        }
    }

    /// Integral of chi^2 by adaptive Simpson quadrature.
    pub fn l2_squared(&self) -> f64 {
        adaptive_simpson(&|t| self.eval(t).powi(2), 0.0, self.eps, 1e-12, 24)
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let simpson = |a: f64, b: f64| {
        let c = 0.5 * (a + b);
        (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b))
    };
    let whole = simpson(a, b);
    let left = simpson(a, c);
    let right = simpson(c, b);
    if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
        left + right + (left + right - whole) / 15.0
    } else {
        adaptive_simpson(f, a, c, tol * 0.5, depth - 1)
            + adaptive_simpson(f, c, b, tol * 0.5, depth - 1)
    }
}

/// The Poisson kernel of the unit disk restricted to the circle, as a
/// function of kappa and the angle between the two directions.
pub fn poisson_kernel(kappa: f64, delta_angle: f64) -> f64 {
    let denom = 1.0 + kappa * kappa - 2.0 * kappa * delta_angle.cos();
    (1.0 - kappa * kappa) / (std::f64::consts::TAU * denom)
}

/// Fiber weight Psi on the inward hemisphere at the probe source.
#[derive(Debug, Clone)]
pub enum FiberWeight {
    Uniform,
    Zero,
    /// Smooth angular bump centered at `center` with the given half-width.
    Sector { center: f64, width: f64 },
    /// Poisson mollifier concentrated at `theta`.
    Poisson { theta: f64, kappa: f64 },
}

impl FiberWeight {
    pub fn eval(&self, eta: f64) -> f64 {
        match self {
            FiberWeight::Uniform => 1.0,
            FiberWeight::Zero => 0.0,
            FiberWeight::Sector { center, width } => {
                let s = (angle_diff(eta, *center) / width + 1.0) * 0.5;
                if s <= 0.0 || s >= 1.0 {
                    0.0
                } else {
                    (4.0 - 1.0 / (s * (1.0 - s))).exp()
                }
            }
            FiberWeight::Poisson { theta, kappa } => {
                poisson_kernel(*kappa, angle_diff(eta, *theta))
            }
        }
    }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = a - b;
    while d > std::f64::consts::PI {
        d -= std::f64::consts::TAU;
    }
    while d < -std::f64::consts::PI {
        d += std::f64::consts::TAU;
    }
    d
}

/// Cumulative line integral of a coefficient along a ray path, for the
/// attenuation weight. Entries are (arc parameter, integral from 0).
#[derive(Debug, Clone)]
pub struct AttenuationTable {
    cum: Vec<(f64, f64)>,
}

impl AttenuationTable {
    pub fn build(path: &[(f64, Vec2)], field: &CoefficientField) -> AttenuationTable {
        let mut cum = Vec::with_capacity(path.len());
        let mut acc = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for &(s, x) in path {
            let v = field.eval(x);
            if let Some((sp, vp)) = prev {
                acc += 0.5 * (v + vp) * (s - sp);
            }
            cum.push((s, acc));
            prev = Some((s, v));
        }
        AttenuationTable { cum }
    }

    /// Integral of the field over arc parameters [from, to], clamped to the
    /// table range (the field is zero-extended outside the domain).
    pub fn integral(&self, from: f64, to: f64) -> f64 {
        self.at(to) - self.at(from)
    }

    fn at(&self, s: f64) -> f64 {
        if self.cum.is_empty() {
            return 0.0;
        }
        let (s0, _) = self.cum[0];
        let (s1, v1) = *self.cum.last().unwrap();
        if s <= s0 {
            return 0.0;
        }
        if s >= s1 {
            return v1;
        }
        let mut lo = 0;
        let mut hi = self.cum.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cum[mid].0 <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (sa, va) = self.cum[lo];
        let (sb, vb) = self.cum[hi];
        va + (vb - va) * (s - sa) / (sb - sa)
    }
}

/// One geometric-optics probe: source point, small parameter, cutoff and
/// fiber weight, plus the coefficient fields feeding the attenuation.
#[derive(Debug, Clone)]
pub struct ProbeSpec {
    /// Chart angle of the source on the outer boundary.
    pub y_angle: f64,
    pub h: f64,
    pub eps: f64,
    pub weight: FiberWeight,
}

/// Polar data of a probe relative to a fixed target set, with attenuation
/// tables for the pair of absorption coefficients. Built once per source
/// and reused by every evaluation.
pub struct ProbeFrame {
    pub y: Vec2,
    pub frame: FiberFrame,
    pub cutoff: Cutoff,
    pub h: f64,
    pub weight: FiberWeight,
    /// Polar record per target point.
    pub polar: Vec<PolarRecord>,
}

impl ProbeFrame {
    /// Shoot geodesics from the probe source to every target.
    pub fn build(
        metric: &MetricField,
        spec: &ProbeSpec,
        targets: &[Vec2],
    ) -> Result<ProbeFrame> {
        let tracer = Tracer::new(metric, TracerConfig::default());
        let y = metric.boundary_point(spec.y_angle, BoundaryId::Outer);
        let frame = metric.fiber_frame(y, BoundaryId::Outer)?;
        let polar = par_try_map(targets, |&x| tracer.shoot_polar(y, x, &frame))?;
        Ok(ProbeFrame {
            y,
            frame,
            cutoff: Cutoff::new(spec.eps)?,
            h: spec.h,
            weight: spec.weight.clone(),
            polar,
        })
    }

    /// Phase of the WKB ansatz at target `i`.
    pub fn phase(&self, i: usize, t: f64) -> f64 {
        self.polar[i].r - t
    }

    /// Transport amplitude theta at target `i` with the probe's weight.
    pub fn amplitude(&self, i: usize, t: f64) -> f64 {
        let rec = &self.polar[i];
        rec.jacobi.powf(-0.5) * self.cutoff.eval(t - rec.r) * self.weight.eval(rec.eta)
    }

    /// Attenuation weight exp(-sign/2 * int a) along the ray history of the
    /// wavefront through target `i` at time `t`.
    pub fn attenuation(&self, table: &AttenuationTable, i: usize, t: f64, sign: f64) -> f64 {
        let r = self.polar[i].r;
        let integral = table.integral((r - t).max(0.0), r);
        (-0.5 * sign * integral).exp()
    }

    /// Attenuation tables of a coefficient field over all targets.
    pub fn tables(&self, field: &CoefficientField) -> Vec<AttenuationTable> {
        self.polar
            .iter()
            .map(|rec| AttenuationTable::build(&rec.path, field))
            .collect()
    }

    /// Full WKB evaluation at target `i`: theta * psi * e^{i phase/h}.
    pub fn ansatz(&self, table: &AttenuationTable, i: usize, t: f64, sign: f64) -> Complex64 {
        self.ansatz_with_h(table, i, t, sign, self.h)
    }

    /// Ansatz evaluation with an explicit small parameter; the polar data
    /// and attenuation tables are h-independent and shared across a sweep.
    pub fn ansatz_with_h(
        &self,
        table: &AttenuationTable,
        i: usize,
        t: f64,
        sign: f64,
        h: f64,
    ) -> Complex64 {
        let theta = self.amplitude(i, t);
        if theta == 0.0 {
            return Complex64::default();
        }
        let psi = self.attenuation(table, i, t, sign);
        let phase = self.phase(i, t) / h;
        Complex64::from_polar(theta * psi, phase)
    }
}

/// Dirichlet datum and companion backward datum of a probe on the trace
/// grid of a wave solver.
pub struct ProbeTraces {
    pub f_h: BoundarySignal,
    pub g_h: BoundarySignal,
}

/// Sample one probe trace on the solver grid: theta[weight] * psi * e^{i phi/h}
/// with the attenuation built from `field` and the given sign.
pub fn probe_trace(
    metric: &MetricField,
    grid: &SpaceTimeGrid,
    spec: &ProbeSpec,
    weight: &FiberWeight,
    field: &CoefficientField,
    sign: f64,
) -> Result<BoundarySignal> {
    check_resolution(metric, grid, spec.h)?;
    let targets: Vec<Vec2> = (0..grid.n_boundary)
        .map(|k| metric.boundary_point(grid.boundary_angle(k), BoundaryId::Inner))
        .collect();
    let frame = ProbeFrame::build(metric, spec, &targets)?;
    let tables = frame.tables(field);
    let mut sig = BoundarySignal::zeros(grid, metric)?;
    for t_idx in 0..sig.n_t {
        let t = t_idx as f64 * grid.dt;
        for k in 0..grid.n_boundary {
            let rec = &frame.polar[k];
            let chi = frame.cutoff.eval(t - rec.r);
            if chi == 0.0 {
                continue;
            }
            let w = weight.eval(rec.eta);
            if w == 0.0 {
                continue;
            }
            let amp = rec.jacobi.powf(-0.5) * chi * w;
            let phase = (rec.r - t) / spec.h;
            let psi = frame.attenuation(&tables[k], k, t, sign);
            sig.values[t_idx * grid.n_boundary + k] = Complex64::from_polar(amp * psi, phase);
        }
    }
    Ok(sig)
}

/// Sample the probe boundary data on the solver grid: the forward datum
/// `f_h` (uniform fiber weight, attenuated by `a2`) and the backward
/// companion `g_h` (the probe's weight, attenuated by `-a1`).
pub fn probe_boundary_data(
    metric: &MetricField,
    grid: &SpaceTimeGrid,
    spec: &ProbeSpec,
    a1: &CoefficientField,
    a2: &CoefficientField,
) -> Result<ProbeTraces> {
    let f_h = probe_trace(metric, grid, spec, &FiberWeight::Uniform, a2, 1.0)?;
    let g_h = probe_trace(metric, grid, spec, &spec.weight.clone(), a1, -1.0)?;
    // The cutoff support keeps the t = 0 slice identically zero.
    debug_assert!(f_h.values[..grid.n_boundary]
        .iter()
        .all(|v| v.norm() == 0.0));
    Ok(ProbeTraces { f_h, g_h })
}

/// Resolution gate: at least 8 samples per oscillation wavelength (2 pi h)
/// along the boundary and in time.
pub fn check_resolution(metric: &MetricField, grid: &SpaceTimeGrid, h: f64) -> Result<()> {
    let wavelength = std::f64::consts::TAU * h;
    // Boundary arc spacing of the inner circle (conservative upper bound).
    let mut max_ds: f64 = 0.0;
    for k in 0..grid.n_boundary {
        let phi = grid.boundary_angle(k);
        let x = metric.boundary_point(phi, BoundaryId::Inner);
        let ev = metric.eval(x)?;
        let tangent = [-x[1], x[0]];
        max_ds = max_ds.max(
            ev.g.norm(tangent) * std::f64::consts::TAU / grid.n_boundary as f64,
        );
    }
    if max_ds > wavelength / 8.0 {
        let required = (max_ds * grid.n_boundary as f64 / (wavelength / 8.0)).ceil() as usize;
        return Err(Error::GridTooCoarse {
            what: "boundary sampling of the oscillatory probe",
            required,
            actual: grid.n_boundary,
        });
    }
    if grid.dt > wavelength / 8.0 {
        let required = (grid.horizon / (wavelength / 8.0)).ceil() as usize;
        return Err(Error::GridTooCoarse {
            what: "time sampling of the oscillatory probe",
            required,
            actual: grid.n_steps,
        });
    }
    Ok(())
}

/// Finite-difference residual of the first transport equation
/// d_t theta + <d rho, d theta> + (1/2) (Lap rho) theta.
pub fn transport_residual(
    metric: &MetricField,
    spec: &ProbeSpec,
    samples: &[Vec2],
    times: &[f64],
    fd_step: f64,
) -> Result<f64> {
    let tracer = Tracer::new(metric, TracerConfig::default());
    let y = metric.boundary_point(spec.y_angle, BoundaryId::Outer);
    let frame = metric.fiber_frame(y, BoundaryId::Outer)?;
    let cutoff = Cutoff::new(spec.eps)?;
    let theta_at = |x: Vec2, t: f64| -> Result<f64> {
        let rec = tracer.shoot_polar(y, x, &frame)?;
        Ok(rec.jacobi.powf(-0.5) * cutoff.eval(t - rec.r) * spec.weight.eval(rec.eta))
    };
    let mut worst: f64 = 0.0;
    for &x in samples {
        let rec = tracer.shoot_polar(y, x, &frame)?;
        for &t in times {
            // d_t by centered difference.
            let dt_theta =
                (theta_at(x, t + fd_step)? - theta_at(x, t - fd_step)?) / (2.0 * fd_step);
            // <d rho, d theta> is the derivative along the unit ray tangent.
            let tan = rec.tangent;
            let xp = [x[0] + fd_step * tan[0], x[1] + fd_step * tan[1]];
            let xm = [x[0] - fd_step * tan[0], x[1] - fd_step * tan[1]];
            let dr_theta = (theta_at(xp, t)? - theta_at(xm, t)?) / (2.0 * fd_step);
            // Lap rho = d_r ln j along the ray.
            let lap_rho = rec.djacobi / rec.jacobi;
            let theta = theta_at(x, t)?;
            let resid = dt_theta + dr_theta + 0.5 * lap_rho * theta;
            worst = worst.max(resid.abs());
        }
    }
    Ok(worst)
}

/// Finite-difference residual of the second transport equation
/// d_t psi + <d rho, d psi> + (a/2) psi.
pub fn attenuation_residual(
    metric: &MetricField,
    spec: &ProbeSpec,
    a: &CoefficientField,
    samples: &[Vec2],
    times: &[f64],
    fd_step: f64,
) -> Result<f64> {
    let tracer = Tracer::new(metric, TracerConfig::default());
    let y = metric.boundary_point(spec.y_angle, BoundaryId::Outer);
    let frame = metric.fiber_frame(y, BoundaryId::Outer)?;
    let psi_at = |x: Vec2, t: f64| -> Result<f64> {
        let rec = tracer.shoot_polar(y, x, &frame)?;
        let table = AttenuationTable::build(&rec.path, a);
        Ok((-0.5 * table.integral((rec.r - t).max(0.0), rec.r)).exp())
    };
    let mut worst: f64 = 0.0;
    for &x in samples {
        let rec = tracer.shoot_polar(y, x, &frame)?;
        for &t in times {
            let dt_psi = (psi_at(x, t + fd_step)? - psi_at(x, t - fd_step)?) / (2.0 * fd_step);
            let tan = rec.tangent;
            let xp = [x[0] + fd_step * tan[0], x[1] + fd_step * tan[1]];
            let xm = [x[0] - fd_step * tan[0], x[1] - fd_step * tan[1]];
            let dr_psi = (psi_at(xp, t)? - psi_at(xm, t)?) / (2.0 * fd_step);
            let psi = psi_at(x, t)?;
            let resid = dt_psi + dr_psi + 0.5 * a.eval(x) * psi;
            worst = worst.max(resid.abs());
        }
    }
    Ok(worst)
}

/// Remainder scaling study: for each h, solve the wave problem with the
/// probe Dirichlet datum and compare against the WKB ansatz in the
/// interior.
#[derive(Debug, Clone)]
pub struct RemainderReport {
    /// (h, max over sampled times of the interior L2 norm of u - ansatz).
    pub per_h: Vec<(f64, f64)>,
    /// Least-squares exponent of |r_h| against h.
    pub fitted_order: f64,
    /// Successive norm ratios.
    pub ratios: Vec<f64>,
}

pub fn remainder_norm(
    metric: &MetricField,
    a: &CoefficientField,
    q: &CoefficientField,
    grid: &SpaceTimeGrid,
    spec_base: &ProbeSpec,
    h_sweep: &[f64],
) -> Result<RemainderReport> {
    let solver = WaveSolver::new(metric, a, q, grid)?;
    // Polar map over the interior nodes, shared across the sweep.
    let n = grid.n;
    let interior: Vec<Vec2> = solver
        .interior_nodes()
        .iter()
        .map(|&k| {
            let k = k as usize;
            [grid.node_x(k / n), grid.node_x(k % n)]
        })
        .collect();
    let spec0 = ProbeSpec {
        h: h_sweep[0],
        ..spec_base.clone()
    };
    let frame = ProbeFrame::build(metric, &spec0, &interior)?;
    let tables = frame.tables(a);

    let mut per_h = Vec::new();
    for &h in h_sweep {
        let spec = ProbeSpec {
            h,
            ..spec_base.clone()
        };
        // Dirichlet datum: the ansatz trace with the probe's own weight.
        let datum = probe_trace(metric, grid, &spec, &spec.weight.clone(), a, 1.0)?;
        let mut max_norm: f64 = 0.0;
        let stride = (grid.n_steps / 48).max(1);
        solver.solve(&datum, None, |step, t, view| {
            if step % stride != 0 {
                return;
            }
            let mut acc = 0.0;
            for (i, &node) in solver.interior_nodes().iter().enumerate() {
                let k = node as usize;
                let mut ans = frame.ansatz_with_h(&tables[i], i, t, 1.0, h);
                // The probe weight multiplies the forward amplitude here.
                ans *= spec.weight.eval(frame.polar[i].eta);
                let x = view.node_point(k);
                let sd = metric.eval(x).map(|e| e.sqrt_det).unwrap_or(1.0);
                acc += (view.data[k] - ans).norm_sqr() * sd * grid.dx * grid.dx;
            }
            max_norm = max_norm.max(acc.sqrt());
        })?;
        per_h.push((h, max_norm));
    }
    let ratios: Vec<f64> = per_h
        .windows(2)
        .map(|w| w[1].1 / w[0].1.max(1e-300))
        .collect();
    // log-log least squares for the scaling exponent.
    let lg: Vec<(f64, f64)> = per_h
        .iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|&(h, r)| (h.ln(), r.ln()))
        .collect();
    let fitted_order = if lg.len() >= 2 {
        let n = lg.len() as f64;
        let sx: f64 = lg.iter().map(|p| p.0).sum();
        let sy: f64 = lg.iter().map(|p| p.1).sum();
        let sxx: f64 = lg.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = lg.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        0.0
    };
    Ok(RemainderReport {
        per_h,
        fitted_order,
        ratios,
    })
}
