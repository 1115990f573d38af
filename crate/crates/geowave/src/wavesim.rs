//! Damped wave initial-boundary-value solver and the discrete
//! Dirichlet-to-Neumann operator.
//!
//! Discretization: embedded Cartesian grid with a level-set (circle)
//! boundary, ghost-point Dirichlet enforcement by quadratic extrapolation
//! along the boundary normal, divergence-form Laplace-Beltrami with
//! face-centered coefficients, and leapfrog time stepping with the damping
//! term centered in time. Fields are complex throughout; the
//! geometric-optics probes carry an oscillatory phase.

use crate::csvio::fmt17;
use crate::error::{Error, Result};
use crate::manifold::{BoundaryId, CoefficientField, FieldShape, MetricField, Vec2};
use num_complex::Complex64;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

/// Space-time discretization of the inner disk M.
#[derive(Debug, Clone)]
pub struct SpaceTimeGrid {
    /// Nodes per axis.
    pub n: usize,
    /// Grid covers [-half, half]^2, slightly larger than the disk.
    pub half: f64,
    pub dx: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Time horizon T (length units; the wave speed is one).
    pub horizon: f64,
    /// CFL ratio actually used, in (0, 1).
    pub cfl: f64,
    /// Boundary trace samples (uniform in chart angle).
    pub n_boundary: usize,
}

impl SpaceTimeGrid {
    pub fn new(
        metric: &MetricField,
        n: usize,
        horizon: f64,
        cfl: f64,
        n_boundary: usize,
    ) -> Result<SpaceTimeGrid> {
        if !(cfl > 0.0 && cfl < 1.0) {
            return Err(Error::CflViolation(cfl));
        }
        if n < 32 {
            return Err(Error::GridTooCoarse {
                what: "wave grid",
                required: 32,
                actual: n,
            });
        }
        if horizon <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: horizon,
                reason: "must be positive",
            });
        }
        // Room for two ghost layers outside the disk.
        let r = metric.radius_m;
        let half = r / (1.0 - 7.0 / (n as f64 - 1.0));
        let dx = 2.0 * half / (n as f64 - 1.0);
        // Fastest signal speed over the grid.
        let mut v2max: f64 = 0.0;
        let probe = 33;
        for i in 0..probe {
            for j in 0..probe {
                let x = [
                    -r + 2.0 * r * i as f64 / (probe - 1) as f64,
                    -r + 2.0 * r * j as f64 / (probe - 1) as f64,
                ];
                if x[0].hypot(x[1]) <= r {
                    let ev = metric.eval(x)?;
                    v2max = v2max.max(ev.inv.max_eigenvalue());
                }
            }
        }
        let dt_max = cfl * dx / (v2max.sqrt() * std::f64::consts::SQRT_2);
        let n_steps = (horizon / dt_max).ceil() as usize;
        let dt = horizon / n_steps as f64;
        Ok(SpaceTimeGrid {
            n,
            half,
            dx,
            dt,
            n_steps,
            horizon,
            cfl,
            n_boundary,
        })
    }

    /// Check the probing horizon against the diameter of the extension:
    /// T > Diam_g(M1) + 2 eps so every singularity clears the domain.
    pub fn validate_horizon(&self, metric: &MetricField, eps: f64) -> Result<()> {
        let diam = estimate_diameter(metric)?;
        if self.horizon <= diam + 2.0 * eps {
            return Err(Error::HorizonTooShort {
                horizon: self.horizon,
                required: diam + 2.0 * eps,
            });
        }
        Ok(())
    }

    pub fn node_x(&self, i: usize) -> f64 {
        -self.half + i as f64 * self.dx
    }

    pub fn boundary_angle(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.n_boundary as f64
    }
}

/// Geodesic diameter of the extension disk, estimated over a boundary fan.
pub fn estimate_diameter(metric: &MetricField) -> Result<f64> {
    use crate::geodesics::{PhasePoint, Tracer, TracerConfig};
    let tracer = Tracer::new(metric, TracerConfig::default());
    let mut diam: f64 = 0.0;
    let n = 16;
    for i in 0..n {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        let y = metric.boundary_point(phi, BoundaryId::Outer);
        let frame = metric.fiber_frame(y, BoundaryId::Outer)?;
        for j in 0..8 {
            let beta = -1.2 + 2.4 * j as f64 / 7.0;
            let exit = tracer.exit(
                &PhasePoint {
                    x: y,
                    xi: frame.direction(beta),
                },
                BoundaryId::Outer,
            )?;
            diam = diam.max(exit.time);
        }
    }
    Ok(diam)
}

/// Complex-valued samples on the boundary-time cylinder.
#[derive(Debug, Clone)]
pub struct BoundarySignal {
    pub n_boundary: usize,
    pub n_t: usize,
    pub dt: f64,
    /// Row-major in time: `values[t * n_boundary + k]`.
    pub values: Vec<Complex64>,
    /// g-arclength quadrature weight per boundary sample.
    pub arc_weights: Vec<f64>,
}

impl BoundarySignal {
    pub fn zeros(grid: &SpaceTimeGrid, metric: &MetricField) -> Result<BoundarySignal> {
        let arc_weights = arc_weights(grid, metric)?;
        Ok(BoundarySignal {
            n_boundary: grid.n_boundary,
            n_t: grid.n_steps + 1,
            dt: grid.dt,
            values: vec![Complex64::new(0.0, 0.0); (grid.n_steps + 1) * grid.n_boundary],
            arc_weights,
        })
    }

    /// Sample a space-time closure on the trace grid. Enforces the
    /// compatibility condition f(., 0) = 0.
    pub fn from_fn(
        grid: &SpaceTimeGrid,
        metric: &MetricField,
        f: impl Fn(Vec2, f64) -> Complex64,
    ) -> Result<BoundarySignal> {
        let mut sig = BoundarySignal::zeros(grid, metric)?;
        for t_idx in 0..sig.n_t {
            let t = t_idx as f64 * grid.dt;
            for k in 0..grid.n_boundary {
                let x = metric.boundary_point(grid.boundary_angle(k), BoundaryId::Inner);
                sig.values[t_idx * grid.n_boundary + k] = f(x, t);
            }
        }
        let t0_max = sig.values[..grid.n_boundary]
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        if t0_max > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "dirichlet",
                value: t0_max,
                reason: "boundary datum must vanish at t = 0",
            });
        }
        Ok(sig)
    }

    pub fn at(&self, t_idx: usize, k: usize) -> Complex64 {
        self.values[t_idx * self.n_boundary + k]
    }

    /// Periodic cubic (4-point Lagrange) interpolation in the boundary
    /// angle at a time row; oscillatory probe data needs better than
    /// linear accuracy here.
    pub fn interp_angle(&self, t_idx: usize, phi: f64) -> Complex64 {
        let tau = std::f64::consts::TAU;
        let nb = self.n_boundary;
        let s = (phi.rem_euclid(tau)) / tau * nb as f64;
        let k0 = s.floor() as usize % nb;
        let w = s - s.floor();
        let km = (k0 + nb - 1) % nb;
        let k1 = (k0 + 1) % nb;
        let k2 = (k0 + 2) % nb;
        let wm = -w * (w - 1.0) * (w - 2.0) / 6.0;
        let w0 = (w + 1.0) * (w - 1.0) * (w - 2.0) / 2.0;
        let w1 = -(w + 1.0) * w * (w - 2.0) / 2.0;
        let w2 = (w + 1.0) * w * (w - 1.0) / 6.0;
        self.at(t_idx, km) * wm
            + self.at(t_idx, k0) * w0
            + self.at(t_idx, k1) * w1
            + self.at(t_idx, k2) * w2
    }

    /// L2 norm over the boundary cylinder (trapezoid in time, g-arclength
    /// in space).
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for t_idx in 0..self.n_t {
            let wt = if t_idx == 0 || t_idx == self.n_t - 1 {
                0.5
            } else {
                1.0
            };
            for k in 0..self.n_boundary {
                acc += wt * self.dt * self.arc_weights[k] * self.at(t_idx, k).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// H1 norm: the L2 norm plus time and tangential derivative terms.
    pub fn h1_norm(&self) -> f64 {
        h1_inner(self, self).re.max(0.0).sqrt()
    }

    /// Space-time pairing integral of conj(self) * other over the cylinder.
    pub fn pair(&self, other: &BoundarySignal) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for t_idx in 0..self.n_t.min(other.n_t) {
            let wt = if t_idx == 0 || t_idx == self.n_t - 1 {
                0.5
            } else {
                1.0
            };
            for k in 0..self.n_boundary {
                acc += self.at(t_idx, k).conj()
                    * other.at(t_idx, k)
                    * (wt * self.dt * self.arc_weights[k]);
            }
        }
        acc
    }

    pub fn linear_combination(
        a: Complex64,
        x: &BoundarySignal,
        b: Complex64,
        y: &BoundarySignal,
    ) -> BoundarySignal {
        let mut out = x.clone();
        for (o, (&u, &v)) in out.values.iter_mut().zip(x.values.iter().zip(&y.values)) {
            *o = a * u + b * v;
        }
        out
    }

    fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.n_boundary.to_le_bytes());
        h.update(self.n_t.to_le_bytes());
        h.update(self.dt.to_bits().to_le_bytes());
        for v in &self.values {
            h.update(v.re.to_bits().to_le_bytes());
            h.update(v.im.to_bits().to_le_bytes());
        }
        hex_string(&h.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn arc_weights(grid: &SpaceTimeGrid, metric: &MetricField) -> Result<Vec<f64>> {
    let mut w = Vec::with_capacity(grid.n_boundary);
    let dphi = std::f64::consts::TAU / grid.n_boundary as f64;
    for k in 0..grid.n_boundary {
        let phi = grid.boundary_angle(k);
        let x = metric.boundary_point(phi, BoundaryId::Inner);
        let ev = metric.eval(x)?;
        let tangent = [-x[1], x[0]];
        w.push(ev.g.norm(tangent) * dphi);
    }
    Ok(w)
}

// ----------------------------------------------------------------------------
// Grid geometry
// ----------------------------------------------------------------------------

#[derive(Clone)]
struct GhostData {
    idx: u32,
    /// Chart angle of the radial projection onto the boundary.
    phi: f64,
    /// Lagrange weights of (boundary value, depth-1 sample, depth-2 sample)
    /// for extrapolation to the ghost depth.
    w: [f64; 3],
    s1: [(u32, f64); 9],
    s2: [(u32, f64); 9],
}

#[derive(Clone)]
struct TraceStencil {
    /// One-sided step along the g-conormal.
    tau: f64,
    s1: [(u32, f64); 9],
    s2: [(u32, f64); 9],
    s3: [(u32, f64); 9],
}

pub struct Geometry {
    interior: Vec<u32>,
    is_interior: Vec<bool>,
    ghosts: Vec<GhostData>,
    traces: Vec<TraceStencil>,
    /// 1/sqrt(det g) at nodes.
    inv_sqrtg: Vec<f64>,
    /// Face coefficients sqrt(g) g^{ab}: east faces (i+1/2, j) and north
    /// faces (i, j+1/2).
    fe_11: Vec<f64>,
    fe_12: Vec<f64>,
    fn_22: Vec<f64>,
    fn_12: Vec<f64>,
    a_val: Vec<f64>,
    q_val: Vec<f64>,
    has_cross: bool,
}

/// Damped wave solver bound to a metric, coefficients and a grid.
pub struct WaveSolver {
    pub metric: MetricField,
    pub a: CoefficientField,
    pub q: CoefficientField,
    pub grid: SpaceTimeGrid,
    geom: Geometry,
}

impl WaveSolver {
    pub fn new(
        metric: &MetricField,
        a: &CoefficientField,
        q: &CoefficientField,
        grid: &SpaceTimeGrid,
    ) -> Result<WaveSolver> {
        let geom = build_geometry(metric, a, q, grid)?;
        Ok(WaveSolver {
            metric: metric.clone(),
            a: a.clone(),
            q: q.clone(),
            grid: grid.clone(),
            geom,
        })
    }

    /// Solve with Dirichlet data and an optional interior source; the
    /// observer sees every time level (step index, time, filled field).
    pub fn solve(
        &self,
        dirichlet: &BoundarySignal,
        source: Option<&dyn Fn(Vec2, f64) -> Complex64>,
        mut observer: impl FnMut(usize, f64, &FieldView),
    ) -> Result<BoundarySignal> {
        if dirichlet.n_boundary != self.grid.n_boundary || dirichlet.n_t != self.grid.n_steps + 1 {
            return Err(Error::GridTooCoarse {
                what: "dirichlet signal shape",
                required: self.grid.n_boundary,
                actual: dirichlet.n_boundary,
            });
        }
        self.run(dirichlet, source, None, &mut observer)
    }

    /// Variant entry point: homogeneous Dirichlet run from initial data
    /// (u0, v0); used by the discrete energy-conservation check.
    pub fn solve_from_initial(
        &self,
        u0: impl Fn(Vec2) -> Complex64,
        v0: impl Fn(Vec2) -> Complex64,
        mut observer: impl FnMut(usize, f64, &FieldView),
    ) -> Result<BoundarySignal> {
        let zero = BoundarySignal::zeros(&self.grid, &self.metric)?;
        let n = self.grid.n;
        let size = n * n;
        let mut init_u = vec![Complex64::default(); size];
        let mut init_v = vec![Complex64::default(); size];
        for &idx in &self.geom.interior {
            let k = idx as usize;
            let x = [self.grid.node_x(k / n), self.grid.node_x(k % n)];
            init_u[k] = u0(x);
            init_v[k] = v0(x);
        }
        self.run(&zero, None, Some((init_u, init_v)), &mut observer)
    }

    fn run(
        &self,
        dirichlet: &BoundarySignal,
        source: Option<&dyn Fn(Vec2, f64) -> Complex64>,
        initial: Option<(Vec<Complex64>, Vec<Complex64>)>,
        observer: &mut dyn FnMut(usize, f64, &FieldView),
    ) -> Result<BoundarySignal> {
        let n = self.grid.n;
        let dt = self.grid.dt;
        let dt2 = dt * dt;
        let size = n * n;
        let mut u_old = vec![Complex64::default(); size];
        let mut u = vec![Complex64::default(); size];
        let mut u_new = vec![Complex64::default(); size];
        let mut lap = vec![Complex64::default(); size];

        let mut neumann = BoundarySignal::zeros(&self.grid, &self.metric)?;

        // Start-up. With vanishing data everything stays zero; with initial
        // data use the Taylor start u1 = u0 + dt v0 + dt^2/2 (Lap u0 - a v0 - q u0).
        if let Some((u0, v0)) = initial {
            u_old.copy_from_slice(&u0);
            self.fill_ghosts(&mut u_old, dirichlet, 0);
            self.laplacian(&u_old, &mut lap);
            for &idx in &self.geom.interior {
                let k = idx as usize;
                u[k] = u_old[k]
                    + dt * v0[k]
                    + 0.5
                        * dt2
                        * (lap[k] - self.geom.a_val[k] * v0[k] - self.geom.q_val[k] * u_old[k]);
            }
        }
        self.fill_ghosts(&mut u_old, dirichlet, 0);
        self.fill_ghosts(&mut u, dirichlet, 1.min(self.grid.n_steps));

        {
            let view = FieldView {
                grid: &self.grid,
                geom: &self.geom,
                data: &u_old,
            };
            observer(0, 0.0, &view);
            self.record_trace(&u_old, dirichlet, 0, &mut neumann);
        }
        if self.grid.n_steps >= 1 {
            let view = FieldView {
                grid: &self.grid,
                geom: &self.geom,
                data: &u,
            };
            observer(1, dt, &view);
            self.record_trace(&u, dirichlet, 1, &mut neumann);
        }

        let mut input_scale: f64 = dirichlet
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        input_scale = input_scale.max(1.0);

        for step in 2..=self.grid.n_steps {
            let t_prev = (step - 1) as f64 * dt;
            self.laplacian(&u, &mut lap);
            for &idx in &self.geom.interior {
                let k = idx as usize;
                let gamma = 0.5 * dt * self.geom.a_val[k];
                let mut rhs = 2.0 * u[k] - (1.0 - gamma) * u_old[k]
                    + dt2 * (lap[k] - self.geom.q_val[k] * u[k]);
                if let Some(src) = source {
                    let x = [self.grid.node_x(k / n), self.grid.node_x(k % n)];
                    rhs += dt2 * src(x, t_prev);
                }
                u_new[k] = rhs / (1.0 + gamma);
            }
            self.fill_ghosts(&mut u_new, dirichlet, step);
            std::mem::swap(&mut u_old, &mut u);
            std::mem::swap(&mut u, &mut u_new);

            if step % 64 == 0 {
                let m = u.iter().map(|v| v.norm()).fold(0.0, f64::max);
                if !m.is_finite() || m > 1e9 * input_scale {
                    return Err(Error::Instability { step, norm: m });
                }
            }
            let view = FieldView {
                grid: &self.grid,
                geom: &self.geom,
                data: &u,
            };
            observer(step, step as f64 * dt, &view);
            self.record_trace(&u, dirichlet, step, &mut neumann);
        }
        Ok(neumann)
    }

    fn laplacian(&self, u: &[Complex64], out: &mut [Complex64]) {
        let n = self.grid.n;
        let idx2 = 1.0 / (self.grid.dx * self.grid.dx);
        let g = &self.geom;
        for &node in &g.interior {
            let k = node as usize;
            let e = k + n;
            let w = k - n;
            let nn = k + 1;
            let s = k - 1;
            // Divergence-form fluxes with face-centered coefficients.
            let mut acc = g.fe_11[k] * (u[e] - u[k]) - g.fe_11[w] * (u[k] - u[w])
                + g.fn_22[k] * (u[nn] - u[k])
                - g.fn_22[s] * (u[k] - u[s]);
            if g.has_cross {
                // Cross-derivative terms averaged to faces.
                let dy_e = (u[e + 1] + u[k + 1] - u[e - 1] - u[k - 1]) * 0.25;
                let dy_w = (u[w + 1] + u[k + 1] - u[w - 1] - u[k - 1]) * 0.25;
                let dx_n = (u[e + 1] + u[e] - u[w + 1] - u[w]) * 0.25;
                let dx_s = (u[e - 1] + u[e] - u[w - 1] - u[w]) * 0.25;
                acc += g.fe_12[k] * dy_e - g.fe_12[w] * dy_w + g.fn_12[k] * dx_n
                    - g.fn_12[s] * dx_s;
            }
            out[k] = acc * (idx2 * g.inv_sqrtg[k]);
        }
    }

    fn fill_ghosts(&self, u: &mut [Complex64], dirichlet: &BoundarySignal, t_idx: usize) {
        for gh in &self.geom.ghosts {
            let fb = dirichlet.interp_angle(t_idx.min(dirichlet.n_t - 1), gh.phi);
            let mut u1 = Complex64::default();
            for &(idx, w) in &gh.s1 {
                u1 += u[idx as usize] * w;
            }
            let mut u2 = Complex64::default();
            for &(idx, w) in &gh.s2 {
                u2 += u[idx as usize] * w;
            }
            u[gh.idx as usize] = fb * gh.w[0] + u1 * gh.w[1] + u2 * gh.w[2];
        }
    }

    fn record_trace(
        &self,
        u: &[Complex64],
        dirichlet: &BoundarySignal,
        t_idx: usize,
        neumann: &mut BoundarySignal,
    ) {
        for (k, st) in self.geom.traces.iter().enumerate() {
            let fb = dirichlet.at(t_idx, k);
            let interp = |s: &[(u32, f64); 9]| -> Complex64 {
                s.iter().map(|&(idx, w)| u[idx as usize] * w).sum()
            };
            let (u1, u2, u3) = (interp(&st.s1), interp(&st.s2), interp(&st.s3));
            // Third-order one-sided difference through the boundary value.
            let d = (11.0 * fb - 18.0 * u1 + 9.0 * u2 - 2.0 * u3) / (6.0 * st.tau);
            neumann.values[t_idx * self.grid.n_boundary + k] = d;
        }
    }

    /// Discrete energy of a state triple (the time derivative is centered).
    pub fn energy(&self, u_prev: &[Complex64], u_curr: &[Complex64], u_next: &[Complex64]) -> f64 {
        let n = self.grid.n;
        let dx = self.grid.dx;
        let two_dt = 2.0 * self.grid.dt;
        let mut acc = 0.0;
        for &node in &self.geom.interior {
            let k = node as usize;
            let ut = (u_next[k] - u_prev[k]) / two_dt;
            let gx = (u_curr[k + n] - u_curr[k - n]) / (2.0 * dx);
            let gy = (u_curr[k + 1] - u_curr[k - 1]) / (2.0 * dx);
            let x = [self.grid.node_x(k / n), self.grid.node_x(k % n)];
            let ev = self.metric.eval(x).expect("interior node in chart");
            let grad2 = ev.inv.xx * gx.norm_sqr()
                + 2.0 * ev.inv.xy * (gx * gy.conj()).re
                + ev.inv.yy * gy.norm_sqr();
            acc += 0.5 * (ut.norm_sqr() + grad2) * ev.sqrt_det * dx * dx;
        }
        acc
    }

    /// Staggered leapfrog energy of two consecutive levels:
    /// E = 1/2 |(u+ - u)/dt|^2 - 1/2 <(L - q) u+, u>, the quantity the
    /// interior scheme conserves exactly when the operator is symmetric.
    pub fn energy_staggered(&self, u_curr: &[Complex64], u_next: &[Complex64]) -> f64 {
        let n = self.grid.n;
        let dt = self.grid.dt;
        let mut lap = vec![Complex64::default(); u_next.len()];
        self.laplacian(u_next, &mut lap);
        let mut acc = 0.0;
        for &node in &self.geom.interior {
            let k = node as usize;
            let x = [self.grid.node_x(k / n), self.grid.node_x(k % n)];
            let ev = self.metric.eval(x).expect("interior node in chart");
            let w = ev.sqrt_det * self.grid.dx * self.grid.dx;
            let dudt = (u_next[k] - u_curr[k]) / dt;
            let op = lap[k] - self.geom.q_val[k] * u_next[k];
            acc += w * (0.5 * dudt.norm_sqr() - 0.5 * (op * u_curr[k].conj()).re);
        }
        acc
    }

    pub fn interior_l2(&self, u: &[Complex64]) -> f64 {
        let n = self.grid.n;
        let dx = self.grid.dx;
        let mut acc = 0.0;
        for &node in &self.geom.interior {
            let k = node as usize;
            let x = [self.grid.node_x(k / n), self.grid.node_x(k % n)];
            let sd = self.metric.eval(x).map(|e| e.sqrt_det).unwrap_or(1.0);
            acc += u[k].norm_sqr() * sd * dx * dx;
        }
        acc.sqrt()
    }

    pub fn interior_nodes(&self) -> &[u32] {
        &self.geom.interior
    }
}

/// Read-only view of a time level with bilinear evaluation.
pub struct FieldView<'a> {
    grid: &'a SpaceTimeGrid,
    geom: &'a Geometry,
    pub data: &'a [Complex64],
}

impl FieldView<'_> {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn node_point(&self, k: usize) -> Vec2 {
        let n = self.grid.n;
        [self.grid.node_x(k / n), self.grid.node_x(k % n)]
    }

    pub fn is_interior(&self, k: usize) -> bool {
        self.geom.is_interior[k]
    }

    /// Bilinear interpolation (uses ghost values near the boundary).
    pub fn interp(&self, x: Vec2) -> Complex64 {
        let n = self.grid.n;
        let fx = (x[0] + self.grid.half) / self.grid.dx;
        let fy = (x[1] + self.grid.half) / self.grid.dx;
        let i0 = (fx.floor() as isize).clamp(0, n as isize - 2) as usize;
        let j0 = (fy.floor() as isize).clamp(0, n as isize - 2) as usize;
        let tx = (fx - i0 as f64).clamp(0.0, 1.0);
        let ty = (fy - j0 as f64).clamp(0.0, 1.0);
        let at = |i: usize, j: usize| self.data[i * n + j];
        at(i0, j0) * ((1.0 - tx) * (1.0 - ty))
            + at(i0 + 1, j0) * (tx * (1.0 - ty))
            + at(i0, j0 + 1) * ((1.0 - tx) * ty)
            + at(i0 + 1, j0 + 1) * (tx * ty)
    }
}

fn build_geometry(
    metric: &MetricField,
    a: &CoefficientField,
    q: &CoefficientField,
    grid: &SpaceTimeGrid,
) -> Result<Geometry> {
    let n = grid.n;
    let r = metric.radius_m;
    let size = n * n;
    let mut is_interior = vec![false; size];
    for i in 0..n {
        for j in 0..n {
            let x = [grid.node_x(i), grid.node_x(j)];
            if x[0].hypot(x[1]) < r {
                is_interior[i * n + j] = true;
            }
        }
    }
    // Interior nodes adjacent to the edge of the array would break stencils.
    for i in 0..n {
        for j in 0..n {
            if (i == 0 || j == 0 || i == n - 1 || j == n - 1) && is_interior[i * n + j] {
                return Err(Error::GridTooCoarse {
                    what: "disk does not fit inside the grid with ghost room",
                    required: n + 2,
                    actual: n,
                });
            }
        }
    }
    let interior: Vec<u32> = (0..size as u32)
        .filter(|&k| is_interior[k as usize])
        .collect();

    // Ghosts: non-interior nodes touched by an interior 9-point stencil.
    let mut is_ghost = vec![false; size];
    for &k in &interior {
        let k = k as usize;
        let (i, j) = (k / n, k % n);
        for di in -1i32..=1 {
            for dj in -1i32..=1 {
                let ii = (i as i32 + di) as usize;
                let jj = (j as i32 + dj) as usize;
                let kk = ii * n + jj;
                if !is_interior[kk] {
                    is_ghost[kk] = true;
                }
            }
        }
    }

    // Biquadratic (3x3) interpolation anchored at the nearest node; every
    // referenced node must be strictly interior.
    let quad9 = |p: Vec2| -> Result<[(u32, f64); 9]> {
        let fx = (p[0] + grid.half) / grid.dx;
        let fy = (p[1] + grid.half) / grid.dx;
        let ic = fx.round() as isize;
        let jc = fy.round() as isize;
        let tx = fx - ic as f64;
        let ty = fy - jc as f64;
        let wx = [0.5 * tx * (tx - 1.0), 1.0 - tx * tx, 0.5 * tx * (tx + 1.0)];
        let wy = [0.5 * ty * (ty - 1.0), 1.0 - ty * ty, 0.5 * ty * (ty + 1.0)];
        let mut out = [(0u32, 0.0f64); 9];
        let mut m = 0;
        for di in -1isize..=1 {
            for dj in -1isize..=1 {
                let i = ic + di;
                let j = jc + dj;
                if i < 0 || j < 0 || i as usize >= n || j as usize >= n {
                    return Err(Error::GridTooCoarse {
                        what: "interpolation stencil outside grid",
                        required: n + 2,
                        actual: n,
                    });
                }
                let kk = (i as usize) * n + j as usize;
                if !is_interior[kk] {
                    return Err(Error::GridTooCoarse {
                        what: "interpolation stencil touches non-interior nodes",
                        required: n + 2,
                        actual: n,
                    });
                }
                out[m] = (kk as u32, wx[(di + 1) as usize] * wy[(dj + 1) as usize]);
                m += 1;
            }
        }
        Ok(out)
    };

    // Normal-line sample depth; deep enough that the 3x3 cells stay
    // strictly interior next to the curved boundary.
    let s_depth = 2.2 * grid.dx;
    let mut ghosts = Vec::new();
    for k in 0..size {
        if !is_ghost[k] {
            continue;
        }
        let (i, j) = (k / n, k % n);
        let x = [grid.node_x(i), grid.node_x(j)];
        let rad = x[0].hypot(x[1]);
        let d = rad - r;
        let nh = [x[0] / rad, x[1] / rad];
        let b = [r * nh[0], r * nh[1]];
        let a1 = [b[0] - s_depth * nh[0], b[1] - s_depth * nh[1]];
        let a2 = [b[0] - 2.0 * s_depth * nh[0], b[1] - 2.0 * s_depth * nh[1]];
        let s1 = quad9(a1)?;
        let s2 = quad9(a2)?;
        let s = s_depth;
        let w0 = (d + s) * (d + 2.0 * s) / (2.0 * s * s);
        let w1 = -d * (d + 2.0 * s) / (s * s);
        let w2 = d * (d + s) / (2.0 * s * s);
        ghosts.push(GhostData {
            idx: k as u32,
            phi: x[1].atan2(x[0]),
            w: [w0, w1, w2],
            s1,
            s2,
        });
    }

    // Neumann trace stencils along the g-conormal direction, anchored at
    // the known boundary value.
    let tau = 2.2 * grid.dx;
    let mut traces = Vec::with_capacity(grid.n_boundary);
    for k in 0..grid.n_boundary {
        let phi = grid.boundary_angle(k);
        let b = metric.boundary_point(phi, BoundaryId::Inner);
        let nu = metric.outward_normal(b, BoundaryId::Inner)?;
        let p1 = [b[0] - tau * nu[0], b[1] - tau * nu[1]];
        let p2 = [b[0] - 2.0 * tau * nu[0], b[1] - 2.0 * tau * nu[1]];
        let p3 = [b[0] - 3.0 * tau * nu[0], b[1] - 3.0 * tau * nu[1]];
        traces.push(TraceStencil {
            tau,
            s1: quad9(p1)?,
            s2: quad9(p2)?,
            s3: quad9(p3)?,
        });
    }

    // Node and face coefficient arrays.
    let mut inv_sqrtg = vec![0.0; size];
    let mut a_val = vec![0.0; size];
    let mut q_val = vec![0.0; size];
    let mut fe_11 = vec![0.0; size];
    let mut fe_12 = vec![0.0; size];
    let mut fn_22 = vec![0.0; size];
    let mut fn_12 = vec![0.0; size];
    let mut has_cross = false;
    for k in 0..size {
        let (i, j) = (k / n, k % n);
        let x = [grid.node_x(i), grid.node_x(j)];
        let active = is_interior[k] || is_ghost[k];
        if active {
            let ev = metric.eval(x)?;
            inv_sqrtg[k] = 1.0 / ev.sqrt_det;
            a_val[k] = a.eval(x);
            q_val[k] = q.eval(x);
        }
        // Faces are referenced by interior stencils only; fill a band
        // around the disk.
        if x[0].hypot(x[1]) < r + 4.0 * grid.dx && i + 1 < n && j + 1 < n {
            let xe = [x[0] + 0.5 * grid.dx, x[1]];
            let xn = [x[0], x[1] + 0.5 * grid.dx];
            if metric.chart.contains(xe) {
                let ev = metric.eval(xe)?;
                fe_11[k] = ev.sqrt_det * ev.inv.xx;
                fe_12[k] = ev.sqrt_det * ev.inv.xy;
                if ev.inv.xy.abs() > 1e-14 {
                    has_cross = true;
                }
            }
            if metric.chart.contains(xn) {
                let ev = metric.eval(xn)?;
                fn_22[k] = ev.sqrt_det * ev.inv.yy;
                fn_12[k] = ev.sqrt_det * ev.inv.xy;
                if ev.inv.xy.abs() > 1e-14 {
                    has_cross = true;
                }
            }
        }
    }

    Ok(Geometry {
        interior,
        is_interior,
        ghosts,
        traces,
        inv_sqrtg,
        fe_11,
        fe_12,
        fn_22,
        fn_12,
        a_val,
        q_val,
        has_cross,
    })
}

// ----------------------------------------------------------------------------
// Dirichlet-to-Neumann operator
// ----------------------------------------------------------------------------

/// Discrete DtN map for a coefficient pair, with a content-addressed
/// response cache (in memory, optionally persisted to a directory).
pub struct DtnOperator {
    pub solver: WaveSolver,
    cache: Mutex<HashMap<String, Arc<BoundarySignal>>>,
    pub disk_cache: Option<PathBuf>,
    base_key: String,
}

impl DtnOperator {
    pub fn new(
        metric: &MetricField,
        a: &CoefficientField,
        q: &CoefficientField,
        grid: &SpaceTimeGrid,
        disk_cache: Option<PathBuf>,
    ) -> Result<DtnOperator> {
        let solver = WaveSolver::new(metric, a, q, grid)?;
        let mut h = Sha256::new();
        h.update(metric_signature(metric).as_bytes());
        h.update(field_signature(&a.shape).as_bytes());
        h.update(field_signature(&q.shape).as_bytes());
        h.update(
            format!(
                "grid:{}:{}:{}:{}:{}",
                grid.n,
                fmt17(grid.dt),
                grid.n_steps,
                grid.n_boundary,
                fmt17(grid.half)
            )
            .as_bytes(),
        );
        let base_key = hex_string(&h.finalize());
        Ok(DtnOperator {
            solver,
            cache: Mutex::new(HashMap::new()),
            disk_cache,
            base_key,
        })
    }

    /// Content key of a response: operator parameters plus the input signal.
    pub fn response_key(&self, f: &BoundarySignal) -> String {
        let mut h = Sha256::new();
        h.update(self.base_key.as_bytes());
        h.update(f.content_hash().as_bytes());
        hex_string(&h.finalize())
    }

    /// Apply the DtN map: solve the forward problem and return the conormal
    /// Neumann trace. Responses are cached by content.
    pub fn apply(&self, f: &BoundarySignal) -> Result<Arc<BoundarySignal>> {
        let key = self.response_key(f);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        if let Some(dir) = &self.disk_cache {
            let path = dir.join(format!("{key}.csv"));
            if path.exists() {
                let sig = read_signal_csv(&path, f)?;
                let arc = Arc::new(sig);
                self.cache.lock().unwrap().insert(key, arc.clone());
                return Ok(arc);
            }
        }
        let neumann = self.solver.solve(f, None, |_, _, _| {})?;
        let arc = Arc::new(neumann);
        if let Some(dir) = &self.disk_cache {
            std::fs::create_dir_all(dir)?;
            write_signal_csv(&dir.join(format!("{key}.csv")), &arc)?;
        }
        self.cache.lock().unwrap().insert(key, arc.clone());
        Ok(arc)
    }

    pub fn cached_responses(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

pub fn metric_signature(metric: &MetricField) -> String {
    use crate::manifold::{ConformalProfile, MetricFamily};
    let fam = match &metric.family {
        MetricFamily::Euclidean => "euclidean".to_string(),
        MetricFamily::Conformal(ConformalProfile::SpherePatch) => "sphere".to_string(),
        MetricFamily::Conformal(ConformalProfile::HyperbolicPatch) => "hyperbolic".to_string(),
        MetricFamily::Conformal(ConformalProfile::Bump { amp, sigma, center }) => format!(
            "cbump:{}:{}:{}:{}",
            fmt17(*amp),
            fmt17(*sigma),
            fmt17(center[0]),
            fmt17(center[1])
        ),
        MetricFamily::Conformal(ConformalProfile::Poly(p)) => {
            format!("cpoly:{}", poly_signature(p))
        }
        MetricFamily::PolyPerturb { p11, p12, p22 } => format!(
            "ppert:{}:{}:{}",
            poly_signature(p11),
            poly_signature(p12),
            poly_signature(p22)
        ),
    };
    format!(
        "metric:{}:rm={}:r1={}",
        fam,
        fmt17(metric.radius_m),
        fmt17(metric.radius_m1)
    )
}

fn poly_signature(p: &crate::manifold::Poly2) -> String {
    p.terms
        .iter()
        .map(|(a, b, c)| format!("{a},{b},{}", fmt17(*c)))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn field_signature(shape: &FieldShape) -> String {
    match shape {
        FieldShape::Zero => "zero".to_string(),
        FieldShape::Constant(c) => format!("const:{}", fmt17(*c)),
        FieldShape::Bump { amp, center, radius } => format!(
            "bump:{}:{}:{}:{}",
            fmt17(*amp),
            fmt17(center[0]),
            fmt17(center[1]),
            fmt17(*radius)
        ),
        FieldShape::Gaussian { amp, center, sigma } => format!(
            "gauss:{}:{}:{}:{}",
            fmt17(*amp),
            fmt17(center[0]),
            fmt17(center[1]),
            fmt17(*sigma)
        ),
        FieldShape::BandLimited { support, modes } => {
            let m = modes
                .iter()
                .map(|m| format!("{},{},{},{}", m.kx, m.ky, fmt17(m.amp), fmt17(m.phase)))
                .collect::<Vec<_>>()
                .join(";");
            format!("band:{}:{}", fmt17(*support), m)
        }
        FieldShape::Scaled(factor, inner) => {
            format!("scale:{}:[{}]", fmt17(*factor), field_signature(inner))
        }
        FieldShape::Sum(parts) => format!(
            "sum[{}]",
            parts
                .iter()
                .map(field_signature)
                .collect::<Vec<_>>()
                .join("|")
        ),
    }
}

fn write_signal_csv(path: &std::path::Path, sig: &BoundarySignal) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "s,t,re,im")?;
    let mut arcs = vec![0.0; sig.n_boundary];
    let mut acc = 0.0;
    for k in 0..sig.n_boundary {
        arcs[k] = acc;
        acc += sig.arc_weights[k];
    }
    for t_idx in 0..sig.n_t {
        let t = t_idx as f64 * sig.dt;
        for k in 0..sig.n_boundary {
            let v = sig.at(t_idx, k);
            writeln!(
                out,
                "{},{},{},{}",
                fmt17(arcs[k]),
                fmt17(t),
                fmt17(v.re),
                fmt17(v.im)
            )?;
        }
    }
    Ok(())
}

fn read_signal_csv(path: &std::path::Path, like: &BoundarySignal) -> Result<BoundarySignal> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut values = Vec::with_capacity(like.values.len());
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        if ln == 0 {
            continue;
        }
        let mut parts = line.split(',');
        let _s = parts.next();
        let _t = parts.next();
        let re: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config {
                line: ln + 1,
                message: format!("bad cache row in {}", path.display()),
            })?;
        let im: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config {
                line: ln + 1,
                message: format!("bad cache row in {}", path.display()),
            })?;
        values.push(Complex64::new(re, im));
    }
    if values.len() != like.values.len() {
        return Err(Error::Config {
            line: 0,
            message: format!("cache shape mismatch in {}", path.display()),
        });
    }
    Ok(BoundarySignal {
        n_boundary: like.n_boundary,
        n_t: like.n_t,
        dt: like.dt,
        values,
        arc_weights: like.arc_weights.clone(),
    })
}

// ----------------------------------------------------------------------------
// Gap norm and energy residual
// ----------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GapNormEstimate {
    /// Refined lower bound of |Lambda1 - Lambda2| as an H1 -> L2 operator.
    pub value: f64,
    /// Best single-probe ratio.
    pub max_single: f64,
    pub per_probe: Vec<f64>,
}

/// Lower-bound estimate of the DtN gap norm on a probe set, refined by a
/// generalized Rayleigh quotient over the probe span.
pub fn dtn_gap_norm(
    op1: &DtnOperator,
    op2: &DtnOperator,
    probes: &[BoundarySignal],
) -> Result<GapNormEstimate> {
    if probes.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    let mut diffs = Vec::with_capacity(probes.len());
    let mut per_probe = Vec::with_capacity(probes.len());
    for f in probes {
        let d1 = op1.apply(f)?;
        let d2 = op2.apply(f)?;
        let diff = BoundarySignal::linear_combination(
            Complex64::new(1.0, 0.0),
            &d1,
            Complex64::new(-1.0, 0.0),
            &d2,
        );
        let ratio = diff.l2_norm() / f.h1_norm();
        per_probe.push(ratio);
        diffs.push(diff);
    }
    let max_single = per_probe.iter().cloned().fold(0.0, f64::max);

    // Rayleigh refinement on the span: G c = sigma^2 H c with G the Gram
    // matrix of the differences in L2 and H of the probes in H1.
    let k = probes.len();
    let mut g = vec![0.0; k * k];
    let mut h = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            g[i * k + j] = diffs[i].pair(&diffs[j]).re;
            h[i * k + j] = h1_inner(&probes[i], &probes[j]).re;
        }
    }
    for i in 0..k {
        h[i * k + i] += 1e-12 * h[i * k + i].abs().max(1e-30);
    }
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut sigma2 = 0.0;
    for _ in 0..200 {
        let gv = mat_vec(&g, &v, k);
        let w = solve_dense(&h, &gv, k)?;
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            break;
        }
        let v_new: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let num = dot(&mat_vec(&g, &v_new, k), &v_new);
        let den = dot(&mat_vec(&h, &v_new, k), &v_new);
        sigma2 = (num / den).max(0.0);
        v = v_new;
    }
    let value = sigma2.sqrt().max(max_single);
    Ok(GapNormEstimate {
        value,
        max_single,
        per_probe,
    })
}

fn h1_inner(a: &BoundarySignal, b: &BoundarySignal) -> Complex64 {
    // Polarization via the same quadrature as h1_norm.
    let nb = a.n_boundary;
    let mut acc = Complex64::default();
    for t_idx in 0..a.n_t {
        let wt = if t_idx == 0 || t_idx == a.n_t - 1 { 0.5 } else { 1.0 };
        for k in 0..nb {
            let term = |s: &BoundarySignal| -> (Complex64, Complex64, Complex64) {
                let v = s.at(t_idx, k);
                let dv_t = if t_idx == 0 {
                    (s.at(1, k) - v) / s.dt
                } else if t_idx == a.n_t - 1 {
                    (v - s.at(t_idx - 1, k)) / s.dt
                } else {
                    (s.at(t_idx + 1, k) - s.at(t_idx - 1, k)) / (2.0 * s.dt)
                };
                let kp = (k + 1) % nb;
                let km = (k + nb - 1) % nb;
                let ds = s.arc_weights[kp] + s.arc_weights[k];
                let dv_s = (s.at(t_idx, kp) - s.at(t_idx, km)) / ds;
                (v, dv_t, dv_s)
            };
            let (va, ta, sa) = term(a);
            let (vb, tb, sb) = term(b);
            acc += (va.conj() * vb + ta.conj() * tb + sa.conj() * sb)
                * (wt * a.dt * a.arc_weights[k]);
        }
    }
    acc
}

fn mat_vec(m: &[f64], v: &[f64], k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| (0..k).map(|j| m[i * k + j] * v[j]).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve_dense(m: &[f64], rhs: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut a = m.to_vec();
    let mut b = rhs.to_vec();
    for col in 0..k {
        let mut piv = col;
        for row in col + 1..k {
            if a[row * k + col].abs() > a[piv * k + col].abs() {
                piv = row;
            }
        }
        if a[piv * k + col].abs() < 1e-300 {
            return Err(Error::NonConvergence {
                what: "dense solve (singular Gram matrix)",
                residual: a[piv * k + col].abs(),
                iterations: col,
            });
        }
        if piv != col {
            for j in 0..k {
                a.swap(col * k + j, piv * k + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * k + col];
        for row in col + 1..k {
            let f = a[row * k + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..k {
                a[row * k + j] -= f * a[col * k + j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let mut s = b[row];
        for j in row + 1..k {
            s -= a[row * k + j] * x[j];
        }
        x[row] = s / a[row * k + row];
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct EnergyReport {
    /// max over time of (|du/dt| + |grad u|) / |F|_{L2(Q)}; zero when the
    /// source vanishes.
    pub max_ratio: f64,
    pub source_norm: f64,
}

/// Energy bound check for the homogeneous-Dirichlet problem with a source.
pub fn energy_residual(
    solver: &WaveSolver,
    source: &dyn Fn(Vec2, f64) -> Complex64,
) -> Result<EnergyReport> {
    let zero = BoundarySignal::zeros(&solver.grid, &solver.metric)?;
    // |F|_{L2(Q)} by grid quadrature.
    let n = solver.grid.n;
    let mut f_norm2 = 0.0;
    for step in 0..=solver.grid.n_steps {
        let t = step as f64 * solver.grid.dt;
        let wt = if step == 0 || step == solver.grid.n_steps {
            0.5
        } else {
            1.0
        };
        for &node in solver.interior_nodes() {
            let k = node as usize;
            let x = [solver.grid.node_x(k / n), solver.grid.node_x(k % n)];
            let sd = solver.metric.eval(x).map(|e| e.sqrt_det).unwrap_or(1.0);
            f_norm2 += wt
                * source(x, t).norm_sqr()
                * sd
                * solver.grid.dx
                * solver.grid.dx
                * solver.grid.dt;
        }
    }
    let f_norm = f_norm2.sqrt();
    if f_norm == 0.0 {
        return Ok(EnergyReport {
            max_ratio: 0.0,
            source_norm: 0.0,
        });
    }
    let mut prev: Option<Vec<Complex64>> = None;
    let mut prev2: Option<Vec<Complex64>> = None;
    let mut max_ratio: f64 = 0.0;
    solver.solve(&zero, Some(source), |_step, _t, view| {
        let data = view.data.to_vec();
        if let (Some(p2), Some(p1)) = (&prev2, &prev) {
            let e = solver.energy(p2, p1, &data);
            // |du/dt| + |grad u| <= 2 sqrt(E)
            max_ratio = max_ratio.max(2.0 * e.sqrt() / f_norm);
        }
        prev2 = prev.take();
        prev = Some(data);
    })?;
    Ok(EnergyReport {
        max_ratio,
        source_norm: f_norm,
    })
}
