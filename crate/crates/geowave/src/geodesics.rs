//! Geodesic integration: flow, exit times, exponential map, distance from
//! boundary points and the polar volume factor.
//!
//! All operations run a classical fixed-step RK4 integrator on the
//! first-order geodesic system; the scalar Jacobi equation is co-integrated
//! where the polar volume or conjugate points are needed.

use crate::error::{Error, Result};
use crate::manifold::{BoundaryId, FiberFrame, MetricField, Vec2};

/// Point of the sphere bundle (position plus direction). Directions are
/// g-unit for sphere-bundle semantics but the flow accepts any speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x: Vec2,
    pub xi: Vec2,
}

/// Element of the inward boundary sphere bundle of M1 with its fan
/// coordinates and measure weight.
#[derive(Debug, Clone)]
pub struct BoundaryRay {
    /// Entry point on the boundary.
    pub y: Vec2,
    /// Inward g-unit direction.
    pub xi: Vec2,
    /// Boundary arclength coordinate of `y`.
    pub s: f64,
    /// Entry angle relative to the inward normal, in (-pi/2, pi/2).
    pub beta: f64,
    /// Exit time of the maximal geodesic.
    pub ell_plus: f64,
    /// Measure weight |<xi, nu>| = cos(beta).
    pub mu: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TracerConfig {
    /// Integrator step; the default resolves a unit-disk diameter chord with
    /// 400 steps.
    pub step: f64,
    /// Threshold on |<exit velocity, normal>| below which an exit is flagged
    /// as grazing.
    pub graze_tol: f64,
}

impl Default for TracerConfig {
    fn default() -> Self {
        TracerConfig {
            step: 0.005,
            graze_tol: 0.05,
        }
    }
}

/// Result of following a ray to the boundary.
#[derive(Debug, Clone, Copy)]
pub struct ExitRecord {
    pub time: f64,
    pub exit: PhasePoint,
    /// Non-transversal exit: the boundary tangency caveat.
    pub grazing: bool,
}

/// Distance and gradient of the distance function from a source point.
#[derive(Debug, Clone, Copy)]
pub struct DistanceRecord {
    pub rho: f64,
    /// Gradient of the distance at the target: the unit tangent of the
    /// connecting geodesic (zero vector when target == source).
    pub grad: Vec2,
    /// Launch direction at the source.
    pub dir: Vec2,
}

/// Polar data of a target point relative to a source `y`: radius, fiber
/// frame angle of the launch direction, Jacobi field value (alpha = j^2) and
/// a sampled ray path for along-ray quadrature.
#[derive(Debug, Clone)]
pub struct PolarRecord {
    pub r: f64,
    pub eta: f64,
    pub jacobi: f64,
    pub djacobi: f64,
    /// Unit tangent of the connecting geodesic at the target.
    pub tangent: Vec2,
    /// (arc parameter, chart point) samples from source to target.
    pub path: Vec<(f64, Vec2)>,
}

/// Jacobi-field sweep along a maximal ray.
#[derive(Debug, Clone, Copy)]
pub struct JacobiSweep {
    pub exit_time: f64,
    /// Quadrature of t * K+ along the ray (one term of the k+ supremum).
    pub t_k_plus_integral: f64,
    /// First zero of the Jacobi field in (0, exit time], if any.
    pub first_jacobi_zero: Option<f64>,
}

#[derive(Clone, Copy)]
struct State {
    x: Vec2,
    xi: Vec2,
}

pub struct Tracer<'a> {
    pub metric: &'a MetricField,
    pub cfg: TracerConfig,
}

impl<'a> Tracer<'a> {
    pub fn new(metric: &'a MetricField, cfg: TracerConfig) -> Self {
        Tracer { metric, cfg }
    }

    fn deriv(&self, s: &State) -> Result<State> {
        let c = self.metric.christoffel(s.x)?;
        let mut acc = [0.0; 2];
        for k in 0..2 {
            let mut v = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    v += c.gamma[k][i][j] * s.xi[i] * s.xi[j];
                }
            }
            acc[k] = -v;
        }
        Ok(State { x: s.xi, xi: acc })
    }

    fn rk4_step(&self, s: &State, dt: f64) -> Result<State> {
        let k1 = self.deriv(s)?;
        let k2 = self.deriv(&advance(s, &k1, dt * 0.5))?;
        let k3 = self.deriv(&advance(s, &k2, dt * 0.5))?;
        let k4 = self.deriv(&advance(s, &k3, dt))?;
        Ok(State {
            x: [
                s.x[0] + dt / 6.0 * (k1.x[0] + 2.0 * k2.x[0] + 2.0 * k3.x[0] + k4.x[0]),
                s.x[1] + dt / 6.0 * (k1.x[1] + 2.0 * k2.x[1] + 2.0 * k3.x[1] + k4.x[1]),
            ],
            xi: [
                s.xi[0] + dt / 6.0 * (k1.xi[0] + 2.0 * k2.xi[0] + 2.0 * k3.xi[0] + k4.xi[0]),
                s.xi[1] + dt / 6.0 * (k1.xi[1] + 2.0 * k2.xi[1] + 2.0 * k3.xi[1] + k4.xi[1]),
            ],
        })
    }

    /// Geodesic flow phi_t.
    pub fn flow(&self, p: &PhasePoint, t: f64) -> Result<PhasePoint> {
        let mut s = State { x: p.x, xi: p.xi };
        let dir = t.signum();
        let mut remaining = t.abs();
        let step = self.cfg.step;
        let mut elapsed = 0.0;
        while remaining > 1e-14 {
            let dt = remaining.min(step);
            s = self
                .rk4_step(&s, dir * dt)
                .map_err(|_| Error::GeodesicLeftChart(elapsed))?;
            remaining -= dt;
            elapsed += dt;
        }
        Ok(PhasePoint { x: s.x, xi: s.xi })
    }

    /// Exit time of the forward maximal geodesic through the selected
    /// boundary, with the exit phase point.
    pub fn exit(&self, p: &PhasePoint, boundary: BoundaryId) -> Result<ExitRecord> {
        let b0 = self.metric.boundary_value(p.x, boundary);
        let r0 = p.x[0].hypot(p.x[1]);
        // Outward start on (or numerically over) the boundary exits at once.
        if b0 >= -1e-12 {
            let db_dt = if r0 > 1e-12 {
                (p.x[0] * p.xi[0] + p.x[1] * p.xi[1]) / r0
            } else {
                0.0
            };
            if db_dt >= 0.0 {
                let ev = self.metric.eval(p.x)?;
                let nu = self.metric.outward_normal(p.x, boundary)?;
                let trans = ev.g.dot(p.xi, nu).abs();
                return Ok(ExitRecord {
                    time: 0.0,
                    exit: *p,
                    grazing: trans < self.cfg.graze_tol,
                });
            }
        }
        let step = self.cfg.step;
        let mut s = State { x: p.x, xi: p.xi };
        let mut t = 0.0;
        let max_t = 64.0 * self.metric.radius_m1;
        loop {
            let next = self
                .rk4_step(&s, step)
                .map_err(|_| Error::GeodesicLeftChart(t))?;
            let t_next = t + step;
            if self.metric.boundary_value(next.x, boundary) > 0.0 {
                // Bisection within [t, t + step] from the inside state.
                let t_in = t;
                let s_in = s;
                let mut lo = 0.0;
                let mut hi = step;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let sm = self.rk4_step(&s_in, mid)?;
                    if self.metric.boundary_value(sm.x, boundary) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let mut tau = 0.5 * (lo + hi);
                // One Newton polish on b(gamma(tau)).
                let sm = self.rk4_step(&s_in, tau)?;
                let r = sm.x[0].hypot(sm.x[1]);
                let b = r - self.metric.boundary_radius(boundary);
                let db = (sm.x[0] * sm.xi[0] + sm.x[1] * sm.xi[1]) / r;
                if db.abs() > 1e-12 {
                    tau -= b / db;
                    tau = tau.clamp(0.0, step);
                }
                let sf = self.rk4_step(&s_in, tau)?;
                let ev = self.metric.eval(sf.x)?;
                let nu = self.metric.outward_normal(sf.x, boundary)?;
                let speed = ev.g.norm(sf.xi);
                let trans = ev.g.dot(sf.xi, nu).abs() / speed;
                return Ok(ExitRecord {
                    time: t_in + tau,
                    exit: PhasePoint { x: sf.x, xi: sf.xi },
                    grazing: trans < self.cfg.graze_tol,
                });
            }
            s = next;
            t = t_next;
            if t > max_t {
                return Err(Error::NonConvergence {
                    what: "exit_time",
                    residual: self.metric.boundary_value(s.x, boundary),
                    iterations: (t / step) as usize,
                });
            }
        }
    }

    /// Exponential map: exp_y(v) = gamma_{y, v/|v|}(|v|_g).
    pub fn exp_map(&self, y: Vec2, v: Vec2) -> Result<Vec2> {
        let ev = self.metric.eval(y)?;
        let speed = ev.g.norm(v);
        if speed < 1e-300 {
            return Ok(y);
        }
        let p = PhasePoint { x: y, xi: v };
        // The flow is homogeneous in the direction, so integrating the
        // velocity-v system for unit time traverses arc length |v|_g; step
        // count is chosen to keep the arc step near the configured one.
        let arc_steps = (speed / self.cfg.step).ceil().max(1.0);
        let dt = 1.0 / arc_steps;
        let mut s = State { x: p.x, xi: p.xi };
        for i in 0..arc_steps as usize {
            s = self
                .rk4_step(&s, dt)
                .map_err(|_| Error::GeodesicLeftChart(i as f64 * dt * speed))?;
        }
        Ok(s.x)
    }

    /// Geodesic distance from a source `y` (on the outer boundary) to `x`,
    /// with the distance gradient, by two-point shooting.
    pub fn distance(&self, y: Vec2, x: Vec2) -> Result<DistanceRecord> {
        if let crate::manifold::MetricFamily::Euclidean = self.metric.family {
            let d = [x[0] - y[0], x[1] - y[1]];
            let r = d[0].hypot(d[1]);
            if r < 1e-12 {
                return Ok(DistanceRecord {
                    rho: 0.0,
                    grad: [0.0, 0.0],
                    dir: [0.0, 0.0],
                });
            }
            let u = [d[0] / r, d[1] / r];
            return Ok(DistanceRecord {
                rho: r,
                grad: u,
                dir: u,
            });
        }
        let shot = self.shoot(y, x, 0)?;
        Ok(DistanceRecord {
            rho: shot.r,
            grad: shot.tangent,
            dir: shot.dir,
        })
    }

    /// Full polar record of `x` relative to `y`, including the Jacobi factor
    /// and a decimated ray path. `frame` fixes the fiber angle convention.
    pub fn shoot_polar(&self, y: Vec2, x: Vec2, frame: &FiberFrame) -> Result<PolarRecord> {
        if let crate::manifold::MetricFamily::Euclidean = self.metric.family {
            let d = [x[0] - y[0], x[1] - y[1]];
            let r = d[0].hypot(d[1]);
            if r < 1e-12 {
                return Err(Error::NonConvergence {
                    what: "shoot_polar",
                    residual: r,
                    iterations: 0,
                });
            }
            let u = [d[0] / r, d[1] / r];
            let n = ((r / self.cfg.step).ceil() as usize).max(2);
            let path = (0..=n)
                .map(|i| {
                    let s = r * i as f64 / n as f64;
                    (s, [y[0] + s * u[0], y[1] + s * u[1]])
                })
                .collect();
            return Ok(PolarRecord {
                r,
                eta: frame.angle_of(u),
                jacobi: r,
                djacobi: 1.0,
                tangent: u,
                path,
            });
        }
        let shot = self.shoot(y, x, 4)?;
        Ok(PolarRecord {
            r: shot.r,
            eta: frame.angle_of(shot.dir),
            jacobi: shot.jacobi,
            djacobi: shot.djacobi,
            tangent: shot.tangent,
            path: shot.path,
        })
    }

    /// The square of the polar volume element: alpha(r, xi) = j(r)^2 for the
    /// scalar Jacobi field along gamma_{y, xi}.
    pub fn polar_volume(&self, y: Vec2, r: f64, xi: Vec2) -> Result<f64> {
        if r <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "r",
                value: r,
                reason: "polar radius must be positive",
            });
        }
        let (j, _dj) = self.jacobi_to(y, xi, r)?;
        if j <= 0.0 {
            return Err(Error::NonConvergence {
                what: "polar_volume (conjugate point crossed)",
                residual: j,
                iterations: 0,
            });
        }
        Ok(j * j)
    }

    fn jacobi_to(&self, y: Vec2, xi: Vec2, r: f64) -> Result<(f64, f64)> {
        let mut s = State { x: y, xi };
        let mut j = 0.0;
        let mut dj = 1.0;
        let step = self.cfg.step;
        let mut remaining = r;
        while remaining > 1e-14 {
            let dt = remaining.min(step);
            let k = self.metric.gaussian_curvature(s.x)?;
            let s_next = self.rk4_step(&s, dt)?;
            let k_next = self.metric.gaussian_curvature(s_next.x)?;
            let (jn, djn) = jacobi_rk4(j, dj, k, 0.5 * (k + k_next), k_next, dt);
            j = jn;
            dj = djn;
            s = s_next;
            remaining -= dt;
        }
        Ok((j, dj))
    }

    /// Follow a ray from the boundary to its exit, integrating the Jacobi
    /// field and the t*K+ quadrature used by the k+ characteristic.
    pub fn jacobi_sweep(&self, p: &PhasePoint, boundary: BoundaryId) -> Result<JacobiSweep> {
        let exit = self.exit(p, boundary)?;
        let ell = exit.time;
        let step = self.cfg.step;
        let mut s = State { x: p.x, xi: p.xi };
        let mut j = 0.0;
        let mut dj = 1.0;
        let mut t = 0.0;
        let mut quad = 0.0;
        let mut zero = None;
        while t < ell - 1e-14 {
            let dt = (ell - t).min(step);
            let k = self.metric.gaussian_curvature(s.x)?;
            let s_next = self.rk4_step(&s, dt)?;
            let k_next = self.metric.gaussian_curvature(s_next.x)?;
            // Trapezoid for the t*K+ integral.
            quad += 0.5 * dt * (t * k.max(0.0) + (t + dt) * k_next.max(0.0));
            let (jn, djn) = jacobi_rk4(j, dj, k, 0.5 * (k + k_next), k_next, dt);
            if zero.is_none() && t > 0.0 && jn <= 0.0 {
                zero = Some(t + dt);
            }
            j = jn;
            dj = djn;
            s = s_next;
            t += dt;
        }
        Ok(JacobiSweep {
            exit_time: ell,
            t_k_plus_integral: quad,
            first_jacobi_zero: zero,
        })
    }

    fn shoot(&self, y: Vec2, x: Vec2, decimate: usize) -> Result<Shot> {
        let frame_guess = [x[0] - y[0], x[1] - y[1]];
        let mut r = frame_guess[0].hypot(frame_guess[1]);
        if r < 1e-12 {
            return Err(Error::NonConvergence {
                what: "distance shooting (coincident points)",
                residual: 0.0,
                iterations: 0,
            });
        }
        let mut angle = frame_guess[1].atan2(frame_guess[0]);
        let target_tol = 1e-11;
        let mut best = (f64::INFINITY, angle, r);
        for it in 0..40 {
            let f0 = self.shoot_residual(y, angle, r, x)?;
            let err = f0[0].hypot(f0[1]);
            if err < best.0 {
                best = (err, angle, r);
            }
            if err < target_tol {
                break;
            }
            if it == 39 {
                return Err(Error::NonConvergence {
                    what: "distance shooting",
                    residual: err,
                    iterations: it,
                });
            }
            let da = 1e-7;
            let dr = 1e-7 * r.max(1.0);
            let fa = self.shoot_residual(y, angle + da, r, x)?;
            let fr = self.shoot_residual(y, angle, r + dr, x)?;
            let jac = [
                [(fa[0] - f0[0]) / da, (fr[0] - f0[0]) / dr],
                [(fa[1] - f0[1]) / da, (fr[1] - f0[1]) / dr],
            ];
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det.abs() < 1e-14 {
                return Err(Error::NonConvergence {
                    what: "distance shooting (singular Jacobian)",
                    residual: err,
                    iterations: it,
                });
            }
            let dda = (-f0[0] * jac[1][1] + f0[1] * jac[0][1]) / det;
            let ddr = (-f0[1] * jac[0][0] + f0[0] * jac[1][0]) / det;
            // Damp large steps to keep the iteration inside the chart.
            let scale = 1.0f64.min(0.5 * r / (ddr.abs() + r * dda.abs() + 1e-30));
            angle += scale * dda;
            r += scale * ddr;
            r = r.max(1e-6);
        }
        let (_, angle, r) = best;
        // Final integration collecting tangent, Jacobi field and path.
        let dir = [angle.cos(), angle.sin()];
        let ev = self.metric.eval(y)?;
        let speed = ev.g.norm(dir);
        let xi = [dir[0] / speed, dir[1] / speed];
        let mut s = State { x: y, xi };
        let step = self.cfg.step;
        let mut j = 0.0;
        let mut dj = 1.0;
        let mut path = Vec::new();
        let keep = decimate.max(1);
        path.push((0.0, y));
        let n_steps = (r / step).ceil() as usize;
        let dt = r / n_steps as f64;
        for i in 0..n_steps {
            let k = self.metric.gaussian_curvature(s.x)?;
            let s_next = self.rk4_step(&s, dt)?;
            let k_next = self.metric.gaussian_curvature(s_next.x)?;
            let (jn, djn) = jacobi_rk4(j, dj, k, 0.5 * (k + k_next), k_next, dt);
            j = jn;
            dj = djn;
            s = s_next;
            if decimate > 0 && ((i + 1) % keep == 0 || i + 1 == n_steps) {
                path.push(((i + 1) as f64 * dt, s.x));
            }
        }
        Ok(Shot {
            r,
            dir: xi,
            tangent: s.xi,
            jacobi: j,
            djacobi: dj,
            path,
        })
    }

    fn shoot_residual(&self, y: Vec2, angle: f64, r: f64, target: Vec2) -> Result<Vec2> {
        let dir = [angle.cos(), angle.sin()];
        let ev = self.metric.eval(y)?;
        let speed = ev.g.norm(dir);
        let xi = [dir[0] / speed, dir[1] / speed];
        let p = self.flow(&PhasePoint { x: y, xi }, r)?;
        Ok([p.x[0] - target[0], p.x[1] - target[1]])
    }
}

struct Shot {
    r: f64,
    dir: Vec2,
    tangent: Vec2,
    jacobi: f64,
    djacobi: f64,
    path: Vec<(f64, Vec2)>,
}

fn advance(s: &State, d: &State, dt: f64) -> State {
    State {
        x: [s.x[0] + dt * d.x[0], s.x[1] + dt * d.x[1]],
        xi: [s.xi[0] + dt * d.xi[0], s.xi[1] + dt * d.xi[1]],
    }
}

/// RK4 step for the scalar Jacobi equation j'' = -K j with curvature
/// sampled at the step endpoints and midpoint.
fn jacobi_rk4(j: f64, dj: f64, k0: f64, k_half: f64, k1: f64, dt: f64) -> (f64, f64) {
    let f = |j: f64, dj: f64, k: f64| (dj, -k * j);
    let (a1, b1) = f(j, dj, k0);
    let (a2, b2) = f(j + 0.5 * dt * a1, dj + 0.5 * dt * b1, k_half);
    let (a3, b3) = f(j + 0.5 * dt * a2, dj + 0.5 * dt * b2, k_half);
    let (a4, b4) = f(j + dt * a3, dj + dt * b3, k1);
    (
        j + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        dj + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ConformalProfile, MetricFamily};
    use approx::assert_relative_eq;

    fn euclid() -> MetricField {
        MetricField::unit_disk(MetricFamily::Euclidean).unwrap()
    }

    fn conformal_bump() -> MetricField {
        MetricField::unit_disk(MetricFamily::Conformal(ConformalProfile::Bump {
            amp: 0.12,
            sigma: 0.5,
            center: [0.15, -0.1],
        }))
        .unwrap()
    }

    fn hyperbolic() -> MetricField {
        MetricField::new(
            MetricFamily::Conformal(ConformalProfile::HyperbolicPatch),
            0.5,
            0.6,
        )
        .unwrap()
    }

    #[test]
    fn euclidean_flow_is_straight() {
        let m = euclid();
        let tr = Tracer::new(&m, TracerConfig::default());
        let p = tr
            .flow(
                &PhasePoint {
                    x: [0.0, 0.0],
                    xi: [1.0, 0.0],
                },
                0.5,
            )
            .unwrap();
        assert_relative_eq!(p.x[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p.x[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.xi[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn flow_at_zero_time_is_identity() {
        let m = conformal_bump();
        let tr = Tracer::new(&m, TracerConfig::default());
        let p0 = PhasePoint {
            x: [0.2, 0.1],
            xi: [0.6, 0.8],
        };
        let p = tr.flow(&p0, 0.0).unwrap();
        assert_eq!(p, p0);
    }

    #[test]
    fn flow_group_law_and_reversibility() {
        let m = conformal_bump();
        let tr = Tracer::new(&m, TracerConfig::default());
        let ev = m.eval([0.0, 0.3]).unwrap();
        let v = [0.7, -0.3];
        let n = ev.g.norm(v);
        let p0 = PhasePoint {
            x: [0.0, 0.3],
            xi: [v[0] / n, v[1] / n],
        };
        let ab = tr.flow(&tr.flow(&p0, 0.4).unwrap(), 0.3).unwrap();
        let once = tr.flow(&p0, 0.7).unwrap();
        assert!((ab.x[0] - once.x[0]).abs() < 1e-8);
        assert!((ab.x[1] - once.x[1]).abs() < 1e-8);
        let back = tr.flow(&once, -0.7).unwrap();
        assert!((back.x[0] - p0.x[0]).abs() < 1e-8);
        assert!((back.x[1] - p0.x[1]).abs() < 1e-8);
    }

    #[test]
    fn unit_speed_drift_below_tolerance() {
        let m = conformal_bump();
        let tr = Tracer::new(&m, TracerConfig::default());
        let y = [-1.2, 0.0];
        let frame = m.fiber_frame(y, BoundaryId::Outer).unwrap();
        let p0 = PhasePoint {
            x: y,
            xi: frame.direction(0.2),
        };
        let exit = tr.exit(&p0, BoundaryId::Outer).unwrap();
        let evx = m.eval(exit.exit.x).unwrap();
        let speed = evx.g.norm(exit.exit.xi);
        assert!((speed - 1.0).abs() < 1e-8, "drift {}", (speed - 1.0).abs());
    }

    #[test]
    fn euclidean_exit_times() {
        let m = euclid();
        let tr = Tracer::new(&m, TracerConfig::default());
        // Diameter of M (radius 1): length 2.
        let exit = tr
            .exit(
                &PhasePoint {
                    x: [-1.0, 0.0],
                    xi: [1.0, 0.0],
                },
                BoundaryId::Inner,
            )
            .unwrap();
        assert_relative_eq!(exit.time, 2.0, epsilon = 1e-9);
        assert!(!exit.grazing);
        // Entry at angle pi/4 to the inward normal: chord length sqrt(2).
        let frame = m.fiber_frame([-1.0, 0.0], BoundaryId::Inner).unwrap();
        let p = PhasePoint {
            x: [-1.0, 0.0],
            xi: frame.direction(std::f64::consts::FRAC_PI_4),
        };
        let exit = tr.exit(&p, BoundaryId::Inner).unwrap();
        assert_relative_eq!(exit.time, (2.0f64).sqrt(), epsilon = 1e-9);
        // gamma(ell) sits on the boundary level set.
        assert!(
            (exit.exit.x[0].hypot(exit.exit.x[1]) - 1.0).abs() < 1e-9,
            "exit point off the level set"
        );
    }

    #[test]
    fn outward_start_exits_immediately() {
        let m = euclid();
        let tr = Tracer::new(&m, TracerConfig::default());
        let exit = tr
            .exit(
                &PhasePoint {
                    x: [1.0, 0.0],
                    xi: [1.0, 0.0],
                },
                BoundaryId::Inner,
            )
            .unwrap();
        assert_eq!(exit.time, 0.0);
    }

    #[test]
    fn grazing_exit_is_flagged() {
        let m = euclid();
        let tr = Tracer::new(&m, TracerConfig::default());
        let frame = m.fiber_frame([-1.0, 0.0], BoundaryId::Inner).unwrap();
        let beta = std::f64::consts::FRAC_PI_2 - 0.01;
        let p = PhasePoint {
            x: [-1.0, 0.0],
            xi: frame.direction(beta),
        };
        let exit = tr.exit(&p, BoundaryId::Inner).unwrap();
        assert!(exit.grazing);
    }

    #[test]
    fn forward_backward_exit_identity() {
        // ell_+(x, xi) = -ell_-(x, -xi), with ell_- the backward exit time.
        let m = conformal_bump();
        let tr = Tracer::new(&m, TracerConfig::default());
        let p = PhasePoint {
            x: [0.2, -0.3],
            xi: [0.8, 0.6],
        };
        let ev = m.eval(p.x).unwrap();
        let n = ev.g.norm(p.xi);
        let p = PhasePoint {
            x: p.x,
            xi: [p.xi[0] / n, p.xi[1] / n],
        };
        let fwd = tr.exit(&p, BoundaryId::Outer).unwrap();
        let rev = tr
            .exit(
                &PhasePoint {
                    x: p.x,
                    xi: [-p.xi[0], -p.xi[1]],
                },
                BoundaryId::Outer,
            )
            .unwrap();
        // Both are positive times of the reversed ray; the identity says the
        // backward time of the original equals minus the forward of -xi.
        assert!(fwd.time > 0.0 && rev.time > 0.0);
        let back_again = tr.flow(&rev.exit, -(rev.time + fwd.time)).unwrap();
        // Flowing back across both legs returns to the forward exit point.
        assert!((back_again.x[0] - fwd.exit.x[0]).abs() < 1e-7);
        assert!((back_again.x[1] - fwd.exit.x[1]).abs() < 1e-7);
    }

    #[test]
    fn exp_map_trivial_cases() {
        let m = euclid();
        let tr = Tracer::new(&m, TracerConfig::default());
        assert_eq!(tr.exp_map([0.1, 0.2], [0.0, 0.0]).unwrap(), [0.1, 0.2]);
        let p = tr.exp_map([0.0, 0.0], [0.3, 0.4]).unwrap();
        assert_relative_eq!(p[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(p[1], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn exp_map_consistent_with_flow() {
        let m = conformal_bump();
        let tr = Tracer::new(&m, TracerConfig::default());
        let y = [-0.4, 0.5];
        let ev = m.eval(y).unwrap();
        let dir = [0.6, -0.2];
        let n = ev.g.norm(dir);
        let xi = [dir[0] / n, dir[1] / n];
        let r = 0.9;
        let via_exp = tr.exp_map(y, [r * xi[0], r * xi[1]]).unwrap();
        let via_flow = tr.flow(&PhasePoint { x: y, xi }, r).unwrap();
        assert!((via_exp[0] - via_flow.x[0]).abs() < 1e-9);
        assert!((via_exp[1] - via_flow.x[1]).abs() < 1e-9);
    }

    #[test]
    fn euclidean_distance_analytic() {
        let m = euclid();
        let tr = Tracer::new(&m, TracerConfig::default());
        let d = tr.distance([-1.0, 0.0], [0.0, 0.0]).unwrap();
        assert_eq!(d.rho, 1.0);
        assert_eq!(d.grad, [1.0, 0.0]);
        let same = tr.distance([-1.0, 0.0], [-1.0, 0.0]).unwrap();
        assert_eq!(same.rho, 0.0);
    }

    #[test]
    fn conformal_distance_eikonal_norm() {
        let m = conformal_bump();
        let tr = Tracer::new(&m, TracerConfig::default());
        let y = [-1.2, 0.0];
        for &x in &[[0.0, 0.0], [0.4, 0.3], [-0.2, -0.5]] {
            let d = tr.distance(y, x).unwrap();
            let ev = m.eval(x).unwrap();
            let n = ev.g.norm(d.grad);
            assert!((n - 1.0).abs() < 1e-6, "eikonal norm {}", n);
        }
    }

    /// Independent polyline oracle: minimize the g-length of a discrete path
    /// by per-node relaxation.
    fn polyline_distance(m: &MetricField, y: [f64; 2], x: [f64; 2]) -> f64 {
        let n = 64;
        let mut pts: Vec<[f64; 2]> = (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                [y[0] + t * (x[0] - y[0]), y[1] + t * (x[1] - y[1])]
            })
            .collect();
        let seg_len = |a: [f64; 2], b: [f64; 2]| -> f64 {
            // 3-point quadrature of |b - a|_g along the segment.
            let d = [b[0] - a[0], b[1] - a[1]];
            let mut s = 0.0;
            for &(w, t) in &[(5.0 / 18.0, 0.1127016653792583),
                             (8.0 / 18.0, 0.5),
                             (5.0 / 18.0, 0.8872983346207417)] {
                let p = [a[0] + t * d[0], a[1] + t * d[1]];
                let ev = m.eval(p).unwrap();
                s += w * ev.g.norm(d);
            }
            s
        };
        let total = |pts: &Vec<[f64; 2]>| -> f64 {
            (0..n).map(|i| seg_len(pts[i], pts[i + 1])).sum()
        };
        let mut best = total(&pts);
        let mut step = 0.02;
        for _ in 0..60 {
            let mut improved = false;
            for i in 1..n {
                let orig = pts[i];
                let mut local_best = seg_len(pts[i - 1], pts[i]) + seg_len(pts[i], pts[i + 1]);
                let mut choice = orig;
                for &(dx, dy) in &[(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                    let cand = [orig[0] + dx, orig[1] + dy];
                    let v = seg_len(pts[i - 1], cand) + seg_len(cand, pts[i + 1]);
                    if v < local_best {
                        local_best = v;
                        choice = cand;
                    }
                }
                if choice != orig {
                    pts[i] = choice;
                    improved = true;
                }
            }
            let t = total(&pts);
            if t < best {
                best = t;
            }
            if !improved {
                step *= 0.5;
                if step < 1e-5 {
                    break;
                }
            }
        }
        best
    }

    #[test]
    fn conformal_distance_matches_polyline_oracle() {
        let m = conformal_bump();
        let tr = Tracer::new(&m, TracerConfig::default());
        let y = [-1.2, 0.0];
        for &x in &[[0.3, 0.2], [0.0, -0.4]] {
            let d = tr.distance(y, x).unwrap();
            let oracle = polyline_distance(&m, y, x);
            assert!(
                (d.rho - oracle).abs() < 1e-3,
                "shooting {} vs polyline {}",
                d.rho,
                oracle
            );
        }
    }

    #[test]
    fn hyperbolic_diameter_ray_stays_radial() {
        let m = hyperbolic();
        let tr = Tracer::new(&m, TracerConfig::default());
        let p = PhasePoint {
            x: [-0.5, 0.0],
            xi: [0.25, 0.0], // e^{2 lambda} = 4/(1-r^2)^2 -> |xi|_g = 1 at r=0.5... speed is free here
        };
        let out = tr.flow(&p, 0.8).unwrap();
        assert!(out.x[1].abs() < 1e-12, "left the diameter: {}", out.x[1]);
    }

    #[test]
    fn polar_volume_flat_and_sphere() {
        let m = euclid();
        let tr = Tracer::new(&m, TracerConfig::default());
        let a = tr.polar_volume([-1.2, 0.0], 0.7, [1.0, 0.0]).unwrap();
        assert_relative_eq!(a, 0.49, epsilon = 1e-10);
        let small = tr.polar_volume([-1.2, 0.0], 1e-3, [1.0, 0.0]).unwrap();
        assert!(small > 0.0 && small < 1.1e-6);

        let sphere =
            MetricField::unit_disk(MetricFamily::Conformal(ConformalProfile::SpherePatch))
                .unwrap();
        let trs = Tracer::new(&sphere, TracerConfig::default());
        let y = [-1.2, 0.0];
        let ev = sphere.eval(y).unwrap();
        let xi = [1.0 / ev.g.norm([1.0, 0.0]), 0.0];
        for &r in &[0.5, 1.0, 1.5] {
            let a = trs.polar_volume(y, r, xi).unwrap();
            assert!(
                (a - r.sin().powi(2)).abs() < 1e-5,
                "alpha({}) = {} vs sin^2 = {}",
                r,
                a,
                r.sin().powi(2)
            );
        }
    }

    #[test]
    fn simplicity_of_shipped_metrics() {
        use crate::manifold::check_simple;
        let rep = check_simple(&euclid(), 64).unwrap();
        assert!(rep.simple);
        assert_eq!(rep.k_plus, 0.0);
        assert!(rep.k_plus_below_one);
        assert!(rep.convexity_margin > 0.0);

        let rep = check_simple(&hyperbolic(), 64).unwrap();
        assert!(rep.simple);
        assert_eq!(rep.k_plus, 0.0);
    }

    #[test]
    fn sphere_patch_past_conjugate_distance_fails_simplicity() {
        use crate::manifold::check_simple;
        // Chart radius 1.5 has geodesic radius 2*atan(1.5) ~ 1.97 > pi/2, so a
        // near-diameter chord exceeds pi and the Jacobi field crosses zero.
        let m = MetricField::new(
            MetricFamily::Conformal(ConformalProfile::SpherePatch),
            1.2,
            1.5,
        )
        .unwrap();
        let rep = check_simple(&m, 64).unwrap();
        assert!(!rep.simple);
        assert!(rep.witness.is_some());
    }

    #[test]
    fn k_plus_monotone_under_curvature_scaling() {
        use crate::manifold::check_simple;
        // Conformal bumps of growing amplitude: curvature near the center is
        // -e^{-2 lambda} Laplace(lambda) = 2 amp / sigma^2 + O(amp^2) > 0 and
        // increases pointwise with amp, so k+ must grow with it.
        let scaled = |amp: f64| {
            MetricField::new(
                MetricFamily::Conformal(ConformalProfile::Bump {
                    amp,
                    sigma: 0.8,
                    center: [0.0, 0.0],
                }),
                0.4,
                0.5,
            )
            .unwrap()
        };
        let k1 = check_simple(&scaled(0.05), 32).unwrap().k_plus;
        let k2 = check_simple(&scaled(0.10), 32).unwrap().k_plus;
        assert!(k2 > k1, "k+ not monotone: {} vs {}", k1, k2);
    }

    #[test]
    fn kinetic_homogeneity_of_flow() {
        // gamma_{x, s xi}(t) = gamma_{x, xi}(s t): the flow is homogeneous.
        let m = conformal_bump();
        let tr = Tracer::new(&m, TracerConfig::default());
        let x = [0.1, -0.2];
        let xi = [0.5, 0.4];
        let a = tr
            .flow(
                &PhasePoint {
                    x,
                    xi: [2.0 * xi[0], 2.0 * xi[1]],
                },
                0.3,
            )
            .unwrap();
        let b = tr.flow(&PhasePoint { x, xi }, 0.6).unwrap();
        assert!((a.x[0] - b.x[0]).abs() < 1e-9);
        assert!((a.x[1] - b.x[1]).abs() < 1e-9);
    }
}
