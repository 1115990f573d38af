//! Geodesic X-ray transform over inward boundary directions, boundary
//! Sobolev norms, regularized inversion, and numerical verification of the
//! kinetic equation and the stability estimate.

use crate::error::{Error, Result};
use crate::geodesics::{BoundaryRay, PhasePoint, Tracer, TracerConfig};
use crate::manifold::{BoundaryId, CoefficientField, MetricField, Vec2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) fn par_try_map<T, U, F>(items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Fan of boundary rays over the outer boundary, parameterized by boundary
/// arclength and entry angle relative to the inward normal, with quadrature
/// weights for the mu-weighted boundary measure and cached ray paths.
#[derive(Debug, Clone)]
pub struct FanGrid {
    pub n_s: usize,
    pub n_beta: usize,
    pub rays: Vec<BoundaryRay>,
    /// Quadrature weight mu * ds * dbeta per ray.
    pub weights: Vec<f64>,
    /// Decimated (arc parameter, point) path samples per ray.
    pub paths: Vec<Vec<(f64, Vec2)>>,
    /// Total g-arclength of the boundary.
    pub total_arclength: f64,
    pub delta_beta: f64,
    /// Arclength spacing around each boundary node (periodic).
    pub delta_s: Vec<f64>,
    pub boundary: BoundaryId,
}

impl FanGrid {
    /// Uniform fan: `n_s` boundary points (uniform in chart angle, with the
    /// true g-arclength recorded) times `n_beta` interior entry angles.
    /// Rays with non-negative normal alignment are excluded by construction.
    pub fn build(
        metric: &MetricField,
        n_s: usize,
        n_beta: usize,
        boundary: BoundaryId,
    ) -> Result<FanGrid> {
        if n_s < 3 || n_beta < 3 {
            return Err(Error::GridTooCoarse {
                what: "fan grid",
                required: 3,
                actual: n_s.min(n_beta),
            });
        }
        let tracer = Tracer::new(metric, TracerConfig::default());
        // Cumulative g-arclength of the boundary circle at the node angles.
        let radius = metric.boundary_radius(boundary);
        let quad_n = 8 * n_s;
        let mut arc = vec![0.0; n_s + 1];
        let mut acc = 0.0;
        let mut node = 1;
        for k in 0..quad_n {
            let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / quad_n as f64;
            let x = metric.boundary_point(phi, boundary);
            let ev = metric.eval(x)?;
            let tangent = [-x[1], x[0]];
            acc += ev.g.norm(tangent) / radius * (2.0 * std::f64::consts::PI * radius)
                / quad_n as f64;
            while node <= n_s && (k + 1) * n_s >= node * quad_n {
                arc[node] = acc;
                node += 1;
            }
        }
        let total = acc;
        let delta_beta = std::f64::consts::PI / n_beta as f64;

        let mut specs = Vec::with_capacity(n_s * n_beta);
        for i in 0..n_s {
            for j in 0..n_beta {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / n_s as f64;
                let beta = -std::f64::consts::FRAC_PI_2 + delta_beta * (j as f64 + 0.5);
                specs.push((i, j, phi, beta));
            }
        }
        let traced = par_try_map(&specs, |&(i, _j, phi, beta)| {
            let y = metric.boundary_point(phi, boundary);
            let frame = metric.fiber_frame(y, boundary)?;
            let xi = frame.direction(beta);
            let exit = tracer.exit(&PhasePoint { x: y, xi }, boundary)?;
            let path = sample_ray_path(&tracer, y, xi, exit.time)?;
            Ok((
                BoundaryRay {
                    y,
                    xi,
                    s: arc[i],
                    beta,
                    ell_plus: exit.time,
                    mu: beta.cos(),
                },
                path,
            ))
        })?;
        let mut rays = Vec::with_capacity(specs.len());
        let mut paths = Vec::with_capacity(specs.len());
        for (ray, path) in traced {
            rays.push(ray);
            paths.push(path);
        }
        let mut delta_s = vec![0.0; n_s];
        for i in 0..n_s {
            let prev = if i == 0 { arc[n_s - 1] - total } else { arc[i - 1] };
            let next = if i == n_s - 1 { total } else { arc[i + 1] };
            delta_s[i] = 0.5 * (next - prev);
        }
        let mut weights = Vec::with_capacity(rays.len());
        for (idx, ray) in rays.iter().enumerate() {
            let i = idx / n_beta;
            weights.push(ray.mu * delta_s[i] * delta_beta);
        }
        Ok(FanGrid {
            n_s,
            n_beta,
            rays,
            weights,
            paths,
            total_arclength: total,
            delta_beta,
            delta_s,
            boundary,
        })
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn ray_index(&self, i_s: usize, j_beta: usize) -> usize {
        i_s * self.n_beta + j_beta
    }
}

fn sample_ray_path(
    tracer: &Tracer,
    y: Vec2,
    xi: Vec2,
    ell: f64,
) -> Result<Vec<(f64, Vec2)>> {
    // Samples every 4 integrator steps; the along-ray quadrature is midpoint
    // on these cells, second order in the sample spacing.
    let step = tracer.cfg.step * 4.0;
    let n = ((ell / step).ceil() as usize).max(1);
    let dt = ell / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut p = PhasePoint { x: y, xi };
    out.push((0.0, y));
    for k in 0..n {
        p = tracer.flow(&p, dt)?;
        out.push(((k + 1) as f64 * dt, p.x));
    }
    Ok(out)
}

/// Sampled ray transform values over a fan grid.
#[derive(Debug, Clone)]
pub struct RayImage {
    pub values: Vec<f64>,
    pub n_s: usize,
    pub n_beta: usize,
    /// Name of the generating field, for artifact metadata.
    pub label: String,
}

impl RayImage {
    pub fn zeros(grid: &FanGrid, label: &str) -> RayImage {
        RayImage {
            values: vec![0.0; grid.len()],
            n_s: grid.n_s,
            n_beta: grid.n_beta,
            label: label.to_string(),
        }
    }

    pub fn linear_combination(a: f64, x: &RayImage, b: f64, y: &RayImage) -> RayImage {
        RayImage {
            values: x
                .values
                .iter()
                .zip(&y.values)
                .map(|(&u, &v)| a * u + b * v)
                .collect(),
            n_s: x.n_s,
            n_beta: x.n_beta,
            label: format!("{}*{} + {}*{}", a, x.label, b, y.label),
        }
    }
}

/// Integrate a field along every ray of the fan (midpoint quadrature on the
/// cached path samples). Linear in the field; zero on rays missing its
/// support.
pub fn forward(_metric: &MetricField, f: &CoefficientField, grid: &FanGrid) -> RayImage {
    let idx: Vec<usize> = (0..grid.len()).collect();
    let values = par_try_map(&idx, |&k| Ok(ray_quadrature(&grid.paths[k], |x| f.eval(x))))
        .expect("infallible");
    RayImage {
        values,
        n_s: grid.n_s,
        n_beta: grid.n_beta,
        label: "forward".to_string(),
    }
}

/// Midpoint quadrature of a scalar field along a sampled ray path.
pub fn ray_quadrature(path: &[(f64, Vec2)], f: impl Fn(Vec2) -> f64) -> f64 {
    let mut acc = 0.0;
    for w in path.windows(2) {
        let (t0, x0) = w[0];
        let (t1, x1) = w[1];
        let mid = [0.5 * (x0[0] + x1[0]), 0.5 * (x0[1] + x1[1])];
        acc += f(mid) * (t1 - t0);
    }
    acc
}

/// Weighted H1 norm on the fan: L2_mu norms of the image and its tangential
/// derivatives in arclength and entry angle.
pub fn boundary_h1_norm(img: &RayImage, grid: &FanGrid) -> Result<f64> {
    if grid.n_s < 3 || grid.n_beta < 3 {
        return Err(Error::GridTooCoarse {
            what: "boundary H1 norm",
            required: 3,
            actual: grid.n_s.min(grid.n_beta),
        });
    }
    let (n_s, n_b) = (grid.n_s, grid.n_beta);
    let total = grid.total_arclength;
    let v = |i: usize, j: usize| img.values[i * n_b + j];
    let mut acc = 0.0;
    for i in 0..n_s {
        let ip = (i + 1) % n_s;
        let im = (i + n_s - 1) % n_s;
        for j in 0..n_b {
            let k = i * n_b + j;
            let val = v(i, j);
            // Periodic centered difference in arclength.
            let mut ds = grid.rays[ip * n_b].s - grid.rays[im * n_b].s;
            if ds <= 0.0 {
                ds += total;
            }
            let dvs = (v(ip, j) - v(im, j)) / ds;
            // Centered in beta; one-sided at the angular edges.
            let dvb = if j == 0 {
                (v(i, 1) - val) / grid.delta_beta
            } else if j == n_b - 1 {
                (val - v(i, n_b - 2)) / grid.delta_beta
            } else {
                (v(i, j + 1) - v(i, j - 1)) / (2.0 * grid.delta_beta)
            };
            acc += grid.weights[k] * (val * val + dvs * dvs + dvb * dvb);
        }
    }
    Ok(acc.sqrt())
}

/// Weighted L2_mu norm of the image alone.
pub fn boundary_l2_norm(img: &RayImage, grid: &FanGrid) -> f64 {
    img.values
        .iter()
        .zip(&grid.weights)
        .map(|(&v, &w)| w * v * v)
        .sum::<f64>()
        .sqrt()
}

// ----------------------------------------------------------------------------
// Inversion
// ----------------------------------------------------------------------------

/// Scalar field on a square pixel grid covering the inner disk; the basis of
/// the regularized inversion. Pixels outside the disk are not unknowns, so
/// reconstructions vanish on the extension annulus by construction.
#[derive(Debug, Clone)]
pub struct PixelGrid {
    pub n: usize,
    /// Half-width of the covered square (the inner radius).
    pub half: f64,
    pub values: Vec<f64>,
}

impl PixelGrid {
    pub fn zeros(n: usize, half: f64) -> PixelGrid {
        PixelGrid {
            n,
            half,
            values: vec![0.0; n * n],
        }
    }

    pub fn pixel_size(&self) -> f64 {
        2.0 * self.half / self.n as f64
    }

    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        let d = self.pixel_size();
        [
            -self.half + (i as f64 + 0.5) * d,
            -self.half + (j as f64 + 0.5) * d,
        ]
    }

    /// Bilinear interpolation between pixel centers; zero outside.
    pub fn eval(&self, x: Vec2) -> f64 {
        let d = self.pixel_size();
        let fx = (x[0] + self.half) / d - 0.5;
        let fy = (x[1] + self.half) / d - 0.5;
        let i0 = fx.floor() as isize;
        let j0 = fy.floor() as isize;
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let mut acc = 0.0;
        for (di, wx) in [(0isize, 1.0 - tx), (1, tx)] {
            for (dj, wy) in [(0isize, 1.0 - ty), (1, ty)] {
                let i = i0 + di;
                let j = j0 + dj;
                if i >= 0 && (i as usize) < self.n && j >= 0 && (j as usize) < self.n {
                    acc += wx * wy * self.values[(i as usize) * self.n + j as usize];
                }
            }
        }
        acc
    }

    pub fn sample(f: impl Fn(Vec2) -> f64, n: usize, half: f64) -> PixelGrid {
        let mut g = PixelGrid::zeros(n, half);
        for i in 0..n {
            for j in 0..n {
                let x = g.center(i, j);
                g.values[i * n + j] = f(x);
            }
        }
        g
    }
}

/// Riemannian L2 norm over the inner disk by grid quadrature.
pub fn l2_norm_disk(metric: &MetricField, f: impl Fn(Vec2) -> f64, n: usize) -> f64 {
    let half = metric.radius_m;
    let d = 2.0 * half / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = [
                -half + (i as f64 + 0.5) * d,
                -half + (j as f64 + 0.5) * d,
            ];
            if x[0].hypot(x[1]) <= half {
                let sd = metric.eval(x).map(|e| e.sqrt_det).unwrap_or(1.0);
                let v = f(x);
                acc += v * v * sd * d * d;
            }
        }
    }
    acc.sqrt()
}

/// Diagnostics of the conjugate-gradient Tikhonov solve.
#[derive(Debug, Clone)]
pub struct InvertDiagnostics {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub lambda: f64,
    pub operator_norm_estimate: f64,
}

struct SparseForward {
    /// CSR over rays.
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    n_pix: usize,
    /// Map from masked unknown index to (i, j) pixel coordinates.
    mask: Vec<(usize, usize)>,
    /// Inverse map: pixel (i,j) -> unknown index or usize::MAX.
    unknown_of: Vec<usize>,
    n: usize,
}

fn build_forward_matrix(grid: &FanGrid, n: usize, half: f64) -> SparseForward {
    let d = 2.0 * half / n as f64;
    let mut unknown_of = vec![usize::MAX; n * n];
    let mut mask = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = [
                -half + (i as f64 + 0.5) * d,
                -half + (j as f64 + 0.5) * d,
            ];
            if x[0].hypot(x[1]) <= half {
                unknown_of[i * n + j] = mask.len();
                mask.push((i, j));
            }
        }
    }
    let n_pix = mask.len();
    let mut row_ptr = Vec::with_capacity(grid.len() + 1);
    let mut cols: Vec<u32> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    row_ptr.push(0);
    let mut row: std::collections::HashMap<u32, f64> = std::collections::HashMap::new();
    for path in &grid.paths {
        row.clear();
        for w in path.windows(2) {
            let (t0, x0) = w[0];
            let (t1, x1) = w[1];
            let mid = [0.5 * (x0[0] + x1[0]), 0.5 * (x0[1] + x1[1])];
            let dt = t1 - t0;
            // Bilinear splat of the midpoint sample onto pixel centers.
            let fx = (mid[0] + half) / d - 0.5;
            let fy = (mid[1] + half) / d - 0.5;
            let i0 = fx.floor() as isize;
            let j0 = fy.floor() as isize;
            let tx = fx - i0 as f64;
            let ty = fy - j0 as f64;
            for (di, wx) in [(0isize, 1.0 - tx), (1, tx)] {
                for (dj, wy) in [(0isize, 1.0 - ty), (1, ty)] {
                    let i = i0 + di;
                    let j = j0 + dj;
                    if i >= 0 && (i as usize) < n && j >= 0 && (j as usize) < n {
                        let u = unknown_of[(i as usize) * n + j as usize];
                        if u != usize::MAX {
                            *row.entry(u as u32).or_insert(0.0) += wx * wy * dt;
                        }
                    }
                }
            }
        }
        let mut entries: Vec<(u32, f64)> = row.iter().map(|(&c, &v)| (c, v)).collect();
        entries.sort_unstable_by_key(|e| e.0);
        for (c, v) in entries {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    SparseForward {
        row_ptr,
        cols,
        vals,
        n_pix,
        mask,
        unknown_of,
        n,
    }
}

impl SparseForward {
    fn apply(&self, f: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * f[self.cols[k] as usize];
            }
            *o = acc;
        }
    }

    fn apply_transpose_weighted(&self, r: &[f64], w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for row in 0..r.len() {
            let s = w[row] * r[row];
            if s == 0.0 {
                continue;
            }
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                out[self.cols[k] as usize] += self.vals[k] * s;
            }
        }
    }

    /// Dirichlet graph Laplacian: the gradient penalty couples in-mask
    /// neighbors and pins the reconstruction to zero across the mask edge.
    fn laplacian(&self, f: &[f64], out: &mut [f64]) {
        for (u, &(i, j)) in self.mask.iter().enumerate() {
            let mut acc = 0.0;
            let neighbor = |ii: isize, jj: isize| {
                if ii >= 0 && (ii as usize) < self.n && jj >= 0 && (jj as usize) < self.n {
                    let v = self.unknown_of[(ii as usize) * self.n + jj as usize];
                    if v != usize::MAX {
                        return f[v];
                    }
                }
                0.0
            };
            acc += f[u] - neighbor(i as isize - 1, j as isize);
            acc += f[u] - neighbor(i as isize + 1, j as isize);
            acc += f[u] - neighbor(i as isize, j as isize - 1);
            acc += f[u] - neighbor(i as isize, j as isize + 1);
            out[u] = acc;
        }
    }
}

/// Tikhonov-regularized least-squares inversion of a ray image: minimizes
/// the mu-weighted data misfit plus `lambda_rel`-scaled gradient penalty
/// over a pixel basis supported in the inner disk, by conjugate gradients
/// on the normal equations.
pub fn invert(
    img: &RayImage,
    grid: &FanGrid,
    metric: &MetricField,
    lambda_rel: f64,
    n_pixels: usize,
) -> Result<(PixelGrid, InvertDiagnostics)> {
    if lambda_rel <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "lambda_rel",
            value: lambda_rel,
            reason: "regularization weight must be positive",
        });
    }
    let a = build_forward_matrix(grid, n_pixels, metric.radius_m);
    let n_rays = grid.len();
    let w = &grid.weights;

    // Power iteration estimates |A^T W A| to scale the regularization.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ff1ce);
    let mut v: Vec<f64> = (0..a.n_pix).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut av = vec![0.0; n_rays];
    let mut atv = vec![0.0; a.n_pix];
    let mut sigma = 0.0;
    for _ in 0..15 {
        a.apply(&v, &mut av);
        a.apply_transpose_weighted(&av, w, &mut atv);
        let norm = atv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        sigma = atv.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
        for (vi, ai) in v.iter_mut().zip(&atv) {
            *vi = ai / norm;
        }
    }
    let lambda = lambda_rel * sigma.max(1e-30);

    // Normal equations: (A^T W A + lambda L) f = A^T W img.
    let mut rhs = vec![0.0; a.n_pix];
    a.apply_transpose_weighted(&img.values, w, &mut rhs);
    let h_apply = |f: &[f64], out: &mut [f64], buf_r: &mut [f64], buf_p: &mut [f64]| {
        a.apply(f, buf_r);
        a.apply_transpose_weighted(buf_r, w, out);
        a.laplacian(f, buf_p);
        for (o, l) in out.iter_mut().zip(buf_p.iter()) {
            *o += lambda * l;
        }
    };

    let mut f = vec![0.0; a.n_pix];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut hp = vec![0.0; a.n_pix];
    let mut buf_r = vec![0.0; n_rays];
    let mut buf_p = vec![0.0; a.n_pix];
    let rhs_norm = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut history = Vec::new();
    let mut rs_old: f64 = r.iter().map(|x| x * x).sum();
    let max_iter = 800;
    let mut iterations = 0;
    if rhs_norm > 0.0 {
        for it in 0..max_iter {
            h_apply(&p, &mut hp, &mut buf_r, &mut buf_p);
            let php: f64 = p.iter().zip(&hp).map(|(x, y)| x * y).sum();
            if php <= 0.0 {
                break;
            }
            let alpha = rs_old / php;
            for i in 0..a.n_pix {
                f[i] += alpha * p[i];
                r[i] -= alpha * hp[i];
            }
            let rs_new: f64 = r.iter().map(|x| x * x).sum();
            let rel = rs_new.sqrt() / rhs_norm;
            history.push(rel);
            iterations = it + 1;
            if rel < 1e-10 {
                break;
            }
            let beta = rs_new / rs_old;
            for i in 0..a.n_pix {
                p[i] = r[i] + beta * p[i];
            }
            rs_old = rs_new;
        }
        let final_rel = history.last().copied().unwrap_or(1.0);
        if final_rel > 1e-4 && iterations == max_iter {
            return Err(Error::NonConvergence {
                what: "Tikhonov CG",
                residual: final_rel,
                iterations,
            });
        }
    }

    let mut out = PixelGrid::zeros(n_pixels, metric.radius_m);
    for (u, &(i, j)) in a.mask.iter().enumerate() {
        out.values[i * n_pixels + j] = f[u];
    }
    Ok((
        out,
        InvertDiagnostics {
            iterations,
            residual_history: history,
            lambda,
            operator_norm_estimate: sigma,
        },
    ))
}

// ----------------------------------------------------------------------------
// Kinetic equation and stability ratio
// ----------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct KineticReport {
    pub max_residual: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Ray integral u(x, xi) of a field from an interior phase point to its
/// forward exit through the outer boundary.
pub fn ray_integral_u(
    metric: &MetricField,
    tracer: &Tracer,
    f: &CoefficientField,
    p: &PhasePoint,
) -> Result<f64> {
    let exit = tracer.exit(p, BoundaryId::Outer)?;
    // Step count keyed to arc length, not time, so that scaling the
    // direction reuses the same spatial quadrature nodes and the exact
    // degree -1 homogeneity of u survives discretization.
    let speed = metric.eval(p.x)?.g.norm(p.xi);
    let arc = exit.time * speed;
    let n = ((arc / (tracer.cfg.step * 2.0)).ceil() as usize).max(1);
    let dt = exit.time / n as f64;
    let mut acc = 0.0;
    let mut q = *p;
    for _ in 0..n {
        let next = tracer.flow(&q, dt)?;
        let mid = [0.5 * (q.x[0] + next.x[0]), 0.5 * (q.x[1] + next.x[1])];
        acc += f.eval(mid) * dt;
        q = next;
    }
    Ok(acc)
}

/// Verify the kinetic equation Hu = -f: build the ray integral u on the
/// sphere bundle and difference it along the geodesic flow.
pub fn kinetic_check(
    metric: &MetricField,
    f: &CoefficientField,
    samples: &[PhasePoint],
    flow_delta: f64,
) -> Result<KineticReport> {
    let tracer = Tracer::new(metric, TracerConfig::default());
    let mut max_residual: f64 = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for p in samples {
        // The centered stencil needs room on both sides of the flow line.
        let fwd = tracer.exit(p, BoundaryId::Outer)?;
        let bwd = tracer.exit(
            &PhasePoint {
                x: p.x,
                xi: [-p.xi[0], -p.xi[1]],
            },
            BoundaryId::Outer,
        )?;
        if fwd.time <= flow_delta || bwd.time <= flow_delta {
            skipped += 1;
            continue;
        }
        let plus = tracer.flow(p, flow_delta)?;
        let minus = tracer.flow(p, -flow_delta)?;
        let u_plus = ray_integral_u(metric, &tracer, f, &plus)?;
        let u_minus = ray_integral_u(metric, &tracer, f, &minus)?;
        let hu = (u_plus - u_minus) / (2.0 * flow_delta);
        max_residual = max_residual.max((hu + f.eval(p.x)).abs());
        evaluated += 1;
    }
    Ok(KineticReport {
        max_residual,
        evaluated,
        skipped,
    })
}

#[derive(Debug, Clone)]
pub struct RatioStats {
    pub max: f64,
    pub mean: f64,
    pub per_phantom: Vec<f64>,
    pub anomalies: usize,
}

/// Measured stability ratio |f|_L2(M) / |If|_H1 over a phantom family; the
/// stability theorem asserts the max is bounded by a constant independent
/// of f (requires a simple metric with k+ < 1).
pub fn stability_ratio(
    metric: &MetricField,
    phantoms: &[CoefficientField],
    grid: &FanGrid,
) -> Result<RatioStats> {
    let mut ratios = Vec::with_capacity(phantoms.len());
    let mut anomalies = 0;
    for f in phantoms {
        let num = l2_norm_disk(metric, |x| f.eval(x), 160);
        if num == 0.0 {
            continue;
        }
        let img = forward(metric, f, grid);
        let den = boundary_h1_norm(&img, grid)?;
        if den == 0.0 {
            anomalies += 1;
            continue;
        }
        ratios.push(num / den);
    }
    if ratios.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok(RatioStats {
        max,
        mean,
        per_phantom: ratios,
        anomalies,
    })
}

/// Seeded family of random band-limited phantoms supported in the inner disk.
pub fn random_phantoms(
    count: usize,
    seed: u64,
    support: f64,
    n_modes: usize,
    k_max: i32,
) -> Vec<CoefficientField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let modes = (0..n_modes)
                .map(|_| crate::manifold::Mode {
                    kx: rng.random_range(-k_max..=k_max),
                    ky: rng.random_range(-k_max..=k_max),
                    amp: rng.random_range(-1.0..1.0),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                })
                .collect();
            CoefficientField::new(
                crate::manifold::FieldShape::BandLimited {
                    support,
                    modes,
                },
                1.0,
            )
        })
        .collect()
}
