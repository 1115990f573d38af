//! Metric families on an extended 2-D chart, with Christoffel symbols,
//! curvature quantities, the `k+` characteristic and a simplicity check.
//!
//! The manifold `M` and its extension `M1` are concentric disks in a chart
//! rectangle. Metrics are closed-form evaluable with hand-coded first and
//! second derivatives, so Christoffel and curvature tests have analytic
//! oracles and carry no interpolation error.

use crate::error::{Error, Result};
use crate::geodesics::{PhasePoint, Tracer, TracerConfig};

pub type Vec2 = [f64; 2];

/// Symmetric 2x2 tensor (metric, its inverse, or a derivative of either).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };
    pub const ZERO: Sym2 = Sym2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn inverse(&self) -> Sym2 {
        let d = self.det();
        Sym2 {
            xx: self.yy / d,
            xy: -self.xy / d,
            yy: self.xx / d,
        }
    }

    /// Matrix-vector product.
    pub fn mv(&self, v: Vec2) -> Vec2 {
        [
            self.xx * v[0] + self.xy * v[1],
            self.xy * v[0] + self.yy * v[1],
        ]
    }

    /// Bilinear form u^T S v.
    pub fn dot(&self, u: Vec2, v: Vec2) -> f64 {
        u[0] * (self.xx * v[0] + self.xy * v[1]) + u[1] * (self.xy * v[0] + self.yy * v[1])
    }

    pub fn norm(&self, v: Vec2) -> f64 {
        self.dot(v, v).sqrt()
    }

    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2 {
            xx: self.xx * s,
            xy: self.xy * s,
            yy: self.yy * s,
        }
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2 {
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            yy: self.yy + o.yy,
        }
    }

    /// Largest eigenvalue (symmetric 2x2).
    pub fn max_eigenvalue(&self) -> f64 {
        let tr = self.xx + self.yy;
        let disc = ((self.xx - self.yy) * 0.5).hypot(self.xy);
        0.5 * tr + disc
    }

    #[rustfmt::skip]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            _ => self.xy,
        }
    }
}

/// Bivariate polynomial sum of `c * x^px * y^py` terms.
#[derive(Debug, Clone, Default)]
pub struct Poly2 {
    pub terms: Vec<(u32, u32, f64)>,
}

impl Poly2 {
    pub fn new(terms: Vec<(u32, u32, f64)>) -> Self {
        Poly2 { terms }
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        self.terms
            .iter()
            .map(|&(px, py, c)| c * x[0].powi(px as i32) * x[1].powi(py as i32))
            .sum()
    }

    /// Value with first and second derivatives: `[v, vx, vy, vxx, vxy, vyy]`.
    pub fn jet2(&self, x: Vec2) -> [f64; 6] {
        let mut out = [0.0; 6];
        for &(px, py, c) in &self.terms {
            let (p, q) = (px as i32, py as i32);
            let xp = x[0].powi(p);
            let yq = x[1].powi(q);
            out[0] += c * xp * yq;
            if p >= 1 {
                out[1] += c * p as f64 * x[0].powi(p - 1) * yq;
            }
            if q >= 1 {
                out[2] += c * q as f64 * xp * x[1].powi(q - 1);
            }
            if p >= 2 {
                out[3] += c * (p * (p - 1)) as f64 * x[0].powi(p - 2) * yq;
            }
            if p >= 1 && q >= 1 {
                out[4] += c * (p * q) as f64 * x[0].powi(p - 1) * x[1].powi(q - 1);
            }
            if q >= 2 {
                out[5] += c * (q * (q - 1)) as f64 * xp * x[1].powi(q - 2);
            }
        }
        out
    }
}

/// Conformal factor profile: the metric is `e^{2 lambda} delta`.
#[derive(Debug, Clone)]
pub enum ConformalProfile {
    /// lambda given by a low-degree polynomial.
    Poly(Poly2),
    /// lambda = amp * exp(-|x - center|^2 / (2 sigma^2)); a smooth bump,
    /// equivalently the sound-speed family c^{-2} delta with c = e^{-lambda}.
    Bump { amp: f64, sigma: f64, center: Vec2 },
    /// Stereographic round-sphere patch: g = 4/(1+|x|^2)^2 delta, K = +1.
    SpherePatch,
    /// Poincare disk patch: g = 4/(1-|x|^2)^2 delta, K = -1.
    HyperbolicPatch,
}

impl ConformalProfile {
    /// lambda with first and second derivatives `[v, vx, vy, vxx, vxy, vyy]`.
    fn jet2(&self, x: Vec2) -> [f64; 6] {
        match self {
            ConformalProfile::Poly(p) => p.jet2(x),
            ConformalProfile::Bump { amp, sigma, center } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                let s2 = sigma * sigma;
                let v = amp * (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
                [
                    v,
                    -v * dx / s2,
                    -v * dy / s2,
                    v * (dx * dx / (s2 * s2) - 1.0 / s2),
                    v * dx * dy / (s2 * s2),
                    v * (dy * dy / (s2 * s2) - 1.0 / s2),
                ]
            }
            ConformalProfile::SpherePatch => {
                // lambda = ln 2 - ln(1 + r^2)
                let r2 = x[0] * x[0] + x[1] * x[1];
                let w = 1.0 + r2;
                [
                    (2.0f64).ln() - w.ln(),
                    -2.0 * x[0] / w,
                    -2.0 * x[1] / w,
                    -2.0 / w + 4.0 * x[0] * x[0] / (w * w),
                    4.0 * x[0] * x[1] / (w * w),
                    -2.0 / w + 4.0 * x[1] * x[1] / (w * w),
                ]
            }
            ConformalProfile::HyperbolicPatch => {
                // lambda = ln 2 - ln(1 - r^2), valid for |x| < 1
                let r2 = x[0] * x[0] + x[1] * x[1];
                let w = 1.0 - r2;
                [
                    (2.0f64).ln() - w.ln(),
                    2.0 * x[0] / w,
                    2.0 * x[1] / w,
                    2.0 / w + 4.0 * x[0] * x[0] / (w * w),
                    4.0 * x[0] * x[1] / (w * w),
                    2.0 / w + 4.0 * x[1] * x[1] / (w * w),
                ]
            }
        }
    }
}

/// Shipped metric families. All are simple for small perturbations and
/// admit analytic oracles.
#[derive(Debug, Clone)]
pub enum MetricFamily {
    Euclidean,
    Conformal(ConformalProfile),
    /// delta plus a symmetric polynomial perturbation.
    PolyPerturb { p11: Poly2, p12: Poly2, p22: Poly2 },
}

/// Chart rectangle.
#[derive(Debug, Clone, Copy)]
pub struct ChartBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl ChartBounds {
    pub fn contains(&self, x: Vec2) -> bool {
        x[0] >= self.x_min && x[0] <= self.x_max && x[1] >= self.y_min && x[1] <= self.y_max
    }

    pub fn square(half: f64) -> ChartBounds {
        ChartBounds {
            x_min: -half,
            x_max: half,
            y_min: -half,
            y_max: half,
        }
    }
}

/// Pointwise metric data: matrix, inverse, volume density and first
/// derivatives (`dg[k]` is the partial derivative in direction `k`).
#[derive(Debug, Clone, Copy)]
pub struct MetricEval {
    pub g: Sym2,
    pub inv: Sym2,
    pub sqrt_det: f64,
    pub dg: [Sym2; 2],
}

/// Christoffel symbols; `gamma[k][i][j]` holds the symbol with upper
/// index `k`, symmetric in `(i, j)`.
#[derive(Debug, Clone, Copy)]
pub struct Christoffel {
    pub gamma: [[[f64; 2]; 2]; 2],
}

/// Metric on the chart containing `M` (disk of radius `radius_m`) and its
/// extension `M1` (disk of radius `radius_m1`), both centered at the origin.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub family: MetricFamily,
    pub chart: ChartBounds,
    pub radius_m: f64,
    pub radius_m1: f64,
}

impl MetricField {
    /// Metric over an auto-sized chart containing `M1` with padding.
    pub fn new(family: MetricFamily, radius_m: f64, radius_m1: f64) -> Result<Self> {
        let mut half = radius_m1 * 1.1 + 0.1;
        // The hyperbolic profile lives on the open unit disk; keep the chart
        // corners strictly inside it.
        if let MetricFamily::Conformal(ConformalProfile::HyperbolicPatch) = &family {
            half = half.min(0.70);
            if radius_m1 >= half {
                return Err(Error::InvalidParameter {
                    name: "radius_m1",
                    value: radius_m1,
                    reason: "hyperbolic patch requires radius_m1 < 0.70",
                });
            }
        }
        let chart = ChartBounds::square(half);
        Self::with_chart(family, chart, radius_m, radius_m1)
    }

    pub fn with_chart(
        family: MetricFamily,
        chart: ChartBounds,
        radius_m: f64,
        radius_m1: f64,
    ) -> Result<Self> {
        if !(radius_m > 0.0) {
            return Err(Error::InvalidParameter {
                name: "radius_m",
                value: radius_m,
                reason: "must be positive",
            });
        }
        if !(radius_m1 > radius_m) {
            return Err(Error::InvalidParameter {
                name: "radius_m1",
                value: radius_m1,
                reason: "M must lie in the interior of M1 with positive margin",
            });
        }
        let field = MetricField {
            family,
            chart,
            radius_m,
            radius_m1,
        };
        field.validate_positive_definite()?;
        Ok(field)
    }

    /// Unit-disk M inside an extension of radius 1.2.
    pub fn unit_disk(family: MetricFamily) -> Result<Self> {
        Self::new(family, 1.0, 1.2)
    }

    /// Positive margin between M and the boundary of M1.
    pub fn margin(&self) -> f64 {
        self.radius_m1 - self.radius_m
    }

    fn validate_positive_definite(&self) -> Result<()> {
        let n = 17;
        for i in 0..n {
            for j in 0..n {
                let x = [
                    self.chart.x_min
                        + (self.chart.x_max - self.chart.x_min) * i as f64 / (n - 1) as f64,
                    self.chart.y_min
                        + (self.chart.y_max - self.chart.y_min) * j as f64 / (n - 1) as f64,
                ];
                let g = self.components(x);
                if !(g.det() > 0.0 && g.xx > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "metric",
                        value: g.det(),
                        reason: "metric is not positive definite on the chart",
                    });
                }
            }
        }
        Ok(())
    }

    fn check_domain(&self, x: Vec2) -> Result<()> {
        if self.chart.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain(x[0], x[1]))
        }
    }

    /// Raw metric components without domain check (used by the validators).
    fn components(&self, x: Vec2) -> Sym2 {
        match &self.family {
            MetricFamily::Euclidean => Sym2::IDENTITY,
            MetricFamily::Conformal(p) => {
                let e2l = (2.0 * p.jet2(x)[0]).exp();
                Sym2 {
                    xx: e2l,
                    xy: 0.0,
                    yy: e2l,
                }
            }
            MetricFamily::PolyPerturb { p11, p12, p22 } => Sym2 {
                xx: 1.0 + p11.eval(x),
                xy: p12.eval(x),
                yy: 1.0 + p22.eval(x),
            },
        }
    }

    /// Metric matrix, inverse, volume density and first derivatives.
    pub fn eval(&self, x: Vec2) -> Result<MetricEval> {
        self.check_domain(x)?;
        let (g, dg) = match &self.family {
            MetricFamily::Euclidean => (Sym2::IDENTITY, [Sym2::ZERO, Sym2::ZERO]),
            MetricFamily::Conformal(p) => {
                let j = p.jet2(x);
                let e2l = (2.0 * j[0]).exp();
                let g = Sym2 {
                    xx: e2l,
                    xy: 0.0,
                    yy: e2l,
                };
                let dgx = Sym2 {
                    xx: 2.0 * j[1] * e2l,
                    xy: 0.0,
                    yy: 2.0 * j[1] * e2l,
                };
                let dgy = Sym2 {
                    xx: 2.0 * j[2] * e2l,
                    xy: 0.0,
                    yy: 2.0 * j[2] * e2l,
                };
                (g, [dgx, dgy])
            }
            MetricFamily::PolyPerturb { p11, p12, p22 } => {
                let j11 = p11.jet2(x);
                let j12 = p12.jet2(x);
                let j22 = p22.jet2(x);
                let g = Sym2 {
                    xx: 1.0 + j11[0],
                    xy: j12[0],
                    yy: 1.0 + j22[0],
                };
                let dgx = Sym2 {
                    xx: j11[1],
                    xy: j12[1],
                    yy: j22[1],
                };
                let dgy = Sym2 {
                    xx: j11[2],
                    xy: j12[2],
                    yy: j22[2],
                };
                (g, [dgx, dgy])
            }
        };
        Ok(MetricEval {
            g,
            inv: g.inverse(),
            sqrt_det: g.det().sqrt(),
            dg,
        })
    }

    /// Second derivatives of the metric: `[d2g_xx, d2g_xy, d2g_yy]` where the
    /// suffix names the differentiation directions.
    pub fn d2g(&self, x: Vec2) -> Result<[Sym2; 3]> {
        self.check_domain(x)?;
        Ok(match &self.family {
            MetricFamily::Euclidean => [Sym2::ZERO; 3],
            MetricFamily::Conformal(p) => {
                let j = p.jet2(x);
                let e2l = (2.0 * j[0]).exp();
                let second = |lab: f64, la: f64, lb: f64| (2.0 * lab + 4.0 * la * lb) * e2l;
                let diag = |v: f64| Sym2 {
                    xx: v,
                    xy: 0.0,
                    yy: v,
                };
                [
                    diag(second(j[3], j[1], j[1])),
                    diag(second(j[4], j[1], j[2])),
                    diag(second(j[5], j[2], j[2])),
                ]
            }
            MetricFamily::PolyPerturb { p11, p12, p22 } => {
                let j11 = p11.jet2(x);
                let j12 = p12.jet2(x);
                let j22 = p22.jet2(x);
                let pick = |k: usize| Sym2 {
                    xx: j11[k],
                    xy: j12[k],
                    yy: j22[k],
                };
                [pick(3), pick(4), pick(5)]
            }
        })
    }

    /// Christoffel symbols of the Levi-Civita connection.
    pub fn christoffel(&self, x: Vec2) -> Result<Christoffel> {
        let ev = self.eval(x)?;
        let mut gamma = [[[0.0; 2]; 2]; 2];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = 0.0;
                    for l in 0..2 {
                        s += ev.inv.entry(k, l)
                            * (ev.dg[i].entry(j, l) + ev.dg[j].entry(i, l) - ev.dg[l].entry(i, j));
                    }
                    gamma[k][i][j] = 0.5 * s;
                }
            }
        }
        Ok(Christoffel { gamma })
    }

    /// Gaussian curvature by the Brioschi formula (equals the sectional
    /// curvature in dimension 2).
    pub fn gaussian_curvature(&self, x: Vec2) -> Result<f64> {
        let ev = self.eval(x)?;
        let d2 = self.d2g(x)?;
        let (e, f, g) = (ev.g.xx, ev.g.xy, ev.g.yy);
        let (e_u, e_v) = (ev.dg[0].xx, ev.dg[1].xx);
        let (f_u, f_v) = (ev.dg[0].xy, ev.dg[1].xy);
        let (g_u, g_v) = (ev.dg[0].yy, ev.dg[1].yy);
        let e_vv = d2[2].xx;
        let f_uv = d2[1].xy;
        let g_uu = d2[0].yy;
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let m1 = [
            [
                -0.5 * e_vv + f_uv - 0.5 * g_uu,
                0.5 * e_u,
                f_u - 0.5 * e_v,
            ],
            [f_v - 0.5 * g_u, e, f],
            [0.5 * g_v, f, g],
        ];
        let m2 = [[0.0, 0.5 * e_v, 0.5 * g_u], [0.5 * e_v, e, f], [0.5 * g_u, f, g]];
        let den = e * g - f * f;
        Ok((det3(m1) - det3(m2)) / (den * den))
    }

    /// Positive part of the sectional curvature.
    pub fn k_plus_pointwise(&self, x: Vec2) -> Result<f64> {
        Ok(self.gaussian_curvature(x)?.max(0.0))
    }

    /// Level function of the selected boundary circle (negative inside).
    pub fn boundary_value(&self, x: Vec2, boundary: BoundaryId) -> f64 {
        let r = x[0].hypot(x[1]);
        r - self.boundary_radius(boundary)
    }

    pub fn boundary_radius(&self, boundary: BoundaryId) -> f64 {
        match boundary {
            BoundaryId::Inner => self.radius_m,
            BoundaryId::Outer => self.radius_m1,
        }
    }

    /// Point on the selected boundary at chart angle `phi`.
    pub fn boundary_point(&self, phi: f64, boundary: BoundaryId) -> Vec2 {
        let r = self.boundary_radius(boundary);
        [r * phi.cos(), r * phi.sin()]
    }

    /// g-unit outward normal vector at a boundary point.
    pub fn outward_normal(&self, x: Vec2, boundary: BoundaryId) -> Result<Vec2> {
        let _ = boundary;
        let ev = self.eval(x)?;
        let r = x[0].hypot(x[1]);
        let db = [x[0] / r, x[1] / r];
        let v = ev.inv.mv(db);
        let n = ev.g.norm(v);
        Ok([v[0] / n, v[1] / n])
    }

    /// g-orthonormal fiber frame at a boundary point: `e1` is the inward
    /// unit normal, `e2` completes the frame tangentially.
    pub fn fiber_frame(&self, y: Vec2, boundary: BoundaryId) -> Result<FiberFrame> {
        let ev = self.eval(y)?;
        let nu = self.outward_normal(y, boundary)?;
        let e1 = [-nu[0], -nu[1]];
        // Tangent candidate: rotate the chart position by 90 degrees, then
        // Gram-Schmidt against e1 in the g inner product.
        let t0 = [-y[1], y[0]];
        let c = ev.g.dot(t0, e1);
        let mut e2 = [t0[0] - c * e1[0], t0[1] - c * e1[1]];
        let n = ev.g.norm(e2);
        e2 = [e2[0] / n, e2[1] / n];
        Ok(FiberFrame { y, e1, e2, g: ev.g })
    }
}

/// Which boundary circle: `Inner` is the boundary of M, `Outer` of M1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryId {
    Inner,
    Outer,
}

/// g-orthonormal frame of the tangent fiber at a boundary point.
#[derive(Debug, Clone, Copy)]
pub struct FiberFrame {
    pub y: Vec2,
    /// Inward unit normal.
    pub e1: Vec2,
    /// Tangential unit vector.
    pub e2: Vec2,
    pub g: Sym2,
}

impl FiberFrame {
    /// Unit fiber vector at frame angle `eta` (measured from the inward
    /// normal towards `e2`).
    pub fn direction(&self, eta: f64) -> Vec2 {
        let (s, c) = eta.sin_cos();
        [
            c * self.e1[0] + s * self.e2[0],
            c * self.e1[1] + s * self.e2[1],
        ]
    }

    /// Frame angle of a fiber vector (not necessarily unit).
    pub fn angle_of(&self, xi: Vec2) -> f64 {
        let a = self.g.dot(xi, self.e1);
        let b = self.g.dot(xi, self.e2);
        b.atan2(a)
    }
}

// ----------------------------------------------------------------------------
// Coefficient fields
// ----------------------------------------------------------------------------

/// Fourier mode of a band-limited field.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    pub kx: i32,
    pub ky: i32,
    pub amp: f64,
    pub phase: f64,
}

/// Closed-form scalar field shapes on the chart.
#[derive(Debug, Clone)]
pub enum FieldShape {
    Zero,
    Constant(f64),
    /// `amp * exp(1 - 1/(1 - (|x-c|/radius)^2))` inside the ball of the given
    /// radius, identically zero outside; smooth with compact support.
    Bump { amp: f64, center: Vec2, radius: f64 },
    Gaussian { amp: f64, center: Vec2, sigma: f64 },
    /// Cosine sum under a smooth compactly supported envelope of the given
    /// support radius; wavenumbers are in units of pi / support.
    BandLimited { support: f64, modes: Vec<Mode> },
    Scaled(f64, Box<FieldShape>),
    Sum(Vec<FieldShape>),
}

impl FieldShape {
    pub fn eval(&self, x: Vec2) -> f64 {
        match self {
            FieldShape::Zero => 0.0,
            FieldShape::Constant(c) => *c,
            FieldShape::Bump { amp, center, radius } => {
                let s2 = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2))
                    / (radius * radius);
                if s2 >= 1.0 {
                    0.0
                } else {
                    amp * (1.0 - 1.0 / (1.0 - s2)).exp()
                }
            }
            FieldShape::Gaussian { amp, center, sigma } => {
                let d2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                amp * (-d2 / (2.0 * sigma * sigma)).exp()
            }
            FieldShape::BandLimited { support, modes } => {
                let env = FieldShape::Bump {
                    amp: 1.0,
                    center: [0.0, 0.0],
                    radius: *support,
                }
                .eval(x);
                if env == 0.0 {
                    return 0.0;
                }
                let k0 = std::f64::consts::PI / support;
                let s: f64 = modes
                    .iter()
                    .map(|m| {
                        m.amp * (k0 * (m.kx as f64 * x[0] + m.ky as f64 * x[1]) + m.phase).cos()
                    })
                    .sum();
                env * s
            }
            FieldShape::Scaled(factor, inner) => factor * inner.eval(x),
            FieldShape::Sum(parts) => parts.iter().map(|p| p.eval(x)).sum(),
        }
    }

    /// Pointwise difference of two shapes.
    pub fn difference(lhs: &FieldShape, rhs: &FieldShape) -> FieldShape {
        FieldShape::Sum(vec![
            lhs.clone(),
            FieldShape::Scaled(-1.0, Box::new(rhs.clone())),
        ])
    }
}

/// Scalar coefficient field (absorption `a` or potential `q`) with
/// admissibility metadata. Units under unit wave speed: inverse time for
/// `a`, inverse time squared for `q`.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub shape: FieldShape,
    /// Admissibility constant (`m1` for absorption, `m2` for potentials).
    pub bound: f64,
    /// Sobolev smoothness index of the admissible set (eta > n/2 = 1).
    pub smoothness: f64,
}

impl CoefficientField {
    pub fn new(shape: FieldShape, bound: f64) -> Self {
        CoefficientField {
            shape,
            bound,
            smoothness: 2.0,
        }
    }

    pub fn zero() -> Self {
        CoefficientField::new(FieldShape::Zero, 0.0)
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        self.shape.eval(x)
    }

    /// Grid estimate of the sup norm over the disk of the given radius.
    pub fn sup_norm(&self, radius: f64) -> f64 {
        let n = 101;
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [
                    -radius + 2.0 * radius * i as f64 / (n - 1) as f64,
                    -radius + 2.0 * radius * j as f64 / (n - 1) as f64,
                ];
                if x[0].hypot(x[1]) <= radius {
                    m = m.max(self.eval(x).abs());
                }
            }
        }
        m
    }

    /// True when the field vanishes outside the disk of radius `r` (checked
    /// on a sample ring sweep). Difference fields a1 - a2 and q1 - q2 must
    /// vanish on M1 \ M.
    pub fn vanishes_outside(&self, r: f64, r_outer: f64) -> bool {
        let n_ring = 6;
        let n_ang = 64;
        for i in 0..n_ring {
            let rho = r + (r_outer - r) * (i as f64 + 0.5) / n_ring as f64;
            for j in 0..n_ang {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / n_ang as f64;
                if self.eval([rho * phi.cos(), rho * phi.sin()]).abs() > 1e-14 {
                    return false;
                }
            }
        }
        true
    }
}

// ----------------------------------------------------------------------------
// Curvature report and simplicity
// ----------------------------------------------------------------------------

/// Curvature survey of the manifold: pointwise sectional curvature, its
/// positive part, the `k+` characteristic as a fan supremum, the boundary
/// convexity margin and a conjugate-point flag.
#[derive(Debug, Clone)]
pub struct CurvatureReport {
    /// (sample point, K, K+) triples.
    pub samples: Vec<(Vec2, f64, f64)>,
    /// sup over the fan of the ray quadrature of t * K+; a lower bound for
    /// the true supremum, reported with the fan size used.
    pub k_plus: f64,
    pub fan_size: usize,
    /// Minimum of the second fundamental form of the outer boundary over a
    /// boundary sample grid.
    pub convexity_margin: f64,
    pub conjugate_point_found: bool,
}

/// Verdict of the simplicity check with the witness ray when it fails.
#[derive(Debug, Clone)]
pub struct SimplicityReport {
    pub simple: bool,
    pub k_plus: f64,
    pub k_plus_below_one: bool,
    pub convexity_margin: f64,
    /// Fan angle (boundary angle, entry angle) of a ray with a Jacobi zero.
    pub witness: Option<(f64, f64)>,
}

/// Second fundamental form of the outer boundary at chart angle `phi`,
/// evaluated on the unit tangent (scalar in dimension 2).
pub fn second_fundamental_form(metric: &MetricField, phi: f64) -> Result<f64> {
    let y = metric.boundary_point(phi, BoundaryId::Outer);
    let ev = metric.eval(y)?;
    let nu = metric.outward_normal(y, BoundaryId::Outer)?;
    // g-unit tangent to the boundary circle.
    let t0 = [-y[1], y[0]];
    let n = ev.g.norm(t0);
    let t = [t0[0] / n, t0[1] / n];
    // (nabla_T nu)^k = T^i (d_i nu^k + Gamma^k_{ij} nu^j), with the normal
    // field extended radially; central differences for d_i nu^k.
    let step = 1e-5;
    let nu_at = |x: Vec2| -> Result<Vec2> {
        let evx = metric.eval(x)?;
        let r = x[0].hypot(x[1]);
        let db = [x[0] / r, x[1] / r];
        let v = evx.inv.mv(db);
        let nn = evx.g.norm(v);
        Ok([v[0] / nn, v[1] / nn])
    };
    let mut dnu = [[0.0; 2]; 2]; // dnu[i][k] = d_i nu^k
    for i in 0..2 {
        let mut xp = y;
        let mut xm = y;
        xp[i] += step;
        xm[i] -= step;
        let np = nu_at(xp)?;
        let nm = nu_at(xm)?;
        for k in 0..2 {
            dnu[i][k] = (np[k] - nm[k]) / (2.0 * step);
        }
    }
    let chris = metric.christoffel(y)?;
    let mut cov = [0.0; 2];
    for k in 0..2 {
        let mut s = 0.0;
        for i in 0..2 {
            let mut v = dnu[i][k];
            for j in 0..2 {
                v += chris.gamma[k][i][j] * nu[j];
            }
            s += t[i] * v;
        }
        cov[k] = s;
    }
    Ok(ev.g.dot(cov, t))
}

/// Survey curvature over interior samples and measure `k+` by quadrature of
/// `t * K+` along a fan of rays entering the inner boundary.
pub fn curvature(
    metric: &MetricField,
    samples: &[Vec2],
    fan_size: usize,
) -> Result<CurvatureReport> {
    let mut out = Vec::with_capacity(samples.len());
    for &x in samples {
        let k = metric.gaussian_curvature(x)?;
        out.push((x, k, k.max(0.0)));
    }
    let tracer = Tracer::new(metric, TracerConfig::default());
    let scan = scan_fan(metric, &tracer, fan_size, BoundaryId::Inner)?;
    let mut margin = f64::INFINITY;
    let n_conv = 64;
    for i in 0..n_conv {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / n_conv as f64;
        margin = margin.min(second_fundamental_form(metric, phi)?);
    }
    Ok(CurvatureReport {
        samples: out,
        k_plus: scan.k_plus,
        fan_size,
        convexity_margin: margin,
        conjugate_point_found: scan.witness.is_some(),
    })
}

struct FanScan {
    k_plus: f64,
    witness: Option<(f64, f64)>,
}

/// Sweep a fan of inward rays from the given boundary; accumulate the
/// `t * K+` quadrature and watch the scalar Jacobi field for zero crossings.
fn scan_fan(
    metric: &MetricField,
    tracer: &Tracer,
    fan_size: usize,
    boundary: BoundaryId,
) -> Result<FanScan> {
    let n_pos = fan_size.max(4);
    let n_ang = 16;
    let mut k_plus: f64 = 0.0;
    let mut witness = None;
    for i in 0..n_pos {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / n_pos as f64;
        let y = metric.boundary_point(phi, boundary);
        let frame = metric.fiber_frame(y, boundary)?;
        for j in 0..n_ang {
            let beta = -std::f64::consts::FRAC_PI_2
                + std::f64::consts::PI * (j as f64 + 0.5) / n_ang as f64;
            let p = PhasePoint {
                x: y,
                xi: frame.direction(beta),
            };
            let sweep = tracer.jacobi_sweep(&p, boundary)?;
            k_plus = k_plus.max(sweep.t_k_plus_integral);
            if witness.is_none() {
                if let Some(_t) = sweep.first_jacobi_zero {
                    witness = Some((phi, beta));
                }
            }
        }
    }
    Ok(FanScan { k_plus, witness })
}

/// Simplicity verdict: strictly convex outer boundary, no conjugate points
/// on a fan of rays, and the `k+ < 1` hypothesis of the stability theorem.
pub fn check_simple(metric: &MetricField, fan_size: usize) -> Result<SimplicityReport> {
    let tracer = Tracer::new(metric, TracerConfig::default());
    let n_conv = 64;
    let mut margin = f64::INFINITY;
    for i in 0..n_conv {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / n_conv as f64;
        margin = margin.min(second_fundamental_form(metric, phi)?);
    }
    let scan = scan_fan(metric, &tracer, fan_size, BoundaryId::Outer)?;
    let inner = scan_fan(metric, &tracer, fan_size, BoundaryId::Inner)?;
    let simple = margin > 0.0 && scan.witness.is_none();
    Ok(SimplicityReport {
        simple,
        k_plus: inner.k_plus,
        k_plus_below_one: inner.k_plus < 1.0,
        convexity_margin: margin,
        witness: scan.witness,
    })
}
