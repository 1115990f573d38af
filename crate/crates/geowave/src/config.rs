//! Run configuration: flat key-value text with typed validation and
//! explicit units in key names. Lengths are chart lengths (the wave speed
//! is one, so times share the unit).

use crate::error::{Error, Result};
use crate::manifold::{
    ConformalProfile, CoefficientField, FieldShape, MetricField, MetricFamily, Poly2,
};
use crate::recover::RecoveryConfig;
use crate::wavesim::estimate_diameter;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Full,
    Bypass,
    VerifyOnly,
}

impl RunMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Full => "full",
            RunMode::Bypass => "bypass",
            RunMode::VerifyOnly => "verify-only",
        }
    }
}

/// Everything a batch run consumes; see `configs/` for annotated examples.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub metric_family: String,
    pub metric_params: BTreeMap<String, f64>,
    pub radius_m: f64,
    pub radius_m1: f64,

    /// Coefficient pair specs: (a1, q1) and (a2, q2).
    pub a1: FieldSpec,
    pub q1: FieldSpec,
    pub a2: FieldSpec,
    pub q2: FieldSpec,

    pub grid_cells_per_axis: usize,
    pub grid_boundary_samples: usize,
    pub time_horizon_lengths: f64,
    pub time_cfl_ratio: f64,

    pub probe_eps_lengths: f64,
    pub probe_h_sweep: Vec<f64>,

    pub fan_boundary_points: usize,
    pub fan_entry_angles: usize,

    pub invert_pixels_per_axis: usize,
    pub invert_lambda_rel: f64,

    /// Empty string follows the asymptotic kappa schedule.
    pub recover_kappa: Option<f64>,
    pub recover_coverage_threshold: f64,

    pub kernel_check_kappas: Vec<f64>,

    pub holder_amplitudes: Vec<f64>,
    pub holder_probe_count: usize,

    pub mode: RunMode,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Closed-form coefficient field description.
#[derive(Debug, Clone)]
pub struct FieldSpec {
    pub shape: String,
    pub amp: f64,
    pub center: [f64; 2],
    pub radius: f64,
    pub sigma: f64,
}

impl FieldSpec {
    pub fn zero() -> FieldSpec {
        FieldSpec {
            shape: "zero".to_string(),
            amp: 0.0,
            center: [0.0, 0.0],
            radius: 0.5,
            sigma: 0.3,
        }
    }

    pub fn build(&self) -> Result<CoefficientField> {
        let shape = match self.shape.as_str() {
            "zero" => FieldShape::Zero,
            "constant" => FieldShape::Constant(self.amp),
            "bump" => FieldShape::Bump {
                amp: self.amp,
                center: self.center,
                radius: self.radius,
            },
            "gaussian" => FieldShape::Gaussian {
                amp: self.amp,
                center: self.center,
                sigma: self.sigma,
            },
            other => {
                return Err(Error::Config {
                    line: 0,
                    message: format!("unknown field shape '{other}'"),
                })
            }
        };
        Ok(CoefficientField::new(shape, self.amp.abs()))
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            metric_family: "euclidean".to_string(),
            metric_params: BTreeMap::new(),
            radius_m: 1.0,
            radius_m1: 1.2,
            a1: FieldSpec::zero(),
            q1: FieldSpec::zero(),
            a2: FieldSpec::zero(),
            q2: FieldSpec::zero(),
            grid_cells_per_axis: 128,
            grid_boundary_samples: 384,
            time_horizon_lengths: 3.5,
            time_cfl_ratio: 0.45,
            probe_eps_lengths: 0.45,
            probe_h_sweep: vec![0.1, 0.05],
            fan_boundary_points: 96,
            fan_entry_angles: 64,
            invert_pixels_per_axis: 64,
            invert_lambda_rel: 1e-3,
            recover_kappa: Some(0.96),
            recover_coverage_threshold: 0.05,
            kernel_check_kappas: vec![0.5, 0.9, 0.99],
            holder_amplitudes: vec![0.05, 0.1, 0.2, 0.4],
            holder_probe_count: 3,
            mode: RunMode::Full,
            seed: 42,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parse flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(key, value, line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let bad = |message: String| Error::Config { line, message };
        let f = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| bad(format!("'{v}' is not a number (key {key})")))
        };
        let u = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| bad(format!("'{v}' is not a positive integer (key {key})")))
        };
        let list = |v: &str| -> Result<Vec<f64>> {
            v.split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| bad(format!("'{p}' is not a number in list (key {key})")))
                })
                .collect()
        };
        if let Some(rest) = key.strip_prefix("metric.param.") {
            self.metric_params.insert(rest.to_string(), f(value)?);
            return Ok(());
        }
        if let Some(rest) = key.strip_prefix("coeff.") {
            let (which, field) = rest.split_once('.').ok_or_else(|| {
                bad(format!("coefficient keys look like coeff.a1.shape (got {key})"))
            })?;
            let spec = match which {
                "a1" => &mut self.a1,
                "q1" => &mut self.q1,
                "a2" => &mut self.a2,
                "q2" => &mut self.q2,
                other => return Err(bad(format!("unknown coefficient '{other}'"))),
            };
            match field {
                "shape" => spec.shape = value.to_string(),
                "amp" => spec.amp = f(value)?,
                "center_x" => spec.center[0] = f(value)?,
                "center_y" => spec.center[1] = f(value)?,
                "radius" => spec.radius = f(value)?,
                "sigma" => spec.sigma = f(value)?,
                other => return Err(bad(format!("unknown field key '{other}'"))),
            }
            return Ok(());
        }
        match key {
            "metric.family" => self.metric_family = value.to_string(),
            "metric.radius_m" => self.radius_m = f(value)?,
            "metric.radius_m1" => self.radius_m1 = f(value)?,
            "grid.cells_per_axis" => self.grid_cells_per_axis = u(value)?,
            "grid.boundary_samples" => self.grid_boundary_samples = u(value)?,
            "time.horizon_lengths" => self.time_horizon_lengths = f(value)?,
            "time.cfl_ratio" => self.time_cfl_ratio = f(value)?,
            "probe.eps_lengths" => self.probe_eps_lengths = f(value)?,
            "probe.h_sweep" => self.probe_h_sweep = list(value)?,
            "fan.boundary_points" => self.fan_boundary_points = u(value)?,
            "fan.entry_angles" => self.fan_entry_angles = u(value)?,
            "invert.pixels_per_axis" => self.invert_pixels_per_axis = u(value)?,
            "invert.lambda_rel" => self.invert_lambda_rel = f(value)?,
            "recover.kappa" => {
                self.recover_kappa = if value.is_empty() || value == "schedule" {
                    None
                } else {
                    Some(f(value)?)
                }
            }
            "recover.coverage_threshold" => self.recover_coverage_threshold = f(value)?,
            "kernel.check_kappas" => self.kernel_check_kappas = list(value)?,
            "holder.amplitudes" => self.holder_amplitudes = list(value)?,
            "holder.probe_count" => self.holder_probe_count = u(value)?,
            "mode" => {
                self.mode = match value {
                    "full" => RunMode::Full,
                    "bypass" => RunMode::Bypass,
                    "verify-only" => RunMode::VerifyOnly,
                    other => return Err(bad(format!("unknown mode '{other}'"))),
                }
            }
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| bad(format!("'{value}' is not a seed")))?
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(bad(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::Config { line: 0, message };
        if !(self.time_cfl_ratio > 0.0 && self.time_cfl_ratio < 1.0) {
            return Err(Error::CflViolation(self.time_cfl_ratio));
        }
        for (name, v) in [
            ("grid.cells_per_axis", self.grid_cells_per_axis),
            ("grid.boundary_samples", self.grid_boundary_samples),
            ("fan.boundary_points", self.fan_boundary_points),
            ("fan.entry_angles", self.fan_entry_angles),
            ("invert.pixels_per_axis", self.invert_pixels_per_axis),
        ] {
            if v == 0 {
                return Err(bad(format!("{name} must be positive")));
            }
        }
        if self.probe_h_sweep.is_empty() {
            return Err(bad("probe.h_sweep must not be empty".to_string()));
        }
        for &h in &self.probe_h_sweep {
            if !(h > 0.0 && h < 1.0) {
                return Err(bad(format!("h = {h} outside (0, 1)")));
            }
        }
        for &k in &self.kernel_check_kappas {
            if !(k > 0.0 && k < 1.0) {
                return Err(bad(format!("kernel kappa = {k} outside (0, 1)")));
            }
        }
        if let Some(k) = self.recover_kappa {
            if !(k > 0.0 && k < 1.0) {
                return Err(bad(format!("recover.kappa = {k} outside (0, 1)")));
            }
        }
        if self.probe_eps_lengths <= 0.0 {
            return Err(bad("probe.eps_lengths must be positive".to_string()));
        }
        Ok(())
    }

    pub fn build_metric(&self) -> Result<MetricField> {
        let p = |name: &str, default: f64| -> f64 {
            self.metric_params.get(name).copied().unwrap_or(default)
        };
        let family = match self.metric_family.as_str() {
            "euclidean" => MetricFamily::Euclidean,
            "conformal-bump" => MetricFamily::Conformal(ConformalProfile::Bump {
                amp: p("amp", 0.1),
                sigma: p("sigma", 0.5),
                center: [p("center_x", 0.0), p("center_y", 0.0)],
            }),
            "sphere-patch" => MetricFamily::Conformal(ConformalProfile::SpherePatch),
            "hyperbolic-patch" => MetricFamily::Conformal(ConformalProfile::HyperbolicPatch),
            "conformal-linear" => MetricFamily::Conformal(ConformalProfile::Poly(Poly2::new(
                vec![(1, 0, p("slope_x", 0.1)), (0, 1, p("slope_y", 0.0))],
            ))),
            other => {
                return Err(Error::Config {
                    line: 0,
                    message: format!("unknown metric family '{other}'"),
                })
            }
        };
        MetricField::new(family, self.radius_m, self.radius_m1)
    }

    /// Horizon invariant of the probing geometry: T > Diam(M1) + 2 eps.
    pub fn validate_horizon(&self, metric: &MetricField) -> Result<()> {
        let diam = estimate_diameter(metric)?;
        let required = diam + 2.0 * self.probe_eps_lengths;
        if self.time_horizon_lengths <= required {
            return Err(Error::HorizonTooShort {
                horizon: self.time_horizon_lengths,
                required,
            });
        }
        Ok(())
    }

    pub fn recovery_config(&self) -> RecoveryConfig {
        RecoveryConfig {
            h_sweep: self.probe_h_sweep.clone(),
            eps: self.probe_eps_lengths,
            lambda_rel: self.invert_lambda_rel,
            n_pixels: self.invert_pixels_per_axis,
            n_fiber: 2048,
            coverage_threshold: self.recover_coverage_threshold,
            kappa_override: self.recover_kappa,
        }
    }

    /// Every knob any stage consumes, as manifest rows.
    pub fn manifest_entries(&self) -> Vec<(String, String)> {
        use crate::csvio::fmt17;
        let mut out: Vec<(String, String)> = vec![
            ("metric.family".into(), self.metric_family.clone()),
            ("metric.radius_m".into(), fmt17(self.radius_m)),
            ("metric.radius_m1".into(), fmt17(self.radius_m1)),
            (
                "grid.cells_per_axis".into(),
                self.grid_cells_per_axis.to_string(),
            ),
            (
                "grid.boundary_samples".into(),
                self.grid_boundary_samples.to_string(),
            ),
            (
                "time.horizon_lengths".into(),
                fmt17(self.time_horizon_lengths),
            ),
            ("time.cfl_ratio".into(), fmt17(self.time_cfl_ratio)),
            ("probe.eps_lengths".into(), fmt17(self.probe_eps_lengths)),
            (
                "probe.h_sweep".into(),
                self.probe_h_sweep
                    .iter()
                    .map(|v| fmt17(*v))
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
            (
                "fan.boundary_points".into(),
                self.fan_boundary_points.to_string(),
            ),
            ("fan.entry_angles".into(), self.fan_entry_angles.to_string()),
            (
                "invert.pixels_per_axis".into(),
                self.invert_pixels_per_axis.to_string(),
            ),
            ("invert.lambda_rel".into(), fmt17(self.invert_lambda_rel)),
            (
                "recover.kappa".into(),
                self.recover_kappa
                    .map(fmt17)
                    .unwrap_or_else(|| "schedule".into()),
            ),
            (
                "recover.coverage_threshold".into(),
                fmt17(self.recover_coverage_threshold),
            ),
            (
                "kernel.check_kappas".into(),
                self.kernel_check_kappas
                    .iter()
                    .map(|v| fmt17(*v))
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
            (
                "holder.amplitudes".into(),
                self.holder_amplitudes
                    .iter()
                    .map(|v| fmt17(*v))
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
            (
                "holder.probe_count".into(),
                self.holder_probe_count.to_string(),
            ),
            ("mode".into(), self.mode.as_str().into()),
            ("seed".into(), self.seed.to_string()),
        ];
        for (k, v) in &self.metric_params {
            out.push((format!("metric.param.{k}"), fmt17(*v)));
        }
        for (name, spec) in [
            ("a1", &self.a1),
            ("q1", &self.q1),
            ("a2", &self.a2),
            ("q2", &self.q2),
        ] {
            out.push((format!("coeff.{name}.shape"), spec.shape.clone()));
            out.push((format!("coeff.{name}.amp"), fmt17(spec.amp)));
            out.push((format!("coeff.{name}.center_x"), fmt17(spec.center[0])));
            out.push((format!("coeff.{name}.center_y"), fmt17(spec.center[1])));
            out.push((format!("coeff.{name}.radius"), fmt17(spec.radius)));
            out.push((format!("coeff.{name}.sigma"), fmt17(spec.sigma)));
        }
        out
    }
}
