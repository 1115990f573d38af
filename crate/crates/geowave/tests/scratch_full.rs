use geowave::manifold::{CoefficientField, MetricField, MetricFamily};
use geowave::probes::{remainder_norm, FiberWeight, ProbeSpec};
use geowave::wavesim::SpaceTimeGrid;

#[test]
fn remainder_sweep_resolutions() {
    let m = MetricField::new(MetricFamily::Euclidean, 1.0, 1.2).unwrap();
    let zero = CoefficientField::zero();
    for (n, eps) in [(1024usize, 0.35f64)] {
        let horizon = 2.5 + 2.0 * eps + 0.2;
        let grid = SpaceTimeGrid::new(&m, n, horizon, 0.45, 2048).unwrap();
        let spec = ProbeSpec {
            y_angle: std::f64::consts::PI,
            h: 0.1,
            eps,
            weight: FiberWeight::Uniform,
        };
        let t0 = std::time::Instant::now();
        let rep = remainder_norm(&m, &zero, &zero, &grid, &spec, &[0.1, 0.05, 0.025]).unwrap();
        println!(
            "n={} eps={}: norms {:?} ratios {:?} order {:.2} ({:.0?})",
            n, eps, rep.per_h, rep.ratios, rep.fitted_order, t0.elapsed()
        );
    }
    panic!("report");
}
