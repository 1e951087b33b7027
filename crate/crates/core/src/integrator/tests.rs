use nalgebra::DVector;
use num_complex::Complex64;

use super::*;
use crate::dynamics::{SdeParams, XiProfile};
use crate::ensemble::{Ensemble, Execution, RunConfig};
use crate::geometry::{solve_classical_trajectory, Potential, TrajectoryOptions};
use crate::oracles::heat_kernel_1d;
use crate::tube::{TubeOverrides, TubeSpec};

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn spec_1d(potential: Potential, a: f64, b: f64, steps: usize) -> (MetricChart, TubeSpec) {
    let chart = MetricChart::flat(1, potential);
    let opts = TrajectoryOptions { steps, ..Default::default() };
    let traj = solve_classical_trajectory(&chart, &DVector::from_vec(vec![a]), &DVector::from_vec(vec![b]), 1.0, &opts).unwrap();
    let spec = TubeSpec::new(traj, 1.0, &TubeOverrides::default()).unwrap();
    (chart, spec)
}

fn free_params() -> SdeParams {
    SdeParams { barrier_strength: 0.0, ..SdeParams::default() }
}

fn ensemble(potential: Potential, n: usize, seed: u64) -> Ensemble {
    let (chart, spec) = spec_1d(potential, 0.0, 0.0, 64);
    Ensemble::build(chart, spec, free_params(), RunConfig::new(seed, n)).unwrap()
}

#[test]
fn density_examples() {
    let (chart, spec) = spec_1d(Potential::zero(), 0.0, 1.0, 16);
    let p = spec.reference_path();
    assert!(euclidean_density(&chart, &p, 1.0, ActionChannel::PotentialOnly).iter().all(|&v| v == 0.0));
    let osc = MetricChart::flat(1, Potential::harmonic(1.0));
    let rest = crate::tube::DiscretePath::from_fn(p.grid().clone(), 1, |_| vec![0.0]).unwrap();
    assert!(euclidean_density(&osc, &rest, 1.0, ActionChannel::PotentialOnly).iter().all(|&v| v == 0.0));
    let c = MetricChart::flat(1, Potential::constant(0.3));
    assert!(euclidean_density(&c, &p, 2.0, ActionChannel::PotentialOnly).iter().all(|&v| v == 0.15));
    // the free straight line has L_E = ½ everywhere
    let full = euclidean_density(&chart, &p, 1.0, ActionChannel::FullLagrangian);
    assert!(full.iter().all(|v| (v - 0.5).abs() < 1e-12));
}

#[test]
fn trivial_path_integrals() {
    let e = ensemble(Potential::zero(), 500, 1);
    for mode in [Mode::Euclidean, Mode::Lorentzian] {
        let est = stochastic_path_integral(&e, &Observable::constant(one()), mode, ActionChannel::PotentialOnly).unwrap();
        assert_eq!(est.value, one());
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.n_samples, 500);
    }
    let empty = ensemble(Potential::zero(), 0, 1);
    assert_eq!(stochastic_path_integral(&empty, &Observable::constant(one()), Mode::Euclidean, ActionChannel::PotentialOnly).unwrap_err(), Error::NoData);
}

#[test]
fn misdeclared_bound_is_reported() {
    let e = ensemble(Potential::zero(), 50, 2);
    let obs = Observable::path(0.01, |p| Complex64::new(p.point(32)[0], 0.0));
    assert!(matches!(
        stochastic_path_integral(&e, &obs, Mode::Euclidean, ActionChannel::PotentialOnly),
        Err(Error::MisdeclaredBound { .. })
    ));
}

#[test]
fn constant_potential_family() {
    let e = ensemble(Potential::constant(1.0), 200, 3);
    let f = Observable::constant(one());
    let u1 = feynman_kac_expectation(&e, &f, one(), None).unwrap();
    assert!((u1.value - Complex64::new((-1.0f64).exp(), 0.0)).norm() < 1e-14);
    assert!(u1.std_error < 1e-15);
    let u0 = feynman_kac_expectation(&e, &f, Complex64::new(0.0, 0.0), None).unwrap();
    assert_eq!(u0.value, one());
    let series = theta_series(&e, &f, 10, None).unwrap();
    assert!(series.coefficients.iter().all(|a| (a - one()).norm() < 1e-14));
    for theta in [0.5, 1.0, 2.0] {
        let th = Complex64::new(theta, 0.0);
        assert!((series.evaluate(th) - Complex64::new((-theta).exp(), 0.0)).norm() <= series.remainder_bound(th) + 1e-12);
    }
    let l = lorentzian_from_theta(&e, &f, None).unwrap();
    assert!((l.value - Complex64::new(1f64.cos(), 1f64.sin())).norm() < 1e-14);
    let spi = stochastic_path_integral(&e, &f, Mode::Lorentzian, ActionChannel::PotentialOnly).unwrap();
    assert!((spi.value - l.value).norm() < 1e-12);
}

#[test]
fn supplied_bound_too_small_is_rejected() {
    let e = ensemble(Potential::constant(1.0), 20, 3);
    assert!(matches!(
        feynman_kac_expectation(&e, &Observable::constant(one()), one(), Some(0.5)),
        Err(Error::BoundViolation { .. })
    ));
}

#[test]
fn oscillator_series_and_phase() {
    let e = ensemble(Potential::harmonic(1.0), 4000, 4);
    let f = Observable::endpoint(1.0, |_| Complex64::new(1.0, 0.0));
    let table = FeynmanKacTable::build(&e, &f, None).unwrap();
    let series = table.series(12).unwrap();
    for n in 0..=12 {
        assert!(series.coefficient_within_bound(n), "a_{n}");
    }
    for theta in [Complex64::new(0.5, 0.0), one(), Complex64::new(2.0, 0.0), Complex64::new(0.0, -1.0)] {
        let direct = table.expectation(theta).unwrap();
        assert!((direct.value - series.evaluate(theta)).norm() <= series.remainder_bound(theta) + 1e-12);
    }
    let l = lorentzian_from_theta(&e, &f, None).unwrap();
    assert!(l.value.norm() <= f.bound() + 3.0 * l.std_error);
    let spi = stochastic_path_integral(&e, &f, Mode::Lorentzian, ActionChannel::PotentialOnly).unwrap();
    assert!((spi.value - l.value).norm() < 1e-12);
    // real observable, zero potential: purely real
    let free = ensemble(Potential::zero(), 100, 4);
    let fr = Observable::endpoint(2.0, |x| Complex64::new(x[0].cos(), 0.0));
    assert_eq!(lorentzian_from_theta(&free, &fr, None).unwrap().value.im, 0.0);
}

#[test]
fn riemann_product_examples() {
    let e = ensemble(Potential::constant(0.7), 100, 5);
    let grid = e.sampler().grid().clone();
    let f = Observable::constant(one());
    for intervals in [4, 16, 64] {
        let r = riemann_product(&e, &f, &PartitionSpec::uniform(1.0, intervals).unwrap(), Mode::Euclidean, ActionChannel::PotentialOnly).unwrap();
        assert!(r.mean_abs_gap < 1e-14);
        assert!((r.estimate.value.re - (-0.7f64).exp()).abs() < 1e-14);
        assert!(r.holds);
    }
    let full = PartitionSpec::new(grid.times().to_vec()).unwrap();
    let r = riemann_product(&e, &f, &full, Mode::Lorentzian, ActionChannel::PotentialOnly).unwrap();
    let spi = stochastic_path_integral(&e, &f, Mode::Lorentzian, ActionChannel::PotentialOnly).unwrap();
    assert!((r.estimate.value - spi.value).norm() <= 1e-12);
    let off = PartitionSpec::new(vec![0.0, 0.3, 1.0]).unwrap();
    assert!(matches!(riemann_product(&e, &f, &off, Mode::Euclidean, ActionChannel::PotentialOnly), Err(Error::Partition(_))));
}

#[test]
fn riemann_gap_halves_with_mesh() {
    let (chart, spec) = spec_1d(Potential::harmonic(1.0), 0.0, 0.0, 256);
    let e = Ensemble::build(chart, spec, free_params(), RunConfig::new(6, 4000)).unwrap();
    let f = Observable::constant(one());
    let gaps: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let r = riemann_product(&e, &f, &PartitionSpec::uniform(1.0, n).unwrap(), Mode::Euclidean, ActionChannel::PotentialOnly).unwrap();
            assert!(r.holds);
            assert!(r.difference() <= r.mean_abs_gap);
            r.mean_abs_gap
        })
        .collect();
    for w in gaps.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn disintegration_examples() {
    let e = ensemble(Potential::zero(), 2000, 7);
    let n = e.sampler().grid().len();
    let uniform = vec![1.0 / n as f64; n];
    let d = disintegration_check(&e, &Observable::fiber(1.0, |_, _| Complex64::new(1.0, 0.0)), &uniform).unwrap();
    assert!((d.lhs.value - one()).norm() < 1e-12 && (d.rhs.value - one()).norm() < 1e-12);

    let radius = e.sampler().spec().radius;
    let mut point = vec![0.0; n];
    point[20] = 1.0;
    let ind = Observable::fiber(1.0, move |x, _| Complex64::new(if x[0].abs() <= radius / 2.0 { 1.0 } else { 0.0 }, 0.0));
    let d = disintegration_check(&e, &ind, &point).unwrap();
    assert_eq!(d.lhs.value, d.rhs.value);

    let bad = vec![0.5 / n as f64; n];
    assert!(matches!(disintegration_check(&e, &ind, &bad), Err(Error::Weights(_))));
}

#[test]
fn propagator_free_is_heat_kernel() {
    let (chart, spec) = spec_1d(Potential::zero(), 0.0, 1.0, 64);
    let est = propagator(&chart, &spec, &free_params(), &RunConfig::new(1, 1000), Mode::Euclidean).unwrap();
    assert!((est.value.re - heat_kernel_1d(0.0, 1.0, 1.0, 1.0)).abs() < 1e-12);
    assert_eq!(est.std_error, 0.0);
}

#[test]
fn propagator_symmetry() {
    let run = RunConfig::new(11, 20_000);
    let (chart, fwd) = spec_1d(Potential::harmonic(1.0), 0.0, 1.0, 64);
    let (_, bwd) = spec_1d(Potential::harmonic(1.0), 1.0, 0.0, 64);
    let a = propagator(&chart, &fwd, &free_params(), &run, Mode::Euclidean).unwrap();
    let b = propagator(&chart, &bwd, &free_params(), &RunConfig::new(12, 20_000), Mode::Euclidean).unwrap();
    assert!((a.value - b.value).norm() < 3.0 * a.std_error.hypot(b.std_error));
    let m = crate::oracles::mehler_kernel(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    assert!((a.value.re - m).abs() < 3.0 * a.std_error + 2e-3 * m, "{} vs {m}", a.value.re);
}

#[test]
fn parallel_matches_sequential() {
    let (chart, spec) = spec_1d(Potential::harmonic(1.0), 0.0, 0.0, 64);
    let params = SdeParams { xi: XiProfile::Constant(0.5), ..free_params() };
    let f = Observable::constant(one());
    let seq = Ensemble::build(chart.clone(), spec.clone(), params.clone(), RunConfig::new(3, 3000).with_chunk_size(100).with_execution(Execution::Sequential)).unwrap();
    let par = Ensemble::build(chart, spec, params, RunConfig::new(3, 3000).with_chunk_size(37).with_execution(Execution::with_workers(Some(3)))).unwrap();
    let a = stochastic_path_integral(&seq, &f, Mode::Euclidean, ActionChannel::PotentialOnly).unwrap();
    let b = stochastic_path_integral(&par, &f, Mode::Euclidean, ActionChannel::PotentialOnly).unwrap();
    assert_eq!(a.n_samples, b.n_samples);
    assert!((a.value - b.value).norm() <= 1e-12 * a.value.norm());
    assert!((a.std_error - b.std_error).abs() <= 1e-12 * a.std_error);
}
