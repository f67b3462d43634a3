//! Property checks on small grids: conservation, monotonicity, metric axioms,
//! mode equivalence, and the closed-form laws against statrs.

use drmlab::convolution::Method;
use drmlab::distributions::{DrmEquilibrium, DyEquilibrium, Model};
use drmlab::exec::Exec;
use drmlab::generators::MeasureGenerator;
use drmlab::histogram::{GridSpec, HistogramMeasure};
use drmlab::metrics::{d_alpha, moment_bound_coefficient, MetricConfig};
use drmlab::montecarlo::{pair_exchange, InitialCondition, Population};
use drmlab::operator::Operator;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Exp};

fn grid() -> GridSpec {
    GridSpec::new(40.0, 256).unwrap()
}

/// Arbitrary nonnegative masses on the lower 45% of the grid, normalized to one.
fn masses() -> impl Strategy<Value = HistogramMeasure> {
    prop::collection::vec(0.0f64..1.0, 1..115).prop_filter_map("zero mass", |raw| {
        let total: f64 = raw.iter().sum();
        if total <= 1e-6 {
            return None;
        }
        let mut cells = vec![0.0; grid().n_cells()];
        for (c, m) in cells.iter_mut().zip(&raw) {
            *c = m / total;
        }
        HistogramMeasure::from_parts(grid(), cells, 0.0, 0.0).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cdf_is_monotone(p in masses()) {
        let mut last = 0.0;
        for k in 0..=400 {
            let c = p.cdf_at(k as f64 * 0.1).unwrap();
            prop_assert!(c >= last - 1e-15);
            last = c;
        }
        prop_assert!((last - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplace_is_decreasing_from_total_mass(p in masses()) {
        prop_assert!((p.laplace(0.0).unwrap() - p.total_mass()).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for k in 0..60 {
            let v = p.laplace(1e-3 * 1.3f64.powi(k)).unwrap();
            prop_assert!(v <= last + 1e-15 && v > 0.0);
            last = v;
        }
    }

    #[test]
    fn operator_conserves_mass_and_mean(p in masses()) {
        let tp = Operator::new(grid()).apply(&p).unwrap();
        prop_assert!((tp.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!((tp.mean() - p.mean()).abs() <= 1e-10 * p.mean());
        prop_assert!(tp.cell_mass().iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn first_moment_bound_is_an_equality(p in masses()) {
        prop_assert_eq!(moment_bound_coefficient(1.0).unwrap(), 1.0);
        let tp = Operator::new(grid()).apply(&p).unwrap();
        let (before, after) = (p.moment(1.0).unwrap(), tp.moment(1.0).unwrap());
        prop_assert!((after - before).abs() <= 1e-10 * before);
    }

    #[test]
    fn direct_and_fft_agree(p in masses()) {
        let direct = Operator::with_options(grid(), Method::Direct, Exec::Sequential).apply(&p).unwrap();
        let fft = Operator::with_options(grid(), Method::Fft, Exec::Sequential).apply(&p).unwrap();
        for (a, b) in direct.cell_mass().iter().zip(fft.cell_mass()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn d_alpha_is_a_metric(seed in any::<u64>()) {
        let cfg = MetricConfig { s_grid: drmlab::metrics::log_grid(1e-3, 1e3, 60), ..Default::default() };
        let ms = MeasureGenerator::new(grid(), 1.0, seed).unwrap().measures(3).unwrap();
        let d = |a: &HistogramMeasure, b: &HistogramMeasure| d_alpha(a, b, &cfg).unwrap().value;
        let (ab, ba) = (d(&ms[0], &ms[1]), d(&ms[1], &ms[0]));
        prop_assert!((ab - ba).abs() <= 1e-14 * ab.max(1e-300));
        prop_assert_eq!(d(&ms[0], &ms[0]), 0.0);
        // Each side is a numerically refined supremum, so allow a little slack.
        prop_assert!(ab <= (d(&ms[0], &ms[2]) + d(&ms[2], &ms[1])) * (1.0 + 1e-6) + 1e-12);
    }

    #[test]
    fn pair_exchange_conserves(a in 0.0f64..100.0, b in 0.0f64..100.0, eps in 0.0f64..1.0, coin: bool) {
        for model in [Model::Drm, Model::Dy] {
            let (x, y) = pair_exchange(a, b, eps, coin, model).unwrap();
            prop_assert!(x >= 0.0 && y >= 0.0);
            prop_assert!(((x + y) - (a + b)).abs() <= 1e-12 * (a + b).max(1.0));
        }
    }
}

#[test]
fn execution_modes_are_bit_identical() {
    let g = GridSpec::new(40.0, 2048).unwrap();
    let p = MeasureGenerator::new(g, 1.0, 17)
        .unwrap()
        .measure()
        .unwrap();
    let seq = Operator::with_options(g, Method::Auto, Exec::Sequential)
        .apply(&p)
        .unwrap();
    let par = Operator::with_options(g, Method::Auto, Exec::Parallel)
        .apply(&p)
        .unwrap();
    assert_eq!(seq, par);

    let start = |exec| {
        Population::initial(InitialCondition::Uniform, 20_000, 1.0, Model::Drm, 5)
            .unwrap()
            .with_exec(exec)
    };
    let (mut a, mut b) = (start(Exec::Sequential), start(Exec::Parallel));
    for _ in 0..5 {
        a.step().unwrap();
        b.step().unwrap();
    }
    assert_eq!(a.wealth(), b.wealth());
}

#[test]
fn closed_forms_match_statrs() {
    for w in [0.5, 1.0, 3.0] {
        let drm = DrmEquilibrium::new(w).unwrap();
        let dy = DyEquilibrium::new(w).unwrap();
        let chi = ChiSquared::new(1.0).unwrap();
        let exp = Exp::new(1.0 / w).unwrap();
        for k in 1..200 {
            let x = k as f64 * 0.05 * w;
            assert!(
                (drm.cdf(x).unwrap() - chi.cdf(x / w)).abs() < 1e-13,
                "w {w} x {x}"
            );
            assert!(
                (dy.cdf(x).unwrap() - exp.cdf(x)).abs() < 1e-14,
                "w {w} x {x}"
            );
        }
    }
}

#[test]
fn laplace_transforms_converge_pointwise() {
    // At s = 10 the transform sees the x^(-1/2) mass of cell 0 placed uniformly across the
    // cell; on 16384 cells that alone costs ~2e-4, so this check refines the grid.
    let g = GridSpec::new(40.0, 65536).unwrap();
    let op = Operator::new(g);
    let eq = DrmEquilibrium::new(1.0).unwrap();
    let gap = |p: &HistogramMeasure| {
        [0.1, 1.0, 10.0]
            .iter()
            .map(|&s| (p.laplace(s).unwrap() - eq.laplace(s).unwrap()).abs())
            .fold(0.0f64, f64::max)
    };
    let mut p = HistogramMeasure::uniform(g, 0.0, 2.0).unwrap();
    let mut gaps = vec![gap(&p)];
    for _ in 0..100 {
        p = op.apply(&p).unwrap();
        gaps.push(gap(&p));
    }
    assert!(gaps[100] < 1e-4, "{:?}", &gaps[90..]);
}
