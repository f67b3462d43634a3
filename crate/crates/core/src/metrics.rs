//! The Laplace-transform metric `d_alpha` and the contraction diagnostics built on it.
//!
//! `d_alpha(p, q) = sup_{s > 0} |p^(s) - q^(s)| / s^alpha`. The sup is taken
//! over a log-spaced grid of transform points and refined with a
//! golden-section search around the grid argmax. For equal means and finite
//! second moments the ratio vanishes at both ends of the axis, so an argmax
//! at a grid endpoint means the window is too narrow and is reported.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::Exec;
use crate::histogram::{laplace_of_masses, HistogramMeasure};
use crate::operator::{equilibrium_reference, Operator};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricConfig {
    pub alpha: f64,
    /// Strictly increasing positive transform points.
    pub s_grid: Vec<f64>,
    /// Relative slack for inequality checks.
    pub tolerance: f64,
    pub exec: Exec,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            s_grid: log_grid(1e-4, 1e4, 400),
            tolerance: 1e-3,
            exec: Exec::default(),
        }
    }
}

impl MetricConfig {
    /// Configuration inside the contraction regime `1 < alpha < 2`.
    pub fn new(alpha: f64, s_min: f64, s_max: f64, points: usize, tolerance: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(domain(format!("alpha must lie in (1, 2), got {alpha}")));
        }
        Self::exploratory(alpha, s_min, s_max, points, tolerance)
    }

    /// Like [`new`](Self::new) but accepts `1 <= alpha <= 2`, where no contraction is claimed.
    pub fn exploratory(
        alpha: f64,
        s_min: f64,
        s_max: f64,
        points: usize,
        tolerance: f64,
    ) -> Result<Self> {
        if !(1.0..=2.0).contains(&alpha) {
            return Err(domain(format!("alpha must lie in [1, 2], got {alpha}")));
        }
        if !(s_min > 0.0 && s_max > s_min && s_max.is_finite()) || points < 3 {
            return Err(domain(format!(
                "bad s-grid [{s_min}, {s_max}] with {points} points"
            )));
        }
        if !(tolerance >= 0.0) {
            return Err(domain(format!("tolerance must be >= 0, got {tolerance}")));
        }
        Ok(Self {
            alpha,
            s_grid: log_grid(s_min, s_max, points),
            tolerance,
            exec: Exec::default(),
        })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(domain(format!("alpha must lie in (1, 2), got {alpha}")));
        }
        self.alpha = alpha;
        Ok(self)
    }
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (points - 1) as f64;
    (0..points)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == points {
                hi
            } else {
                (a + step * i as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DAlpha {
    pub value: f64,
    pub s_argmax: f64,
    /// The grid maximum sat at the first or last transform point.
    pub at_endpoint: bool,
}

/// Distance `d_alpha(p, q)` between two measures with equal means.
pub fn d_alpha(p: &HistogramMeasure, q: &HistogramMeasure, cfg: &MetricConfig) -> Result<DAlpha> {
    let (mp, mq) = (p.mean(), q.mean());
    if (mp - mq).abs() > 1e-8 * mp.abs().max(1.0) {
        return Err(Error::UnequalMeans(mp, mq));
    }
    if cfg.s_grid.len() < 3 {
        return Err(domain("s-grid needs at least 3 points"));
    }
    let diff = LaplaceDifference::new(p, q);
    let alpha = cfg.alpha;
    let ratio = |s: f64| diff.at(s).abs() / s.powf(alpha);

    let values = cfg.exec.map(&cfg.s_grid, |&s| ratio(s));
    let (k, &grid_max) =
        values.iter().enumerate().fold(
            (0, &values[0]),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );

    let last = cfg.s_grid.len() - 1;
    if k == 0 || k == last {
        log::warn!(
            "d_alpha argmax at grid endpoint s = {:e}; the supremum may lie outside the window",
            cfg.s_grid[k]
        );
        return Ok(DAlpha {
            value: grid_max,
            s_argmax: cfg.s_grid[k],
            at_endpoint: true,
        });
    }

    let (s_ref, v_ref) = golden_max(
        |u| ratio(u.exp()),
        cfg.s_grid[k - 1].ln(),
        cfg.s_grid[k + 1].ln(),
        60,
    );
    let (value, s_argmax) = if v_ref > grid_max {
        (v_ref, s_ref.exp())
    } else {
        (grid_max, cfg.s_grid[k])
    };
    Ok(DAlpha {
        value,
        s_argmax,
        at_endpoint: false,
    })
}

// p^(s) - q^(s), using mass differences when the grids coincide.
struct LaplaceDifference<'a> {
    p: &'a HistogramMeasure,
    q: &'a HistogramMeasure,
    shared: Option<Vec<f64>>,
}

impl<'a> LaplaceDifference<'a> {
    fn new(p: &'a HistogramMeasure, q: &'a HistogramMeasure) -> Self {
        let shared = (p.grid() == q.grid()).then(|| {
            p.cell_mass()
                .iter()
                .zip(q.cell_mass())
                .map(|(a, b)| a - b)
                .collect()
        });
        Self { p, q, shared }
    }

    fn at(&self, s: f64) -> f64 {
        match &self.shared {
            Some(delta) => {
                let cells = laplace_of_masses(self.p.grid(), delta, 0.0, 0.0, s);
                let tail = |m: &HistogramMeasure| {
                    if m.tail_mass() > 0.0 {
                        m.tail_mass() * (-s * m.tail_mean()).exp()
                    } else {
                        0.0
                    }
                };
                cells + tail(self.p) - tail(self.q)
            }
            None => self.p.laplace(s).unwrap_or(f64::NAN) - self.q.laplace(s).unwrap_or(f64::NAN),
        }
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Lipschitz constant `1/2 + 1/(alpha + 1)` of `T` in `d_alpha`; below 1 for `alpha > 1`.
pub fn contraction_factor(alpha: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(domain(format!(
            "contraction factor needs alpha > 1, got {alpha}"
        )));
    }
    Ok(0.5 + 1.0 / (alpha + 1.0))
}

/// `(2^(alpha-1) (alpha+2) + 1) / (2 (alpha+1))`, bounding `M_alpha(T[p]) / M_alpha(p)`.
pub fn moment_bound_coefficient(alpha: f64) -> Result<f64> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(domain(format!(
            "moment bound needs alpha >= 1, got {alpha}"
        )));
    }
    Ok(((alpha - 1.0).exp2() * (alpha + 2.0) + 1.0) / (2.0 * (alpha + 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub alpha: f64,
    pub factor: f64,
    /// `d(T p, T q) / d(p, q)` per pair; `null` for degenerate pairs.
    pub ratios: Vec<Option<f64>>,
    /// Indices of pairs whose ratio exceeds `factor * (1 + tolerance)`.
    pub violations: Vec<usize>,
    /// Transform point attaining `d(T p, T q)` per pair.
    pub s_argmax: Vec<f64>,
    /// Pairs skipped because `d(p, q)` is at the rounding floor (see [`rounding_floor`]).
    pub degenerate: Vec<usize>,
    /// Pairs where either distance peaked at a grid endpoint.
    pub endpoint_warnings: Vec<usize>,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Distances below this are rounding noise: transform differences of a few ulps
/// divided by `s^alpha` at the smallest transform point.
pub fn rounding_floor(cfg: &MetricConfig) -> f64 {
    let s_min = cfg.s_grid.first().copied().unwrap_or(1.0);
    64.0 * f64::EPSILON / s_min.powf(cfg.alpha)
}

/// Measures `d(T p, T q) / d(p, q)` for every pair against the contraction factor.
pub fn verify_contraction(
    pairs: &[(HistogramMeasure, HistogramMeasure)],
    cfg: &MetricConfig,
) -> Result<ContractionReport> {
    let factor = contraction_factor(cfg.alpha)?;
    let noise = rounding_floor(cfg);
    let mut ratios = Vec::with_capacity(pairs.len());
    let mut violations = Vec::new();
    let mut s_argmax = Vec::with_capacity(pairs.len());
    let mut degenerate = Vec::new();
    let mut endpoint_warnings = Vec::new();

    let mut op: Option<Operator> = None;
    for (i, (p, q)) in pairs.iter().enumerate() {
        if op.as_ref().map(|o| o.grid() != p.grid()).unwrap_or(true) {
            op = Some(Operator::with_options(
                *p.grid(),
                Default::default(),
                cfg.exec,
            ));
        }
        let op = op.as_ref().expect("operator");
        let before = d_alpha(p, q, cfg)?;
        if before.value <= noise {
            degenerate.push(i);
            ratios.push(None);
            s_argmax.push(before.s_argmax);
            continue;
        }
        let (tp, tq) = cfg.exec.join(|| op.apply(p), || op.apply(q));
        let after = d_alpha(&tp?, &tq?, cfg)?;
        if before.at_endpoint || after.at_endpoint {
            endpoint_warnings.push(i);
        }
        let ratio = after.value / before.value;
        if ratio > factor * (1.0 + cfg.tolerance) {
            violations.push(i);
        }
        ratios.push(Some(ratio));
        s_argmax.push(after.s_argmax);
    }
    Ok(ContractionReport {
        alpha: cfg.alpha,
        factor,
        ratios,
        violations,
        s_argmax,
        degenerate,
        endpoint_warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub t: usize,
    pub d_alpha: f64,
    pub bound: f64,
    /// Measured distance is below the discretization floor.
    pub floor_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub alpha: f64,
    pub factor: f64,
    /// Ten times `d_alpha(T[ref], ref)` for the projected equilibrium `ref`.
    pub floor: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Steps where the measured distance exceeded the geometric bound before the floor was hit.
    pub violations: Vec<usize>,
}

impl ConvergenceTrace {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,d_alpha,bound,floor_flag")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{}",
                r.t, r.d_alpha, r.bound, r.floor_flag as u8
            )?;
        }
        Ok(())
    }
}

/// Tracks `d_alpha(p_t, p*_w)` against `d_alpha(p_0, p*_w) r^t`, with `w` the mean of `p0`.
///
/// The comparison stops being meaningful once the measured distance drops
/// below the discretization floor; from that step on rows are flagged and
/// exempt from the bound.
pub fn convergence_trace(
    p0: &HistogramMeasure,
    steps: usize,
    cfg: &MetricConfig,
) -> Result<ConvergenceTrace> {
    let factor = contraction_factor(cfg.alpha)?;
    let grid = *p0.grid();
    let op = Operator::with_options(grid, Default::default(), cfg.exec);
    let reference = equilibrium_reference(p0.mean(), grid)?;
    let residual = d_alpha(&op.apply(&reference)?, &reference, cfg)?.value;
    let floor = 10.0 * residual;

    let d0 = d_alpha(p0, &reference, cfg)?.value;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut violations = Vec::new();
    let mut floor_hit = false;
    let mut current = p0.clone();
    for t in 0..=steps {
        if t > 0 {
            current = op.apply(&current)?;
        }
        let measured = if t == 0 {
            d0
        } else {
            d_alpha(&current, &reference, cfg)?.value
        };
        let bound = d0 * factor.powi(t as i32);
        let floor_flag = measured < floor;
        floor_hit |= floor_flag;
        if !floor_hit && measured > bound * (1.0 + cfg.tolerance) {
            violations.push(t);
        }
        rows.push(ConvergenceRow {
            t,
            d_alpha: measured,
            bound,
            floor_flag,
        });
    }
    Ok(ConvergenceTrace {
        alpha: cfg.alpha,
        factor,
        floor,
        rows,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::GridSpec;

    #[test]
    fn contraction_factor_values() {
        assert!((contraction_factor(1.5).unwrap() - 0.9).abs() < 1e-15);
        assert!((contraction_factor(2.0).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!(contraction_factor(1.0).is_err());
        assert!(contraction_factor(0.5).is_err());
        assert!((contraction_factor(1.0 + 1e-9).unwrap() - 1.0).abs() < 1e-9);
        let mut prev = 1.0;
        for k in 1..100 {
            let f = contraction_factor(1.0 + k as f64 * 0.05).unwrap();
            assert!(f < prev && f < 1.0);
            prev = f;
        }
    }

    #[test]
    fn moment_bound_values() {
        assert!((moment_bound_coefficient(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((moment_bound_coefficient(2.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((moment_bound_coefficient(1.5).unwrap() - 1.189_949_493_661_166_5).abs() < 1e-14);
        assert!(moment_bound_coefficient(0.9).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MetricConfig::new(1.0, 1e-4, 1e4, 400, 1e-3).is_err());
        assert!(MetricConfig::new(2.0, 1e-4, 1e4, 400, 1e-3).is_err());
        assert!(MetricConfig::exploratory(1.0, 1e-4, 1e4, 400, 1e-3).is_ok());
        let cfg = MetricConfig::default();
        assert_eq!(cfg.s_grid.len(), 400);
        assert!(cfg.s_grid.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(cfg.s_grid[0], 1e-4);
        assert_eq!(cfg.s_grid[399], 1e4);
    }

    #[test]
    fn self_distance_is_zero() {
        let g = GridSpec::new(40.0, 1024).unwrap();
        let p = HistogramMeasure::uniform(g, 0.0, 2.0).unwrap();
        let d = d_alpha(&p, &p, &MetricConfig::default()).unwrap();
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn unequal_means_rejected() {
        let g = GridSpec::new(40.0, 1024).unwrap();
        let p = HistogramMeasure::uniform(g, 0.0, 2.0).unwrap();
        let q = HistogramMeasure::uniform(g, 0.0, 3.0).unwrap();
        assert!(matches!(
            d_alpha(&p, &q, &MetricConfig::default()),
            Err(Error::UnequalMeans(..))
        ));
    }

    #[test]
    fn degenerate_pair_is_skipped() {
        let g = GridSpec::new(40.0, 512).unwrap();
        let p = HistogramMeasure::uniform(g, 0.0, 2.0).unwrap();
        let report = verify_contraction(&[(p.clone(), p)], &MetricConfig::default()).unwrap();
        assert_eq!(report.degenerate, vec![0]);
        assert_eq!(report.ratios, vec![None]);
        assert!(report.passed());
    }

    #[test]
    fn golden_section_finds_interior_max() {
        let (x, v) = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 80);
        assert!((x - 0.3).abs() < 1e-8 && v.abs() < 1e-15);
    }
}
