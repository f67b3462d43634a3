//! The one-step evolution operator `T` of the wealth distribution.
//!
//! `T[p]` is the law of an agent's wealth after one round of pairings:
//! with probability 1/2 the agent gives, ending with `(1 - eps) X`, and with
//! probability 1/2 it receives, ending with `X + eps Y`, where `X, Y ~ p`
//! are independent and `eps ~ U[0, 1]`. So
//!
//! ```text
//! T[p] = 1/2 law((1 - eps) X) + 1/2 law(X + eps Y).
//! ```
//!
//! Both laws are computed exactly for a cell-uniform input. The density of
//! `eps Y` is `Q(u) = int_u^inf p(v)/v dv`, which inside cell `i` equals
//! `K_i + c_i ln(b_i/u)`; its per-cell integrals against `1, tau, tau^2`
//! have closed forms up to the constants `J_r(i) = int_0^1 tau^r ln((i+1)/(i+tau)) dtau`.
//! The convolution with `X` then splits each source/kernel cell pair between
//! two adjacent output cells, with exact masses and first moments, and the
//! result is folded back to cell-uniform form with the mean preserved.

use serde::{Deserialize, Serialize};

use crate::convolution::{Convolver, Method};
use crate::distributions::DrmEquilibrium;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::histogram::{CellMoments, GridSpec, HistogramMeasure};
use crate::metrics::{d_alpha, MetricConfig};
use crate::quadrature::UnitRule;

/// Cell integrals of the inner kernel `Q(u) = int_u^inf p(v)/v dv`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub grid: GridSpec,
    /// `Q` at the cell edges `0, h, ..., x_max`; infinite at 0 when cell 0 has mass.
    pub q_at_edges: Vec<f64>,
    /// `int_cell Q(u) du`: the mass of `eps Y` in each cell.
    pub cell_integral: Vec<f64>,
    /// `int_cell Q(u) tau du` with `tau` the in-cell position in `[0, 1)`.
    pub cell_tau: Vec<f64>,
    /// `int_cell Q(u) tau^2 du`.
    pub cell_tau2: Vec<f64>,
    /// Mass of `eps Y` beyond `x_max` (from the tail atom of `p`).
    pub tail_mass: f64,
    /// Mean of that beyond-grid piece.
    pub tail_mean: f64,
}

impl QTable {
    /// `int_0^inf Q(u) du`, which equals the mass of `p`.
    pub fn total_integral(&self) -> f64 {
        self.cell_integral.iter().sum::<f64>() + self.tail_mass
    }

    /// The law of `eps Y` as cell masses and in-cell first moments.
    pub fn to_moments(&self) -> CellMoments {
        let x_max = self.grid.x_max();
        CellMoments {
            grid: self.grid,
            mass: self.cell_integral.clone(),
            local: self.cell_tau.clone(),
            tail_mass: self.tail_mass,
            tail_moment: self.tail_mass * self.tail_mean.max(x_max),
        }
    }
}

/// The evolution operator on a fixed grid, with its precomputed tables.
#[derive(Debug)]
pub struct Operator {
    grid: GridSpec,
    exec: Exec,
    convolver: Convolver,
    // J_r(i) for r = 0, 1, 2.
    log_moments: [Vec<f64>; 3],
}

impl Operator {
    pub fn new(grid: GridSpec) -> Self {
        Self::with_options(grid, Method::Auto, Exec::default())
    }

    pub fn with_options(grid: GridSpec, method: Method, exec: Exec) -> Self {
        let n = grid.n_cells();
        let rule = UnitRule::new(20);
        let table = |r: i32| -> Vec<f64> {
            exec.map_range(n, |i| {
                if i == 0 {
                    1.0 / ((r + 1) * (r + 1)) as f64
                } else {
                    let fi = i as f64;
                    rule.integrate(0.0, 1.0, |t| t.powi(r) * ((1.0 - t) / (fi + t)).ln_1p())
                }
            })
        };
        let log_moments = [table(0), table(1), table(2)];
        Self {
            grid,
            exec,
            convolver: Convolver::new(n, method, exec),
            log_moments,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn check(&self, p: &HistogramMeasure) -> Result<()> {
        if p.grid() != &self.grid {
            return Err(Error::InvalidMeasure(
                "measure lives on a different grid".into(),
            ));
        }
        if !(p.tail_mean().is_finite() && p.tail_mass().is_finite()) {
            return Err(Error::InvalidMeasure("non-finite tail".into()));
        }
        Ok(())
    }

    pub fn build_q(&self, p: &HistogramMeasure) -> Result<QTable> {
        self.check(p)?;
        let n = self.grid.n_cells();
        let h = self.grid.width();
        let x_max = self.grid.x_max();
        let m = p.cell_mass();

        let (tail_q, tail_mass, tail_mean) = if p.tail_mass() > 0.0 {
            let t = p.tail_mean();
            let beyond = p.tail_mass() * (t - x_max) / t;
            (p.tail_mass() / t, beyond, 0.5 * (x_max + t))
        } else {
            (0.0, 0.0, 0.0)
        };

        // suffix[i] = sum_{l >= max(i,1)} (m_l / h) ln(1 + 1/l), the grid part of Q at edge i.
        let mut suffix = vec![0.0; n + 1];
        for i in (1..n).rev() {
            suffix[i] = suffix[i + 1] + m[i] / h * (1.0 / i as f64).ln_1p();
        }
        suffix[0] = suffix[1];

        let mut q_at_edges: Vec<f64> = suffix.iter().map(|s| s + tail_q).collect();
        if m[0] > 0.0 {
            q_at_edges[0] = f64::INFINITY;
        }

        let [j0, j1, j2] = &self.log_moments;
        let mut cell_integral = vec![0.0; n];
        let mut cell_tau = vec![0.0; n];
        let mut cell_tau2 = vec![0.0; n];
        for i in 0..n {
            let k = suffix[i + 1] + tail_q;
            cell_integral[i] = h * k + m[i] * j0[i];
            cell_tau[i] = h * k / 2.0 + m[i] * j1[i];
            cell_tau2[i] = h * k / 3.0 + m[i] * j2[i];
        }

        Ok(QTable {
            grid: self.grid,
            q_at_edges,
            cell_integral,
            cell_tau,
            cell_tau2,
            tail_mass,
            tail_mean,
        })
    }

    /// Exact cell moments of `law((1 - eps) X)`.
    pub fn giver_moments(&self, p: &HistogramMeasure) -> Result<CellMoments> {
        Ok(self.build_q(p)?.to_moments())
    }

    /// Exact cell moments of `law(X + eps Y)`.
    pub fn receiver_moments(&self, p: &HistogramMeasure) -> Result<CellMoments> {
        let q = self.build_q(p)?;
        Ok(self.receiver_from_q(p, &q))
    }

    fn receiver_from_q(&self, p: &HistogramMeasure, q: &QTable) -> CellMoments {
        let n = self.grid.n_cells();
        let h = self.grid.width();
        let x_max = self.grid.x_max();
        let m = p.cell_mass();

        // Source cell j (uniform) plus kernel cell i at in-cell position tau:
        // lands in cell i+j with weight (1 - tau) and local moment (1 - tau^2)/2,
        // and in cell i+j+1 with weight tau and local moment tau^2/2.
        let stay: Vec<f64> = (0..n).map(|i| q.cell_integral[i] - q.cell_tau[i]).collect();
        let stay_local: Vec<f64> = (0..n)
            .map(|i| 0.5 * (q.cell_integral[i] - q.cell_tau2[i]))
            .collect();
        let spill_local: Vec<f64> = q.cell_tau2.iter().map(|v| 0.5 * v).collect();
        let [a, b, c, d] = self
            .convolver
            .convolve4(m, [&stay, &q.cell_tau, &stay_local, &spill_local]);

        let mut out = CellMoments::zeros(self.grid);
        out.mass[0] = a[0];
        out.local[0] = c[0];
        for k in 1..n {
            out.mass[k] = a[k] + b[k - 1];
            out.local[k] = c[k] + d[k - 1];
        }

        // In-grid pairs whose sum passes x_max.
        let mut tail_mass = 0.0;
        let mut tail_moment = 0.0;
        for k in n..a.len() {
            tail_mass += a[k];
            tail_moment += h * (k as f64 * a[k] + c[k]);
        }
        for k in (n - 1)..b.len() {
            tail_mass += b[k];
            tail_moment += h * ((k + 1) as f64 * b[k] + d[k]);
        }

        let grid_mass: f64 = m.iter().sum();
        let grid_moment: f64 = m
            .iter()
            .enumerate()
            .map(|(j, &mj)| mj * self.grid.center(j))
            .sum();
        let giver = q.to_moments();
        let giver_mass = giver.total_mass();
        let giver_moment = giver.first_moment();

        // X in the tail atom: X + eps Y is beyond x_max for every eps Y.
        if p.tail_mass() > 0.0 {
            tail_mass += p.tail_mass() * giver_mass;
            tail_moment += p.tail_mass() * (p.tail_mean() * giver_mass + giver_moment);
        }
        // X in the grid, eps Y beyond x_max.
        if q.tail_mass > 0.0 {
            let piece_mean = q.tail_mean.max(x_max);
            tail_mass += grid_mass * q.tail_mass;
            tail_moment += q.tail_mass * (grid_moment + grid_mass * piece_mean);
        }
        out.tail_mass = tail_mass;
        out.tail_moment = tail_moment;

        // Y is drawn from p / |p|. Without this the receiver is quadratic in the
        // mass, and a rounding excess d grows like 1.5^t under iteration.
        let inv = 1.0 / (grid_mass + p.tail_mass());
        out.mass.iter_mut().for_each(|v| *v *= inv);
        out.local.iter_mut().for_each(|v| *v *= inv);
        out.tail_mass *= inv;
        out.tail_moment *= inv;
        out
    }

    /// Exact cell moments of `T[p]` before folding back to cell-uniform form.
    ///
    /// `mass[k]` is `int_cell_k T[p](x) dx` for the cell-uniform input.
    pub fn transition_moments(&self, p: &HistogramMeasure) -> Result<CellMoments> {
        let q = self.build_q(p)?;
        let mut mix = q.to_moments();
        let receiver = self.receiver_from_q(p, &q);
        mix.mix(0.5, &receiver, 0.5);
        Ok(mix)
    }

    pub fn giver_pushforward(&self, p: &HistogramMeasure) -> Result<HistogramMeasure> {
        self.giver_moments(p)?.into_measure()
    }

    pub fn receiver_pushforward(&self, p: &HistogramMeasure) -> Result<HistogramMeasure> {
        self.receiver_moments(p)?.into_measure()
    }

    /// One application of `T`; mass and mean are preserved.
    pub fn apply(&self, p: &HistogramMeasure) -> Result<HistogramMeasure> {
        self.transition_moments(p)?.into_measure()
    }

    /// Applies `T` `steps` times, recording diagnostics after every step.
    ///
    /// The reference equilibrium has the mean of `p0`. Fails if a step
    /// produces a cell mass below `-1e-12`.
    pub fn iterate(
        &self,
        p0: &HistogramMeasure,
        steps: usize,
        cfg: &MetricConfig,
    ) -> Result<Iteration> {
        let w = p0.mean();
        let reference = equilibrium_reference(w, self.grid)?;
        let eq = DrmEquilibrium::new(w)?;
        let record = |t: usize, p: &HistogramMeasure| -> Result<TraceRecord> {
            Ok(TraceRecord {
                t,
                mean: p.mean(),
                m_alpha: p.moment(cfg.alpha)?,
                cv: p.cv()?,
                ks: p.ks_distance(|x| eq.cdf(x).unwrap_or(1.0)),
                d_alpha: d_alpha(p, &reference, cfg)?.value,
            })
        };
        let mut trace = Vec::with_capacity(steps + 1);
        trace.push(record(0, p0)?);
        let mut current = p0.clone();
        for t in 1..=steps {
            current = self.apply(&current)?;
            trace.push(record(t, &current)?);
        }
        Ok(Iteration {
            trace,
            final_measure: current,
        })
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }
}

/// Projection of the directed-market equilibrium with mean `w`, mean-exact.
pub fn equilibrium_reference(w: f64, grid: GridSpec) -> Result<HistogramMeasure> {
    let eq = DrmEquilibrium::new(w)?;
    HistogramMeasure::from_pdf_conservative(|x| eq.pdf(x).unwrap_or(f64::NAN), grid, 16)
}

/// One application of `T` on `p`'s grid.
pub fn apply_t(p: &HistogramMeasure) -> Result<HistogramMeasure> {
    Operator::new(*p.grid()).apply(p)
}

pub fn build_q(p: &HistogramMeasure) -> Result<QTable> {
    Operator::new(*p.grid()).build_q(p)
}

pub fn giver_pushforward(p: &HistogramMeasure) -> Result<HistogramMeasure> {
    Operator::new(*p.grid()).giver_pushforward(p)
}

pub fn receiver_pushforward(p: &HistogramMeasure) -> Result<HistogramMeasure> {
    Operator::new(*p.grid()).receiver_pushforward(p)
}

pub fn iterate(p0: &HistogramMeasure, steps: usize, cfg: &MetricConfig) -> Result<Iteration> {
    Operator::new(*p0.grid()).iterate(p0, steps, cfg)
}

/// Diagnostics of one iterate `p_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub mean: f64,
    pub m_alpha: f64,
    pub cv: f64,
    /// KS distance to the directed-market equilibrium cdf with the initial mean.
    pub ks: f64,
    /// `d_alpha` distance to the projected equilibrium with the initial mean.
    pub d_alpha: f64,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "t,mean,m_alpha,cv,ks,d_alpha";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.t, self.mean, self.m_alpha, self.cv, self.ks, self.d_alpha
        )
    }
}

pub fn write_trace_csv<W: std::io::Write>(
    mut out: W,
    trace: &[TraceRecord],
) -> std::io::Result<()> {
    writeln!(out, "{}", TraceRecord::CSV_HEADER)?;
    for r in trace {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Iteration {
    pub trace: Vec<TraceRecord>,
    pub final_measure: HistogramMeasure,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DyEquilibrium;

    fn grid(x_max: f64, n: usize) -> GridSpec {
        GridSpec::new(x_max, n).unwrap()
    }

    #[test]
    fn log_moment_table_matches_closed_form() {
        let op = Operator::new(grid(10.0, 300));
        for i in 1..300 {
            let fi = i as f64;
            let j0 = 1.0 - fi * (1.0 / fi).ln_1p();
            assert!((op.log_moments[0][i] - j0).abs() < 1e-13, "i={i}");
        }
        assert_eq!(op.log_moments[1][0], 0.25);
    }

    #[test]
    fn q_of_point_mass_is_indicator() {
        // 1.0 is the center of cell 2 when h = 0.4
        let g = grid(4.0, 10);
        let p = HistogramMeasure::point_mass(g, 1.0).unwrap();
        assert!((p.cell_mass()[2] - 1.0).abs() < 1e-15);
        let q = build_q(&p).unwrap();
        // Q = 2.5 ln(1.2/0.8) ~ 1 below the cell, 0 above it
        let below = 2.5 * 1.5f64.ln();
        assert!((q.q_at_edges[1] - below).abs() < 1e-14);
        assert!((below - 1.0).abs() < 0.02);
        assert_eq!(q.q_at_edges[3], 0.0);
        assert!((q.total_integral() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn q_integrates_to_one_with_tail() {
        let g = grid(10.0, 100);
        let p = HistogramMeasure::from_samples(&[0.05, 3.3, 7.7, 12.0, 25.0, 0.0], g).unwrap();
        let q = build_q(&p).unwrap();
        assert!((q.total_integral() - 1.0).abs() < 1e-12);
        assert!(q.q_at_edges[0].is_infinite());
        assert!(q.q_at_edges.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn q_of_exponential_at_one_is_e1() {
        let g = grid(40.0, 16384);
        let dy = DyEquilibrium::new(1.0).unwrap();
        let p = HistogramMeasure::from_pdf(|x| dy.pdf(x).unwrap(), g, 16).unwrap();
        let q = build_q(&p).unwrap();
        let edge = (1.0 / g.width()).round() as usize;
        let u = edge as f64 * g.width();
        // E1(u) near u = 1: E1(1) = 0.21938393439552027, E1'(u) = -exp(-u)/u
        let e1 = 0.219_383_934_395_520_27 - (u - 1.0) * (-1.0f64).exp();
        assert!(
            (q.q_at_edges[edge] - e1).abs() < 1e-6,
            "{}",
            q.q_at_edges[edge]
        );
    }

    #[test]
    fn giver_of_point_mass_is_uniform() {
        let g = grid(4.0, 10);
        let p = HistogramMeasure::point_mass(g, 1.0).unwrap();
        let m = Operator::new(g).giver_moments(&p).unwrap();
        // cells 0 and 1 lie below the source cell: each gets h * Q = 0.4 * 2.5 ln 1.5
        assert!((m.mass[0] - 0.4 * 2.5 * 1.5f64.ln()).abs() < 1e-14);
        assert!((m.mass[1] - m.mass[0]).abs() < 1e-14);
        assert!(m.mass[3..].iter().all(|&v| v == 0.0));
        let out = giver_pushforward(&p).unwrap();
        assert!((out.mean() - 0.5).abs() < 1e-12);
        assert!((out.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn giver_halves_the_mean() {
        let g = grid(40.0, 4096);
        let p = HistogramMeasure::uniform(g, 0.0, 2.0).unwrap();
        let out = giver_pushforward(&p).unwrap();
        assert!((out.mean() - 0.5).abs() < 1e-12);
        assert!((out.total_mass() - 1.0).abs() < 1e-12);
        let e = equilibrium_reference(1.0, g).unwrap();
        let out = giver_pushforward(&e).unwrap();
        assert!(out.cell_mass().iter().all(|&m| m >= 0.0));
        let cdf = out.cdf_at_edges();
        assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn receiver_scales_the_mean_by_three_halves() {
        let g = grid(40.0, 4096);
        let p = HistogramMeasure::uniform(g, 0.0, 2.0).unwrap();
        let out = receiver_pushforward(&p).unwrap();
        assert!((out.mean() - 1.5).abs() < 1e-10);
        assert!((out.total_mass() - 1.0).abs() < 1e-12);
        // X <= 2 and eps Y <= 2
        let h = g.width();
        let last = out.cell_mass().iter().rposition(|&m| m > 0.0).unwrap();
        assert!(last as f64 * h < 4.0);
        assert_eq!(out.tail_mass(), 0.0);
    }

    #[test]
    fn receiver_of_mass_at_origin_stays_at_origin() {
        let g = grid(10.0, 100);
        let p = HistogramMeasure::point_mass(g, 0.05).unwrap();
        assert_eq!(p.cell_mass()[0], 1.0);
        let out = receiver_pushforward(&p).unwrap();
        assert!(out.cell_mass()[2..].iter().all(|&m| m == 0.0));
        assert!((out.mean() - 1.5 * 0.05).abs() < 1e-15);
    }

    #[test]
    fn apply_conserves_mass_and_mean_with_tail() {
        let g = grid(10.0, 200);
        let p = HistogramMeasure::from_samples(&[0.3, 1.1, 2.0, 4.5, 9.9, 14.0], g).unwrap();
        let out = apply_t(&p).unwrap();
        assert!((out.total_mass() - 1.0).abs() < 1e-12);
        assert!((out.mean() - p.mean()).abs() < 1e-10 * p.mean());
        assert!(out.tail_mass() > 0.0 && out.tail_mean() >= 10.0);
    }

    #[test]
    fn fft_and_direct_routes_agree() {
        let g = grid(20.0, 200);
        let p = HistogramMeasure::uniform_mixture(g, &[(0.0, 2.0, 1.0), (3.0, 4.0, 0.5)]).unwrap();
        let a = Operator::with_options(g, Method::Direct, Exec::Sequential)
            .transition_moments(&p)
            .unwrap();
        let b = Operator::with_options(g, Method::Fft, Exec::Sequential)
            .transition_moments(&p)
            .unwrap();
        for (x, y) in a.mass.iter().zip(&b.mass) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn iterate_zero_steps() {
        let g = grid(40.0, 2048);
        let p = HistogramMeasure::uniform(g, 0.0, 2.0).unwrap();
        let it = iterate(&p, 0, &MetricConfig::default()).unwrap();
        assert_eq!(it.trace.len(), 1);
        assert_eq!(it.trace[0].t, 0);
        assert!((it.trace[0].mean - 1.0).abs() < 1e-12);
        assert_eq!(it.final_measure, p);
    }

    #[test]
    fn trace_csv_format() {
        let r = TraceRecord {
            t: 3,
            mean: 1.0,
            m_alpha: 2.0,
            cv: 1.5,
            ks: 0.25,
            d_alpha: 0.125,
        };
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[r]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "t,mean,m_alpha,cv,ks,d_alpha\n3,1.0000000000000000e0,2.0000000000000000e0,1.5000000000000000e0,2.5000000000000000e-1,1.2500000000000000e-1\n"
        );
    }
}
