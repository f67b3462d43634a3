//! Seeded random probability measures for property checks.
//!
//! Two families: mixtures of 1 to 5 uniform bumps on `[0, 10]`, rescaled to
//! mean `w`, and gamma laws with shape in {1/2, 1, 2, 3} and mean `w`.

use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{domain, Result};
use crate::histogram::{GridSpec, HistogramMeasure};

const GAMMA_SHAPES: [f64; 4] = [0.5, 1.0, 2.0, 3.0];

/// Bump mixtures are redrawn until their support fits in this fraction of `x_max`,
/// so one application of the operator stays on the grid.
pub const SUPPORT_FRACTION: f64 = 0.45;

#[derive(Debug)]
pub struct MeasureGenerator {
    grid: GridSpec,
    w: f64,
    rng: StdRng,
}

impl MeasureGenerator {
    pub fn new(grid: GridSpec, w: f64, seed: u64) -> Result<Self> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(domain(format!("mean must be positive, got {w}")));
        }
        if SUPPORT_FRACTION * grid.x_max() <= w {
            return Err(domain(format!(
                "grid with x_max = {} is too short for mean {w}",
                grid.x_max()
            )));
        }
        Ok(Self {
            grid,
            w,
            rng: StdRng::seed_from_u64(seed),
        })
    }

    /// Uniform bumps on `[0, 10]` with random weights, scaled to mean `w`.
    pub fn bumps(&mut self) -> Result<HistogramMeasure> {
        loop {
            let k = self.rng.random_range(1..=5);
            let mut parts = Vec::with_capacity(k);
            for _ in 0..k {
                let a: f64 = self.rng.random_range(0.0..10.0);
                let b: f64 = self.rng.random_range(0.0..10.0);
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                if hi - lo < 1e-3 {
                    continue;
                }
                parts.push((lo, hi, self.rng.random_range(0.05..1.0)));
            }
            if parts.is_empty() {
                continue;
            }
            let total: f64 = parts.iter().map(|p| p.2).sum();
            let mean: f64 = parts.iter().map(|p| p.2 * 0.5 * (p.0 + p.1)).sum::<f64>() / total;
            let scale = self.w / mean;
            let top = parts.iter().map(|p| p.1).fold(0.0, f64::max) * scale;
            if top > SUPPORT_FRACTION * self.grid.x_max() {
                continue;
            }
            let scaled: Vec<_> = parts
                .iter()
                .map(|&(lo, hi, wt)| (lo * scale, hi * scale, wt))
                .collect();
            return HistogramMeasure::uniform_mixture(self.grid, &scaled);
        }
    }

    /// Gamma law with a random shape from {1/2, 1, 2, 3} and mean `w`.
    pub fn gamma(&mut self) -> Result<HistogramMeasure> {
        let shape = GAMMA_SHAPES[self.rng.random_range(0..GAMMA_SHAPES.len())];
        gamma_measure(self.grid, shape, self.w)
    }

    /// A bump mixture three times out of four, otherwise a gamma law.
    pub fn measure(&mut self) -> Result<HistogramMeasure> {
        if self.rng.random_bool(0.75) {
            self.bumps()
        } else {
            self.gamma()
        }
    }

    /// `count` independent draws from [`measure`](Self::measure).
    pub fn measures(&mut self, count: usize) -> Result<Vec<HistogramMeasure>> {
        (0..count).map(|_| self.measure()).collect()
    }

    /// `count` pairs of distinct equal-mean measures.
    ///
    /// Two gamma draws of the same shape coincide, and on coarse grids two
    /// narrow bumps can land on the same cells, so the second member is
    /// redrawn until some cell mass differs by more than `1e-9`.
    pub fn pairs(&mut self, count: usize) -> Result<Vec<(HistogramMeasure, HistogramMeasure)>> {
        (0..count)
            .map(|_| {
                let p = self.measure()?;
                loop {
                    let q = self.measure()?;
                    if distinct(&p, &q) {
                        return Ok((p, q));
                    }
                }
            })
            .collect()
    }
}

fn distinct(p: &HistogramMeasure, q: &HistogramMeasure) -> bool {
    p.cell_mass()
        .iter()
        .zip(q.cell_mass())
        .any(|(a, b)| (a - b).abs() > 1e-9)
}

/// Mean-exact projection of the gamma law with the given shape and mean.
pub fn gamma_measure(grid: GridSpec, shape: f64, mean: f64) -> Result<HistogramMeasure> {
    let norm = match shape {
        0.5 => PI.sqrt(),
        1.0 | 2.0 => 1.0,
        3.0 => 2.0,
        _ => return Err(domain(format!("unsupported gamma shape {shape}"))),
    };
    let theta = mean / shape;
    let pdf = move |x: f64| {
        let z = x / theta;
        z.powf(shape - 1.0) * (-z).exp() / (norm * theta)
    };
    HistogramMeasure::from_pdf_conservative(pdf, grid, 16)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bumps_have_requested_mean_and_fit() {
        let g = GridSpec::new(40.0, 512).unwrap();
        let mut gen = MeasureGenerator::new(g, 1.0, 7).unwrap();
        for _ in 0..20 {
            let p = gen.bumps().unwrap();
            assert!((p.mean() - 1.0).abs() < 1e-12);
            assert!((p.total_mass() - 1.0).abs() < 1e-12);
            assert_eq!(p.tail_mass(), 0.0);
            let last = p.cell_mass().iter().rposition(|&m| m > 0.0).unwrap();
            assert!(g.right(last) <= 0.45 * 40.0 + 2.0 * g.width());
        }
    }

    #[test]
    fn gamma_shapes_have_requested_mean() {
        let g = GridSpec::new(40.0, 2048).unwrap();
        for &k in &GAMMA_SHAPES {
            let p = gamma_measure(g, k, 1.0).unwrap();
            assert!((p.mean() - 1.0).abs() < 1e-10, "shape {k}: {}", p.mean());
        }
        assert!(gamma_measure(g, 1.5, 1.0).is_err());
    }

    #[test]
    fn same_seed_same_measures() {
        let g = GridSpec::new(40.0, 256).unwrap();
        let a = MeasureGenerator::new(g, 1.0, 3)
            .unwrap()
            .measures(5)
            .unwrap();
        let b = MeasureGenerator::new(g, 1.0, 3)
            .unwrap()
            .measures(5)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pair_members_differ() {
        let g = GridSpec::new(40.0, 256).unwrap();
        for (p, q) in MeasureGenerator::new(g, 1.0, 5).unwrap().pairs(40).unwrap() {
            assert!(distinct(&p, &q));
        }
    }
}
