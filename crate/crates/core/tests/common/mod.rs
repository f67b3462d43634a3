//! Independent reference computations shared by the integration tests.
#![allow(dead_code, clippy::excessive_precision)]

use std::f64::consts::FRAC_PI_2;

/// Tanh-sinh rule on [-1, 1]: (distance of the node from -1, from +1, weight).
pub struct TanhSinh {
    nodes: Vec<(f64, f64, f64)>,
}

impl TanhSinh {
    pub fn new(step: f64, t_max: f64) -> Self {
        let mut nodes = Vec::new();
        let k_max = (t_max / step).ceil() as i64;
        for k in -k_max..=k_max {
            let t = k as f64 * step;
            let e = (FRAC_PI_2 * t.sinh()).exp();
            // x = (e - 1/e) / (e + 1/e); 1 - x = 2 / (e^2 + 1); 1 + x = 2 e^2 / (e^2 + 1)
            let from_right = 2.0 / (e * e + 1.0);
            let from_left = 2.0 * e * e / (e * e + 1.0);
            let c = 0.5 * (e + 1.0 / e);
            let w = step * FRAC_PI_2 * t.cosh() / (c * c);
            if from_left > 0.0 && from_right > 0.0 && w > 0.0 {
                nodes.push((from_left, from_right, w));
            }
        }
        Self { nodes }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .map(|&(l, r, w)| {
                let x = if l < r { a + half * l } else { b - half * r };
                w * f(x)
            })
            .sum::<f64>()
            * half
    }
}

/// 10-point Gauss-Legendre on [a, b], nodes from the closed-form table.
pub fn gauss10<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    const X: [f64; 5] = [
        0.148_874_338_981_631_2,
        0.433_395_394_129_247_2,
        0.679_409_568_299_024_4,
        0.865_063_366_688_984_5,
        0.973_906_528_517_171_7,
    ];
    const W: [f64; 5] = [
        0.295_524_224_714_752_9,
        0.269_266_719_309_996_4,
        0.219_086_362_515_982_0,
        0.149_451_349_150_580_6,
        0.066_671_344_308_688_1,
    ];
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for i in 0..5 {
        s += W[i] * (f(c - h * X[i]) + f(c + h * X[i]));
    }
    s * h
}

/// Cell-uniform density on a uniform grid with no mass beyond it.
pub struct PiecewiseDensity {
    pub h: f64,
    pub density: Vec<f64>,
}

impl PiecewiseDensity {
    pub fn new(h: f64, mass: &[f64]) -> Self {
        Self {
            h,
            density: mass.iter().map(|m| m / h).collect(),
        }
    }

    pub fn at(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let k = (x / self.h).floor() as usize;
        self.density.get(k).copied().unwrap_or(0.0)
    }

    /// `int_u^inf p(v) / v dv`, cell by cell.
    pub fn q(&self, u: f64) -> f64 {
        let mut s = 0.0;
        for (l, &c) in self.density.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let a = l as f64 * self.h;
            let b = a + self.h;
            if u < b {
                s += c * (b / a.max(u)).ln();
            }
        }
        s
    }
}

/// Cell masses of `1/2 int_0^x p(x-u) Q(u) du + 1/2 Q(x)` over `n_out` cells,
/// by nested quadrature split at every kink of the integrands.
pub fn brute_force_cell_masses(p: &PiecewiseDensity, n_out: usize) -> Vec<f64> {
    let ts = TanhSinh::new(1.0 / 16.0, 3.2);
    let h = p.h;
    let n = p.density.len();
    let inner = |x: f64| -> f64 {
        // breakpoints of u -> p(x - u) Q(u) in [0, x]
        let mut cuts: Vec<f64> = vec![0.0, x];
        for e in 0..=n {
            let edge = e as f64 * h;
            if edge > 0.0 && edge < x {
                cuts.push(edge);
            }
            let shifted = x - edge;
            if shifted > 0.0 && shifted < x {
                cuts.push(shifted);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let mut s = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a <= 0.0 {
                continue;
            }
            let mid = 0.5 * (a + b);
            let c = p.at(x - mid);
            if c == 0.0 {
                continue;
            }
            s += if a < h {
                c * ts.integrate(a, b, |u| p.q(u))
            } else {
                c * gauss10(a, b, |u| p.q(u))
            };
        }
        s
    };
    (0..n_out)
        .map(|k| {
            let a = k as f64 * h;
            let b = a + h;
            let giver = ts.integrate(a, b, |x| p.q(x));
            let receiver = ts.integrate(a, b, inner);
            0.5 * giver + 0.5 * receiver
        })
        .collect()
}
