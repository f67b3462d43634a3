//! Wealth distributions as cell masses on a uniform grid plus a tail bucket.
//!
//! Inside a cell the measure is modeled as uniform, so every statistic
//! (moments, cdf, Laplace transform) is computed exactly under that model.
//! Mass beyond `x_max` lives in a tail bucket that stores its mass and mean
//! and is treated as a point mass at that mean.

use std::io::{BufRead, Write};

use crate::error::{domain, Error, Result};
use crate::exec::Exec;
use crate::quadrature::UnitRule;

/// Masses in `[-NEG_CLAMP, 0)` produced by floating cancellation are clamped.
pub const NEG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    x_max: f64,
    n_cells: usize,
}

impl GridSpec {
    pub fn new(x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "x_max must be positive, got {x_max}"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self { x_max, n_cells })
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Cell width `h = x_max / n_cells`.
    pub fn width(&self) -> f64 {
        self.x_max / self.n_cells as f64
    }

    pub fn left(&self, i: usize) -> f64 {
        i as f64 * self.width()
    }

    pub fn right(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.width()
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.width()
    }

    /// Index of the cell containing `x`, or `None` when `x >= x_max`.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if x >= self.x_max {
            return None;
        }
        let i = (x / self.width()).floor() as usize;
        Some(i.min(self.n_cells - 1))
    }
}

/// Per-cell mass and first moment of a measure that is not necessarily
/// uniform inside its cells.
///
/// `local[k]` is `int tau dmu` over cell `k`, where `tau in [0, 1)` is the
/// position inside the cell in units of the cell width. `tail_moment` is the
/// absolute first moment `int x dmu` of the mass beyond `x_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMoments {
    pub grid: GridSpec,
    pub mass: Vec<f64>,
    pub local: Vec<f64>,
    pub tail_mass: f64,
    pub tail_moment: f64,
}

impl CellMoments {
    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            mass: vec![0.0; n],
            local: vec![0.0; n],
            tail_mass: 0.0,
            tail_moment: 0.0,
        }
    }

    /// `self = a * self + b * other`, cell by cell.
    pub fn mix(&mut self, a: f64, other: &CellMoments, b: f64) {
        debug_assert_eq!(self.grid, other.grid);
        for (m, o) in self.mass.iter_mut().zip(&other.mass) {
            *m = a * *m + b * o;
        }
        for (m, o) in self.local.iter_mut().zip(&other.local) {
            *m = a * *m + b * o;
        }
        self.tail_mass = a * self.tail_mass + b * other.tail_mass;
        self.tail_moment = a * self.tail_moment + b * other.tail_moment;
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.tail_mass
    }

    /// First moment `int x dmu` of the described measure.
    pub fn first_moment(&self) -> f64 {
        let h = self.grid.width();
        let grid_part: f64 = self
            .mass
            .iter()
            .zip(&self.local)
            .enumerate()
            .map(|(k, (&m, &l))| h * (k as f64 * m + l))
            .sum();
        grid_part + self.tail_moment
    }

    /// Converts to a cell-uniform measure with the same total mass and first moment.
    ///
    /// Cell masses are kept as they are and the mean under the cell-center
    /// convention is corrected by a linear tilt `m_k (1 + lambda (c_k - mu))`,
    /// which leaves the grid mass unchanged and spreads the correction over
    /// the whole support. When the tilt is undefined (one occupied cell) or
    /// too strong, each cell is instead deposited linearly between the two
    /// cell centers around its centroid.
    pub fn into_measure(self) -> Result<HistogramMeasure> {
        let grid = self.grid;
        let n = grid.n_cells();
        let target = self.first_moment();
        let before = self.total_mass();

        let mut clamped = 0.0;
        let mut mass = self.mass.clone();
        for (k, m) in mass.iter_mut().enumerate() {
            if *m < 0.0 {
                if *m < -NEG_CLAMP {
                    return Err(Error::NegativeMass { cell: k, mass: *m });
                }
                clamped += *m;
                *m = 0.0;
            }
        }
        let mut tail_mass = self.tail_mass;
        let mut tail_moment = self.tail_moment;
        if tail_mass < 0.0 {
            if tail_mass < -NEG_CLAMP {
                return Err(Error::NegativeMass {
                    cell: n,
                    mass: tail_mass,
                });
            }
            clamped += tail_mass;
            tail_mass = 0.0;
            tail_moment = 0.0;
        }
        if clamped != 0.0 {
            let after = before - clamped;
            if after > 0.0 {
                let scale = before / after;
                mass.iter_mut().for_each(|m| *m *= scale);
                tail_mass *= scale;
                tail_moment *= scale;
            }
        }
        let tail_mean = if tail_mass > 0.0 {
            (tail_moment / tail_mass).max(grid.x_max())
        } else {
            0.0
        };

        let mass = match tilt(&grid, &mass, target - tail_mass * tail_mean) {
            Some(m) => m,
            None => {
                let mut moments = self;
                moments.mass = mass;
                deposit(&moments)
            }
        };
        HistogramMeasure::from_parts(grid, mass, tail_mass, tail_mean)
    }
}

// Tilts `mass` so that sum m_k c_k equals `grid_moment`.
fn tilt(grid: &GridSpec, mass: &[f64], grid_moment: f64) -> Option<Vec<f64>> {
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return (grid_moment == 0.0).then(|| mass.to_vec());
    }
    let current: f64 = mass
        .iter()
        .enumerate()
        .map(|(k, &m)| m * grid.center(k))
        .sum();
    let delta = grid_moment - current;
    if delta == 0.0 {
        return Some(mass.to_vec());
    }
    let mu = current / total;
    let spread: f64 = mass
        .iter()
        .enumerate()
        .map(|(k, &m)| m * (grid.center(k) - mu).powi(2))
        .sum();
    if !(spread > 1e-300) || (delta / spread).abs() * grid.x_max() > 0.5 {
        return None;
    }
    let lambda = delta / spread;
    Some(
        mass.iter()
            .enumerate()
            .map(|(k, &m)| m * (1.0 + lambda * (grid.center(k) - mu)))
            .collect(),
    )
}

// Linear deposit of each cell's mass between the centers around its centroid.
// Cell 0 cannot deposit leftwards; its deficit shifts mass from cell 1
// (then 2, ...) one cell to the left.
fn deposit(moments: &CellMoments) -> Vec<f64> {
    let n = moments.grid.n_cells();
    let mut out = vec![0.0; n];
    let mut deficit = 0.0;
    for k in 0..n {
        let m = moments.mass[k];
        if m <= 0.0 {
            continue;
        }
        let offset = (moments.local[k] / m - 0.5).clamp(-0.5, 0.5);
        let moved = m * offset.abs();
        if offset >= 0.0 && k + 1 < n {
            out[k] += m - moved;
            out[k + 1] += moved;
        } else if offset < 0.0 && k > 0 {
            out[k] += m - moved;
            out[k - 1] += moved;
        } else if offset < 0.0 {
            out[0] += m;
            deficit += moved;
        } else {
            out[k] += m;
        }
    }
    let mut j = 1;
    while deficit > 0.0 && j < n {
        let take = deficit.min(out[j]);
        out[j] -= take;
        out[j - 1] += take;
        deficit -= take;
        j += 1;
    }
    out
}

/// How [`HistogramMeasure::from_pdf_with`] projects a density onto the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Gauss-Legendre nodes per cell (at least 8).
    pub quad_points: usize,
    /// Redistribute cell masses so the cell-center mean matches the density's mean.
    pub conservative: bool,
    pub exec: Exec,
}

impl Default for Projection {
    fn default() -> Self {
        Self {
            quad_points: 16,
            conservative: false,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramMeasure {
    grid: GridSpec,
    cell_mass: Vec<f64>,
    tail_mass: f64,
    tail_mean: f64,
    cumulative: Vec<f64>,
}

impl HistogramMeasure {
    pub fn from_parts(
        grid: GridSpec,
        cell_mass: Vec<f64>,
        tail_mass: f64,
        tail_mean: f64,
    ) -> Result<Self> {
        if cell_mass.len() != grid.n_cells() {
            return Err(Error::InvalidMeasure(format!(
                "{} masses for {} cells",
                cell_mass.len(),
                grid.n_cells()
            )));
        }
        if let Some((i, &m)) = cell_mass
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m >= 0.0))
        {
            return Err(Error::InvalidMeasure(format!("cell {i} has mass {m}")));
        }
        if !(tail_mass.is_finite() && tail_mass >= 0.0) {
            return Err(Error::InvalidMeasure(format!("tail mass {tail_mass}")));
        }
        let tail_mean = if tail_mass > 0.0 {
            if !(tail_mean.is_finite() && tail_mean >= grid.x_max()) {
                return Err(Error::InvalidMeasure(format!(
                    "tail mean {tail_mean} must be finite and >= x_max = {}",
                    grid.x_max()
                )));
            }
            tail_mean
        } else {
            0.0
        };
        let mut cumulative = Vec::with_capacity(cell_mass.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for &m in &cell_mass {
            acc += m;
            cumulative.push(acc);
        }
        Ok(Self {
            grid,
            cell_mass,
            tail_mass,
            tail_mean,
            cumulative,
        })
    }

    /// Projects a density: each cell receives the Gauss-Legendre integral of
    /// `pdf` over the cell. The first cell is integrated in `t = sqrt(x)` so
    /// that `1/sqrt(x)` singularities at the origin stay accurate. Mass not
    /// captured by the grid goes to the tail.
    pub fn from_pdf<F>(pdf: F, grid: GridSpec, quad_points: usize) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Sync,
    {
        Self::from_pdf_with(
            pdf,
            grid,
            Projection {
                quad_points,
                ..Projection::default()
            },
        )
    }

    /// Like [`from_pdf`](Self::from_pdf), but the cell-center mean equals the
    /// density's mean (up to quadrature error).
    pub fn from_pdf_conservative<F>(pdf: F, grid: GridSpec, quad_points: usize) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Sync,
    {
        Self::from_pdf_with(
            pdf,
            grid,
            Projection {
                quad_points,
                conservative: true,
                ..Projection::default()
            },
        )
    }

    pub fn from_pdf_with<F>(pdf: F, grid: GridSpec, opts: Projection) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Sync,
    {
        if opts.quad_points < 8 {
            return Err(domain(format!(
                "quad_points must be at least 8, got {}",
                opts.quad_points
            )));
        }
        let rule = UnitRule::new(opts.quad_points);
        let h = grid.width();
        let n = grid.n_cells();

        let eval = |x: f64| -> Result<f64> {
            let v = pdf(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteDensity { x, value: v })
            }
        };

        // (mass, int tau dmu) for each cell.
        let cells: Vec<Result<(f64, f64)>> = opts.exec.map_range(n, |i| {
            let mut mass = 0.0;
            let mut local = 0.0;
            if i == 0 {
                let root = h.sqrt();
                for (t, w) in rule.iter() {
                    let r = root * t;
                    let x = r * r;
                    let v = eval(x)? * 2.0 * r * root * w;
                    mass += v;
                    local += v * (x / h);
                }
            } else {
                let a = grid.left(i);
                for (t, w) in rule.iter() {
                    let v = eval(a + h * t)? * h * w;
                    mass += v;
                    local += v * t;
                }
            }
            Ok((mass, local))
        });

        let mut moments = CellMoments::zeros(grid);
        for (k, c) in cells.into_iter().enumerate() {
            let (m, l) = c?;
            moments.mass[k] = m;
            moments.local[k] = l;
        }

        let total: f64 = moments.mass.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::ExcessMass(total));
        }
        let tail_mass = (1.0 - total).max(0.0);
        let tail_mean = if tail_mass > 0.0 {
            truncated_tail_mean(&pdf, grid.x_max(), &rule)
        } else {
            0.0
        };

        if opts.conservative {
            moments.tail_mass = tail_mass;
            moments.tail_moment = tail_mass * tail_mean;
            moments.into_measure()
        } else {
            Self::from_parts(grid, moments.mass, tail_mass, tail_mean)
        }
    }

    /// Empirical measure: each sample contributes `1/N` to its cell; samples
    /// at or beyond `x_max` go to the tail bucket.
    pub fn from_samples(samples: &[f64], grid: GridSpec) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidMeasure("no samples".into()));
        }
        let weight = 1.0 / samples.len() as f64;
        let mut mass = vec![0.0; grid.n_cells()];
        let mut tail_count = 0usize;
        let mut tail_sum = 0.0;
        for &x in samples {
            if !(x.is_finite() && x >= 0.0) {
                return Err(domain(format!("sample {x} is negative or non-finite")));
            }
            match grid.cell_of(x) {
                Some(i) => mass[i] += weight,
                None => {
                    tail_count += 1;
                    tail_sum += x;
                }
            }
        }
        let (tail_mass, tail_mean) = if tail_count > 0 {
            (tail_count as f64 * weight, tail_sum / tail_count as f64)
        } else {
            (0.0, 0.0)
        };
        Self::from_parts(grid, mass, tail_mass, tail_mean)
    }

    /// Uniform law on `[lo, hi]`, with exact cell overlaps and exact mean.
    pub fn uniform(grid: GridSpec, lo: f64, hi: f64) -> Result<Self> {
        Self::uniform_mixture(grid, &[(lo, hi, 1.0)])
    }

    /// Mixture of uniform components `(lo, hi, weight)`; weights are normalized.
    /// Cell masses are exact overlaps, then made mean-exact.
    pub fn uniform_mixture(grid: GridSpec, components: &[(f64, f64, f64)]) -> Result<Self> {
        let total_weight: f64 = components.iter().map(|c| c.2).sum();
        if components.is_empty() || !(total_weight > 0.0) {
            return Err(domain("uniform mixture needs positive total weight"));
        }
        let h = grid.width();
        let mut moments = CellMoments::zeros(grid);
        for &(lo, hi, weight) in components {
            if !(lo >= 0.0 && hi > lo && weight >= 0.0 && hi.is_finite()) {
                return Err(domain(format!(
                    "bad uniform component [{lo}, {hi}] weight {weight}"
                )));
            }
            let density = weight / total_weight / (hi - lo);
            let grid_hi = hi.min(grid.x_max());
            if lo < grid_hi {
                let first = grid.cell_of(lo).unwrap_or(grid.n_cells() - 1);
                for k in first..grid.n_cells() {
                    let a = grid.left(k).max(lo);
                    let b = grid.right(k).min(grid_hi);
                    if b <= a {
                        if grid.left(k) >= grid_hi {
                            break;
                        }
                        continue;
                    }
                    let m = density * (b - a);
                    moments.mass[k] += m;
                    // int (x - left)/h over [a, b] times density
                    let left = grid.left(k);
                    moments.local[k] += m * (0.5 * (a + b) - left) / h;
                }
            }
            if hi > grid.x_max() {
                let a = lo.max(grid.x_max());
                let m = density * (hi - a);
                moments.tail_mass += m;
                moments.tail_moment += m * 0.5 * (a + hi);
            }
        }
        moments.into_measure()
    }

    /// Unit mass at `x`, split between the two nearest cell centers so the mean is `x`.
    pub fn point_mass(grid: GridSpec, x: f64) -> Result<Self> {
        if !(x.is_finite() && x >= 0.0) {
            return Err(domain(format!("point mass location {x}")));
        }
        let mut moments = CellMoments::zeros(grid);
        match grid.cell_of(x) {
            Some(k) => {
                moments.mass[k] = 1.0;
                moments.local[k] = (x - grid.left(k)) / grid.width();
            }
            None => {
                moments.tail_mass = 1.0;
                moments.tail_moment = x;
            }
        }
        moments.into_measure()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn cell_mass(&self) -> &[f64] {
        &self.cell_mass
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn tail_mean(&self) -> f64 {
        self.tail_mean
    }

    pub fn total_mass(&self) -> f64 {
        self.cumulative[self.cell_mass.len()] + self.tail_mass
    }

    /// Mean under the cell-uniform model: cell centers plus the tail mean.
    pub fn mean(&self) -> f64 {
        let h = self.grid.width();
        let cells: f64 = self
            .cell_mass
            .iter()
            .enumerate()
            .map(|(i, &m)| m * (i as f64 + 0.5))
            .sum();
        cells * h + self.tail_mass * self.tail_mean
    }

    /// `M_alpha = int x^alpha dp`, exact per cell under the cell-uniform model.
    pub fn moment(&self, alpha: f64) -> Result<f64> {
        if !(alpha >= 0.0) {
            return Err(domain(format!("moment order must be >= 0, got {alpha}")));
        }
        let h = self.grid.width();
        let ap1 = alpha + 1.0;
        let mut prev = 0.0f64;
        let mut sum = 0.0;
        for (i, &m) in self.cell_mass.iter().enumerate() {
            let next = ((i + 1) as f64 * h).powf(ap1);
            if m != 0.0 {
                sum += m * (next - prev) / (ap1 * h);
            }
            prev = next;
        }
        let tail = if self.tail_mass > 0.0 {
            self.tail_mass * self.tail_mean.powf(alpha)
        } else {
            0.0
        };
        Ok(sum + tail)
    }

    pub fn variance(&self) -> Result<f64> {
        let m1 = self.mean();
        Ok(self.moment(2.0)? - m1 * m1)
    }

    /// Coefficient of variation `sqrt(M2 - M1^2) / M1`.
    pub fn cv(&self) -> Result<f64> {
        let m1 = self.mean();
        if !(m1 > 0.0) {
            return Err(domain("coefficient of variation needs a positive mean"));
        }
        Ok(self.variance()?.max(0.0).sqrt() / m1)
    }

    /// Gini coefficient from the Lorenz curve through cell centers and the
    /// tail mean, integrated with the trapezoid rule.
    pub fn gini(&self) -> Result<f64> {
        let total_wealth = self.mean();
        if !(total_wealth > 0.0) {
            return Err(domain("gini needs a positive mean"));
        }
        let total = self.total_mass();
        let points = self
            .cell_mass
            .iter()
            .enumerate()
            .map(|(i, &m)| (m, self.grid.center(i)))
            .chain(std::iter::once((self.tail_mass, self.tail_mean)));
        let mut lorenz_prev = 0.0;
        let mut area = 0.0;
        for (m, x) in points {
            if m == 0.0 {
                continue;
            }
            let lorenz = lorenz_prev + m * x / total_wealth;
            area += (m / total) * (lorenz_prev + lorenz);
            lorenz_prev = lorenz;
        }
        Ok(1.0 - area)
    }

    /// Cumulative mass up to `x`, linear inside cells.
    pub fn cdf_at(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(domain(format!("cdf requires x >= 0, got {x}")));
        }
        Ok(self.cdf_unchecked(x))
    }

    fn cdf_unchecked(&self, x: f64) -> f64 {
        let n = self.grid.n_cells();
        match self.grid.cell_of(x) {
            Some(i) => {
                let frac = (x - self.grid.left(i)) / self.grid.width();
                self.cumulative[i] + frac * self.cell_mass[i]
            }
            None => {
                let base = self.cumulative[n];
                if self.tail_mass > 0.0 && x >= self.tail_mean {
                    base + self.tail_mass
                } else {
                    base
                }
            }
        }
    }

    /// Cumulative mass at the cell edges `0, h, ..., x_max`.
    pub fn cdf_at_edges(&self) -> &[f64] {
        &self.cumulative
    }

    /// Laplace transform, exact under the cell-uniform model.
    pub fn laplace(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(domain(format!(
                "laplace transform requires s >= 0, got {s}"
            )));
        }
        Ok(laplace_of_masses(
            &self.grid,
            &self.cell_mass,
            self.tail_mass,
            self.tail_mean,
            s,
        ))
    }

    /// Sup distance between this measure's cdf and `target_cdf`, taken over
    /// every cell edge up to and including `x_max`.
    pub fn ks_distance<F: Fn(f64) -> f64>(&self, target_cdf: F) -> f64 {
        let h = self.grid.width();
        self.cumulative
            .iter()
            .enumerate()
            .map(|(i, &c)| (c - target_cdf(i as f64 * h)).abs())
            .fold(0.0, f64::max)
    }

    /// KS distance to another histogram, evaluated at this measure's edges.
    pub fn ks_distance_to(&self, other: &HistogramMeasure) -> f64 {
        self.ks_distance(|x| other.cdf_unchecked(x))
    }

    /// Writes `cell_index,x_left,x_right,mass` rows, the tail row and a
    /// `# tail_mean=` comment, all with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cell_index,x_left,x_right,mass")?;
        for (i, &m) in self.cell_mass.iter().enumerate() {
            writeln!(
                out,
                "{i},{:.16e},{:.16e},{:.16e}",
                self.grid.left(i),
                self.grid.right(i),
                m
            )?;
        }
        writeln!(
            out,
            "tail,{:.16e},inf,{:.16e}",
            self.grid.x_max(),
            self.tail_mass
        )?;
        writeln!(out, "# tail_mean={:.16e}", self.tail_mean)
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut masses = Vec::new();
        let mut tail: Option<(f64, f64)> = None;
        let mut tail_mean = 0.0;
        let parse = |line: usize, field: &str| -> Result<f64> {
            field.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("{field:?}: {e}"),
            })
        };
        for (idx, line) in input.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || (lineno == 1 && line.starts_with("cell_index")) {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("tail_mean=") {
                    tail_mean = parse(lineno, v)?;
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            if fields[0] == "tail" {
                tail = Some((parse(lineno, fields[1])?, parse(lineno, fields[3])?));
            } else {
                let index: usize = fields[0].parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad cell index {:?}", fields[0]),
                })?;
                if index != masses.len() {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("cell index {index} out of order"),
                    });
                }
                masses.push(parse(lineno, fields[3])?);
            }
        }
        let (x_max, tail_mass) = tail.ok_or(Error::Parse {
            line: 0,
            msg: "missing tail row".into(),
        })?;
        let grid = GridSpec::new(x_max, masses.len())?;
        Self::from_parts(grid, masses, tail_mass, tail_mean)
    }
}

/// `(1 - exp(-z)) / z`, the Laplace factor of a unit-mass uniform cell of width `z/s`.
pub(crate) fn uniform_cell_factor(z: f64) -> f64 {
    if z < 1e-8 {
        1.0 - 0.5 * z
    } else {
        -(-z).exp_m1() / z
    }
}

/// Laplace transform of a (possibly signed) cell-uniform mass vector plus a tail atom.
pub(crate) fn laplace_of_masses(
    grid: &GridSpec,
    mass: &[f64],
    tail_mass: f64,
    tail_at: f64,
    s: f64,
) -> f64 {
    let h = grid.width();
    let factor = uniform_cell_factor(s * h);
    let mut sum = 0.0;
    for (i, &m) in mass.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let decay = (-s * i as f64 * h).exp();
        if decay == 0.0 {
            break;
        }
        sum += m * decay;
    }
    let tail = if tail_mass != 0.0 {
        tail_mass * (-s * tail_at).exp()
    } else {
        0.0
    };
    sum * factor + tail
}

// Mean of pdf beyond x_max, from panels on [x_max * 2^k, x_max * 2^(k+1)].
fn truncated_tail_mean<F: Fn(f64) -> f64>(pdf: &F, x_max: f64, rule: &UnitRule) -> f64 {
    let mut mass = 0.0;
    let mut moment = 0.0;
    let mut a = x_max;
    for _ in 0..8 {
        let b = 2.0 * a;
        let panels = 16;
        let step = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * step;
            for (t, w) in rule.iter() {
                let x = lo + step * t;
                let v = pdf(x);
                if v.is_finite() {
                    mass += v * w * step;
                    moment += x * v * w * step;
                }
            }
        }
        a = b;
    }
    if mass > 0.0 {
        (moment / mass).max(x_max)
    } else {
        x_max
    }
}
