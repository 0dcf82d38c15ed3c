use rayon::prelude::*;
use serde::Serialize;

use super::RasmError;

pub const DEFAULT_GRID_POINTS: usize = 512;

/// Upper bound on automatically sized grids.
pub const MAX_GRID_POINTS: usize = 1 << 20;

const FALLBACK_BANDWIDTH: f64 = 1e-3;

fn check_finite(values: &[f64]) -> Result<(), RasmError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(RasmError::NonFinite)
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
///
/// When one spread estimate is zero the other is used; when both are zero
/// the bandwidth is `1e-3`.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64, RasmError> {
    if values.len() < 2 {
        return Err(RasmError::TooFewValues { need: 2, got: values.len() });
    }
    check_finite(values)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return Ok(FALLBACK_BANDWIDTH),
    };
    Ok(0.9 * spread * n.powf(-0.2))
}

#[derive(Debug, Clone, PartialEq)]
pub enum KdeGrid {
    /// Evenly spaced over `[min - 3h, max + 3h]`, at least 512 points and
    /// never coarser than `h`.
    Auto,
    /// Exactly this many evenly spaced points over `[min - 3h, max + 3h]`.
    Points(usize),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kde {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo + hi) / 2.0];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect()
}

/// Gaussian kernel density estimate evaluated on `grid`.
pub fn kde_density(values: &[f64], bandwidth: f64, grid: &KdeGrid) -> Result<Kde, RasmError> {
    if values.is_empty() {
        return Err(RasmError::TooFewValues { need: 1, got: 0 });
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(RasmError::Bandwidth(bandwidth));
    }
    check_finite(values)?;
    let h = bandwidth;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (min - 3.0 * h, max + 3.0 * h);
    let xs = match grid {
        KdeGrid::Auto => {
            let needed = ((hi - lo) / h).ceil() as usize + 1;
            if needed > MAX_GRID_POINTS {
                log::warn!("KDE grid capped at {MAX_GRID_POINTS} points (range/bandwidth needs {needed})");
            }
            linspace(lo, hi, needed.clamp(DEFAULT_GRID_POINTS, MAX_GRID_POINTS))
        }
        KdeGrid::Points(n) => linspace(lo, hi, (*n).max(1)),
        KdeGrid::Explicit(xs) => xs.clone(),
    };
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = xs
        .par_iter()
        .map(|x| {
            values
                .iter()
                .map(|v| {
                    let z = (x - v) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(Kde { grid: xs, density, bandwidth: h })
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Mergeable running central moments up to fourth order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        *self = self.merge(&Moments { n: 1, mean: x, m2: 0.0, m3: 0.0, m4: 0.0 });
    }

    pub fn merge(&self, o: &Moments) -> Moments {
        if self.n == 0 {
            return *o;
        }
        if o.n == 0 {
            return *self;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let d = o.mean - self.mean;
        let d_n = d / n;
        let m2 = self.m2 + o.m2 + d * d_n * na * nb;
        let m3 = self.m3 + o.m3 + d * d_n * d_n * na * nb * (na - nb) + 3.0 * d_n * (na * o.m2 - nb * self.m2);
        let m4 = self.m4
            + o.m4
            + d * d_n * d_n * d_n * na * nb * (na * na - na * nb + nb * nb)
            + 6.0 * d_n * d_n * (na * na * o.m2 + nb * nb * self.m2)
            + 4.0 * d_n * (na * o.m3 - nb * self.m3);
        Moments { n: self.n + o.n, mean: self.mean + d_n * nb, m2, m3, m4 }
    }

    /// Population central moment of order 2, 3 or 4.
    pub fn central(&self, order: u8) -> f64 {
        let n = self.n as f64;
        match order {
            2 => self.m2 / n,
            3 => self.m3 / n,
            4 => self.m4 / n,
            _ => panic!("order must be 2, 3 or 4"),
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistributionStats {
    pub n: usize,
    pub mean: f64,
    /// `None` for zero variance.
    pub skewness: Option<f64>,
    /// Excess kurtosis; `None` for zero variance.
    pub excess_kurtosis: Option<f64>,
    /// Sarle's bimodality coefficient; `None` for zero variance or `n < 4`.
    pub bimodality: Option<f64>,
}

/// Mean, population skewness `g1`, excess kurtosis `g2`, and Sarle's
/// bimodality coefficient `(g1^2 + 1) / (g2 + 3(n-1)^2 / ((n-2)(n-3)))`.
pub fn distribution_stats(values: &[f64]) -> Result<DistributionStats, RasmError> {
    if values.is_empty() {
        return Err(RasmError::TooFewValues { need: 1, got: 0 });
    }
    check_finite(values)?;
    Ok(stats_from_moments(&values.iter().copied().collect()))
}

pub(crate) fn stats_from_moments(m: &Moments) -> DistributionStats {
    let n = m.n as usize;
    let m2 = m.central(2);
    let (skewness, excess_kurtosis, bimodality) = if m2 > 0.0 {
        let g1 = m.central(3) / m2.powf(1.5);
        let g2 = m.central(4) / (m2 * m2) - 3.0;
        let bc = (n >= 4).then(|| {
            let nf = n as f64;
            (g1 * g1 + 1.0) / (g2 + 3.0 * (nf - 1.0).powi(2) / ((nf - 2.0) * (nf - 3.0)))
        });
        (Some(g1), Some(g2), bc)
    } else {
        (None, None, None)
    };
    DistributionStats { n, mean: m.mean, skewness, excess_kurtosis, bimodality }
}
