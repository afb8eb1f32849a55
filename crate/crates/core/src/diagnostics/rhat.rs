use crate::diagnostics::TraceSeries;
use crate::error::{Error, Result};

/// R-hat pieces for one coordinate of the observable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordinateRhat {
    /// `B/N`, the variance of the chain means.
    pub between_over_n: f64,
    /// `W`, the mean within-chain variance.
    pub within: f64,
    /// `σ̂²₊ = (N-1)/N·W + B/N`.
    pub pooled: f64,
    pub rhat: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhatReport {
    pub chains: usize,
    pub length: usize,
    pub coordinates: Vec<CoordinateRhat>,
    /// Mean of R-hat over coordinates.
    pub mean: f64,
    /// 25th, 50th, 75th and 95th percentiles of R-hat over coordinates.
    pub percentiles: [f64; 4],
}

impl RhatReport {
    pub const PERCENTILE_LEVELS: [f64; 4] = [25.0, 50.0, 75.0, 95.0];

    pub fn values(&self) -> Vec<f64> {
        self.coordinates.iter().map(|c| c.rhat).collect()
    }
}

/// R-hat of `M >= 2` chains of equal length `N >= 2`, computed per coordinate.
///
/// Returns [`Error::DegenerateVariance`] when any coordinate has zero
/// within-chain variance.
pub fn rhat(chains: &[TraceSeries]) -> Result<RhatReport> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::InvalidConfig(format!(
            "R-hat needs at least two chains, got {m}"
        )));
    }
    let n = chains[0].len();
    let dim = chains[0].dim();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "R-hat needs chains of length >= 2, got {n}"
        )));
    }
    if chains.iter().any(|c| c.len() != n || c.dim() != dim) {
        return Err(Error::ShapeMismatch(
            "R-hat chains differ in length or dimension".into(),
        ));
    }
    let (mf, nf) = (m as f64, n as f64);
    let mut coordinates = Vec::with_capacity(dim);
    for j in 0..dim {
        let means: Vec<f64> = chains
            .iter()
            .map(|c| c.values().iter().map(|v| v[j]).sum::<f64>() / nf)
            .collect();
        let grand = means.iter().sum::<f64>() / mf;
        let between_over_n = means.iter().map(|&mu| (mu - grand).powi(2)).sum::<f64>() / (mf - 1.0);
        let within = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| c.values().iter().map(|v| (v[j] - mu).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (mf * (nf - 1.0));
        if within <= 0.0 {
            return Err(Error::DegenerateVariance);
        }
        let pooled = (nf - 1.0) / nf * within + between_over_n;
        let rhat = (mf + 1.0) / mf * pooled / within - (nf - 1.0) / (mf * nf);
        coordinates.push(CoordinateRhat {
            between_over_n,
            within,
            pooled,
            rhat,
        });
    }
    let values: Vec<f64> = coordinates.iter().map(|c| c.rhat).collect();
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    let percentiles = RhatReport::PERCENTILE_LEVELS.map(|p| percentile(&values, p));
    Ok(RhatReport {
        chains: m,
        length: n,
        coordinates,
        mean,
        percentiles,
    })
}

/// R-hat at a point in time: the mean sweep of the measurements used.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedRhat {
    pub time: f64,
    pub report: RhatReport,
}

/// R-hat on consecutive disjoint blocks of `block` measurements, each stamped
/// with the average sweep inside its block. A trailing partial block is dropped.
pub fn rhat_blocked(chains: &[TraceSeries], block: usize) -> Result<Vec<TimedRhat>> {
    let len = common_len(chains)?;
    (0..len / block.max(1))
        .map(|b| {
            let (s, e) = (b * block, (b + 1) * block);
            timed(chains, s, e)
        })
        .collect()
}

/// R-hat on growing prefixes `[0, k·block)` for `k = 1, 2, ...`.
pub fn rhat_cumulative(chains: &[TraceSeries], block: usize) -> Result<Vec<TimedRhat>> {
    let len = common_len(chains)?;
    (1..=len / block.max(1)).map(|k| timed(chains, 0, k * block)).collect()
}

fn common_len(chains: &[TraceSeries]) -> Result<usize> {
    let len = chains.iter().map(TraceSeries::len).min().unwrap_or(0);
    Ok(len)
}

fn timed(chains: &[TraceSeries], s: usize, e: usize) -> Result<TimedRhat> {
    let blocks: Vec<TraceSeries> = chains.iter().map(|c| c.slice(s, e)).collect();
    let report = rhat(&blocks)?;
    let sweeps = &chains[0].sweeps()[s..e];
    let time = sweeps.iter().map(|&t| t as f64).sum::<f64>() / sweeps.len() as f64;
    Ok(TimedRhat { time, report })
}

/// Linearly interpolated percentile (`p` in `[0, 100]`) of unsorted data.
pub fn percentile(data: &[f64], p: f64) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p.clamp(0.0, 100.0) / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}
