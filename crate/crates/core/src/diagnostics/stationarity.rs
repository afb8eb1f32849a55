use serde::{Deserialize, Serialize};

use crate::diagnostics::TraceSeries;
use crate::error::{Error, Result};

/// Windowed-mean rule shared by the stationarity and merge detectors.
///
/// A series is cut into disjoint windows of `window` measurements. Two window
/// means agree when they differ by less than `tolerance_sigmas` standard errors
/// of their difference. Each window's standard error comes from its scatter
/// around a linear fit, inflated by the AR(1) factor `(1+ρ)/(1-ρ)` from its
/// lag-one autocorrelation; the median over the windows compared is used.
/// Detrending keeps a drift from inflating its own error bar.
///
/// Correlations slower than a window escape that estimate, so it is floored by
/// the spread between the compared windows, `mean((m[k+1]-m[k])²)/2`. Because
/// that floor is read off the windows under test, a suffix needs at least
/// [`MIN_WINDOWS`] of them: a steady drift of `d` per window then spans at
/// least `4d` while its floor only allows `3d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRule {
    pub window: usize,
    pub tolerance_sigmas: f64,
}

impl Default for WindowRule {
    fn default() -> Self {
        Self {
            window: 50,
            tolerance_sigmas: 3.0,
        }
    }
}

const MAX_RHO: f64 = 0.98;

/// Fewest windows a qualifying suffix may have (fewer if the series is short).
pub const MIN_WINDOWS: usize = 5;

struct Windows {
    means: Vec<f64>,
    /// Standard error of one window mean.
    se: f64,
}

fn windows(values: &[f64], first: usize, count: usize, w: usize) -> Windows {
    let mut means = Vec::with_capacity(count);
    let mut variances = Vec::with_capacity(count);
    let tc = (w as f64 - 1.0) / 2.0;
    let st: f64 = (0..w).map(|t| (t as f64 - tc).powi(2)).sum();
    for k in first..first + count {
        let v = &values[k * w..(k + 1) * w];
        let mean = v.iter().sum::<f64>() / w as f64;
        means.push(mean);
        let slope = if st > 0.0 {
            v.iter()
                .enumerate()
                .map(|(t, &x)| (t as f64 - tc) * (x - mean))
                .sum::<f64>()
                / st
        } else {
            0.0
        };
        let resid: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(t, &x)| x - mean - slope * (t as f64 - tc))
            .collect();
        let ss: f64 = resid.iter().map(|r| r * r).sum();
        let lag: f64 = resid.windows(2).map(|p| p[0] * p[1]).sum();
        let rho = if ss > 0.0 { (lag / ss).clamp(0.0, MAX_RHO) } else { 0.0 };
        let tau = (1.0 + rho) / (1.0 - rho);
        variances.push(ss / (w as f64 - 2.0) * tau / w as f64);
    }
    let within = median(&mut variances).sqrt();
    let between = if means.len() > 1 {
        let sq: f64 = means.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum();
        (sq / (2.0 * (means.len() - 1) as f64)).sqrt()
    } else {
        0.0
    };
    Windows {
        means,
        se: within.max(between),
    }
}

// The median keeps one transient window from widening every error bar.
fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn agree(a: f64, b: f64, se: f64, tol: f64) -> bool {
    // Exactly equal means agree even when the scatter is zero.
    (a - b).abs() <= 0.0 || (a - b).abs() < tol * se
}

// Window indices a qualifying suffix may start at.
fn suffix_starts(total: usize) -> std::ops::Range<usize> {
    let need = MIN_WINDOWS.min(total).max(2);
    0..(total + 1).saturating_sub(need)
}

fn onset_window(values: &[f64], rule: WindowRule) -> Option<(usize, Windows)> {
    let w = rule.window.max(3);
    let total = values.len() / w;
    suffix_starts(total).find_map(|k| {
        let win = windows(values, k, total - k, w);
        let se_diff = win.se * std::f64::consts::SQRT_2;
        let ok = win.means.iter().enumerate().all(|(i, &a)| {
            win.means[i + 1..]
                .iter()
                .all(|&b| agree(a, b, se_diff, rule.tolerance_sigmas))
        });
        ok.then_some((k, win))
    })
}

/// Earliest sweep after which every pair of later windows has agreeing means,
/// or `None` if no suffix of at least [`MIN_WINDOWS`] windows qualifies. Uses the first
/// coordinate of the series.
pub fn stationarity_onset(series: &TraceSeries, rule: WindowRule) -> Option<u64> {
    let values = series.coordinate(0);
    let w = rule.window.max(3);
    onset_window(&values, rule).map(|(k, _)| series.sweeps()[k * w])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeVerdict {
    /// First sweep from which the test chain stays at the informed level.
    pub merge_time: Option<u64>,
    /// Mean of the informed series after its onset.
    pub equilibrium: f64,
    pub informed_onset: u64,
}

/// Teacher–student criterion: compare a test chain against the equilibrium
/// level read off the informed chain.
///
/// The merge time is the earliest window start, no earlier than the informed
/// onset, after which every test window mean (at least [`MIN_WINDOWS`]) agrees
/// with the informed level. Each comparison uses the error bar of a test
/// window combined with that of an informed window, so an informed series
/// compared with itself merges exactly at its onset.
pub fn teacher_student_merge(informed: &TraceSeries, test: &TraceSeries, rule: WindowRule) -> Result<MergeVerdict> {
    let w = rule.window.max(3);
    let inf_values = informed.coordinate(0);
    let (k1, inf_win) = onset_window(&inf_values, rule).ok_or(Error::InformedNotStationary)?;
    let onset = informed.sweeps()[k1 * w];
    let equilibrium = inf_win.means.iter().sum::<f64>() / inf_win.means.len() as f64;

    let values = test.coordinate(0);
    let total = values.len() / w;
    let merge_time = suffix_starts(total)
        .filter(|&k| test.sweeps()[k * w] >= onset)
        .find(|&k| {
            let win = windows(&values, k, total - k, w);
            let se = (win.se.powi(2) + inf_win.se.powi(2)).sqrt();
            win.means
                .iter()
                .all(|&m| agree(m, equilibrium, se, rule.tolerance_sigmas))
        })
        .map(|k| test.sweeps()[k * w]);
    Ok(MergeVerdict {
        merge_time,
        equilibrium,
        informed_onset: onset,
    })
}
