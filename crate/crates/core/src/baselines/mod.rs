//! Hamiltonian Monte Carlo and Metropolis-adjusted Langevin baselines.
//!
//! Both samplers work on a flat position vector against any [`LogDensity`].
//! Adapters in [`targets`] expose the loss-based and the intermediate-noise
//! posteriors in that form.

mod targets;

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::TraceSeries;
use crate::error::{Error, Result};

pub use targets::{ClassicalTarget, IntermediateTarget};

/// An unnormalized log-density with gradient over `R^dim`.
///
/// Implementations must be read-only so several chains can share one target.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// `log π(x)` up to a constant, writing `∇ log π(x)` into `grad`.
    /// Infeasible points return `-∞`; the gradient is then unspecified.
    fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcSettings {
    pub step_size: f64,
    pub leapfrog_steps: usize,
}

impl HmcSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) || self.leapfrog_steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "HMC needs a positive step size and at least one leapfrog step, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MalaSettings {
    pub step_size: f64,
}

impl MalaSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "MALA needs a positive step size, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    Hmc(HmcSettings),
    Mala(MalaSettings),
}

impl BaselineKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Hmc(s) => s.validate(),
            Self::Mala(s) => s.validate(),
        }
    }
}

/// A position with its cached log-density and gradient.
#[derive(Clone, Debug)]
pub struct Point {
    pub x: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

impl Point {
    pub fn evaluate<T: LogDensity + ?Sized>(target: &T, x: Vec<f64>) -> Self {
        let mut grad = vec![0.0; x.len()];
        let log_density = target.value_and_grad(&x, &mut grad);
        Self { x, log_density, grad }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    /// Log of the Metropolis ratio; `-∞` for infeasible or non-finite proposals.
    pub log_accept_ratio: f64,
    /// Change of the Hamiltonian along the HMC trajectory; zero for MALA.
    pub energy_error: f64,
}

/// `L` leapfrog steps from `(x, p)` with the gradient `g` at `x`, all updated
/// in place. Returns the log-density at the final position.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    x: &mut [f64],
    p: &mut [f64],
    g: &mut [f64],
    step_size: f64,
    steps: usize,
) -> f64 {
    let half = 0.5 * step_size;
    let mut logp = f64::NAN;
    for _ in 0..steps {
        for (pi, gi) in p.iter_mut().zip(g.iter()) {
            *pi += half * gi;
        }
        for (xi, pi) in x.iter_mut().zip(p.iter()) {
            *xi += step_size * pi;
        }
        logp = target.value_and_grad(x, g);
        if !logp.is_finite() {
            return logp;
        }
        for (pi, gi) in p.iter_mut().zip(g.iter()) {
            *pi += half * gi;
        }
    }
    logp
}

fn dot(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn metropolis<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    // ln(u) for u in [0, 1); u = 0 gives -∞, which any finite ratio accepts.
    let u: f64 = rng.random();
    log_ratio.is_finite() && u.ln() < log_ratio
}

/// One HMC transition. The momentum is refreshed from a standard normal, `L`
/// leapfrog steps propose a new state and the Metropolis test uses the total
/// energy `-log π(x) + |p|²/2`. On rejection `point` is left untouched.
pub fn hmc_step<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    point: &mut Point,
    settings: &HmcSettings,
    rng: &mut R,
) -> StepOutcome {
    let mut p: Vec<f64> = (0..point.x.len()).map(|_| rng.sample(StandardNormal)).collect();
    let h0 = -point.log_density + 0.5 * dot(&p);
    let mut x = point.x.clone();
    let mut g = point.grad.clone();
    let logp = leapfrog(
        target,
        &mut x,
        &mut p,
        &mut g,
        settings.step_size,
        settings.leapfrog_steps,
    );
    let h1 = -logp + 0.5 * dot(&p);
    let energy_error = h1 - h0;
    let log_accept_ratio = if energy_error.is_nan() {
        f64::NEG_INFINITY
    } else {
        -energy_error
    };
    let accepted = metropolis(log_accept_ratio, rng);
    if accepted {
        *point = Point {
            x,
            log_density: logp,
            grad: g,
        };
    }
    StepOutcome {
        accepted,
        log_accept_ratio,
        energy_error,
    }
}

/// `log q(to | from)` for the Langevin proposal, without the constant.
fn log_proposal(to: &[f64], from: &[f64], grad_from: &[f64], eta: f64) -> f64 {
    let sq: f64 = to
        .iter()
        .zip(from)
        .zip(grad_from)
        .map(|((t, f), g)| {
            let d = t - f - eta * g;
            d * d
        })
        .sum();
    -sq / (4.0 * eta)
}

/// One MALA transition: proposal `x' = x + η∇log π(x) + √(2η)ξ` and a
/// Metropolis–Hastings correction with the Gaussian proposal densities,
/// evaluated in log space.
pub fn mala_step<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    point: &mut Point,
    settings: &MalaSettings,
    rng: &mut R,
) -> StepOutcome {
    let eta = settings.step_size;
    let scale = (2.0 * eta).sqrt();
    let proposal: Vec<f64> = point
        .x
        .iter()
        .zip(&point.grad)
        .map(|(x, g)| {
            let xi: f64 = rng.sample(StandardNormal);
            x + eta * g + scale * xi
        })
        .collect();
    let next = Point::evaluate(target, proposal);
    let log_accept_ratio = if next.log_density.is_finite() {
        let r = next.log_density + log_proposal(&point.x, &next.x, &next.grad, eta)
            - point.log_density
            - log_proposal(&next.x, &point.x, &point.grad, eta);
        if r.is_nan() {
            f64::NEG_INFINITY
        } else {
            r
        }
    } else {
        f64::NEG_INFINITY
    };
    let accepted = metropolis(log_accept_ratio.min(0.0), rng);
    if accepted {
        *point = next;
    }
    StepOutcome {
        accepted,
        log_accept_ratio,
        energy_error: 0.0,
    }
}

/// A running HMC or MALA chain with acceptance bookkeeping.
#[derive(Clone, Debug)]
pub struct BaselineChain {
    kind: BaselineKind,
    point: Point,
    accepted: u64,
    total: u64,
}

impl BaselineChain {
    pub fn new<T: LogDensity + ?Sized>(kind: BaselineKind, target: &T, start: Vec<f64>) -> Result<Self> {
        kind.validate()?;
        if start.len() != target.dim() {
            return Err(Error::ShapeMismatch(format!(
                "start has {} coordinates, target has {}",
                start.len(),
                target.dim()
            )));
        }
        let point = Point::evaluate(target, start);
        if !point.log_density.is_finite() || point.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteDensity);
        }
        Ok(Self {
            kind,
            point,
            accepted: 0,
            total: 0,
        })
    }

    pub fn step<T: LogDensity + ?Sized, R: Rng + ?Sized>(&mut self, target: &T, rng: &mut R) -> StepOutcome {
        let out = match &self.kind {
            BaselineKind::Hmc(s) => hmc_step(target, &mut self.point, s, rng),
            BaselineKind::Mala(s) => mala_step(target, &mut self.point, s, rng),
        };
        self.total += 1;
        self.accepted += out.accepted as u64;
        out
    }

    pub fn position(&self) -> &[f64] {
        &self.point.x
    }

    pub fn point(&self) -> &Point {
        &self.point
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `accepted / total`, or `NaN` before the first step.
    pub fn acceptance_rate(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.total as f64
        }
    }
}

/// Result of [`run_chain`].
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub trace: TraceSeries,
    pub accepted: u64,
    pub total: u64,
    pub final_position: Vec<f64>,
}

impl ChainRun {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.total as f64
    }
}

/// Run `budget` steps, recording `observe(position)` at step 0, every
/// `spacing` steps and at the final step.
pub fn run_chain<T, R, F>(
    kind: BaselineKind,
    start: Vec<f64>,
    target: &T,
    budget: u64,
    spacing: u64,
    rng: &mut R,
    mut observe: F,
) -> Result<ChainRun>
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if budget == 0 || spacing == 0 {
        return Err(Error::InvalidConfig("budget and spacing must be at least 1".into()));
    }
    let mut chain = BaselineChain::new(kind, target, start)?;
    let clock = Instant::now();
    let mut trace = TraceSeries::new();
    trace.push(0, 0.0, observe(chain.position()))?;
    for t in 1..=budget {
        chain.step(target, rng);
        if t % spacing == 0 || t == budget {
            trace.push(t, clock.elapsed().as_secs_f64(), observe(chain.position()))?;
        }
    }
    Ok(ChainRun {
        trace,
        accepted: chain.accepted(),
        total: chain.total(),
        final_position: chain.point.x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;

    struct StdNormal(usize);

    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            for (g, v) in grad.iter_mut().zip(x) {
                *g = -v;
            }
            -0.5 * dot(x)
        }
    }

    struct Flat;

    impl LogDensity for Flat {
        fn dim(&self) -> usize {
            3
        }
        fn value_and_grad(&self, _x: &[f64], grad: &mut [f64]) -> f64 {
            grad.fill(0.0);
            0.0
        }
    }

    #[test]
    fn leapfrog_is_reversible() {
        let t = StdNormal(4);
        let x0 = vec![0.3, -1.2, 2.0, 0.01];
        let mut x = x0.clone();
        let mut p = vec![1.0, 0.5, -0.25, 2.0];
        let mut g = x.iter().map(|v| -v).collect::<Vec<_>>();
        leapfrog(&t, &mut x, &mut p, &mut g, 0.1, 25);
        p.iter_mut().for_each(|v| *v = -*v);
        leapfrog(&t, &mut x, &mut p, &mut g, 0.1, 25);
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn mala_on_flat_target_always_accepts() {
        let mut rng = RngStream::new(1, 0);
        let mut chain =
            BaselineChain::new(BaselineKind::Mala(MalaSettings { step_size: 0.7 }), &Flat, vec![0.0; 3]).unwrap();
        for _ in 0..1000 {
            let out = chain.step(&Flat, &mut rng);
            assert_eq!(out.log_accept_ratio, 0.0);
            assert!(out.accepted);
        }
    }

    #[test]
    fn budget_one_records_two_points() {
        let mut rng = RngStream::new(2, 0);
        let kind = BaselineKind::Hmc(HmcSettings {
            step_size: 0.1,
            leapfrog_steps: 3,
        });
        let run = run_chain(kind, vec![0.0; 2], &StdNormal(2), 1, 100, &mut rng, |x| x.to_vec()).unwrap();
        assert_eq!(run.trace.sweeps(), &[0, 1]);
        assert_eq!(run.total, 1);
        assert!(run_chain(kind, vec![0.0; 2], &StdNormal(2), 0, 1, &mut rng, |x| x.to_vec()).is_err());
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let t = StdNormal(1);
        assert!(BaselineChain::new(
            BaselineKind::Hmc(HmcSettings {
                step_size: 0.0,
                leapfrog_steps: 1
            }),
            &t,
            vec![0.0]
        )
        .is_err());
        assert!(BaselineChain::new(BaselineKind::Mala(MalaSettings { step_size: f64::NAN }), &t, vec![0.0]).is_err());
    }
}
