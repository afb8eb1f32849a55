//! Every Gibbs conditional checked against the joint intermediate-noise
//! density it is supposed to be a conditional of. Gaussian blocks are compared
//! with the mean and covariance read off the joint by finite differences;
//! scalar pre-activations with a quadrature CDF; probit scores with a
//! truncated-normal CDF and with rejection sampling.

use super::{check_gaussian_draws, gaussian_from_log_density, ks_one_sample, ks_two_sample, phi, NumericCdf};
use nalgebra::{DMatrix, DVector};
use nngibbs_core::cnn::{
    conv_w_conditional, conv_x_conditional, update_conv_bias, update_conv_w, update_conv_x, update_pool_x,
    ConvIndexMap, PoolMap,
};
use nngibbs_core::gibbs::{
    sample_z, update_bias_layer, update_probit_output, update_w_layer, update_x_layer, update_z_layer,
};
use nngibbs_core::model::{
    Activation, ChainState, ConvSpec, LayerOp, LayerSpec, Network, NetworkSpec, NoiseMode, NoiseSchedule, OutputModel,
    Params, PriorSpec,
};
use nngibbs_core::RngStream;
use rand::Rng;
use rand_distr::StandardNormal;

const DRAWS: usize = 20_000;
const SIGMAS: f64 = 5.0;
const ALPHA: f64 = 0.01;

struct Fixture {
    net: Network,
    noise: NoiseSchedule,
    prior: PriorSpec,
    inputs: DMatrix<f64>,
    state: ChainState,
}

impl Fixture {
    fn joint(&self, state: &ChainState) -> f64 {
        self.net
            .intermediate_log_density(state, &self.inputs, &self.noise, &self.prior, None)
            .unwrap()
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn mlp_fixture(activation: Activation, seed: u64) -> Fixture {
    let spec = NetworkSpec::mlp(&[3, 4, 2], activation, OutputModel::GaussianRegression, true).unwrap();
    let net = Network::new(spec).unwrap();
    let mut noise = NoiseSchedule::uniform(net.spec(), 0.3);
    noise.delta_z = vec![0.2, 0.5];
    noise.delta_x = vec![0.15];
    let prior = PriorSpec::uniform(2, 1.5, 0.7);
    let mut rng = RngStream::new(seed, 0);
    let inputs = gaussian_matrix(6, 3, &mut rng);
    let params = Params::sample_prior(net.spec(), &prior, &mut rng);
    let (state, _) = net
        .generate(&noise, &params, &inputs, NoiseMode::Enabled, &mut rng)
        .unwrap();
    Fixture {
        net,
        noise,
        prior,
        inputs,
        state,
    }
}

/// Joint density as a function of one block, with the rest of the state held.
fn block_density<'a>(fx: &'a Fixture, write: impl Fn(&mut ChainState, &[f64]) + 'a) -> impl Fn(&[f64]) -> f64 + 'a {
    move |v: &[f64]| {
        let mut s = fx.state.clone();
        write(&mut s, v);
        fx.joint(&s)
    }
}

fn collect(draws: usize, mut f: impl FnMut() -> Vec<f64>) -> Vec<Vec<f64>> {
    (0..draws).map(|_| f()).collect()
}

pub type Check = Result<(), String>;

fn labelled(label: &str, r: Check) -> Check {
    r.map_err(|e| format!("{label}: {e}"))
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn x_block_matches_joint() -> Check {
    let fx = mlp_fixture(Activation::Relu, 11);
    let mu = 2;
    let f = block_density(&fx, move |s, v| s.x[0].row_mut(mu).copy_from_slice(v));
    let center: Vec<f64> = fx.state.x[0].row(mu).iter().copied().collect();
    let (mean, cov) = gaussian_from_log_density(f, &center, 1.0);
    let sigma = fx.state.z[0].map(|v| Activation::Relu.apply(v));
    let p = &fx.state.params;
    let mut rng = RngStream::new(1, 0);
    let draws = collect(DRAWS, || {
        let x = update_x_layer(
            &sigma,
            &p.weights[1],
            &p.biases[1],
            &fx.state.z[1],
            fx.noise.delta_x[0],
            fx.noise.delta_z[1],
            &mut rng,
        )
        .unwrap();
        x.row(mu).iter().copied().collect()
    });
    labelled("x block", check_gaussian_draws(&draws, &mean, &cov, SIGMAS, ALPHA))?;
    Ok(())
}

pub fn weight_rows_match_joint() -> Check {
    let fx = mlp_fixture(Activation::Abs, 12);
    let mut rng = RngStream::new(2, 0);
    for layer in 0..2 {
        let alpha = 1;
        let f = block_density(&fx, move |s, v| {
            s.params.weights[layer].row_mut(alpha).copy_from_slice(v)
        });
        let center: Vec<f64> = fx.state.params.weights[layer].row(alpha).iter().copied().collect();
        let (mean, cov) = gaussian_from_log_density(f, &center, 1.0);
        let input = fx.net.input_of(layer, &fx.inputs, &fx.state).clone();
        let draws = collect(DRAWS, || {
            let w = update_w_layer(
                &input,
                None,
                &fx.state.z[layer],
                &fx.state.params.biases[layer],
                fx.noise.delta_z[layer],
                fx.prior.lambda_w[layer],
                &mut rng,
            )
            .unwrap();
            w.row(alpha).iter().copied().collect()
        });
        labelled(
            &format!("weights of layer {layer}"),
            check_gaussian_draws(&draws, &mean, &cov, SIGMAS, ALPHA),
        )?;
    }
    Ok(())
}

pub fn biases_match_joint() -> Check {
    let fx = mlp_fixture(Activation::Relu, 13);
    let mut rng = RngStream::new(3, 0);
    for layer in 0..2 {
        let f = block_density(&fx, move |s, v| s.params.biases[layer].copy_from_slice(v));
        let center: Vec<f64> = fx.state.params.biases[layer].iter().copied().collect();
        let (mean, cov) = gaussian_from_log_density(f, &center, 1.0);
        let input = fx.net.input_of(layer, &fx.inputs, &fx.state).clone();
        let draws = collect(DRAWS, || {
            update_bias_layer(
                &input,
                &fx.state.params.weights[layer],
                &fx.state.z[layer],
                fx.noise.delta_z[layer],
                fx.prior.lambda_b[layer],
                &mut rng,
            )
            .unwrap()
            .iter()
            .copied()
            .collect()
        });
        labelled(
            &format!("bias of layer {layer}"),
            check_gaussian_draws(&draws, &mean, &cov, SIGMAS, ALPHA),
        )?;
    }
    Ok(())
}

fn scalar_ks(log_density: impl Fn(f64) -> f64, draws: &[f64]) -> f64 {
    let lo = draws.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.5 * (hi - lo);
    let cdf = NumericCdf::new(log_density, lo - pad, hi + pad, 4000);
    ks_one_sample(draws, |x| cdf.eval(x)).1
}

pub fn pre_activation_block_matches_joint() -> Check {
    for (activation, seed) in [(Activation::Relu, 21), (Activation::Sign, 22), (Activation::Abs, 23)] {
        let fx = mlp_fixture(activation, seed);
        let (mu, j) = (4, 2);
        let f = block_density(&fx, move |s, v| s.z[0][(mu, j)] = v[0]);
        let wx = fx.net.layer_mean(0, &fx.inputs, &fx.state);
        let mut rng = RngStream::new(seed, 1);
        let draws: Vec<f64> = (0..DRAWS)
            .map(|_| {
                update_z_layer(
                    activation,
                    &wx,
                    &fx.state.x[0],
                    fx.noise.delta_z[0],
                    fx.noise.delta_x[0],
                    &mut rng,
                )
                .unwrap()[(mu, j)]
            })
            .collect();
        let p = scalar_ks(|z| f(&[z]), &draws);
        ensure!(p > ALPHA, "{}: KS p = {p}", activation.name());
    }
    Ok(())
}

pub fn scalar_pre_activation_matches_quadrature_across_regimes() -> Check {
    // (wx, x, Δ_Z, Δ_X): balanced, activation-dominated, prior-dominated,
    // far tails and tiny variances.
    let cases = [
        (0.3, -0.5, 0.1, 0.01),
        (-2.0, 1.5, 0.5, 1e-3),
        (1.0, 1.0, 1e-4, 1e-4),
        (-0.05, 0.02, 1e-3, 1e-1),
        (4.0, -3.0, 1.0, 0.2),
        (-8.0, 0.7, 1.0, 1e-2),
    ];
    let mut rng = RngStream::new(30, 0);
    for activation in [Activation::Relu, Activation::Sign, Activation::Abs] {
        for &(wx, x, dz, dx) in &cases {
            let log_density =
                |z: f64| -(z - wx) * (z - wx) / (2.0 * dz) - (activation.apply(z) - x).powi(2) / (2.0 * dx);
            let draws: Vec<f64> = (0..DRAWS)
                .map(|_| sample_z(activation, wx, x, dz, dx, &mut rng).unwrap())
                .collect();
            let p = scalar_ks(log_density, &draws);
            ensure!(p > ALPHA, "{} at {:?}: KS p = {p}", activation.name(), (wx, x, dz, dx));
        }
    }
    Ok(())
}

fn truncated_cdf(m: f64, s: f64, lower: f64, upper: f64, x: f64) -> f64 {
    let (a, b) = (phi((lower - m) / s), phi((upper - m) / s));
    ((phi((x - m) / s) - a) / (b - a)).clamp(0.0, 1.0)
}

pub fn probit_scores_are_truncated_normals() -> Check {
    // Two classes, label 0. The label score is redrawn above the competitor,
    // then the competitor below the new label score.
    let dz: f64 = 0.4;
    let s = dz.sqrt();
    let mean = DMatrix::from_row_slice(1, 2, &[-0.3, 0.6]);
    let start = DMatrix::from_row_slice(1, 2, &[1.0, 0.2]);
    let mut rng = RngStream::new(40, 0);
    let mut label_pit = Vec::with_capacity(DRAWS);
    let mut other_pit = Vec::with_capacity(DRAWS);
    for _ in 0..DRAWS {
        let mut z = start.clone();
        update_probit_output(&mean, &mut z, &[0], dz, &mut rng).unwrap();
        ensure!(z[(0, 0)] > z[(0, 1)], "label score fell below its competitor");
        label_pit.push(truncated_cdf(mean[(0, 0)], s, start[(0, 1)], f64::INFINITY, z[(0, 0)]));
        other_pit.push(truncated_cdf(mean[(0, 1)], s, f64::NEG_INFINITY, z[(0, 0)], z[(0, 1)]));
    }
    let uniform = |u: f64| u.clamp(0.0, 1.0);
    let (_, p_label) = ks_one_sample(&label_pit, uniform);
    let (_, p_other) = ks_one_sample(&other_pit, uniform);
    ensure!(p_label > ALPHA, "label score KS p = {p_label}");
    ensure!(p_other > ALPHA, "competitor score KS p = {p_other}");
    Ok(())
}

pub fn probit_chain_targets_constrained_gaussian() -> Check {
    // Repeated updates form a Gibbs chain whose stationary law is N(mean, Δ I)
    // restricted to {argmax = label}; compare with rejection sampling.
    let dz: f64 = 0.5;
    let mean = DMatrix::from_row_slice(1, 3, &[0.2, 0.9, -0.4]);
    let label = 0;
    let mut rng = RngStream::new(41, 0);
    let mut z = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
    for _ in 0..1000 {
        update_probit_output(&mean, &mut z, &[label], dz, &mut rng).unwrap();
    }
    let thin = 5;
    let mut chain = (0..3).map(|_| Vec::with_capacity(DRAWS)).collect::<Vec<_>>();
    for _ in 0..DRAWS {
        for _ in 0..thin {
            update_probit_output(&mean, &mut z, &[label], dz, &mut rng).unwrap();
        }
        for c in 0..3 {
            chain[c].push(z[(0, c)]);
        }
    }
    let mut reference = (0..3).map(|_| Vec::with_capacity(DRAWS)).collect::<Vec<_>>();
    let sd = dz.sqrt();
    while reference[0].len() < DRAWS {
        let v: Vec<f64> = (0..3)
            .map(|c| mean[(0, c)] + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if v[label] > v[1] && v[label] > v[2] {
            for c in 0..3 {
                reference[c].push(v[c]);
            }
        }
    }
    for c in 0..3 {
        let (d, p) = ks_two_sample(&chain[c], &reference[c]);
        ensure!(p > ALPHA, "class {c}: two-sample KS D = {d}, p = {p}");
    }
    Ok(())
}

fn cnn_fixture(seed: u64) -> (Fixture, ConvIndexMap, PoolMap) {
    // 6×6 input, 2×2 filter, stride 1: a 5×5 map per channel, so 2×2 pooling
    // leaves the last row and column out of every window.
    let conv = ConvSpec {
        channels_in: 1,
        channels_out: 2,
        in_height: 6,
        in_width: 6,
        filter_height: 2,
        filter_width: 2,
        stride_y: 1,
        stride_x: 1,
        bias: true,
    };
    let spec =
        NetworkSpec::conv_pool_dense(conv, 2, 2, Activation::Relu, OutputModel::GaussianRegression, true).unwrap();
    let net = Network::new(spec).unwrap();
    let noise = NoiseSchedule {
        delta_z: vec![0.05, 0.1, 0.3],
        delta_x: vec![0.2],
    };
    let prior = PriorSpec {
        lambda_w: vec![1.0, 1.0, 2.0],
        lambda_b: vec![0.5, 1.0, 1.0],
    };
    let mut rng = RngStream::new(seed, 0);
    let inputs = gaussian_matrix(4, 36, &mut rng);
    let params = Params::sample_prior(net.spec(), &prior, &mut rng);
    let (state, _) = net
        .generate(&noise, &params, &inputs, NoiseMode::Enabled, &mut rng)
        .unwrap();
    let conv_map = ConvIndexMap::new(&conv);
    let pool_map = match net.spec().layers[1] {
        LayerSpec::Pool(p) => PoolMap::new(&p),
        _ => unreachable!(),
    };
    (
        Fixture {
            net,
            noise,
            prior,
            inputs,
            state,
        },
        conv_map,
        pool_map,
    )
}

fn close(label: &str, got: &DMatrix<f64>, want: &DMatrix<f64>, rel: f64) -> Check {
    let scale = want.amax().max(1e-12);
    let err = (got - want).amax();
    ensure!(err <= rel * scale, "{label}: max error {err} against scale {scale}");
    Ok(())
}

pub fn filter_conditional_matches_joint() -> Check {
    let (fx, map, _) = cnn_fixture(50);
    let p = &fx.state.params;
    let form = conv_w_conditional(
        &map,
        &fx.inputs,
        None,
        &fx.state.z[0],
        &p.biases[0],
        fx.noise.delta_z[0],
        fx.prior.lambda_w[0],
    )
    .unwrap();
    let means = form.mean().unwrap();
    let cov = form.covariance().unwrap();
    let mut rng = RngStream::new(5, 0);
    let mut all_draws = Vec::new();
    for _ in 0..DRAWS {
        all_draws.push(
            update_conv_w(
                &map,
                &fx.inputs,
                None,
                &fx.state.z[0],
                &p.biases[0],
                fx.noise.delta_z[0],
                fx.prior.lambda_w[0],
                &mut rng,
            )
            .unwrap(),
        );
    }
    for alpha in 0..2 {
        let f = block_density(&fx, move |s, v| s.params.weights[0].row_mut(alpha).copy_from_slice(v));
        let center: Vec<f64> = p.weights[0].row(alpha).iter().copied().collect();
        let (mean, oracle_cov) = gaussian_from_log_density(f, &center, 1.0);
        close(
            "filter mean",
            &DMatrix::from_column_slice(4, 1, means.column(alpha).as_slice()),
            &DMatrix::from_column_slice(4, 1, mean.as_slice()),
            1e-6,
        )?;
        close("filter covariance", &cov, &oracle_cov, 1e-6)?;
        let draws: Vec<Vec<f64>> = all_draws
            .iter()
            .map(|w| w.row(alpha).iter().copied().collect())
            .collect();
        labelled(
            &format!("filter {alpha}"),
            check_gaussian_draws(&draws, &mean, &oracle_cov, SIGMAS, ALPHA),
        )?;
    }
    Ok(())
}

pub fn filter_bias_matches_joint() -> Check {
    let (fx, map, _) = cnn_fixture(51);
    let f = block_density(&fx, |s, v| s.params.biases[0].copy_from_slice(v));
    let center: Vec<f64> = fx.state.params.biases[0].iter().copied().collect();
    let (mean, cov) = gaussian_from_log_density(f, &center, 1.0);
    let mut rng = RngStream::new(6, 0);
    let draws = collect(DRAWS, || {
        update_conv_bias(
            &map,
            &fx.inputs,
            &fx.state.params.weights[0],
            &fx.state.z[0],
            fx.noise.delta_z[0],
            fx.prior.lambda_b[0],
            &mut rng,
        )
        .unwrap()
        .iter()
        .copied()
        .collect()
    });
    labelled("filter bias", check_gaussian_draws(&draws, &mean, &cov, SIGMAS, ALPHA))?;
    Ok(())
}

pub fn conv_output_under_pooling_matches_joint() -> Check {
    // z[0] feeds the pooled pre-activation z[1]; its conditional couples each
    // pooling window and leaves discarded pixels at their prior.
    let (fx, _, pool) = cnn_fixture(52);
    let mu = 1;
    let f = block_density(&fx, move |s, v| s.z[0].row_mut(mu).copy_from_slice(v));
    let center: Vec<f64> = fx.state.z[0].row(mu).iter().copied().collect();
    let (mean, cov) = gaussian_from_log_density(f, &center, 1.0);
    let conv_mean = fx.net.layer_mean(0, &fx.inputs, &fx.state);
    let mut rng = RngStream::new(7, 0);
    let draws = collect(DRAWS, || {
        update_pool_x(
            &pool,
            &conv_mean,
            &fx.state.z[1],
            fx.noise.delta_z[0],
            fx.noise.delta_z[1],
            &mut rng,
        )
        .unwrap()
        .row(mu)
        .iter()
        .copied()
        .collect()
    });
    ensure!(!pool.discarded().is_empty(), "no discarded pixels");
    labelled(
        "pooled conv output",
        check_gaussian_draws(&draws, &mean, &cov, SIGMAS, ALPHA),
    )?;
    Ok(())
}

pub fn conv_input_conditional_matches_model_density() -> Check {
    // A post-activation feeding a convolution: p(x) ∝ N(x; σ, Δ_X) · N(z; conv(x) + b, Δ_Z).
    let spec = ConvSpec {
        channels_in: 2,
        channels_out: 2,
        in_height: 4,
        in_width: 4,
        filter_height: 2,
        filter_width: 2,
        stride_y: 1,
        stride_x: 1,
        bias: true,
    };
    let map = ConvIndexMap::new(&spec);
    let op = LayerOp::new(&LayerSpec::Conv(spec));
    let mut rng = RngStream::new(60, 0);
    let n = 3;
    let w = gaussian_matrix(2, spec.packed_len(), &mut rng);
    let b = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sigma = gaussian_matrix(n, spec.in_len(), &mut rng);
    let z = gaussian_matrix(n, spec.out_len(), &mut rng);
    let (dx, dz) = (0.3, 0.1);
    let mu = 2;
    let density = |v: &[f64]| {
        let x = DMatrix::from_row_slice(1, v.len(), v);
        let pred = op.forward(&w, &b, &x);
        let prior: f64 = v.iter().zip(sigma.row(mu).iter()).map(|(a, s)| (a - s).powi(2)).sum();
        let lik: f64 = pred.iter().zip(z.row(mu).iter()).map(|(p, t)| (p - t).powi(2)).sum();
        -prior / (2.0 * dx) - lik / (2.0 * dz)
    };
    let center: Vec<f64> = sigma.row(mu).iter().copied().collect();
    let (mean, cov) = gaussian_from_log_density(density, &center, 1.0);
    let form = conv_x_conditional(&map, &w, &b, &sigma, &z, dx, dz).unwrap();
    close("conv input covariance", &form.covariance().unwrap(), &cov, 1e-6)?;
    let fm = form.mean().unwrap();
    close(
        "conv input mean",
        &DMatrix::from_column_slice(mean.len(), 1, fm.column(mu).as_slice()),
        &DMatrix::from_column_slice(mean.len(), 1, mean.as_slice()),
        1e-6,
    )?;
    let draws = collect(DRAWS, || {
        update_conv_x(&map, &w, &b, &sigma, &z, dx, dz, &mut rng)
            .unwrap()
            .row(mu)
            .iter()
            .copied()
            .collect()
    });
    labelled("conv input", check_gaussian_draws(&draws, &mean, &cov, SIGMAS, ALPHA))?;
    Ok(())
}

/// Every check, named by the conditional it covers.
pub type Registry = Vec<(&'static str, fn() -> Check)>;

pub fn all() -> Registry {
    vec![
        ("X", x_block_matches_joint),
        ("W", weight_rows_match_joint),
        ("bias", biases_match_joint),
        ("Z (relu, sign, abs) in a network", pre_activation_block_matches_joint),
        (
            "Z (relu, sign, abs) across regimes",
            scalar_pre_activation_matches_quadrature_across_regimes,
        ),
        ("probit-Z single update", probit_scores_are_truncated_normals),
        ("probit-Z stationary law", probit_chain_targets_constrained_gaussian),
        ("conv-W", filter_conditional_matches_joint),
        ("conv-bias", filter_bias_matches_joint),
        ("pool-X", conv_output_under_pooling_matches_joint),
        ("conv-X", conv_input_conditional_matches_model_density),
    ]
}
