use nalgebra::{DMatrix, DVector};

use crate::cnn::{ConvIndexMap, PoolMap};
use crate::model::LayerSpec;

/// The affine map of one layer, applied to a sample-major batch.
#[derive(Clone, Debug)]
pub enum LayerOp {
    Dense,
    Conv(ConvIndexMap),
    Pool(PoolMap),
}

/// Gradients of a scalar with respect to a layer's weights, bias and input.
#[derive(Clone, Debug)]
pub struct LayerGrad {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub input: DMatrix<f64>,
}

impl LayerOp {
    pub fn new(spec: &LayerSpec) -> Self {
        match spec {
            LayerSpec::Dense { .. } => LayerOp::Dense,
            LayerSpec::Conv(c) => LayerOp::Conv(ConvIndexMap::new(c)),
            LayerSpec::Pool(p) => LayerOp::Pool(PoolMap::new(p)),
        }
    }

    /// `input ↦ layer(input) + bias`, one row per sample.
    pub fn forward(&self, weight: &DMatrix<f64>, bias: &DVector<f64>, input: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            LayerOp::Dense => {
                let mut out = input * weight.transpose();
                for mut row in out.row_iter_mut() {
                    row += bias.transpose();
                }
                out
            }
            LayerOp::Conv(map) => {
                let n = input.nrows();
                let pos = map.positions();
                let c_out = map.spec().channels_out;
                let mut out = DMatrix::zeros(n, c_out * pos);
                for mu in 0..n {
                    for a in 0..pos {
                        let patch = map.patch(a);
                        for alpha in 0..c_out {
                            let mut acc = bias[alpha];
                            for (i, &src) in patch.iter().enumerate() {
                                acc += weight[(alpha, i)] * input[(mu, src)];
                            }
                            out[(mu, map.out_index(alpha, a))] = acc;
                        }
                    }
                }
                out
            }
            LayerOp::Pool(map) => {
                let n = input.nrows();
                let out_len = map.spec().out_len();
                let k = map.window() as f64;
                DMatrix::from_fn(n, out_len, |mu, a| {
                    map.preimage(a).iter().map(|&b| input[(mu, b)]).sum::<f64>() / k
                })
            }
        }
    }

    /// Pulls `grad_out = ∂f/∂output` back through the layer.
    pub fn backward(&self, weight: &DMatrix<f64>, input: &DMatrix<f64>, grad_out: &DMatrix<f64>) -> LayerGrad {
        match self {
            LayerOp::Dense => LayerGrad {
                weight: grad_out.transpose() * input,
                bias: column_sums(grad_out),
                input: grad_out * weight,
            },
            LayerOp::Conv(map) => {
                let n = input.nrows();
                let pos = map.positions();
                let c_out = map.spec().channels_out;
                let mut gw = DMatrix::zeros(weight.nrows(), weight.ncols());
                let mut gb = DVector::zeros(c_out);
                let mut gi = DMatrix::zeros(n, input.ncols());
                for mu in 0..n {
                    for a in 0..pos {
                        let patch = map.patch(a);
                        for alpha in 0..c_out {
                            let g = grad_out[(mu, map.out_index(alpha, a))];
                            if g == 0.0 {
                                continue;
                            }
                            gb[alpha] += g;
                            for (i, &src) in patch.iter().enumerate() {
                                gw[(alpha, i)] += g * input[(mu, src)];
                                gi[(mu, src)] += g * weight[(alpha, i)];
                            }
                        }
                    }
                }
                LayerGrad {
                    weight: gw,
                    bias: gb,
                    input: gi,
                }
            }
            LayerOp::Pool(map) => {
                let k = map.window() as f64;
                let gi = DMatrix::from_fn(input.nrows(), input.ncols(), |mu, b| match map.owner(b) {
                    Some(a) => grad_out[(mu, a)] / k,
                    None => 0.0,
                });
                LayerGrad {
                    weight: DMatrix::zeros(0, 0),
                    bias: DVector::zeros(0),
                    input: gi,
                }
            }
        }
    }
}

pub(crate) fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConvSpec, PoolSpec};

    fn finite_difference_check(op: &LayerOp, w: &DMatrix<f64>, b: &DVector<f64>, x: &DMatrix<f64>) {
        // f = Σ c ⊙ forward, with fixed random-looking weights c.
        let out = op.forward(w, b, x);
        let c = DMatrix::from_fn(out.nrows(), out.ncols(), |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let f = |w: &DMatrix<f64>, b: &DVector<f64>, x: &DMatrix<f64>| op.forward(w, b, x).component_mul(&c).sum();
        let g = op.backward(w, x, &c);
        let h = 1e-6;
        for idx in 0..w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[idx] += h;
            wm[idx] -= h;
            let fd = (f(&wp, b, x) - f(&wm, b, x)) / (2.0 * h);
            assert!((fd - g.weight[idx]).abs() < 1e-6, "weight {idx}");
        }
        for idx in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[idx] += h;
            xm[idx] -= h;
            let fd = (f(w, b, &xp) - f(w, b, &xm)) / (2.0 * h);
            assert!((fd - g.input[idx]).abs() < 1e-6, "input {idx}");
        }
        for idx in 0..b.len() {
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[idx] += h;
            bm[idx] -= h;
            let fd = (f(w, &bp, x) - f(w, &bm, x)) / (2.0 * h);
            assert!((fd - g.bias[idx]).abs() < 1e-6, "bias {idx}");
        }
    }

    fn filled(r: usize, c: usize, seed: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |i, j| (((i * 31 + j * 17 + seed) % 23) as f64 - 11.0) / 7.0)
    }

    #[test]
    fn dense_gradients() {
        let op = LayerOp::Dense;
        finite_difference_check(
            &op,
            &filled(3, 4, 1),
            &DVector::from_vec(vec![0.1, -0.2, 0.3]),
            &filled(5, 4, 2),
        );
    }

    #[test]
    fn conv_gradients() {
        let spec = ConvSpec {
            channels_in: 2,
            channels_out: 2,
            in_height: 5,
            in_width: 4,
            filter_height: 2,
            filter_width: 3,
            stride_y: 2,
            stride_x: 1,
            bias: true,
        };
        let op = LayerOp::new(&LayerSpec::Conv(spec));
        finite_difference_check(
            &op,
            &filled(2, spec.packed_len(), 3),
            &DVector::from_vec(vec![0.5, -1.0]),
            &filled(3, spec.in_len(), 4),
        );
    }

    #[test]
    fn pool_gradients_and_average() {
        let spec = PoolSpec {
            channels: 1,
            in_height: 3,
            in_width: 4,
            window_height: 2,
            window_width: 2,
        };
        let op = LayerOp::new(&LayerSpec::Pool(spec));
        let x = filled(2, 12, 5);
        let out = op.forward(&DMatrix::zeros(0, 0), &DVector::zeros(0), &x);
        assert_eq!(out.ncols(), 2);
        let expect = (x[(0, 0)] + x[(0, 1)] + x[(0, 4)] + x[(0, 5)]) / 4.0;
        assert!((out[(0, 0)] - expect).abs() < 1e-15);
        finite_difference_check(&op, &DMatrix::zeros(0, 0), &DVector::zeros(0), &x);
    }
}
