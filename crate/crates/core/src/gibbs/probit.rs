use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{sample_truncated_normal, TruncationSide};

/// Redraw the latent class scores of every sample, one class at a time in
/// index order. The label score is drawn above the largest competing score
/// and every other score below the label score, so the argmax always equals
/// the label.
pub fn update_probit_output<R: Rng + ?Sized>(
    mean: &DMatrix<f64>,
    z: &mut DMatrix<f64>,
    labels: &[usize],
    dz: f64,
    rng: &mut R,
) -> Result<()> {
    if mean.shape() != z.shape() || labels.len() != z.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "probit means {:?}, scores {:?}, {} labels",
            mean.shape(),
            z.shape(),
            labels.len()
        )));
    }
    let classes = z.ncols();
    for (mu, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::ShapeMismatch(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
        for alpha in 0..classes {
            let m = mean[(mu, alpha)];
            if alpha == y {
                let c = (0..classes)
                    .filter(|&b| b != y)
                    .map(|b| z[(mu, b)])
                    .fold(f64::NEG_INFINITY, f64::max);
                z[(mu, y)] = c + sample_truncated_normal(m - c, dz, TruncationSide::Positive, rng);
            } else {
                let top = z[(mu, y)];
                z[(mu, alpha)] = top + sample_truncated_normal(m - top, dz, TruncationSide::Negative, rng);
            }
        }
    }
    Ok(())
}
