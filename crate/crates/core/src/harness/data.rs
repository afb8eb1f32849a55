use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::harness::config::{DataConfig, ExperimentConfig};
use crate::kernels::sample_standard_normal_matrix;
use crate::model::{
    argmax_row, Dataset, Network, NoiseMode, NoiseSchedule, OutputModel, Params, PriorSpec, Split, Targets,
};

/// Teacher–student data: Gaussian inputs, a teacher drawn from the prior and
/// labels from the generative process (or the noiseless forward pass).
///
/// Test targets are always noiseless outputs, or argmax labels for probit
/// networks. The teacher's full state is kept for informed starts.
pub fn generate_teacher_student<R: Rng + ?Sized>(
    net: &Network,
    prior: &PriorSpec,
    noise: &NoiseSchedule,
    n: usize,
    n_test: usize,
    noiseless: bool,
    rng: &mut R,
) -> Result<Dataset> {
    let spec = net.spec();
    let d = spec.input_width();
    let inputs = sample_standard_normal_matrix(n, d, rng);
    let test_inputs = sample_standard_normal_matrix(n_test, d, rng);
    let params = Params::sample_prior(spec, prior, rng);
    let mode = if noiseless {
        NoiseMode::Disabled
    } else {
        NoiseMode::Enabled
    };
    let (teacher, targets) = net.generate(noise, &params, &inputs, mode, rng)?;
    let test_out = net.predict(&params, &test_inputs)?;
    let test_targets = match spec.output {
        OutputModel::GaussianRegression => Targets::Regression(test_out),
        OutputModel::MultinomialProbit { .. } => {
            Targets::Classes((0..test_out.nrows()).map(|mu| argmax_row(&test_out, mu)).collect())
        }
    };
    Ok(Dataset {
        train: Split { inputs, targets },
        test: Some(Split {
            inputs: test_inputs,
            targets: test_targets,
        }),
        teacher: Some(teacher),
    })
}

/// Training size for a synthetic config: explicit `n`, or the parameter
/// count times `params_multiple`, rounded.
pub fn synthetic_n(net: &Network, n: Option<usize>, params_multiple: f64) -> usize {
    n.unwrap_or_else(|| (params_multiple * net.spec().parameter_count() as f64).round() as usize)
}

/// Build the dataset an experiment describes.
pub fn build_dataset<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    net: &Network,
    noise: &NoiseSchedule,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<Dataset> {
    let ds = match &cfg.data {
        DataConfig::Synthetic {
            n,
            params_multiple,
            n_test,
            delta_gen,
            noiseless,
        } => {
            let gen = match delta_gen {
                Some(d) => NoiseSchedule::uniform(net.spec(), *d),
                None => noise.clone(),
            };
            let n = synthetic_n(net, *n, *params_multiple);
            generate_teacher_student(net, prior, &gen, n, *n_test, *noiseless, rng)?
        }
        DataConfig::Idx {
            images,
            labels,
            test_images,
            test_labels,
            subset,
            test_subset,
        } => {
            let train = load_idx(images, labels, *subset)?;
            let test = match (test_images, test_labels) {
                (Some(i), Some(l)) => Some(load_idx(i, l, *test_subset)?),
                (None, None) => None,
                _ => {
                    return Err(Error::InvalidConfig(
                        "data: give both test_images and test_labels".into(),
                    ))
                }
            };
            Dataset {
                train,
                test,
                teacher: None,
            }
        }
        DataConfig::Inline {
            inputs,
            targets,
            labels,
        } => {
            let n = inputs.len();
            let d = inputs.first().map_or(0, Vec::len);
            if inputs.iter().any(|r| r.len() != d) {
                return Err(Error::InvalidConfig("data: inline input rows differ in length".into()));
            }
            let x = DMatrix::from_fn(n, d, |i, j| inputs[i][j]);
            let t = match (targets, labels) {
                (Some(t), None) => {
                    let w = t.first().map_or(0, Vec::len);
                    if t.len() != n || t.iter().any(|r| r.len() != w) {
                        return Err(Error::InvalidConfig(
                            "data: inline targets do not match the inputs".into(),
                        ));
                    }
                    Targets::Regression(DMatrix::from_fn(n, w, |i, j| t[i][j]))
                }
                (None, Some(l)) => Targets::Classes(l.clone()),
                _ => {
                    return Err(Error::InvalidConfig(
                        "data: give exactly one of targets and labels".into(),
                    ))
                }
            };
            Dataset {
                train: Split { inputs: x, targets: t },
                test: None,
                teacher: None,
            }
        }
    };
    ds.validate(net.spec())?;
    Ok(ds)
}

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(format!("{what}: header ends early")))
}

/// Parse IDX image and label buffers; see [`load_idx`].
pub fn parse_idx(images: &[u8], labels: &[u8], subset: Option<usize>) -> Result<Split> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let magic = be_u32(labels, 0, "labels")?;
    if magic != LABEL_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: LABEL_MAGIC,
        });
    }
    let n_img = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let n_lab = be_u32(labels, 4, "labels")? as usize;
    if n_img != n_lab {
        return Err(Error::CountMismatch {
            images: n_img,
            labels: n_lab,
        });
    }
    let pixels = rows * cols;
    let img_body = &images[16..];
    let lab_body = &labels[8..];
    if img_body.len() < n_img * pixels {
        return Err(Error::TruncatedFile(format!(
            "images: {} of {} pixel bytes present",
            img_body.len(),
            n_img * pixels
        )));
    }
    if lab_body.len() < n_lab {
        return Err(Error::TruncatedFile(format!(
            "labels: {} of {n_lab} bytes present",
            lab_body.len()
        )));
    }
    let n = subset.map_or(n_img, |s| s.min(n_img));
    let inputs = DMatrix::from_fn(n, pixels, |i, j| img_body[i * pixels + j] as f64 / 255.0);
    let labels = lab_body[..n].iter().map(|&b| b as usize).collect();
    Ok(Split {
        inputs,
        targets: Targets::Classes(labels),
    })
}

/// Load IDX files (magic `0x00000803` images, `0x00000801` labels, big-endian
/// dimensions), flattening images row-major and keeping the first `subset`
/// samples when given.
pub fn load_idx(images: &Path, labels: &Path, subset: Option<usize>) -> Result<Split> {
    parse_idx(&std::fs::read(images)?, &std::fs::read(labels)?, subset)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn idx_images(n: u32, rows: u32, cols: u32, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IMAGE_MAGIC, n, rows, cols] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend((0..(n * rows * cols) as usize).map(fill));
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [LABEL_MAGIC, labels.len() as u32] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn parses_images_and_scales_pixels() {
        let img = idx_images(10, 28, 28, |i| if i == 0 { 255 } else { (i % 7) as u8 });
        let lab = idx_labels(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        let split = parse_idx(&img, &lab, None).unwrap();
        assert_eq!(split.inputs.shape(), (10, 784));
        assert_eq!(split.inputs[(0, 0)], 1.0);
        assert_eq!(split.targets.classes().unwrap()[9], 9);
        let sub = parse_idx(&img, &lab, Some(3)).unwrap();
        assert_eq!(sub.inputs.nrows(), 3);
    }

    #[test]
    fn format_errors() {
        let img = idx_images(10, 2, 2, |_| 0);
        assert!(matches!(
            parse_idx(&img, &idx_labels(&[0; 9]), None),
            Err(Error::CountMismatch { images: 10, labels: 9 })
        ));
        assert!(matches!(
            parse_idx(&idx_labels(&[0; 10]), &idx_labels(&[0; 10]), None),
            Err(Error::BadMagic { .. })
        ));
        assert!(matches!(
            parse_idx(&img[..30], &idx_labels(&[0; 10]), None),
            Err(Error::TruncatedFile(_))
        ));
    }
}
