use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{format_csv_grid, read_csv_grid, write_pgm, Boundary, ImageGrid, LinearMap, LinearOperator, OperatorSpec, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Left half 0, right half 1, observed directly.
    StepImage,
    /// Horizontal ramp from 0 to 1, observed directly.
    Ramp,
    /// Sparse signal observed through a Gaussian matrix (`dims = [m, n]`)
    /// or directly (`dims = [n]`).
    SparseVector,
    /// Step image blurred by a periodic 3×3 box kernel.
    BlurKernel,
    /// Step image with a random half of the pixels dropped.
    MaskPattern,
}

impl SyntheticKind {
    pub fn is_image(self) -> bool {
        !matches!(self, SyntheticKind::SparseVector)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub dims: Vec<usize>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of nonzeros for `sparse_vector` (default 0.1).
    #[serde(default)]
    pub density: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub truth: Vector,
    pub operator: OperatorSpec,
    pub observation: Vector,
    /// `(rows, cols)` for image kinds.
    pub shape: Option<(usize, usize)>,
}

impl SyntheticData {
    pub fn observation_image(&self) -> Option<ImageGrid> {
        let (r, c) = self.shape?;
        ImageGrid::from_vector(r, c, &self.observation, Boundary::Neumann).ok()
    }
}

const OPERATOR_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

fn image_shape(dims: &[usize]) -> Result<(usize, usize)> {
    match dims {
        [n] => Ok((*n, *n)),
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::InvalidValue(format!("image kinds take one or two dims, got {dims:?}"))),
    }
}

fn step_image(rows: usize, cols: usize) -> Vector {
    Vector::from_vec((0..rows * cols).map(|i| if i % cols < cols / 2 { 0.0 } else { 1.0 }).collect())
}

/// Deterministic synthetic data `y = A x* + σε` with `ε` drawn by
/// Box-Muller from a ChaCha8 stream seeded by `spec.seed`. The operator
/// and the ground truth use a separate stream from the noise, so changing
/// `σ` leaves them unchanged.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.dims.is_empty() || spec.dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidValue(format!("dims must be positive, got {:?}", spec.dims)));
    }
    if !(spec.noise >= 0.0) || !spec.noise.is_finite() {
        return Err(Error::InvalidValue(format!("noise level must be non-negative, got {}", spec.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(OPERATOR_STREAM);
    let (truth, operator, shape) = match spec.kind {
        SyntheticKind::StepImage | SyntheticKind::Ramp => {
            let (r, c) = image_shape(&spec.dims)?;
            let truth = if spec.kind == SyntheticKind::StepImage {
                step_image(r, c)
            } else {
                let denom = (c.max(2) - 1) as f64;
                Vector::from_vec((0..r * c).map(|i| (i % c) as f64 / denom).collect())
            };
            (truth, OperatorSpec::Identity { dim: r * c }, Some((r, c)))
        }
        SyntheticKind::SparseVector => {
            let (m, n) = match spec.dims.as_slice() {
                [n] => (None, *n),
                [m, n] => (Some(*m), *n),
                d => return Err(Error::InvalidValue(format!("sparse_vector takes one or two dims, got {d:?}"))),
            };
            let density = spec.density.unwrap_or(0.1);
            if !(0.0..=1.0).contains(&density) {
                return Err(Error::InvalidValue(format!("density must lie in [0, 1], got {density}")));
            }
            let k = (density * n as f64).round() as usize;
            let mut truth = Vector::zeros(n);
            for i in sample(&mut rng, n, k).into_iter() {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                truth[i] = sign * rng.gen_range(0.5..1.5);
            }
            let operator = match m {
                None => OperatorSpec::Identity { dim: n },
                Some(m) => {
                    let s = 1.0 / (m as f64).sqrt();
                    OperatorSpec::DenseMatrix {
                        rows: (0..m)
                            .map(|_| Vector::random_normal(n, s, &mut rng).into_vec())
                            .collect(),
                    }
                }
            };
            (truth, operator, None)
        }
        SyntheticKind::BlurKernel => {
            let (r, c) = image_shape(&spec.dims)?;
            let w = 1.0 / 9.0;
            let operator = OperatorSpec::CircularConv {
                rows: r,
                cols: c,
                kernel: vec![vec![w; 3]; 3],
                center: Some([1, 1]),
            };
            (step_image(r, c), operator, Some((r, c)))
        }
        SyntheticKind::MaskPattern => {
            let (r, c) = image_shape(&spec.dims)?;
            let n = r * c;
            let mut pattern = vec![false; n];
            for i in sample(&mut rng, n, n.div_ceil(2)).into_iter() {
                pattern[i] = true;
            }
            (step_image(r, c), OperatorSpec::Mask { pattern }, Some((r, c)))
        }
    };
    let op = LinearOperator::from_spec(&operator)?;
    rng.set_stream(NOISE_STREAM);
    let noise = Vector::random_normal(op.out_dim(), 1.0, &mut rng);
    let mut observation = op.apply_raw(&truth).add_scaled(spec.noise, &noise);
    if let OperatorSpec::Mask { pattern } = &operator {
        observation = Vector::from_vec(observation.iter().zip(pattern).map(|(v, &k)| if k { *v } else { 0.0 }).collect());
    }
    Ok(SyntheticData {
        spec: spec.clone(),
        truth,
        operator,
        observation,
        shape,
    })
}

/// Contents of `manifest.json` in a fixture bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub kind: SyntheticKind,
    pub dims: Vec<usize>,
    pub noise: f64,
    pub seed: u64,
    #[serde(default)]
    pub density: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub shape: Option<[usize; 2]>,
    pub operator: OperatorSpec,
    /// Payload files relative to the bundle directory.
    pub files: BTreeMap<String, String>,
    /// Reference objective values keyed by problem kind.
    #[serde(default)]
    pub expected_objectives: BTreeMap<String, f64>,
}

/// A loaded fixture bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub truth: Vector,
    pub observation: Vector,
}

impl Bundle {
    pub fn operator(&self) -> Result<LinearOperator> {
        LinearOperator::from_spec(&self.manifest.operator)
    }

    pub fn observation_image(&self) -> Result<ImageGrid> {
        let [r, c] = self
            .manifest
            .shape
            .ok_or_else(|| Error::Config(format!("fixture of kind {:?} is not an image", self.manifest.kind)))?;
        ImageGrid::from_vector(r, c, &self.observation, Boundary::Neumann)
    }

    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            kind: self.manifest.kind,
            dims: self.manifest.dims.clone(),
            noise: self.manifest.noise,
            seed: self.manifest.seed,
            density: self.manifest.density,
        }
    }
}

fn as_grid(v: &Vector, shape: Option<(usize, usize)>) -> Result<ImageGrid> {
    let (r, c) = shape.unwrap_or((v.len(), 1));
    ImageGrid::from_vector(r, c, v, Boundary::Neumann)
}

/// Writes `manifest.json`, `truth.csv`, `observation.csv` and, for images,
/// 8-bit previews `truth.pgm` and `observation.pgm`.
pub fn write_bundle(
    dir: impl AsRef<Path>,
    data: &SyntheticData,
    lambda: Option<f64>,
    expected_objectives: BTreeMap<String, f64>,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    for (key, v) in [("truth", &data.truth), ("observation", &data.observation)] {
        let grid = as_grid(v, data.shape)?;
        let name = format!("{key}.csv");
        fs::write(dir.join(&name), format_csv_grid(&grid))?;
        files.insert(key.to_string(), name);
        if data.shape.is_some() {
            let preview = format!("{key}.pgm");
            write_pgm(dir.join(&preview), &grid)?;
            files.insert(format!("{key}_preview"), preview);
        }
    }
    let manifest = Manifest {
        kind: data.spec.kind,
        dims: data.spec.dims.clone(),
        noise: data.spec.noise,
        seed: data.spec.seed,
        density: data.spec.density,
        lambda,
        shape: data.shape.map(|(r, c)| [r, c]),
        operator: data.operator.clone(),
        files,
        expected_objectives,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let read = |key: &str| -> Result<Vector> {
        let name = manifest
            .files
            .get(key)
            .ok_or_else(|| Error::Parse(format!("manifest lists no '{key}' file")))?;
        Ok(read_csv_grid(dir.join(name))?.to_vector())
    };
    let (truth, observation) = (read("truth")?, read("observation")?);
    let op = LinearOperator::from_spec(&manifest.operator)?;
    truth.check_len(op.in_dim(), "fixture truth")?;
    observation.check_len(op.out_dim(), "fixture observation")?;
    Ok(Bundle {
        manifest,
        truth,
        observation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: SyntheticKind, dims: &[usize], noise: f64) -> SyntheticSpec {
        SyntheticSpec {
            kind,
            dims: dims.to_vec(),
            noise,
            seed: 11,
            density: None,
        }
    }

    #[test]
    fn noiseless_observation_is_exact() {
        for kind in [
            SyntheticKind::StepImage,
            SyntheticKind::Ramp,
            SyntheticKind::SparseVector,
            SyntheticKind::BlurKernel,
            SyntheticKind::MaskPattern,
        ] {
            let d = generate_synthetic(&spec(kind, &[6, 8], 0.0)).unwrap();
            let op = LinearOperator::from_spec(&d.operator).unwrap();
            assert_eq!(d.observation, op.apply_raw(&d.truth), "{kind:?}");
        }
    }

    #[test]
    fn sparse_vector_count_and_determinism() {
        let s = SyntheticSpec {
            density: Some(0.1),
            ..spec(SyntheticKind::SparseVector, &[100], 0.05)
        };
        let a = generate_synthetic(&s).unwrap();
        assert_eq!(a.truth.iter().filter(|v| **v != 0.0).count(), 10);
        assert_eq!(a, generate_synthetic(&s).unwrap());
        let quiet = generate_synthetic(&SyntheticSpec { noise: 0.0, ..s }).unwrap();
        assert_eq!(quiet.truth, a.truth);
    }

    #[test]
    fn bundle_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_synthetic(&spec(SyntheticKind::StepImage, &[8], 0.1)).unwrap();
        let m = write_bundle(dir.path(), &d, Some(0.1), BTreeMap::from([("tv_denoise".to_string(), 1.5)])).unwrap();
        let b = load_bundle(dir.path()).unwrap();
        assert_eq!(b.manifest, m);
        assert_eq!(b.truth, d.truth);
        assert_eq!(b.observation, d.observation);
        assert_eq!(b.spec(), d.spec);
        assert!(dir.path().join("observation.pgm").exists());
    }

    #[test]
    fn bad_dims_rejected() {
        assert!(generate_synthetic(&spec(SyntheticKind::Ramp, &[0, 3], 0.0)).is_err());
        assert!(generate_synthetic(&spec(SyntheticKind::Ramp, &[], 0.0)).is_err());
        assert!(generate_synthetic(&spec(SyntheticKind::StepImage, &[2, 2, 2], 0.0)).is_err());
    }
}
