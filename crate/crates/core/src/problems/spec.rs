use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fixtures::builtin;
use super::synthetic::{generate_synthetic, load_bundle, SyntheticSpec};
use super::{
    build_lasso, build_poisson_editing, build_tv_denoise, build_tv_inverse, build_tvl1, build_wavelet_reg, haar_matrix,
    Metadata, ProblemInstance,
};
use crate::error::{Error, Result};
use crate::linops::{Boundary, ImageGrid, LinearMap, LinearOperator, OperatorSpec, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Lasso,
    TvDenoise,
    TvInverse,
    Tvl1,
    PoissonEditing,
    WaveletReg,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Lasso => "lasso",
            ProblemKind::TvDenoise => "tv_denoise",
            ProblemKind::TvInverse => "tv_inverse",
            ProblemKind::Tvl1 => "tvl1",
            ProblemKind::PoissonEditing => "poisson_editing",
            ProblemKind::WaveletReg => "wavelet_reg",
        }
    }
}

pub const DEFAULT_LAMBDA: f64 = 0.1;

/// Problem section of a run configuration. Exactly one data source is set:
/// a fixture bundle directory (relative paths resolve against the fixture
/// root), a built-in fixture name, or a synthetic-data recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Strong-convexity modulus of the data term (LASSO, enables `vfista`).
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub fixture: Option<String>,
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

struct Data {
    truth: Vector,
    observation: Vector,
    operator: OperatorSpec,
    shape: Option<(usize, usize)>,
    meta: Metadata,
}

impl ProblemSpec {
    pub fn build(&self, fixture_root: &Path) -> Result<ProblemInstance> {
        let sources = [self.fixture.is_some(), self.builtin.is_some(), self.synthetic.is_some()];
        if sources.iter().filter(|s| **s).count() != 1 {
            return Err(Error::Config(
                "problem: set exactly one of 'fixture', 'builtin' or 'synthetic'".into(),
            ));
        }
        if let Some(name) = &self.builtin {
            let inst = builtin(name)?;
            if inst.name != self.kind.as_str() {
                return Err(Error::Config(format!(
                    "problem.builtin: '{name}' is a {} instance, not {}",
                    inst.name,
                    self.kind.as_str()
                )));
            }
            return Ok(inst);
        }
        let data = if let Some(dir) = &self.fixture {
            let path = Path::new(dir);
            let path = if path.is_absolute() { path.to_path_buf() } else { fixture_root.join(path) };
            let b = load_bundle(&path).map_err(|e| Error::Config(format!("problem.fixture: {}: {e}", path.display())))?;
            let m = &b.manifest;
            Data {
                meta: Metadata {
                    dims: m.dims.clone(),
                    lambda: self.lambda.or(m.lambda).unwrap_or(DEFAULT_LAMBDA),
                    noise: m.noise,
                    seed: m.seed,
                    expected_objective: m.expected_objectives.get(self.kind.as_str()).copied(),
                },
                shape: m.shape.map(|[r, c]| (r, c)),
                operator: m.operator.clone(),
                truth: b.truth,
                observation: b.observation,
            }
        } else {
            let s = self.synthetic.as_ref().expect("one source is set");
            let d = generate_synthetic(s).map_err(|e| Error::Config(format!("problem.synthetic: {e}")))?;
            Data {
                meta: Metadata {
                    dims: s.dims.clone(),
                    lambda: self.lambda.unwrap_or(DEFAULT_LAMBDA),
                    noise: s.noise,
                    seed: s.seed,
                    expected_objective: None,
                },
                shape: d.shape,
                operator: d.operator,
                truth: d.truth,
                observation: d.observation,
            }
        };
        self.from_data(data)
    }

    fn from_data(&self, d: Data) -> Result<ProblemInstance> {
        let lambda = d.meta.lambda;
        let op = LinearOperator::from_spec(&d.operator)?;
        let image = |v: &Vector| -> Result<ImageGrid> {
            let (r, c) = d
                .shape
                .ok_or_else(|| Error::Config(format!("problem.kind: {} needs image data", self.kind.as_str())))?;
            ImageGrid::from_vector(r, c, v, Boundary::Neumann)
        };
        let inst = match self.kind {
            ProblemKind::Lasso => build_lasso(op, d.observation.clone(), lambda, self.alpha)?,
            ProblemKind::TvDenoise => build_tv_denoise(&image(&d.observation)?, lambda)?,
            ProblemKind::Tvl1 => build_tvl1(&image(&d.observation)?, lambda)?,
            ProblemKind::TvInverse => {
                let img = image(&d.truth)?;
                build_tv_inverse(op, d.observation.clone(), img.rows(), img.cols(), lambda)?
            }
            ProblemKind::WaveletReg => {
                let t = haar_matrix(op.in_dim())?;
                build_wavelet_reg(op, d.observation.clone(), lambda, t)?
            }
            ProblemKind::PoissonEditing => {
                let target = image(&d.observation)?;
                let (r, c) = (target.rows(), target.cols());
                let grad = LinearOperator::grad2d(r, c, Boundary::Neumann)?;
                let omega: Vec<bool> =
                    (0..r * c).map(|i| (1..r.saturating_sub(1)).contains(&(i / c)) && (1..c.saturating_sub(1)).contains(&(i % c))).collect();
                build_poisson_editing(&grad.apply_raw(&d.truth), &target, &omega)?
            }
        };
        Ok(inst.with_meta(d.meta))
    }
}
