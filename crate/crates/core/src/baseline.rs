//! Fingerprint baseline: hashed Morgan bits fed to an L2-regularized
//! logistic regression fitted by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::datapipe::{SplitIndices, TaskDataset};
use crate::metrics::{prc_auc, roc_auc, MetricError};
use crate::molgraph::{morgan_fingerprint, parse_smiles, SmilesError, DEFAULT_RADIUS, DEFAULT_WIDTH};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("record {index}: {source}")]
    Smiles {
        index: usize,
        #[source]
        source: SmilesError,
    },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid baseline configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub radius: usize,
    pub width: usize,
    pub l2: f64,
    pub max_iter: usize,
    /// Stop when the gradient's Euclidean norm drops below this.
    pub tolerance: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            radius: DEFAULT_RADIUS,
            width: DEFAULT_WIDTH,
            l2: 1e-3,
            max_iter: 5000,
            tolerance: 1e-6,
        }
    }
}

/// Logistic model over fingerprint bits. The bias is not regularized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

/// Sparse binary design matrix: the set bits of each row.
pub type Features = [Vec<usize>];

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LinearModel {
    pub fn zeros(width: usize, l2: f64) -> LinearModel {
        LinearModel {
            weights: vec![0.0; width],
            bias: 0.0,
            l2,
        }
    }

    pub fn logit(&self, bits: &[usize]) -> f64 {
        self.bias + bits.iter().map(|&b| self.weights[b]).sum::<f64>()
    }

    pub fn predict(&self, x: &Features) -> Vec<f64> {
        x.iter().map(|bits| sigmoid(self.logit(bits))).collect()
    }

    /// Mean logistic loss plus `l2/2 · |w|²`.
    pub fn objective(&self, x: &Features, y: &[bool]) -> f64 {
        let data: f64 = x
            .iter()
            .zip(y)
            .map(|(bits, &yi)| {
                let z = self.logit(bits);
                if yi {
                    softplus(-z)
                } else {
                    softplus(z)
                }
            })
            .sum::<f64>()
            / x.len() as f64;
        data + 0.5 * self.l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Gradient of [`LinearModel::objective`] as `(weights, bias)`.
    pub fn gradient(&self, x: &Features, y: &[bool]) -> (Vec<f64>, f64) {
        let n = x.len() as f64;
        let mut gw: Vec<f64> = self.weights.iter().map(|w| self.l2 * w).collect();
        let mut gb = 0.0;
        for (bits, &yi) in x.iter().zip(y) {
            let r = (sigmoid(self.logit(bits)) - f64::from(u8::from(yi))) / n;
            gb += r;
            for &b in bits {
                gw[b] += r;
            }
        }
        (gw, gb)
    }
}

/// Outcome of [`fit_logistic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
}

/// Gradient descent with the fixed step `1/L`, where `L` bounds the
/// objective's gradient Lipschitz constant: `¼·‖X̃‖₁‖X̃‖∞/n + l2` with `X̃`
/// the design matrix plus a bias column.
pub fn fit_logistic(x: &Features, y: &[bool], width: usize, cfg: &BaselineConfig) -> (LinearModel, FitReport) {
    let n = x.len().max(1) as f64;
    let mut col = vec![0usize; width];
    for bits in x {
        for &b in bits {
            col[b] += 1;
        }
    }
    let max_col = col.into_iter().max().unwrap_or(0).max(x.len());
    let max_row = x.iter().map(|b| b.len() + 1).max().unwrap_or(1);
    let lipschitz = 0.25 * (max_col * max_row) as f64 / n + cfg.l2;
    let step = 1.0 / lipschitz;

    let mut model = LinearModel::zeros(width, cfg.l2);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let (gw, gb) = model.gradient(x, y);
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < cfg.tolerance {
            converged = true;
            break;
        }
        model.weights.iter_mut().zip(&gw).for_each(|(w, g)| *w -= step * g);
        model.bias -= step * gb;
        iterations += 1;
    }
    let final_objective = model.objective(x, y);
    (
        model,
        FitReport {
            iterations,
            converged,
            final_objective,
        },
    )
}

/// Set fingerprint bits of every record.
pub fn featurize(task: &TaskDataset, radius: usize, width: usize) -> Result<Vec<Vec<usize>>, BaselineError> {
    task.records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let g = parse_smiles(&r.smiles).map_err(|source| BaselineError::Smiles { index, source })?;
            Ok(morgan_fingerprint(&g, radius, width).ones().collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub task: String,
    pub fit: FitReport,
    pub test_roc_auc: f64,
    pub test_prc_auc: f64,
}

/// Fits on the train partition and scores the test partition.
///
/// ```
/// use chemberta_core::baseline::{train_baseline, BaselineConfig};
/// use chemberta_core::datapipe::{scaffold_split, DEFAULT_FRACTIONS};
/// use chemberta_core::synth::{synthetic_task, SyntheticTask};
/// let task = synthetic_task(SyntheticTask::ContainsNitrogen, 200, 3);
/// let split = scaffold_split(&task, DEFAULT_FRACTIONS).unwrap();
/// let (_, report) = train_baseline(&task, &split, &BaselineConfig::default()).unwrap();
/// assert!(report.test_roc_auc > 0.9);
/// ```
pub fn train_baseline(
    task: &TaskDataset,
    split: &SplitIndices,
    cfg: &BaselineConfig,
) -> Result<(LinearModel, BaselineReport), BaselineError> {
    if cfg.width == 0 || !(cfg.l2 >= 0.0) || !(cfg.tolerance > 0.0) {
        return Err(BaselineError::InvalidConfig(
            "width must be positive, l2 non-negative and tolerance positive".into(),
        ));
    }
    if split.train.is_empty() {
        return Err(BaselineError::EmptySplit("train"));
    }
    if split.test.is_empty() {
        return Err(BaselineError::EmptySplit("test"));
    }
    let feats = featurize(task, cfg.radius, cfg.width)?;
    let pick = |idx: &[usize]| -> (Vec<Vec<usize>>, Vec<bool>) {
        idx.iter().map(|&i| (feats[i].clone(), task.records[i].label)).unzip()
    };
    let (xt, yt) = pick(&split.train);
    let (model, fit) = fit_logistic(&xt, &yt, cfg.width, cfg);
    let (xs, ys) = pick(&split.test);
    let scores = model.predict(&xs);
    let report = BaselineReport {
        task: task.task_name.clone(),
        fit,
        test_roc_auc: roc_auc(&scores, &ys)?,
        test_prc_auc: prc_auc(&scores, &ys)?,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::datapipe::{scaffold_split, DEFAULT_FRACTIONS};
    use crate::synth::{synthetic_task, SyntheticTask};

    fn toy() -> (Vec<Vec<usize>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..60 {
            let bits: Vec<usize> = (0..12).filter(|_| rng.random_bool(0.3)).collect();
            y.push(bits.contains(&3) ^ rng.random_bool(0.1));
            x.push(bits);
        }
        (x, y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = LinearModel::zeros(12, 0.05);
        m.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        m.bias = 0.3;
        let (gw, gb) = m.gradient(&x, &y);
        let h = 1e-6;
        for _ in 0..10 {
            let j = rng.random_range(0..13);
            let bump = |m: &mut LinearModel, d: f64| {
                if j == 12 {
                    m.bias += d
                } else {
                    m.weights[j] += d
                }
            };
            let mut up = m.clone();
            bump(&mut up, h);
            let mut down = m.clone();
            bump(&mut down, -h);
            let fd = (up.objective(&x, &y) - down.objective(&x, &y)) / (2.0 * h);
            let an = if j == 12 { gb } else { gw[j] };
            assert!((fd - an).abs() <= 1e-7 * an.abs().max(1.0), "{j}: {fd} vs {an}");
        }
    }

    #[test]
    fn fitting_never_loses_to_the_zero_model() {
        let (x, y) = toy();
        for l2 in [0.0, 1e-3, 1.0] {
            let cfg = BaselineConfig {
                l2,
                max_iter: 300,
                ..BaselineConfig::default()
            };
            let (m, rep) = fit_logistic(&x, &y, 12, &cfg);
            assert!(rep.final_objective <= LinearModel::zeros(12, l2).objective(&x, &y));
            assert_eq!(rep.final_objective, m.objective(&x, &y));
        }
    }

    #[test]
    fn converges_on_strongly_regularized_problem() {
        let (x, y) = toy();
        let cfg = BaselineConfig {
            l2: 0.5,
            ..BaselineConfig::default()
        };
        let (m, rep) = fit_logistic(&x, &y, 12, &cfg);
        assert!(rep.converged);
        let (gw, gb) = m.gradient(&x, &y);
        assert!((gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt() < 1e-6);
    }

    #[test]
    fn growing_penalty_shrinks_weights_to_zero() {
        let (x, y) = toy();
        let norm = |l2: f64| {
            let cfg = BaselineConfig {
                l2,
                max_iter: 20_000,
                ..BaselineConfig::default()
            };
            let (m, _) = fit_logistic(&x, &y, 12, &cfg);
            let p = m.predict(&x);
            let spread = p.iter().cloned().fold(f64::MIN, f64::max) - p.iter().cloned().fold(f64::MAX, f64::min);
            (m.weights.iter().map(|w| w * w).sum::<f64>().sqrt(), spread)
        };
        let norms: Vec<(f64, f64)> = [1e-2, 1.0, 1e2, 1e6].into_iter().map(norm).collect();
        assert!(norms.windows(2).all(|w| w[1].0 < w[0].0));
        assert!(norms[3].0 < 1e-6 && norms[3].1 < 1e-6);
        // The limit itself: all-zero weights score every molecule alike.
        let zero = LinearModel::zeros(12, 0.0).predict(&x);
        assert_eq!(roc_auc(&zero, &y).unwrap(), 0.5);
    }

    #[test]
    fn separable_task_and_determinism() {
        let task = synthetic_task(SyntheticTask::ContainsNitrogen, 300, 8);
        let split = scaffold_split(&task, DEFAULT_FRACTIONS).unwrap();
        let cfg = BaselineConfig::default();
        let (m1, r1) = train_baseline(&task, &split, &cfg).unwrap();
        let (m2, r2) = train_baseline(&task, &split, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
        assert!(r1.test_roc_auc >= 0.95, "{}", r1.test_roc_auc);
    }

    #[test]
    fn empty_partitions_are_rejected() {
        let task = synthetic_task(SyntheticTask::ContainsNitrogen, 10, 8);
        let split = SplitIndices {
            train: vec![],
            valid: vec![],
            test: vec![0],
        };
        assert!(matches!(
            train_baseline(&task, &split, &BaselineConfig::default()),
            Err(BaselineError::EmptySplit("train"))
        ));
    }
}
