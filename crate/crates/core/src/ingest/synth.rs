//! Synthetic cohorts with latent subgroups and subgroup-dependent outcomes.
//!
//! Sampling recipe, in draw order from a ChaCha8 stream seeded with
//! `seed::derive(spec.seed, STREAM_SYNTH)`:
//!
//! 1. Coefficients `W` (`C × q`, row-major), each `N(0, 1)`.
//! 2. For every row, in row order:
//!    1. subgroup `g ~ Categorical(subgroup_proportions)`;
//!    2. sex: `vocabulary[g mod 2]` of `["M", "F"]` (deterministic);
//!    3. age: `clamp(N(25 + 35·g/(K−1), 7), 0, 90)` (mean 25 when `K = 1`);
//!    4. `q` informative features, then `n_noise_features` noise features, all `N(0, 1)`;
//!    5. label `y ~ softmax(ℓ)` with
//!       `ℓ_c = signal · (W · R_g · x_inf)_c + outcome_shift[g] · c`,
//!       drawn by inverting one `U(0, 1)` variate against the cumulative probabilities.
//!
//! `R_g` rotates consecutive pairs of informative features by the angle
//! `g · heterogeneity · π/2`. Rotations keep the isotropic feature
//! distribution unchanged, so with a zero outcome shift every subgroup has the
//! same class priors, while the feature-to-outcome mapping still differs.

use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, RawTable};
use super::schema::{ColumnSpec, FeatureSchema};
use crate::error::{Error, Result};
use crate::seed;

pub const STREAM_SYNTH: u64 = 0x5359_4e54;
pub const SEX_VOCABULARY: [&str; 2] = ["M", "F"];
pub const AGE_BINS: [f64; 3] = [18.0, 35.0, 50.0];
const AGE_SD: f64 = 7.0;

fn default_informative() -> usize {
    8
}

fn default_signal() -> f64 {
    2.0
}

fn default_heterogeneity() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_rows: usize,
    pub n_noise_features: usize,
    #[serde(default = "default_informative")]
    pub n_informative: usize,
    pub subgroup_count: usize,
    pub subgroup_proportions: Vec<f64>,
    /// Per-subgroup logit offset, applied as `shift · c` to class `c`.
    pub outcome_shift: Vec<f64>,
    pub label_count: usize,
    #[serde(default = "default_signal")]
    pub signal: f64,
    /// Rotation of the outcome mapping between consecutive subgroups, in
    /// quarter turns.
    #[serde(default = "default_heterogeneity")]
    pub heterogeneity: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// A two-subgroup 80/20 cohort with four outcome classes.
    pub fn biased(n_rows: usize, seed: u64) -> Self {
        Self {
            n_rows,
            n_noise_features: 4,
            n_informative: default_informative(),
            subgroup_count: 2,
            subgroup_proportions: vec![0.8, 0.2],
            outcome_shift: vec![0.0, 0.5],
            label_count: 4,
            signal: default_signal(),
            heterogeneity: default_heterogeneity(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.subgroup_count;
        if k == 0 {
            return Err(Error::InvalidConfig("subgroup_count must be at least 1".into()));
        }
        if self.subgroup_proportions.len() != k || self.outcome_shift.len() != k {
            return Err(Error::InvalidConfig(format!(
                "subgroup_proportions and outcome_shift need {k} entries"
            )));
        }
        if self.subgroup_proportions.iter().any(|&p| p.is_nan() || p <= 0.0) {
            return Err(Error::InvalidConfig("subgroup proportions must all be positive".into()));
        }
        let total: f64 = self.subgroup_proportions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("subgroup proportions sum to {total}, not 1")));
        }
        if self.n_rows < 10 * k {
            return Err(Error::InvalidConfig(format!("n_rows must be at least {}", 10 * k)));
        }
        if self.label_count < 2 {
            return Err(Error::InvalidConfig("label_count must be at least 2".into()));
        }
        if self.n_informative == 0 {
            return Err(Error::InvalidConfig("n_informative must be at least 1".into()));
        }
        if !self.signal.is_finite() || !self.heterogeneity.is_finite() || self.outcome_shift.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("synthetic spec".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        let mut columns = vec![
            ColumnSpec::categorical("sex", &SEX_VOCABULARY).sensitive(),
            ColumnSpec::numeric("age").sensitive().with_bins(&AGE_BINS),
        ];
        columns.extend((0..self.n_informative).map(|j| ColumnSpec::numeric(&format!("x{j}"))));
        columns.extend((0..self.n_noise_features).map(|j| ColumnSpec::numeric(&format!("noise{j}"))));
        columns.push(ColumnSpec::label("outcome"));
        FeatureSchema::new(columns, self.label_count).expect("generated schema is valid")
    }

    pub fn age_mean(&self, subgroup: usize) -> f64 {
        if self.subgroup_count == 1 {
            25.0
        } else {
            25.0 + 35.0 * subgroup as f64 / (self.subgroup_count - 1) as f64
        }
    }
}

/// Output of the generator: the raw table, its schema, the encoded cohort
/// (all rows tagged train) and the latent subgroup of each row (0-based).
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub schema: FeatureSchema,
    pub raw: RawTable,
    pub cohort: Cohort,
    pub subgroups: Vec<usize>,
    pub coefficients: Array2<f64>,
}

/// Rotates consecutive feature pairs by `angle`; an odd trailing feature is kept.
pub fn rotate_pairs(x: &[f64], angle: f64) -> Vec<f64> {
    let (sin, cos) = angle.sin_cos();
    let mut out = x.to_vec();
    for pair in 0..x.len() / 2 {
        let (a, b) = (x[2 * pair], x[2 * pair + 1]);
        out[2 * pair] = cos * a - sin * b;
        out[2 * pair + 1] = sin * a + cos * b;
    }
    out
}

/// Class probabilities for one row under the documented recipe.
pub fn outcome_probabilities(
    spec: &SynthSpec,
    coefficients: &Array2<f64>,
    subgroup: usize,
    informative: &[f64],
) -> Vec<f64> {
    let rotated = rotate_pairs(informative, subgroup as f64 * spec.heterogeneity * FRAC_PI_2);
    let logits: Vec<f64> = (0..spec.label_count)
        .map(|c| {
            let linear: f64 = coefficients.row(c).iter().zip(&rotated).map(|(w, v)| w * v).sum();
            spec.signal * linear + spec.outcome_shift[subgroup] * c as f64
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

fn sample_index<R: Rng + ?Sized>(rng: &mut R, probabilities: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    probabilities.len() - 1
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, STREAM_SYNTH);
    let q = spec.n_informative;
    let coefficients = Array2::from_shape_simple_fn((spec.label_count, q), || {
        StandardNormal.sample(&mut rng)
    });

    let schema = spec.schema();
    let header: Vec<String> = schema.columns.iter().map(|c| c.name.clone()).collect();
    let mut rows = Vec::with_capacity(spec.n_rows);
    let mut subgroups = Vec::with_capacity(spec.n_rows);
    for _ in 0..spec.n_rows {
        let g = sample_index(&mut rng, &spec.subgroup_proportions);
        let sex = SEX_VOCABULARY[g % 2];
        let age_dist = Normal::new(spec.age_mean(g), AGE_SD).expect("positive sd");
        let age: f64 = age_dist.sample(&mut rng).clamp(0.0, 90.0);
        let informative: Vec<f64> = (0..q).map(|_| StandardNormal.sample(&mut rng)).collect();
        let noise: Vec<f64> = (0..spec.n_noise_features)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let probabilities = outcome_probabilities(spec, &coefficients, g, &informative);
        let label = sample_index(&mut rng, &probabilities);

        let mut row = Vec::with_capacity(header.len());
        row.push(sex.to_owned());
        row.push(age.to_string());
        row.extend(informative.iter().chain(&noise).map(|v| v.to_string()));
        row.push(label.to_string());
        rows.push(row);
        subgroups.push(g);
    }
    let raw = RawTable { header, rows };
    let cohort = Cohort::from_raw(&schema, &raw)?;
    Ok(SyntheticCohort {
        schema,
        raw,
        cohort,
        subgroups,
        coefficients,
    })
}
