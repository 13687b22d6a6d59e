//! Gaussian class-conditional corpora with per-speaker offsets and an affine
//! per-corpus domain shift. Specs are TOML:
//!
//! ```toml
//! feature_dim = 88
//!
//! [classes.negative]
//! mean = { fill = 0.0, ranges = [[0, 10, -0.5]] }
//! covariance = { isotropic = 1.0 }
//! [classes.positive]
//! mean = { fill = 0.0, ranges = [[0, 10, 0.5]] }
//! covariance = { isotropic = 1.0 }
//!
//! [[corpora]]
//! id = "EMO-DB"
//! n_speakers = 10
//! utterances_per_speaker = 20
//! segments_per_utterance = 4
//! speaker_effect = 0.2
//!
//! [[corpora]]
//! id = "URDU"
//! n_speakers = 38
//! n_utterances = 400
//! segments_per_utterance = 4
//! shift = { offset = { ranges = [[0, 10, 2.0]] } }
//! ```
//!
//! A sample is `scale ⊙ (class draw + speaker offset) + offset`.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    Corpus, CorpusError, LabelScheme, SegmentFeature, Utterance, Valence, ValenceRegistry,
};
use crate::rng::{derived, SeedRng};

/// A vector either listed in full or described by a fill value plus
/// overrides. `ranges` entries are `[start, end, value]` with `end`
/// exclusive; `entries` are `[index, value]` and are applied last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Dense(Vec<f64>),
    Sparse {
        #[serde(default)]
        fill: f64,
        #[serde(default)]
        ranges: Vec<(usize, usize, f64)>,
        #[serde(default)]
        entries: Vec<(usize, f64)>,
    },
}

impl VectorSpec {
    pub fn constant(fill: f64) -> Self {
        VectorSpec::Sparse {
            fill,
            ranges: Vec::new(),
            entries: Vec::new(),
        }
    }

    pub fn resolve(&self, dim: usize, what: &str) -> Result<Vec<f64>, CorpusError> {
        let v = match self {
            VectorSpec::Dense(v) => {
                if v.len() != dim {
                    return Err(CorpusError::InvalidSpec(format!(
                        "{what}: {} values for feature_dim {dim}",
                        v.len()
                    )));
                }
                v.clone()
            }
            VectorSpec::Sparse {
                fill,
                ranges,
                entries,
            } => {
                let mut v = vec![*fill; dim];
                for &(start, end, value) in ranges {
                    if start > end || end > dim {
                        return Err(CorpusError::InvalidSpec(format!(
                            "{what}: range [{start}, {end}) outside feature_dim {dim}"
                        )));
                    }
                    v[start..end].iter_mut().for_each(|x| *x = value);
                }
                for &(i, value) in entries {
                    *v.get_mut(i).ok_or_else(|| {
                        CorpusError::InvalidSpec(format!(
                            "{what}: index {i} outside feature_dim {dim}"
                        ))
                    })? = value;
                }
                v
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CorpusError::InvalidSpec(format!(
                "{what}: non-finite value"
            )));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceSpec {
    /// Common standard deviation on every dimension.
    Isotropic(f64),
    /// Per-dimension standard deviations.
    Diagonal(VectorSpec),
    /// Full covariance matrix, row-major.
    Full(Vec<Vec<f64>>),
}

impl Default for CovarianceSpec {
    fn default() -> Self {
        CovarianceSpec::Isotropic(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub mean: VectorSpec,
    #[serde(default)]
    pub covariance: CovarianceSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassPair {
    pub negative: ClassSpec,
    pub positive: ClassSpec,
}

/// Affine domain shift; the default is the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    #[serde(default = "unit")]
    pub scale: VectorSpec,
    #[serde(default = "zero")]
    pub offset: VectorSpec,
}

fn unit() -> VectorSpec {
    VectorSpec::constant(1.0)
}

fn zero() -> VectorSpec {
    VectorSpec::constant(0.0)
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            scale: unit(),
            offset: zero(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    pub n_speakers: i64,
    /// Exactly one of `utterances_per_speaker` and `n_utterances` is set;
    /// a total is spread as evenly as possible over speakers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterances_per_speaker: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_utterances: Option<i64>,
    pub segments_per_utterance: i64,
    #[serde(default = "half")]
    pub positive_fraction: f64,
    /// Standard deviation of each speaker's additive offset.
    #[serde(default)]
    pub speaker_effect: f64,
    /// Overrides the spec-level classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<ClassPair>,
    #[serde(default)]
    pub shift: ShiftSpec,
    /// Emotion labels per valence; defaults to the registry entry for `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotions: Option<LabelScheme>,
}

fn half() -> f64 {
    0.5
}

fn default_dim() -> usize {
    88
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_dim")]
    pub feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<ClassPair>,
    pub corpora: Vec<SyntheticCorpusSpec>,
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// Table I registry extended with any custom emotion lists.
    pub fn registry(&self) -> ValenceRegistry {
        let mut r = ValenceRegistry::table_one();
        for c in &self.corpora {
            if let Some(e) = &c.emotions {
                r.register(&c.id, e.clone());
            }
        }
        r
    }

    /// Generates every corpus. Each corpus draws from its own stream derived
    /// from `seed` and its id, so adding a corpus leaves the others intact.
    pub fn generate(&self, seed: u64) -> Result<Vec<Corpus>, CorpusError> {
        let registry = self.registry();
        self.corpora
            .iter()
            .map(|c| generate_with(self, c, &registry, seed))
            .collect()
    }

    pub fn generate_one(&self, id: &str, seed: u64) -> Result<Corpus, CorpusError> {
        let c = self
            .corpora
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| CorpusError::InvalidSpec(format!("no corpus {id:?} in spec")))?;
        generate_with(self, c, &self.registry(), seed)
    }
}

/// Generates the `index`-th corpus of `spec`.
pub fn generate_synthetic_corpus(
    spec: &SyntheticSpec,
    index: usize,
    seed: u64,
) -> Result<Corpus, CorpusError> {
    let c = spec
        .corpora
        .get(index)
        .ok_or_else(|| CorpusError::InvalidSpec(format!("corpus index {index} out of range")))?;
    generate_with(spec, c, &spec.registry(), seed)
}

enum Sampler {
    Diagonal(Vec<f64>),
    Cholesky(Vec<Vec<f64>>),
}

impl Sampler {
    fn new(
        cov: &CovarianceSpec,
        dim: usize,
        corpus: &str,
        class: Valence,
    ) -> Result<Self, CorpusError> {
        let not_pd = || CorpusError::NotPositiveDefinite {
            corpus: corpus.to_string(),
            class,
        };
        match cov {
            CovarianceSpec::Isotropic(s) => {
                if !(*s > 0.0 && s.is_finite()) {
                    return Err(not_pd());
                }
                Ok(Sampler::Diagonal(vec![*s; dim]))
            }
            CovarianceSpec::Diagonal(v) => {
                let v = v.resolve(dim, "covariance")?;
                if v.iter().any(|s| *s <= 0.0) {
                    return Err(not_pd());
                }
                Ok(Sampler::Diagonal(v))
            }
            CovarianceSpec::Full(m) => {
                if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                    return Err(CorpusError::InvalidSpec(format!(
                        "full covariance of class {class} must be {dim}x{dim}"
                    )));
                }
                #[allow(clippy::needless_range_loop)]
                for i in 0..dim {
                    for j in 0..i {
                        if (m[i][j] - m[j][i]).abs() > 1e-12 * (1.0 + m[i][j].abs()) {
                            return Err(not_pd());
                        }
                    }
                }
                cholesky(m).map(Sampler::Cholesky).ok_or_else(not_pd)
            }
        }
    }

    fn draw(&self, mean: &[f64], rng: &mut SeedRng) -> Vec<f64> {
        let z: Vec<f64> = (0..mean.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        match self {
            Sampler::Diagonal(s) => mean
                .iter()
                .zip(s)
                .zip(&z)
                .map(|((m, s), z)| m + s * z)
                .collect(),
            Sampler::Cholesky(l) => mean
                .iter()
                .enumerate()
                .map(|(i, m)| m + (0..=i).map(|k| l[i][k] * z[k]).sum::<f64>())
                .collect(),
        }
    }
}

/// Lower-triangular factor of a symmetric matrix, or `None` when it is not
/// positive definite.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0 && d.is_finite()) {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

fn positive(name: &str, v: i64, corpus: &str) -> Result<usize, CorpusError> {
    if v <= 0 {
        return Err(CorpusError::InvalidSpec(format!(
            "{corpus}: {name} must be positive, got {v}"
        )));
    }
    Ok(v as usize)
}

fn generate_with(
    spec: &SyntheticSpec,
    c: &SyntheticCorpusSpec,
    registry: &ValenceRegistry,
    seed: u64,
) -> Result<Corpus, CorpusError> {
    let dim = spec.feature_dim;
    if dim == 0 {
        return Err(CorpusError::InvalidSpec(
            "feature_dim must be positive".into(),
        ));
    }
    let n_speakers = positive("n_speakers", c.n_speakers, &c.id)?;
    let n_segments = positive("segments_per_utterance", c.segments_per_utterance, &c.id)?;
    let per_speaker: Vec<usize> = match (c.utterances_per_speaker, c.n_utterances) {
        (Some(u), None) => vec![positive("utterances_per_speaker", u, &c.id)?; n_speakers],
        (None, Some(n)) => {
            let n = positive("n_utterances", n, &c.id)?;
            if n < n_speakers {
                return Err(CorpusError::InvalidSpec(format!(
                    "{}: {n} utterances cannot cover {n_speakers} speakers",
                    c.id
                )));
            }
            (0..n_speakers)
                .map(|s| n / n_speakers + usize::from(s < n % n_speakers))
                .collect()
        }
        _ => {
            return Err(CorpusError::InvalidSpec(format!(
                "{}: set exactly one of utterances_per_speaker and n_utterances",
                c.id
            )))
        }
    };
    if !(0.0..=1.0).contains(&c.positive_fraction) {
        return Err(CorpusError::InvalidSpec(format!(
            "{}: positive_fraction outside [0, 1]",
            c.id
        )));
    }
    if !(c.speaker_effect >= 0.0 && c.speaker_effect.is_finite()) {
        return Err(CorpusError::InvalidSpec(format!(
            "{}: speaker_effect must be >= 0",
            c.id
        )));
    }
    let classes = c
        .classes
        .as_ref()
        .or(spec.classes.as_ref())
        .ok_or_else(|| CorpusError::InvalidSpec(format!("{}: no class distributions", c.id)))?;
    let means = [
        classes.negative.mean.resolve(dim, "negative mean")?,
        classes.positive.mean.resolve(dim, "positive mean")?,
    ];
    let samplers = [
        Sampler::new(&classes.negative.covariance, dim, &c.id, Valence::Negative)?,
        Sampler::new(&classes.positive.covariance, dim, &c.id, Valence::Positive)?,
    ];
    let scale = c.shift.scale.resolve(dim, "shift scale")?;
    let offset = c.shift.offset.resolve(dim, "shift offset")?;
    let scheme = c
        .emotions
        .as_ref()
        .or_else(|| registry.scheme(&c.id))
        .ok_or_else(|| {
            CorpusError::InvalidSpec(format!(
                "{}: not in the valence registry and no emotions given",
                c.id
            ))
        })?;
    for v in Valence::ALL {
        if scheme.emotions(v).is_empty() {
            return Err(CorpusError::InvalidSpec(format!(
                "{}: no {v} emotions",
                c.id
            )));
        }
    }

    let mut rng = derived(seed, &format!("synthetic/{}", c.id));
    let mut utterances = Vec::new();
    for (s, &n_utt) in per_speaker.iter().enumerate() {
        let speaker_id = format!("{}_spk{:02}", c.id, s + 1);
        let speaker_offset: Vec<f64> = (0..dim)
            .map(|_| c.speaker_effect * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n_pos = (n_utt as f64 * c.positive_fraction).round() as usize;
        for u in 0..n_utt {
            let valence = if u < n_utt - n_pos {
                Valence::Negative
            } else {
                Valence::Positive
            };
            let names = scheme.emotions(valence);
            let emotion = names[rng.random_range(0..names.len())].clone();
            let segments = (0..n_segments)
                .map(|k| {
                    let draw = samplers[valence.index()].draw(&means[valence.index()], &mut rng);
                    let values = draw
                        .iter()
                        .zip(&speaker_offset)
                        .zip(scale.iter().zip(&offset))
                        .map(|((x, o), (a, b))| a * (x + o) + b)
                        .collect();
                    SegmentFeature {
                        values,
                        segment_index: k,
                    }
                })
                .collect();
            utterances.push(Utterance {
                id: format!("{}_s{:02}_u{:03}", c.id, s + 1, u + 1),
                speaker_id: speaker_id.clone(),
                corpus_id: c.id.clone(),
                segments,
                emotion,
                valence,
            });
        }
    }
    Ok(Corpus {
        id: c.id.clone(),
        language: c
            .language
            .clone()
            .unwrap_or_else(|| scheme.language.clone()),
        feature_dim: dim,
        utterances,
    })
}
