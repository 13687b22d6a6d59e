//! Synthetic corpora shared by the integration tests.

use ser_adapt::corpus::{Corpus, SyntheticSpec};
use ser_adapt::eval::EvalConfig;

/// Two 88-dim Gaussian valence classes (±0.95 on the first 10 coordinates),
/// ten speakers per corpus. The target copy is offset by `shift` on those
/// same 10 coordinates.
pub fn mean_shift_spec(shift: f64) -> SyntheticSpec {
    SyntheticSpec::from_toml(&format!(
        r#"
feature_dim = 88
[classes.negative]
mean = {{ ranges = [[0, 10, -0.95]] }}
[classes.positive]
mean = {{ ranges = [[0, 10, 0.95]] }}

[[corpora]]
id = "EMO-DB"
n_speakers = 10
utterances_per_speaker = 12
segments_per_utterance = 8
speaker_effect = 0.2

[[corpora]]
id = "URDU"
n_speakers = 10
utterances_per_speaker = 12
segments_per_utterance = 8
speaker_effect = 0.2
shift = {{ offset = {{ ranges = [[0, 10, {shift}]] }} }}
"#
    ))
    .unwrap()
}

pub fn mean_shift_pair(seed: u64) -> (Corpus, Corpus) {
    let mut cs = mean_shift_spec(2.0).generate(7 + seed).unwrap();
    let target = cs.pop().unwrap();
    (cs.pop().unwrap(), target)
}

/// Source and target drawn from the same distribution.
pub fn identical_pair(seed: u64) -> (Corpus, Corpus) {
    let mut cs = mean_shift_spec(0.0).generate(7 + seed).unwrap();
    let target = cs.pop().unwrap();
    (cs.pop().unwrap(), target)
}

pub const FOUR_CORPORA: [&str; 4] = ["EMO-DB", "SAVEE", "EMOVO", "URDU"];

/// Four corpora sharing one class structure (±0.7 on the first 10
/// coordinates), each with its own offset of 2.0 on 8 coordinates outside
/// the class block, 8 speakers with a per-speaker offset of σ = 0.5.
pub fn four_corpora_spec() -> SyntheticSpec {
    let mut toml = String::from(
        "feature_dim = 88\n\
         [classes.negative]\nmean = { ranges = [[0, 10, -0.7]] }\n\
         [classes.positive]\nmean = { ranges = [[0, 10, 0.7]] }\n",
    );
    for (k, id) in FOUR_CORPORA.iter().enumerate() {
        let (lo, hi) = (50 + 8 * k, 58 + 8 * k);
        toml += &format!(
            "[[corpora]]\nid = \"{id}\"\nn_speakers = 8\nutterances_per_speaker = 8\n\
             segments_per_utterance = 2\nspeaker_effect = 0.5\n\
             shift = {{ offset = {{ ranges = [[{lo}, {hi}, 2.0]] }} }}\n"
        );
    }
    SyntheticSpec::from_toml(&toml).unwrap()
}

pub fn four_corpora(seed: u64) -> Vec<Corpus> {
    four_corpora_spec().generate(11 + seed).unwrap()
}

/// Desk settings with a given experiment seed.
pub fn desk(seed: u64) -> EvalConfig {
    EvalConfig {
        seed,
        ..EvalConfig::desk_scale()
    }
}

/// Small, fast settings for plumbing tests.
pub fn tiny(seed: u64) -> EvalConfig {
    let mut cfg = EvalConfig::desk_scale();
    cfg.seed = seed;
    cfg.autoencoder.hidden_dim = 16;
    cfg.autoencoder.latent_dim = 16;
    cfg.autoencoder_training.epochs = 3;
    cfg.adaptation.epochs = 3;
    cfg.adaptation.discriminator.hidden = vec![16, 8];
    cfg.c_grid = vec![1.0];
    cfg.gamma_scales = vec![1.0];
    cfg
}
