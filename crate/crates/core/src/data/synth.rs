//! Deterministic synthetic accident corpus.
//!
//! Each clip picks one value for four factors (actor, action, cause, scene). Its features
//! repeat the concatenated one-hot codes on every frame, plus Gaussian noise; its captions
//! are rendered from fixed templates of the same factors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::annotations::{restructure, RawAnnotation, Sample};
use super::features::FeatureClip;
use super::{DataError, FeatureIndex, Splits};
use crate::seed::derive_seed;

pub const ACTORS: [&str; 3] = ["car", "truck", "cyclist"];
pub const ACTIONS: [&str; 3] = ["brakes", "turns", "merges"];
pub const CAUSES: [&str; 3] = ["speeding", "no-signal", "ignores-right-of-way"];
pub const SCENES: [&str; 3] = ["intersection", "highway", "street"];

const FACTOR_SIZES: [usize; 4] = [ACTORS.len(), ACTIONS.len(), CAUSES.len(), SCENES.len()];

/// Leading feature columns that carry the one-hot factor codes.
pub const SIGNAL_DIM: usize = 12;

/// Function words the templates use around the event words.
pub const GLUE_WORDS: [&str; 7] = ["a", "the", "on", "and", "to", "of", "is"];

/// Content words the templates may render.
pub const EVENT_WORDS: [&str; 33] = [
    "car", "truck", "cyclist", "brakes", "suddenly", "turns", "left", "across", "merges", "into", "lane", "ahead",
    "intersection", "highway", "street", "ego", "speeding", "gives", "no", "signal", "ignores", "right", "way", "slow",
    "down", "keep", "safe", "distance", "watch", "prepare", "brake", "yield", "early",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_clips: usize,
    pub frames: usize,
    pub dim: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n_clips: 500, frames: 8, dim: 16, noise_std: 0.1, seed: 0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        if self.n_clips == 0 {
            return bad("n_clips must be at least 1".into());
        }
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        if self.dim < SIGNAL_DIM {
            return bad(format!("dim must be at least {SIGNAL_DIM}, got {}", self.dim));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad(format!("noise_std must be finite and non-negative, got {}", self.noise_std));
        }
        Ok(())
    }
}

/// Factor indices of one clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Template {
    pub actor: usize,
    pub action: usize,
    pub cause: usize,
    pub scene: usize,
}

impl Template {
    pub fn count() -> usize {
        FACTOR_SIZES.iter().product()
    }

    pub fn all() -> Vec<Template> {
        let mut out = Vec::with_capacity(Self::count());
        for actor in 0..ACTORS.len() {
            for action in 0..ACTIONS.len() {
                for cause in 0..CAUSES.len() {
                    for scene in 0..SCENES.len() {
                        out.push(Template { actor, action, cause, scene });
                    }
                }
            }
        }
        out
    }

    fn factors(&self) -> [usize; 4] {
        [self.actor, self.action, self.cause, self.scene]
    }

    /// Noise-free feature row: the four one-hot codes, zero-padded to `dim`.
    pub fn signal(&self, dim: usize) -> Vec<f32> {
        let mut row = vec![0.0; dim];
        let mut offset = 0;
        for (value, size) in self.factors().into_iter().zip(FACTOR_SIZES) {
            row[offset + value] = 1.0;
            offset += size;
        }
        row
    }

    /// The raw "texts" / "causes" / "measures" fields for this template.
    pub fn render(&self, id: impl Into<String>) -> RawAnnotation {
        let actor = ACTORS[self.actor];
        let action = ["brakes suddenly", "turns left across the lane", "merges into the lane"][self.action];
        let scene = SCENES[self.scene];
        let texts = format!("a {actor} ahead {action} on the {scene}");
        let causes = match self.cause {
            0 => "the ego car is speeding".to_owned(),
            1 => format!("the {actor} gives no signal"),
            _ => format!("the {actor} ignores the right of way"),
        };
        let measures = match self.cause {
            0 => "slow down and keep a safe distance".to_owned(),
            1 => format!("watch the {actor} and prepare to brake"),
            _ => format!("yield early to the {actor}"),
        };
        RawAnnotation::new(id, &texts, &causes, &measures)
    }
}

/// A generated corpus held in memory. `samples[i]`, `clips[i]` and `templates[i]` describe the same clip.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub raw: Vec<RawAnnotation>,
    pub samples: Vec<Sample>,
    pub clips: Vec<FeatureClip>,
    pub templates: Vec<Template>,
    pub splits: Splits,
    pub index: FeatureIndex,
}

fn clip_id(i: usize) -> String {
    format!("clip{i:04}")
}

fn add_noise(data: &mut [f32], std: f64, seed: u64) {
    if std == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std).expect("std validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in data {
        *x += normal.sample(&mut rng) as f32;
    }
}

pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus, DataError> {
    cfg.validate()?;
    let mut pick = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["template".into()]));
    let templates: Vec<Template> = (0..cfg.n_clips)
        .map(|_| Template {
            actor: pick.random_range(0..ACTORS.len()),
            action: pick.random_range(0..ACTIONS.len()),
            cause: pick.random_range(0..CAUSES.len()),
            scene: pick.random_range(0..SCENES.len()),
        })
        .collect();

    let ids: Vec<String> = (0..cfg.n_clips).map(clip_id).collect();
    let raw: Vec<RawAnnotation> = templates.iter().zip(&ids).map(|(t, id)| t.render(id.clone())).collect();
    let mut samples = restructure(&raw)?.samples;

    let mut index = FeatureIndex::default();
    let mut clips = Vec::with_capacity(cfg.n_clips);
    for ((t, id), sample) in templates.iter().zip(&ids).zip(&mut samples) {
        let mut data = t.signal(cfg.dim).repeat(cfg.frames);
        add_noise(&mut data, cfg.noise_std, derive_seed(cfg.seed, &["noise".into(), id.as_str().into()]));
        let clip = FeatureClip::new(id.clone(), cfg.frames, cfg.dim, data)
            .map_err(|source| DataError::Feature { path: id.clone(), source })?;
        sample.features_path = format!("features/{id}.avdf");
        index.insert(id.clone(), sample.features_path.clone());
        clips.push(clip);
    }

    let mut order = ids.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["split".into()])));
    let n_train = (cfg.n_clips * 8 + 5) / 10;
    let n_val = ((cfg.n_clips + 5) / 10).min(cfg.n_clips - n_train);
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    let splits = Splits { train: order, val, test };

    Ok(SynthCorpus { raw, samples, clips, templates, splits, index })
}

/// Copies of `clips` with independent N(0, std²) noise added to every value.
pub fn perturb(clips: &[FeatureClip], std: f64, seed: u64) -> Result<Vec<FeatureClip>, DataError> {
    if !(std.is_finite() && std >= 0.0) {
        return Err(DataError::InvalidConfig(format!("noise std must be finite and non-negative, got {std}")));
    }
    clips
        .iter()
        .map(|c| {
            let mut data = c.data.clone();
            add_noise(&mut data, std, derive_seed(seed, &["perturb".into(), c.id.as_str().into()]));
            FeatureClip::new(c.id.clone(), c.frames, c.dim, data)
                .map_err(|source| DataError::Feature { path: c.id.clone(), source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{cider_corpus, IdfTable};
    use crate::textproc::MAX_ORDER;
    use std::collections::{BTreeSet, HashSet};

    fn small(seed: u64, noise_std: f64) -> SynthCorpus {
        synth_corpus(&SynthConfig { n_clips: 120, noise_std, seed, ..SynthConfig::default() }).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, b) = (small(3, 0.1), small(3, 0.1));
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.clips, b.clips);
        assert_eq!(a.splits, b.splits);
        assert_ne!(small(4, 0.1).clips, a.clips);
    }

    #[test]
    fn noiseless_clips_share_features_by_template() {
        let c = small(1, 0.0);
        for i in 0..c.clips.len() {
            for j in 0..c.clips.len() {
                if c.templates[i] == c.templates[j] {
                    assert_eq!(c.clips[i].data, c.clips[j].data);
                    assert_eq!(c.samples[i].description.raw, c.samples[j].description.raw);
                }
            }
        }
    }

    #[test]
    fn splits_partition_the_clips() {
        let c = synth_corpus(&SynthConfig { seed: 7, ..SynthConfig::default() }).unwrap();
        assert_eq!((c.splits.train.len(), c.splits.val.len(), c.splits.test.len()), (400, 50, 50));
        let all: HashSet<&String> = c.splits.train.iter().chain(&c.splits.val).chain(&c.splits.test).collect();
        assert_eq!(all.len(), 500);
        assert!(c.samples.iter().all(|s| all.contains(&s.id)));
        for n in 1..12 {
            let c = synth_corpus(&SynthConfig { n_clips: n, ..SynthConfig::default() }).unwrap();
            assert_eq!(c.splits.len(), n);
        }
    }

    #[test]
    fn rendered_words_come_from_the_configured_sets() {
        // scan every possible template, not just the ones a seed happens to draw
        let allowed: BTreeSet<&str> = EVENT_WORDS.iter().chain(&GLUE_WORDS).copied().collect();
        let mut used = BTreeSet::new();
        let samples = restructure(&Template::all().iter().enumerate().map(|(i, t)| t.render(clip_id(i))).collect::<Vec<_>>())
            .unwrap()
            .samples;
        for s in &samples {
            for tok in s.description.tokens.iter().chain(&s.avoidance.tokens) {
                assert!(allowed.contains(tok.as_str()), "unexpected word {tok}");
                used.insert(tok.clone());
            }
            assert!(s.description.tokens.len() + 2 <= 24);
        }
        assert_eq!(used.len(), allowed.len(), "every configured word is reachable");
    }

    #[test]
    fn captions_are_a_function_of_the_template() {
        let mut seen = std::collections::HashMap::new();
        for t in Template::all() {
            let r = t.render("x");
            assert!(seen.insert((r.texts.clone(), r.causes.clone()), t).is_none(), "two templates share a description");
        }
    }

    #[test]
    fn template_lookup_oracle_solves_the_noiseless_corpus() {
        let c = synth_corpus(&SynthConfig { noise_std: 0.0, seed: 7, ..SynthConfig::default() }).unwrap();
        let gallery = Template::all();
        // nearest template by squared distance between the first frame and each noise-free code
        let predict = |clip: &FeatureClip| -> Template {
            let frame = &clip.data[..clip.dim];
            let dist = |t: &Template| -> f32 { t.signal(clip.dim).iter().zip(frame).map(|(a, b)| (a - b) * (a - b)).sum() };
            *gallery.iter().min_by(|a, b| dist(a).total_cmp(&dist(b))).unwrap()
        };
        let refs: Vec<Vec<String>> = c.samples.iter().map(|s| s.description.tokens.clone()).collect();
        let hyps: Vec<Vec<String>> = c
            .clips
            .iter()
            .map(|clip| {
                let raw = predict(clip).render("h");
                crate::textproc::normalize(&format!("{}; {}", raw.texts.unwrap(), raw.causes.unwrap()))
            })
            .collect();
        let idf = IdfTable::build(&refs).unwrap();
        let score = cider_corpus(&hyps, &refs, &idf).unwrap();
        assert!(score >= 9.5, "oracle CIDEr-D {score}");
        assert_eq!(MAX_ORDER, 4);
    }

    #[test]
    fn perturbation_is_seeded_and_scaled() {
        let c = small(2, 0.0);
        let a = perturb(&c.clips, 0.5, 9).unwrap();
        assert_eq!(a, perturb(&c.clips, 0.5, 9).unwrap());
        assert_eq!(perturb(&c.clips, 0.0, 9).unwrap(), c.clips);
        let diffs: Vec<f64> =
            a.iter().zip(&c.clips).flat_map(|(x, y)| x.data.iter().zip(&y.data).map(|(p, q)| f64::from(p - q))).collect();
        let var = diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64;
        assert!((var.sqrt() - 0.5).abs() < 0.03, "empirical std {}", var.sqrt());
        assert!(perturb(&c.clips, -1.0, 0).is_err());
    }

    #[test]
    fn config_validation() {
        let base = SynthConfig::default();
        assert!(SynthConfig { n_clips: 0, ..base.clone() }.validate().is_err());
        assert!(SynthConfig { noise_std: -0.1, ..base.clone() }.validate().is_err());
        assert!(SynthConfig { dim: 8, ..base.clone() }.validate().is_err());
        assert!(base.validate().is_ok());
    }
}
