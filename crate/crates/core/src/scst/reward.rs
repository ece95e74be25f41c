use super::decode::DecodeOutput;
use super::ScstError;
use crate::metrics::{cider_d, IdfTable, CIDER_SIGMA};
use crate::textproc::{Caption, Vocab};
use crate::Scalar;

/// Per-token rewards of one rollout: the sentence-level score difference on every unmasked position.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector {
    pub r: Vec<f64>,
    pub baseline_score: f64,
    pub sample_score: f64,
}

impl RewardVector {
    /// `sample_score − baseline_score`
    pub fn advantage(&self) -> f64 {
        self.sample_score - self.baseline_score
    }

    /// Rewards in the model's scalar type.
    pub fn as_scalars<T: Scalar>(&self) -> Vec<T> {
        self.r.iter().map(|&x| T::of(x)).collect()
    }
}

/// Scores both sequences' words against `reference` with CIDEr-D and broadcasts the
/// difference over the sample's mask.
pub fn compute_rewards<T: Scalar>(
    sample: &DecodeOutput<T>,
    greedy: &DecodeOutput<T>,
    reference: &Caption,
    vocab: &Vocab,
    idf: &IdfTable,
) -> RewardVector {
    let sample_score = cider_d(&sample.tokens(vocab), &reference.tokens, idf, CIDER_SIGMA);
    let baseline_score = cider_d(&greedy.tokens(vocab), &reference.tokens, idf, CIDER_SIGMA);
    let diff = sample_score - baseline_score;
    let r = sample.mask.iter().map(|&m| if m != 0 { diff } else { 0.0 }).collect();
    RewardVector { r, baseline_score, sample_score }
}

/// `L = −(1/N) Σ r_i · logp_i · m_i` with `N = Σ m_i`, and `∂L/∂logp_i = −r_i · m_i / N`.
pub fn scst_loss<T: Scalar>(logp: &[T], r: &[T], mask: &[u8]) -> Result<(T, Vec<T>), ScstError> {
    if logp.len() != r.len() || logp.len() != mask.len() {
        return Err(ScstError::LengthMismatch(format!(
            "logp {}, rewards {}, mask {}",
            logp.len(),
            r.len(),
            mask.len()
        )));
    }
    let n = mask.iter().filter(|&&m| m != 0).count();
    if n == 0 {
        return Err(ScstError::AllMasked);
    }
    let n = T::from_usize(n).expect("count fits");
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(logp.len());
    for ((&lp, &ri), &m) in logp.iter().zip(r).zip(mask) {
        if m != 0 {
            total += ri * lp;
            grad.push(-ri / n);
        } else {
            grad.push(T::zero());
        }
    }
    Ok((-(total / n), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::{Role, BOS, EOS};
    use proptest::prelude::*;

    #[test]
    fn unit_value() {
        let (loss, grad) = scst_loss(&[-1.0, -2.0, -3.0], &[0.5, 0.5, 0.5], &[1, 1, 0]).unwrap();
        assert_eq!(loss, 0.75);
        assert_eq!(grad, vec![-0.25, -0.25, 0.0]);
    }

    #[test]
    fn zero_rewards_and_degenerate_masks() {
        let (loss, grad) = scst_loss(&[-1.0, -2.0], &[0.0, 0.0], &[1, 1]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
        assert_eq!(scst_loss(&[-1.0f64; 3], &[1.0; 3], &[0, 0, 0]), Err(ScstError::AllMasked));
        assert!(matches!(scst_loss(&[-1.0f64; 3], &[1.0; 2], &[1, 1, 1]), Err(ScstError::LengthMismatch(_))));
    }

    fn fixture() -> (Vocab, IdfTable, Caption) {
        let caps = [Caption::new("a car brakes", Role::Description), Caption::new("a truck turns", Role::Description)];
        let vocab = Vocab::build(&caps, 1);
        let refs = vec![vec!["a", "car", "brakes"], vec!["a", "truck", "turns"]];
        let idf = IdfTable::build(&refs).unwrap();
        (vocab, idf, Caption::new("a car brakes", Role::Description))
    }

    fn seq(vocab: &Vocab, words: &[&str], pad: usize) -> DecodeOutput<f64> {
        let mut ids = vec![BOS];
        ids.extend(words.iter().map(|w| vocab.id(w).unwrap()));
        ids.push(EOS);
        let n = ids.len();
        ids.extend(std::iter::repeat_n(0, pad));
        let mut mask = vec![1u8; n];
        mask.resize(ids.len(), 0);
        DecodeOutput { logp: vec![-0.5; ids.len()], ids, mask }
    }

    #[test]
    fn identical_rollouts_earn_nothing() {
        let (vocab, idf, reference) = fixture();
        let s = seq(&vocab, &["a", "truck", "brakes"], 1);
        let r = compute_rewards(&s, &s.clone(), &reference, &vocab, &idf);
        assert!(r.r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rewards_follow_the_mask_and_sign() {
        let (vocab, idf, reference) = fixture();
        let good = seq(&vocab, &["a", "car", "brakes"], 2);
        let bad = seq(&vocab, &["a", "truck", "turns"], 0);
        let up = compute_rewards(&good, &bad, &reference, &vocab, &idf);
        assert!(up.advantage() > 0.0);
        assert_eq!(up.r.len(), good.len());
        assert!(up.r[..5].iter().all(|&x| x == up.advantage()));
        assert_eq!(&up.r[5..], &[0.0, 0.0]);
        let down = compute_rewards(&bad, &good, &reference, &vocab, &idf);
        assert!(down.r.iter().all(|&x| x == -up.advantage()));
        // exact match of a 3-word caption: orders 1..3 are perfect, order 4 has no n-grams
        assert!((up.sample_score - 7.5).abs() < 1e-9);
    }

    #[test]
    fn broadcast_arithmetic() {
        let r = RewardVector { r: vec![], baseline_score: 0.5, sample_score: 0.8 };
        let mask = [1u8, 1, 1, 0];
        let v: Vec<f64> = mask.iter().map(|&m| if m != 0 { r.advantage() } else { 0.0 }).collect();
        for (a, b) in v.iter().zip([0.3, 0.3, 0.3, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            logp in prop::collection::vec(-5.0f64..0.0, 1..10),
            reward in -3.0f64..3.0,
            cut in 0usize..10,
        ) {
            let n = logp.len();
            let mask: Vec<u8> = (0..n).map(|i| u8::from(i <= cut.min(n - 1))).collect();
            let r = vec![reward; n];
            let (_, grad) = scst_loss(&logp, &r, &mask).unwrap();
            let h = 1e-3;
            for i in 0..n {
                let mut up = logp.clone();
                up[i] += h;
                let mut dn = logp.clone();
                dn[i] -= h;
                let fd = (scst_loss(&up, &r, &mask).unwrap().0 - scst_loss(&dn, &r, &mask).unwrap().0) / (2.0 * h);
                prop_assert!((fd - grad[i]).abs() < 1e-10, "{} vs {}", fd, grad[i]);
            }
        }

        #[test]
        fn scale_equivariance(logp in prop::collection::vec(-5.0f64..0.0, 1..8), reward in -2.0f64..2.0, c in 0.1f64..10.0) {
            let mask = vec![1u8; logp.len()];
            let r = vec![reward; logp.len()];
            let rc: Vec<f64> = r.iter().map(|x| x * c).collect();
            let (l1, g1) = scst_loss(&logp, &r, &mask).unwrap();
            let (l2, g2) = scst_loss(&logp, &rc, &mask).unwrap();
            prop_assert!((l2 - c * l1).abs() <= 1e-12 * (1.0 + l2.abs()));
            for (a, b) in g1.iter().zip(&g2) {
                prop_assert!((b - c * a).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
