//! Label-wise matching scores and the detection score functions built on them.
//!
//! A [`ScoreVector`] holds the cosine similarities between one image embedding and the
//! `K + L` text embeddings: the `K` ID labels first, then the `L` envisioned outlier
//! labels. Every score function reads the two blocks separately; larger scores mean
//! "more ID-like" throughout, so a sample is accepted as ID iff `score >= lambda`.

use serde::{Deserialize, Serialize};

use crate::bundle::EmbeddingTable;
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};
use crate::similarity::{cosine_similarity_named, widen};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T> {
    s: Vec<T>,
    k: usize,
}

impl<T: Scalar> ScoreVector<T> {
    /// `s` holds the ID block (`k` entries) followed by the outlier block.
    pub fn new(s: Vec<T>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("score vector needs at least one ID entry".into()));
        }
        if k > s.len() {
            return Err(Error::InvalidConfig(format!(
                "ID block size {k} exceeds score vector length {}",
                s.len()
            )));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("score vector entries must be finite".into()));
        }
        Ok(Self { s, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.s.len() - self.k
    }

    pub fn as_slice(&self) -> &[T] {
        &self.s
    }

    pub fn id_block(&self) -> &[T] {
        &self.s[..self.k]
    }

    pub fn outlier_block(&self) -> &[T] {
        &self.s[self.k..]
    }

    fn require_outliers(&self, what: &str) -> Result<()> {
        if self.l() == 0 {
            return Err(Error::InvalidConfig(format!(
                "{what} score needs at least one outlier label"
            )));
        }
        Ok(())
    }
}

/// Cosine similarity of `image` against every row of `text`; rows `0..k` are the ID labels.
pub fn match_scores<T: Scalar>(
    image: &[f32],
    image_id: &str,
    text: &EmbeddingTable,
    k: usize,
) -> Result<ScoreVector<T>> {
    if image.len() != text.dim() {
        return Err(Error::DimensionMismatch {
            expected: text.dim(),
            found: image.len(),
        });
    }
    let image: Vec<T> = widen(image);
    let s = text
        .rows()
        .map(|(meta, row)| cosine_similarity_named(&image, image_id, &widen::<T>(row), &meta.id))
        .collect::<Result<Vec<T>>>()?;
    ScoreVector::new(s, k)
}

fn max_of<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().fold(T::neg_infinity(), T::max)
}

/// Shifted exponentials `exp((s_j - max s) / tau)` and their sum.
fn shifted_exp_sum<T: Scalar>(xs: &[T], shift: T, tau: T) -> T {
    xs.iter().map(|&x| ((x - shift) / tau).exp()).sum()
}

fn log_sum_exp<T: Scalar>(xs: &[T], temperature: T) -> T {
    let m = max_of(xs);
    m / temperature + shifted_exp_sum(xs, m, temperature).ln()
}

/// Max ID-block and max outlier-block probabilities of the joint `K + L` softmax.
fn joint_softmax_maxima<T: Scalar>(v: &ScoreVector<T>, tau: T) -> (T, T) {
    let m = max_of(&v.s);
    let denom = shifted_exp_sum(&v.s, m, tau);
    let p = |x: T| ((x - m) / tau).exp() / denom;
    let id = p(max_of(v.id_block()));
    let out = if v.l() == 0 {
        T::zero()
    } else {
        p(max_of(v.outlier_block()))
    };
    (id, out)
}

/// Full joint softmax `exp(s_j / tau) / sum_m exp(s_m / tau)`.
pub fn softmax<T: Scalar>(v: &ScoreVector<T>, tau: T) -> Vec<T> {
    let m = max_of(&v.s);
    let denom = shifted_exp_sum(&v.s, m, tau);
    v.s.iter().map(|&x| ((x - m) / tau).exp() / denom).collect()
}

/// Max ID probability minus `beta` times the max outlier probability, both taken from the
/// joint softmax. With no outliers the penalty is zero and this is plain MSP over `K`.
pub fn score_eoe<T: Scalar>(v: &ScoreVector<T>, beta: T, tau: T) -> T {
    let (id, out) = joint_softmax_maxima(v, tau);
    id - beta * out
}

/// Max ID probability of the joint softmax.
pub fn score_msp<T: Scalar>(v: &ScoreVector<T>, tau: T) -> T {
    joint_softmax_maxima(v, tau).0
}

/// `1/K` when some outlier label beats every ID label, otherwise MSP over the ID block alone.
pub fn score_max<T: Scalar>(v: &ScoreVector<T>, tau: T) -> Result<T> {
    v.require_outliers("MAX")?;
    let id_max = max_of(v.id_block());
    if id_max < max_of(v.outlier_block()) {
        return Ok(T::one() / lit(v.k as f64));
    }
    let denom = shifted_exp_sum(v.id_block(), id_max, tau);
    Ok(T::one() / denom)
}

/// Difference of block-wise free energies, `T*lse(ID/T) - T*lse(outlier/T)`.
///
/// The default orientation grows with ID-likeness. `literal_sign` flips it to the leading
/// minus sign of the originally published formula.
pub fn score_energy<T: Scalar>(v: &ScoreVector<T>, temperature: T, literal_sign: bool) -> Result<T> {
    v.require_outliers("energy")?;
    let a = temperature * log_sum_exp(v.id_block(), temperature);
    let b = temperature * log_sum_exp(v.outlier_block(), temperature);
    let diff = a - b;
    Ok(if literal_sign { -diff } else { diff })
}

pub fn score_maxlogit<T: Scalar>(v: &ScoreVector<T>) -> Result<T> {
    v.require_outliers("MaxLogit")?;
    Ok(max_of(v.id_block()) - max_of(v.outlier_block()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreFunction {
    Eoe,
    Msp,
    Max,
    Energy,
    #[serde(alias = "max_logit")]
    Maxlogit,
}

impl std::str::FromStr for ScoreFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "eoe" => Ok(Self::Eoe),
            "msp" => Ok(Self::Msp),
            "max" => Ok(Self::Max),
            "energy" => Ok(Self::Energy),
            "maxlogit" => Ok(Self::Maxlogit),
            other => Err(Error::InvalidConfig(format!("unknown score function {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub function: ScoreFunction,
    pub beta: f64,
    pub softmax_temperature: f64,
    pub energy_temperature: f64,
    pub energy_literal_sign: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            function: ScoreFunction::Eoe,
            beta: 0.25,
            softmax_temperature: 1.0,
            energy_temperature: 1.0,
            energy_literal_sign: false,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be >= 0, got {}", self.beta)));
        }
        for (name, t) in [
            ("softmax_temperature", self.softmax_temperature),
            ("energy_temperature", self.energy_temperature),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {t}")));
            }
        }
        Ok(())
    }

    /// Whether the selected function is undefined without outlier labels.
    pub fn requires_outliers(&self) -> bool {
        matches!(
            self.function,
            ScoreFunction::Max | ScoreFunction::Energy | ScoreFunction::Maxlogit
        )
    }

    pub fn score<T: Scalar>(&self, v: &ScoreVector<T>) -> Result<T> {
        let tau = lit::<T>(self.softmax_temperature);
        match self.function {
            ScoreFunction::Eoe => Ok(score_eoe(v, lit(self.beta), tau)),
            ScoreFunction::Msp => Ok(score_msp(v, tau)),
            ScoreFunction::Max => score_max(v, tau),
            ScoreFunction::Energy => {
                score_energy(v, lit(self.energy_temperature), self.energy_literal_sign)
            }
            ScoreFunction::Maxlogit => score_maxlogit(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Id,
    Ood,
}

/// ID iff `score >= lambda`.
pub fn detect<T: PartialOrd>(score: T, lambda: T) -> Decision {
    if score >= lambda {
        Decision::Id
    } else {
        Decision::Ood
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::RowMeta;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sv(s: &[f64], k: usize) -> ScoreVector<f64> {
        ScoreVector::new(s.to_vec(), k).unwrap()
    }

    /// Softmax written out term by term with no max shift.
    fn naive_softmax(s: &[f64]) -> Vec<f64> {
        let z: f64 = s.iter().map(|x| x.exp()).sum();
        s.iter().map(|x| x.exp() / z).collect()
    }

    #[test]
    fn eoe_examples() {
        assert_eq!(score_eoe(&sv(&[0.3], 1), 0.25, 1.0), 1.0);
        assert_eq!(score_eoe(&sv(&[0.3, 0.3], 1), 0.25, 1.0), 0.375);

        let p = naive_softmax(&[2.0, 1.0, 0.0, 1.0]);
        let oracle = p[0].max(p[1]) - 0.25 * p[2].max(p[3]);
        assert_abs_diff_eq!(oracle, 0.48529, epsilon = 1e-5);
        assert_abs_diff_eq!(score_eoe(&sv(&[2.0, 1.0, 0.0, 1.0], 2), 0.25, 1.0), oracle, epsilon = 1e-12);
    }

    #[test]
    fn msp_examples() {
        assert_eq!(score_msp(&sv(&[0.7, 0.7], 1), 1.0), 0.5);
        let p = naive_softmax(&[2.0, 1.0, 0.0, 1.0]);
        assert_abs_diff_eq!(p[0], 0.53445, epsilon = 1e-5);
        assert_abs_diff_eq!(score_msp(&sv(&[2.0, 1.0, 0.0, 1.0], 2), 1.0), p[0], epsilon = 1e-12);
    }

    #[test]
    fn max_examples() {
        assert_eq!(score_max(&sv(&[0.0, 0.0, 1.0], 2), 1.0).unwrap(), 0.5);
        assert_eq!(score_max(&sv(&[0.4, 0.4], 1), 1.0).unwrap(), 1.0);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(score_max(&sv(&[1.0, 0.0, 0.0], 2), 1.0).unwrap(), e / (e + 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(e / (e + 1.0), 0.73106, epsilon = 1e-5);
        assert!(matches!(score_max(&sv(&[1.0], 1), 1.0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn energy_examples() {
        assert_eq!(score_energy(&sv(&[0.0, 0.0], 1), 1.0, false).unwrap(), 0.0);
        assert_eq!(score_energy(&sv(&[0.0, 0.0], 1), 1.0, true).unwrap(), 0.0);
        assert_abs_diff_eq!(score_energy(&sv(&[1.0, 0.0], 1), 1.0, false).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(score_energy(&sv(&[1.0, 0.0], 1), 1.0, true).unwrap(), -1.0, epsilon = 1e-15);

        // lse over each block by direct evaluation
        let s: [f64; 5] = [0.2, -0.4, 0.9, 0.1, 0.5];
        let t = 0.5f64;
        let a = t * (s[..2].iter().map(|x| (x / t).exp()).sum::<f64>()).ln();
        let b = t * (s[2..].iter().map(|x| (x / t).exp()).sum::<f64>()).ln();
        assert_abs_diff_eq!(score_energy(&sv(&s, 2), t, false).unwrap(), a - b, epsilon = 1e-12);
        assert!(score_energy(&sv(&[1.0], 1), 1.0, false).is_err());
    }

    #[test]
    fn maxlogit_examples() {
        assert_eq!(score_maxlogit(&sv(&[1.0, 0.0], 1)).unwrap(), 1.0);
        assert_abs_diff_eq!(score_maxlogit(&sv(&[0.3, 0.7, 0.6], 2)).unwrap(), 0.1, epsilon = 1e-12);
        assert!(score_maxlogit(&sv(&[1.0], 1)).is_err());
    }

    #[test]
    fn match_scores_on_basis() {
        let rows = [[1.0f32, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let text = EmbeddingTable::from_rows(
            3,
            rows.iter()
                .enumerate()
                .map(|(i, r)| (RowMeta::new(format!("e{i}"), None), *r)),
        )
        .unwrap();
        let v: ScoreVector<f64> = match_scores(&[1.0, 0.0, 0.0], "x", &text, 2).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!((v.k(), v.l()), (2, 1));
        let scaled: ScoreVector<f64> = match_scores(&[3.5, 0.0, 0.0], "x", &text, 2).unwrap();
        assert_eq!(scaled, v);

        assert!(matches!(
            match_scores::<f64>(&[1.0, 0.0], "x", &text, 2),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            match_scores::<f64>(&[0.0, 0.0, 0.0], "img", &text, 2),
            Err(Error::ZeroNorm { ref id }) if id == "img"
        ));
    }

    #[test]
    fn detect_is_inclusive() {
        assert_eq!(detect(0.5, 0.5), Decision::Id);
        assert_eq!(detect(0.4999, 0.5), Decision::Ood);
    }

    #[test]
    fn score_vector_rejects_bad_blocks() {
        assert!(ScoreVector::new(vec![0.1f64], 0).is_err());
        assert!(ScoreVector::new(vec![0.1f64], 2).is_err());
        assert!(ScoreVector::new(vec![f64::NAN], 1).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let v = ScoreVector::new(vec![2.0f32, 1.0, 0.0, 1.0], 2).unwrap();
        assert!((score_eoe(&v, 0.25, 1.0) - 0.48529).abs() < 1e-5);
    }

    #[test]
    fn tiny_temperature_stays_finite() {
        let v = sv(&[1.0, -1.0, 1.0, -1.0], 2);
        for f in [
            ScoreFunction::Eoe,
            ScoreFunction::Msp,
            ScoreFunction::Max,
            ScoreFunction::Energy,
            ScoreFunction::Maxlogit,
        ] {
            let cfg = ScoreConfig {
                function: f,
                softmax_temperature: 1e-3,
                energy_temperature: 1e-3,
                ..ScoreConfig::default()
            };
            assert!(cfg.score(&v).unwrap().is_finite(), "{f:?}");
        }
    }

    #[test]
    fn config_defaults_and_parsing() {
        let cfg: ScoreConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ScoreConfig::default());
        assert_eq!(cfg.beta, 0.25);
        assert_eq!("MaxLogit".parse::<ScoreFunction>().unwrap(), ScoreFunction::Maxlogit);
        assert!("mcm".parse::<ScoreFunction>().is_err());
        assert!(ScoreConfig { beta: -1.0, ..cfg }.validate().is_err());
        assert!(ScoreConfig { softmax_temperature: 0.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn raising_a_minor_outlier_can_lift_a_negative_score() {
        // (a - beta*b) / D with a - beta*b < 0 moves toward zero as D grows
        let before = score_eoe(&sv(&[0.0, 2.0, 0.0], 1), 1.0, 1.0);
        let after = score_eoe(&sv(&[0.0, 2.0, 1.0], 1), 1.0, 1.0);
        assert!(before < 0.0);
        assert!(after > before);
    }

    proptest! {
        #[test]
        fn detect_matches_threshold(score in -10.0f64..10.0, lambda in -10.0f64..10.0) {
            prop_assert_eq!(detect(score, lambda) == Decision::Id, score >= lambda);
        }

        #[test]
        fn energy_sign_identity(s in prop::collection::vec(-1.0f64..1.0, 2..12), t in 0.05f64..5.0) {
            let v = sv(&s, 1);
            prop_assert_eq!(score_energy(&v, t, false).unwrap(), -score_energy(&v, t, true).unwrap());
        }

        #[test]
        fn block_permutation_invariance(
            id in prop::collection::vec(-1.0f64..1.0, 1..8),
            out in prop::collection::vec(-1.0f64..1.0, 1..8),
            seed in any::<u64>(),
        ) {
            let k = id.len();
            let mut id2 = id.clone();
            let mut out2 = out.clone();
            id2.rotate_left((seed as usize) % k);
            out2.reverse();
            let a = sv(&[id.clone(), out.clone()].concat(), k);
            let b = sv(&[id2, out2].concat(), k);
            for f in [ScoreFunction::Eoe, ScoreFunction::Msp, ScoreFunction::Max, ScoreFunction::Energy, ScoreFunction::Maxlogit] {
                let cfg = ScoreConfig { function: f, ..ScoreConfig::default() };
                prop_assert!((cfg.score(&a).unwrap() - cfg.score(&b).unwrap()).abs() <= 1e-12);
            }
        }

        #[test]
        fn raising_the_top_outlier_never_helps(
            s in prop::collection::vec(-5.0f64..5.0, 2..16),
            k_frac in 0.0f64..1.0,
            beta in 0.0f64..2.0,
            delta in 1e-3f64..3.0,
        ) {
            let k = 1 + ((s.len() - 1) as f64 * k_frac) as usize % (s.len() - 1);
            let top = k + (0..s.len() - k).max_by(|&a, &b| s[k + a].total_cmp(&s[k + b])).unwrap();
            let mut raised = s.clone();
            raised[top] += delta;
            prop_assert!(score_eoe(&sv(&raised, k), beta, 1.0) <= score_eoe(&sv(&s, k), beta, 1.0) + 1e-12);
        }

        #[test]
        fn raising_any_outlier_never_helps_a_non_negative_score(
            s in prop::collection::vec(-5.0f64..5.0, 2..16),
            k_frac in 0.0f64..1.0,
            pick in any::<usize>(),
            beta in 0.0f64..2.0,
            delta in 1e-3f64..3.0,
        ) {
            let k = 1 + ((s.len() - 1) as f64 * k_frac) as usize % (s.len() - 1);
            let before = score_eoe(&sv(&s, k), beta, 1.0);
            prop_assume!(before >= 0.0);
            let mut raised = s.clone();
            raised[k + pick % (s.len() - k)] += delta;
            prop_assert!(score_eoe(&sv(&raised, k), beta, 1.0) <= before + 1e-12);
        }
    }
}
