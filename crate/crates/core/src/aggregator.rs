//! Tile-to-image probability aggregation and multi-scale combination.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BOUNDARY: f64 = 0.5;

/// Float slack used when comparing objective values that are equal in exact
/// arithmetic.
const OBJECTIVE_EPS: f64 = 1e-12;

/// Tile probabilities for one image at one scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    pub image_id: String,
    pub scale_id: u32,
    probs: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(image_id: impl Into<String>, scale_id: u32, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput("probability vector"));
        }
        if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::ProbabilityRange(p));
        }
        Ok(Self {
            image_id: image_id.into(),
            scale_id,
            probs,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Average,
    Majority,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Average => "average",
            Method::Majority => "majority",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "average" => Ok(Method::Average),
            "majority" => Ok(Method::Majority),
            other => Err(Error::Config(format!(
                "unknown aggregation method {other:?} (expected average or majority)"
            ))),
        }
    }
}

pub fn average_probability(pv: &ProbabilityVector) -> f64 {
    pv.probs.iter().sum::<f64>() / pv.probs.len() as f64
}

/// Fraction of tiles at or above the decision boundary.
pub fn majority_vote(pv: &ProbabilityVector) -> f64 {
    let votes = pv
        .probs
        .iter()
        .filter(|&&p| classify(p, DEFAULT_BOUNDARY))
        .count();
    votes as f64 / pv.probs.len() as f64
}

pub fn aggregate(pv: &ProbabilityVector, method: Method) -> f64 {
    match method {
        Method::Average => average_probability(pv),
        Method::Majority => majority_vote(pv),
    }
}

/// Attributed iff `score >= boundary`; an exact tie counts as attributed.
pub fn classify(score: f64, boundary: f64) -> bool {
    score >= boundary
}

/// Population variance of the tile probabilities.
pub fn tile_variance(pv: &ProbabilityVector) -> f64 {
    let mean = average_probability(pv);
    pv.probs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / pv.probs.len() as f64
}

pub fn mean_variance(variances: &[f64]) -> Result<f64> {
    if variances.is_empty() {
        return Err(Error::EmptyInput("variance list"));
    }
    Ok(variances.iter().sum::<f64>() / variances.len() as f64)
}

/// Image-level outcome at one or more scales.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationResult {
    pub image_id: String,
    /// `(scale_id, score)` per scale.
    pub scale_scores: Vec<(u32, f64)>,
    pub method: Method,
    pub final_score: f64,
    pub decision: bool,
    /// Mean of the per-scale tile variances.
    pub tile_variance: f64,
}

/// Aggregates each scale's vector and combines them with `weights`
/// (a single scale needs no weights).
pub fn aggregate_image(
    vectors: &[ProbabilityVector],
    method: Method,
    weights: Option<&WeightVector>,
    boundary: f64,
) -> Result<AggregationResult> {
    let first = vectors.first().ok_or(Error::EmptyInput("scale list"))?;
    let scale_scores: Vec<(u32, f64)> = vectors
        .iter()
        .map(|pv| (pv.scale_id, aggregate(pv, method)))
        .collect();
    let scores: Vec<f64> = scale_scores.iter().map(|s| s.1).collect();
    let final_score = match weights {
        Some(w) => combine_scales(&scores, w)?,
        None if scores.len() == 1 => scores[0],
        None => combine_scales(&scores, &WeightVector::uniform(scores.len())?)?,
    };
    let variances: Vec<f64> = vectors.iter().map(tile_variance).collect();
    Ok(AggregationResult {
        image_id: first.image_id.clone(),
        scale_scores,
        method,
        final_score,
        decision: classify(final_score, boundary),
        tile_variance: mean_variance(&variances)?,
    })
}

/// One image's ground truth and final score.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScore {
    pub image_id: String,
    pub label: bool,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    /// `(image_id, predicted probability)` of each misclassified image.
    pub misclassified: Vec<(String, f64)>,
    /// Mean `|boundary - ŷ|` over misclassified images; 0 when none are.
    pub error: f64,
    pub accuracy: f64,
}

impl ErrorReport {
    pub fn n_misclassified(&self) -> usize {
        self.misclassified.len()
    }
}

pub fn classification_error(results: &[LabeledScore], boundary: f64) -> Result<ErrorReport> {
    if results.is_empty() {
        return Err(Error::EmptyInput("result list"));
    }
    let misclassified: Vec<(String, f64)> = results
        .iter()
        .filter(|r| classify(r.score, boundary) != r.label)
        .map(|r| (r.image_id.clone(), r.score))
        .collect();
    let error = if misclassified.is_empty() {
        0.0
    } else {
        misclassified
            .iter()
            .map(|(_, y)| (boundary - y).abs())
            .sum::<f64>()
            / misclassified.len() as f64
    };
    let accuracy = 1.0 - misclassified.len() as f64 / results.len() as f64;
    Ok(ErrorReport {
        misclassified,
        error,
        accuracy,
    })
}

/// Nonnegative per-scale weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("no weights".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidWeights(format!(
                "negative or non-finite weight in {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for WeightVector {
    /// Semicolon-separated, e.g. `0.5;0.5`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join(";"))
    }
}

impl FromStr for WeightVector {
    type Err = Error;

    /// Accepts `;` or `,` separators.
    fn from_str(s: &str) -> Result<Self> {
        let weights = s
            .split([';', ','])
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidWeights(format!("{p:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights)
    }
}

/// `Σ_k w_k · score_k`.
pub fn combine_scales(scores: &[f64], weights: &WeightVector) -> Result<f64> {
    if scores.len() != weights.len() {
        return Err(Error::WeightMismatch {
            weights: weights.len(),
            scales: scores.len(),
        });
    }
    let combined: f64 = scores.iter().zip(&weights.0).map(|(s, w)| s * w).sum();
    Ok(combined.clamp(0.0, 1.0))
}

/// Per-scale image scores for one validation image.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleScores {
    pub image_id: String,
    pub label: bool,
    pub scores: Vec<f64>,
}

/// How one weight vector fares on the validation set.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightObjective {
    pub correct: usize,
    pub error: f64,
    /// Mean `|φ(x) - boundary|` over correctly classified images.
    pub margin: f64,
}

pub fn evaluate_weights(
    validation: &[ScaleScores],
    weights: &WeightVector,
    boundary: f64,
) -> Result<WeightObjective> {
    let mut correct = 0;
    let mut err_sum = 0.0;
    let mut margin_sum = 0.0;
    for img in validation {
        let phi = combine_scales(&img.scores, weights)?;
        if classify(phi, boundary) == img.label {
            correct += 1;
            margin_sum += (phi - boundary).abs();
        } else {
            err_sum += (boundary - phi).abs();
        }
    }
    let wrong = validation.len() - correct;
    Ok(WeightObjective {
        correct,
        error: if wrong == 0 {
            0.0
        } else {
            err_sum / wrong as f64
        },
        margin: if correct == 0 {
            0.0
        } else {
            margin_sum / correct as f64
        },
    })
}

/// Exhaustive search of the weight simplex at resolution `grid_step`.
///
/// Ranking: most correct decisions, then smallest error E, then largest
/// mean margin of the correct decisions, then closest to uniform weights,
/// then the earliest grid point in lexicographic order of weight numerators.
pub fn optimize_weights(
    validation: &[ScaleScores],
    grid_step: f64,
    boundary: f64,
) -> Result<WeightVector> {
    let first = validation
        .first()
        .ok_or(Error::EmptyInput("validation set"))?;
    let k = first.scores.len();
    if k == 0 {
        return Err(Error::EmptyInput("scale list"));
    }
    if let Some(bad) = validation.iter().find(|v| v.scores.len() != k) {
        return Err(Error::WeightMismatch {
            weights: k,
            scales: bad.scores.len(),
        });
    }
    if k == 1 {
        return WeightVector::new(vec![1.0]);
    }
    let steps = grid_resolution(grid_step)?;

    let mut best: Option<(WeightObjective, u64, Vec<usize>)> = None;
    let mut numerators = vec![0usize; k];
    let mut visit = |n: &[usize]| -> Result<()> {
        let w = numerators_to_weights(n, steps)?;
        let obj = evaluate_weights(validation, &w, boundary)?;
        let dist = uniform_distance(n, steps);
        let better = match &best {
            None => true,
            Some((b, bd, _)) => ranks_above(&obj, dist, b, *bd),
        };
        if better {
            best = Some((obj, dist, n.to_vec()));
        }
        Ok(())
    };
    for_each_composition(steps, &mut numerators, 0, &mut visit)?;
    let (_, _, n) = best.expect("simplex grid is nonempty");
    numerators_to_weights(&n, steps)
}

fn ranks_above(a: &WeightObjective, a_dist: u64, b: &WeightObjective, b_dist: u64) -> bool {
    if a.correct != b.correct {
        return a.correct > b.correct;
    }
    if (a.error - b.error).abs() > OBJECTIVE_EPS {
        return a.error < b.error;
    }
    if (a.margin - b.margin).abs() > OBJECTIVE_EPS {
        return a.margin > b.margin;
    }
    // equal distance keeps the earlier point
    a_dist < b_dist
}

/// Number of grid steps per unit weight; `1 / grid_step` must be integral.
pub fn grid_resolution(grid_step: f64) -> Result<usize> {
    let steps = (1.0 / grid_step).round();
    if !(grid_step > 0.0 && grid_step <= 1.0) || ((steps * grid_step) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights(format!(
            "grid step {grid_step} does not divide 1"
        )));
    }
    Ok(steps as usize)
}

fn numerators_to_weights(n: &[usize], steps: usize) -> Result<WeightVector> {
    WeightVector::new(n.iter().map(|&c| c as f64 / steps as f64).collect())
}

/// Squared distance to uniform, scaled by `(k · steps)²` to stay integral.
fn uniform_distance(n: &[usize], steps: usize) -> u64 {
    let k = n.len() as i64;
    n.iter()
        .map(|&c| {
            let d = k * c as i64 - steps as i64;
            (d * d) as u64
        })
        .sum()
}

/// Visits every `n` with `Σ n = steps`, lexicographically ascending.
fn for_each_composition(
    remaining: usize,
    n: &mut [usize],
    pos: usize,
    visit: &mut impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    if pos == n.len() - 1 {
        n[pos] = remaining;
        return visit(n);
    }
    for c in 0..=remaining {
        n[pos] = c;
        for_each_composition(remaining - c, n, pos + 1, visit)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(probs: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new("img", 1, probs.to_vec()).unwrap()
    }

    fn scored(label: bool, score: f64) -> LabeledScore {
        LabeledScore {
            image_id: format!("{label}-{score}"),
            label,
            score,
        }
    }

    #[test]
    fn average_examples() {
        assert!((average_probability(&pv(&[0.9, 0.8, 0.1])) - 0.6).abs() < 1e-15);
        assert_eq!(average_probability(&pv(&[0.37])), 0.37);
        assert_eq!(average_probability(&pv(&[0.5; 7])), 0.5);
    }

    #[test]
    fn majority_examples() {
        let v = majority_vote(&pv(&[0.9, 0.8, 0.1]));
        assert_eq!(v, 2.0 / 3.0);
        assert!(classify(v, DEFAULT_BOUNDARY));
        let tie = majority_vote(&pv(&[0.6, 0.4]));
        assert_eq!(tie, 0.5);
        assert!(classify(tie, DEFAULT_BOUNDARY));
        let p = pv(&[0.49, 0.49, 0.51]);
        assert_eq!(majority_vote(&p), 1.0 / 3.0);
        assert!(!classify(majority_vote(&p), DEFAULT_BOUNDARY));
        assert!((average_probability(&p) - 0.49666666666666665).abs() < 1e-12);
        assert!(!classify(average_probability(&p), DEFAULT_BOUNDARY));
    }

    #[test]
    fn empty_or_invalid_vector() {
        assert!(ProbabilityVector::new("a", 1, vec![]).is_err());
        assert!(ProbabilityVector::new("a", 1, vec![1.2]).is_err());
        assert!(ProbabilityVector::new("a", 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn classify_examples() {
        assert!(classify(0.85, DEFAULT_BOUNDARY));
        assert!(!classify(0.29, DEFAULT_BOUNDARY));
        assert!(classify(0.5, DEFAULT_BOUNDARY));
    }

    #[test]
    fn variance_examples() {
        assert_eq!(tile_variance(&pv(&[0.5, 0.5])), 0.0);
        assert_eq!(tile_variance(&pv(&[0.0, 1.0])), 0.25);
        assert_eq!(mean_variance(&[0.0, 0.25]).unwrap(), 0.125);
        assert!(mean_variance(&[]).is_err());
    }

    #[test]
    fn error_examples() {
        let r = classification_error(
            &[scored(false, 0.6), scored(false, 0.7), scored(true, 0.9)],
            0.5,
        )
        .unwrap();
        assert!((r.error - 0.15).abs() < 1e-15);
        assert_eq!(r.n_misclassified(), 2);
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-15);

        let r = classification_error(&[scored(true, 0.9), scored(false, 0.1)], 0.5).unwrap();
        assert_eq!((r.error, r.accuracy, r.n_misclassified()), (0.0, 1.0, 0));

        let r = classification_error(&[scored(true, 0.45)], 0.5).unwrap();
        assert!((r.error - 0.05).abs() < 1e-15);
        assert!(classification_error(&[], 0.5).is_err());
    }

    #[test]
    fn combine_examples() {
        let w = WeightVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(combine_scales(&[0.3, 0.9], &w).unwrap(), 0.3);
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert!((combine_scales(&[0.8, 0.4], &w).unwrap() - 0.6).abs() < 1e-15);
        let w = WeightVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!((combine_scales(&[0.7, 0.7, 0.7], &w).unwrap() - 0.7).abs() < 1e-15);
        assert!(matches!(
            combine_scales(&[0.1], &w),
            Err(Error::WeightMismatch {
                weights: 3,
                scales: 1
            })
        ));
    }

    #[test]
    fn weight_vector_validation_and_parsing() {
        assert!(WeightVector::new(vec![0.6, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.1, 1.1]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
        let w: WeightVector = "0.25;0.75".parse().unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
        assert_eq!(w.to_string(), "0.25;0.75");
        let w: WeightVector = "0.5,0.5".parse().unwrap();
        assert_eq!(w.len(), 2);
        assert!("a;b".parse::<WeightVector>().is_err());
    }

    #[test]
    fn aggregate_image_combines_scales() {
        let a = ProbabilityVector::new("x", 1, vec![0.8, 0.8]).unwrap();
        let b = ProbabilityVector::new("x", 2, vec![0.4, 0.4]).unwrap();
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let r = aggregate_image(&[a.clone(), b], Method::Average, Some(&w), 0.5).unwrap();
        assert!((r.final_score - 0.6).abs() < 1e-15);
        assert!(r.decision);
        assert_eq!(r.scale_scores.len(), 2);
        let single = aggregate_image(&[a], Method::Majority, None, 0.5).unwrap();
        assert_eq!(single.final_score, 1.0);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("majority".parse::<Method>().unwrap(), Method::Majority);
        assert_eq!(Method::Average.to_string(), "average");
        assert!("median".parse::<Method>().is_err());
    }

    #[test]
    fn identical_scales_give_uniform_weights() {
        let val: Vec<ScaleScores> = [(true, 0.8), (false, 0.3), (true, 0.45), (false, 0.55)]
            .iter()
            .enumerate()
            .map(|(i, &(label, s))| ScaleScores {
                image_id: i.to_string(),
                label,
                scores: vec![s, s],
            })
            .collect();
        let w = optimize_weights(&val, 0.01, 0.5).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn single_scale_gets_full_weight() {
        let val = vec![ScaleScores {
            image_id: "a".into(),
            label: true,
            scores: vec![0.7],
        }];
        assert_eq!(
            optimize_weights(&val, 0.01, 0.5).unwrap().as_slice(),
            &[1.0]
        );
        assert!(optimize_weights(&[], 0.01, 0.5).is_err());
    }

    #[test]
    fn grid_step_must_divide_one() {
        assert_eq!(grid_resolution(0.01).unwrap(), 100);
        assert_eq!(grid_resolution(0.25).unwrap(), 4);
        assert!(grid_resolution(0.3).is_err());
        assert!(grid_resolution(0.0).is_err());
    }
}
