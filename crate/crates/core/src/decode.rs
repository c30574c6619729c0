//! The linear prediction decode pipeline and exact small-instance oracles.
//!
//! Decoding runs entirely in diagnosis space: a predictor maps the syndrome
//! to a real diagnosis estimate, the pure error's own diagnosis reflects it
//! into the zero-error frame, and the class matrix's left inverse extracts
//! one weight per logical class. The argmax class, applied on top of the
//! pure error, is the recovery.
//!
//! For small codes the exact conditional-mean diagnosis and the exact
//! optimal class are computed by full coset enumeration; they anchor every
//! sampled decoder against ground truth.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use thiserror::Error;

use crate::codes::StabilizerCode;
use crate::diagnosis::DiagnosisScheme;
use crate::gf2::BitVec;
use crate::nn::{cnn_input, mlp_input, Network};
use crate::noise::NoiseModel;

/// Exact enumeration visits `4^k * 2^(n-k)` coset elements per syndrome;
/// past this size the oracles refuse.
pub const MAX_EXACT_N: usize = 13;

/// Class weights closer than this are a tie, resolved by class order.
/// Symmetric noise produces exactly tied coset masses; without the
/// tolerance, roundoff in the extraction would pick the winner instead of
/// the documented rule.
pub const TIE_EPS: f64 = 1e-12;

/// First class in `order` whose weight is within [`TIE_EPS`] of the max.
fn argmax_class(q: &[f64], order: &[usize]) -> usize {
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    *order.iter().find(|&&w| q[w] >= max - TIE_EPS).expect("some class attains the max")
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("exact enumeration is limited to n <= {max}, code has n = {n}")]
    TooLarge { n: usize, max: usize },
    #[error("syndrome has probability zero under the model")]
    UnreachableSyndrome,
}

// ==================== predictors ====================

/// Anything that estimates the diagnosis vector from a syndrome: a trained
/// network, the exact conditional-mean oracle, or a fixed vector.
pub trait Predictor: Sync {
    /// Real vector of length `|g|`.
    fn predict(&self, s: &BitVec) -> Vec<f64>;
}

/// Ignores the syndrome and always returns the same vector.
pub struct ConstantPredictor(pub Vec<f64>);

impl Predictor for ConstantPredictor {
    fn predict(&self, _s: &BitVec) -> Vec<f64> {
        self.0.clone()
    }
}

/// Adapts a closure; handy for tests and ad-hoc baselines.
pub struct FnPredictor<F: Fn(&BitVec) -> Vec<f64> + Sync>(pub F);

impl<F: Fn(&BitVec) -> Vec<f64> + Sync> Predictor for FnPredictor<F> {
    fn predict(&self, s: &BitVec) -> Vec<f64> {
        (self.0)(s)
    }
}

/// A trained network as a predictor. The input encoding follows the
/// network's input rank: rank 1 takes the flat syndrome, rank 4 the two
/// stacked check grids.
pub struct NetworkPredictor<'a> {
    pub net: &'a Network,
    pub code: &'a StabilizerCode,
}

impl Predictor for NetworkPredictor<'_> {
    fn predict(&self, s: &BitVec) -> Vec<f64> {
        let x = if self.net.input_shape().len() == 4 {
            cnn_input(self.code, s).expect("grid-input nets require a surface code")
        } else {
            mlp_input(s)
        };
        self.net.forward(&x).data().to_vec()
    }
}

/// The exact conditional-mean diagnosis as a predictor, memoized per
/// syndrome so repeated trials pay enumeration once.
pub struct ExactL2Predictor<'a> {
    code: &'a StabilizerCode,
    scheme: &'a DiagnosisScheme,
    model: &'a NoiseModel,
    cache: Mutex<HashMap<Vec<u64>, Vec<f64>>>,
}

impl<'a> ExactL2Predictor<'a> {
    pub fn new(
        code: &'a StabilizerCode,
        scheme: &'a DiagnosisScheme,
        model: &'a NoiseModel,
    ) -> Result<Self, DecodeError> {
        if code.n > MAX_EXACT_N {
            return Err(DecodeError::TooLarge { n: code.n, max: MAX_EXACT_N });
        }
        Ok(ExactL2Predictor { code, scheme, model, cache: Mutex::new(HashMap::new()) })
    }
}

impl Predictor for ExactL2Predictor<'_> {
    fn predict(&self, s: &BitVec) -> Vec<f64> {
        let key = s.words().to_vec();
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return v.clone();
        }
        let v = exact_l2_diagnosis(self.code, self.scheme, self.model, s)
            .expect("size checked at construction, syndromes come from sampled errors");
        self.cache.lock().unwrap().insert(key, v.clone());
        v
    }
}

// ==================== the pipeline ====================

/// Result of decoding one syndrome.
#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    /// `wG ⊕ t(s)`; always has syndrome `s`.
    pub recovery: BitVec,
    pub chosen_class: usize,
    /// Extracted class weights, one per class; sums to 1.
    pub q_p: Vec<f64>,
}

/// `(σ_δ(v))_i = δ_i + (−1)^{δ_i} v_i`: reflects the coordinates where the
/// pure error's diagnosis is set.
pub fn sigma_delta(delta: &BitVec, v: &[f64]) -> Vec<f64> {
    assert_eq!(delta.len(), v.len(), "reflection length mismatch");
    v.iter().enumerate().map(|(i, &x)| if delta.get(i) { 1.0 - x } else { x }).collect()
}

/// Decodes one syndrome: predict, reflect by the pure error's diagnosis,
/// extract class weights through `D`'s left inverse, pick the argmax class
/// (ties to the lowest class index), and assemble the recovery.
pub fn decode_one<P: Predictor + ?Sized>(
    code: &StabilizerCode,
    scheme: &DiagnosisScheme,
    predictor: &P,
    s: &BitVec,
) -> DecodeOutcome {
    let t_s = code.pure_error(s);
    let delta = scheme.diagnosis_of(&t_s);
    let g_p = predictor.predict(s);
    assert_eq!(g_p.len(), scheme.rows(), "predictor output length mismatch");
    let mut aug = sigma_delta(&delta, &g_p);
    aug.push(1.0);
    let q_p = scheme.d_inv.mul_vec(&aug);
    let chosen_class = argmax_class(&q_p, &scheme.class_order);
    let mut recovery = code.class_representative(chosen_class);
    recovery.xor_assign(&t_s);
    DecodeOutcome { recovery, chosen_class, q_p }
}

/// A recovery succeeds when it cancels the error up to a stabilizer:
/// `e ⊕ r` must have zero syndrome and trivial logical class.
pub fn is_success(code: &StabilizerCode, e: &BitVec, recovery: &BitVec) -> bool {
    let v = e.xored(recovery);
    if !code.syndrome(&v).is_zero() {
        return false;
    }
    code.logical_class(&v).expect("zero syndrome implies normalizer membership") == 0
}

/// A sampled failure rate with its 95% confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub failures: u64,
    pub trials: u64,
}

/// 95% Wilson score interval for `failures` out of `trials`. Stays valid
/// when the failure count is tiny, unlike the normal approximation.
pub fn wilson_interval(failures: u64, trials: u64) -> RateEstimate {
    const Z: f64 = 1.959963984540054;
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // The boundary counts have exact endpoints; don't let roundoff in
    // center ± half leak past them.
    RateEstimate {
        rate: p,
        ci_low: if failures == 0 { 0.0 } else { (center - half).max(0.0) },
        ci_high: if failures == trials { 1.0 } else { (center + half).min(1.0) },
        failures,
        trials,
    }
}

/// Samples `trials` errors, decodes each, and reports the failure rate.
/// Workers regenerate error `i` from `(seed, i)`, so the result does not
/// depend on how the trials are split across threads.
pub fn logical_error_rate<P: Predictor + ?Sized>(
    code: &StabilizerCode,
    scheme: &DiagnosisScheme,
    predictor: &P,
    model: &NoiseModel,
    trials: u64,
    seed: u64,
) -> RateEstimate {
    assert!(trials >= 1, "need at least one trial");
    let failures = (0..trials)
        .into_par_iter()
        .map(|i| {
            let e = model.sample_error(code.n, seed, i);
            let s = code.syndrome(&e);
            let out = decode_one(code, scheme, predictor, &s);
            u64::from(!is_success(code, &e, &out.recovery))
        })
        .sum();
    wilson_interval(failures, trials)
}

// ==================== exact oracles ====================

/// Unnormalized coset probability masses: `masses[w] = Pr[e ∈ t(s) ⊕ wG ⊕ S]`,
/// by Gray-coded walk over the full stabilizer span.
pub fn coset_masses(
    code: &StabilizerCode,
    model: &NoiseModel,
    s: &BitVec,
) -> Result<Vec<f64>, DecodeError> {
    if code.n > MAX_EXACT_N {
        return Err(DecodeError::TooLarge { n: code.n, max: MAX_EXACT_N });
    }
    let t_s = code.pure_error(s);
    let gens: Vec<&BitVec> = (0..code.h_c.rows()).map(|i| code.h_c.row(i)).collect();
    let mut masses = Vec::with_capacity(code.num_classes());
    for w in 0..code.num_classes() {
        let mut e = t_s.xored(&code.class_representative(w));
        let mut total = model.log_prob(&e).exp();
        for c in 1u64..1 << gens.len() {
            e.xor_assign(gens[c.trailing_zeros() as usize]);
            total += model.log_prob(&e).exp();
        }
        masses.push(total);
    }
    Ok(masses)
}

/// Exact conditional mean of the diagnosis given the syndrome:
/// `Σ_w q_s(w) · g_s(w)`. The diagnosis is constant on each coset because
/// the scheme's rows commute with every stabilizer.
pub fn exact_l2_diagnosis(
    code: &StabilizerCode,
    scheme: &DiagnosisScheme,
    model: &NoiseModel,
    s: &BitVec,
) -> Result<Vec<f64>, DecodeError> {
    let masses = coset_masses(code, model, s)?;
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return Err(DecodeError::UnreachableSyndrome);
    }
    let t_s = code.pure_error(s);
    let mut out = vec![0.0; scheme.rows()];
    for (w, mass) in masses.iter().enumerate() {
        let g_w = scheme.diagnosis_of(&t_s.xored(&code.class_representative(w)));
        let q = mass / total;
        for (i, o) in out.iter_mut().enumerate() {
            if g_w.get(i) {
                *o += q;
            }
        }
    }
    Ok(out)
}

/// The class with the largest exact coset probability; ties go to the
/// lowest class index.
pub fn exact_optimal_class(
    code: &StabilizerCode,
    model: &NoiseModel,
    s: &BitVec,
) -> Result<usize, DecodeError> {
    let masses = coset_masses(code, model, s)?;
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return Err(DecodeError::UnreachableSyndrome);
    }
    let q: Vec<f64> = masses.iter().map(|m| m / total).collect();
    let order: Vec<usize> = (0..q.len()).collect();
    Ok(argmax_class(&q, &order))
}

/// Exact failure rate of the optimal decoder: `1 − Σ_s max_w Q_w(s)`,
/// summed over every syndrome.
pub fn exact_optimal_rate(code: &StabilizerCode, model: &NoiseModel) -> Result<f64, DecodeError> {
    let bits = code.n - code.k;
    let mut captured = 0.0;
    for raw in 0u64..1 << bits {
        let mut s = BitVec::zeros(bits);
        for b in 0..bits {
            if raw >> b & 1 == 1 {
                s.set(b, true);
            }
        }
        let masses = coset_masses(code, model, &s)?;
        captured += masses.iter().cloned().fold(0.0, f64::max);
    }
    Ok(1.0 - captured)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{build_code, Family};
    use crate::diagnosis::{short_construction, uniform_construction};
    use crate::noise::CounterRng;

    fn all_d3_schemes() -> Vec<(StabilizerCode, DiagnosisScheme)> {
        let mut out = Vec::new();
        for family in
            [Family::SurfaceUnrotated, Family::SurfaceRotated, Family::Color666, Family::Color488]
        {
            let code = build_code(family, 3).unwrap();
            let uniform =
                DiagnosisScheme::new(&code, uniform_construction(&code).unwrap()).unwrap();
            let short = DiagnosisScheme::new(&code, short_construction(&code)).unwrap();
            out.push((code.clone(), uniform));
            out.push((code, short));
        }
        out
    }

    fn bits_to_reals(v: &BitVec) -> Vec<f64> {
        (0..v.len()).map(|i| f64::from(u8::from(v.get(i)))).collect()
    }

    /// Feeding the exact diagnosis of class w recovers the w indicator:
    /// extraction is just reading a column of D back through its inverse.
    #[test]
    fn exact_class_predictions_extract_indicators() {
        for (code, scheme) in all_d3_schemes() {
            let model = NoiseModel::depolarizing(0.2);
            for trial in 0..10 {
                let e = model.sample_error(code.n, 5, trial);
                let s = code.syndrome(&e);
                let t_s = code.pure_error(&s);
                for w0 in 0..code.num_classes() {
                    let g_w0 =
                        scheme.diagnosis_of(&t_s.xored(&code.class_representative(w0)));
                    let predictor = ConstantPredictor(bits_to_reals(&g_w0));
                    let out = decode_one(&code, &scheme, &predictor, &s);
                    assert_eq!(out.chosen_class, w0, "{} trial {trial}", code.family);
                    for (w, &q) in out.q_p.iter().enumerate() {
                        let want = f64::from(u8::from(w == w0));
                        assert!((q - want).abs() < 1e-9, "q = {:?}", out.q_p);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_syndrome_zero_prediction_picks_the_identity() {
        let code = build_code(Family::SurfaceRotated, 3).unwrap();
        let scheme = DiagnosisScheme::new(&code, short_construction(&code)).unwrap();
        let s = BitVec::zeros(code.n - code.k);
        let predictor = ConstantPredictor(vec![0.0; scheme.rows()]);
        let out = decode_one(&code, &scheme, &predictor, &s);
        assert_eq!(out.chosen_class, 0);
        assert!(out.recovery.is_zero());
    }

    #[test]
    fn sigma_delta_is_an_isometric_involution() {
        let mut rng = CounterRng::new(8, 0);
        for _ in 0..50 {
            let len = 9;
            let mut delta = BitVec::zeros(len);
            for i in 0..len {
                delta.set(i, rng.next_f64() < 0.5);
            }
            let u: Vec<f64> = (0..len).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
            let v: Vec<f64> = (0..len).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
            let su = sigma_delta(&delta, &u);
            let sv = sigma_delta(&delta, &v);
            let back = sigma_delta(&delta, &su);
            for i in 0..len {
                assert!((back[i] - u[i]).abs() < 1e-12);
            }
            let dist = |a: &[f64], b: &[f64]| -> f64 {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
            };
            assert!((dist(&su, &sv) - dist(&u, &v)).abs() < 1e-9);
        }
    }

    /// The augmented all-ones row of D pins the extracted weights to an
    /// affine combination: they sum to 1 for any prediction.
    #[test]
    fn extracted_class_weights_sum_to_one() {
        let mut rng = CounterRng::new(9, 0);
        for (code, scheme) in all_d3_schemes() {
            let model = NoiseModel::depolarizing(0.15);
            for trial in 0..20 {
                let e = model.sample_error(code.n, 6, trial);
                let s = code.syndrome(&e);
                let g: Vec<f64> = (0..scheme.rows()).map(|_| rng.next_f64()).collect();
                let out = decode_one(&code, &scheme, &ConstantPredictor(g), &s);
                let sum: f64 = out.q_p.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "{} sum {sum}", code.family);
            }
        }
    }

    #[test]
    fn success_is_membership_in_the_trivial_coset() {
        let code = build_code(Family::SurfaceUnrotated, 3).unwrap();
        let model = NoiseModel::depolarizing(0.2);
        for trial in 0..50 {
            let e = model.sample_error(code.n, 7, trial);
            assert!(is_success(&code, &e, &e));
            let r_stab = e.xored(code.h_c.row(trial as usize % code.h_c.rows()));
            assert!(is_success(&code, &e, &r_stab));
            let r_logical = e.xored(code.g.row(trial as usize % 2));
            assert!(!is_success(&code, &e, &r_logical));
        }
    }

    #[test]
    fn zero_noise_never_fails() {
        let code = build_code(Family::SurfaceRotated, 3).unwrap();
        let scheme = DiagnosisScheme::new(&code, short_construction(&code)).unwrap();
        let model = NoiseModel::bit_flip(0.0);
        let predictor = ConstantPredictor(vec![0.0; scheme.rows()]);
        let est = logical_error_rate(&code, &scheme, &predictor, &model, 1000, 1);
        assert_eq!(est.failures, 0);
        assert_eq!(est.rate, 0.0);
        assert_eq!(est.ci_low, 0.0);
        assert!(est.ci_high > 0.0 && est.ci_high < 0.01);
    }

    /// A predictor told the true error's diagnosis always wins: faithful
    /// schemes separate the classes exactly.
    #[test]
    fn perfect_knowledge_always_succeeds() {
        for (code, scheme) in all_d3_schemes() {
            let model = NoiseModel::depolarizing(0.15);
            for trial in 0..200 {
                let e = model.sample_error(code.n, 11, trial);
                let s = code.syndrome(&e);
                let predictor = ConstantPredictor(bits_to_reals(&scheme.diagnosis_of(&e)));
                let out = decode_one(&code, &scheme, &predictor, &s);
                assert!(is_success(&code, &e, &out.recovery), "{} trial {trial}", code.family);
            }
        }
    }

    #[test]
    fn exact_l2_at_zero_noise_is_the_zero_diagnosis() {
        let code = build_code(Family::SurfaceRotated, 3).unwrap();
        let scheme = DiagnosisScheme::new(&code, uniform_construction(&code).unwrap()).unwrap();
        let model = NoiseModel::bit_flip(0.0);
        let s0 = BitVec::zeros(code.n - code.k);
        let g = exact_l2_diagnosis(&code, &scheme, &model, &s0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));

        let mut s1 = BitVec::zeros(code.n - code.k);
        s1.set(0, true);
        assert!(matches!(
            exact_l2_diagnosis(&code, &scheme, &model, &s1),
            Err(DecodeError::UnreachableSyndrome)
        ));
    }

    #[test]
    fn exact_oracles_respect_the_size_bound() {
        let code = build_code(Family::SurfaceRotated, 5).unwrap();
        let s = BitVec::zeros(code.n - code.k);
        assert!(matches!(
            coset_masses(&code, &NoiseModel::bit_flip(0.1), &s),
            Err(DecodeError::TooLarge { n: 25, max: MAX_EXACT_N })
        ));
    }

    /// Each conditional-mean coordinate is a convex combination of the
    /// class diagnosis bits, so it lies inside their range.
    #[test]
    fn exact_l2_lies_in_the_column_hull() {
        let code = build_code(Family::SurfaceRotated, 3).unwrap();
        let scheme = DiagnosisScheme::new(&code, uniform_construction(&code).unwrap()).unwrap();
        let model = NoiseModel::depolarizing(0.15);
        for trial in 0..50 {
            let e = model.sample_error(code.n, 13, trial);
            let s = code.syndrome(&e);
            let t_s = code.pure_error(&s);
            let g = exact_l2_diagnosis(&code, &scheme, &model, &s).unwrap();
            let cols: Vec<Vec<f64>> = (0..code.num_classes())
                .map(|w| {
                    bits_to_reals(&scheme.diagnosis_of(&t_s.xored(&code.class_representative(w))))
                })
                .collect();
            for i in 0..g.len() {
                let lo = cols.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min);
                let hi = cols.iter().map(|c| c[i]).fold(f64::NEG_INFINITY, f64::max);
                assert!(g[i] >= lo - 1e-12 && g[i] <= hi + 1e-12);
            }
        }
    }

    /// Decoding the exact conditional mean reproduces the exact optimal
    /// class on every reachable syndrome, for both scheme constructions and
    /// both noise kinds.
    #[test]
    fn l2_decoding_matches_the_optimal_class_everywhere() {
        let code = build_code(Family::SurfaceRotated, 3).unwrap();
        let schemes = [
            DiagnosisScheme::new(&code, uniform_construction(&code).unwrap()).unwrap(),
            DiagnosisScheme::new(&code, short_construction(&code)).unwrap(),
        ];
        let models = [NoiseModel::bit_flip(0.1), NoiseModel::depolarizing(0.15)];
        for model in &models {
            for scheme in &schemes {
                let predictor = ExactL2Predictor::new(&code, scheme, model).unwrap();
                for raw in 0u64..1 << (code.n - code.k) {
                    let mut s = BitVec::zeros(code.n - code.k);
                    for b in 0..code.n - code.k {
                        if raw >> b & 1 == 1 {
                            s.set(b, true);
                        }
                    }
                    let opt = match exact_optimal_class(&code, model, &s) {
                        Ok(w) => w,
                        Err(DecodeError::UnreachableSyndrome) => continue,
                        Err(e) => panic!("{e}"),
                    };
                    let out = decode_one(&code, scheme, &predictor, &s);
                    assert_eq!(out.chosen_class, opt, "s = {raw:#b}");
                }
            }
        }
    }

    #[test]
    fn optimal_class_of_the_empty_syndrome_is_trivial() {
        let code = build_code(Family::SurfaceRotated, 3).unwrap();
        let model = NoiseModel::bit_flip(0.1);
        let s = BitVec::zeros(code.n - code.k);
        assert_eq!(exact_optimal_class(&code, &model, &s).unwrap(), 0);
    }

    /// As p → 0 the optimal class is decided by leading order: it must
    /// attain the minimum Pauli weight over consistent errors.
    #[test]
    fn tiny_noise_optimum_is_a_minimum_weight_class() {
        let code = build_code(Family::SurfaceRotated, 3).unwrap();
        let sampler = NoiseModel::depolarizing(0.3);
        let tiny = NoiseModel::depolarizing(1e-4);
        let min_coset_weight = |base: &BitVec| -> usize {
            let gens: Vec<&BitVec> = (0..code.h_c.rows()).map(|i| code.h_c.row(i)).collect();
            let mut e = base.clone();
            let weight = |v: &BitVec| {
                let (x, z) = v.halves();
                x.words()
                    .iter()
                    .zip(z.words())
                    .map(|(a, b)| (a | b).count_ones() as usize)
                    .sum::<usize>()
            };
            let mut best = weight(&e);
            for c in 1u64..1 << gens.len() {
                e.xor_assign(gens[c.trailing_zeros() as usize]);
                best = best.min(weight(&e));
            }
            best
        };
        for trial in 0..20 {
            let e = sampler.sample_error(code.n, 17, trial);
            let s = code.syndrome(&e);
            let t_s = code.pure_error(&s);
            let weights: Vec<usize> = (0..code.num_classes())
                .map(|w| min_coset_weight(&t_s.xored(&code.class_representative(w))))
                .collect();
            let min = *weights.iter().min().unwrap();
            let opt = exact_optimal_class(&code, &tiny, &s).unwrap();
            assert_eq!(weights[opt], min, "weights {weights:?}, opt {opt}");
        }
    }

    /// Sampled rate of the exact-L2 pipeline against the independently
    /// enumerated optimal rate: the Wilson interval must cover it.
    #[test]
    fn sampled_l2_rate_covers_the_exact_optimal_rate() {
        let code = build_code(Family::SurfaceRotated, 3).unwrap();
        let scheme = DiagnosisScheme::new(&code, uniform_construction(&code).unwrap()).unwrap();
        let model = NoiseModel::bit_flip(0.1);
        let exact = exact_optimal_rate(&code, &model).unwrap();
        let predictor = ExactL2Predictor::new(&code, &scheme, &model).unwrap();
        let est = logical_error_rate(&code, &scheme, &predictor, &model, 100_000, 21);
        assert!(
            est.ci_low <= exact && exact <= est.ci_high,
            "exact {exact} outside [{}, {}]",
            est.ci_low,
            est.ci_high
        );
    }

    /// Swapping the pure-error map for another valid one changes recoveries
    /// but never the success indicator.
    #[test]
    fn pure_error_choice_does_not_affect_success() {
        let code = build_code(Family::SurfaceRotated, 3).unwrap();
        let mut other = code.clone();
        // A different valid T: xor stabilizers into some columns. Column j
        // keeps syndrome e_j because stabilizers are syndrome-free.
        for j in 0..code.n - code.k {
            let stab = code.h_c.row(j % code.h_c.rows()).clone();
            for b in 0..2 * code.n {
                if stab.get(b) {
                    let cur = other.t.get(b, j);
                    other.t.set(b, j, !cur);
                }
            }
        }
        let model = NoiseModel::depolarizing(0.15);
        // Sanity: T' is valid and genuinely different.
        let mut differs = false;
        for trial in 0..100 {
            let e = model.sample_error(code.n, 19, trial);
            let s = code.syndrome(&e);
            assert_eq!(code.syndrome(&other.pure_error(&s)), s);
            differs |= other.pure_error(&s) != code.pure_error(&s);
        }
        assert!(differs);

        let h_g = uniform_construction(&code).unwrap();
        let scheme_a = DiagnosisScheme::new(&code, h_g.clone()).unwrap();
        let scheme_b = DiagnosisScheme::new(&other, h_g).unwrap();
        let pred_a = ExactL2Predictor::new(&code, &scheme_a, &model).unwrap();
        let pred_b = ExactL2Predictor::new(&other, &scheme_b, &model).unwrap();
        for trial in 0..500 {
            let e = model.sample_error(code.n, 19, trial);
            let s = code.syndrome(&e);
            let out_a = decode_one(&code, &scheme_a, &pred_a, &s);
            let out_b = decode_one(&other, &scheme_b, &pred_b, &s);
            assert_eq!(
                is_success(&code, &e, &out_a.recovery),
                is_success(&other, &e, &out_b.recovery),
                "trial {trial}"
            );
        }
    }

    /// Perturbations strictly inside the boundary distance never move the
    /// argmax; quadrupling the squared radius finds a flip.
    #[test]
    fn perturbations_below_m_never_flip_and_4m_can() {
        let mut rng = CounterRng::new(23, 0);
        for (code, scheme) in all_d3_schemes() {
            let m = scheme.boundary_distance;
            let model = NoiseModel::depolarizing(0.2);
            let mut flipped_somewhere = false;
            for trial in 0..250 {
                let e = model.sample_error(code.n, 29, trial);
                let s = code.syndrome(&e);
                let t_s = code.pure_error(&s);
                let w0 = (rng.next_u64() % code.num_classes() as u64) as usize;
                let g_w0 = bits_to_reals(
                    &scheme.diagnosis_of(&t_s.xored(&code.class_representative(w0))),
                );
                let u: Vec<f64> =
                    (0..g_w0.len()).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
                let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                // ||perturbation||^2 = 0.999 m: must never flip.
                let scale = (0.999 * m).sqrt() / norm;
                let inside: Vec<f64> =
                    g_w0.iter().zip(&u).map(|(g, ui)| g + scale * ui).collect();
                let out = decode_one(&code, &scheme, &ConstantPredictor(inside), &s);
                assert_eq!(out.chosen_class, w0, "{} m {m}", code.family);

                // ||perturbation||^2 = 4 m toward another class's column.
                for w1 in 0..code.num_classes() {
                    if w1 == w0 {
                        continue;
                    }
                    let g_w1 = bits_to_reals(
                        &scheme.diagnosis_of(&t_s.xored(&code.class_representative(w1))),
                    );
                    let dir: Vec<f64> = g_w1.iter().zip(&g_w0).map(|(a, b)| a - b).collect();
                    let dn = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if dn == 0.0 {
                        continue;
                    }
                    let sc = (4.0 * m).sqrt() / dn;
                    let outside: Vec<f64> =
                        g_w0.iter().zip(&dir).map(|(g, di)| g + sc * di).collect();
                    let out = decode_one(&code, &scheme, &ConstantPredictor(outside), &s);
                    flipped_somewhere |= out.chosen_class != w0;
                }
            }
            assert!(flipped_somewhere, "{}: no 4m perturbation flipped", code.family);
        }
    }

    #[test]
    fn network_predictors_follow_the_input_encoding() {
        use crate::nn::{cnn_specs, mlp_specs, Network};
        let code = build_code(Family::SurfaceRotated, 3).unwrap();
        let scheme = DiagnosisScheme::new(&code, uniform_construction(&code).unwrap()).unwrap();
        let model = NoiseModel::depolarizing(0.1);
        let mlp = Network::new(mlp_specs(8, 32, 9, false), vec![8], 1);
        let cnn = Network::new(cnn_specs(Family::SurfaceRotated, 3, 9).unwrap(), vec![2, 1, 2, 2], 1);
        for net in [&mlp, &cnn] {
            let predictor = NetworkPredictor { net, code: &code };
            let e = model.sample_error(code.n, 31, 0);
            let s = code.syndrome(&e);
            let g = predictor.predict(&s);
            assert_eq!(g.len(), 9);
            assert!(g.iter().all(|v| v.is_finite()));
            let out = decode_one(&code, &scheme, &predictor, &s);
            assert_eq!(out.recovery.len(), 2 * code.n);
            assert_eq!(code.syndrome(&out.recovery), s);
        }
    }

    #[test]
    fn wilson_interval_matches_reference_values() {
        // 0/n and n/n intervals stay inside [0, 1].
        let zero = wilson_interval(0, 100);
        assert_eq!(zero.rate, 0.0);
        assert_eq!(zero.ci_low, 0.0);
        assert!((zero.ci_high - 0.0370).abs() < 5e-4);
        let all = wilson_interval(100, 100);
        assert_eq!(all.ci_high, 1.0);
        // Textbook case 5/10.
        let half = wilson_interval(5, 10);
        assert!((half.ci_low - 0.2366).abs() < 5e-4);
        assert!((half.ci_high - 0.7634).abs() < 5e-4);
    }
}
