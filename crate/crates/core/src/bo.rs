//! Portfolio Bayesian optimization with Kriging Believer batch filling.
//!
//! Each batch permutes the portfolio, then asks its triplets in turn for one
//! point each (cycling when the portfolio is shorter than the batch). After
//! every proposal the proposing model's predicted mean at that point is
//! appended as a fantasy observation, so later triplets in the same batch
//! refit on it and are pushed elsewhere. Fantasies never reach the history.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::acquisition::{acq_score, AcqKind, DEFAULT_KAPPA};
use crate::history::History;
use crate::space::{linf, Configuration, UnitVector};
use crate::surrogates::{FitError, Surrogate, SurrogateConfig, SurrogateKind};
use crate::transforms::{self, TransformKind, TransformState};

/// Proposals closer than this (L-infinity, unit cube) count as duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BoError {
    #[error("bayesian optimization needs at least 2 trials with distinct finite values")]
    InsufficientHistory,
    #[error("invalid portfolio: {0}")]
    Portfolio(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TripletSpec", into = "TripletSpec")]
pub struct Triplet {
    pub surrogate: SurrogateKind,
    pub acquisition: AcqKind,
    pub transform: TransformKind,
}

impl Triplet {
    pub const fn new(
        surrogate: SurrogateKind,
        acquisition: AcqKind,
        transform: TransformKind,
    ) -> Self {
        Triplet {
            surrogate,
            acquisition,
            transform,
        }
    }

    pub fn validate(&self) -> Result<(), BoError> {
        if self.acquisition == AcqKind::LogEi && self.transform != TransformKind::Log {
            return Err(BoError::Portfolio(
                "log_ei is only defined together with the log transform".into(),
            ));
        }
        if let AcqKind::Lcb { kappa } = self.acquisition {
            if !(kappa.is_finite() && kappa > 0.0) {
                return Err(BoError::Portfolio(format!(
                    "lcb kappa must be finite and positive, got {kappa}"
                )));
            }
        }
        Ok(())
    }
}

/// Wire form of a triplet, as found in portfolio override files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TripletSpec {
    surrogate: SurrogateKind,
    acquisition: String,
    transform: TransformKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
}

impl TryFrom<TripletSpec> for Triplet {
    type Error = BoError;

    fn try_from(spec: TripletSpec) -> Result<Self, BoError> {
        let acquisition = match (spec.acquisition.as_str(), spec.kappa) {
            ("ei", None) => AcqKind::Ei,
            ("log_ei", None) => AcqKind::LogEi,
            ("pi", None) => AcqKind::Pi,
            ("lcb", kappa) => AcqKind::Lcb {
                kappa: kappa.unwrap_or(DEFAULT_KAPPA),
            },
            ("ei" | "log_ei" | "pi", Some(_)) => {
                return Err(BoError::Portfolio(format!(
                    "`kappa` is only valid for lcb, not {}",
                    spec.acquisition
                )))
            }
            (other, _) => {
                return Err(BoError::Portfolio(format!(
                    "unknown acquisition `{other}`"
                )))
            }
        };
        let triplet = Triplet::new(spec.surrogate, acquisition, spec.transform);
        triplet.validate()?;
        Ok(triplet)
    }
}

impl From<Triplet> for TripletSpec {
    fn from(t: Triplet) -> Self {
        TripletSpec {
            surrogate: t.surrogate,
            acquisition: t.acquisition.name().to_string(),
            transform: t.transform,
            kappa: match t.acquisition {
                AcqKind::Lcb { kappa } => Some(kappa),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Triplet>", into = "Vec<Triplet>")]
pub struct Portfolio {
    triplets: Vec<Triplet>,
}

impl Default for Portfolio {
    fn default() -> Self {
        use AcqKind::*;
        use SurrogateKind::*;
        use TransformKind::*;
        Portfolio {
            triplets: vec![
                Triplet::new(Gp, Ei, Identity),
                Triplet::new(Gp, Pi, Identity),
                Triplet::new(Gp, AcqKind::lcb(), Identity),
                Triplet::new(Gp, Ei, Copula),
                Triplet::new(Gp, LogEi, Log),
                Triplet::new(Rf, Ei, Identity),
                Triplet::new(Rf, LogEi, Log),
                Triplet::new(Rf, Ei, Copula),
            ],
        }
    }
}

impl TryFrom<Vec<Triplet>> for Portfolio {
    type Error = BoError;

    fn try_from(triplets: Vec<Triplet>) -> Result<Self, BoError> {
        Portfolio::new(triplets)
    }
}

impl From<Portfolio> for Vec<Triplet> {
    fn from(p: Portfolio) -> Self {
        p.triplets
    }
}

impl Portfolio {
    pub fn new(triplets: Vec<Triplet>) -> Result<Self, BoError> {
        if triplets.is_empty() {
            return Err(BoError::Portfolio("portfolio is empty".into()));
        }
        for t in &triplets {
            t.validate()?;
        }
        Ok(Portfolio { triplets })
    }

    pub fn single(triplet: Triplet) -> Result<Self, BoError> {
        Self::new(vec![triplet])
    }

    pub fn parse(document: &str) -> Result<Self, BoError> {
        serde_json::from_str(document).map_err(|e| BoError::Portfolio(e.to_string()))
    }

    /// Canonical JSON form (the override-file format).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("portfolio serializes")
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Budget of the acquisition maximizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcqSearchConfig {
    pub random_candidates: usize,
    pub local_chains: usize,
    pub chain_steps: usize,
    pub step_sigma: f64,
    /// How many of the best historical points seed local chains.
    pub seed_points: usize,
}

impl Default for AcqSearchConfig {
    fn default() -> Self {
        AcqSearchConfig {
            random_candidates: 512,
            local_chains: 10,
            chain_steps: 20,
            step_sigma: 0.05,
            seed_points: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub search: AcqSearchConfig,
    pub surrogates: SurrogateConfig,
    /// Skip the per-batch permutation (ablation switch).
    pub fixed_order: bool,
}

/// One batch entry with the bookkeeping behind it.
#[derive(Debug, Clone)]
pub struct BoProposal {
    pub config: Configuration,
    /// Canonical encoding of `config`.
    pub u: UnitVector,
    pub triplet: Triplet,
    /// Fantasy value appended after this proposal, if a model was available.
    pub fantasy: Option<f64>,
    /// True when the point came from a random fallback.
    pub random_fallback: bool,
}

fn score_or_floor(model: &Surrogate, acq: AcqKind, f_best: f64, u: &[f64]) -> f64 {
    let (mean, var) = model.predict(u);
    acq_score(acq, mean, var, f_best).unwrap_or(f64::NEG_INFINITY)
}

/// Maximizes `acq` over the unit cube: uniform random candidates, then
/// hill-climbing chains seeded from `seeds` (best first), padded with random
/// starts. Ties go to the earliest evaluated candidate.
pub fn optimize_acq<R: Rng + ?Sized>(
    model: &Surrogate,
    acq: AcqKind,
    f_best: f64,
    seeds: &[Vec<f64>],
    dim: usize,
    config: &AcqSearchConfig,
    rng: &mut R,
) -> UnitVector {
    let mut best: Option<(Vec<f64>, f64)> = None;
    fn consider(u: &[f64], score: f64, best: &mut Option<(Vec<f64>, f64)>) {
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            *best = Some((u.to_vec(), score));
        }
    }
    for _ in 0..config.random_candidates {
        let u = UnitVector::random(dim, rng);
        let s = score_or_floor(model, acq, f_best, &u);
        consider(&u, s, &mut best);
    }
    let step = Normal::new(0.0, config.step_sigma).expect("step sigma is finite");
    let seeded = seeds.len().min(config.seed_points);
    for chain in 0..config.local_chains {
        let mut current = if chain < seeded {
            seeds[chain].clone()
        } else {
            UnitVector::random(dim, rng).into_inner()
        };
        let mut current_score = score_or_floor(model, acq, f_best, &current);
        for _ in 0..config.chain_steps {
            let next: Vec<f64> = current
                .iter()
                .map(|c| (c + step.sample(rng)).clamp(0.0, 1.0))
                .collect();
            let s = score_or_floor(model, acq, f_best, &next);
            consider(&next, s, &mut best);
            if s > current_score {
                current = next;
                current_score = s;
            }
        }
    }
    match best {
        Some((u, _)) => UnitVector::clamped(u),
        None => UnitVector::random(dim, rng),
    }
}

/// Kriging Believer value at `u`: the predicted mean mapped back to the raw scale.
pub fn fantasize(model: &Surrogate, state: &TransformState, u: &[f64]) -> f64 {
    state.invert(model.predict(u).0)
}

/// A fitted triplet, ready to propose.
pub struct FittedTriplet {
    pub model: Surrogate,
    pub state: TransformState,
    /// Incumbent in the scale the acquisition expects.
    pub f_best: f64,
}

/// Applies the triplet's transform to `y` and fits its surrogate. Only the
/// first `n_real` rows (real trials) define the incumbent.
pub fn fit_triplet<R: Rng + ?Sized>(
    triplet: Triplet,
    x: &[Vec<f64>],
    y: &[f64],
    n_real: usize,
    config: &SurrogateConfig,
    rng: &mut R,
) -> Result<FittedTriplet, FitError> {
    let (z, state) = transforms::apply(triplet.transform, y).map_err(|_| FitError::NonFinite)?;
    let model = Surrogate::fit(triplet.surrogate, x, &z, config, rng)?;
    let z_best = z[..n_real.max(1)]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let f_best = match (triplet.acquisition, &state) {
        // ln(y_best - min + delta) back to the shifted raw scale
        (AcqKind::LogEi, TransformState::Log { .. }) => z_best.exp(),
        (AcqKind::LogEi, _) => return Err(FitError::NonFinite),
        _ => z_best,
    };
    Ok(FittedTriplet {
        model,
        state,
        f_best,
    })
}

fn distinct_finite_values(history: &History) -> bool {
    let mut finite = history.trials().iter().map(|t| t.y).filter(|y| y.is_finite());
    match finite.next() {
        Some(first) => finite.any(|y| y != first),
        None => false,
    }
}

/// Proposes one batch of `batch_size` configurations.
pub fn propose_batch_bo<R: Rng + ?Sized>(
    history: &History,
    portfolio: &Portfolio,
    batch_size: usize,
    config: &BoConfig,
    rng: &mut R,
) -> Result<Vec<BoProposal>, BoError> {
    if !distinct_finite_values(history) {
        return Err(BoError::InsufficientHistory);
    }
    let space = history.space();
    let dim = space.dim();
    let mut order = portfolio.triplets().to_vec();
    if !config.fixed_order {
        order.shuffle(rng);
    }

    let (mut xs, mut ys) = history.design_matrix();
    let n_real = xs.len();
    let mut by_value: Vec<usize> = (0..n_real).collect();
    by_value.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let seeds: Vec<Vec<f64>> = by_value
        .iter()
        .take(config.search.seed_points)
        .map(|&i| xs[i].clone())
        .collect();

    let mut taken: Vec<Vec<f64>> = history.trials().iter().map(|t| t.u.to_vec()).collect();
    let mut proposals = Vec::with_capacity(batch_size);
    for k in 0..batch_size {
        let triplet = order[k % order.len()];
        let fitted = fit_triplet(triplet, &xs, &ys, n_real, &config.surrogates, rng).ok();
        let (mut u, mut random_fallback) = match &fitted {
            Some(f) => {
                let raw = optimize_acq(
                    &f.model,
                    triplet.acquisition,
                    f.f_best,
                    &seeds,
                    dim,
                    &config.search,
                    rng,
                );
                (space.project(&raw), false)
            }
            None => (space.project(&space.sample_unit(rng)), true),
        };
        let mut tries = 0;
        while tries < 1000 && taken.iter().any(|t| linf(t, &u) <= DUPLICATE_TOLERANCE) {
            u = space.project(&space.sample_unit(rng));
            random_fallback = true;
            tries += 1;
        }
        let fantasy = fitted.as_ref().map(|f| fantasize(&f.model, &f.state, &u));
        if let Some(value) = fantasy {
            xs.push(u.to_vec());
            ys.push(value);
        }
        taken.push(u.to_vec());
        proposals.push(BoProposal {
            config: space.decode(&u).expect("projected vectors match the space"),
            u,
            triplet,
            fantasy,
            random_fallback,
        });
    }
    Ok(proposals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::StageTag;
    use crate::space::{ConfigSpace, ParamSpec, ParamValue};
    use crate::surrogates::GpConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_space() -> ConfigSpace {
        ConfigSpace::new(vec![ParamSpec::continuous("x", 0.0, 1.0).unwrap()]).unwrap()
    }

    fn line_history(points: &[f64]) -> History {
        let mut h = History::new(line_space());
        for &x in points {
            let c = Configuration::new().with("x", ParamValue::Float(x));
            h.record(c, (x - 0.3).powi(2), 0, StageTag::Warmstart).unwrap();
        }
        h
    }

    fn fast() -> BoConfig {
        BoConfig {
            surrogates: SurrogateConfig {
                gp: GpConfig {
                    restarts: 4,
                    ..GpConfig::default()
                },
                ..SurrogateConfig::default()
            },
            ..BoConfig::default()
        }
    }

    #[test]
    fn default_portfolio_serialization() {
        let json = Portfolio::default().to_json();
        let back = Portfolio::parse(&json).unwrap();
        assert_eq!(back, Portfolio::default());
        assert_eq!(Portfolio::default().len(), 8);
    }

    #[test]
    fn override_file_parsing() {
        let p = Portfolio::parse(
            r#"[{"surrogate":"rf","acquisition":"lcb","transform":"copula","kappa":1.5},
                {"surrogate":"gp","acquisition":"pi","transform":"identity"}]"#,
        )
        .unwrap();
        assert_eq!(p.triplets()[0].acquisition, AcqKind::Lcb { kappa: 1.5 });
        assert!(Portfolio::parse(
            r#"[{"surrogate":"gp","acquisition":"log_ei","transform":"copula"}]"#
        )
        .is_err());
        assert!(Portfolio::parse(r#"[]"#).is_err());
        assert!(Portfolio::parse(
            r#"[{"surrogate":"gp","acquisition":"ucb","transform":"identity"}]"#
        )
        .is_err());
        assert!(Portfolio::parse(
            r#"[{"surrogate":"gp","acquisition":"ei","transform":"identity","kappa":2}]"#
        )
        .is_err());
    }

    #[test]
    fn needs_two_distinct_values() {
        let mut h = History::new(line_space());
        for x in [0.1, 0.5] {
            h.record(
                Configuration::new().with("x", ParamValue::Float(x)),
                1.0,
                0,
                StageTag::Bo,
            )
            .unwrap();
        }
        let err = propose_batch_bo(
            &h,
            &Portfolio::default(),
            8,
            &fast(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap_err();
        assert_eq!(err, BoError::InsufficientHistory);
    }

    #[test]
    fn batch_has_requested_size_and_no_duplicates() {
        let h = line_history(&[0.0, 0.2, 0.45, 0.7, 0.9, 1.0]);
        let batch = propose_batch_bo(
            &h,
            &Portfolio::default(),
            8,
            &fast(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(batch.len(), 8);
        for (i, a) in batch.iter().enumerate() {
            for b in &batch[..i] {
                assert!(a.u.linf(&b.u) > DUPLICATE_TOLERANCE);
            }
            for t in h.trials() {
                assert!(a.u.linf(&t.u) > DUPLICATE_TOLERANCE);
            }
        }
    }

    #[test]
    fn permutation_depends_on_rng() {
        let h = line_history(&[0.0, 0.2, 0.45, 0.7, 0.9, 1.0]);
        let order = |seed| -> Vec<Triplet> {
            propose_batch_bo(
                &h,
                &Portfolio::default(),
                8,
                &fast(),
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap()
            .into_iter()
            .map(|p| p.triplet)
            .collect()
        };
        assert_ne!(order(2), order(3));
        let mut sorted = order(2);
        sorted.sort_by_key(|t| format!("{t:?}"));
        let mut expected = Portfolio::default().triplets().to_vec();
        expected.sort_by_key(|t| format!("{t:?}"));
        assert_eq!(sorted, expected);
    }

    #[test]
    fn fixed_order_keeps_portfolio_order() {
        let h = line_history(&[0.0, 0.2, 0.45, 0.7, 0.9, 1.0]);
        let config = BoConfig {
            fixed_order: true,
            ..fast()
        };
        let batch = propose_batch_bo(
            &h,
            &Portfolio::default(),
            8,
            &config,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        let order: Vec<Triplet> = batch.iter().map(|p| p.triplet).collect();
        assert_eq!(order, Portfolio::default().triplets());
        for p in &batch {
            line_space().validate(&p.config).unwrap();
        }
    }

    #[test]
    fn kriging_believer_separates_proposals() {
        let h = line_history(&[0.0, 0.15, 0.3, 0.5, 0.8, 1.0]);
        let portfolio = Portfolio::single(Triplet::new(
            SurrogateKind::Gp,
            AcqKind::Ei,
            TransformKind::Identity,
        ))
        .unwrap();
        let batch = propose_batch_bo(
            &h,
            &portfolio,
            8,
            &BoConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        assert!(batch.iter().all(|p| p.fantasy.is_some() && !p.random_fallback));
        for i in 0..batch.len() {
            for j in 0..i {
                assert!(batch[i].u.linf(&batch[j].u) > DUPLICATE_TOLERANCE);
            }
        }
    }

    #[test]
    fn fantasize_identity_is_the_predicted_mean() {
        let x = vec![vec![0.1], vec![0.6], vec![0.9]];
        let y = vec![1.0, 3.0, 2.0];
        let noiseless = SurrogateConfig {
            gp: GpConfig {
                noise_variance_bounds: (1e-8, 1e-8),
                ..GpConfig::default()
            },
            ..SurrogateConfig::default()
        };
        let f = fit_triplet(
            Triplet::new(SurrogateKind::Gp, AcqKind::Ei, TransformKind::Identity),
            &x,
            &y,
            3,
            &noiseless,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(fantasize(&f.model, &f.state, &[0.4]), f.model.predict(&[0.4]).0);
        assert!((fantasize(&f.model, &f.state, &[0.6]) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn copula_fantasies_stay_in_range() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
        let y = vec![5.0, 1.0, 9.0, 4.0, 2.0, 7.0];
        let f = fit_triplet(
            Triplet::new(SurrogateKind::Gp, AcqKind::Ei, TransformKind::Copula),
            &x,
            &y,
            6,
            &SurrogateConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        for i in 0..=20 {
            let v = fantasize(&f.model, &f.state, &[i as f64 / 20.0]);
            assert!((1.0..=9.0).contains(&v));
        }
    }

    #[test]
    fn constant_acquisition_returns_first_candidate() {
        let model = Surrogate::Rf(crate::surrogates::RfModel::from_constant_trees(&[1.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut probe = rng.clone();
        let first = UnitVector::random(3, &mut probe);
        let u = optimize_acq(
            &model,
            AcqKind::Ei,
            0.0,
            &[],
            3,
            &AcqSearchConfig::default(),
            &mut rng,
        );
        assert_eq!(u, first);
    }

    #[test]
    fn acquisition_search_is_deterministic() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| (v[0] - 0.7).powi(2)).collect();
        let f = fit_triplet(
            Triplet::new(SurrogateKind::Gp, AcqKind::Ei, TransformKind::Identity),
            &x,
            &y,
            6,
            &SurrogateConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let run = || {
            optimize_acq(
                &f.model,
                AcqKind::Ei,
                f.f_best,
                &x,
                1,
                &AcqSearchConfig::default(),
                &mut ChaCha8Rng::seed_from_u64(77),
            )
        };
        assert_eq!(run(), run());
    }
}
