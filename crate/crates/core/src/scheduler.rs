//! The switching controller.
//!
//! A run is 16 batches of 8 configurations: three initial-design batches
//! (stored warmstart configurations when the space is known, differential
//! evolution from a random population otherwise), eight portfolio-BO
//! batches, and five batches of history-seeded differential evolution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bo::{self, BoConfig, BoError, Portfolio, DUPLICATE_TOLERANCE};
use crate::de::{DeConfig, DeError, DeParams, DeState};
use crate::history::{History, HistoryError, StageTag};
use crate::space::{linf, ConfigSpace, Configuration, SpaceError, UnitVector};
use crate::warmstart::Registry;

pub const BATCH_SIZE: usize = 8;
pub const INIT_BATCHES: usize = 3;
pub const BO_BATCHES: usize = 8;
pub const DE_BATCHES: usize = 5;
pub const TOTAL_BATCHES: usize = INIT_BATCHES + BO_BATCHES + DE_BATCHES;

const STREAM_INIT: u64 = 1;
const STREAM_BO: u64 = 2;
const STREAM_DE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    InitWarmstart,
    InitDe,
    Bo,
    DeFinal,
}

impl Stage {
    pub fn tag(self) -> StageTag {
        match self {
            Stage::InitWarmstart => StageTag::Warmstart,
            Stage::InitDe => StageTag::DeInit,
            Stage::Bo => StageTag::Bo,
            Stage::DeFinal => StageTag::DeFinal,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SchedulerError {
    #[error("batch index {0} is outside the 16-batch schedule")]
    BatchOutOfRange(usize),
    #[error("a suggestion is already outstanding; observe it first")]
    SuggestionOutstanding,
    #[error("nothing to observe; call suggest first")]
    NoSuggestion,
    #[error("run exhausted after {TOTAL_BATCHES} batches")]
    Exhausted,
    #[error("expected {expected} values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("observed configurations do not match the outstanding suggestion: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    De(#[from] DeError),
}

pub fn stage_for_batch(batch_index: usize, warmstart_matched: bool) -> Result<Stage, SchedulerError> {
    match batch_index {
        b if b < INIT_BATCHES => Ok(if warmstart_matched {
            Stage::InitWarmstart
        } else {
            Stage::InitDe
        }),
        b if b < INIT_BATCHES + BO_BATCHES => Ok(Stage::Bo),
        b if b < TOTAL_BATCHES => Ok(Stage::DeFinal),
        b => Err(SchedulerError::BatchOutOfRange(b)),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub portfolio: Portfolio,
    pub bo: BoConfig,
    pub de: DeConfig,
}

#[derive(Debug, Clone)]
struct Outstanding {
    stage: Stage,
    configs: Vec<Configuration>,
    /// Canonical encodings, for order-insensitive matching on observe.
    units: Vec<UnitVector>,
}

/// Independent random streams per stage, all derived from one root seed.
#[derive(Debug, Clone)]
struct Streams {
    init: ChaCha8Rng,
    bo: ChaCha8Rng,
    de: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Streams {
            init: stream(STREAM_INIT),
            bo: stream(STREAM_BO),
            de: stream(STREAM_DE),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    space: ConfigSpace,
    config: OptimizerConfig,
    history: History,
    batch_index: usize,
    warmstart: Option<Vec<Configuration>>,
    de: Option<DeState>,
    outstanding: Option<Outstanding>,
    streams: Streams,
    seed: u64,
}

impl Optimizer {
    pub fn new(
        space: ConfigSpace,
        config: OptimizerConfig,
        registry: Option<&Registry>,
        seed: u64,
    ) -> Self {
        let mut streams = Streams::new(seed);
        let warmstart = registry.and_then(|r| r.initial_design(&space, &mut streams.init));
        Optimizer {
            history: History::new(space.clone()),
            space,
            config,
            batch_index: 0,
            warmstart,
            de: None,
            outstanding: None,
            streams,
            seed,
        }
    }

    /// Rebuilds an optimizer by replaying a recorded history through the
    /// ask/tell protocol. The history must come from a run with the same
    /// space, configuration, registry and seed.
    pub fn resume(
        space: ConfigSpace,
        config: OptimizerConfig,
        registry: Option<&Registry>,
        seed: u64,
        history: &History,
    ) -> Result<Self, SchedulerError> {
        let mut opt = Optimizer::new(space, config, registry, seed);
        let trials = history.trials();
        for chunk in trials.chunks(BATCH_SIZE) {
            if chunk.len() != BATCH_SIZE || chunk.iter().any(|t| t.batch_index != opt.batch_index) {
                return Err(SchedulerError::Mismatch(format!(
                    "history batch {} is incomplete or out of order",
                    opt.batch_index
                )));
            }
            opt.suggest()?;
            let configs: Vec<Configuration> = chunk.iter().map(|t| t.config.clone()).collect();
            let values: Vec<f64> = chunk.iter().map(|t| t.y).collect();
            opt.observe(&configs, &values)?;
        }
        Ok(opt)
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn batch_index(&self) -> usize {
        self.batch_index
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn warmstart_matched(&self) -> bool {
        self.warmstart.is_some()
    }

    pub fn is_finished(&self) -> bool {
        self.batch_index >= TOTAL_BATCHES
    }

    /// Stage of the next (or outstanding) batch.
    pub fn stage(&self) -> Option<Stage> {
        stage_for_batch(self.batch_index, self.warmstart_matched()).ok()
    }

    pub fn de_state(&self) -> Option<&DeState> {
        self.de.as_ref()
    }

    pub fn suggest(&mut self) -> Result<Vec<Configuration>, SchedulerError> {
        if self.outstanding.is_some() {
            return Err(SchedulerError::SuggestionOutstanding);
        }
        if self.is_finished() {
            return Err(SchedulerError::Exhausted);
        }
        let stage = stage_for_batch(self.batch_index, self.warmstart_matched())?;
        let units: Vec<UnitVector> = match stage {
            Stage::InitWarmstart => {
                let queue = self.warmstart.as_ref().expect("matched registry");
                let start = self.batch_index * BATCH_SIZE;
                let configs = queue[start..start + BATCH_SIZE].to_vec();
                let units = configs
                    .iter()
                    .map(|c| self.space.encode(c))
                    .collect::<Result<Vec<_>, _>>()?;
                self.outstanding = Some(Outstanding {
                    stage,
                    configs: configs.clone(),
                    units,
                });
                return Ok(configs);
            }
            Stage::InitDe => {
                if self.batch_index == 0 {
                    let (state, batch) =
                        DeState::random(self.space.dim(), BATCH_SIZE, &mut self.streams.init);
                    self.de = Some(state);
                    batch
                } else {
                    let params = DeParams::new(BATCH_SIZE, INIT_BATCHES - 1, &self.config.de);
                    self.de
                        .as_mut()
                        .expect("DE state from batch 0")
                        .propose(&params, &mut self.streams.init)?
                }
            }
            Stage::Bo => match bo::propose_batch_bo(
                &self.history,
                &self.config.portfolio,
                BATCH_SIZE,
                &self.config.bo,
                &mut self.streams.bo,
            ) {
                Ok(batch) => batch.into_iter().map(|p| p.u).collect(),
                Err(BoError::InsufficientHistory) => self.random_batch(),
                Err(BoError::Portfolio(_)) => unreachable!("portfolio validated on construction"),
            },
            Stage::DeFinal => {
                if self.batch_index == INIT_BATCHES + BO_BATCHES {
                    self.de = Some(DeState::from_history(
                        &self.history,
                        BATCH_SIZE,
                        &mut self.streams.de,
                    )?);
                }
                let params = DeParams::new(BATCH_SIZE, DE_BATCHES, &self.config.de);
                self.de
                    .as_mut()
                    .expect("DE state seeded above")
                    .propose(&params, &mut self.streams.de)?
            }
        };
        let configs: Vec<Configuration> = units
            .iter()
            .map(|u| self.space.decode(u))
            .collect::<Result<_, _>>()?;
        let units = units.iter().map(|u| self.space.project(u)).collect();
        self.outstanding = Some(Outstanding {
            stage,
            configs: configs.clone(),
            units,
        });
        Ok(configs)
    }

    /// Uniform random batch without repeats, drawn from the BO stream.
    fn random_batch(&mut self) -> Vec<UnitVector> {
        let mut taken: Vec<Vec<f64>> = self.history.trials().iter().map(|t| t.u.to_vec()).collect();
        let mut out = Vec::with_capacity(BATCH_SIZE);
        for _ in 0..BATCH_SIZE {
            let mut u = self.space.project(&self.space.sample_unit(&mut self.streams.bo));
            let mut tries = 0;
            while tries < 1000 && taken.iter().any(|t| linf(t, &u) <= DUPLICATE_TOLERANCE) {
                u = self.space.project(&self.space.sample_unit(&mut self.streams.bo));
                tries += 1;
            }
            taken.push(u.to_vec());
            out.push(u);
        }
        out
    }

    /// Reports values for the outstanding batch in suggestion order.
    pub fn observe_values(&mut self, values: &[f64]) -> Result<(), SchedulerError> {
        let configs = self
            .outstanding
            .as_ref()
            .ok_or(SchedulerError::NoSuggestion)?
            .configs
            .clone();
        self.observe(&configs, values)
    }

    /// Reports `values[i]` for `configs[i]`. The configurations must be the
    /// outstanding suggestion, in any order. NaN is recorded as `+inf`.
    pub fn observe(&mut self, configs: &[Configuration], values: &[f64]) -> Result<(), SchedulerError> {
        let outstanding = self.outstanding.as_ref().ok_or(SchedulerError::NoSuggestion)?;
        let expected = outstanding.configs.len();
        if values.len() != expected {
            return Err(SchedulerError::ValueCount {
                expected,
                got: values.len(),
            });
        }
        if configs.len() != expected {
            return Err(SchedulerError::Mismatch(format!(
                "expected {expected} configurations, got {}",
                configs.len()
            )));
        }
        let mut slot_values = vec![None; expected];
        for (i, (config, &y)) in configs.iter().zip(values).enumerate() {
            let u = self
                .space
                .encode(config)
                .map_err(|e| SchedulerError::Mismatch(format!("configuration {i}: {e}")))?;
            let slot = (0..expected)
                .find(|&s| {
                    slot_values[s].is_none() && linf(&outstanding.units[s], &u) <= DUPLICATE_TOLERANCE
                })
                .ok_or_else(|| {
                    SchedulerError::Mismatch(format!("configuration {i} was not suggested"))
                })?;
            slot_values[slot] = Some(if y.is_nan() { f64::INFINITY } else { y });
        }
        let values: Vec<f64> = slot_values.into_iter().map(|v| v.expect("all slots matched")).collect();

        let outstanding = self.outstanding.take().expect("checked above");
        if matches!(outstanding.stage, Stage::InitDe | Stage::DeFinal) {
            if let Err(e) = self.de.as_mut().expect("DE stage has state").select(&values) {
                self.outstanding = Some(outstanding);
                return Err(e.into());
            }
        }
        for (config, y) in outstanding.configs.into_iter().zip(values) {
            self.history
                .record(config, y, self.batch_index, outstanding.stage.tag())?;
        }
        self.batch_index += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParamSpec;
    use crate::surrogates::{GpConfig, SurrogateConfig};

    fn space() -> ConfigSpace {
        ConfigSpace::new(vec![
            ParamSpec::continuous("x", -2.0, 2.0).unwrap(),
            ParamSpec::integer("n", 0, 5).unwrap(),
        ])
        .unwrap()
    }

    fn objective(c: &Configuration) -> f64 {
        c.f64("x").unwrap().powi(2) + (c.f64("n").unwrap() - 2.0).powi(2)
    }

    fn light() -> OptimizerConfig {
        OptimizerConfig {
            bo: BoConfig {
                surrogates: SurrogateConfig {
                    gp: GpConfig {
                        restarts: 4,
                        ..GpConfig::default()
                    },
                    ..SurrogateConfig::default()
                },
                ..BoConfig::default()
            },
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn schedule_mapping() {
        assert_eq!(stage_for_batch(0, true).unwrap(), Stage::InitWarmstart);
        assert_eq!(stage_for_batch(2, false).unwrap(), Stage::InitDe);
        assert_eq!(stage_for_batch(3, true).unwrap(), Stage::Bo);
        assert_eq!(stage_for_batch(10, false).unwrap(), Stage::Bo);
        assert_eq!(stage_for_batch(11, true).unwrap(), Stage::DeFinal);
        assert_eq!(stage_for_batch(15, false).unwrap(), Stage::DeFinal);
        assert!(matches!(
            stage_for_batch(16, false),
            Err(SchedulerError::BatchOutOfRange(16))
        ));
    }

    #[test]
    fn protocol_violations() {
        let mut opt = Optimizer::new(space(), light(), None, 1);
        assert!(matches!(opt.observe_values(&[0.0; 8]), Err(SchedulerError::NoSuggestion)));
        opt.suggest().unwrap();
        assert!(matches!(opt.suggest(), Err(SchedulerError::SuggestionOutstanding)));
        assert!(matches!(
            opt.observe_values(&[0.0; 7]),
            Err(SchedulerError::ValueCount { expected: 8, got: 7 })
        ));
        assert_eq!(opt.batch_index(), 0);
        opt.observe_values(&[0.0; 8]).unwrap();
        assert_eq!(opt.batch_index(), 1);
    }

    #[test]
    fn observe_matches_configs_in_any_order() {
        let mut opt = Optimizer::new(space(), light(), None, 2);
        let mut batch = opt.suggest().unwrap();
        let values: Vec<f64> = batch.iter().map(objective).collect();
        let expected: Vec<(Configuration, f64)> = batch.iter().cloned().zip(values.iter().copied()).collect();
        batch.reverse();
        let mut reversed = values.clone();
        reversed.reverse();
        opt.observe(&batch, &reversed).unwrap();
        for (t, (c, y)) in opt.history().trials().iter().zip(expected) {
            assert_eq!(t.config, c);
            assert_eq!(t.y, y);
        }
    }

    #[test]
    fn observe_rejects_foreign_configs() {
        let mut opt = Optimizer::new(space(), light(), None, 3);
        let mut batch = opt.suggest().unwrap();
        batch[0] = space().sample_random(&mut ChaCha8Rng::seed_from_u64(99));
        assert!(matches!(
            opt.observe(&batch, &[1.0; 8]),
            Err(SchedulerError::Mismatch(_))
        ));
        assert_eq!(opt.batch_index(), 0);
        assert!(opt.history().is_empty());
    }

    #[test]
    fn nan_is_recorded_as_failure() {
        let mut opt = Optimizer::new(space(), light(), None, 4);
        opt.suggest().unwrap();
        let mut values = vec![1.0; 8];
        values[3] = f64::NAN;
        opt.observe_values(&values).unwrap();
        assert_eq!(opt.history().trials()[3].y, f64::INFINITY);
    }

    #[test]
    fn full_run_and_resume() {
        let mut opt = Optimizer::new(space(), light(), None, 5);
        let mut stages = Vec::new();
        let mut suggestions = Vec::new();
        while !opt.is_finished() {
            stages.push(opt.stage().unwrap());
            let batch = opt.suggest().unwrap();
            assert_eq!(batch.len(), BATCH_SIZE);
            let values: Vec<f64> = batch.iter().map(objective).collect();
            suggestions.push(batch);
            opt.observe_values(&values).unwrap();
            assert_eq!(opt.history().len(), BATCH_SIZE * opt.batch_index());
        }
        assert_eq!(opt.history().len(), 128);
        let mut expected = vec![Stage::InitDe; 3];
        expected.extend([Stage::Bo; 8]);
        expected.extend([Stage::DeFinal; 5]);
        assert_eq!(stages, expected);
        assert!(matches!(opt.suggest(), Err(SchedulerError::Exhausted)));

        let resumed = Optimizer::resume(space(), light(), None, 5, opt.history()).unwrap();
        assert_eq!(resumed.history().trials(), opt.history().trials());
        assert!(resumed.is_finished());
        let wrong_seed = Optimizer::resume(space(), light(), None, 6, opt.history());
        assert!(wrong_seed.is_err());
    }

    #[test]
    fn final_de_population_starts_from_the_incumbent() {
        let mut opt = Optimizer::new(space(), light(), None, 6);
        while opt.batch_index() < INIT_BATCHES + BO_BATCHES {
            let batch = opt.suggest().unwrap();
            let values: Vec<f64> = batch.iter().map(objective).collect();
            opt.observe_values(&values).unwrap();
        }
        let incumbent = opt.history().incumbent().unwrap().u.to_vec();
        opt.suggest().unwrap();
        assert_eq!(opt.stage(), Some(Stage::DeFinal));
        assert_eq!(opt.de_state().unwrap().population()[0].u, incumbent);
    }

    #[test]
    fn constant_objective_falls_back_to_random_bo() {
        let mut opt = Optimizer::new(space(), light(), None, 7);
        while !opt.is_finished() {
            opt.suggest().unwrap();
            opt.observe_values(&[1.0; 8]).unwrap();
        }
        assert_eq!(opt.history().len(), 128);
    }
}
