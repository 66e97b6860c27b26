//! Differential evolution on the unit cube: best/2 mutation with a
//! sinusoidally decaying scale factor, binomial crossover with a normally
//! drawn crossover rate, and one-to-one truncation selection.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::history::History;
use crate::space::UnitVector;

pub const F_MIN: f64 = 0.05;
pub const F_MAX: f64 = 1.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DeError {
    #[error("population of {0} is too small for best/2 mutation (need at least 5)")]
    PopulationTooSmall(usize),
    #[error("offspring already pending; observe them before proposing again")]
    PendingOffspring,
    #[error("nothing pending to select against")]
    NothingPending,
    #[error("expected {expected} values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("population has unevaluated members")]
    Unevaluated,
    #[error("cannot seed a population from an empty history")]
    EmptyHistory,
}

/// User-facing DE knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeConfig {
    /// Frequency of the sinusoidal scale-factor schedule.
    pub freq: f64,
    pub cr_mean: f64,
    /// Variance (not standard deviation) of the crossover-rate draw.
    pub cr_var: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            freq: 0.25,
            cr_mean: 0.5,
            cr_var: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeParams {
    pub population_size: usize,
    pub freq: f64,
    /// Generations in the current DE phase.
    pub g_max: usize,
    pub cr_mean: f64,
    pub cr_var: f64,
}

impl DeParams {
    pub fn new(population_size: usize, g_max: usize, config: &DeConfig) -> Self {
        DeParams {
            population_size,
            freq: config.freq,
            g_max: g_max.max(1),
            cr_mean: config.cr_mean,
            cr_var: config.cr_var,
        }
    }
}

/// Decreasing-amplitude sinusoid, clamped to `[F_MIN, F_MAX]`:
/// `F = ½ (sin(2π·freq·g + π) · (G − g)/G + 1)`.
pub fn sinusoidal_f(g: usize, g_max: usize, freq: f64) -> f64 {
    let g_max = g_max.max(1) as f64;
    let g = (g as f64).min(g_max);
    let s = (2.0 * std::f64::consts::PI * freq * g + std::f64::consts::PI).sin();
    // same expression with one rounding on the final division
    let f = (g_max + s * (g_max - g)) / (2.0 * g_max);
    f.clamp(F_MIN, F_MAX)
}

/// Single reflection at the cube faces, then clamping.
pub fn reflect(v: f64) -> f64 {
    let r = if v < 0.0 {
        -v
    } else if v > 1.0 {
        2.0 - v
    } else {
        v
    };
    r.clamp(0.0, 1.0)
}

/// `best + F (r1 - r2) + F (r3 - r4)`, reflected into the cube.
pub fn best2_mutant(best: &[f64], donors: [&[f64]; 4], f: f64) -> Vec<f64> {
    (0..best.len())
        .map(|j| {
            let v = best[j] + f * (donors[0][j] - donors[1][j]) + f * (donors[2][j] - donors[3][j]);
            reflect(v)
        })
        .collect()
}

/// Binomial crossover with a fixed rate; coordinate `j_rand` always comes
/// from the mutant.
pub fn binomial_crossover<R: Rng + ?Sized>(
    parent: &[f64],
    mutant: &[f64],
    cr: f64,
    rng: &mut R,
) -> Vec<f64> {
    let d = parent.len();
    let j_rand = rng.random_range(0..d);
    (0..d)
        .map(|j| {
            let r: f64 = rng.random();
            if r < cr || j == j_rand {
                mutant[j]
            } else {
                parent[j]
            }
        })
        .collect()
}

/// Draws `CR ~ N(cr_mean, cr_var)` clipped to `[0, 1]`, then crosses over.
pub fn de_crossover<R: Rng + ?Sized>(
    parent: &[f64],
    mutant: &[f64],
    params: &DeParams,
    rng: &mut R,
) -> Vec<f64> {
    let normal = Normal::new(params.cr_mean, params.cr_var.max(0.0).sqrt())
        .expect("crossover distribution is finite");
    let cr = normal.sample(rng).clamp(0.0, 1.0);
    binomial_crossover(parent, mutant, cr, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub u: Vec<f64>,
    /// `None` until the member has been evaluated.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Pending {
    None,
    /// Unevaluated members sent out for their first evaluation.
    Initial(Vec<Vec<f64>>),
    Offspring(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeState {
    population: Vec<Member>,
    generation: usize,
    pending: Pending,
}

impl DeState {
    pub fn from_members(population: Vec<Member>) -> Self {
        DeState {
            population,
            generation: 0,
            pending: Pending::None,
        }
    }

    /// Seeds a population of `size` from evaluated trials: the incumbent
    /// first, the rest drawn without replacement (then with replacement if
    /// the history is short). A single-trial history is padded with fresh
    /// random members, which are evaluated by the next proposal.
    pub fn from_history<R: Rng + ?Sized>(
        history: &History,
        size: usize,
        rng: &mut R,
    ) -> Result<Self, DeError> {
        let trials = history.trials();
        if trials.is_empty() {
            return Err(DeError::EmptyHistory);
        }
        let best = history.incumbent_index().ok_or(DeError::EmptyHistory)?;
        let mut population = vec![Member {
            u: trials[best].u.to_vec(),
            value: Some(trials[best].y),
        }];
        let member = |i: usize| Member {
            u: trials[i].u.to_vec(),
            value: Some(trials[i].y),
        };
        let mut others: Vec<usize> = (0..trials.len()).filter(|&i| i != best).collect();
        let need = size.saturating_sub(1);
        if others.is_empty() {
            let d = history.space().dim();
            population.extend((0..need).map(|_| Member {
                u: UnitVector::random(d, rng).into_inner(),
                value: None,
            }));
        } else if others.len() >= need {
            population.extend(index::sample(rng, others.len(), need).iter().map(|k| member(others[k])));
        } else {
            others.shuffle(rng);
            population.extend(others.iter().map(|&i| member(i)));
            while population.len() < size {
                let pick = others[rng.random_range(0..others.len())];
                population.push(member(pick));
            }
        }
        Ok(Self::from_members(population))
    }

    /// A random population whose first evaluation is the returned batch.
    pub fn random<R: Rng + ?Sized>(dim: usize, size: usize, rng: &mut R) -> (Self, Vec<UnitVector>) {
        let vectors: Vec<Vec<f64>> = (0..size)
            .map(|_| UnitVector::random(dim, rng).into_inner())
            .collect();
        let state = DeState {
            population: vectors
                .iter()
                .map(|u| Member {
                    u: u.clone(),
                    value: None,
                })
                .collect(),
            generation: 0,
            pending: Pending::Initial(vectors.clone()),
        };
        (state, vectors.into_iter().map(UnitVector::clamped).collect())
    }

    pub fn population(&self) -> &[Member] {
        &self.population
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn has_pending(&self) -> bool {
        self.pending != Pending::None
    }

    pub fn pending(&self) -> &[Vec<f64>] {
        match &self.pending {
            Pending::None => &[],
            Pending::Initial(v) | Pending::Offspring(v) => v,
        }
    }

    pub fn is_evaluated(&self) -> bool {
        self.population.iter().all(|m| m.value.is_some())
    }

    /// Index of the best evaluated member; ties go to the lowest index.
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, m) in self.population.iter().enumerate() {
            if let Some(v) = m.value {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((i, v));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best_index().and_then(|i| self.population[i].value)
    }

    /// One best/2 mutant per member.
    pub fn mutate_best2<R: Rng + ?Sized>(&self, f: f64, rng: &mut R) -> Result<Vec<Vec<f64>>, DeError> {
        let np = self.population.len();
        if np < 5 {
            return Err(DeError::PopulationTooSmall(np));
        }
        let best = self.best_index().ok_or(DeError::Unevaluated)?;
        if !self.is_evaluated() {
            return Err(DeError::Unevaluated);
        }
        let x_best = &self.population[best].u;
        Ok((0..np)
            .map(|i| {
                let picks = index::sample(rng, np - 1, 4);
                let donor = |k: usize| {
                    let j = picks.index(k);
                    &self.population[if j >= i { j + 1 } else { j }].u[..]
                };
                best2_mutant(x_best, [donor(0), donor(1), donor(2), donor(3)], f)
            })
            .collect())
    }

    /// Proposes the next batch. While some members are unevaluated the
    /// batch is the population itself; afterwards it is one offspring per
    /// member.
    pub fn propose<R: Rng + ?Sized>(
        &mut self,
        params: &DeParams,
        rng: &mut R,
    ) -> Result<Vec<UnitVector>, DeError> {
        if self.has_pending() {
            return Err(DeError::PendingOffspring);
        }
        let batch = if !self.is_evaluated() {
            let vectors: Vec<Vec<f64>> = self.population.iter().map(|m| m.u.clone()).collect();
            self.pending = Pending::Initial(vectors.clone());
            vectors
        } else {
            let f = sinusoidal_f(self.generation, params.g_max, params.freq);
            let mutants = self.mutate_best2(f, rng)?;
            let offspring: Vec<Vec<f64>> = self
                .population
                .iter()
                .zip(&mutants)
                .map(|(parent, mutant)| de_crossover(&parent.u, mutant, params, rng))
                .collect();
            self.pending = Pending::Offspring(offspring.clone());
            offspring
        };
        Ok(batch.into_iter().map(UnitVector::clamped).collect())
    }

    /// Truncation selection: offspring `i` replaces parent `i` when its value
    /// is no worse. Initial evaluations fill in values without advancing the
    /// generation.
    pub fn select(&mut self, values: &[f64]) -> Result<(), DeError> {
        let pending = std::mem::replace(&mut self.pending, Pending::None);
        let (vectors, advance) = match pending {
            Pending::None => return Err(DeError::NothingPending),
            Pending::Initial(v) => (v, false),
            Pending::Offspring(v) => (v, true),
        };
        if values.len() != vectors.len() {
            let expected = vectors.len();
            self.pending = if advance {
                Pending::Offspring(vectors)
            } else {
                Pending::Initial(vectors)
            };
            return Err(DeError::ValueCount {
                expected,
                got: values.len(),
            });
        }
        for ((member, u), &y) in self.population.iter_mut().zip(vectors).zip(values) {
            match member.value {
                Some(old) if y > old => {}
                _ => {
                    member.u = u;
                    member.value = Some(y);
                }
            }
        }
        if advance {
            self.generation += 1;
        }
        Ok(())
    }
}
