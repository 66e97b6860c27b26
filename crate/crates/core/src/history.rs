//! Append-only trial ledger shared by every stage.

use std::fmt;
use std::io;
use std::str::FromStr;

use crate::space::{ConfigSpace, Configuration, ParamKind, ParamValue, SpaceError, UnitVector};

#[derive(Debug, thiserror::Error)]
pub enum HistoryError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("objective value is NaN; record failed evaluations as +inf")]
    NanValue,
    #[error("batch index {got} precedes the last recorded batch {last}")]
    BatchOrder { last: usize, got: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv row {row}: {reason}")]
    BadRow { row: usize, reason: String },
}

/// Which stage produced a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StageTag {
    Warmstart,
    DeInit,
    Bo,
    DeFinal,
}

impl StageTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StageTag::Warmstart => "warmstart",
            StageTag::DeInit => "de_init",
            StageTag::Bo => "bo",
            StageTag::DeFinal => "de_final",
        }
    }
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "warmstart" => Ok(StageTag::Warmstart),
            "de_init" => Ok(StageTag::DeInit),
            "bo" => Ok(StageTag::Bo),
            "de_final" => Ok(StageTag::DeFinal),
            other => Err(format!("unknown stage tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub config: Configuration,
    /// Cached `encode(config)`.
    pub u: UnitVector,
    /// Minimized objective; `+inf` marks a failed evaluation.
    pub y: f64,
    pub batch_index: usize,
    pub stage_tag: StageTag,
}

#[derive(Debug, Clone)]
pub struct History {
    space: ConfigSpace,
    trials: Vec<Trial>,
    incumbent: Option<usize>,
}

impl History {
    pub fn new(space: ConfigSpace) -> Self {
        History {
            space,
            trials: Vec::new(),
            incumbent: None,
        }
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn record(
        &mut self,
        config: Configuration,
        y: f64,
        batch_index: usize,
        stage_tag: StageTag,
    ) -> Result<&Trial, HistoryError> {
        if y.is_nan() {
            return Err(HistoryError::NanValue);
        }
        if let Some(last) = self.trials.last() {
            if batch_index < last.batch_index {
                return Err(HistoryError::BatchOrder {
                    last: last.batch_index,
                    got: batch_index,
                });
            }
        }
        let u = self.space.encode(&config)?;
        let index = self.trials.len();
        if y.is_finite() && self.incumbent_value().is_none_or(|best| y < best) {
            self.incumbent = Some(index);
        }
        self.trials.push(Trial {
            config,
            u,
            y,
            batch_index,
            stage_tag,
        });
        Ok(&self.trials[index])
    }

    /// Best finite trial; ties go to the earliest.
    pub fn incumbent(&self) -> Option<&Trial> {
        self.incumbent.map(|i| &self.trials[i])
    }

    pub fn incumbent_index(&self) -> Option<usize> {
        self.incumbent
    }

    pub fn incumbent_value(&self) -> Option<f64> {
        self.incumbent().map(|t| t.y)
    }

    /// Best-so-far value after each batch, indexed by batch.
    pub fn best_so_far_per_batch(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        let mut best = f64::INFINITY;
        for t in &self.trials {
            while out.len() < t.batch_index {
                out.push(best);
            }
            best = best.min(t.y);
            if out.len() == t.batch_index {
                out.push(best);
            } else {
                *out.last_mut().unwrap() = best;
            }
        }
        out
    }

    /// Inputs and targets for surrogate fitting, in insertion order.
    ///
    /// Infinite targets are imputed as `max + 3 * (max - min)` over the
    /// finite ones; with no finite target the matrices are empty.
    pub fn design_matrix(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let finite = self.trials.iter().map(|t| t.y).filter(|y| y.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
            (lo.min(y), hi.max(y))
        });
        if lo > hi {
            return (Vec::new(), Vec::new());
        }
        let imputed = hi + 3.0 * (hi - lo);
        self.trials
            .iter()
            .map(|t| {
                let y = if t.y.is_finite() { t.y } else { imputed };
                (t.u.to_vec(), y)
            })
            .unzip()
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), HistoryError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["batch_index".to_string(), "stage_tag".to_string()];
        header.extend(self.space.params().iter().map(|p| p.name.clone()));
        header.push("y".to_string());
        w.write_record(&header)?;
        for t in &self.trials {
            let mut row = vec![t.batch_index.to_string(), t.stage_tag.to_string()];
            for p in self.space.params() {
                row.push(t.config.get(&p.name).map(|v| v.to_string()).unwrap_or_default());
            }
            row.push(t.y.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(space: ConfigSpace, reader: R) -> Result<Self, HistoryError> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let mut expected = vec!["batch_index", "stage_tag"];
        expected.extend(space.params().iter().map(|p| p.name.as_str()));
        expected.push("y");
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(HistoryError::BadRow {
                row: 0,
                reason: format!("expected header {:?}", expected.join(",")),
            });
        }
        let mut history = History::new(space);
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let row = i + 1;
            let bad = |reason: String| HistoryError::BadRow { row, reason };
            let batch_index: usize = record[0]
                .parse()
                .map_err(|e| bad(format!("batch_index: {e}")))?;
            let stage_tag: StageTag = record[1].parse().map_err(bad)?;
            let mut config = Configuration::new();
            for (j, p) in history.space.params().iter().enumerate() {
                let field = &record[2 + j];
                let value = match p.kind {
                    ParamKind::Continuous { .. } => ParamValue::Float(
                        field
                            .parse()
                            .map_err(|e| bad(format!("{}: {e}", p.name)))?,
                    ),
                    ParamKind::Integer { .. } => ParamValue::Int(
                        field
                            .parse()
                            .map_err(|e| bad(format!("{}: {e}", p.name)))?,
                    ),
                    ParamKind::Categorical { .. } => ParamValue::Choice(field.to_string()),
                };
                config.0.insert(p.name.clone(), value);
            }
            let y: f64 = record[record.len() - 1]
                .parse()
                .map_err(|e| bad(format!("y: {e}")))?;
            history.record(config, y, batch_index, stage_tag)?;
        }
        Ok(history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParamSpec;

    fn space() -> ConfigSpace {
        ConfigSpace::new(vec![
            ParamSpec::continuous("x", 0.0, 1.0).unwrap(),
            ParamSpec::integer("n", 1, 4).unwrap(),
            ParamSpec::categorical("c", &["a", "b"]).unwrap(),
        ])
        .unwrap()
    }

    fn cfg(x: f64) -> Configuration {
        Configuration::new()
            .with("x", ParamValue::Float(x))
            .with("n", ParamValue::Int(2))
            .with("c", ParamValue::Choice("b".into()))
    }

    fn with_values(ys: &[f64]) -> History {
        let mut h = History::new(space());
        for (i, &y) in ys.iter().enumerate() {
            h.record(cfg(i as f64 / 10.0), y, 0, StageTag::Bo).unwrap();
        }
        h
    }

    #[test]
    fn incumbent_updates_only_on_strict_improvement() {
        let mut h = History::new(space());
        h.record(cfg(0.1), 3.0, 0, StageTag::Bo).unwrap();
        assert_eq!(h.incumbent_value(), Some(3.0));
        h.record(cfg(0.2), 5.0, 0, StageTag::Bo).unwrap();
        assert_eq!(h.incumbent_index(), Some(0));
        h.record(cfg(0.3), 3.0, 0, StageTag::Bo).unwrap();
        assert_eq!(h.incumbent_index(), Some(0));
        h.record(cfg(0.4), 1.0, 1, StageTag::Bo).unwrap();
        assert_eq!(h.incumbent_index(), Some(3));
    }

    #[test]
    fn incumbent_cases() {
        assert_eq!(with_values(&[4.0, 2.0, 7.0]).incumbent_value(), Some(2.0));
        assert_eq!(with_values(&[2.0, 2.0]).incumbent_index(), Some(0));
        assert!(with_values(&[]).incumbent().is_none());
        assert!(with_values(&[f64::INFINITY]).incumbent().is_none());
    }

    #[test]
    fn nan_and_out_of_order_batches_are_rejected() {
        let mut h = History::new(space());
        assert!(matches!(
            h.record(cfg(0.1), f64::NAN, 0, StageTag::Bo),
            Err(HistoryError::NanValue)
        ));
        h.record(cfg(0.1), 1.0, 2, StageTag::Bo).unwrap();
        assert!(matches!(
            h.record(cfg(0.1), 1.0, 1, StageTag::Bo),
            Err(HistoryError::BatchOrder { .. })
        ));
    }

    #[test]
    fn design_matrix_imputes_failures() {
        let (x, y) = with_values(&[1.0, 5.0, f64::INFINITY]).design_matrix();
        assert_eq!(x.len(), 3);
        assert_eq!(y, vec![1.0, 5.0, 17.0]);
        assert_eq!(x[1][0], 0.1);

        let (x, y) = with_values(&[]).design_matrix();
        assert!(x.is_empty() && y.is_empty());
        let (x, _) = with_values(&[f64::INFINITY]).design_matrix();
        assert!(x.is_empty());
    }

    #[test]
    fn best_so_far_is_monotone() {
        let mut h = History::new(space());
        for (b, y) in [(0, 5.0), (0, 4.0), (1, 6.0), (2, 1.0), (2, 9.0)] {
            h.record(cfg(0.5), y, b, StageTag::Bo).unwrap();
        }
        assert_eq!(h.best_so_far_per_batch(), vec![4.0, 4.0, 1.0]);
    }

    #[test]
    fn csv_round_trip() {
        let mut h = History::new(space());
        h.record(cfg(0.25), 1.5, 0, StageTag::Warmstart).unwrap();
        h.record(cfg(0.75), f64::INFINITY, 1, StageTag::DeFinal).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next(), Some("batch_index,stage_tag,x,n,c,y"));
        let back = History::read_csv(space(), buf.as_slice()).unwrap();
        assert_eq!(back.trials(), h.trials());
    }

    #[test]
    fn csv_rejects_wrong_header() {
        let text = "batch_index,stage_tag,x,y\n0,bo,0.5,1\n";
        assert!(matches!(
            History::read_csv(space(), text.as_bytes()),
            Err(HistoryError::BadRow { row: 0, .. })
        ));
    }
}
