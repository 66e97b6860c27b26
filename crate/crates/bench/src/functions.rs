//! Built-in synthetic objectives.

use std::f64::consts::{E, PI};

use squirrel_core::{ConfigSpace, Configuration, ParamSpec};

pub struct FuncSpec {
    pub name: &'static str,
    pub space: ConfigSpace,
    pub known_optimum: Option<f64>,
    evaluate: fn(&Configuration) -> f64,
}

impl FuncSpec {
    pub fn evaluate(&self, config: &Configuration) -> f64 {
        (self.evaluate)(config)
    }
}

impl std::fmt::Debug for FuncSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FuncSpec")
            .field("name", &self.name)
            .field("dim", &self.space.dim())
            .finish()
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown function `{0}`")]
pub struct UnknownFunction(pub String);

fn box_space(prefix: &str, d: usize, lower: f64, upper: f64) -> ConfigSpace {
    ConfigSpace::new(
        (0..d)
            .map(|i| ParamSpec::continuous(&format!("{prefix}{i}"), lower, upper).expect("valid bounds"))
            .collect(),
    )
    .expect("distinct names")
}

fn coords(c: &Configuration, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| c.f64(&format!("x{i}")).expect("coordinate present"))
        .collect()
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn branin(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

pub fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cos = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    -20.0 * (-0.2 * sq.sqrt()).exp() - cos.exp() + 20.0 + E
}

/// Bowl centers and floors for the mixed function's categorical choice.
const BOWLS: [(&str, [f64; 2], f64); 3] = [
    ("a", [1.0, -2.0], 0.0),
    ("b", [-3.0, 3.0], 0.5),
    ("c", [3.0, 3.0], 1.0),
];

pub fn mixed(c: &Configuration) -> f64 {
    let x1 = c.f64("x1").expect("x1");
    let x2 = c.f64("x2").expect("x2");
    let lr = c.f64("lr").expect("lr");
    let n = c.f64("n").expect("n");
    let bowl = c.choice("bowl").expect("bowl");
    let (_, center, floor) = BOWLS
        .iter()
        .find(|(name, _, _)| *name == bowl)
        .expect("declared choice");
    floor
        + (x1 - center[0]).powi(2)
        + (x2 - center[1]).powi(2)
        + (lr.log10() + 2.0).powi(2)
        + ((n - 7.0) / 5.0).powi(2)
}

fn mixed_space() -> ConfigSpace {
    ConfigSpace::new(vec![
        ParamSpec::continuous("x1", -5.0, 5.0).unwrap(),
        ParamSpec::continuous("x2", -5.0, 5.0).unwrap(),
        ParamSpec::log_continuous("lr", 1e-4, 1.0).unwrap(),
        ParamSpec::integer("n", 1, 20).unwrap(),
        ParamSpec::categorical("bowl", &["a", "b", "c"]).unwrap(),
    ])
    .unwrap()
}

pub fn builtin_functions() -> Vec<FuncSpec> {
    vec![
        FuncSpec {
            name: "sphere-10d",
            space: box_space("x", 10, -5.12, 5.12),
            known_optimum: Some(0.0),
            evaluate: |c| sphere(&coords(c, 10)),
        },
        FuncSpec {
            name: "branin-2d",
            space: ConfigSpace::new(vec![
                ParamSpec::continuous("x0", -5.0, 10.0).unwrap(),
                ParamSpec::continuous("x1", 0.0, 15.0).unwrap(),
            ])
            .unwrap(),
            known_optimum: Some(0.397_887_357_729_738),
            evaluate: |c| {
                let x = coords(c, 2);
                branin(x[0], x[1])
            },
        },
        FuncSpec {
            name: "rosenbrock-5d",
            space: box_space("x", 5, -5.0, 10.0),
            known_optimum: Some(0.0),
            evaluate: |c| rosenbrock(&coords(c, 5)),
        },
        FuncSpec {
            name: "ackley-5d",
            space: box_space("x", 5, -32.768, 32.768),
            known_optimum: Some(0.0),
            evaluate: |c| ackley(&coords(c, 5)),
        },
        FuncSpec {
            name: "mixed-5d",
            space: mixed_space(),
            known_optimum: Some(0.0),
            evaluate: mixed,
        },
    ]
}

/// Resolves `all` or a comma-separated list of builtin names.
pub fn select_functions(list: &str) -> Result<Vec<FuncSpec>, UnknownFunction> {
    let all = builtin_functions();
    if list.trim() == "all" {
        return Ok(all);
    }
    let mut pool: Vec<Option<FuncSpec>> = all.into_iter().map(Some).collect();
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let slot = pool
            .iter_mut()
            .find(|f| f.as_ref().is_some_and(|f| f.name == name))
            .ok_or_else(|| UnknownFunction(name.to_string()))?;
        out.push(slot.take().expect("matched"));
    }
    if out.is_empty() {
        return Err(UnknownFunction(list.to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use squirrel_core::ParamValue;

    fn at(f: &FuncSpec, x: &[f64]) -> f64 {
        let mut c = Configuration::new();
        for (i, v) in x.iter().enumerate() {
            c = c.with(&format!("x{i}"), ParamValue::Float(*v));
        }
        f.space.validate(&c).unwrap();
        f.evaluate(&c)
    }

    fn named(name: &str) -> FuncSpec {
        select_functions(name).unwrap().pop().unwrap()
    }

    #[test]
    fn analytic_optima() {
        assert_eq!(at(&named("sphere-10d"), &[0.0; 10]), 0.0);
        assert!(at(&named("ackley-5d"), &[0.0; 5]).abs() < 1e-12);
        assert_eq!(at(&named("rosenbrock-5d"), &[1.0; 5]), 0.0);
        let b = named("branin-2d");
        for x in [[-PI, 12.275], [PI, 2.275], [9.424_78, 2.475]] {
            assert!((at(&b, &x) - 0.397_887).abs() < 1e-5);
        }
    }

    #[test]
    fn mixed_optimum_and_bowls() {
        let f = named("mixed-5d");
        let best = Configuration::new()
            .with("x1", ParamValue::Float(1.0))
            .with("x2", ParamValue::Float(-2.0))
            .with("lr", ParamValue::Float(0.01))
            .with("n", ParamValue::Int(7))
            .with("bowl", ParamValue::Choice("a".into()));
        f.space.validate(&best).unwrap();
        assert!(f.evaluate(&best).abs() < 1e-12);
        let other = best.clone().with("bowl", ParamValue::Choice("c".into()));
        assert!(f.evaluate(&other) > 1.0);
    }

    #[test]
    fn selection() {
        assert_eq!(select_functions("all").unwrap().len(), 5);
        let two = select_functions("branin-2d, sphere-10d").unwrap();
        assert_eq!(two.iter().map(|f| f.name).collect::<Vec<_>>(), ["branin-2d", "sphere-10d"]);
        assert!(select_functions("nope").is_err());
        assert!(select_functions("").is_err());
    }
}
