//! Line-oriented JSON ask/tell session.
//!
//! Requests, one JSON object per line:
//!
//! ```text
//! {"op":"init","space":[...],"seed":0,"registry_path":"reg.json"}
//! {"op":"suggest"}
//! {"op":"observe","values":[1.5,null,...]}
//! {"op":"observe","configs":[...],"values":[...]}
//! ```
//!
//! `null` values mark failed evaluations. Every request gets one response
//! line; errors come back as `{"ok":false,"error":"..."}`.

use serde::Deserialize;
use serde_json::{json, Value};

use crate::scheduler::{Optimizer, OptimizerConfig, SchedulerError};
use crate::space::{ConfigSpace, Configuration};
use crate::warmstart::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad space spec, registry or optimizer settings.
    Config,
    /// Malformed request or out-of-order call.
    Protocol,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub body: Value,
    pub error: Option<ErrorClass>,
}

impl Response {
    fn ok(body: Value) -> Self {
        Response { body, error: None }
    }

    fn fail(class: ErrorClass, message: impl std::fmt::Display) -> Self {
        Response {
            body: json!({"ok": false, "error": message.to_string()}),
            error: Some(class),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum Request {
    Init {
        space: Value,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        registry_path: Option<String>,
    },
    Suggest,
    Observe {
        #[serde(default)]
        configs: Option<Vec<Configuration>>,
        values: Vec<Option<f64>>,
    },
}

#[derive(Debug)]
pub struct Session {
    config: OptimizerConfig,
    optimizer: Option<Optimizer>,
}

impl Session {
    pub fn new(config: OptimizerConfig) -> Self {
        Session {
            config,
            optimizer: None,
        }
    }

    pub fn with_optimizer(optimizer: Optimizer) -> Self {
        Session {
            config: OptimizerConfig::default(),
            optimizer: Some(optimizer),
        }
    }

    pub fn optimizer(&self) -> Option<&Optimizer> {
        self.optimizer.as_ref()
    }

    pub fn handle_line(&mut self, line: &str) -> Response {
        let request: Request = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => return Response::fail(ErrorClass::Protocol, format!("bad request: {e}")),
        };
        match request {
            Request::Init {
                space,
                seed,
                registry_path,
            } => {
                if self.optimizer.is_some() {
                    return Response::fail(ErrorClass::Protocol, "session already initialized");
                }
                let space = match ConfigSpace::from_json(space) {
                    Ok(s) => s,
                    Err(e) => return Response::fail(ErrorClass::Config, e),
                };
                let registry = match registry_path.map(Registry::load).transpose() {
                    Ok(r) => r,
                    Err(e) => return Response::fail(ErrorClass::Config, e),
                };
                let opt = Optimizer::new(space, self.config.clone(), registry.as_ref(), seed);
                let matched = opt.warmstart_matched();
                self.optimizer = Some(opt);
                Response::ok(json!({"ok": true, "warmstart": matched}))
            }
            Request::Suggest => {
                let Some(opt) = self.optimizer.as_mut() else {
                    return Response::fail(ErrorClass::Protocol, "session not initialized");
                };
                let batch = opt.batch_index();
                match opt.suggest() {
                    Ok(configs) => Response::ok(json!({"batch": batch, "configs": configs})),
                    Err(e) => Response::fail(class_of(&e), e),
                }
            }
            Request::Observe { configs, values } => {
                let Some(opt) = self.optimizer.as_mut() else {
                    return Response::fail(ErrorClass::Protocol, "session not initialized");
                };
                let values: Vec<f64> = values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
                let result = match configs {
                    Some(configs) => opt.observe(&configs, &values),
                    None => opt.observe_values(&values),
                };
                match result {
                    Ok(()) => Response::ok(json!({"ok": true, "finished": opt.is_finished()})),
                    Err(e) => Response::fail(class_of(&e), e),
                }
            }
        }
    }
}

fn class_of(e: &SchedulerError) -> ErrorClass {
    match e {
        SchedulerError::Space(_) => ErrorClass::Config,
        _ => ErrorClass::Protocol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPACE: &str = r#"[{"name":"x","kind":"continuous","lower":0,"upper":1}]"#;

    #[test]
    fn ask_tell_round_trip() {
        let mut s = Session::new(OptimizerConfig::default());
        let r = s.handle_line(&format!(r#"{{"op":"init","space":{SPACE},"seed":3}}"#));
        assert_eq!(r.body, json!({"ok": true, "warmstart": false}));
        let r = s.handle_line(r#"{"op":"suggest"}"#);
        assert!(r.error.is_none());
        assert_eq!(r.body["configs"].as_array().unwrap().len(), 8);
        let r = s.handle_line(r#"{"op":"observe","values":[1,2,3,4,5,6,7,null]}"#);
        assert_eq!(r.body["ok"], json!(true));
        let trials = s.optimizer().unwrap().history().trials();
        assert_eq!(trials[7].y, f64::INFINITY);
    }

    #[test]
    fn error_classes() {
        let mut s = Session::new(OptimizerConfig::default());
        assert_eq!(s.handle_line("not json").error, Some(ErrorClass::Protocol));
        assert_eq!(s.handle_line(r#"{"op":"suggest"}"#).error, Some(ErrorClass::Protocol));
        let bad_space = r#"{"op":"init","space":[{"name":"x","kind":"continuous","lower":2,"upper":1}]}"#;
        assert_eq!(s.handle_line(bad_space).error, Some(ErrorClass::Config));
        let missing = format!(r#"{{"op":"init","space":{SPACE},"registry_path":"/nonexistent.json"}}"#);
        assert_eq!(s.handle_line(&missing).error, Some(ErrorClass::Config));
        s.handle_line(&format!(r#"{{"op":"init","space":{SPACE}}}"#));
        let r = s.handle_line(r#"{"op":"observe","values":[1]}"#);
        assert_eq!(r.error, Some(ErrorClass::Protocol));
        assert_eq!(r.body["ok"], json!(false));
    }
}
