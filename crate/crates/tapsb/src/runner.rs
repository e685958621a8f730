//! The execution-side task wrapper.
//!
//! Every backend funnels tasks through [`run_task`]: resolve transformed
//! arguments, invoke the registered function (catching panics), transform
//! the result if it passes the filter, and report timings. The same code
//! runs inline for the serial executor, on pool threads, and inside worker
//! processes.

use crate::executor::DataPlan;
use crate::future::{ExecReport, TaskOutcome};
use crate::registry::TaskRegistry;
use crate::task::{epoch_micros, Payload, TaskError};
use crate::transform::{Transformer, TransformerSpec};
use crate::value::Value;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

/// Per-executor cache of constructed transformers, keyed by spec.
#[derive(Default)]
pub struct TransformerCache {
    built: Mutex<HashMap<TransformerSpec, Arc<dyn Transformer>>>,
}

impl TransformerCache {
    pub fn new() -> TransformerCache {
        TransformerCache::default()
    }

    pub fn get(&self, spec: &TransformerSpec) -> Result<Arc<dyn Transformer>, TaskError> {
        if let Some(found) = self.built.lock().unwrap().get(spec) {
            return Ok(Arc::clone(found));
        }
        let fresh = spec
            .build()
            .map_err(|e| TaskError::Transform(e.to_string()))?;
        let mut built = self.built.lock().unwrap();
        Ok(Arc::clone(built.entry(spec.clone()).or_insert(fresh)))
    }
}

fn resolve_payload(
    payload: &Payload,
    plan: Option<&DataPlan>,
    cache: &TransformerCache,
) -> Result<Value, TaskError> {
    match payload {
        Payload::Value(v) => Ok(v.clone()),
        Payload::Ident(ident) => {
            let plan = plan.ok_or_else(|| {
                TaskError::Transform(format!(
                    "transformed argument {ident} but no data plan supplied"
                ))
            })?;
            let transformer = cache.get(&plan.transformer)?;
            transformer
                .resolve(ident)
                .map_err(|e| TaskError::Transform(e.to_string()))
        }
        Payload::Seq(items) => {
            let mut resolved = Vec::with_capacity(items.len());
            for item in items {
                resolved.push(resolve_payload(item, plan, cache)?);
            }
            Ok(Value::List(resolved))
        }
    }
}

/// Executes one task to a terminal outcome. Never panics: function panics
/// become `TaskError::Panic`.
pub fn run_task(
    registry: &TaskRegistry,
    function: &str,
    args: &[Payload],
    plan: Option<&DataPlan>,
    cache: &TransformerCache,
) -> TaskOutcome {
    let exec_started_at = epoch_micros();
    let mut report = ExecReport {
        exec_started_at,
        exec_ended_at: exec_started_at,
        ..ExecReport::default()
    };

    let resolve_start = Instant::now();
    let mut resolved = Vec::with_capacity(args.len());
    let mut resolve_error = None;
    for payload in args {
        match resolve_payload(payload, plan, cache) {
            Ok(v) => resolved.push(v),
            Err(e) => {
                resolve_error = Some(e);
                break;
            }
        }
    }
    report.resolve_args_us = resolve_start.elapsed().as_micros() as u64;
    if let Some(error) = resolve_error {
        report.exec_ended_at = epoch_micros();
        return TaskOutcome {
            result: Err(error),
            report,
        };
    }

    let result = match registry.get(function) {
        None => Err(TaskError::Application(format!(
            "function not registered: {function}"
        ))),
        Some(task_fn) => {
            match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| task_fn(&resolved))) {
                Ok(result) => result,
                Err(panic) => Err(TaskError::Panic(panic_message(panic.as_ref()))),
            }
        }
    };

    let result = match result {
        Err(e) => Err(e),
        Ok(value) => {
            let mut out = Payload::Value(value);
            if let Some(plan) = plan {
                if let Payload::Value(ref v) = out {
                    if plan.filter.check(v) {
                        let transform_start = Instant::now();
                        let transformed = cache.get(&plan.transformer).and_then(|t| {
                            t.transform(v)
                                .map_err(|e| TaskError::Transform(e.to_string()))
                        });
                        report.transform_result_us = transform_start.elapsed().as_micros() as u64;
                        match transformed {
                            Ok(ident) => out = Payload::Ident(ident),
                            Err(e) => {
                                report.exec_ended_at = epoch_micros();
                                return TaskOutcome {
                                    result: Err(e),
                                    report,
                                };
                            }
                        }
                    }
                }
            }
            Ok(out)
        }
    };

    report.exec_ended_at = epoch_micros();
    TaskOutcome { result, report }
}

pub(crate) fn panic_message(panic: &(dyn std::any::Any + Send)) -> String {
    if let Some(text) = panic.downcast_ref::<&str>() {
        (*text).to_owned()
    } else if let Some(text) = panic.downcast_ref::<String>() {
        text.clone()
    } else {
        "opaque panic payload".to_owned()
    }
}
