//! Named task functions.
//!
//! Tasks cross process boundaries as a registered name plus serialized
//! arguments, so the registry must be identical in the client and in every
//! worker process. Workers always use [`TaskRegistry::builtin`], which is
//! assembled from the same build; custom registries are only meaningful
//! with in-process executors.

use crate::task::TaskError;
use crate::value::Value;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

pub type TaskFn = fn(&[Value]) -> Result<Value, TaskError>;

#[derive(Default)]
pub struct TaskRegistry {
    entries: HashMap<&'static str, TaskFn>,
}

impl TaskRegistry {
    pub fn new() -> TaskRegistry {
        TaskRegistry::default()
    }

    /// The full registry every worker process constructs at startup.
    pub fn builtin() -> &'static Arc<TaskRegistry> {
        static BUILTIN: OnceLock<Arc<TaskRegistry>> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            let mut reg = TaskRegistry::new();
            reg.register("identity", task_identity);
            reg.register("const_5", task_const_5);
            reg.register("add1", task_add1);
            reg.register("sum_ints", task_sum_ints);
            reg.register("fail_app", task_fail_app);
            crate::apps::cholesky::register_tasks(&mut reg);
            crate::apps::mapreduce::register_tasks(&mut reg);
            crate::apps::synthetic::register_tasks(&mut reg);
            crate::apps::failures::register_tasks(&mut reg);
            Arc::new(reg)
        })
    }

    /// # Panics
    /// Panics on duplicate names: the registry is assembled once, at build
    /// time, and a duplicate is a programming error.
    pub fn register(&mut self, name: &'static str, f: TaskFn) {
        let previous = self.entries.insert(name, f);
        assert!(previous.is_none(), "duplicate task function name {name:?}");
    }

    pub fn get(&self, name: &str) -> Option<TaskFn> {
        self.entries.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }
}

pub(crate) fn arg(args: &[Value], index: usize) -> Result<&Value, TaskError> {
    args.get(index).ok_or_else(|| {
        TaskError::Application(format!("missing argument {index} (got {})", args.len()))
    })
}

pub(crate) fn int_arg(args: &[Value], index: usize) -> Result<i64, TaskError> {
    arg(args, index)?
        .as_int()
        .ok_or_else(|| TaskError::Application(format!("argument {index} must be an int")))
}

pub(crate) fn float_arg(args: &[Value], index: usize) -> Result<f64, TaskError> {
    arg(args, index)?
        .as_float()
        .ok_or_else(|| TaskError::Application(format!("argument {index} must be a float")))
}

fn task_identity(args: &[Value]) -> Result<Value, TaskError> {
    Ok(arg(args, 0)?.clone())
}

fn task_const_5(_args: &[Value]) -> Result<Value, TaskError> {
    Ok(Value::Int(5))
}

fn task_add1(args: &[Value]) -> Result<Value, TaskError> {
    Ok(Value::Int(int_arg(args, 0)? + 1))
}

fn task_sum_ints(args: &[Value]) -> Result<Value, TaskError> {
    let mut total = 0i64;
    for (i, v) in args.iter().enumerate() {
        match v {
            Value::Int(x) => total += x,
            Value::List(items) => {
                for item in items {
                    total += item.as_int().ok_or_else(|| {
                        TaskError::Application(format!("argument {i} holds a non-int"))
                    })?;
                }
            }
            _ => {
                return Err(TaskError::Application(format!(
                    "argument {i} must be an int or int list"
                )))
            }
        }
    }
    Ok(Value::Int(total))
}

fn task_fail_app(args: &[Value]) -> Result<Value, TaskError> {
    let message = args
        .first()
        .and_then(Value::as_text)
        .unwrap_or("deliberate failure")
        .to_owned();
    Err(TaskError::Application(message))
}
