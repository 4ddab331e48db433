use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::OnceLock;

use serde_json::{json, Value};

use crate::error::ApiError;

/// A long-running computation. The outcome is written once and then frozen.
#[derive(Debug)]
pub struct Job {
    pub kind: &'static str,
    running: AtomicBool,
    done: AtomicUsize,
    total: AtomicUsize,
    outcome: OnceLock<Result<Value, ApiError>>,
}

impl Job {
    pub fn new(kind: &'static str) -> Self {
        Job {
            kind,
            running: AtomicBool::new(false),
            done: AtomicUsize::new(0),
            total: AtomicUsize::new(0),
            outcome: OnceLock::new(),
        }
    }

    pub fn start(&self) {
        self.running.store(true, Ordering::Release);
    }

    pub fn progress(&self, done: usize, total: usize) {
        self.total.store(total, Ordering::Release);
        self.done.fetch_max(done, Ordering::AcqRel);
    }

    pub fn finish(&self, outcome: Result<Value, ApiError>) {
        let _ = self.outcome.set(outcome);
    }

    /// `{job_id, kind, status, progress, result, error}`.
    pub fn view(&self, id: &str) -> Value {
        let (status, progress, result, error) = match self.outcome.get() {
            Some(Ok(v)) => ("done", 1.0, v.clone(), Value::Null),
            Some(Err(e)) => ("failed", 1.0, Value::Null, e.body.clone()),
            None if self.running.load(Ordering::Acquire) => {
                let total = self.total.load(Ordering::Acquire);
                let frac = if total == 0 { 0.0 } else { self.done.load(Ordering::Acquire) as f64 / total as f64 };
                ("running", frac, Value::Null, Value::Null)
            }
            None => ("queued", 0.0, Value::Null, Value::Null),
        };
        json!({ "job_id": id, "kind": self.kind, "status": status, "progress": progress, "result": result, "error": error })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle_and_immutability() {
        let job = Job::new("select");
        assert_eq!(job.view("j1")["status"], "queued");
        job.start();
        job.progress(3, 12);
        let v = job.view("j1");
        assert_eq!(v["status"], "running");
        assert_eq!(v["progress"], 0.25);
        job.finish(Ok(json!({ "a": 1 })));
        job.finish(Ok(json!({ "a": 2 })));
        let v = job.view("j1");
        assert_eq!(v["status"], "done");
        assert_eq!(v["result"]["a"], 1);
    }
}
