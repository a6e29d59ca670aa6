//! Structured run traces.
//!
//! Every externally visible event in a planning run is appended to a trace
//! as a JSON line. Records carry a monotone sequence number and no
//! timestamps, so a replayed run produces a byte-identical trace.

use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TraceEvent {
    BackendCall {
        role: String,
        agent: String,
        digest: String,
        response_bytes: usize,
    },
    Validation {
        subject: String,
        valid: bool,
        detail: String,
    },
    PromptVersion {
        agent: String,
        version: u32,
        note: String,
    },
    Iteration {
        iteration: u32,
        outcome: String,
    },
    Escalation {
        from: String,
        to: String,
        decision: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct TraceRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// Append-only event log for one run.
#[derive(Debug, Default)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn push(&mut self, event: TraceEvent) {
        let seq = self.records.len() as u64;
        self.records.push(TraceRecord { seq, event });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("trace record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, mut sink: impl Write) -> std::io::Result<()> {
        sink.write_all(self.to_jsonl().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_numbers_are_monotone_from_zero() {
        let mut trace = Trace::new();
        trace.push(TraceEvent::Iteration {
            iteration: 0,
            outcome: "failure".into(),
        });
        trace.push(TraceEvent::Validation {
            subject: "joint-plan".into(),
            valid: false,
            detail: "(open fridge)".into(),
        });
        assert_eq!(trace.records()[0].seq, 0);
        assert_eq!(trace.records()[1].seq, 1);
    }

    #[test]
    fn jsonl_round_trips_and_has_no_timestamps() {
        let mut trace = Trace::new();
        trace.push(TraceEvent::BackendCall {
            role: "decompose".into(),
            agent: "global".into(),
            digest: "ab".into(),
            response_bytes: 10,
        });
        let text = trace.to_jsonl();
        assert!(!text.contains("time"));
        let parsed: TraceRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(parsed, trace.records()[0]);
    }
}
