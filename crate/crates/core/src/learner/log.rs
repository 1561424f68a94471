//! Decision log, one JSON object per line.

use serde::Serialize;

use crate::machine::{ConcreteInput, ConcreteOutput};
use crate::oracle::Level;

/// One learner decision. `t` is the trace length when it was taken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Home {
        t: usize,
        h: Vec<ConcreteInput>,
        response: Vec<String>,
        config: String,
        state: Option<String>,
    },
    Characterise {
        t: usize,
        state: String,
        w: Vec<ConcreteInput>,
        response: Vec<String>,
    },
    Transfer {
        t: usize,
        from: String,
        path: Vec<ConcreteInput>,
        goal: String,
    },
    Learn {
        t: usize,
        state: String,
        input: ConcreteInput,
        output: ConcreteOutput,
        target: String,
    },
    Sample {
        t: usize,
        state: String,
        input: ConcreteInput,
        output: ConcreteOutput,
    },
    Inconsistency {
        t: usize,
        kind: String,
        state: String,
        input: ConcreteInput,
        observed: String,
        expected: String,
        h: Vec<ConcreteInput>,
        #[serde(rename = "W")]
        w: Vec<Vec<ConcreteInput>>,
    },
    Counterexample {
        t: usize,
        level: Level,
        inputs: Vec<ConcreteInput>,
        expected: String,
        observed: ConcreteOutput,
    },
    Restart {
        t: usize,
        restarts: usize,
    },
    Reduce {
        t: usize,
        before: usize,
        after: usize,
    },
    Generalise {
        t: usize,
        transitions: usize,
    },
    Done {
        t: usize,
        backbone_steps: usize,
        oracle_steps: usize,
        counterexamples: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    /// Line-delimited JSON.
    pub fn to_ldjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialise"));
            out.push('\n');
        }
        out
    }

    pub fn first_inconsistency(&self) -> Option<&Event> {
        self.events.iter().find(|e| matches!(e, Event::Inconsistency { .. }))
    }
}
