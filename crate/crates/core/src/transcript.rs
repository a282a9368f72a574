//! The ordered record of executed batches and its line-delimited JSON form.
//!
//! One JSON object per line, one line per executed batch, in transcript
//! order (close time, then slot id):
//!
//! ```text
//! {"close_time":4,"slot_id":2,"mechanism_id":4,"kind":"binary-blanket","m":4,"d":1,"gamma":0.0,"messages":[1,0,1,1]}
//! ```
//!
//! `messages` is the shuffled multiset exactly as the server received it:
//! bits for `binary-blanket`, `coord << 32 | level` integers for
//! `vector-fixedpoint`, and `[coord, value]` pairs for `oracle`.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::MechanismKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord<M> {
    pub close_time: usize,
    pub slot_id: usize,
    pub mechanism_id: usize,
    pub kind: MechanismKind,
    pub m: usize,
    pub d: usize,
    pub gamma: f64,
    pub messages: Vec<M>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript<M> {
    records: Vec<BatchRecord<M>>,
}

impl<M> Default for Transcript<M> {
    fn default() -> Self {
        Self { records: Vec::new() }
    }
}

impl<M> Transcript<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[BatchRecord<M>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record, keeping `(close_time, slot_id)` strictly increasing.
    pub fn push(&mut self, record: BatchRecord<M>) -> Result<()> {
        if let Some(last) = self.records.last() {
            if (record.close_time, record.slot_id) <= (last.close_time, last.slot_id) {
                return Err(Error::MalformedTranscript(format!(
                    "record (t={}, slot={}) after (t={}, slot={})",
                    record.close_time, record.slot_id, last.close_time, last.slot_id
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }
}

impl<M: Serialize> Transcript<M> {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(buf)
    }
}

impl<M: DeserializeOwned> Transcript<M> {
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut transcript = Transcript::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: BatchRecord<M> = serde_json::from_str(&line)
                .map_err(|e| Error::MalformedTranscript(format!("line {}: {e}", lineno + 1)))?;
            if record.messages.len() != record.m * record.d {
                return Err(Error::MalformedTranscript(format!(
                    "line {}: {} messages for m={} d={}",
                    lineno + 1,
                    record.messages.len(),
                    record.m,
                    record.d
                )));
            }
            transcript.push(record)?;
        }
        Ok(transcript)
    }
}
