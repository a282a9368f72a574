//! The concurrent shuffle framework: `k` shuffler slots driven by a static
//! batch plan.
//!
//! Each call to [`ShuffleRuntime::step`] processes one user in four fixed
//! sub-steps: activate the batches that open now, encode and submit the
//! user's value to every active batch containing it, execute every batch that
//! became full (in slot order), and append the executed batches to the
//! transcript.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mechanisms::SumMechanism;
use crate::plan::{PlanNode, TimeSchedule, TreePlan};
use crate::rng::{self, Purpose, StreamRng};
use crate::transcript::{BatchRecord, Transcript};

/// A batch in progress on one shuffler.
#[derive(Debug)]
pub struct ActiveBatch<Mech: SumMechanism> {
    pub node: PlanNode,
    pub mechanism: Mech,
    /// Flattened messages in arrival order.
    buffer: Vec<Mech::Message>,
    /// Start offset of each submitted user's messages within `buffer`.
    user_offsets: Vec<usize>,
    remaining: usize,
    encode_rng: StreamRng,
}

impl<Mech: SumMechanism> ActiveBatch<Mech> {
    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn submitted_users(&self) -> usize {
        self.user_offsets.len()
    }

    /// Messages of the `i`-th submitted user.
    pub fn user_messages(&self, i: usize) -> &[Mech::Message] {
        let lo = self.user_offsets[i];
        let hi = self.user_offsets.get(i + 1).copied().unwrap_or(self.buffer.len());
        &self.buffer[lo..hi]
    }
}

// one per slot, so boxing the active batch buys nothing
#[allow(clippy::large_enum_variant)]
#[derive(Debug)]
pub enum SlotState<Mech: SumMechanism> {
    Inactive,
    Active(ActiveBatch<Mech>),
}

#[derive(Debug)]
pub struct ShufflerSlot<Mech: SumMechanism> {
    slot_id: usize,
    state: SlotState<Mech>,
}

/// Output of an executed batch: the shuffled multiset and the mechanism that
/// produced it, ready for the server to decode.
#[derive(Debug)]
pub struct ExecutedBatch<Mech: SumMechanism> {
    pub node: PlanNode,
    pub slot_id: usize,
    pub close_time: usize,
    pub mechanism: Mech,
    pub messages: Vec<Mech::Message>,
}

impl<Mech: SumMechanism> ShufflerSlot<Mech> {
    pub fn new(slot_id: usize) -> Self {
        Self { slot_id, state: SlotState::Inactive }
    }

    pub fn slot_id(&self) -> usize {
        self.slot_id
    }

    pub fn state(&self) -> &SlotState<Mech> {
        &self.state
    }

    pub fn is_active(&self) -> bool {
        matches!(self.state, SlotState::Active(_))
    }

    pub fn active(&self) -> Option<&ActiveBatch<Mech>> {
        match &self.state {
            SlotState::Active(batch) => Some(batch),
            SlotState::Inactive => None,
        }
    }

    pub fn activate(&mut self, node: PlanNode, mechanism: Mech, encode_rng: StreamRng) -> Result<()> {
        if self.is_active() {
            return Err(Error::ProtocolViolation(format!("slot {} is already active", self.slot_id)));
        }
        let m = mechanism.spec().batch_size;
        if m != node.len() {
            return Err(Error::ProtocolViolation(format!(
                "mechanism batch size {m} does not match node range of {} users",
                node.len()
            )));
        }
        self.state = SlotState::Active(ActiveBatch {
            node,
            buffer: Vec::with_capacity(m * mechanism.messages_per_user()),
            user_offsets: Vec::with_capacity(m),
            remaining: m,
            mechanism,
            encode_rng,
        });
        Ok(())
    }

    /// Buffers one user's already-encoded messages.
    pub fn submit(&mut self, user_messages: Vec<Mech::Message>) -> Result<()> {
        match &mut self.state {
            SlotState::Active(batch) if batch.remaining > 0 => {
                batch.user_offsets.push(batch.buffer.len());
                batch.buffer.extend(user_messages);
                batch.remaining -= 1;
                Ok(())
            }
            SlotState::Active(_) => Err(Error::ProtocolViolation(format!("slot {} is full", self.slot_id))),
            SlotState::Inactive => Err(Error::ProtocolViolation(format!("slot {} is inactive", self.slot_id))),
        }
    }

    /// Encodes `value` with the batch's own encoder stream and submits it.
    pub fn encode_and_submit(&mut self, value: &[f64]) -> Result<()> {
        let msgs = match &mut self.state {
            SlotState::Active(batch) => batch.mechanism.encode(value, &mut batch.encode_rng)?,
            SlotState::Inactive => {
                return Err(Error::ProtocolViolation(format!("slot {} is inactive", self.slot_id)))
            }
        };
        self.submit(msgs)
    }

    /// When the batch is full, returns a uniformly random permutation of all
    /// buffered messages and deactivates the slot.
    pub fn execute_if_full<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<(PlanNode, Mech, Vec<Mech::Message>)> {
        match &self.state {
            SlotState::Active(batch) if batch.remaining == 0 => {}
            _ => return None,
        }
        let SlotState::Active(batch) = std::mem::replace(&mut self.state, SlotState::Inactive) else {
            unreachable!()
        };
        let mut messages = batch.buffer;
        messages.shuffle(rng);
        Some((batch.node, batch.mechanism, messages))
    }
}

pub struct ShuffleRuntime<Mech: SumMechanism> {
    plan: Arc<TreePlan>,
    schedule: Vec<TimeSchedule>,
    slots: Vec<ShufflerSlot<Mech>>,
    shuffle_rngs: Vec<Option<StreamRng>>,
    seed: u64,
    last_time: usize,
    transcript: Option<Transcript<Mech::Message>>,
}

impl<Mech: SumMechanism> ShuffleRuntime<Mech> {
    /// A runtime with one slot per plan level.
    pub fn new(plan: Arc<TreePlan>, seed: u64) -> Self {
        let k = plan.k();
        Self::with_slots(plan, k, seed)
    }

    /// A runtime with an explicit number of slots. A plan with more levels
    /// than slots fails with capacity-exceeded when the extra level activates.
    pub fn with_slots(plan: Arc<TreePlan>, slots: usize, seed: u64) -> Self {
        let schedule = plan.schedule();
        Self {
            plan,
            schedule,
            slots: (1..=slots).map(ShufflerSlot::new).collect(),
            shuffle_rngs: (0..slots).map(|_| None).collect(),
            seed,
            last_time: 0,
            transcript: None,
        }
    }

    /// Keep a copy of every executed batch.
    pub fn record_transcript(mut self) -> Self {
        self.transcript = Some(Transcript::new());
        self
    }

    pub fn plan(&self) -> &TreePlan {
        &self.plan
    }

    pub fn slots(&self) -> &[ShufflerSlot<Mech>] {
        &self.slots
    }

    pub fn active_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_active()).count()
    }

    pub fn last_time(&self) -> usize {
        self.last_time
    }

    pub fn transcript(&self) -> Option<&Transcript<Mech::Message>> {
        self.transcript.as_ref()
    }

    pub fn take_transcript(&mut self) -> Option<Transcript<Mech::Message>> {
        self.transcript.take()
    }

    /// True once every slot is inactive and the whole horizon was processed.
    pub fn is_finished(&self) -> bool {
        self.last_time == self.plan.horizon() && self.active_count() == 0
    }

    /// Processes user `t` holding `value`. `mechanism_for` builds the
    /// mechanism of each batch that opens at `t`.
    pub fn step<F>(&mut self, t: usize, value: &[f64], mut mechanism_for: F) -> Result<Vec<ExecutedBatch<Mech>>>
    where
        F: FnMut(&PlanNode) -> Result<Mech>,
    {
        if t != self.last_time + 1 {
            return Err(Error::ProtocolViolation(format!("expected time {}, got {t}", self.last_time + 1)));
        }
        if t > self.plan.horizon() {
            return Err(Error::ProtocolViolation(format!("time {t} is past the horizon {}", self.plan.horizon())));
        }

        let k = self.slots.len();
        for &id in &self.schedule[t - 1].activations {
            let node = *self.plan.node(id);
            if node.level > k {
                return Err(Error::CapacityExceeded { level: node.level, k });
            }
            let mechanism = mechanism_for(&node)?;
            let encode_rng = rng::stream(self.seed, Purpose::Encode, node.id as u64);
            self.slots[node.level - 1].activate(node, mechanism, encode_rng)?;
            self.shuffle_rngs[node.level - 1] = Some(rng::stream(self.seed, Purpose::Shuffle, node.id as u64));
        }

        for slot in &mut self.slots {
            if slot.active().is_some_and(|b| b.node.contains(t)) {
                slot.encode_and_submit(value)?;
            }
        }

        let mut executed = Vec::new();
        for (slot, rng_slot) in self.slots.iter_mut().zip(&mut self.shuffle_rngs) {
            let Some(rng) = rng_slot.as_mut() else { continue };
            if let Some((node, mechanism, messages)) = slot.execute_if_full(rng) {
                *rng_slot = None;
                if node.end != t {
                    return Err(Error::ProtocolViolation(format!("node {} closed at {t}, planned {}", node.id, node.end)));
                }
                if let Some(tr) = &mut self.transcript {
                    let spec = mechanism.spec();
                    tr.push(BatchRecord {
                        close_time: t,
                        slot_id: slot.slot_id(),
                        mechanism_id: node.id,
                        kind: spec.kind,
                        m: spec.batch_size,
                        d: mechanism.messages_per_user(),
                        gamma: mechanism.gamma(),
                        messages: messages.clone(),
                    })?;
                }
                executed.push(ExecutedBatch { node, slot_id: slot.slot_id(), close_time: t, mechanism, messages });
            }
        }
        self.last_time = t;
        Ok(executed)
    }
}
