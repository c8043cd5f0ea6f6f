//! In-process two-party channel that records the exact size of every frame.
//!
//! Frame layout: round tag (1 byte), payload length (u64 LE), payload.

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;

use crate::error::{ReconError, Result};
use crate::wire::{ByteReader, ByteWriter};

pub const FRAME_HEADER_BYTES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Direction {
    #[serde(rename = "A->B")]
    AliceToBob,
    #[serde(rename = "B->A")]
    BobToAlice,
}

impl Direction {
    fn slot(self) -> usize {
        match self {
            Direction::AliceToBob => 0,
            Direction::BobToAlice => 1,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::AliceToBob => "A->B",
            Direction::BobToAlice => "B->A",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Round {
    pub direction: Direction,
    pub tag: u8,
    pub bits: u64,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Transcript {
    rounds: Vec<Round>,
}

impl Transcript {
    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn total_bits(&self) -> u64 {
        self.rounds.iter().map(|r| r.bits).sum()
    }

    pub fn bits_in(&self, direction: Direction) -> u64 {
        self.rounds.iter().filter(|r| r.direction == direction).map(|r| r.bits).sum()
    }

    /// Total bits of rounds carrying `tag`.
    pub fn bits_with_tag(&self, tag: u8) -> u64 {
        self.rounds.iter().filter(|r| r.tag == tag).map(|r| r.bits).sum()
    }

    pub fn count_label(&self, label: &str) -> usize {
        self.rounds.iter().filter(|r| r.label == label).count()
    }

    /// Number of direction changes plus one; zero for an empty transcript.
    pub fn num_exchanges(&self) -> usize {
        let mut n = 0;
        let mut last = None;
        for r in &self.rounds {
            if last != Some(r.direction) {
                n += 1;
                last = Some(r.direction);
            }
        }
        n
    }

    pub fn append(&mut self, other: Transcript) {
        self.rounds.extend(other.rounds);
    }
}

#[derive(Debug, Default)]
pub struct Transport {
    queues: [VecDeque<Vec<u8>>; 2],
    transcript: Transcript,
}

pub fn encode_frame(tag: u8, payload: &[u8]) -> Vec<u8> {
    let mut w = ByteWriter::with_capacity(FRAME_HEADER_BYTES + payload.len());
    w.u8(tag).blob(payload);
    w.finish()
}

pub fn decode_frame(frame: &[u8]) -> Result<(u8, &[u8])> {
    let mut r = ByteReader::new(frame);
    let tag = r.u8()?;
    let payload = r.blob()?;
    r.finish()?;
    Ok((tag, payload))
}

impl Transport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues one frame and records its exact size.
    pub fn send(&mut self, direction: Direction, tag: u8, label: &str, payload: &[u8]) {
        let frame = encode_frame(tag, payload);
        self.transcript.rounds.push(Round {
            direction,
            tag,
            bits: frame.len() as u64 * 8,
            label: label.to_string(),
        });
        self.queues[direction.slot()].push_back(frame);
    }

    /// Pops the oldest frame travelling in `direction`; its tag must match.
    pub fn recv(&mut self, direction: Direction, tag: u8) -> Result<Vec<u8>> {
        let frame = self.queues[direction.slot()]
            .pop_front()
            .ok_or_else(|| ReconError::Wire(format!("no pending frame {direction}")))?;
        let (got, payload) = decode_frame(&frame)?;
        if got != tag {
            return Err(ReconError::Wire(format!("expected round tag {tag}, got {got}")));
        }
        Ok(payload.to_vec())
    }

    pub fn pending(&self, direction: Direction) -> usize {
        self.queues[direction.slot()].len()
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}
