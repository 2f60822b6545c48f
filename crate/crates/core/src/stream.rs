//! Client events and validated event streams.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::Point;

/// Largest accepted client id. Solution state is indexed by id.
pub const MAX_CLIENT_ID: u32 = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u32);

impl ClientId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Insert { client: ClientId, at: Point },
    Delete { client: ClientId },
}

impl Event {
    pub fn client(&self) -> ClientId {
        match *self {
            Event::Insert { client, .. } | Event::Delete { client } => client,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StreamError {
    #[error("event {index}: client {client} inserted twice")]
    DoubleInsert { index: usize, client: ClientId },
    #[error("event {index}: client {client} is not active")]
    DanglingDelete { index: usize, client: ClientId },
    #[error("event {index}: point {point} is outside the metric (size {size})")]
    UnknownPoint { index: usize, point: Point, size: usize },
    #[error("event {index}: client id {client} exceeds the supported maximum")]
    IdTooLarge { index: usize, client: ClientId },
}

/// An ordered sequence of insertions and deletions with the usual
/// well-formedness guarantees: ids are inserted at most once and deletes only
/// target active clients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventStream {
    events: Vec<Event>,
    id_bound: usize,
}

impl EventStream {
    pub fn new(events: Vec<Event>, metric_size: usize) -> Result<Self, StreamError> {
        let mut state: Vec<u8> = Vec::new(); // 0 unseen, 1 active, 2 deleted
        for (index, ev) in events.iter().enumerate() {
            let client = ev.client();
            if client.0 > MAX_CLIENT_ID {
                return Err(StreamError::IdTooLarge { index, client });
            }
            if state.len() <= client.index() {
                state.resize(client.index() + 1, 0);
            }
            match *ev {
                Event::Insert { at, .. } => {
                    if at >= metric_size {
                        return Err(StreamError::UnknownPoint { index, point: at, size: metric_size });
                    }
                    if state[client.index()] != 0 {
                        return Err(StreamError::DoubleInsert { index, client });
                    }
                    state[client.index()] = 1;
                }
                Event::Delete { .. } => {
                    if state[client.index()] != 1 {
                        return Err(StreamError::DanglingDelete { index, client });
                    }
                    state[client.index()] = 2;
                }
            }
        }
        Ok(Self { id_bound: state.len(), events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Stream length `q`.
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// One past the largest client id used.
    pub fn id_bound(&self) -> usize {
        self.id_bound
    }

    pub fn is_insertion_only(&self) -> bool {
        self.events.iter().all(|e| matches!(e, Event::Insert { .. }))
    }

    pub fn inserts(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::Insert { .. })).count()
    }

    pub fn deletes(&self) -> usize {
        self.len() - self.inserts()
    }

    /// Clients active at the end, in id order, with their locations.
    pub fn final_active(&self) -> Vec<(ClientId, Point)> {
        let mut loc: Vec<Option<Point>> = vec![None; self.id_bound];
        for ev in &self.events {
            match *ev {
                Event::Insert { client, at } => loc[client.index()] = Some(at),
                Event::Delete { client } => loc[client.index()] = None,
            }
        }
        loc.into_iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|p| (ClientId(i as u32), p)))
            .collect()
    }

    /// Number of active clients at the end, `n'`.
    pub fn n_final(&self) -> usize {
        self.inserts() - self.deletes()
    }
}
