//! Shared solution state: active clients, open facilities, assignments,
//! per-client memory and per-facility capacities.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::hst::Hst;
use crate::metric::{MetricSpace, Point};
use crate::scalar::Scalar;
use crate::stream::ClientId;

/// Remaining capacity of an open facility.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Capacity {
    Unlimited,
    /// Slots left for external clients.
    Residual(usize),
    /// `cap_i` for LCA depth `i` in `0..h`.
    Buckets(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientRecord<T> {
    pub location: Point,
    /// Assigned facility; `None` only transiently during a cascade.
    pub facility: Option<ClientId>,
    /// Assignment sequence number, used to replay reassignment order.
    pub seq: u64,
    /// Last accepted flip probability (`p_x` / `max_v`).
    pub memory: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacilityRecord {
    pub location: Point,
    /// External clients keyed by assignment sequence number.
    pub members: BTreeMap<u64, ClientId>,
    pub capacity: Capacity,
}

/// How capacities are accounted for, used by the invariant checker.
#[derive(Debug, Clone, Copy)]
pub enum CapacityModel<'a, T> {
    Uncapacitated,
    /// At most `upsilon` clients per facility, the facility included.
    Total { upsilon: usize },
    /// `per_bucket` slots for each LCA depth of `tree`.
    PerBucket { per_bucket: usize, tree: &'a Hst<T> },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Violation {
    #[error("client {0} is not assigned")]
    Unassigned(ClientId),
    #[error("client {client} is assigned to {facility}, which is not open")]
    ClosedFacility { client: ClientId, facility: ClientId },
    #[error("facility {0} is not an active client at its own location")]
    FacilityInactive(ClientId),
    #[error("facility {0} is not assigned to itself")]
    NotSelfAssigned(ClientId),
    #[error("membership of facility {0} disagrees with client assignments")]
    Membership(ClientId),
    #[error("facility {facility} serves {load} clients, capacity {upsilon}")]
    OverCapacity { facility: ClientId, load: usize, upsilon: usize },
    #[error("facility {facility}: residual {residual} does not match load {load}")]
    Residual { facility: ClientId, residual: usize, load: usize },
    #[error("facility {facility} bucket {bucket}: {used} used but {clients} clients")]
    Bucket { facility: ClientId, bucket: usize, used: usize, clients: usize },
    #[error("capacity representation of facility {0} does not match the policy")]
    CapacityKind(ClientId),
}

/// Bucket charged when a client at `a` connects to a facility at `b`.
/// Co-located pairs use the deepest bucket.
#[inline]
pub fn capacity_bucket<T: Scalar>(tree: &Hst<T>, a: Point, b: Point) -> usize {
    tree.lca_depth(a, b).min(tree.height() - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState<T> {
    clients: Vec<Option<ClientRecord<T>>>,
    facilities: Vec<Option<FacilityRecord>>,
    active: usize,
    open: usize,
    next_seq: u64,
}

impl<T: Scalar> SolutionState<T> {
    pub fn with_id_bound(bound: usize) -> Self {
        Self { clients: vec![None; bound], facilities: vec![None; bound], active: 0, open: 0, next_seq: 0 }
    }

    pub(crate) fn ensure_bound(&mut self, bound: usize) {
        if self.clients.len() < bound {
            self.clients.resize(bound, None);
            self.facilities.resize(bound, None);
        }
    }

    pub fn client(&self, id: ClientId) -> Option<&ClientRecord<T>> {
        self.clients.get(id.index()).and_then(Option::as_ref)
    }

    pub fn facility(&self, id: ClientId) -> Option<&FacilityRecord> {
        self.facilities.get(id.index()).and_then(Option::as_ref)
    }

    pub fn is_facility(&self, id: ClientId) -> bool {
        self.facility(id).is_some()
    }

    pub fn active_count(&self) -> usize {
        self.active
    }

    pub fn open_count(&self) -> usize {
        self.open
    }

    pub fn active_clients(&self) -> impl Iterator<Item = (ClientId, &ClientRecord<T>)> {
        self.clients.iter().enumerate().filter_map(|(i, c)| c.as_ref().map(|c| (ClientId(i as u32), c)))
    }

    pub fn open_facilities(&self) -> impl Iterator<Item = (ClientId, &FacilityRecord)> {
        self.facilities.iter().enumerate().filter_map(|(i, f)| f.as_ref().map(|f| (ClientId(i as u32), f)))
    }

    /// Current assignment as `(client, facility)` pairs in client order.
    pub fn assignment(&self) -> Vec<(ClientId, ClientId)> {
        self.active_clients().filter_map(|(id, c)| c.facility.map(|f| (id, f))).collect()
    }

    pub(crate) fn memory_mut(&mut self, id: ClientId) -> &mut Option<T> {
        &mut self.record_mut(id).memory
    }

    pub(crate) fn add_client(&mut self, id: ClientId, location: Point) {
        let slot = &mut self.clients[id.index()];
        debug_assert!(slot.is_none());
        *slot = Some(ClientRecord { location, facility: None, seq: 0, memory: None });
        self.active += 1;
    }

    pub(crate) fn open_facility(&mut self, id: ClientId, capacity: Capacity) {
        let seq = self.bump();
        let rec = self.record_mut(id);
        rec.facility = Some(id);
        rec.seq = seq;
        let location = rec.location;
        self.facilities[id.index()] = Some(FacilityRecord { location, members: BTreeMap::new(), capacity });
        self.open += 1;
    }

    /// Assigns `id` to the open facility `facility`, charging `bucket` when the
    /// facility has per-bucket capacity. Returns the capacity left in the
    /// charged slot, `None` when uncapacitated.
    pub(crate) fn assign(&mut self, id: ClientId, facility: ClientId, bucket: Option<usize>) -> Option<usize> {
        let seq = self.bump();
        let rec = self.record_mut(id);
        rec.facility = Some(facility);
        rec.seq = seq;
        let fac = self.facilities[facility.index()].as_mut().expect("assign to an open facility");
        fac.members.insert(seq, id);
        match &mut fac.capacity {
            Capacity::Unlimited => None,
            Capacity::Residual(r) => {
                *r = r.checked_sub(1).expect("assign to a saturated facility");
                Some(*r)
            }
            Capacity::Buckets(caps) => {
                let b = bucket.expect("bucketed facility needs a bucket");
                caps[b] = caps[b].checked_sub(1).expect("assign to an exhausted bucket");
                Some(caps[b])
            }
        }
    }

    /// Removes a client that is not a facility. Returns its former facility
    /// and the capacity now available in the restored slot.
    pub(crate) fn remove_plain(&mut self, id: ClientId, bucket: Option<usize>) -> (ClientId, Option<usize>) {
        let rec = self.clients[id.index()].take().expect("remove an active client");
        self.active -= 1;
        let facility = rec.facility.expect("plain clients are assigned");
        let fac = self.facilities[facility.index()].as_mut().expect("assigned facility is open");
        fac.members.remove(&rec.seq);
        let left = match &mut fac.capacity {
            Capacity::Unlimited => None,
            Capacity::Residual(r) => {
                *r += 1;
                Some(*r)
            }
            Capacity::Buckets(caps) => {
                let b = bucket.expect("bucketed facility needs a bucket");
                caps[b] += 1;
                Some(caps[b])
            }
        };
        (facility, left)
    }

    /// Closes facility `id` and removes the client itself. Orphans are
    /// returned in original assignment order and left unassigned.
    pub(crate) fn close_facility(&mut self, id: ClientId) -> Vec<ClientId> {
        let fac = self.facilities[id.index()].take().expect("close an open facility");
        self.open -= 1;
        self.clients[id.index()] = None;
        self.active -= 1;
        let orphans: Vec<ClientId> = fac.members.into_values().collect();
        for &o in &orphans {
            self.record_mut(o).facility = None;
        }
        orphans
    }

    fn record_mut(&mut self, id: ClientId) -> &mut ClientRecord<T> {
        self.clients[id.index()].as_mut().expect("active client")
    }

    fn bump(&mut self) -> u64 {
        self.next_seq += 1;
        self.next_seq
    }

    /// Sum of `metric` distances from each active client to its facility.
    pub fn connection_cost(&self, metric: &MetricSpace<T>) -> T {
        self.active_clients()
            .filter_map(|(_, c)| {
                let f = c.facility?;
                let loc = self.facility(f)?.location;
                Some(metric.dist(c.location, loc))
            })
            .sum()
    }

    /// Checks assignment totality and capacity accounting.
    pub fn check_invariants(&self, model: CapacityModel<'_, T>) -> Result<(), Violation> {
        for (id, c) in self.active_clients() {
            let f = c.facility.ok_or(Violation::Unassigned(id))?;
            let fac = self.facility(f).ok_or(Violation::ClosedFacility { client: id, facility: f })?;
            if f != id && fac.members.get(&c.seq) != Some(&id) {
                return Err(Violation::Membership(f));
            }
        }
        for (fid, fac) in self.open_facilities() {
            let me = self.client(fid).ok_or(Violation::FacilityInactive(fid))?;
            if me.location != fac.location {
                return Err(Violation::FacilityInactive(fid));
            }
            if me.facility != Some(fid) {
                return Err(Violation::NotSelfAssigned(fid));
            }
            for (&seq, &m) in &fac.members {
                match self.client(m) {
                    Some(c) if c.facility == Some(fid) && c.seq == seq && m != fid => {}
                    _ => return Err(Violation::Membership(fid)),
                }
            }
            let load = fac.members.len();
            match (model, &fac.capacity) {
                (CapacityModel::Uncapacitated, Capacity::Unlimited) => {}
                (CapacityModel::Total { upsilon }, Capacity::Residual(r)) => {
                    if load + 1 > upsilon {
                        return Err(Violation::OverCapacity { facility: fid, load: load + 1, upsilon });
                    }
                    if r + load + 1 != upsilon {
                        return Err(Violation::Residual { facility: fid, residual: *r, load });
                    }
                }
                (CapacityModel::PerBucket { per_bucket, tree }, Capacity::Buckets(caps)) => {
                    if caps.len() != tree.height() {
                        return Err(Violation::CapacityKind(fid));
                    }
                    let mut counts = vec![0usize; caps.len()];
                    for m in fac.members.values() {
                        let loc = self.client(*m).map(|c| c.location).ok_or(Violation::Membership(fid))?;
                        counts[capacity_bucket(tree, loc, fac.location)] += 1;
                    }
                    for (bucket, (&cap, &clients)) in caps.iter().zip(&counts).enumerate() {
                        let used = per_bucket.checked_sub(cap).ok_or(Violation::Bucket {
                            facility: fid,
                            bucket,
                            used: 0,
                            clients,
                        })?;
                        if used != clients {
                            return Err(Violation::Bucket { facility: fid, bucket, used, clients });
                        }
                    }
                }
                _ => return Err(Violation::CapacityKind(fid)),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_bookkeeping() {
        let mut s = SolutionState::<f64>::with_id_bound(4);
        for i in 0..3 {
            s.add_client(ClientId(i), i as usize);
        }
        s.open_facility(ClientId(0), Capacity::Residual(2));
        assert_eq!(s.assign(ClientId(1), ClientId(0), None), Some(1));
        assert_eq!(s.assign(ClientId(2), ClientId(0), None), Some(0));
        s.check_invariants(CapacityModel::Total { upsilon: 3 }).unwrap();
        assert!(s.check_invariants(CapacityModel::Total { upsilon: 4 }).is_err());

        let (f, left) = s.remove_plain(ClientId(1), None);
        assert_eq!((f, left), (ClientId(0), Some(1)));
        s.check_invariants(CapacityModel::Total { upsilon: 3 }).unwrap();

        let orphans = s.close_facility(ClientId(0));
        assert_eq!(orphans, vec![ClientId(2)]);
        assert_eq!(
            s.check_invariants(CapacityModel::Total { upsilon: 3 }).unwrap_err(),
            Violation::Unassigned(ClientId(2))
        );
        assert_eq!(s.active_count(), 1);
        assert_eq!(s.open_count(), 0);
    }

    #[test]
    fn orphans_come_back_in_assignment_order() {
        let mut s = SolutionState::<f64>::with_id_bound(5);
        for i in [0, 3, 1, 4] {
            s.add_client(ClientId(i), 0);
        }
        s.open_facility(ClientId(0), Capacity::Unlimited);
        for i in [3, 1, 4] {
            s.assign(ClientId(i), ClientId(0), None);
        }
        assert_eq!(s.close_facility(ClientId(0)), vec![ClientId(3), ClientId(1), ClientId(4)]);
    }
}
