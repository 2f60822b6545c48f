use crate::hst::Hst;
use crate::policy::{capacity_bucket, initial_capacity, Algorithm, PolicyConfig, SolutionState};
use crate::scalar::Scalar;
use crate::stream::Event;
use crate::trace::{Step, Trace};

/// Rebuilds the final solution state from the recorded outcomes of a run,
/// without drawing any random numbers.
pub fn replay<T: Scalar>(
    config: &PolicyConfig,
    tree: Option<&Hst<T>>,
    id_bound: usize,
    trace: &Trace<T>,
) -> SolutionState<T> {
    let mut state = SolutionState::with_id_bound(id_bound);
    let height = tree.map_or(0, Hst::height);
    let algo = config.algorithm;
    for record in &trace.records {
        if let Event::Insert { client, at } = record.event {
            state.add_client(client, at);
        }
        for step in &record.steps {
            match *step {
                Step::Flip { client, probability, heads } => match algo {
                    Algorithm::Alg1 | Algorithm::NaiveCap if !heads => *state.memory_mut(client) = Some(probability),
                    Algorithm::Alg2 => *state.memory_mut(client) = Some(probability),
                    _ => {}
                },
                Step::Search { client, .. } => {
                    state.memory_mut(client).get_or_insert(T::zero());
                }
                Step::Open { client } => state.open_facility(client, initial_capacity(config, height)),
                Step::Connect { client, facility, bucket, .. } => {
                    state.assign(client, facility, bucket);
                }
                Step::Close { facility, .. } => {
                    state.close_facility(facility);
                }
                Step::Remove { client } => {
                    let rec = state.client(client).expect("removed client is active");
                    let f = rec.facility.expect("removed client is assigned");
                    let floc = state.facility(f).expect("facility is open").location;
                    let bucket = tree.map(|t| capacity_bucket(t, rec.location, floc));
                    state.remove_plain(client, bucket);
                }
                Step::Restore { .. } => {}
            }
        }
    }
    state
}
