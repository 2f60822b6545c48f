//! JSON instance files.
//!
//! ```json
//! {
//!   "metric": {"n": 3, "dist": [[0, 1, 2], [1, 0, 1], [2, 1, 0]]},
//!   "events": [{"op": "ins", "id": 0, "at": 2}, {"op": "del", "id": 0}],
//!   "q": 2,
//!   "reassign": "fifo"
//! }
//! ```
//!
//! A star metric may be written as `{"star": {"k": 16, "eps": 0.0625}}` or
//! `{"star": {"k": 16, "spoke": 0.5, "rim": 1.0}}`. `q` and `reassign` are
//! optional; when present `q` must equal the number of events.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{Layout, MetricError, MetricSpace, Point};
use crate::policy::ReassignOrder;
use crate::scalar::Scalar;
use crate::sim::Instance;
use crate::stream::{ClientId, Event, EventStream, StreamError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed instance: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("\"q\" is {declared} but the file lists {actual} events")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("\"dist\" must hold n rows or n*n entries")]
    BadShape,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Dist {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StarFile {
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spoke: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rim: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MetricFile {
    Star { star: StarFile },
    Dense { n: usize, dist: Dist },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum EventFile {
    Ins { id: u32, at: Point },
    Del { id: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceFile {
    metric: MetricFile,
    events: Vec<EventFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reassign: Option<ReassignOrder>,
}

fn metric_from_file<T: Scalar>(m: MetricFile) -> Result<MetricSpace<T>, IoError> {
    match m {
        MetricFile::Star { star } => {
            let eps = star.eps;
            let spoke = star.spoke.or(eps).ok_or(MetricError::InvalidStar("give eps, or spoke and rim"))?;
            let rim = star.rim.unwrap_or(2.0 * spoke);
            Ok(MetricSpace::star_with(star.k, T::lit(spoke), T::lit(rim))?)
        }
        MetricFile::Dense { n, dist } => {
            let flat: Vec<f64> = match dist {
                Dist::Rows(rows) => {
                    if rows.len() != n {
                        return Err(IoError::BadShape);
                    }
                    let rows: Vec<Vec<T>> = rows.into_iter().map(|r| r.into_iter().map(T::lit).collect()).collect();
                    return Ok(MetricSpace::validate(&rows)?);
                }
                Dist::Flat(flat) => flat,
            };
            if flat.len() != n * n {
                return Err(IoError::BadShape);
            }
            Ok(MetricSpace::from_flat(n, flat.into_iter().map(T::lit).collect())?)
        }
    }
}

fn metric_to_file<T: Scalar>(m: &MetricSpace<T>) -> MetricFile {
    match *m.layout() {
        Layout::Star { leaves, spoke, rim } => MetricFile::Star {
            star: StarFile { k: leaves, eps: None, spoke: Some(spoke.as_f64()), rim: Some(rim.as_f64()) },
        },
        Layout::Dense { n, .. } => MetricFile::Dense {
            n,
            dist: Dist::Rows(m.to_matrix().into_iter().map(|r| r.into_iter().map(|x| x.as_f64()).collect()).collect()),
        },
    }
}

pub fn parse_metric<T: Scalar>(json: &str) -> Result<MetricSpace<T>, IoError> {
    metric_from_file(serde_json::from_str(json)?)
}

pub fn metric_to_json<T: Scalar>(m: &MetricSpace<T>) -> String {
    serde_json::to_string(&metric_to_file(m)).expect("metric serializes")
}

pub fn parse_instance<T: Scalar>(json: &str) -> Result<Instance<T>, IoError> {
    let file: InstanceFile = serde_json::from_str(json)?;
    let metric = metric_from_file(file.metric)?;
    if let Some(q) = file.q {
        if q != file.events.len() {
            return Err(IoError::LengthMismatch { declared: q, actual: file.events.len() });
        }
    }
    let events = file
        .events
        .into_iter()
        .map(|e| match e {
            EventFile::Ins { id, at } => Event::Insert { client: ClientId(id), at },
            EventFile::Del { id } => Event::Delete { client: ClientId(id) },
        })
        .collect();
    let stream = EventStream::new(events, metric.len())?;
    Ok(Instance { metric, stream, reassign: file.reassign })
}

pub fn instance_to_json<T: Scalar>(inst: &Instance<T>) -> String {
    let file = InstanceFile {
        metric: metric_to_file(&inst.metric),
        events: inst
            .stream
            .events()
            .iter()
            .map(|e| match *e {
                Event::Insert { client, at } => EventFile::Ins { id: client.0, at },
                Event::Delete { client } => EventFile::Del { id: client.0 },
            })
            .collect(),
        q: Some(inst.stream.len()),
        reassign: inst.reassign,
    };
    serde_json::to_string(&file).expect("instance serializes")
}

pub fn read_instance<T: Scalar>(path: impl AsRef<Path>) -> Result<Instance<T>, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })?;
    parse_instance(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{gen_claim3, gen_random, MetricKind};

    #[test]
    fn round_trips() {
        let a: Instance<f64> = gen_claim3(3);
        let b: Instance<f64> = parse_instance(&instance_to_json(&a)).unwrap();
        assert_eq!(a, b);
        let a: Instance<f64> = gen_random(6, 40, 0.3, MetricKind::Square, 1);
        let b: Instance<f64> = parse_instance(&instance_to_json(&a)).unwrap();
        assert_eq!(a.stream, b.stream);
        assert_eq!(a.metric.to_matrix(), b.metric.to_matrix());
    }

    #[test]
    fn accepts_both_dense_shapes() {
        let rows: MetricSpace<f64> = parse_metric(r#"{"n":2,"dist":[[0,1],[1,0]]}"#).unwrap();
        let flat: MetricSpace<f64> = parse_metric(r#"{"n":2,"dist":[0,1,1,0]}"#).unwrap();
        assert_eq!(rows.to_matrix(), flat.to_matrix());
        let star: MetricSpace<f64> = parse_metric(r#"{"star":{"k":4,"eps":0.25}}"#).unwrap();
        assert_eq!(star.dist(1, 2), 0.5);
    }

    #[test]
    fn rejects_bad_files() {
        let bad_metric = r#"{"metric":{"n":2,"dist":[[0,1],[2,0]]},"events":[]}"#;
        assert!(matches!(parse_instance::<f64>(bad_metric), Err(IoError::Metric(_))));
        let dangling = r#"{"metric":{"n":1,"dist":[[0]]},"events":[{"op":"del","id":0}]}"#;
        assert!(matches!(parse_instance::<f64>(dangling), Err(IoError::Stream(_))));
        let short = r#"{"metric":{"n":1,"dist":[[0]]},"events":[{"op":"ins","id":0,"at":0}],"q":3}"#;
        assert!(matches!(parse_instance::<f64>(short), Err(IoError::LengthMismatch { .. })));
        assert!(matches!(parse_metric::<f64>(r#"{"n":3,"dist":[0,1]}"#), Err(IoError::BadShape)));
    }
}
