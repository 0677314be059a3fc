use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Distinct event times with multiplicities and nested risk sets.
///
/// Subjects are sorted by time (ties by original index); the risk set of the
/// `i`-th event time is the suffix of that order starting at `risk_start[i]`.
/// Censored subjects tied with an event time stay in its risk set.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTable {
    pub event_times: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Subject indices in ascending time order.
    pub order: Vec<usize>,
    pub risk_start: Vec<usize>,
    /// For each subject, the index of its event time if it failed.
    pub subject_event: Vec<Option<usize>>,
}

impl EventTable {
    pub fn new(times: &[f64], statuses: &[u32]) -> Result<Self> {
        let n = times.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| match times[a].total_cmp(&times[b]) {
            Ordering::Equal => a.cmp(&b),
            o => o,
        });
        let mut event_times: Vec<f64> = Vec::new();
        let mut multiplicities = Vec::new();
        let mut risk_start = Vec::new();
        let mut subject_event = vec![None; n];
        let mut pos = 0;
        while pos < n {
            let t = times[order[pos]];
            let mut end = pos;
            let mut d = 0;
            while end < n && times[order[end]] == t {
                if statuses[order[end]] > 0 {
                    d += 1;
                }
                end += 1;
            }
            if d > 0 {
                let k = event_times.len();
                event_times.push(t);
                multiplicities.push(d);
                risk_start.push(pos);
                for &s in &order[pos..end] {
                    if statuses[s] > 0 {
                        subject_event[s] = Some(k);
                    }
                }
            }
            pos = end;
        }
        if event_times.is_empty() {
            return Err(Error::NoEvents);
        }
        Ok(EventTable {
            event_times,
            multiplicities,
            order,
            risk_start,
            subject_event,
        })
    }

    pub fn from_dataset(d: &crate::data::Dataset) -> Result<Self> {
        Self::new(&d.times(), &d.statuses())
    }

    /// Number of distinct event times `K`.
    pub fn len(&self) -> usize {
        self.event_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_times.is_empty()
    }

    pub fn risk_set(&self, i: usize) -> &[usize] {
        &self.order[self.risk_start[i]..]
    }

    /// Number of event times `<= t`.
    pub fn count_at_or_before(&self, t: f64) -> usize {
        self.event_times.partition_point(|&e| e <= t)
    }

    pub fn last_event_time(&self) -> f64 {
        *self.event_times.last().expect("non-empty event table")
    }
}
