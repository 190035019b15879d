//! Bounded per-link raw-sample cache with a reordering horizon.

use std::collections::{BTreeMap, VecDeque};

use radiosense_core::cqi::CqiSample;

/// Ring buffers of raw samples per link. Capacity is enforced per
/// link; the oldest samples are evicted first. Samples arriving more
/// than `reorder_horizon_ms` behind the newest timestamp seen are
/// dropped and counted.
#[derive(Debug)]
pub struct EdgeCache {
    capacity_per_link: usize,
    reorder_horizon_ms: i64,
    links: BTreeMap<u32, VecDeque<CqiSample>>,
    max_time_seen: i64,
    dropped_late: u64,
    evicted: u64,
}

impl EdgeCache {
    pub fn new(capacity_per_link: usize, reorder_horizon_ms: i64) -> Self {
        EdgeCache {
            capacity_per_link: capacity_per_link.max(1),
            reorder_horizon_ms,
            links: BTreeMap::new(),
            max_time_seen: i64::MIN,
            dropped_late: 0,
            evicted: 0,
        }
    }

    pub fn push(&mut self, sample: CqiSample) {
        if self.max_time_seen != i64::MIN
            && sample.time_ms < self.max_time_seen - self.reorder_horizon_ms
        {
            self.dropped_late += 1;
            return;
        }
        self.max_time_seen = self.max_time_seen.max(sample.time_ms);
        let buf = self.links.entry(sample.link_id).or_default();
        let key = (sample.time_ms, sample.freq_index);
        // fast path: in-order append
        let in_order = buf
            .back()
            .map(|last| (last.time_ms, last.freq_index) < key)
            .unwrap_or(true);
        if in_order {
            buf.push_back(sample);
        } else {
            match buf.binary_search_by(|s| (s.time_ms, s.freq_index).cmp(&key)) {
                Ok(i) => buf[i] = sample, // duplicate slot: replace
                Err(i) => buf.insert(i, sample),
            }
        }
        while buf.len() > self.capacity_per_link {
            buf.pop_front();
            self.evicted += 1;
        }
    }

    pub fn push_all(&mut self, samples: impl IntoIterator<Item = CqiSample>) {
        for s in samples {
            self.push(s);
        }
    }

    /// Newest timestamp available on every one of `links` (the window
    /// gate): `None` until all links have data.
    pub fn ready_until(&self, links: &[u32]) -> Option<i64> {
        links
            .iter()
            .map(|l| self.links.get(l).and_then(|b| b.back()).map(|s| s.time_ms))
            .collect::<Option<Vec<i64>>>()
            .map(|v| v.into_iter().min().unwrap())
    }

    /// Time span `[max(first), min(last)]` covered on all `links`.
    pub fn span_for(&self, links: &[u32]) -> Option<(i64, i64)> {
        let mut start = i64::MIN;
        let mut end = i64::MAX;
        for l in links {
            let buf = self.links.get(l)?;
            start = start.max(buf.front()?.time_ms);
            end = end.min(buf.back()?.time_ms);
        }
        if start > end {
            None
        } else {
            Some((start, end))
        }
    }

    /// Copy-on-read snapshot of samples in `[start_ms, end_ms)` on the
    /// given links.
    pub fn snapshot(&self, links: &[u32], start_ms: i64, end_ms: i64) -> Vec<CqiSample> {
        let mut out = Vec::new();
        for l in links {
            if let Some(buf) = self.links.get(l) {
                let from = buf.partition_point(|s| s.time_ms < start_ms);
                for s in buf.iter().skip(from) {
                    if s.time_ms >= end_ms {
                        break;
                    }
                    out.push(*s);
                }
            }
        }
        out
    }

    pub fn dropped_late(&self) -> u64 {
        self.dropped_late
    }

    pub fn evicted(&self) -> u64 {
        self.evicted
    }

    pub fn total_len(&self) -> usize {
        self.links.values().map(VecDeque::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use radiosense_core::cqi::CqiType;

    fn sample(t: i64, link: u32) -> CqiSample {
        CqiSample {
            time_ms: t,
            freq_index: 0,
            link_id: link,
            cqi_type: CqiType::Up,
            value: Complex64::new(t as f64, 0.0),
        }
    }

    #[test]
    fn capacity_is_bounded_under_flood() {
        let mut cache = EdgeCache::new(100, 500);
        for t in 0..100_000 {
            cache.push(sample(t, 0));
        }
        assert_eq!(cache.total_len(), 100);
        assert_eq!(cache.evicted(), 99_900);
        // newest survive
        let snap = cache.snapshot(&[0], 99_900, 100_000);
        assert_eq!(snap.len(), 100);
    }

    #[test]
    fn out_of_order_within_horizon_is_sorted_in() {
        let mut cache = EdgeCache::new(100, 500);
        cache.push(sample(0, 0));
        cache.push(sample(120, 0));
        cache.push(sample(60, 0)); // late but inside horizon
        let snap = cache.snapshot(&[0], 0, 240);
        let times: Vec<i64> = snap.iter().map(|s| s.time_ms).collect();
        assert_eq!(times, vec![0, 60, 120]);
        assert_eq!(cache.dropped_late(), 0);
    }

    #[test]
    fn stale_samples_beyond_horizon_are_dropped() {
        let mut cache = EdgeCache::new(100, 500);
        cache.push(sample(10_000, 0));
        cache.push(sample(9_000, 0));
        assert_eq!(cache.dropped_late(), 1);
        assert_eq!(cache.total_len(), 1);
    }

    #[test]
    fn readiness_tracks_slowest_link() {
        let mut cache = EdgeCache::new(100, 500);
        cache.push(sample(600, 0));
        assert_eq!(cache.ready_until(&[0, 1]), None);
        cache.push(sample(240, 1));
        assert_eq!(cache.ready_until(&[0, 1]), Some(240));
    }
}
