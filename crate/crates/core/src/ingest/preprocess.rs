//! Cleaning and support filtering of raw check-ins.

use std::collections::{BTreeMap, HashMap};

use super::CheckIn;

pub const DEFAULT_MIN_USER: usize = 10;
pub const DEFAULT_MIN_POI: usize = 10;

/// Counts reported by the `preprocess` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Summary {
    pub users: usize,
    pub pois: usize,
    pub checkins: usize,
}

impl Summary {
    pub fn of(checkins: &[CheckIn]) -> Self {
        let mut users: Vec<u64> = checkins.iter().map(|c| c.user_id).collect();
        users.sort_unstable();
        users.dedup();
        let mut pois: Vec<u64> = checkins.iter().map(|c| c.poi_id).collect();
        pois.sort_unstable();
        pois.dedup();
        Summary {
            users: users.len(),
            pois: pois.len(),
            checkins: checkins.len(),
        }
    }
}

/// Drops invalid records, orders each user's history by time, then repeats
/// three passes until nothing changes:
///
/// 1. consecutive check-ins of a user at the same POI collapse to the first,
///    and check-ins that do not strictly advance the user's clock are dropped;
/// 2. users with fewer than `min_user` check-ins are removed;
/// 3. POIs with fewer than `min_poi` check-ins are removed.
///
/// The output is sorted by `(user_id, timestamp)`.
pub fn preprocess(checkins: &[CheckIn], min_user: usize, min_poi: usize) -> Vec<CheckIn> {
    let min_user = min_user.max(1);
    let min_poi = min_poi.max(1);

    let mut users: BTreeMap<u64, Vec<CheckIn>> = BTreeMap::new();
    for c in checkins.iter().filter(|c| c.is_valid()) {
        users.entry(c.user_id).or_default().push(*c);
    }
    for seq in users.values_mut() {
        seq.sort_by_key(|c| c.timestamp);
    }

    loop {
        let mut changed = false;

        for seq in users.values_mut() {
            let before = seq.len();
            let mut kept: Vec<CheckIn> = Vec::with_capacity(before);
            for c in seq.drain(..) {
                match kept.last() {
                    Some(prev) if prev.poi_id == c.poi_id || c.timestamp <= prev.timestamp => {}
                    _ => kept.push(c),
                }
            }
            changed |= kept.len() != before;
            *seq = kept;
        }

        let before = users.len();
        users.retain(|_, seq| seq.len() >= min_user);
        changed |= users.len() != before;

        let mut support: HashMap<u64, usize> = HashMap::new();
        for c in users.values().flatten() {
            *support.entry(c.poi_id).or_default() += 1;
        }
        for seq in users.values_mut() {
            let before = seq.len();
            seq.retain(|c| support[&c.poi_id] >= min_poi);
            changed |= seq.len() != before;
        }

        if !changed {
            break;
        }
    }

    users.into_values().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ck(user_id: u64, poi_id: u64, timestamp: i64) -> CheckIn {
        CheckIn {
            user_id,
            poi_id,
            timestamp,
            lat: 1.0,
            lon: 2.0,
        }
    }

    #[test]
    fn short_users_removed() {
        let data: Vec<CheckIn> = (0..3).map(|i| ck(1, i, 100 + i as i64)).collect();
        assert!(preprocess(&data, 10, 1).is_empty());
    }

    #[test]
    fn consecutive_duplicates_collapse() {
        let data = vec![ck(1, 7, 10), ck(1, 7, 20), ck(1, 8, 30)];
        let out = preprocess(&data, 1, 1);
        assert_eq!(out, vec![ck(1, 7, 10), ck(1, 8, 30)]);
    }

    #[test]
    fn invalid_records_and_clock_ties_dropped() {
        let mut bad = ck(1, 9, 15);
        bad.lat = 91.0;
        let data = vec![ck(1, 7, 10), bad, ck(1, 8, 10), ck(1, 8, 0), ck(1, 9, 30)];
        let out = preprocess(&data, 1, 1);
        assert_eq!(out, vec![ck(1, 7, 10), ck(1, 9, 30)]);
    }

    /// Straightforward fixed point: recompute every filter from scratch until
    /// the data stops changing.
    fn brute_fixed_point(data: &[CheckIn], min_user: usize, min_poi: usize) -> Vec<CheckIn> {
        let mut cur: Vec<CheckIn> = data.to_vec();
        cur.sort_by_key(|c| (c.user_id, c.timestamp));
        loop {
            let mut next = Vec::new();
            for c in &cur {
                if let Some(p) = next.last() {
                    let p: &CheckIn = p;
                    if p.user_id == c.user_id && (p.poi_id == c.poi_id || p.timestamp >= c.timestamp) {
                        continue;
                    }
                }
                next.push(*c);
            }
            let ucount = |u: u64, v: &[CheckIn]| v.iter().filter(|c| c.user_id == u).count();
            let snapshot = next.clone();
            next.retain(|c| ucount(c.user_id, &snapshot) >= min_user);
            let snapshot = next.clone();
            let pcount = |p: u64| snapshot.iter().filter(|c| c.poi_id == p).count();
            next.retain(|c| pcount(c.poi_id) >= min_poi);
            if next == cur {
                return cur;
            }
            cur = next;
        }
    }

    #[test]
    fn poi_filter_cascades_to_users() {
        // User 1 has 10 check-ins; one is at POI 99 which only user 1 visits.
        // User 2 alternates over POIs 0..=1 enough to keep them supported.
        let mut data = Vec::new();
        for i in 0..9 {
            data.push(ck(1, i % 2, i as i64 + 1));
        }
        data.push(ck(1, 99, 100));
        for i in 0..12 {
            data.push(ck(2, i % 2, i as i64 + 1));
        }
        let out = preprocess(&data, 10, 2);
        // POI 99 has support 1 < 2, so user 1 drops to 9 < 10 and is removed.
        assert!(out.iter().all(|c| c.user_id == 2));
        assert_eq!(out.len(), 12);
        assert_eq!(out, brute_fixed_point(&data, 10, 2));
    }

    fn arb_checkins() -> impl Strategy<Value = Vec<CheckIn>> {
        prop::collection::vec((0u64..4, 0u64..6, 1i64..40), 0..80)
            .prop_map(|v| v.into_iter().map(|(u, p, t)| ck(u, p, t)).collect())
    }

    proptest! {
        #[test]
        fn idempotent(data in arb_checkins(), mu in 1usize..5, mp in 1usize..5) {
            let once = preprocess(&data, mu, mp);
            prop_assert_eq!(preprocess(&once, mu, mp), once.clone());
            prop_assert_eq!(once, brute_fixed_point(&data, mu, mp));
        }
    }
}
