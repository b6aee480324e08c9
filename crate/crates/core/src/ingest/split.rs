//! Trajectories, the POI catalog, and the per-user leave-one-out split.

use std::collections::{BTreeMap, HashMap};

use super::geo::haversine;
use super::CheckIn;
use crate::error::{Error, Result};

/// Time and distance elapsed since the previous check-in.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gap {
    /// Seconds.
    pub dt: f64,
    /// Kilometres.
    pub dd: f64,
}

/// One user's chronological check-ins with precomputed gaps. `gaps[0]` is
/// always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub user_id: u64,
    pub events: Vec<CheckIn>,
    pub gaps: Vec<Gap>,
}

impl Trajectory {
    pub fn new(user_id: u64, events: Vec<CheckIn>) -> Self {
        let gaps = std::iter::once(Gap::default())
            .chain(events.windows(2).map(|w| Gap {
                dt: (w[1].timestamp - w[0].timestamp) as f64,
                dd: haversine(w[0].coords(), w[1].coords()),
            }))
            .take(events.len())
            .collect();
        Trajectory { user_id, events, gaps }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The trajectory restricted to its most recent `max_len` events.
    pub fn most_recent(&self, max_len: usize) -> Trajectory {
        if self.len() <= max_len {
            return self.clone();
        }
        Trajectory::new(self.user_id, self.events[self.len() - max_len..].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poi {
    pub id: u64,
    pub lat: f64,
    pub lon: f64,
}

/// The candidate set: every POI surviving preprocessing, ordered by id. A
/// POI's position in this order is its dense index in the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pois: Vec<Poi>,
    index: HashMap<u64, usize>,
}

impl Catalog {
    pub fn new(mut pois: Vec<Poi>) -> Self {
        pois.sort_by_key(|p| p.id);
        pois.dedup_by_key(|p| p.id);
        let index = pois.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
        Catalog { pois, index }
    }

    /// Every POI in `checkins`, located at its earliest check-in (ties to
    /// the smaller user id), so the result does not depend on input order.
    pub fn from_checkins(checkins: &[CheckIn]) -> Self {
        let mut seen: HashMap<u64, &CheckIn> = HashMap::new();
        for c in checkins {
            let e = seen.entry(c.poi_id).or_insert(c);
            if (c.timestamp, c.user_id) < (e.timestamp, e.user_id) {
                *e = c;
            }
        }
        Catalog::new(
            seen.into_values()
                .map(|c| Poi {
                    id: c.poi_id,
                    lat: c.lat,
                    lon: c.lon,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn index_of(&self, poi_id: u64) -> Result<usize> {
        self.index.get(&poi_id).copied().ok_or(Error::UnknownPoi(poi_id))
    }

    pub fn contains(&self, poi_id: u64) -> bool {
        self.index.contains_key(&poi_id)
    }

    /// Resolves a trajectory into model-ready steps.
    pub fn sequence(&self, traj: &Trajectory) -> Result<Sequence> {
        let steps = traj
            .events
            .iter()
            .zip(&traj.gaps)
            .enumerate()
            .map(|(i, (c, g))| {
                let (dlat, dlon) = if i == 0 {
                    (0.0, 0.0)
                } else {
                    let p = &traj.events[i - 1];
                    (c.lat - p.lat, c.lon - p.lon)
                };
                Ok(Step {
                    poi: self.index_of(c.poi_id)?,
                    timestamp: c.timestamp,
                    dt: g.dt,
                    dd: g.dd,
                    dlat,
                    dlon,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sequence { steps })
    }
}

/// A check-in resolved against the catalog, with movement from its
/// predecessor. For the first step every movement field is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub poi: usize,
    pub timestamp: i64,
    pub dt: f64,
    pub dd: f64,
    pub dlat: f64,
    pub dlon: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequence {
    pub steps: Vec<Step>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Number of supervised transitions (`len - 1`, or 0).
    pub fn n_targets(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }
}

/// "Given this prefix, where does the user go next?"
#[derive(Debug, Clone, PartialEq)]
pub struct RankingInstance {
    pub user_id: u64,
    /// Events strictly before the target.
    pub context: Trajectory,
    pub target: u64,
    /// Timestamp of the target check-in.
    pub query_time: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserSplit {
    pub user_id: u64,
    pub train: Trajectory,
    pub val: Option<RankingInstance>,
    pub test: Option<RankingInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub catalog: Catalog,
    pub users: Vec<UserSplit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Val,
    Test,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val" => Ok(SplitKind::Val),
            "test" => Ok(SplitKind::Test),
            _ => Err(Error::config("split", format!("expected val|test, got {s:?}"))),
        }
    }
}

impl DatasetSplit {
    pub fn train_trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.users.iter().map(|u| &u.train)
    }

    pub fn instances(&self, which: SplitKind) -> Vec<&RankingInstance> {
        self.users
            .iter()
            .filter_map(|u| match which {
                SplitKind::Val => u.val.as_ref(),
                SplitKind::Test => u.test.as_ref(),
            })
            .collect()
    }
}

fn instance(user_id: u64, events: &[CheckIn], target_at: usize) -> RankingInstance {
    RankingInstance {
        user_id,
        context: Trajectory::new(user_id, events[..target_at].to_vec()),
        target: events[target_at].poi_id,
        query_time: events[target_at].timestamp,
    }
}

/// Last check-in per user is the test target, the one before it the
/// validation target, the rest is training data. Users with fewer than three
/// check-ins keep everything as training data and get no instances.
pub fn split_leave_one_out(checkins: &[CheckIn]) -> DatasetSplit {
    let catalog = Catalog::from_checkins(checkins);
    let mut by_user: BTreeMap<u64, Vec<CheckIn>> = BTreeMap::new();
    for c in checkins {
        by_user.entry(c.user_id).or_default().push(*c);
    }
    let users = by_user
        .into_iter()
        .map(|(user_id, mut events)| {
            events.sort_by_key(|c| c.timestamp);
            let n = events.len();
            if n < 3 {
                UserSplit {
                    user_id,
                    train: Trajectory::new(user_id, events),
                    val: None,
                    test: None,
                }
            } else {
                UserSplit {
                    user_id,
                    train: Trajectory::new(user_id, events[..n - 2].to_vec()),
                    val: Some(instance(user_id, &events, n - 2)),
                    test: Some(instance(user_id, &events, n - 1)),
                }
            }
        })
        .collect();
    DatasetSplit { catalog, users }
}
