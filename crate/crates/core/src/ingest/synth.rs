//! Synthetic multi-regime mobility.
//!
//! Each regime owns a block of POI ids, a spatial cluster, a set of
//! check-in hours, and a transition kernel over its own POIs. A simulated
//! user checks in at every scheduled hour of every day; the regime active at
//! that hour picks the next POI from the kernel row of the POI the user
//! last visited *in that regime*. Interleaved regimes therefore require a
//! model to keep one memory per regime and to consult the right one for the
//! current time of day.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CheckIn;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `i -> i + 1 (mod n)`.
    Cyclic,
    /// Each row moves to `successors` random other POIs with random weights.
    Random { successors: usize },
    /// Explicit row-stochastic matrix over the regime's POIs.
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    /// Hours of day (0..24) at which this regime produces check-ins.
    pub hours: Vec<u32>,
    /// First POI id of this regime's contiguous id block.
    pub poi_start: u64,
    pub n_pois: usize,
    /// Cluster centre `[lat, lon]`.
    pub center: [f64; 2],
    pub radius_km: f64,
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub name: String,
    pub n_users: usize,
    /// Check-ins per user.
    pub steps: usize,
    /// Epoch second of day 0 (must be a UTC midnight).
    pub start_time: i64,
    /// Uniform jitter added to each scheduled hour, in minutes.
    pub jitter_minutes: u32,
    /// Probability that a scheduled check-in is skipped.
    pub skip_prob: f64,
    /// Seeds POI placement and random kernels (not the trajectories).
    pub layout_seed: u64,
    pub regimes: Vec<RegimeConfig>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::two_regime()
    }
}

impl SynthConfig {
    /// Two regimes around different centres taking turns through the day
    /// (08:00 A, 12:00 B, 16:00 A, 20:00 B), both with branching kernels.
    /// Every next POI depends on the visit two steps back rather than on the
    /// last one.
    pub fn two_regime() -> Self {
        SynthConfig {
            name: "synthetic-two-regime".into(),
            n_users: 120,
            steps: 40,
            start_time: 1_333_324_800, // Mon 2012-04-02 00:00 UTC
            jitter_minutes: 30,
            skip_prob: 0.0,
            layout_seed: 7,
            regimes: vec![
                RegimeConfig {
                    hours: vec![8, 16],
                    poi_start: 0,
                    n_pois: 30,
                    center: [40.75, -73.99],
                    radius_km: 3.0,
                    kernel: KernelSpec::Random { successors: 2 },
                },
                RegimeConfig {
                    hours: vec![12, 20],
                    poi_start: 1000,
                    n_pois: 30,
                    center: [40.68, -73.95],
                    radius_km: 3.0,
                    kernel: KernelSpec::Random { successors: 2 },
                },
            ],
        }
    }

    /// One regime cycling deterministically over `n_pois` POIs.
    pub fn cycle(n_users: usize, n_pois: usize, steps: usize) -> Self {
        SynthConfig {
            name: format!("synthetic-cycle-{n_pois}"),
            n_users,
            steps,
            start_time: 1_333_324_800,
            jitter_minutes: 30,
            skip_prob: 0.0,
            layout_seed: 1,
            regimes: vec![RegimeConfig {
                hours: vec![8, 12, 16, 20],
                poi_start: 0,
                n_pois,
                center: [35.68, 139.69],
                radius_km: 5.0,
                kernel: KernelSpec::Cyclic,
            }],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::config("synth", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Input {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("synth config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::config("synth.n_users", "must be >= 1"));
        }
        if self.steps == 0 {
            return Err(Error::config("synth.steps", "must be >= 1"));
        }
        if self.start_time <= 0 || self.start_time % 86_400 != 0 {
            return Err(Error::config("synth.start_time", "must be a positive UTC midnight"));
        }
        if self.jitter_minutes >= 60 {
            return Err(Error::config("synth.jitter_minutes", "must be < 60"));
        }
        if !(0.0..1.0).contains(&self.skip_prob) {
            return Err(Error::config("synth.skip_prob", "must be in [0, 1)"));
        }
        if self.regimes.is_empty() {
            return Err(Error::config("synth.regimes", "need at least one regime"));
        }
        let mut hours_seen = [false; 24];
        for (r, reg) in self.regimes.iter().enumerate() {
            let field = |f: &str| format!("synth.regimes[{r}].{f}");
            if reg.n_pois < 2 {
                return Err(Error::config(field("n_pois"), "must be >= 2"));
            }
            if reg.hours.is_empty() {
                return Err(Error::config(field("hours"), "must not be empty"));
            }
            for &h in &reg.hours {
                if h >= 24 {
                    return Err(Error::config(field("hours"), "hours must be < 24"));
                }
                if std::mem::replace(&mut hours_seen[h as usize], true) {
                    return Err(Error::config(
                        field("hours"),
                        format!("hour {h} is used by more than one regime"),
                    ));
                }
            }
            let [lat, lon] = reg.center;
            if !(lat.abs() <= 80.0 && lon.abs() <= 180.0) {
                return Err(Error::config(field("center"), "out of range"));
            }
            if !(reg.radius_km.is_finite() && reg.radius_km >= 0.0) {
                return Err(Error::config(field("radius_km"), "must be >= 0"));
            }
            match &reg.kernel {
                KernelSpec::Cyclic => {}
                KernelSpec::Random { successors } => {
                    if *successors == 0 || *successors >= reg.n_pois {
                        return Err(Error::config(field("kernel.successors"), "must be in 1..n_pois"));
                    }
                }
                KernelSpec::Matrix { rows } => {
                    let ok = rows.len() == reg.n_pois
                        && rows.iter().all(|row| {
                            row.len() == reg.n_pois
                                && row.iter().all(|p| p.is_finite() && *p >= 0.0)
                                && (row.iter().sum::<f64>() - 1.0).abs() < 1e-9
                        });
                    if !ok {
                        return Err(Error::config(
                            field("kernel.rows"),
                            "must be an n_pois x n_pois row-stochastic matrix",
                        ));
                    }
                    if rows.iter().enumerate().any(|(i, row)| row[i] > 0.0) {
                        return Err(Error::config(
                            field("kernel.rows"),
                            "self-transitions would be removed as duplicates",
                        ));
                    }
                }
            }
            let lo = reg.poi_start;
            let hi = lo + reg.n_pois as u64;
            for (q, other) in self.regimes.iter().enumerate().take(r) {
                let olo = other.poi_start;
                let ohi = olo + other.n_pois as u64;
                if lo < ohi && olo < hi {
                    return Err(Error::config(
                        field("poi_start"),
                        format!("id range overlaps regime {q}"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn layout_rng(&self, regime: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.layout_seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(regime as u64 + 1)))
    }

    /// The configured transition matrix of `regime` (local indices).
    pub fn kernel(&self, regime: usize) -> Vec<Vec<f64>> {
        let reg = &self.regimes[regime];
        let n = reg.n_pois;
        match &reg.kernel {
            KernelSpec::Cyclic => (0..n)
                .map(|i| {
                    let mut row = vec![0.0; n];
                    row[(i + 1) % n] = 1.0;
                    row
                })
                .collect(),
            KernelSpec::Matrix { rows } => rows.clone(),
            KernelSpec::Random { successors } => {
                let mut rng = self.layout_rng(regime);
                // skip the draws used for coordinates
                for _ in 0..2 * n {
                    let _: f64 = rng.random();
                }
                (0..n)
                    .map(|i| {
                        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                        let picks = rand::seq::index::sample(&mut rng, others.len(), *successors);
                        let weights: Vec<f64> = (0..*successors).map(|_| 0.2 + rng.random::<f64>()).collect();
                        let total: f64 = weights.iter().sum();
                        let mut row = vec![0.0; n];
                        for (p, w) in picks.iter().zip(&weights) {
                            row[others[p]] = w / total;
                        }
                        row
                    })
                    .collect()
            }
        }
    }

    /// `(lat, lon)` of every POI of `regime`, in local index order.
    pub fn coordinates(&self, regime: usize) -> Vec<(f64, f64)> {
        let reg = &self.regimes[regime];
        let mut rng = self.layout_rng(regime);
        let [clat, clon] = reg.center;
        let km_per_deg = std::f64::consts::PI * super::geo::EARTH_RADIUS_KM / 180.0;
        (0..reg.n_pois)
            .map(|_| {
                let r = reg.radius_km * rng.random::<f64>().sqrt();
                let theta = std::f64::consts::TAU * rng.random::<f64>();
                let dlat = r * theta.sin() / km_per_deg;
                let dlon = r * theta.cos() / (km_per_deg * clat.to_radians().cos());
                (clat + dlat, clon + dlon)
            })
            .collect()
    }

    /// Regime index active at `hour`, if any.
    pub fn regime_at_hour(&self, hour: u32) -> Option<usize> {
        self.regimes.iter().position(|r| r.hours.contains(&hour))
    }
}

fn sample_row(rng: &mut ChaCha8Rng, row: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_nonzero = j;
            if u < acc {
                return j;
            }
        }
    }
    last_nonzero
}

/// Generates `n_users × steps` check-ins, sorted by user then time.
/// Deterministic in `(config, seed)`.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<Vec<CheckIn>> {
    config.validate()?;
    let kernels: Vec<Vec<Vec<f64>>> = (0..config.regimes.len()).map(|r| config.kernel(r)).collect();
    let coords: Vec<Vec<(f64, f64)>> = (0..config.regimes.len()).map(|r| config.coordinates(r)).collect();
    let mut schedule: Vec<(u32, usize)> = config
        .regimes
        .iter()
        .enumerate()
        .flat_map(|(r, reg)| reg.hours.iter().map(move |&h| (h, r)))
        .collect();
    schedule.sort_unstable();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(config.n_users * config.steps);
    for user in 0..config.n_users {
        let mut last: Vec<Option<usize>> = vec![None; config.regimes.len()];
        let first_day = rng.random_range(0..7i64);
        let mut produced = 0;
        let mut day = first_day;
        while produced < config.steps {
            for &(hour, r) in &schedule {
                if produced == config.steps {
                    break;
                }
                if config.skip_prob > 0.0 && rng.random::<f64>() < config.skip_prob {
                    continue;
                }
                let reg = &config.regimes[r];
                let local = match last[r] {
                    None => rng.random_range(0..reg.n_pois),
                    Some(prev) => sample_row(&mut rng, &kernels[r][prev]),
                };
                last[r] = Some(local);
                let jitter = if config.jitter_minutes == 0 {
                    0
                } else {
                    rng.random_range(0..config.jitter_minutes as i64 * 60)
                };
                let (lat, lon) = coords[r][local];
                out.push(CheckIn {
                    user_id: user as u64,
                    poi_id: reg.poi_start + local as u64,
                    timestamp: config.start_time + day * 86_400 + hour as i64 * 3600 + jitter,
                    lat,
                    lon,
                });
                produced += 1;
            }
            day += 1;
        }
    }
    Ok(out)
}
