//! Per-step input encoding: POI identity, periodic time, spatial movement,
//! and the two affine alignment projections.

use std::f64::consts::TAU;

use crate::config::SlotScheme;
use crate::error::{Error, Result};
use crate::ingest::{haversine, CheckIn, Sequence};
use crate::linalg::{affine, matvec_t_acc, outer_acc};
use crate::params::ParameterSet;

pub const OMEGA_HOUR: f64 = TAU / 24.0;
pub const OMEGA_WEEK: f64 = TAU / 7.0;

/// Hour of day in `[0, 24)`, UTC.
pub fn hour_of_day(t: i64) -> f64 {
    t.rem_euclid(86_400) as f64 / 3600.0
}

/// Day of week, Monday = 0, UTC.
pub fn day_of_week(t: i64) -> u32 {
    // 1970-01-01 was a Thursday
    (t.div_euclid(86_400) + 3).rem_euclid(7) as u32
}

pub fn periodic_features(hour: f64, weekday: f64) -> [f64; 4] {
    [
        (OMEGA_HOUR * hour).sin(),
        (OMEGA_HOUR * hour).cos(),
        (OMEGA_WEEK * weekday).sin(),
        (OMEGA_WEEK * weekday).cos(),
    ]
}

pub fn time_slot(t: i64, scheme: SlotScheme) -> usize {
    let hour = (t.rem_euclid(86_400) / 3600) as usize;
    let dow = day_of_week(t) as usize;
    match scheme {
        SlotScheme::Hour => hour,
        SlotScheme::HourWeekend => hour + if dow >= 5 { 24 } else { 0 },
        SlotScheme::HourOfWeek => hour + 24 * dow,
    }
}

/// `[sin ω_h h, cos ω_h h, sin ω_w w, cos ω_w w, e_slot]`.
pub fn encode_time(t: i64, params: &ParameterSet, scheme: SlotScheme) -> Vec<f64> {
    let dims = params.layout().dims;
    let slot = time_slot(t, scheme);
    let emb = &params.get(&params.layout().slot_emb)[slot * dims.d_slot..(slot + 1) * dims.d_slot];
    let mut p = Vec::with_capacity(dims.d_time());
    p.extend_from_slice(&periodic_features(hour_of_day(t), day_of_week(t) as f64));
    p.extend_from_slice(emb);
    p
}

/// Index of the distance bucket for `dd` km given finite edges starting at
/// 0: bucket 0 holds exactly zero movement, bucket `i` holds
/// `(edges[i-1], edges[i]]`, and the last bucket absorbs everything beyond.
pub fn distance_bucket(dd: f64, edges: &[f64]) -> usize {
    let above = edges.iter().take_while(|&&e| e < dd).count();
    above.min(edges.len() - 1)
}

/// Movement between two consecutive check-ins.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Movement {
    pub dd: f64,
    pub dlat: f64,
    pub dlon: f64,
}

impl Movement {
    pub fn between(prev: &CheckIn, cur: &CheckIn) -> Self {
        Movement {
            dd: haversine(prev.coords(), cur.coords()),
            dlat: cur.lat - prev.lat,
            dlon: cur.lon - prev.lon,
        }
    }
}

/// `[log(1+Δd), e_dist[bucket], Δlat, Δlon]` and its bucket.
pub fn spatial_preimage(m: Movement, params: &ParameterSet, edges: &[f64]) -> (Vec<f64>, usize) {
    let d_dist = params.layout().dims.d_dist;
    let bucket = distance_bucket(m.dd, edges);
    let emb = &params.get(&params.layout().dist_emb)[bucket * d_dist..(bucket + 1) * d_dist];
    let mut pre = Vec::with_capacity(3 + d_dist);
    pre.push(m.dd.ln_1p());
    pre.extend_from_slice(emb);
    pre.push(m.dlat);
    pre.push(m.dlon);
    (pre, bucket)
}

/// `W_d · preimage`.
pub fn encode_space(m: Movement, params: &ParameterSet, edges: &[f64]) -> Vec<f64> {
    let (pre, _) = spatial_preimage(m, params, edges);
    mix_spatial(params, &pre)
}

fn mix_spatial(params: &ParameterSet, pre: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; params.layout().dims.d_spatial];
    affine(params.get(&params.layout().spatial_w), None, pre, &mut out);
    out
}

/// Encoded check-in with what the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedStep {
    /// `[e_l; p; d]`.
    pub x: Vec<f64>,
    pub slot: usize,
    /// `None` for the first step, which uses the learned fallback vector.
    pub spatial: Option<(Vec<f64>, usize)>,
}

impl EncodedStep {
    /// Context vector `c = [p; d]`, i.e. `x` without the POI block.
    pub fn context(&self, d_e: usize) -> &[f64] {
        &self.x[d_e..]
    }
}

/// Builds `x_i` for step `i` of `seq`. Step 0 takes the learned
/// no-predecessor spatial vector.
pub fn build_input(
    i: usize,
    seq: &Sequence,
    params: &ParameterSet,
    edges: &[f64],
    scheme: SlotScheme,
) -> Result<EncodedStep> {
    let layout = params.layout();
    let dims = layout.dims;
    let step = &seq.steps[i];
    if step.poi >= dims.n_pois {
        return Err(Error::UnknownPoi(step.poi as u64));
    }
    let mut x = Vec::with_capacity(dims.d_x());
    x.extend_from_slice(&params.get(&layout.poi_emb)[step.poi * dims.d_e..(step.poi + 1) * dims.d_e]);
    x.extend(encode_time(step.timestamp, params, scheme));
    let spatial = if i == 0 {
        x.extend_from_slice(params.get(&layout.first_spatial));
        None
    } else {
        let m = Movement {
            dd: step.dd,
            dlat: step.dlat,
            dlon: step.dlon,
        };
        let (pre, bucket) = spatial_preimage(m, params, edges);
        x.extend(mix_spatial(params, &pre));
        Some((pre, bucket))
    };
    Ok(EncodedStep {
        x,
        slot: time_slot(step.timestamp, scheme),
        spatial,
    })
}

/// `Π_x(x) = W_x x + b_x`.
pub fn project_input(params: &ParameterSet, x: &[f64]) -> Vec<f64> {
    let l = params.layout();
    let mut out = vec![0.0; l.dims.d_s];
    affine(params.get(&l.in_w), Some(params.get(&l.in_b)), x, &mut out);
    out
}

/// `Π_h(h) = W_h h + b_h`.
pub fn project_decision(params: &ParameterSet, h_dec: &[f64]) -> Vec<f64> {
    let l = params.layout();
    let mut out = vec![0.0; l.dims.d_e];
    affine(params.get(&l.out_w), Some(params.get(&l.out_b)), h_dec, &mut out);
    out
}

/// Accumulates into `grad` the gradient flowing back from `dx` (w.r.t. the
/// full `x`) through the embeddings and the spatial mixing.
pub fn build_input_backward(params: &ParameterSet, poi: usize, enc: &EncodedStep, dx: &[f64], grad: &mut [f64]) {
    let l = params.layout();
    let d = l.dims;
    let (d_poi, rest) = dx.split_at(d.d_e);
    let (d_time, d_space) = rest.split_at(d.d_time());
    let e0 = l.poi_emb.start + poi * d.d_e;
    crate::linalg::add_assign(&mut grad[e0..e0 + d.d_e], d_poi);
    let s0 = l.slot_emb.start + enc.slot * d.d_slot;
    crate::linalg::add_assign(&mut grad[s0..s0 + d.d_slot], &d_time[4..]);
    match &enc.spatial {
        None => crate::linalg::add_assign(&mut grad[l.first_spatial.clone()], d_space),
        Some((pre, bucket)) => {
            outer_acc(&mut grad[l.spatial_w.clone()], d_space, pre);
            let mut d_pre = vec![0.0; pre.len()];
            matvec_t_acc(params.get(&l.spatial_w), d_space, &mut d_pre);
            let b0 = l.dist_emb.start + bucket * d.d_dist;
            crate::linalg::add_assign(&mut grad[b0..b0 + d.d_dist], &d_pre[1..1 + d.d_dist]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::ingest::{Catalog, Trajectory};
    use crate::params::init_params;
    use proptest::prelude::*;

    const EDGES: [f64; 10] = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
    // Mon 2012-04-02 00:00:00 UTC
    const MONDAY: i64 = 1_333_324_800;

    fn small() -> (RunConfig, ParameterSet) {
        let mut cfg = RunConfig::default();
        cfg.model.d_e = 6;
        cfg.model.k = 2;
        cfg.model.d_s = 4;
        cfg.model.d_slot = 3;
        cfg.model.d_dist = 2;
        cfg.model.d_spatial = 5;
        let p = init_params(&cfg, 5, 1);
        (cfg, p)
    }

    #[test]
    fn weekday_and_hour() {
        assert_eq!(day_of_week(MONDAY), 0);
        assert_eq!(hour_of_day(MONDAY), 0.0);
        assert_eq!(day_of_week(MONDAY + 5 * 86_400), 5);
    }

    #[test]
    fn sinusoid_anchor_points() {
        let f = periodic_features(hour_of_day(MONDAY), day_of_week(MONDAY) as f64);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 1.0);
        let f = periodic_features(hour_of_day(MONDAY + 6 * 3600), 0.0);
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert!(f[1].abs() < 1e-12);
    }

    #[test]
    fn sinusoids_continuous_across_midnight() {
        let late = periodic_features(23.999, 0.0);
        let early = periodic_features(0.001, 0.0);
        assert!((late[0] - early[0]).abs() < 0.002);
        assert!((late[1] - early[1]).abs() < 0.002);
    }

    #[test]
    fn slots() {
        let wed_14 = MONDAY + 2 * 86_400 + 14 * 3600 + 1234;
        let sat_14 = MONDAY + 5 * 86_400 + 14 * 3600;
        let sun_00 = MONDAY + 6 * 86_400 + 59;
        assert_eq!(time_slot(wed_14, SlotScheme::HourWeekend), 14);
        assert_eq!(time_slot(sat_14, SlotScheme::HourWeekend), 38);
        assert_eq!(time_slot(sun_00, SlotScheme::HourWeekend), 24);
        assert_eq!(time_slot(sat_14, SlotScheme::HourOfWeek), 5 * 24 + 14);
        assert_eq!(time_slot(sat_14, SlotScheme::Hour), 14);
    }

    #[test]
    fn buckets() {
        assert_eq!(distance_bucket(0.0, &EDGES), 0);
        assert_eq!(distance_bucket(3.0, &EDGES), 5);
        assert_eq!(distance_bucket(10_000.0, &EDGES), 9);
        assert_eq!(distance_bucket(1e-9, &EDGES), 1);
    }

    #[test]
    fn zero_movement_preimage() {
        let (_, p) = small();
        let (pre, b) = spatial_preimage(Movement::default(), &p, &EDGES);
        assert_eq!(b, 0);
        assert_eq!(pre[0], 0.0);
        assert_eq!(&pre[1..3], &p.named("space.bucket_embedding").unwrap()[0..2]);
        assert_eq!(&pre[3..], &[0.0, 0.0]);
        let m = Movement {
            dd: std::f64::consts::E - 1.0,
            ..Default::default()
        };
        let (pre, _) = spatial_preimage(m, &p, &EDGES);
        assert!((pre[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_mixing_reproduces_preimage() {
        let (_, mut p) = small();
        // d_spatial = 5 = d_spatial_in, so W_d can be the identity
        let w = p.named_mut("space.mix").unwrap();
        w.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..5 {
            w[i * 5 + i] = 1.0;
        }
        let m = Movement {
            dd: 3.0,
            dlat: 0.02,
            dlon: -0.01,
        };
        let (pre, _) = spatial_preimage(m, &p, &EDGES);
        assert_eq!(encode_space(m, &p, &EDGES), pre);
    }

    fn traj(lons: &[f64]) -> (Catalog, Sequence) {
        let events: Vec<CheckIn> = lons
            .iter()
            .enumerate()
            .map(|(i, &lon)| CheckIn {
                user_id: 0,
                poi_id: i as u64,
                timestamp: MONDAY + 3600 * (i as i64 + 1),
                lat: 40.0,
                lon,
            })
            .collect();
        let t = Trajectory::new(0, events.clone());
        let cat = Catalog::from_checkins(&events);
        let seq = cat.sequence(&t).unwrap();
        (cat, seq)
    }

    #[test]
    fn input_shape_purity_and_block_locality() {
        let (cfg, p) = small();
        let scheme = cfg.slot_scheme();
        let (_, seq) = traj(&[-74.0, -73.99, -73.98]);
        let dims = p.layout().dims;
        let a = build_input(2, &seq, &p, &EDGES, scheme).unwrap();
        assert_eq!(a.x.len(), dims.d_e + 4 + dims.d_slot + dims.d_spatial);
        assert_eq!(a, build_input(2, &seq, &p, &EDGES, scheme).unwrap());
        let first = build_input(0, &seq, &p, &EDGES, scheme).unwrap();
        assert_eq!(
            &first.x[dims.d_e + dims.d_time()..],
            p.named("space.first_step").unwrap()
        );

        let (_, moved) = traj(&[-74.0, -73.985, -73.98]);
        let b = build_input(2, &moved, &p, &EDGES, scheme).unwrap();
        let spatial_start = dims.d_e + dims.d_time();
        assert_eq!(&a.x[..spatial_start], &b.x[..spatial_start]);
        assert_ne!(&a.x[spatial_start..], &b.x[spatial_start..]);
    }

    #[test]
    fn unknown_poi_is_a_lookup_error() {
        let (cfg, p) = small();
        let (_, mut seq) = traj(&[0.0, 0.1]);
        seq.steps[1].poi = 99;
        assert!(matches!(
            build_input(1, &seq, &p, &EDGES, cfg.slot_scheme()),
            Err(Error::UnknownPoi(99))
        ));
    }

    #[test]
    fn projections_are_affine() {
        let (_, mut p) = small();
        let dims = p.layout().dims;
        let zero = vec![0.0; dims.d_x()];
        assert!(project_input(&p, &zero).iter().all(|&v| v == 0.0));

        // identity Π_h when d_e = d_state
        let mut cfg = RunConfig::default();
        cfg.model.d_e = 8;
        cfg.model.k = 2;
        cfg.model.d_s = 4;
        let mut q = init_params(&cfg, 3, 0);
        let w = q.named_mut("proj.decision.w").unwrap();
        w.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..8 {
            w[i * 8 + i] = 1.0;
        }
        let h: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        assert_eq!(project_decision(&q, &h), h);

        // Jacobian of Π_x by central differences equals W_x
        let x0: Vec<f64> = (0..dims.d_x()).map(|i| (i as f64 * 0.37).sin()).collect();
        let step = 1e-6;
        let w = p.named("proj.input.w").unwrap().to_vec();
        for j in 0..dims.d_x() {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[j] += step;
            xm[j] -= step;
            let (fp, fm) = (project_input(&p, &xp), project_input(&p, &xm));
            for r in 0..dims.d_s {
                let fd = (fp[r] - fm[r]) / (2.0 * step);
                let exact = w[r * dims.d_x() + j];
                assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-3), "{fd} vs {exact}");
            }
        }
        p.named_mut("proj.input.b").unwrap()[0] = 1.0;
        assert_eq!(project_input(&p, &zero)[0], 1.0);
    }

    proptest! {
        #[test]
        fn unit_circle(t in 1i64..4_000_000_000) {
            let f = periodic_features(hour_of_day(t), day_of_week(t) as f64);
            prop_assert!((f[0] * f[0] + f[1] * f[1] - 1.0).abs() < 1e-12);
            prop_assert!((f[2] * f[2] + f[3] * f[3] - 1.0).abs() < 1e-12);
        }

        #[test]
        fn bucket_monotone(a in 0.0f64..1e5, b in 0.0f64..1e5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(distance_bucket(lo, &EDGES) <= distance_bucket(hi, &EDGES));
            prop_assert!(distance_bucket(hi, &EDGES) < EDGES.len());
        }

        #[test]
        fn encoder_finite_anywhere(lat1 in -90.0f64..=90.0, lon1 in -180.0f64..=180.0,
                                    lat2 in -90.0f64..=90.0, lon2 in -180.0f64..=180.0) {
            let (_, p) = small();
            let a = CheckIn { user_id: 0, poi_id: 0, timestamp: MONDAY, lat: lat1, lon: lon1 };
            let b = CheckIn { user_id: 0, poi_id: 1, timestamp: MONDAY + 60, lat: lat2, lon: lon2 };
            let d = encode_space(Movement::between(&a, &b), &p, &EDGES);
            prop_assert!(d.iter().all(|v| v.is_finite()));
            let anti = CheckIn { lat: -lat1, lon: if lon1 > 0.0 { lon1 - 180.0 } else { lon1 + 180.0 }, ..a };
            let d = encode_space(Movement::between(&a, &anti), &p, &EDGES);
            prop_assert!(d.iter().all(|v| v.is_finite()));
        }
    }
}
