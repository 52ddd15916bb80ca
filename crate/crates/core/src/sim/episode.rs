//! Episode execution: fixed-step kinematics for the AVUT, pedestrian,
//! NPC vehicle, and scripted sedan, with the five safety metrics
//! computed on the fly.
//!
//! Distances are clearance distances: center distance minus the
//! object-type collision threshold, clamped at zero. A collision is a
//! clearance hitting zero, so the minimum-distance fitness reaches
//! exactly 0 in collision episodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layout::RouteLayout;
use crate::scalar::{real, Real};
use crate::scenario::{GenomeError, ScenarioGenome};
use crate::{FeatureVec, FEATURE_LEN};

/// Simulator constants. Everything the controller and dynamics use lives
/// here so experiments can tune the environment in one place.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    /// Integration step, seconds.
    pub dt: f64,
    /// Episode horizon, seconds.
    pub horizon: f64,
    /// Clear-weather, full-light detection range D0, meters.
    pub detection_base_range: f64,
    /// Fractional range loss at fog density 100.
    pub fog_attenuation: f64,
    /// Light factor at sun altitude -90 deg (1.0 at +90 deg).
    pub light_floor: f64,
    /// AVUT service braking, m/s^2.
    pub brake_decel: f64,
    /// AVUT acceleration back to cruise, m/s^2.
    pub cruise_accel: f64,
    /// Predicted clearance below which the AVUT brakes, meters.
    pub brake_gap: f64,
    /// Lookahead horizon for the gap prediction, seconds.
    pub prediction_horizon: f64,
    /// NPC cruise speed, m/s.
    pub npc_speed: f64,
    /// NPC braking, m/s^2.
    pub npc_decel: f64,
    /// Clearance below which the NPC decelerates, meters.
    pub npc_gap: f64,
    /// Collision threshold for vehicle objects (center distance), meters.
    pub vehicle_threshold: f64,
    /// Collision threshold for pedestrians (center distance), meters.
    pub ped_threshold: f64,
    /// Duration of a lane change, seconds.
    pub lane_change_duration: f64,
    /// Relative detection-range jitter amplitude in stochastic mode.
    pub noise_amplitude: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon: 60.0,
            detection_base_range: 40.0,
            fog_attenuation: 0.8,
            light_floor: 0.6,
            brake_decel: 6.0,
            cruise_accel: 2.0,
            brake_gap: 8.0,
            prediction_horizon: 1.0,
            npc_speed: 6.0,
            npc_decel: 4.0,
            npc_gap: 6.0,
            vehicle_threshold: 2.0,
            ped_threshold: 1.0,
            lane_change_duration: 4.0,
            noise_amplitude: 0.15,
        }
    }
}

/// Episode randomness: deterministic episodes ignore the seed entirely;
/// stochastic episodes jitter the detection range to emulate controller
/// noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EpisodeMode {
    Deterministic,
    Stochastic,
}

impl EpisodeMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EpisodeMode::Deterministic => "deterministic",
            EpisodeMode::Stochastic => "stochastic",
        }
    }
}

impl std::str::FromStr for EpisodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "deterministic" => Ok(EpisodeMode::Deterministic),
            "stochastic" => Ok(EpisodeMode::Stochastic),
            other => Err(format!("unknown episode mode {other:?}")),
        }
    }
}

/// Detection range under the given weather: D0 scaled by fog attenuation
/// and a light factor degrading linearly from 1.0 at +90 deg to the
/// configured floor at -90 deg. Non-increasing in fog density.
pub fn detection_range(cfg: &SimConfig, sun_altitude: f64, fog_density: f64) -> f64 {
    let fog = (fog_density / 100.0).clamp(0.0, 1.0);
    let light = cfg.light_floor
        + (1.0 - cfg.light_floor) * ((sun_altitude + 90.0) / 180.0).clamp(0.0, 1.0);
    cfg.detection_base_range * (1.0 - cfg.fog_attenuation * fog) * light
}

/// AVUT pose along the route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<S: Real> {
    pub x: S,
    pub y: S,
    pub heading: S,
    pub speed: S,
}

/// World-frame position and velocity of a moving object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematic<S: Real> {
    pub x: S,
    pub y: S,
    pub vx: S,
    pub vy: S,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weather<S: Real> {
    pub sun_altitude: S,
    pub fog_density: S,
}

/// Clearance distances (center distance minus threshold, clamped at 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectDistances<S: Real> {
    pub pedestrian: S,
    pub npc: S,
    pub sedan: Option<S>,
}

impl<S: Real> ObjectDistances<S> {
    pub fn min(&self) -> S {
        let m = self.pedestrian.min(self.npc);
        match self.sedan {
            Some(d) => m.min(d),
            None => m,
        }
    }
}

/// One time-stamped simulation state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState<S: Real> {
    pub timestamp: S,
    pub avut: Pose<S>,
    pub pedestrian: Kinematic<S>,
    pub npc: Kinematic<S>,
    pub npc_lane: usize,
    pub sedan: Option<Kinematic<S>>,
    pub weather: Weather<S>,
    pub distances: ObjectDistances<S>,
}

/// Collision counts per object type (first collision of each type in an
/// episode counts once).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct InfractionCounts {
    pub pedestrian: u32,
    pub npc: u32,
    pub static_obj: u32,
}

/// Penalty coefficients of the infraction score.
pub const PENALTY_PED: f64 = 0.50;
pub const PENALTY_NPC: f64 = 0.60;
pub const PENALTY_STATIC: f64 = 0.65;

/// Infraction score: the product of per-type penalty coefficients raised
/// to the infraction counts.
pub fn infraction_score<S: Real>(counts: &InfractionCounts) -> S {
    let ped = real::<S>(PENALTY_PED).powi(counts.pedestrian as i32);
    let npc = real::<S>(PENALTY_NPC).powi(counts.npc as i32);
    let sta = real::<S>(PENALTY_STATIC).powi(counts.static_obj as i32);
    ped * npc * sta
}

/// Complete outcome of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome<S: Real> {
    /// Recorded states (empty unless trace recording was requested).
    pub trace: Vec<EnvState<S>>,
    /// Minimum clearance distance over the episode, meters.
    pub md: S,
    /// Whether any collision occurred.
    pub co: bool,
    /// Route completion, percent.
    pub rc: S,
    /// Infraction score in (0, 1].
    pub is_score: S,
    /// Driving score: rc * is.
    pub ds: S,
    pub infractions: InfractionCounts,
    /// Features of the initial state (epigenetic-model input).
    pub feature_vector: FeatureVec<S>,
}

/// The fitness of an outcome is its minimum distance.
pub fn fitness<S: Real>(outcome: &SimOutcome<S>) -> S {
    outcome.md
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimError {
    #[error("invalid genome: {0}")]
    InvalidGenome(#[from] GenomeError),
}

/// Piecewise-linear route geometry in the scalar type.
struct Geom<S: Real> {
    points: Vec<[S; 2]>,
    seg_len: Vec<S>,
    total: S,
}

impl<S: Real> Geom<S> {
    fn new(layout: &RouteLayout) -> Self {
        let points: Vec<[S; 2]> =
            layout.route.iter().map(|p| [real(p[0]), real(p[1])]).collect();
        let seg_len: Vec<S> = points
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .collect();
        let total = seg_len.iter().copied().sum();
        Self { points, seg_len, total }
    }

    /// Position and heading at arc length `s` (clamped to the ends).
    fn pose_at(&self, s: S) -> (S, S, S) {
        let mut remaining = s.max(S::zero()).min(self.total);
        for (i, &len) in self.seg_len.iter().enumerate() {
            if remaining <= len || i == self.seg_len.len() - 1 {
                let a = self.points[i];
                let b = self.points[i + 1];
                let frac = if len > S::zero() { remaining / len } else { S::zero() };
                let x = a[0] + (b[0] - a[0]) * frac;
                let y = a[1] + (b[1] - a[1]) * frac;
                let heading = (b[1] - a[1]).atan2(b[0] - a[0]);
                return (x, y, heading);
            }
            remaining -= len;
        }
        let last = *self.points.last().unwrap();
        (last[0], last[1], S::zero())
    }
}

/// Lateral profile of a lane change: smooth cosine ramp from 0 to 1.
fn lane_change_blend<S: Real>(elapsed: S, duration: S) -> S {
    if elapsed <= S::zero() {
        S::zero()
    } else if elapsed >= duration {
        S::one()
    } else {
        let half = real::<S>(0.5);
        half * (S::one() - (real::<S>(std::f64::consts::PI) * elapsed / duration).cos())
    }
}

struct Actors<S: Real> {
    ped: Kinematic<S>,
    npc: Kinematic<S>,
    npc_speed: S,
    npc_y0: S,
    npc_target_y: S,
    sedan: Option<Kinematic<S>>,
}

/// Run one episode. Deterministic given (layout, genome, seed, mode);
/// in deterministic mode the seed has no effect at all.
pub fn run_episode<S: Real>(
    layout: &RouteLayout,
    genome: &ScenarioGenome<S>,
    cfg: &SimConfig,
    seed: u64,
    mode: EpisodeMode,
    record_trace: bool,
) -> Result<SimOutcome<S>, SimError> {
    genome.validate()?;

    let geom = Geom::new(layout);
    let dt = real::<S>(cfg.dt);
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let cruise = real::<S>(layout.cruise_speed);

    // Stochastic mode jitters the detection range once per episode.
    let noise = match mode {
        EpisodeMode::Deterministic => 0.0,
        EpisodeMode::Stochastic => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.gen_range(-cfg.noise_amplitude..=cfg.noise_amplitude)
        }
    };
    let sun = genome.sun_altitude().to_f64().unwrap();
    let fog = genome.fog_density().to_f64().unwrap();
    let range = real::<S>(detection_range(cfg, sun, fog) * (1.0 + noise));

    // Initial placement: genome offsets are relative to the AVUT start
    // pose (longitudinal along the initial heading, lateral to its left).
    let (x0, y0, h0) = geom.pose_at(S::zero());
    let (sin0, cos0) = h0.sin_cos();
    let place = |lon: S, lat: S| -> (S, S) {
        (x0 + lon * cos0 - lat * sin0, y0 + lon * sin0 + lat * cos0)
    };

    let (ped_x, ped_y) = place(genome.ped_lon(), genome.ped_lat());
    let (ox, oy) = genome.ped_orient();
    let norm = ox.hypot(oy);
    let (pvx, pvy) = if norm > real(1e-9) {
        (genome.ped_speed() * ox / norm, genome.ped_speed() * oy / norm)
    } else {
        // Zero orientation vector: the pedestrian stands still.
        (S::zero(), S::zero())
    };

    let (npc_x, npc_y) = place(genome.npc_lon(), genome.npc_lat());
    let lane_w = real::<S>(layout.lane_width);
    let npc_target_y = match genome.npc_behavior() {
        crate::scenario::NpcBehavior::KeepLane => npc_y,
        crate::scenario::NpcBehavior::ChangeLeft => npc_y + lane_w,
        crate::scenario::NpcBehavior::ChangeRight => npc_y - lane_w,
    };

    let mut actors = Actors {
        ped: Kinematic { x: ped_x, y: ped_y, vx: pvx, vy: pvy },
        npc: Kinematic { x: npc_x, y: npc_y, vx: real(cfg.npc_speed), vy: S::zero() },
        npc_speed: real(cfg.npc_speed),
        npc_y0: npc_y,
        npc_target_y,
        sedan: layout.sedan.map(|s| Kinematic {
            x: real(s.start_x),
            y: real(s.lane_from),
            vx: real(s.speed),
            vy: S::zero(),
        }),
    };

    let weather = Weather { sun_altitude: genome.sun_altitude(), fog_density: genome.fog_density() };
    let veh_thresh = real::<S>(cfg.vehicle_threshold);
    let ped_thresh = real::<S>(cfg.ped_threshold);

    let mut s_along = S::zero();
    let mut speed = cruise;
    let mut counts = InfractionCounts::default();
    let mut md = S::infinity();
    let mut trace: Vec<EnvState<S>> = Vec::new();
    let mut feature_vector = [S::zero(); FEATURE_LEN];

    let clearance = |ax: S, ay: S, k: &Kinematic<S>, thresh: S| -> S {
        ((k.x - ax).hypot(k.y - ay) - thresh).max(S::zero())
    };

    let snapshot = |t: S, s_along: S, speed: S, actors: &Actors<S>| -> EnvState<S> {
        let (ax, ay, ah) = geom.pose_at(s_along);
        EnvState {
            timestamp: t,
            avut: Pose { x: ax, y: ay, heading: ah, speed },
            pedestrian: actors.ped,
            npc: actors.npc,
            npc_lane: layout.nearest_lane(actors.npc.y.to_f64().unwrap()),
            sedan: actors.sedan,
            weather,
            distances: ObjectDistances {
                pedestrian: clearance(ax, ay, &actors.ped, ped_thresh),
                npc: clearance(ax, ay, &actors.npc, veh_thresh),
                sedan: actors.sedan.map(|sd| clearance(ax, ay, &sd, veh_thresh)),
            },
        }
    };

    let account = |state: &EnvState<S>, counts: &mut InfractionCounts, md: &mut S| {
        let d = &state.distances;
        *md = (*md).min(d.min());
        if d.pedestrian <= S::zero() && counts.pedestrian == 0 {
            counts.pedestrian = 1;
        }
        let npc_hit =
            d.npc <= S::zero() || d.sedan.map_or(false, |sd| sd <= S::zero());
        if npc_hit && counts.npc == 0 {
            counts.npc = 1;
        }
        // Static objects are road-boundary strikes; the path-following
        // controller never leaves the road, so the count stays zero in
        // these layouts.
    };

    let initial = snapshot(S::zero(), s_along, speed, &actors);
    feature_vector.copy_from_slice(&featurize(&initial));
    account(&initial, &mut counts, &mut md);
    if record_trace {
        trace.push(initial);
    }

    let pred_taus = [0.0, 0.5, 1.0].map(|f| real::<S>(f * cfg.prediction_horizon));
    let mut t = S::zero();
    for _ in 0..steps {
        let (ax, ay, ah) = geom.pose_at(s_along);
        let (sin_h, cos_h) = ah.sin_cos();

        // Perception and braking: react to detected objects ahead whose
        // predicted clearance falls below the brake gap.
        let mut must_brake = false;
        let objects: [(Option<Kinematic<S>>, S); 3] = [
            (Some(actors.ped), ped_thresh),
            (Some(actors.npc), veh_thresh),
            (actors.sedan, veh_thresh),
        ];
        for (obj, thresh) in objects.iter() {
            let Some(obj) = obj else { continue };
            let dist = (obj.x - ax).hypot(obj.y - ay);
            if dist > range {
                continue;
            }
            let rel_fwd = (obj.x - ax) * cos_h + (obj.y - ay) * sin_h;
            if rel_fwd < real(-2.0) {
                continue;
            }
            for &tau in &pred_taus {
                let (fx, fy, _) = geom.pose_at(s_along + speed * tau);
                let gap = (obj.x + obj.vx * tau - fx).hypot(obj.y + obj.vy * tau - fy) - *thresh;
                if gap < real(cfg.brake_gap) {
                    must_brake = true;
                    break;
                }
            }
            if must_brake {
                break;
            }
        }
        speed = if must_brake {
            (speed - real::<S>(cfg.brake_decel) * dt).max(S::zero())
        } else {
            (speed + real::<S>(cfg.cruise_accel) * dt).min(cruise)
        };
        s_along = (s_along + speed * dt).min(geom.total);

        // Pedestrian: constant velocity.
        actors.ped.x = actors.ped.x + actors.ped.vx * dt;
        actors.ped.y = actors.ped.y + actors.ped.vy * dt;

        // NPC: initial behavior (keep lane or a single lane change), then
        // proceed while decelerating behind close objects ahead.
        let blend = lane_change_blend(t + dt, real(cfg.lane_change_duration));
        let new_npc_y = actors.npc_y0 + (actors.npc_target_y - actors.npc_y0) * blend;
        let mut npc_brake = false;
        let (nav_x, nav_y, _) = geom.pose_at(s_along);
        let avut_kin = Kinematic { x: nav_x, y: nav_y, vx: speed * cos_h, vy: speed * sin_h };
        for (obj, thresh) in
            [(Some(avut_kin), veh_thresh), (Some(actors.ped), ped_thresh), (actors.sedan, veh_thresh)]
        {
            let Some(obj) = obj else { continue };
            let ahead = obj.x > actors.npc.x;
            let gap = (obj.x - actors.npc.x).hypot(obj.y - actors.npc.y) - thresh;
            if ahead && gap < real(cfg.npc_gap) {
                npc_brake = true;
                break;
            }
        }
        actors.npc_speed = if npc_brake {
            (actors.npc_speed - real::<S>(cfg.npc_decel) * dt).max(S::zero())
        } else {
            (actors.npc_speed + real::<S>(cfg.cruise_accel) * dt).min(real(cfg.npc_speed))
        };
        let prev_y = actors.npc.y;
        actors.npc.x = actors.npc.x + actors.npc_speed * dt;
        actors.npc.y = new_npc_y;
        actors.npc.vx = actors.npc_speed;
        actors.npc.vy = (new_npc_y - prev_y) / dt;

        // Scripted sedan: constant speed, scripted lane change.
        if let (Some(sedan), Some(script)) = (actors.sedan.as_mut(), layout.sedan.as_ref()) {
            let elapsed = t + dt - real(script.change_start);
            let blend = lane_change_blend(elapsed, real(cfg.lane_change_duration));
            let new_y =
                real::<S>(script.lane_from) + (real::<S>(script.lane_to) - real::<S>(script.lane_from)) * blend;
            sedan.vy = (new_y - sedan.y) / dt;
            sedan.x = sedan.x + sedan.vx * dt;
            sedan.y = new_y;
        }

        t = t + dt;
        let state = snapshot(t, s_along, speed, &actors);
        account(&state, &mut counts, &mut md);
        if record_trace {
            trace.push(state);
        }
        if s_along >= geom.total {
            break;
        }
    }

    let rc = if s_along >= geom.total {
        real::<S>(100.0)
    } else {
        real::<S>(100.0) * s_along / geom.total
    };
    let is_score = infraction_score::<S>(&counts);
    let co = counts.pedestrian + counts.npc + counts.static_obj > 0;

    Ok(SimOutcome {
        trace,
        md,
        co,
        rc,
        is_score,
        ds: rc * is_score,
        infractions: counts,
        feature_vector,
    })
}

/// Horizon used to normalize the episode-time feature, seconds.
const FEATURE_TIME_SCALE: f64 = 60.0;

/// Fixed-length feature summary of a state, every entry in [-1, 1].
/// Positions and velocities are expressed relative to the AVUT in its
/// own frame, so globally translated or rotated states featurize
/// identically.
///
/// Layout: 0-3 pedestrian rel (x, y, vx, vy); 4-7 NPC rel (x, y, vx,
/// vy); 8 AVUT speed; 9 sun altitude; 10 fog density; 11 NPC lane
/// index; 12-14 clearances (ped, npc, sedan; 1 when absent); 15 episode
/// time.
pub fn featurize<S: Real>(state: &EnvState<S>) -> FeatureVec<S> {
    let clamp = |v: S| v.max(real(-1.0)).min(real(1.0));
    let (sin_h, cos_h) = state.avut.heading.sin_cos();
    let rel = |k: &Kinematic<S>| -> (S, S, S, S) {
        let dx = k.x - state.avut.x;
        let dy = k.y - state.avut.y;
        let rvx = k.vx - state.avut.speed * cos_h;
        let rvy = k.vy - state.avut.speed * sin_h;
        (
            dx * cos_h + dy * sin_h,
            -dx * sin_h + dy * cos_h,
            rvx * cos_h + rvy * sin_h,
            -rvx * sin_h + rvy * cos_h,
        )
    };
    let pos_scale = real::<S>(50.0);
    let ped_v_scale = real::<S>(12.0);
    let veh_v_scale = real::<S>(15.0);
    let (prx, pry, prvx, prvy) = rel(&state.pedestrian);
    let (nrx, nry, nrvx, nrvy) = rel(&state.npc);
    let mut f = [S::zero(); FEATURE_LEN];
    f[0] = clamp(prx / pos_scale);
    f[1] = clamp(pry / pos_scale);
    f[2] = clamp(prvx / ped_v_scale);
    f[3] = clamp(prvy / ped_v_scale);
    f[4] = clamp(nrx / pos_scale);
    f[5] = clamp(nry / pos_scale);
    f[6] = clamp(nrvx / veh_v_scale);
    f[7] = clamp(nrvy / veh_v_scale);
    f[8] = clamp(state.avut.speed / veh_v_scale);
    f[9] = clamp(state.weather.sun_altitude / real(90.0));
    f[10] = clamp(state.weather.fog_density / real(100.0));
    f[11] = clamp(real::<S>(state.npc_lane as f64) / real(3.0));
    f[12] = clamp(state.distances.pedestrian / pos_scale);
    f[13] = clamp(state.distances.npc / pos_scale);
    f[14] = state.distances.sedan.map_or(S::one(), |d| clamp(d / pos_scale));
    f[15] = clamp(state.timestamp / real(FEATURE_TIME_SCALE));
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{gene, sample_uniform};
    use crate::sim::layout::{layout, LayoutId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn genome_with(pairs: &[(usize, f64)]) -> ScenarioGenome<f64> {
        let mut g = sample_uniform(&mut ChaCha8Rng::seed_from_u64(123));
        for &(i, v) in pairs {
            g.set_value(i, v);
        }
        crate::scenario::clamp_repair(g)
    }

    fn quiet_genome() -> ScenarioGenome<f64> {
        // Everything far behind the AVUT, clear weather: no interaction.
        genome_with(&[
            (gene::PED_LON, -10.0),
            (gene::PED_LAT, -10.0),
            (gene::PED_ORIENT_X, -1.0),
            (gene::PED_ORIENT_Y, 0.0),
            (gene::NPC_LON, -20.0),
            (gene::NPC_LAT, -20.0),
            (gene::NPC_BEHAVIOR, 0.0),
            (gene::SUN_ALTITUDE, 90.0),
            (gene::FOG_DENSITY, 0.0),
        ])
    }

    #[test]
    fn quiet_episode_is_clean() {
        let cfg = SimConfig::default();
        // env2 has no scripted sedan, so nothing can interact.
        let out = run_episode(
            &layout(LayoutId::Env2),
            &quiet_genome(),
            &cfg,
            0,
            EpisodeMode::Deterministic,
            false,
        )
        .unwrap();
        assert!(!out.co);
        assert_eq!(out.rc, 100.0);
        assert_eq!(out.is_score, 1.0);
        assert_eq!(out.ds, 100.0);
        assert!(out.md > 0.0);
    }

    #[test]
    fn pedestrian_overlap_collides_immediately() {
        let g = genome_with(&[
            (gene::PED_LON, 0.0),
            (gene::PED_LAT, 0.0),
            (gene::PED_ORIENT_X, 0.0),
            (gene::PED_ORIENT_Y, 0.0),
            (gene::NPC_LON, -20.0),
            (gene::NPC_LAT, -20.0),
        ]);
        let cfg = SimConfig::default();
        let out = run_episode(
            &layout(LayoutId::Env2),
            &g,
            &cfg,
            0,
            EpisodeMode::Deterministic,
            false,
        )
        .unwrap();
        assert!(out.co);
        assert_eq!(out.md, 0.0);
        assert_eq!(out.infractions.pedestrian, 1);
        assert_eq!(out.is_score, PENALTY_PED);
    }

    #[test]
    fn collision_implies_md_at_threshold() {
        // Fuzz: every colliding episode must have md = 0 (clearance hit
        // the threshold).
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = layout(LayoutId::Env3);
        let mut seen_collision = false;
        for _ in 0..300 {
            let g: ScenarioGenome<f64> = sample_uniform(&mut rng);
            let out =
                run_episode(&l, &g, &cfg, 0, EpisodeMode::Deterministic, false).unwrap();
            if out.co {
                seen_collision = true;
                assert_eq!(out.md, 0.0);
            } else {
                assert!(out.md > 0.0);
            }
            assert!((out.ds - out.rc * out.is_score).abs() == 0.0);
            assert!(out.rc >= 0.0 && out.rc <= 100.0);
        }
        assert!(seen_collision, "no collisions in 300 random episodes");
    }

    #[test]
    fn determinism_bit_exact() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let g: ScenarioGenome<f64> = sample_uniform(&mut rng);
            for l in crate::sim::layout::all_layouts() {
                let a = run_episode(&l, &g, &cfg, 7, EpisodeMode::Stochastic, true).unwrap();
                let b = run_episode(&l, &g, &cfg, 7, EpisodeMode::Stochastic, true).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn deterministic_mode_ignores_seed() {
        let cfg = SimConfig::default();
        let g = quiet_genome();
        let l = layout(LayoutId::Env1);
        let a = run_episode(&l, &g, &cfg, 1, EpisodeMode::Deterministic, false).unwrap();
        let b = run_episode(&l, &g, &cfg, 999, EpisodeMode::Deterministic, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stochastic_mode_varies_with_seed() {
        let cfg = SimConfig::default();
        // A scenario near the braking margin reacts to detection jitter.
        let g = genome_with(&[
            (gene::PED_LON, 9.0),
            (gene::PED_LAT, 0.5),
            (gene::PED_ORIENT_X, 0.0),
            (gene::PED_ORIENT_Y, -1.0),
            (gene::FOG_DENSITY, 90.0),
        ]);
        let l = layout(LayoutId::Env2);
        let outcomes: Vec<f64> = (0..20)
            .map(|seed| {
                run_episode(&l, &g, &cfg, seed, EpisodeMode::Stochastic, false).unwrap().md
            })
            .collect();
        let distinct = outcomes.iter().any(|&m| (m - outcomes[0]).abs() > 1e-12);
        assert!(distinct, "stochastic episodes all identical: {outcomes:?}");
    }

    #[test]
    fn fog_shrinks_detection_range() {
        let cfg = SimConfig::default();
        let mut last = f64::INFINITY;
        for fog in 0..=100 {
            let d = detection_range(&cfg, 0.0, fog as f64);
            assert!(d <= last + 1e-12, "detection range increased with fog");
            last = d;
        }
        assert_eq!(detection_range(&cfg, 90.0, 0.0), 40.0);
        assert!((detection_range(&cfg, -90.0, 0.0) - 24.0).abs() < 1e-12);
        assert!((detection_range(&cfg, 90.0, 100.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn md_equals_trace_rescan() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let g: ScenarioGenome<f64> = sample_uniform(&mut rng);
            let out = run_episode(
                &layout(LayoutId::Env4),
                &g,
                &cfg,
                0,
                EpisodeMode::Deterministic,
                true,
            )
            .unwrap();
            // Independent re-scan over all (timestep, object) pairs.
            let mut rescan = f64::INFINITY;
            for state in &out.trace {
                rescan = rescan.min(state.distances.pedestrian);
                rescan = rescan.min(state.distances.npc);
                if let Some(d) = state.distances.sedan {
                    rescan = rescan.min(d);
                }
            }
            assert_eq!(out.md, rescan);
            assert_eq!(crate::sim::fitness(&out), out.md);
        }
    }

    #[test]
    fn trace_timestamps_step_uniformly() {
        let cfg = SimConfig::default();
        let out = run_episode(
            &layout(LayoutId::Env2),
            &quiet_genome(),
            &cfg,
            0,
            EpisodeMode::Deterministic,
            true,
        )
        .unwrap();
        assert!(!out.trace.is_empty());
        for w in out.trace.windows(2) {
            let dt = w[1].timestamp - w[0].timestamp;
            assert!((dt - cfg.dt).abs() < 1e-9);
        }
    }

    #[test]
    fn features_are_frame_invariant() {
        let cfg = SimConfig::default();
        let l = layout(LayoutId::Env3);
        let out = run_episode(
            &l,
            &quiet_genome(),
            &cfg,
            0,
            EpisodeMode::Deterministic,
            true,
        )
        .unwrap();
        let state = out.trace[5];
        let (angle, tx, ty) = (0.73_f64, 101.5, -47.25);
        let (sin_a, cos_a) = angle.sin_cos();
        let rotate = |k: &Kinematic<f64>| Kinematic {
            x: k.x * cos_a - k.y * sin_a + tx,
            y: k.x * sin_a + k.y * cos_a + ty,
            vx: k.vx * cos_a - k.vy * sin_a,
            vy: k.vx * sin_a + k.vy * cos_a,
        };
        let mut moved = state;
        moved.avut = Pose {
            x: state.avut.x * cos_a - state.avut.y * sin_a + tx,
            y: state.avut.x * sin_a + state.avut.y * cos_a + ty,
            heading: state.avut.heading + angle,
            speed: state.avut.speed,
        };
        moved.pedestrian = rotate(&state.pedestrian);
        moved.npc = rotate(&state.npc);
        moved.sedan = state.sedan.as_ref().map(rotate);
        let a = featurize(&state);
        let b = featurize(&moved);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn fog_feature_is_normalized() {
        let cfg = SimConfig::default();
        let g = genome_with(&[(gene::FOG_DENSITY, 100.0)]);
        let out = run_episode(
            &layout(LayoutId::Env2),
            &g,
            &cfg,
            0,
            EpisodeMode::Deterministic,
            false,
        )
        .unwrap();
        assert_eq!(out.feature_vector[10], 1.0);
        assert_eq!(out.feature_vector.len(), FEATURE_LEN);
        for v in out.feature_vector {
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn invalid_genome_is_rejected() {
        let mut g = quiet_genome();
        g.set_value(gene::PED_SPEED, 9.0);
        let cfg = SimConfig::default();
        let err = run_episode(
            &layout(LayoutId::Env1),
            &g,
            &cfg,
            0,
            EpisodeMode::Deterministic,
            false,
        );
        assert!(matches!(err, Err(SimError::InvalidGenome(_))));
    }
}
