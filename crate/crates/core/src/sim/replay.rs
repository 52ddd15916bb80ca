//! Episode replay files: a structured text log with one state row per
//! time step, self-contained enough to re-derive every metric without
//! the layout geometry (progress is recovered from the recorded poses).

use std::io::{BufRead, Write};

use super::episode::{
    infraction_score, EpisodeMode, InfractionCounts, SimConfig, SimOutcome,
};
use super::layout::RouteLayout;
use crate::scenario::{encode_names, ScenarioGenome};

pub const REPLAY_MAGIC: &str = "# replay v1";

const COLUMNS: &str = "t,avut_x,avut_y,avut_heading,avut_speed,ped_x,ped_y,ped_vx,ped_vy,\
npc_x,npc_y,npc_vx,npc_vy,npc_lane,sedan_x,sedan_y,sedan_vx,sedan_vy,ped_dist,npc_dist,sedan_dist";

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed replay file: {0}")]
    Parse(String),
}

/// Metrics recovered from a replay log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayMetrics {
    pub md: f64,
    pub co: bool,
    pub rc: f64,
    pub is_score: f64,
    pub ds: f64,
    pub infractions: InfractionCounts,
}

/// Write a recorded episode as a replay log.
pub fn write_replay<W: Write>(
    outcome: &SimOutcome<f64>,
    layout: &RouteLayout,
    cfg: &SimConfig,
    genome: &ScenarioGenome<f64>,
    seed: u64,
    mode: EpisodeMode,
    out: &mut W,
) -> std::io::Result<()> {
    assert!(!outcome.trace.is_empty(), "replay requires a recorded trace");
    writeln!(out, "{REPLAY_MAGIC}")?;
    writeln!(
        out,
        "# layout={} dt={} route_len={} seed={} mode={}",
        layout.id,
        cfg.dt,
        layout.route_length(),
        seed,
        mode.as_str()
    )?;
    writeln!(out, "# thresholds ped={} vehicle={}", cfg.ped_threshold, cfg.vehicle_threshold)?;
    let names = encode_names();
    let fields: Vec<String> = names
        .iter()
        .zip(genome.values().iter())
        .map(|(n, v)| format!("{n}={v}"))
        .collect();
    writeln!(out, "# genome {}", fields.join(" "))?;
    writeln!(
        out,
        "# summary md={} co={} rc={} is={} ds={}",
        outcome.md, outcome.co as u8, outcome.rc, outcome.is_score, outcome.ds
    )?;
    writeln!(out, "{COLUMNS}")?;
    for s in &outcome.trace {
        let sedan = s
            .sedan
            .map(|k| format!("{},{},{},{}", k.x, k.y, k.vx, k.vy))
            .unwrap_or_else(|| ",,,".to_string());
        let sedan_dist = s.distances.sedan.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.timestamp,
            s.avut.x,
            s.avut.y,
            s.avut.heading,
            s.avut.speed,
            s.pedestrian.x,
            s.pedestrian.y,
            s.pedestrian.vx,
            s.pedestrian.vy,
            s.npc.x,
            s.npc.y,
            s.npc.vx,
            s.npc.vy,
            s.npc_lane,
            sedan,
            s.distances.pedestrian,
            s.distances.npc,
            sedan_dist,
        )?;
    }
    Ok(())
}

/// A parsed replay: header values plus the raw state rows needed for
/// metric re-derivation.
#[derive(Debug, Clone)]
pub struct Replay {
    pub layout_id: String,
    pub dt: f64,
    pub route_len: f64,
    pub seed: u64,
    pub mode: String,
    pub ped_threshold: f64,
    pub vehicle_threshold: f64,
    pub genome_fields: Vec<(String, f64)>,
    pub recorded: ReplayMetrics,
    pub rows: Vec<ReplayRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayRow {
    pub t: f64,
    pub avut: [f64; 2],
    pub ped: [f64; 2],
    pub npc: [f64; 2],
    pub sedan: Option<[f64; 2]>,
}

fn header_value<'a>(line: &'a str, key: &str) -> Result<&'a str, ReplayError> {
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(&format!("{key}=")))
        .ok_or_else(|| ReplayError::Parse(format!("missing {key} in header line {line:?}")))
}

fn parse_f64(s: &str, what: &str) -> Result<f64, ReplayError> {
    s.parse::<f64>().map_err(|_| ReplayError::Parse(format!("bad {what}: {s:?}")))
}

/// Parse a replay log.
pub fn read_replay<R: BufRead>(input: R) -> Result<Replay, ReplayError> {
    let mut lines = input.lines();
    let magic = lines.next().ok_or_else(|| ReplayError::Parse("empty file".into()))??;
    if magic.trim() != REPLAY_MAGIC {
        return Err(ReplayError::Parse(format!("bad magic line {magic:?}")));
    }
    let layout_line = lines.next().ok_or_else(|| ReplayError::Parse("missing layout line".into()))??;
    let thresholds = lines.next().ok_or_else(|| ReplayError::Parse("missing thresholds".into()))??;
    let genome_line = lines.next().ok_or_else(|| ReplayError::Parse("missing genome".into()))??;
    let summary = lines.next().ok_or_else(|| ReplayError::Parse("missing summary".into()))??;
    let header = lines.next().ok_or_else(|| ReplayError::Parse("missing column header".into()))??;
    if header.trim() != COLUMNS {
        return Err(ReplayError::Parse("unexpected column header".into()));
    }

    let genome_fields = genome_line
        .trim_start_matches("# genome")
        .split_whitespace()
        .map(|tok| {
            let (name, value) = tok
                .split_once('=')
                .ok_or_else(|| ReplayError::Parse(format!("bad genome field {tok:?}")))?;
            Ok((name.to_string(), parse_f64(value, "genome value")?))
        })
        .collect::<Result<Vec<_>, ReplayError>>()?;

    let recorded = ReplayMetrics {
        md: parse_f64(header_value(&summary, "md")?, "md")?,
        co: header_value(&summary, "co")? == "1",
        rc: parse_f64(header_value(&summary, "rc")?, "rc")?,
        is_score: parse_f64(header_value(&summary, "is")?, "is")?,
        ds: parse_f64(header_value(&summary, "ds")?, "ds")?,
        infractions: InfractionCounts::default(),
    };

    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 21 {
            return Err(ReplayError::Parse(format!("row with {} fields", f.len())));
        }
        let num = |i: usize| parse_f64(f[i], "row field");
        let sedan = if f[14].is_empty() { None } else { Some([num(14)?, num(15)?]) };
        rows.push(ReplayRow {
            t: num(0)?,
            avut: [num(1)?, num(2)?],
            ped: [num(5)?, num(6)?],
            npc: [num(9)?, num(10)?],
            sedan,
        });
    }
    if rows.is_empty() {
        return Err(ReplayError::Parse("no state rows".into()));
    }

    Ok(Replay {
        layout_id: header_value(&layout_line, "layout")?.to_string(),
        dt: parse_f64(header_value(&layout_line, "dt")?, "dt")?,
        route_len: parse_f64(header_value(&layout_line, "route_len")?, "route_len")?,
        seed: header_value(&layout_line, "seed")?
            .parse()
            .map_err(|_| ReplayError::Parse("bad seed".into()))?,
        mode: header_value(&layout_line, "mode")?.to_string(),
        ped_threshold: parse_f64(header_value(&thresholds, "ped")?, "ped threshold")?,
        vehicle_threshold: parse_f64(header_value(&thresholds, "vehicle")?, "vehicle threshold")?,
        genome_fields,
        recorded,
        rows,
    })
}

/// Re-derive the five metrics from the raw rows: clearances from poses
/// and thresholds, progress from the summed AVUT displacement.
pub fn rederive_metrics(replay: &Replay) -> ReplayMetrics {
    let mut md = f64::INFINITY;
    let mut counts = InfractionCounts::default();
    let mut traveled = 0.0;
    let mut prev = replay.rows[0].avut;
    for row in &replay.rows {
        traveled += (row.avut[0] - prev[0]).hypot(row.avut[1] - prev[1]);
        prev = row.avut;
        let clear = |p: [f64; 2], thresh: f64| -> f64 {
            ((p[0] - row.avut[0]).hypot(p[1] - row.avut[1]) - thresh).max(0.0)
        };
        let ped = clear(row.ped, replay.ped_threshold);
        let npc = clear(row.npc, replay.vehicle_threshold);
        let sedan = row.sedan.map(|p| clear(p, replay.vehicle_threshold));
        md = md.min(ped).min(npc).min(sedan.unwrap_or(f64::INFINITY));
        if ped <= 0.0 && counts.pedestrian == 0 {
            counts.pedestrian = 1;
        }
        if (npc <= 0.0 || sedan.map_or(false, |d| d <= 0.0)) && counts.npc == 0 {
            counts.npc = 1;
        }
    }
    let rc = (100.0 * traveled / replay.route_len).min(100.0);
    let is_score: f64 = infraction_score(&counts);
    ReplayMetrics {
        md,
        co: counts.pedestrian + counts.npc + counts.static_obj > 0,
        rc,
        is_score,
        ds: rc * is_score,
        infractions: counts,
    }
}
