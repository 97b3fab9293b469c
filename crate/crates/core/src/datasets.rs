//! Labeled datasets: synthetic driving and naval-surveillance generators,
//! plus CSV persistence.
//!
//! CSV layout: a header line `label,<dim>,<len>` followed by one line per
//! sample holding the integer label and then `len * dim` values in
//! time-major order.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stl::{robustness, Formula, Predicate, Signal};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub scenario: String,
    pub seed: u64,
    pub params: String,
}

/// Signals with labels in `{+1, -1}`, all of the same length and dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<(Signal, i8)>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn new(samples: Vec<(Signal, i8)>) -> Result<Self> {
        if let Some((first, _)) = samples.first() {
            let (len, dim) = (first.len(), first.dim());
            for (i, (s, y)) in samples.iter().enumerate() {
                if *y != 1 && *y != -1 {
                    return Err(Error::InvalidInput(format!("sample {i}: label must be 1 or -1, got {y}")));
                }
                if s.len() != len || s.dim() != dim {
                    return Err(Error::InvalidInput(format!(
                        "sample {i}: shape {} x {} differs from {len} x {dim}",
                        s.len(),
                        s.dim()
                    )));
                }
            }
        }
        Ok(Self { samples, meta: DatasetMeta::default() })
    }

    pub fn with_meta(mut self, meta: DatasetMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[(Signal, i8)] {
        &self.samples
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Signal, i8)> {
        self.samples.iter().map(|(s, y)| (s, *y))
    }

    /// Signal length `l` (0 for an empty dataset).
    pub fn signal_len(&self) -> usize {
        self.samples.first().map_or(0, |(s, _)| s.len())
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |(s, _)| s.dim())
    }

    pub fn count_label(&self, label: i8) -> usize {
        self.samples.iter().filter(|(_, y)| *y == label).count()
    }

    pub fn has_both_labels(&self) -> bool {
        self.count_label(1) > 0 && self.count_label(-1) > 0
    }

    /// Concatenates two datasets with matching shapes.
    pub fn merge(mut self, other: LabeledDataset) -> Result<Self> {
        let meta = self.meta.clone();
        self.samples.extend(other.samples);
        Ok(Self::new(self.samples)?.with_meta(meta))
    }

    /// Same signals with every label replaced by `label`.
    pub fn relabel(self, label: i8) -> Result<Self> {
        let meta = self.meta.clone();
        Ok(Self::new(self.samples.into_iter().map(|(s, _)| (s, label)).collect())?.with_meta(meta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DrivingBehavior {
    GoForward,
    StopAndGo,
    LeftTurnLane1,
    LeftTurnLane2,
    SwitchLane,
    Overtake,
}

impl DrivingBehavior {
    pub const ALL: [DrivingBehavior; 6] = [
        DrivingBehavior::GoForward,
        DrivingBehavior::StopAndGo,
        DrivingBehavior::LeftTurnLane1,
        DrivingBehavior::LeftTurnLane2,
        DrivingBehavior::SwitchLane,
        DrivingBehavior::Overtake,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DrivingBehavior::GoForward => "go-forward",
            DrivingBehavior::StopAndGo => "stop-and-go",
            DrivingBehavior::LeftTurnLane1 => "left-turn-lane1",
            DrivingBehavior::LeftTurnLane2 => "left-turn-lane2",
            DrivingBehavior::SwitchLane => "switch-lane",
            DrivingBehavior::Overtake => "overtake",
        }
    }
}

impl FromStr for DrivingBehavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|b| b.name() == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown driving behavior `{s}`")))
    }
}

/// Knobs of the driving generator.
///
/// Coordinates: `x` is lateral (lane 1 spans `[-2, 2]`, lane 2 `[-6, -2]`),
/// `y` is longitudinal progress, one unit per step at nominal speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingParams {
    /// Std-dev of the per-step lateral velocity noise.
    pub noise_sigma: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Initial longitudinal position is uniform in `[0, start_spread]`.
    pub start_spread: f64,
    /// Initial lateral offset from the lane-1 center is uniform in `±lateral_spread`.
    pub lateral_spread: f64,
    /// Proportional gain pulling `x` (or `y` after a turn) toward the target lane center.
    pub lane_gain: f64,
    /// Stop line position as a fraction of the nominal longitudinal range.
    pub stop_fraction: f64,
    /// Number of zero-velocity steps at the stop line.
    pub hold_steps: usize,
}

impl Default for DrivingParams {
    fn default() -> Self {
        Self {
            noise_sigma: 0.1,
            speed_min: 0.97,
            speed_max: 1.03,
            start_spread: 1.0,
            lateral_spread: 0.5,
            lane_gain: 0.4,
            stop_fraction: 0.4,
            hold_steps: 3,
        }
    }
}

const LANE1_CENTER: f64 = 0.0;
const LANE2_CENTER: f64 = -4.0;
const ROAD_LEFT: f64 = -5.9;
const ROAD_RIGHT: f64 = 1.9;
/// Lane centers of the crossing road, as `y` positions relative to the intersection.
const CROSS_LANE1: f64 = 2.0;
const CROSS_LANE2: f64 = 6.0;
const TURN_STEPS: usize = 5;

/// `count` trajectories of one behavior, all labeled `+1`.
pub fn gen_driving(behavior: DrivingBehavior, count: usize, length: usize, seed: u64) -> Result<LabeledDataset> {
    gen_driving_with(behavior, count, length, seed, &DrivingParams::default())
}

pub fn gen_driving_with(
    behavior: DrivingBehavior,
    count: usize,
    length: usize,
    seed: u64,
    params: &DrivingParams,
) -> Result<LabeledDataset> {
    if length < 10 {
        return Err(Error::InvalidInput(format!("driving trajectories need length >= 10, got {length}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ behavior_salt(behavior));
    let noise = Normal::new(0.0, params.noise_sigma)
        .map_err(|e| Error::InvalidInput(format!("noise sigma {}: {e}", params.noise_sigma)))?;
    let samples =
        (0..count).map(|_| Ok((drive(behavior, length, params, &noise, &mut rng)?, 1))).collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset::new(samples)?.with_meta(DatasetMeta {
        scenario: format!("driving/{}", behavior.name()),
        seed,
        params: format!("{params:?}"),
    }))
}

/// Two behaviors, `per_class` samples each: `positive` labeled `+1`, `negative` `-1`.
pub fn driving_pair(
    positive: DrivingBehavior,
    negative: DrivingBehavior,
    per_class: usize,
    length: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let pos = gen_driving(positive, per_class, length, seed)?;
    let neg = gen_driving(negative, per_class, length, seed)?.relabel(-1)?;
    Ok(pos.merge(neg)?.with_meta(DatasetMeta {
        scenario: format!("driving/{}-vs-{}", positive.name(), negative.name()),
        seed,
        params: format!("{:?}", DrivingParams::default()),
    }))
}

fn behavior_salt(b: DrivingBehavior) -> u64 {
    0x9E37_79B9_7F4A_7C15u64.wrapping_mul(b as u64 + 1)
}

fn drive(
    behavior: DrivingBehavior,
    length: usize,
    p: &DrivingParams,
    noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Signal> {
    use DrivingBehavior::*;

    let speed = rng.random_range(p.speed_min..=p.speed_max);
    let mut x = LANE1_CENTER + rng.random_range(-p.lateral_spread..=p.lateral_spread);
    let mut y = rng.random_range(0.0..=p.start_spread);

    let nominal = length as f64;
    let stop_line = p.stop_fraction * nominal;
    let intersection = 0.5 * nominal;
    // lane change times scale with the trajectory length
    let frac = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| (rng.random_range(lo..=hi) * nominal).round() as usize;
    let (leave, back) = match behavior {
        SwitchLane => (frac(0.15, 0.35, rng), usize::MAX),
        Overtake => {
            let leave = frac(0.15, 0.25, rng);
            (leave, leave + frac(0.25, 0.35, rng))
        }
        _ => (usize::MAX, usize::MAX),
    };
    let turn_target = match behavior {
        LeftTurnLane1 => intersection + CROSS_LANE1,
        LeftTurnLane2 => intersection + CROSS_LANE2,
        _ => 0.0,
    };
    // the arc advances y by roughly one turning radius
    let radius = speed * TURN_STEPS as f64 / std::f64::consts::FRAC_PI_2;
    let turn_start = turn_target - radius;

    let mut stop_state = StopState::Approaching;
    let mut heading = std::f64::consts::FRAC_PI_2;
    let mut turn_step = 0usize;
    let mut rows = Vec::with_capacity(length);

    for t in 0..length {
        rows.push(vec![x, y]);
        let lateral = noise.sample(rng);
        match behavior {
            GoForward | StopAndGo | SwitchLane | Overtake => {
                let target = if t >= leave && t < back { LANE2_CENTER } else { LANE1_CENTER };
                x = (x + p.lane_gain * (target - x) + lateral).clamp(ROAD_LEFT, ROAD_RIGHT);
                if behavior == StopAndGo {
                    stop_state = stop_state.advance(&mut y, speed, stop_line, p.hold_steps);
                } else {
                    y += speed;
                }
            }
            LeftTurnLane1 | LeftTurnLane2 => {
                if turn_step == 0 && y + speed < turn_start {
                    x = (x + p.lane_gain * (LANE1_CENTER - x) + lateral).clamp(ROAD_LEFT, ROAD_RIGHT);
                    y += speed;
                } else if turn_step < TURN_STEPS {
                    turn_step += 1;
                    heading += std::f64::consts::FRAC_PI_2 / TURN_STEPS as f64;
                    x += speed * heading.cos();
                    y += speed * heading.sin() + 0.5 * lateral;
                } else {
                    x -= speed;
                    y += p.lane_gain * (turn_target - y) + lateral;
                }
            }
        }
    }
    Signal::from_rows(&rows)
}

#[derive(Debug, Clone, Copy)]
enum StopState {
    Approaching,
    Holding(usize),
    Gone,
}

impl StopState {
    fn advance(self, y: &mut f64, speed: f64, line: f64, hold: usize) -> Self {
        match self {
            StopState::Approaching if *y + speed >= line => {
                *y = line;
                if hold == 0 {
                    StopState::Gone
                } else {
                    StopState::Holding(hold)
                }
            }
            StopState::Approaching => {
                *y += speed;
                self
            }
            StopState::Holding(1) => StopState::Gone,
            StopState::Holding(n) => StopState::Holding(n - 1),
            StopState::Gone => {
                *y += speed;
                self
            }
        }
    }
}

/// Text of the reference naval formula the facsimile is built around.
pub const NAVAL_FORMULA: &str = "G[9,14](x1 > 23.37) & F[60,60](x0 < 27.96)";

/// Minimum |robustness| of every generated naval sample w.r.t. [`NAVAL_FORMULA`].
pub const NAVAL_MARGIN: f64 = 0.5;

pub const NAVAL_LENGTH: usize = 61;

/// Naval-surveillance facsimile: `count / 2` normal tracks (label `+1`)
/// heading from open sea to the harbor, the rest anomalous (label `-1`),
/// alternating between tracks that veer to the island early and tracks that
/// turn back to open sea.
pub fn gen_naval(count: usize, seed: u64) -> Result<LabeledDataset> {
    let reference = crate::stl::parse_formula(NAVAL_FORMULA)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4E41_5641_4C00_0000);
    let jitter = Normal::new(0.0, 0.3).expect("valid sigma");
    let normal = count / 2 + count % 2;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let kind = if i < normal {
            Vessel::Normal
        } else if (i - normal).is_multiple_of(2) {
            Vessel::Island
        } else {
            Vessel::Return
        };
        samples.push(vessel(kind, &reference, &jitter, &mut rng)?);
    }
    Ok(LabeledDataset::new(samples)?.with_meta(DatasetMeta {
        scenario: "naval".into(),
        seed,
        params: format!("length={NAVAL_LENGTH} margin={NAVAL_MARGIN}"),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Vessel {
    Normal,
    Island,
    Return,
}

fn vessel(kind: Vessel, reference: &Formula, jitter: &Normal<f64>, rng: &mut ChaCha8Rng) -> Result<(Signal, i8)> {
    loop {
        let start = (rng.random_range(55.0..65.0), rng.random_range(36.0..44.0));
        let harbor = (rng.random_range(12.0..20.0), rng.random_range(30.0..36.0));
        let waypoints: Vec<(f64, (f64, f64))> = match kind {
            Vessel::Normal => vec![(0.0, start), (rng.random_range(45.0..55.0), harbor)],
            Vessel::Island => {
                let island = (rng.random_range(38.0..46.0), rng.random_range(12.0..18.0));
                let arrive = rng.random_range(6.0..8.0);
                vec![
                    (0.0, start),
                    (arrive, island),
                    (arrive + rng.random_range(7.0..9.0), island),
                    (rng.random_range(50.0..56.0), harbor),
                ]
            }
            Vessel::Return => {
                let near = (rng.random_range(35.0..45.0), rng.random_range(26.0..32.0));
                let sea = (rng.random_range(60.0..75.0), rng.random_range(36.0..46.0));
                vec![(0.0, start), (rng.random_range(25.0..32.0), near), (60.0, sea)]
            }
        };
        let rows: Vec<Vec<f64>> = (0..NAVAL_LENGTH)
            .map(|t| {
                let (x, y) = along(&waypoints, t as f64);
                vec![x + jitter.sample(rng), y + jitter.sample(rng)]
            })
            .collect();
        let s = Signal::from_rows(&rows)?;
        let r = robustness(&s, reference, 0)?;
        let label = if kind == Vessel::Normal { 1 } else { -1 };
        if r * label as f64 >= NAVAL_MARGIN {
            return Ok((s, label));
        }
    }
}

/// Piecewise-linear position along timed waypoints, holding the last one.
fn along(waypoints: &[(f64, (f64, f64))], t: f64) -> (f64, f64) {
    for pair in waypoints.windows(2) {
        let (ta, a) = pair[0];
        let (tb, b) = pair[1];
        if t <= tb {
            let u = if tb > ta { ((t - ta) / (tb - ta)).clamp(0.0, 1.0) } else { 1.0 };
            return (a.0 + u * (b.0 - a.0), a.1 + u * (b.1 - a.1));
        }
    }
    waypoints.last().map(|w| w.1).unwrap_or((0.0, 0.0))
}

/// Predicate used by the driving checks: `x > -1.97`.
pub fn lane_one_predicate() -> Predicate {
    Predicate::gt(0, -1.97)
}

pub fn save_csv(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_csv(data))?;
    Ok(())
}

pub fn to_csv(data: &LabeledDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "label,{},{}", data.dim(), data.signal_len());
    for (s, y) in data.iter() {
        out.push_str(&y.to_string());
        for v in s.values() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    from_csv(&text, &path.display().to_string())
}

pub fn from_csv(text: &str, origin: &str) -> Result<LabeledDataset> {
    let err = |line: usize, msg: String| Error::Parse { path: origin.to_string(), line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    let (dim, len) = match fields.as_slice() {
        ["label", dim, len] => (
            dim.parse::<usize>().map_err(|e| err(1, format!("bad dim `{dim}`: {e}")))?,
            len.parse::<usize>().map_err(|e| err(1, format!("bad len `{len}`: {e}")))?,
        ),
        _ => return Err(err(1, format!("expected header `label,<dim>,<len>`, got `{header}`"))),
    };
    let mut samples = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let label_text = cells.next().unwrap_or("").trim();
        let label: i8 = match label_text {
            "1" | "+1" => 1,
            "-1" => -1,
            other => return Err(err(no, format!("label must be 1 or -1, got `{other}`"))),
        };
        let values = cells
            .map(|c| c.trim().parse::<f64>().map_err(|e| err(no, format!("bad value `{c}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim * len {
            return Err(err(
                no,
                format!("expected {} values for shape {len} x {dim}, got {}", dim * len, values.len()),
            ));
        }
        let s = Signal::new(values, len, dim).map_err(|e| err(no, e.to_string()))?;
        samples.push((s, label));
    }
    Ok(LabeledDataset::new(samples)?.with_meta(DatasetMeta {
        scenario: "csv".into(),
        seed: 0,
        params: origin.to_string(),
    }))
}
