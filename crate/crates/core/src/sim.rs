//! Seeded synthetic plant: event logs with planted degradation.
//!
//! Each chamber carries a latent wear level in `[0, 1]` that grows run by run with
//! gamma-distributed increments. When wear crosses 1 the chamber breaks down, is
//! repaired, and wear restarts at 0. Alarm and violation codes fire with a
//! per-run probability `amplitude * logistic(steepness * (wear - threshold))`
//! ("degradation" codes) or at a constant background rate. A subset of sensors
//! drifts linearly with wear on top of recipe-specific baselines; the rest is
//! noise, and a configurable fraction of columns are exact copies of others.
//! Voltage dips are rare shocks that add wear in proportion to their magnitude,
//! so segments hit by a dip end early.
//!
//! The generator is split into two independent random streams: stream 0 draws the
//! plant (sensor roles, recipes, code parameters) and stream `1 + c` drives the
//! dynamics of chamber `c`. [`planted_truth`] replays stream 0 only.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{
    AlarmCategory, AlarmEvent, ChamberState, EventLog, LimitViolationEvent, Run, StateChange,
    ViolationSeverity, VoltageDip,
};

/// Shape of the wear process per expected segment; segment-length CV ≈ 1/sqrt(8).
const WEAR_SHAPE_PER_SEGMENT: f64 = 8.0;
const MEAN_GAP_HOURS: f64 = 0.2;
const STANDBY_PROBABILITY: f64 = 0.02;
const DIP_RATE_PER_HOUR: f64 = 1.0 / 400.0;
/// Wear added per unit of dip magnitude (magnitudes lie in [2, 30]).
const DIP_WEAR_PER_UNIT: f64 = 0.012;
const NULL_PROBABILITY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_chambers: usize,
    pub horizon_hours: f64,
    pub n_recipes: usize,
    pub n_sensors: usize,
    pub n_alarm_codes: usize,
    pub n_violation_codes: usize,
    /// Expected productive hours between breakdowns.
    pub mean_segment_hours: f64,
    pub hazard_steepness: f64,
    pub duplicate_sensor_fraction: f64,
    /// Fraction of segments that end almost immediately (start-up glitches).
    pub short_segment_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_chambers: 8,
            horizon_hours: 5000.0,
            n_recipes: 5,
            n_sensors: 30,
            n_alarm_codes: 40,
            n_violation_codes: 12,
            mean_segment_hours: 700.0,
            hazard_steepness: 12.0,
            duplicate_sensor_fraction: 0.2,
            short_segment_fraction: 0.05,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.n_chambers == 0
            || self.n_recipes == 0
            || self.n_sensors == 0
            || self.n_alarm_codes == 0
            || self.n_violation_codes == 0
        {
            return bad("counts must be at least 1");
        }
        if !(self.horizon_hours > 0.0) || !self.horizon_hours.is_finite() {
            return bad("horizon_hours must be positive");
        }
        if !(self.mean_segment_hours > 0.0) || !self.mean_segment_hours.is_finite() {
            return bad("mean_segment_hours must be positive");
        }
        if !(self.hazard_steepness > 0.0) || !self.hazard_steepness.is_finite() {
            return bad("hazard_steepness must be positive");
        }
        if !(0.0..=1.0).contains(&self.duplicate_sensor_fraction) {
            return bad("duplicate_sensor_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.short_segment_fraction) {
            return bad("short_segment_fraction must lie in [0, 1]");
        }
        if self.n_duplicates() >= self.n_sensors {
            return bad("at least one sensor must be an original column");
        }
        Ok(())
    }

    fn n_duplicates(&self) -> usize {
        (self.duplicate_sensor_fraction * self.n_sensors as f64).round() as usize
    }
}

pub fn sensor_name(i: usize) -> String {
    format!("s{i:02}")
}

fn alarm_code(i: usize) -> String {
    format!("A{i:03}")
}

fn violation_code(i: usize) -> String {
    format!("V{i:02}")
}

fn recipe_name(i: usize) -> String {
    format!("R{i}")
}

fn chamber_name(i: usize) -> String {
    format!("C{}", i + 1)
}

/// Latent ground truth of a simulated plant. Only tests and reports consume it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedTruth {
    pub sensor_names: Vec<String>,
    /// Original columns that drift with wear.
    pub informative_sensors: Vec<usize>,
    /// Original columns carrying only recipe baseline and noise.
    pub noise_sensors: Vec<usize>,
    /// `(original, copy)` with `copy > original` in column order.
    pub duplicate_pairs: Vec<(usize, usize)>,
    /// Peak per-run emission probability; 0 for background codes.
    pub alarm_hazard_weights: BTreeMap<String, f64>,
    pub violation_hazard_weights: BTreeMap<String, f64>,
}

/// Wear the chamber has accumulated since its last breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct WearState {
    pub chamber_id: String,
    pub wear: f64,
    pub last_breakdown: Option<f64>,
}

#[derive(Debug, Clone)]
enum Emission {
    Degradation { amplitude: f64, threshold: f64 },
    Background { rate: f64 },
}

impl Emission {
    fn probability(&self, wear: f64, steepness: f64) -> f64 {
        match *self {
            Emission::Degradation {
                amplitude,
                threshold,
            } => amplitude / (1.0 + (-steepness * (wear - threshold)).exp()),
            Emission::Background { rate } => rate,
        }
    }

    fn hazard_weight(&self) -> f64 {
        match *self {
            Emission::Degradation { amplitude, .. } => amplitude,
            Emission::Background { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct RecipeProfile {
    base_duration: f64,
    baseline: Vec<f64>,
    scale: Vec<f64>,
    unused: Vec<bool>,
}

#[derive(Debug, Clone)]
struct Plant {
    n_base: usize,
    informative: Vec<usize>,
    noise: Vec<usize>,
    /// Drift per original column (0 for noise columns).
    drift: Vec<f64>,
    duplicates: Vec<(usize, usize)>,
    recipes: Vec<RecipeProfile>,
    alarms: Vec<(Emission, AlarmCategory)>,
    violations: Vec<(Emission, ViolationSeverity, usize)>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_plant(config: &SimConfig) -> Plant {
    let mut rng = rng_for(config.seed, 0);
    let n_base = config.n_sensors - config.n_duplicates();

    let mut order: Vec<usize> = (0..n_base).collect();
    order.shuffle(&mut rng);
    let n_informative = (n_base / 3).max(1);
    let mut informative = order[..n_informative].to_vec();
    let mut noise = order[n_informative..].to_vec();
    informative.sort_unstable();
    noise.sort_unstable();

    let mut drift = vec![0.0; n_base];
    for &i in &informative {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        drift[i] = sign * rng.gen_range(2.0..3.5);
    }

    let duplicates = (n_base..config.n_sensors)
        .map(|copy| (rng.gen_range(0..n_base), copy))
        .collect();

    let baseline_dist = Normal::new(0.0, 10.0).expect("valid normal");
    let recipes = (0..config.n_recipes)
        .map(|_| RecipeProfile {
            base_duration: rng.gen_range(3.0..9.0),
            baseline: (0..n_base).map(|_| baseline_dist.sample(&mut rng)).collect(),
            scale: (0..n_base).map(|_| rng.gen_range(0.5..2.0)).collect(),
            unused: (0..n_base)
                .map(|i| drift[i] == 0.0 && rng.gen_bool(NULL_PROBABILITY))
                .collect(),
        })
        .collect();

    let alarms = (0..config.n_alarm_codes)
        .map(|i| {
            let emission = if i % 2 == 0 {
                Emission::Degradation {
                    amplitude: rng.gen_range(0.03..0.2),
                    threshold: rng.gen_range(0.3..1.0),
                }
            } else {
                Emission::Background {
                    rate: rng.gen_range(0.002..0.02),
                }
            };
            let category = AlarmCategory::ALL[rng.gen_range(0..AlarmCategory::ALL.len())];
            (emission, category)
        })
        .collect();

    let violations = (0..config.n_violation_codes)
        .map(|i| {
            let severity = if rng.gen_bool(0.5) {
                ViolationSeverity::Error
            } else {
                ViolationSeverity::Information
            };
            if i % 2 == 0 || noise.is_empty() {
                let sensor = informative[(i / 2) % informative.len()];
                let emission = Emission::Degradation {
                    amplitude: rng.gen_range(0.03..0.15),
                    threshold: rng.gen_range(0.5..1.0),
                };
                (emission, severity, sensor)
            } else {
                let sensor = noise[(i / 2) % noise.len()];
                let emission = Emission::Background {
                    rate: rng.gen_range(0.002..0.01),
                };
                (emission, severity, sensor)
            }
        })
        .collect();

    Plant {
        n_base,
        informative,
        noise,
        drift,
        duplicates,
        recipes,
        alarms,
        violations,
    }
}

/// Latent truth for `config`, without running the dynamics.
pub fn planted_truth(config: &SimConfig) -> Result<PlantedTruth, SimError> {
    config.validate()?;
    let plant = draw_plant(config);
    Ok(PlantedTruth {
        sensor_names: (0..config.n_sensors).map(sensor_name).collect(),
        informative_sensors: plant.informative.clone(),
        noise_sensors: plant.noise.clone(),
        duplicate_pairs: plant.duplicates.clone(),
        alarm_hazard_weights: plant
            .alarms
            .iter()
            .enumerate()
            .map(|(i, (e, _))| (alarm_code(i), e.hazard_weight()))
            .collect(),
        violation_hazard_weights: plant
            .violations
            .iter()
            .enumerate()
            .map(|(i, (e, _, _))| (violation_code(i), e.hazard_weight()))
            .collect(),
    })
}

struct ChamberSim<'a> {
    config: &'a SimConfig,
    plant: &'a Plant,
    rng: ChaCha8Rng,
    wear: WearState,
    log: EventLog,
    run_counter: usize,
}

impl ChamberSim<'_> {
    fn state(&mut self, time: f64, state: ChamberState) {
        self.log.states.push(StateChange {
            chamber_id: self.wear.chamber_id.clone(),
            time,
            state,
        });
    }

    fn sensors(&mut self, recipe: usize, noise: &Normal<f64>) -> BTreeMap<String, Option<f64>> {
        let profile = &self.plant.recipes[recipe];
        let wear = self.wear.wear;
        let mut values = Vec::with_capacity(self.config.n_sensors);
        for i in 0..self.plant.n_base {
            let eps = noise.sample(&mut self.rng);
            let v = (!profile.unused[i]).then(|| {
                profile.baseline[i] + profile.scale[i] * (self.plant.drift[i] * wear + eps)
            });
            values.push(v);
        }
        for &(src, _) in &self.plant.duplicates {
            values.push(values[src]);
        }
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| (sensor_name(i), v))
            .collect()
    }

    fn emit_events(&mut self, start: f64, duration: f64) {
        let chamber = &self.wear.chamber_id;
        let steep = self.config.hazard_steepness;
        for (i, (emission, category)) in self.plant.alarms.iter().enumerate() {
            if self.rng.gen::<f64>() < emission.probability(self.wear.wear, steep) {
                let time = start + self.rng.gen::<f64>() * duration;
                self.log.alarms.push(AlarmEvent {
                    chamber_id: chamber.clone(),
                    time,
                    code: alarm_code(i),
                    category: *category,
                });
            }
        }
        for (i, (emission, severity, sensor)) in self.plant.violations.iter().enumerate() {
            if self.rng.gen::<f64>() < emission.probability(self.wear.wear, steep) {
                let time = start + self.rng.gen::<f64>() * duration;
                self.log.violations.push(LimitViolationEvent {
                    chamber_id: chamber.clone(),
                    time,
                    code: violation_code(i),
                    severity: *severity,
                    sensor: sensor_name(*sensor),
                });
            }
        }
    }

    fn simulate(mut self) -> EventLog {
        let horizon = self.config.horizon_hours;
        let mean_seg = self.config.mean_segment_hours;
        let kappa = WEAR_SHAPE_PER_SEGMENT / mean_seg;
        let noise = Normal::new(0.0, 1.0).expect("valid normal");
        let gap = Exp::new(1.0 / MEAN_GAP_HOURS).expect("valid rate");
        let dip_gap = Exp::new(DIP_RATE_PER_HOUR).expect("valid rate");

        let mut dips = Vec::new();
        let mut t_dip = dip_gap.sample(&mut self.rng);
        while t_dip < horizon {
            dips.push((t_dip, self.rng.gen_range(2.0..30.0)));
            t_dip += dip_gap.sample(&mut self.rng);
        }
        let mut next_dip = 0;

        let mut t = 0.0;
        self.wear.wear = self.rng.gen_range(0.0..0.9);
        let mut short = false;
        self.state(0.0, ChamberState::Productive);

        loop {
            while next_dip < dips.len() && dips[next_dip].0 <= t {
                self.wear.wear += DIP_WEAR_PER_UNIT * dips[next_dip].1;
                next_dip += 1;
            }
            let recipe = self.rng.gen_range(0..self.plant.recipes.len());
            let duration = if short {
                self.rng.gen_range(0.2..1.5)
            } else {
                self.plant.recipes[recipe].base_duration * self.rng.gen_range(0.8..1.2)
            };
            if t + duration > horizon {
                break;
            }
            let shape = duration * kappa;
            let inc = Gamma::new(shape, 1.0 / (kappa * mean_seg))
                .expect("positive gamma parameters")
                .sample(&mut self.rng);
            self.wear.wear += inc;

            let sensors = self.sensors(recipe, &noise);
            self.log.runs.push(Run {
                chamber_id: self.wear.chamber_id.clone(),
                run_id: format!("{}-r{:05}", self.wear.chamber_id, self.run_counter),
                recipe_id: recipe_name(recipe),
                start: t,
                duration,
                sensors,
            });
            self.run_counter += 1;
            self.emit_events(t, duration);
            t += duration;

            if short || self.wear.wear >= 1.0 {
                let breakdown = t + self.rng.gen_range(0.01..0.1);
                let maintenance = breakdown + self.rng.gen_range(0.5..2.0);
                let productive = maintenance + self.rng.gen_range(4.0..20.0);
                if breakdown > horizon {
                    break;
                }
                self.state(breakdown, ChamberState::Breakdown);
                self.wear.last_breakdown = Some(breakdown);
                self.wear.wear = 0.0;
                if maintenance > horizon {
                    break;
                }
                self.state(maintenance, ChamberState::Maintenance);
                if productive > horizon {
                    break;
                }
                self.state(productive, ChamberState::Productive);
                short = self.rng.gen_bool(self.config.short_segment_fraction);
                t = productive;
            } else {
                t += gap.sample(&mut self.rng);
                if self.rng.gen_bool(STANDBY_PROBABILITY) {
                    let standby = t;
                    let resume = standby + self.rng.gen_range(2.0..12.0);
                    if resume > horizon {
                        break;
                    }
                    self.state(standby, ChamberState::Standby);
                    self.state(resume, ChamberState::Productive);
                    t = resume;
                }
            }
        }

        self.log.dips = dips
            .into_iter()
            .map(|(time, magnitude)| VoltageDip {
                chamber_id: self.wear.chamber_id.clone(),
                time,
                magnitude,
            })
            .collect();
        self.log
    }
}

/// Generates a complete event log for `config`. Identical configs yield identical
/// logs.
pub fn simulate(config: &SimConfig) -> Result<EventLog, SimError> {
    config.validate()?;
    let plant = draw_plant(config);
    let mut log = EventLog::default();
    for c in 0..config.n_chambers {
        let chamber = ChamberSim {
            config,
            plant: &plant,
            rng: rng_for(config.seed, 1 + c as u64),
            wear: WearState {
                chamber_id: chamber_name(c),
                wear: 0.0,
                last_breakdown: None,
            },
            log: EventLog::default(),
            run_counter: 0,
        }
        .simulate();
        log.runs.extend(chamber.runs);
        log.alarms.extend(chamber.alarms);
        log.violations.extend(chamber.violations);
        log.states.extend(chamber.states);
        log.dips.extend(chamber.dips);
    }
    log.normalize();
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::validate;

    fn small(seed: u64) -> SimConfig {
        SimConfig {
            seed,
            n_chambers: 2,
            horizon_hours: 1500.0,
            mean_segment_hours: 150.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn rejects_zero_counts_and_bad_horizon() {
        for cfg in [
            SimConfig {
                n_chambers: 0,
                ..SimConfig::default()
            },
            SimConfig {
                n_alarm_codes: 0,
                ..SimConfig::default()
            },
            SimConfig {
                horizon_hours: 0.0,
                ..SimConfig::default()
            },
            SimConfig {
                horizon_hours: -5.0,
                ..SimConfig::default()
            },
        ] {
            assert!(simulate(&cfg).is_err());
            assert!(planted_truth(&cfg).is_err());
        }
    }

    #[test]
    fn same_seed_same_log() {
        assert_eq!(simulate(&small(7)).unwrap(), simulate(&small(7)).unwrap());
        assert_ne!(simulate(&small(7)).unwrap(), simulate(&small(8)).unwrap());
    }

    #[test]
    fn output_is_clean_and_within_horizon() {
        let cfg = small(3);
        let log = simulate(&cfg).unwrap();
        assert_eq!(validate(&log), vec![]);
        let h = cfg.horizon_hours;
        assert!(log.runs.iter().all(|r| r.start >= 0.0 && r.end() <= h));
        assert!(log.alarms.iter().all(|e| (0.0..=h).contains(&e.time)));
        assert!(log.violations.iter().all(|e| (0.0..=h).contains(&e.time)));
        assert!(log.states.iter().all(|e| (0.0..=h).contains(&e.time)));
        assert!(log.dips.iter().all(|e| (0.0..=h).contains(&e.time)));
    }

    #[test]
    fn duplicate_fraction_gives_exact_copies() {
        let cfg = SimConfig {
            duplicate_sensor_fraction: 0.2,
            n_sensors: 30,
            ..small(11)
        };
        let truth = planted_truth(&cfg).unwrap();
        assert_eq!(truth.duplicate_pairs.len(), 6);
        let log = simulate(&cfg).unwrap();
        for &(src, copy) in &truth.duplicate_pairs {
            assert!(copy > src && copy < 30);
            for r in &log.runs {
                assert_eq!(r.sensors[&sensor_name(src)], r.sensors[&sensor_name(copy)]);
            }
        }
    }

    #[test]
    fn planted_truth_partitions_sensors_and_codes() {
        let truth = planted_truth(&small(5)).unwrap();
        for i in &truth.informative_sensors {
            assert!(!truth.noise_sensors.contains(i));
        }
        let originals = truth.informative_sensors.len() + truth.noise_sensors.len();
        assert_eq!(originals + truth.duplicate_pairs.len(), 30);
        let log = simulate(&small(5)).unwrap();
        for a in &log.alarms {
            assert!(truth.alarm_hazard_weights.contains_key(&a.code));
        }
        assert!(truth.alarm_hazard_weights.values().any(|&w| w > 0.0));
        assert!(truth.alarm_hazard_weights.values().any(|&w| w == 0.0));
    }

    #[test]
    fn every_breakdown_follows_a_run_in_its_segment() {
        let log = simulate(&small(9)).unwrap();
        for chamber in log.chambers() {
            let mut prev = f64::NEG_INFINITY;
            for s in log
                .states
                .iter()
                .filter(|s| s.chamber_id == chamber && s.state == ChamberState::Breakdown)
            {
                let n = log
                    .runs
                    .iter()
                    .filter(|r| r.chamber_id == chamber && r.start >= prev && r.start < s.time)
                    .count();
                assert!(n >= 1, "breakdown at {} without a run", s.time);
                prev = s.time;
            }
        }
    }
}
