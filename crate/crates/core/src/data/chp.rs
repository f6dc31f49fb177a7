//! Synthetic combined-heat-and-power plant telemetry at one-minute
//! resolution.
//!
//! The simulation couples a heat-storage tank to the plant controller: heat
//! demand grows as the outdoor temperature falls, the tank cools, and when
//! its temperature drops below a threshold the plant runs a block of four to
//! eight hours at a random set-point with short ramps. While the trailing
//! daily mean outdoor temperature is above the summer threshold the plant
//! stays off and a backup boiler holds the tank at its floor. The metered
//! grid power is the building load minus the plant output, so it carries the
//! building's daily and weekly rhythm.

use std::f64::consts::PI;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::DataError;

/// Simulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChpConfig {
    pub days: usize,
    /// Calendar start; also fixes the seasonal phase.
    pub start: NaiveDateTime,
    /// Rated electrical output in kW.
    pub p_max: f64,
    /// Daily mean outdoor temperature (°C) above which the plant is off.
    pub summer_threshold: f64,
    /// Stationary standard deviation of the multi-day weather anomaly (°C).
    pub anomaly_std: f64,
    /// Inject stuck-at faults into the tank temperature sensor.
    pub sensor_failures: bool,
}

impl Default for ChpConfig {
    fn default() -> Self {
        Self {
            days: 60,
            start: NaiveDate::from_ymd_opt(2019, 9, 7).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            p_max: 50.0,
            summer_threshold: 16.0,
            anomaly_std: 3.0,
            sensor_failures: false,
        }
    }
}

/// Simulated series, one value per minute.
#[derive(Debug, Clone, PartialEq)]
pub struct ChpSeries {
    pub start: NaiveDateTime,
    /// Net grid power (kW): building load minus plant output.
    pub p_tot: Vec<f64>,
    /// Tank temperature as reported by its sensor (°C).
    pub t_water: Vec<f64>,
    /// Outdoor temperature (°C).
    pub t_amb: Vec<f64>,
    /// Plant electrical output (kW); the ground truth.
    pub p_chp: Vec<f64>,
    /// Tank temperature before sensor faults.
    pub t_water_true: Vec<f64>,
    pub p_max: f64,
}

impl ChpSeries {
    pub fn len(&self) -> usize {
        self.p_tot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_tot.is_empty()
    }

    /// Sensor channels in windowing order: grid power, tank and outdoor
    /// temperature.
    pub fn sensor_channels(&self) -> Vec<Vec<f64>> {
        vec![self.p_tot.clone(), self.t_water.clone(), self.t_amb.clone()]
    }
}

const MINUTES_PER_DAY: usize = 1440;
const RAMP_MINUTES: usize = 15;
const MIN_OFF_MINUTES: usize = 60;
const TANK_ON_BELOW: f64 = 55.0;
const TANK_FLOOR: f64 = 45.0;
const TANK_CEILING: f64 = 95.0;
/// Tank heat capacity in kWh per °C.
const TANK_CAPACITY: f64 = 11.6;
/// Thermal kW per electrical kW.
const HEAT_RATIO: f64 = 1.6;

#[derive(Debug, Clone, Copy)]
struct Block {
    elapsed: usize,
    duration: usize,
    setpoint: f64,
}

/// Runs the simulation.
pub fn generate_chp_like<R: Rng + ?Sized>(cfg: &ChpConfig, rng: &mut R) -> Result<ChpSeries, DataError> {
    if cfg.days == 0 {
        return Err(DataError::Invalid("days must be positive".into()));
    }
    if !(cfg.p_max > 0.0) {
        return Err(DataError::Invalid("p_max must be positive".into()));
    }
    let n = cfg.days * MINUTES_PER_DAY;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let phi_weather = (-1.0 / (3.0 * MINUTES_PER_DAY as f64)).exp();
    let phi_load = (-1.0 / 30.0f64).exp();
    let start_doy = cfg.start.format("%j").to_string().parse::<f64>().unwrap_or(1.0);
    let weekday0 = cfg.start.format("%u").to_string().parse::<usize>().unwrap_or(1) - 1;

    let mut out = ChpSeries {
        start: cfg.start,
        p_tot: Vec::with_capacity(n),
        t_water: Vec::with_capacity(n),
        t_amb: Vec::with_capacity(n),
        p_chp: Vec::with_capacity(n),
        t_water_true: Vec::with_capacity(n),
        p_max: cfg.p_max,
    };
    let mut anomaly = cfg.anomaly_std * unit.sample(rng);
    let mut load_noise = 0.0;
    let mut tank = 62.0;
    let mut block: Option<Block> = None;
    let mut off_for = MIN_OFF_MINUTES;
    let mut amb_window = std::collections::VecDeque::with_capacity(MINUTES_PER_DAY);
    let mut amb_sum = 0.0;
    let mut stuck: Option<(usize, f64)> = None;

    // One day of burn-in fills the trailing temperature window and settles
    // the tank before recording starts.
    for step in 0..n + MINUTES_PER_DAY {
        let t = step as i64 - MINUTES_PER_DAY as i64;
        let day = t.div_euclid(MINUTES_PER_DAY as i64);
        let hour = t.rem_euclid(MINUTES_PER_DAY as i64) as f64 / 60.0;
        let doy = start_doy + t as f64 / MINUTES_PER_DAY as f64;

        anomaly = phi_weather * anomaly + cfg.anomaly_std * (1.0 - phi_weather * phi_weather).sqrt() * unit.sample(rng);
        let seasonal = 10.0 + 9.0 * (2.0 * PI * (doy - 105.0) / 365.0).sin();
        let diurnal = 4.0 * (2.0 * PI * (hour - 9.0) / 24.0).sin();
        let t_amb = seasonal + diurnal + anomaly + 0.2 * unit.sample(rng);
        amb_window.push_back(t_amb);
        amb_sum += t_amb;
        if amb_window.len() > MINUTES_PER_DAY {
            amb_sum -= amb_window.pop_front().unwrap();
        }
        let daily_mean = amb_sum / amb_window.len() as f64;
        let summer = daily_mean > cfg.summer_threshold;

        // Plant controller.
        if block.is_none() {
            off_for += 1;
            if !summer && tank < TANK_ON_BELOW && off_for >= MIN_OFF_MINUTES {
                block = Some(Block {
                    elapsed: 0,
                    duration: rng.random_range(240..=480),
                    setpoint: rng.random_range(0.45..=1.0),
                });
            }
        }
        let mut p_chp = 0.0;
        if let Some(b) = block.as_mut() {
            let up = ((b.elapsed + 1) as f64 / RAMP_MINUTES as f64).min(1.0);
            let down = ((b.duration - b.elapsed) as f64 / RAMP_MINUTES as f64).min(1.0);
            let level = b.setpoint * up.min(down);
            p_chp = (cfg.p_max * (level + 0.01 * unit.sample(rng))).clamp(0.0, cfg.p_max);
            b.elapsed += 1;
            if b.elapsed >= b.duration {
                block = None;
                off_for = 0;
            }
        }

        // Tank heat balance in kW, integrated over one minute.
        let hot_water = 5.0 + 3.0 * (2.0 * PI * (hour - 7.0) / 24.0).sin().max(0.0);
        let demand = 3.0 * (18.0 - t_amb).max(0.0) + hot_water;
        let losses = 0.05 * (tank - t_amb);
        tank += (HEAT_RATIO * p_chp - demand - losses) / (60.0 * TANK_CAPACITY);
        tank = tank.clamp(TANK_FLOOR, TANK_CEILING);

        // Building load: office-hours bump, weekend reduction, noise.
        let weekday = (weekday0 as i64 + day).rem_euclid(7);
        let weekend = if weekday >= 5 { 0.6 } else { 1.0 };
        let office = if (6.0..20.0).contains(&hour) { (PI * (hour - 6.0) / 14.0).sin() } else { 0.0 };
        load_noise = phi_load * load_noise + 3.0 * (1.0 - phi_load * phi_load).sqrt() * unit.sample(rng);
        let load = 30.0 + 40.0 * office * weekend + load_noise + 2.0 * unit.sample(rng);

        let mut reported = tank;
        if cfg.sensor_failures {
            match stuck {
                Some((left, v)) if left > 0 => {
                    reported = v;
                    stuck = Some((left - 1, v));
                }
                _ => {
                    stuck = None;
                    if rng.random::<f64>() < 1.0 / (7.0 * MINUTES_PER_DAY as f64) {
                        stuck = Some((rng.random_range(60..=720), tank));
                    }
                }
            }
        }

        if t < 0 {
            continue;
        }
        out.p_tot.push(load - p_chp);
        out.t_water.push(reported);
        out.t_amb.push(t_amb);
        out.p_chp.push(p_chp);
        out.t_water_true.push(tank);
    }
    Ok(out)
}

const CSV_HEADER: [&str; 5] = ["timestamp", "p_tot", "t_water", "t_amb", "p_chp"];
const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Writes the series as CSV with an ISO-8601 timestamp column.
pub fn write_series_csv(series: &ChpSeries, path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for i in 0..series.len() {
        let ts = series.start + Duration::minutes(i as i64);
        w.write_record([
            ts.format(TIME_FORMAT).to_string(),
            format!("{:.4}", series.p_tot[i]),
            format!("{:.4}", series.t_water[i]),
            format!("{:.4}", series.t_amb[i]),
            format!("{:.4}", series.p_chp[i]),
        ])?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Reads a series written by [`write_series_csv`]. `p_max` is not stored in
/// the file and must be supplied.
pub fn read_series_csv(path: &Path, p_max: f64) -> Result<ChpSeries, DataError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| DataError::Parse {
            file: path.display().to_string(),
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    };
    let idx = [col("timestamp")?, col("p_tot")?, col("t_water")?, col("t_amb")?, col("p_chp")?];
    let mut s = ChpSeries {
        start: NaiveDateTime::default(),
        p_tot: Vec::new(),
        t_water: Vec::new(),
        t_amb: Vec::new(),
        p_chp: Vec::new(),
        t_water_true: Vec::new(),
        p_max,
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let err = |msg: String| DataError::Parse {
            file: path.display().to_string(),
            line: line + 2,
            msg,
        };
        if line == 0 {
            s.start = NaiveDateTime::parse_from_str(&rec[idx[0]], TIME_FORMAT).map_err(|e| err(format!("timestamp: {e}")))?;
        }
        let num = |j: usize| rec[idx[j]].parse::<f64>().map_err(|_| err(format!("{:?} is not a number", &rec[idx[j]])));
        s.p_tot.push(num(1)?);
        s.t_water.push(num(2)?);
        s.t_amb.push(num(3)?);
        s.p_chp.push(num(4)?);
    }
    if s.is_empty() {
        return Err(DataError::Empty(path.display().to_string()));
    }
    s.t_water_true = s.t_water.clone();
    Ok(s)
}
