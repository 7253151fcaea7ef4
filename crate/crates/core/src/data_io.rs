//! Synthetic far-field data, noise injection and file formats.
//!
//! Noise is drawn from SplitMix64 (Steele, Lea and Flood's 64-bit mixer) with
//! Box–Muller, one generator per dataset seeded explicitly:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z ^ (z >> 31)
//! ```
//!
//! A uniform in `(0, 1]` is `((z >> 11) + 1) · 2⁻⁵³`. Each complex sample uses
//! two uniforms `u1, u2`: `Re ζ = √(-2 ln u1) cos 2πu2`, `Im ζ = √(-2 ln u1) sin 2πu2`.
//! Samples are drawn in (frequency, incident direction, observation) order.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forward::{assemble_system, FarField, MediumParams};
use crate::geometry::{ParametricCurve, Point, POLYLINE_POINTS};
use crate::inverse::{discrete_l2_sq, ReconstructionTrace, ShapeState, SolverConfig};

pub const CSV_HEADER: &str = "k0,d_index,d_angle_rad,obs_angle_rad,re,im";

/// `2π i / count` for `i = 0..count`.
pub fn uniform_angles(count: usize) -> Vec<f64> {
    (0..count).map(|i| 2.0 * PI * i as f64 / count as f64).collect()
}

pub fn angles_to_points(angles: &[f64]) -> Vec<Point> {
    angles.iter().map(|t| [t.cos(), t.sin()]).collect()
}

/// Far-field samples for several frequencies, incident and observation directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frequencies: Vec<f64>,
    pub incident_angles: Vec<f64>,
    pub observation_angles: Vec<f64>,
    /// One `n_obs × P` matrix per frequency.
    pub values: Vec<DMatrix<Complex64>>,
    pub delta: f64,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.frequencies.len() {
            return Err(Error::Input(format!(
                "{} frequencies but {} value blocks",
                self.frequencies.len(),
                self.values.len()
            )));
        }
        let shape = (self.observation_angles.len(), self.incident_angles.len());
        if let Some((k, v)) = self.frequencies.iter().zip(&self.values).find(|(_, v)| v.shape() != shape) {
            return Err(Error::Input(format!("block for k0={k} has shape {:?}, expected {shape:?}", v.shape())));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Input(format!("noise ratio must be nonnegative, got {}", self.delta)));
        }
        Ok(())
    }

    /// The data as one [`FarField`] per frequency.
    pub fn far_fields(&self) -> Vec<FarField> {
        let incident = angles_to_points(&self.incident_angles);
        let observation = angles_to_points(&self.observation_angles);
        self.frequencies
            .iter()
            .zip(&self.values)
            .map(|(&k0, v)| FarField {
                k0,
                incident: incident.clone(),
                observation: observation.clone(),
                values: v.clone(),
            })
            .collect()
    }
}

/// Truth used to generate synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub outer: ParametricCurve,
    pub inner: ParametricCurve,
    pub lambda1: f64,
}

impl TruthConfig {
    pub fn medium(&self, k0: f64, config: &SolverConfig) -> Result<MediumParams> {
        let k1 = k0 * config.n1.sqrt();
        let k2 = config.k2_rule.k2(k0, k1);
        MediumParams::new(k0, k1, k2, config.lambda0, self.lambda1)
    }
}

/// Clean far fields of the truth at `config.n_synth` nodes.
pub fn synthesize(truth: &TruthConfig, config: &SolverConfig) -> Result<Dataset> {
    config.validate()?;
    crate::geometry::check_pair(&truth.outer, &truth.inner)?;
    let incident_angles = uniform_angles(config.incident_directions);
    let observation_angles = uniform_angles(config.n_obs);
    let incident = angles_to_points(&incident_angles);
    let observation = angles_to_points(&observation_angles);
    let values = config
        .frequencies
        .par_iter()
        .map(|&k0| {
            let params = truth.medium(k0, config)?;
            let system = assemble_system(&truth.outer, &truth.inner, config.n_synth, &params)?;
            Ok(system.far_fields(&incident, &observation)?.values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        frequencies: config.frequencies.clone(),
        incident_angles,
        observation_angles,
        values,
        delta: 0.0,
        seed: None,
    })
}

/// SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `(0, 1]`.
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Complex sample with independent standard normal real and imaginary parts.
    pub fn complex_normal(&mut self) -> Complex64 {
        let u1 = self.next_open01();
        let u2 = self.next_open01();
        Complex64::from_polar((-2.0 * u1.ln()).sqrt(), 2.0 * PI * u2)
    }
}

/// `u + δ ζ ‖u‖/‖ζ‖` per (frequency, incident direction) column.
pub fn add_noise(clean: &Dataset, delta: f64, seed: u64) -> Result<Dataset> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Input(format!("noise ratio must be nonnegative, got {delta}")));
    }
    let mut out = clean.clone();
    out.delta = delta;
    out.seed = Some(seed);
    if delta == 0.0 {
        return Ok(out);
    }
    let mut rng = SplitMix64::new(seed);
    for block in &mut out.values {
        for mut col in block.column_iter_mut() {
            let zeta: Vec<Complex64> = (0..col.len()).map(|_| rng.complex_normal()).collect();
            let u: Vec<Complex64> = col.iter().copied().collect();
            let scale = delta * discrete_l2_sq(&u).sqrt() / discrete_l2_sq(&zeta).sqrt();
            for (v, z) in col.iter_mut().zip(&zeta) {
                *v += z * scale;
            }
        }
    }
    Ok(out)
}

/// `‖u^δ - u‖ / ‖u‖` for each (frequency, incident direction) column.
pub fn achieved_noise_ratios(clean: &Dataset, noisy: &Dataset) -> Vec<f64> {
    let mut out = Vec::new();
    for (a, b) in clean.values.iter().zip(&noisy.values) {
        for (ca, cb) in a.column_iter().zip(b.column_iter()) {
            let u: Vec<Complex64> = ca.iter().copied().collect();
            let d: Vec<Complex64> = cb.iter().zip(ca.iter()).map(|(x, y)| x - y).collect();
            out.push((discrete_l2_sq(&d) / discrete_l2_sq(&u)).sqrt());
        }
    }
    out
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Dataset as CSV. Noise ratio and seed go in leading `#` comment lines.
pub fn dataset_to_csv(data: &Dataset) -> Result<String> {
    data.validate()?;
    let mut s = String::new();
    writeln!(s, "# delta={}", fmt17(data.delta)).unwrap();
    if let Some(seed) = data.seed {
        writeln!(s, "# seed={seed}").unwrap();
    }
    writeln!(s, "{CSV_HEADER}").unwrap();
    for (k0, block) in data.frequencies.iter().zip(&data.values) {
        for (j, d) in data.incident_angles.iter().enumerate() {
            for (i, o) in data.observation_angles.iter().enumerate() {
                let z = block[(i, j)];
                writeln!(s, "{},{j},{},{},{},{}", fmt17(*k0), fmt17(*d), fmt17(*o), fmt17(z.re), fmt17(z.im)).unwrap();
            }
        }
    }
    Ok(s)
}

fn parse_field<T: std::str::FromStr>(text: &str, line: usize, field: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    text.trim().parse().map_err(|e: T::Err| Error::Parse {
        line,
        field: field.to_string(),
        message: format!("`{text}`: {e}"),
    })
}

/// Parses [`dataset_to_csv`] output. Rows may come in any order but must form a full grid.
pub fn dataset_from_csv(text: &str) -> Result<Dataset> {
    let mut delta = 0.0;
    let mut seed = None;
    let mut header_seen = false;
    struct Row {
        line: usize,
        k0: f64,
        d_index: usize,
        d_angle: f64,
        obs: f64,
        z: Complex64,
    }
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(c) = l.strip_prefix('#') {
            let c = c.trim();
            if let Some(v) = c.strip_prefix("delta=") {
                delta = parse_field(v, line, "delta")?;
            } else if let Some(v) = c.strip_prefix("seed=") {
                seed = Some(parse_field(v, line, "seed")?);
            }
            continue;
        }
        if !header_seen {
            if l != CSV_HEADER {
                return Err(Error::Parse {
                    line,
                    field: "header".into(),
                    message: format!("expected `{CSV_HEADER}`, found `{l}`"),
                });
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Parse {
                line,
                field: "row".into(),
                message: format!("expected 6 fields, found {}", f.len()),
            });
        }
        rows.push(Row {
            line,
            k0: parse_field(f[0], line, "k0")?,
            d_index: parse_field(f[1], line, "d_index")?,
            d_angle: parse_field(f[2], line, "d_angle_rad")?,
            obs: parse_field(f[3], line, "obs_angle_rad")?,
            z: Complex64::new(parse_field(f[4], line, "re")?, parse_field(f[5], line, "im")?),
        });
    }
    if !header_seen {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            field: "header".into(),
            message: "missing CSV header".into(),
        });
    }
    let mut frequencies: Vec<f64> = Vec::new();
    let mut incident: Vec<Option<f64>> = Vec::new();
    let mut observation: Vec<f64> = Vec::new();
    for r in &rows {
        if !frequencies.contains(&r.k0) {
            frequencies.push(r.k0);
        }
        if r.d_index >= incident.len() {
            incident.resize(r.d_index + 1, None);
        }
        match incident[r.d_index] {
            None => incident[r.d_index] = Some(r.d_angle),
            Some(a) if a != r.d_angle => {
                return Err(Error::Parse {
                    line: r.line,
                    field: "d_angle_rad".into(),
                    message: format!("direction {} already has angle {a}", r.d_index),
                })
            }
            _ => {}
        }
        if !observation.contains(&r.obs) {
            observation.push(r.obs);
        }
    }
    let incident: Vec<f64> = incident
        .into_iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| Error::Input(format!("incident direction {i} has no samples"))))
        .collect::<Result<_>>()?;
    let (nq, np, no) = (frequencies.len(), incident.len(), observation.len());
    let mut values = vec![DMatrix::from_element(no, np, Complex64::new(f64::NAN, 0.0)); nq];
    let mut seen = vec![false; nq * np * no];
    for r in &rows {
        let q = frequencies.iter().position(|k| *k == r.k0).unwrap();
        let o = observation.iter().position(|t| *t == r.obs).unwrap();
        let slot = (q * np + r.d_index) * no + o;
        if seen[slot] {
            return Err(Error::Parse {
                line: r.line,
                field: "obs_angle_rad".into(),
                message: "duplicate sample".into(),
            });
        }
        seen[slot] = true;
        values[q][(o, r.d_index)] = r.z;
    }
    if rows.len() != nq * np * no {
        return Err(Error::Input(format!(
            "dataset has {} rows, a full {nq}×{np}×{no} grid needs {}",
            rows.len(),
            nq * np * no
        )));
    }
    let data = Dataset {
        frequencies,
        incident_angles: incident,
        observation_angles: observation,
        values,
        delta,
        seed,
    };
    data.validate()?;
    Ok(data)
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    fs::write(path, dataset_to_csv(data)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_csv(&fs::read_to_string(path)?)
}

/// Initial guess: two circles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialGuess {
    pub outer_radius: f64,
    pub inner_radius: f64,
    #[serde(default)]
    pub inner_center: Point,
    pub lambda1: f64,
}

impl InitialGuess {
    pub fn state(&self, degree: usize) -> Result<ShapeState> {
        ShapeState::circles(self.outer_radius, self.inner_radius, self.inner_center, self.lambda1, degree)
    }
}

/// Complete run description read by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub solver: SolverConfig,
    #[serde(default)]
    pub truth: Option<TruthConfig>,
    #[serde(default)]
    pub initial: Option<InitialGuess>,
    /// Noise seed.
    #[serde(default)]
    pub seed: u64,
    /// Dataset CSV to invert instead of synthesizing from `truth`.
    #[serde(default)]
    pub data: Option<String>,
}

impl RunConfig {
    pub fn truth(&self) -> Result<&TruthConfig> {
        self.truth.as_ref().ok_or_else(|| Error::Config("missing key `truth`".into()))
    }

    pub fn initial(&self) -> Result<&InitialGuess> {
        self.initial.as_ref().ok_or_else(|| Error::Config("missing key `initial`".into()))
    }
}

fn parse_override(spec: &str) -> Result<(Vec<&str>, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override `{spec}` has an empty key segment")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    Ok((path, value))
}

/// Applies `key.sub=value` overrides to a JSON document; values are parsed as JSON
/// and fall back to strings.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<()> {
    for spec in overrides {
        let (path, value) = parse_override(spec)?;
        let mut node = &mut *doc;
        for (i, key) in path.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("override `{spec}`: `{}` is not an object", path[..i].join("."))))?;
            if i + 1 == path.len() {
                obj.insert(key.to_string(), value);
                break;
            }
            node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

fn config_error(e: serde_json::Error) -> Error {
    Error::Config(e.to_string())
}

/// Parses a run config from JSON text with overrides. Missing or unknown keys are named in the error.
pub fn parse_run_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut doc: Value = serde_json::from_str(text).map_err(config_error)?;
    apply_overrides(&mut doc, overrides)?;
    let config: RunConfig = serde_json::from_value(doc).map_err(config_error)?;
    config.solver.validate()?;
    Ok(config)
}

pub fn read_run_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    parse_run_config(&fs::read_to_string(path)?, overrides)
}

pub fn write_run_config(path: &Path, config: &RunConfig) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(config)?)?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &ReconstructionTrace) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(trace)?)?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<ReconstructionTrace> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// `theta,x,y` at `count` equispaced parameters.
pub fn curve_csv(curve: &ParametricCurve, count: usize) -> String {
    let mut s = String::from("theta,x,y\n");
    for i in 0..count {
        let t = 2.0 * PI * i as f64 / count as f64;
        let p = curve.eval(t);
        writeln!(s, "{},{},{}", fmt17(t), fmt17(p[0]), fmt17(p[1])).unwrap();
    }
    s
}

pub fn write_curve(path: &Path, curve: &ParametricCurve) -> Result<()> {
    fs::write(path, curve_csv(curve, POLYLINE_POINTS))?;
    Ok(())
}

/// Writes `outer.csv`/`inner.csv` for the final state and one pair per trace row
/// (`iter_<row>_outer.csv`, …) into `dir`. Returns the number of files written.
pub fn export_trace_curves(dir: &Path, trace: &ReconstructionTrace) -> Result<usize> {
    fs::create_dir_all(dir)?;
    let mut count = 0;
    for (row, rec) in trace.iterations.iter().enumerate() {
        let (o, i) = rec.state.curves();
        write_curve(&dir.join(format!("iter_{row:03}_outer.csv")), &o)?;
        write_curve(&dir.join(format!("iter_{row:03}_inner.csv")), &i)?;
        count += 2;
    }
    if let Some(last) = trace.stages.last() {
        let (o, i) = last.state.curves();
        write_curve(&dir.join("outer.csv"), &o)?;
        write_curve(&dir.join("inner.csv"), &i)?;
        count += 2;
    }
    Ok(count)
}
