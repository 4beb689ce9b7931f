//! Synthetic streams, initial-value sampling and CSV time-series ingestion.
//!
//! All randomness comes from `ChaCha8Rng` seeded with a `u64`. Gaussian
//! variates use `rand_distr::StandardNormal` (the ZIGNOR ziggurat method), so
//! a `(spec, seed)` pair always reproduces the same stream.
//!
//! CSV series files have a header row with columns `t,y[,u1,u2,…]`, UTF-8,
//! `.` as decimal separator.

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    predict, ComplexExponential3, Observation, ParameterState, RbfArx, RbfArxSpec, SeparableModel,
};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a master seed with a run index and stream tag (splitmix64 finalizer).
pub fn derive_seed(master: u64, run: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(run.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// How explanatory vectors are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InputSampling {
    /// i.i.d. standard normal components.
    #[default]
    StandardNormal,
    /// Every sample uses the same vector (degenerate test streams).
    Constant(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub true_a: Vec<f64>,
    pub true_c: Vec<f64>,
    pub noise_std: f64,
    pub sample_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub inputs: InputSampling,
}

impl SynthSpec {
    pub const TRUE_A: [f64; 4] = [1.0, 1.5, 3.0, 0.8];
    pub const TRUE_C: [f64; 3] = [2.0, 3.0, 2.0];

    /// 1000 samples, noise std 0.2, true parameters `a = (1, 1.5, 3, 0.8)`,
    /// `c = (2, 3, 2)`.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            true_a: Self::TRUE_A.to_vec(),
            true_c: Self::TRUE_C.to_vec(),
            noise_std: 0.2,
            sample_count: 1000,
            seed,
            inputs: InputSampling::StandardNormal,
        }
    }

    pub fn truth(&self) -> Result<ParameterState> {
        ParameterState::from_slices(&self.true_a, &self.true_c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 1 {
            return Err(Error::InvalidConfig("sample_count must be at least 1".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_std must be finite and non-negative, got {}",
                self.noise_std
            )));
        }
        if let InputSampling::Constant(x) = &self.inputs {
            if x.len() != 3 {
                return Err(Error::DimensionMismatch {
                    what: "constant input vector",
                    expected: 3,
                    actual: x.len(),
                });
            }
        }
        self.truth()?.check_against(&ComplexExponential3)
    }
}

/// Draws a stream from the three-term complex exponential model.
///
/// Per sample the generator consumes three normals for `x` (unless inputs are
/// constant) and then one normal for the noise, which is scaled by
/// `noise_std`.
pub fn gen_complex_exponential(spec: &SynthSpec) -> Result<Vec<Observation>> {
    spec.validate()?;
    let truth = spec.truth()?;
    let model = ComplexExponential3;
    let mut rng = rng_from_seed(spec.seed);
    let mut out = Vec::with_capacity(spec.sample_count);
    for t in 0..spec.sample_count {
        let x = match &spec.inputs {
            InputSampling::StandardNormal => (0..3).map(|_| rng.sample(StandardNormal)).collect(),
            InputSampling::Constant(x) => x.clone(),
        };
        let clean = predict(&model, &truth, &x)?;
        let z: f64 = rng.sample(StandardNormal);
        let y = if spec.noise_std == 0.0 {
            clean
        } else {
            clean + spec.noise_std * z
        };
        out.push(Observation::new(t as i64 + 1, y, x));
    }
    Ok(out)
}

/// Per-parameter `[low, high]` intervals for uniform initial values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitRanges {
    pub a: Vec<(f64, f64)>,
    pub c: Vec<(f64, f64)>,
}

impl Default for InitRanges {
    /// a₁∼U(0.5,1.5), a₂∼U(1,2), a₃∼U(2,4), a₄∼U(0.3,1.3),
    /// c₁∼U(0,4), c₂∼U(1,5), c₃∼U(0,4).
    fn default() -> Self {
        Self {
            a: vec![(0.5, 1.5), (1.0, 2.0), (2.0, 4.0), (0.3, 1.3)],
            c: vec![(0.0, 4.0), (1.0, 5.0), (0.0, 4.0)],
        }
    }
}

impl InitRanges {
    /// Degenerate ranges pinned at `state`.
    pub fn pinned(state: &ParameterState) -> Self {
        Self {
            a: state.a.iter().map(|v| (*v, *v)).collect(),
            c: state.c.iter().map(|v| (*v, *v)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in self.a.iter().chain(&self.c) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!(
                    "initial-value range ({lo}, {hi}) is not a finite interval"
                )));
            }
        }
        if self.c.is_empty() {
            return Err(Error::InvalidConfig("no linear parameter ranges".into()));
        }
        Ok(())
    }
}

/// Independent uniform draws, `a` entries first, as `low + (high − low)·u`.
pub fn sample_initial_values(ranges: &InitRanges, seed: u64) -> Result<ParameterState> {
    ranges.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut draw = |&(lo, hi): &(f64, f64)| {
        let u: f64 = rng.random();
        if lo == hi {
            lo
        } else {
            lo + (hi - lo) * u
        }
    };
    let a: Vec<f64> = ranges.a.iter().map(&mut draw).collect();
    let c: Vec<f64> = ranges.c.iter().map(&mut draw).collect();
    ParameterState::from_slices(&a, &c)
}

/// Ordered records with a target and optional input channels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub t: Vec<i64>,
    pub y: Vec<f64>,
    /// Channel-major: `inputs[ch][i]`.
    pub inputs: Vec<Vec<f64>>,
    pub input_names: Vec<String>,
}

impl TimeSeries {
    pub fn new(t: Vec<i64>, y: Vec<f64>, inputs: Vec<Vec<f64>>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::DimensionMismatch {
                what: "time index column",
                expected: y.len(),
                actual: t.len(),
            });
        }
        for u in &inputs {
            if u.len() != y.len() {
                return Err(Error::DimensionMismatch {
                    what: "input channel",
                    expected: y.len(),
                    actual: u.len(),
                });
            }
        }
        let input_names = (1..=inputs.len()).map(|i| format!("u{i}")).collect();
        Ok(Self {
            t,
            y,
            inputs,
            input_names,
        })
    }

    /// Series with `t = 0, 1, …`.
    pub fn from_values(y: Vec<f64>) -> Self {
        let t = (0..y.len() as i64).collect();
        Self::new(t, y, Vec::new()).expect("lengths agree")
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Column mapping for [`load_series`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSchema {
    pub time: String,
    pub target: String,
    /// Input columns; `None` picks every header column after time and target,
    /// in file order.
    pub inputs: Option<Vec<String>>,
}

impl Default for SeriesSchema {
    fn default() -> Self {
        Self {
            time: "t".into(),
            target: "y".into(),
            inputs: None,
        }
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn {
            column: name.to_string(),
        })
}

/// Reads a CSV series. Row numbers in errors are 1-based and count data rows
/// only (the header is row 0).
pub fn load_series(path: &Path, schema: &SeriesSchema) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::MalformedRecord {
                row: 0,
                message: format!("{other:?}"),
            },
        })?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyFile);
    }
    let t_col = column_index(&headers, &schema.time)?;
    let y_col = column_index(&headers, &schema.target)?;
    let input_names: Vec<String> = match &schema.inputs {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != t_col && *i != y_col)
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    let input_cols = input_names
        .iter()
        .map(|name| column_index(&headers, name))
        .collect::<Result<Vec<_>>>()?;

    let mut t = Vec::new();
    let mut y = Vec::new();
    let mut inputs = vec![Vec::new(); input_cols.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRecord {
            row,
            message: e.to_string(),
        })?;
        let cell = |col: usize| -> Result<&str> {
            record.get(col).ok_or_else(|| Error::MalformedRecord {
                row,
                message: format!("missing field for column `{}`", &headers[col]),
            })
        };
        let number = |col: usize| -> Result<f64> {
            let raw = cell(col)?;
            raw.parse::<f64>().map_err(|_| Error::NonNumeric {
                row,
                column: headers[col].to_string(),
                value: raw.to_string(),
            })
        };
        let tv = cell(t_col)?;
        t.push(tv.parse::<i64>().map_err(|_| Error::NonNumeric {
            row,
            column: headers[t_col].to_string(),
            value: tv.to_string(),
        })?);
        y.push(number(y_col)?);
        for (dst, &col) in inputs.iter_mut().zip(&input_cols) {
            dst.push(number(col)?);
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyFile);
    }
    log::info!("loaded {} rows from {}", y.len(), path.display());
    let mut series = TimeSeries::new(t, y, inputs)?;
    series.input_names = input_names;
    Ok(series)
}

/// Writes a series in the format [`load_series`] reads.
pub fn write_series(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::MalformedRecord {
            row: 0,
            message: format!("{other:?}"),
        },
    })?;
    let mut header = vec!["t".to_string(), "y".to_string()];
    header.extend(series.input_names.iter().cloned());
    writer.write_record(&header)?;
    for i in 0..series.len() {
        let mut row = vec![series.t[i].to_string(), series.y[i].to_string()];
        row.extend(series.inputs.iter().map(|u| u[i].to_string()));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// `ln(y − 260)` elementwise, the variance-stabilizing transform used for
/// the Arosa ozone column series.
pub fn ozone_transform(y: &[f64]) -> Result<Vec<f64>> {
    const OFFSET: f64 = 260.0;
    y.iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > OFFSET {
                Ok((value - OFFSET).ln())
            } else {
                Err(Error::Domain {
                    index,
                    value,
                    bound: OFFSET,
                })
            }
        })
        .collect()
}

/// Simulates an RBF-AR(X) series from known parameters.
///
/// The first `first_usable()` outputs are drawn as pure noise; exogenous
/// inputs (when `q > 0`) are i.i.d. standard normal. `burn_in` leading
/// samples are discarded so the returned series starts near the stationary
/// regime.
pub fn gen_rbf_arx(
    spec: &RbfArxSpec,
    truth: &ParameterState,
    len: usize,
    burn_in: usize,
    noise_std: f64,
    seed: u64,
) -> Result<TimeSeries> {
    let model = RbfArx::new(*spec)?;
    truth.check_against(&model)?;
    let mut rng = rng_from_seed(seed);
    let total = len + burn_in;
    let channels = if spec.q > 0 { spec.input_dim } else { 0 };
    let inputs: Vec<Vec<f64>> = (0..channels)
        .map(|_| (0..total).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let start = spec.first_usable();
    let mut y = Vec::with_capacity(total);
    let mut x = Vec::with_capacity(model.state_dim());
    for t in 0..total {
        let e: f64 = rng.sample::<f64, _>(StandardNormal) * noise_std;
        if t < start {
            y.push(e);
            continue;
        }
        x.clear();
        x.extend((1..=spec.d).map(|lag| y[t - lag]));
        x.extend((1..=spec.p).map(|lag| y[t - lag]));
        for j in 1..=spec.q {
            for u in &inputs {
                x.push(u[t - j - spec.dl]);
            }
        }
        let value = predict(&model, truth, &x)? + e;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: "simulated RBF-AR output",
                index: t,
            });
        }
        y.push(value);
    }
    let y = y.split_off(burn_in);
    let inputs = inputs
        .into_iter()
        .map(|mut u| u.split_off(burn_in))
        .collect();
    TimeSeries::new((0..len as i64).collect(), y, inputs)
}

/// Noise-free values of the complex exponential model on the stored inputs.
pub fn clean_targets(obs: &[Observation], truth: &ParameterState) -> Result<DVector<f64>> {
    let model = ComplexExponential3;
    let values = obs
        .iter()
        .map(|o| predict(&model, truth, &o.x))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}
