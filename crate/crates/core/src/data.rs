//! Dataset ingestion, validation, outcome rescaling, and fold assignment.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// An observational IV dataset: covariates `x`, binary instrument `z`,
/// binary treatment `a`, outcome `y` (stored rescaled to `[0,1]`), and, in
/// simulation mode only, the latent complier indicator.
///
/// Immutable after construction; safe to share read-only across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct IVDataset<F: Real = f64> {
    x: Array2<F>,
    z: Vec<u8>,
    a: Vec<u8>,
    y: Vec<F>,
    latent_c: Option<Vec<u8>>,
}

impl<F: Real> IVDataset<F> {
    pub fn new(
        x: Array2<F>,
        z: Vec<u8>,
        a: Vec<u8>,
        y: Vec<F>,
        latent_c: Option<Vec<u8>>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::validation("dataset must contain at least one unit"));
        }
        if x.nrows() != n || z.len() != n || a.len() != n {
            return Err(Error::validation(format!(
                "column lengths disagree: x has {} rows, z {}, a {}, y {}",
                x.nrows(),
                z.len(),
                a.len(),
                n
            )));
        }
        if let Some(c) = &latent_c {
            if c.len() != n {
                return Err(Error::validation("latent complier column length mismatch"));
            }
            if c.iter().any(|&v| v > 1) {
                return Err(Error::validation("non-binary latent complier column"));
            }
        }
        if z.iter().any(|&v| v > 1) {
            return Err(Error::validation("non-binary instrument"));
        }
        if a.iter().any(|&v| v > 1) {
            return Err(Error::validation("non-binary treatment"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite outcome value"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite covariate value"));
        }
        Ok(Self { x, z, a, y, latent_c })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<F> {
        &self.x
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &[F] {
        &self.y
    }

    pub fn latent_c(&self) -> Option<&[u8]> {
        self.latent_c.as_deref()
    }

    /// True when the outcome already lies in `[0,1]`.
    pub fn outcome_in_unit_interval(&self) -> bool {
        self.y
            .iter()
            .all(|&v| v >= F::zero() && v <= F::one())
    }
}

/// Affine transform recording how the outcome was mapped into `[0,1]`, so
/// effect estimates can be mapped back to the original scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleInfo<F: Real = f64> {
    pub y_min: F,
    pub y_max: F,
    /// Set when the outcome is constant and outside `[0,1]`: the rescaled
    /// outcome is identically zero and effect magnitudes cannot be mapped
    /// back.
    pub degenerate: bool,
}

impl<F: Real> ScaleInfo<F> {
    pub fn identity() -> Self {
        Self { y_min: F::zero(), y_max: F::one(), degenerate: false }
    }

    pub fn range(&self) -> F {
        self.y_max - self.y_min
    }

    /// Maps a rescaled outcome value back to the original scale.
    pub fn to_original(&self, y_star: F) -> F {
        self.y_min + y_star * self.range()
    }

    /// Maps an effect (difference of outcomes) back to the original scale;
    /// the shift cancels, only the range multiplies.
    pub fn effect_to_original(&self, effect_star: F) -> F {
        effect_star * self.range()
    }
}

/// Rescales the outcome into `[0,1]`.
///
/// Outcomes already inside the unit interval are left untouched (identity
/// scale). A constant out-of-range outcome yields the zero vector with a
/// degenerate [`ScaleInfo`]; classification and sharpness ignore `y`, so the
/// rest of the pipeline still runs.
pub fn rescale_outcome<F: Real>(ds: &IVDataset<F>) -> (IVDataset<F>, ScaleInfo<F>) {
    if ds.outcome_in_unit_interval() {
        return (ds.clone(), ScaleInfo::identity());
    }
    let mut y_min = F::infinity();
    let mut y_max = F::neg_infinity();
    for &v in ds.y() {
        y_min = y_min.min(v);
        y_max = y_max.max(v);
    }
    if y_max <= y_min {
        let info = ScaleInfo { y_min, y_max, degenerate: true };
        let mut out = ds.clone();
        out.y = vec![F::zero(); ds.n()];
        return (out, info);
    }
    let range = y_max - y_min;
    let mut out = ds.clone();
    out.y = ds.y().iter().map(|&v| ((v - y_min) / range).clamp_to(F::zero(), F::one())).collect();
    (out, ScaleInfo { y_min, y_max, degenerate: false })
}

/// Which CSV columns hold each variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub y: String,
    pub a: String,
    pub z: String,
    pub x: Vec<String>,
    /// Optional latent complier column (simulated data round-trips).
    pub latent_c: Option<String>,
}

impl ColumnSpec {
    pub fn new(y: &str, a: &str, z: &str, x: &[&str]) -> Self {
        Self {
            y: y.to_string(),
            a: a.to_string(),
            z: z.to_string(),
            x: x.iter().map(|s| s.to_string()).collect(),
            latent_c: None,
        }
    }
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::validation(format!("column '{name}' not found in header")))
}

fn parse_cell<F: Real>(record: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<F> {
    let raw = record
        .get(idx)
        .ok_or_else(|| Error::validation(format!("row {row}: missing cell in column '{name}'")))?
        .trim();
    if raw.is_empty() {
        return Err(Error::validation(format!(
            "row {row}: missing value in column '{name}' (pre-encode missingness as indicator columns)"
        )));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::validation(format!("row {row}: non-numeric cell '{raw}' in column '{name}'")))?;
    if !v.is_finite() {
        return Err(Error::validation(format!("row {row}: non-finite value in column '{name}'")));
    }
    Ok(F::of(v))
}

fn parse_binary(record: &csv::StringRecord, idx: usize, row: usize, name: &str, what: &str) -> Result<u8> {
    let v: f64 = parse_cell::<f64>(record, idx, row, name)?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::validation(format!("row {row}: non-binary {what} value {v}")))
    }
}

/// Loads a dataset from a headed CSV file, validating the schema.
pub fn load_csv<F: Real>(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<IVDataset<F>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let y_idx = find_column(&headers, &spec.y)?;
    let a_idx = find_column(&headers, &spec.a)?;
    let z_idx = find_column(&headers, &spec.z)?;
    let x_idx: Vec<usize> = spec
        .x
        .iter()
        .map(|name| find_column(&headers, name))
        .collect::<Result<_>>()?;
    let c_idx = match &spec.latent_c {
        Some(name) => Some(find_column(&headers, name)?),
        None => None,
    };

    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut z = Vec::new();
    let mut x_flat: Vec<F> = Vec::new();
    let mut c: Vec<u8> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        y.push(parse_cell::<F>(&record, y_idx, row, &spec.y)?);
        a.push(parse_binary(&record, a_idx, row, &spec.a, "treatment")?);
        z.push(parse_binary(&record, z_idx, row, &spec.z, "instrument")?);
        for (&idx, name) in x_idx.iter().zip(&spec.x) {
            x_flat.push(parse_cell(&record, idx, row, name)?);
        }
        if let Some(ci) = c_idx {
            c.push(parse_binary(&record, ci, row, spec.latent_c.as_ref().unwrap(), "complier label")?);
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::validation("CSV contains no data rows"));
    }
    let x = Array2::from_shape_vec((n, x_idx.len()), x_flat)
        .map_err(|e| Error::validation(format!("covariate shape error: {e}")))?;
    IVDataset::new(x, z, a, y, if c_idx.is_some() { Some(c) } else { None })
}

/// Writes a dataset to CSV with columns `y,a,z,x1..xp[,c]`. Values are
/// formatted with the shortest representation that parses back bit-exactly.
pub fn save_csv<F: Real>(ds: &IVDataset<F>, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["y".to_string(), "a".to_string(), "z".to_string()];
    for j in 0..ds.n_covariates() {
        header.push(format!("x{}", j + 1));
    }
    if ds.latent_c().is_some() {
        header.push("c".to_string());
    }
    writer.write_record(&header)?;
    for i in 0..ds.n() {
        let mut record = vec![
            format!("{}", ds.y()[i]),
            format!("{}", ds.a()[i]),
            format!("{}", ds.z()[i]),
        ];
        for j in 0..ds.n_covariates() {
            record.push(format!("{}", ds.x()[(i, j)]));
        }
        if let Some(c) = ds.latent_c() {
            record.push(format!("{}", c[i]));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// The standard column spec matching [`save_csv`] output.
pub fn saved_column_spec(n_covariates: usize, with_latent: bool) -> ColumnSpec {
    ColumnSpec {
        y: "y".into(),
        a: "a".into(),
        z: "z".into(),
        x: (1..=n_covariates).map(|j| format!("x{j}")).collect(),
        latent_c: with_latent.then(|| "c".to_string()),
    }
}

/// Assignment of each unit to one of `k` cross-fitting folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    /// Fold id per unit, in `1..=k`.
    pub b: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    /// Unit indices belonging to fold `fold` (1-based).
    pub fn units_in(&self, fold: usize) -> Vec<usize> {
        self.b
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| (f == fold).then_some(i))
            .collect()
    }

    /// Unit indices outside fold `fold`.
    pub fn units_outside(&self, fold: usize) -> Vec<usize> {
        self.b
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| (f != fold).then_some(i))
            .collect()
    }
}

/// Draws each fold id independently and uniformly from `{1..k}`; if any fold
/// comes up empty the whole vector is re-drawn with the seed advanced by one.
/// Deterministic given `(n, k, seed)`.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::validation("fold count must be at least 2"));
    }
    if k > n {
        return Err(Error::validation(format!("fold count {k} exceeds sample size {n}")));
    }
    let mut draw_seed = seed;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
        let b: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=k)).collect();
        let mut counts = vec![0usize; k + 1];
        for &f in &b {
            counts[f] += 1;
        }
        if counts[1..].iter().all(|&c| c > 0) {
            return Ok(FoldAssignment { b, k, seed });
        }
        draw_seed = draw_seed.wrapping_add(1);
    }
}
