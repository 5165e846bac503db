//! JSON and CSV file formats. Complex numbers are stored as `[re, im]` pairs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::correlators::CorrelationTensor;
use crate::error::{Error, Result};
use crate::linalg::{c, c64, CMat};
use crate::model::Cmps;
use crate::reconstruction::{GaugeNote, MdModel, Quality, ReconstructedCmps};
use crate::simulation::{BenchmarkReport, StructureReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixFile {
    pub fn from_matrix(m: &CMat) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Format(format!(
                "matrix declares {}x{} but holds {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        check_finite(&self.data, "matrix")?;
        Ok(CMat::from_fn(self.rows, self.cols, |i, j| {
            let [re, im] = self.data[i * self.cols + j];
            c(re, im)
        }))
    }
}

fn check_finite(pairs: &[[f64; 2]], what: &str) -> Result<()> {
    if pairs.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Format(format!("{what} contains non-finite numbers")));
    }
    Ok(())
}

fn pairs(values: &[c64]) -> Vec<[f64; 2]> {
    values.iter().map(|z| [z.re, z.im]).collect()
}

fn complexes(pairs: &[[f64; 2]]) -> Vec<c64> {
    pairs.iter().map(|&[re, im]| c(re, im)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmpsFile {
    pub d: usize,
    #[serde(rename = "Q")]
    pub q: MatrixFile,
    #[serde(rename = "R")]
    pub r: MatrixFile,
    #[serde(rename = "K")]
    pub k: Option<MatrixFile>,
    #[serde(default)]
    pub meta: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge_note: Option<GaugeNote>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<Quality>,
}

impl CmpsFile {
    pub fn from_state(state: &Cmps, k: Option<&CMat>, meta: Value) -> Self {
        Self {
            d: state.d(),
            q: MatrixFile::from_matrix(state.q()),
            r: MatrixFile::from_matrix(state.r()),
            k: k.map(MatrixFile::from_matrix),
            meta,
            gauge_note: None,
            quality: None,
        }
    }

    pub fn from_reconstruction(rc: &ReconstructedCmps, quality: &Quality, meta: Value) -> Self {
        Self {
            d: rc.q.nrows(),
            q: MatrixFile::from_matrix(&rc.q),
            r: MatrixFile::from_matrix(&rc.r),
            k: rc.k.as_ref().map(MatrixFile::from_matrix),
            meta,
            gauge_note: Some(rc.gauge_note.clone()),
            quality: Some(quality.clone()),
        }
    }

    pub fn to_state(&self) -> Result<Cmps> {
        let q = self.q.to_matrix()?;
        let r = self.r.to_matrix()?;
        if q.nrows() != self.d || r.nrows() != self.d {
            return Err(Error::Format(format!(
                "declared d = {} but Q is {}x{} and R is {}x{}",
                self.d,
                q.nrows(),
                q.ncols(),
                r.nrows(),
                r.ncols()
            )));
        }
        if let Some(k) = &self.k {
            let k = k.to_matrix()?;
            if k.nrows() != self.d || k.ncols() != self.d {
                return Err(Error::Format("K has the wrong shape".into()));
            }
        }
        Cmps::new(q, r).map_err(|e| Error::Format(format!("invalid state: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorFile {
    pub n: usize,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub delta_tau: f64,
    pub amputated: bool,
    pub values: Vec<[f64; 2]>,
}

impl TensorFile {
    pub fn from_tensor(ct: &CorrelationTensor) -> Self {
        Self {
            n: ct.n,
            n_samples: ct.n_samples,
            delta_tau: ct.delta_tau,
            amputated: ct.amputated,
            values: pairs(&ct.values),
        }
    }

    pub fn to_tensor(&self) -> Result<CorrelationTensor> {
        check_finite(&self.values, "tensor")?;
        CorrelationTensor::new(
            self.n,
            self.n_samples,
            self.delta_tau,
            self.amputated,
            complexes(&self.values),
        )
        .map_err(|e| Error::Format(format!("invalid correlation tensor: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdFile {
    pub d: Option<usize>,
    pub poles: Vec<[f64; 2]>,
    #[serde(rename = "M")]
    pub m: MatrixFile,
    #[serde(rename = "Mhat11")]
    pub mhat11: f64,
    pub kappa: usize,
    #[serde(default)]
    pub symmetry_defect: f64,
    #[serde(default)]
    pub unknown: Vec<[usize; 2]>,
}

impl MdFile {
    pub fn from_model(md: &MdModel) -> Self {
        Self {
            d: md.bond_dimension().ok(),
            poles: pairs(&md.poles),
            m: MatrixFile::from_matrix(&md.m),
            mhat11: md.mhat11,
            kappa: md.kappa,
            symmetry_defect: md.symmetry_defect,
            unknown: md.unknown.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }

    pub fn to_model(&self) -> Result<MdModel> {
        check_finite(&self.poles, "poles")?;
        let m = self.m.to_matrix()?;
        let k = self.poles.len();
        if m.nrows() != k || m.ncols() != k {
            return Err(Error::Format(format!(
                "M is {}x{} but there are {k} poles",
                m.nrows(),
                m.ncols()
            )));
        }
        if !(self.mhat11 > 0.0 && self.mhat11.is_finite()) {
            return Err(Error::Format(format!("Mhat11 = {} is not positive", self.mhat11)));
        }
        if self.kappa > k || (k - self.kappa) % 2 != 0 {
            return Err(Error::Format(format!("kappa = {} inconsistent with {k} poles", self.kappa)));
        }
        if let Some(d) = self.d {
            if d * d != k {
                return Err(Error::Format(format!("d = {d} but there are {k} poles")));
            }
        }
        if let Some(&[i, j]) = self.unknown.iter().find(|&&[i, j]| i >= k || j >= k) {
            return Err(Error::Format(format!("unknown entry ({i}, {j}) out of range")));
        }
        Ok(MdModel {
            poles: complexes(&self.poles),
            m,
            mhat11: self.mhat11,
            kappa: self.kappa,
            symmetry_defect: self.symmetry_defect,
            unknown: self.unknown.iter().map(|&[i, j]| (i, j)).collect(),
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_cmps(path: &Path) -> Result<(Cmps, CmpsFile)> {
    let file: CmpsFile = read_json(path)?;
    Ok((file.to_state()?, file))
}

pub fn read_md(path: &Path) -> Result<MdModel> {
    read_json::<MdFile>(path)?.to_model()
}

pub fn write_md(path: &Path, md: &MdModel) -> Result<()> {
    write_json(path, &MdFile::from_model(md))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a tensor from JSON, or from CSV (`tau,re,im`) for 2-point functions.
pub fn read_tensor(path: &Path) -> Result<CorrelationTensor> {
    if is_csv(path) {
        tensor_from_csv(&std::fs::read_to_string(path)?)
    } else {
        read_json::<TensorFile>(path)?.to_tensor()
    }
}

pub fn write_tensor(path: &Path, ct: &CorrelationTensor) -> Result<()> {
    if is_csv(path) {
        std::fs::write(path, tensor_to_csv(ct)?)?;
        Ok(())
    } else {
        write_json(path, &TensorFile::from_tensor(ct))
    }
}

pub fn tensor_to_csv(ct: &CorrelationTensor) -> Result<String> {
    if ct.n != 2 {
        return Err(Error::InvalidArgument(format!(
            "CSV output is only defined for 2-point functions (n = {})",
            ct.n
        )));
    }
    if ct.amputated {
        return Err(Error::InvalidArgument(
            "CSV cannot record amputation; write amputated tensors as JSON".into(),
        ));
    }
    let mut out = String::from("tau,re,im\n");
    for (l, z) in ct.values.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", l as f64 * ct.delta_tau, z.re, z.im));
    }
    Ok(out)
}

/// Parses a uniformly sampled 2-point CSV; the sampling interval is taken from the
/// first two rows and must be uniform. Such files are never marked amputated.
pub fn tensor_from_csv(text: &str) -> Result<CorrelationTensor> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim().replace(' ', "") == "tau,re,im" => {}
        _ => return Err(Error::Format("CSV header must be 'tau,re,im'".into())),
    }
    let mut taus = Vec::new();
    let mut values = Vec::new();
    for (no, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!("line {}: expected 3 fields", no + 1)));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Format(format!("line {}: bad number '{s}'", no + 1)))
        };
        taus.push(parse(fields[0])?);
        values.push(c(parse(fields[1])?, parse(fields[2])?));
    }
    if taus.len() < 2 {
        return Err(Error::Format("CSV needs at least two samples".into()));
    }
    let dt = taus[1] - taus[0];
    if taus[0].abs() > 1e-12 * dt.abs().max(1.0) {
        return Err(Error::Format("first sample must be at tau = 0".into()));
    }
    for (l, &t) in taus.iter().enumerate() {
        if (t - l as f64 * dt).abs() > 1e-9 * dt.abs() * (l as f64).max(1.0) {
            return Err(Error::Format(format!("non-uniform sampling at row {}", l + 1)));
        }
    }
    CorrelationTensor::new(2, values.len(), dt, false, values)
        .map_err(|e| Error::Format(format!("invalid correlation tensor: {e}")))
}

/// Kinds of project files recognized by [`validate_file`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileKind {
    Matrix,
    Cmps,
    Tensor,
    MdModel,
    BenchmarkReport,
    StructureReport,
}

impl std::fmt::Display for FileKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FileKind::Matrix => "matrix",
            FileKind::Cmps => "cMPS",
            FileKind::Tensor => "correlation tensor",
            FileKind::MdModel => "MD model",
            FileKind::BenchmarkReport => "benchmark report",
            FileKind::StructureReport => "structure report",
        })
    }
}

/// Detects the file kind from its keys and checks it against the schema.
pub fn validate_file(path: &Path) -> Result<FileKind> {
    if is_csv(path) {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with("grid_value") {
            return Err(Error::Format(
                "benchmark CSV files are plotting output; validate the JSON report instead".into(),
            ));
        }
        tensor_from_csv(&text)?;
        return Ok(FileKind::Tensor);
    }
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Format("top-level JSON value must be an object".into()))?;
    let has = |k: &str| obj.contains_key(k);
    let kind = if has("Q") && has("R") {
        let file: CmpsFile = serde_json::from_value(value)?;
        file.to_state()?;
        FileKind::Cmps
    } else if has("values") && has("N") {
        let file: TensorFile = serde_json::from_value(value)?;
        file.to_tensor()?;
        FileKind::Tensor
    } else if has("poles") && has("M") {
        let file: MdFile = serde_json::from_value(value)?;
        file.to_model()?;
        FileKind::MdModel
    } else if has("points") && has("kind") {
        let report: BenchmarkReport = serde_json::from_value(value)?;
        if report.points.iter().any(|p| {
            p.trials == 0
                || !(0.0..=1.0).contains(&p.rate_mean_criterion)
                || !(0.0..=1.0).contains(&p.rate_max_criterion)
        }) {
            return Err(Error::Format("benchmark rates must lie in [0, 1] with trials > 0".into()));
        }
        FileKind::BenchmarkReport
    } else if has("m_multiplicities") {
        let _: StructureReport = serde_json::from_value(value)?;
        FileKind::StructureReport
    } else if has("rows") && has("data") {
        let file: MatrixFile = serde_json::from_value(value)?;
        file.to_matrix()?;
        FileKind::Matrix
    } else {
        return Err(Error::Format("unrecognized file: no known key set".into()));
    };
    Ok(kind)
}
