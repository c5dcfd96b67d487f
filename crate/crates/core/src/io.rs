//! CMAE embedding files, sidecar manifests, report serialization and the
//! plain-text inputs the CLI reads.
//!
//! CMAE layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CMAE"
//! 4       1     version = 1
//! 5       1     dtype = 0 (f32 LE)
//! 6       2     reserved = 0
//! 8       4     count (u32)
//! 12      4     dim (u32)
//! 16      ...   count * dim f32 LE, row-major
//! ```

use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalResult;
use crate::experiments::{AgentSetResult, BankEval, Comparison, SweepRow};
use crate::scoring::ScoreRecord;
use crate::stats::{DeltaReport, HypothesisOutcome, LengthStudy, RegressionResult};
use crate::tensor::EmbeddingMatrix;

pub const MAGIC: [u8; 4] = *b"CMAE";
pub const VERSION: u8 = 1;
pub const DTYPE_F32_LE: u8 = 0;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CmaeHeader {
    pub count: u32,
    pub dim: u32,
}

impl CmaeHeader {
    /// Payload size in bytes; `u32 x u32 x 4` always fits in `u128`.
    pub fn payload_len(&self) -> u128 {
        u128::from(self.count) * u128::from(self.dim) * 4
    }
}

pub fn encode_header(count: u32, dim: u32) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4] = VERSION;
    h[5] = DTYPE_F32_LE;
    h[8..12].copy_from_slice(&count.to_le_bytes());
    h[12..16].copy_from_slice(&dim.to_le_bytes());
    h
}

pub fn parse_header(bytes: &[u8; HEADER_LEN]) -> Result<CmaeHeader> {
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    if bytes[5] != DTYPE_F32_LE {
        return Err(Error::UnsupportedDtype(bytes[5]));
    }
    if bytes[6..8] != [0, 0] {
        return Err(Error::BadHeader("reserved bytes must be zero".into()));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if count == 0 {
        return Err(Error::BadHeader("count must be >= 1".into()));
    }
    if dim < 2 {
        return Err(Error::BadHeader(format!("dim {dim} < 2")));
    }
    Ok(CmaeHeader { count, dim })
}

pub fn encode_cmae(matrix: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let count = u32::try_from(matrix.rows())
        .map_err(|_| Error::BadParams("row count exceeds u32".into()))?;
    let dim =
        u32::try_from(matrix.dim()).map_err(|_| Error::BadParams("dim exceeds u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.data().len() * 4);
    out.extend_from_slice(&encode_header(count, dim));
    for v in matrix.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn decode_payload(header: CmaeHeader, payload: &[u8]) -> Result<EmbeddingMatrix> {
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(header.count as usize, header.dim as usize, data)
}

pub fn decode_cmae(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let head: &[u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| Error::BadHeader(format!("file shorter than {HEADER_LEN} bytes")))?;
    let header = parse_header(head)?;
    check_payload(header, (bytes.len() - HEADER_LEN) as u64)?;
    decode_payload(header, &bytes[HEADER_LEN..])
}

fn check_payload(header: CmaeHeader, found: u64) -> Result<()> {
    let expected = header.payload_len();
    let found = u128::from(found);
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::BadHeader(format!(
            "{} trailing bytes after payload",
            found - expected
        )));
    }
    Ok(())
}

pub fn write_cmae(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_cmae(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read and validate a CMAE file. The payload size is checked against the
/// file length before anything is allocated for it. Rows are returned as
/// stored; callers normalize on load.
pub fn read_cmae(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut head = [0u8; HEADER_LEN];
    if file_len < HEADER_LEN as u64 {
        return Err(Error::BadHeader(format!(
            "file shorter than {HEADER_LEN} bytes"
        )));
    }
    file.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
    let header = parse_header(&head)?;
    check_payload(header, file_len - HEADER_LEN as u64)?;
    let mut payload = vec![0u8; header.payload_len() as usize];
    file.read_exact(&mut payload)
        .map_err(|e| Error::io(path, e))?;
    decode_payload(header, &payload)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestKind {
    IdText,
    AgentText,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ManifestKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub normalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Manifest {
    pub fn validate(&self, count: usize) -> Result<()> {
        match (&self.labels, self.kind) {
            (Some(l), _) if l.len() != count => Err(Error::LabelCount {
                labels: l.len(),
                rows: count,
            }),
            (None, ManifestKind::IdText | ManifestKind::AgentText) => Err(Error::BadParams(
                "text manifests must carry one label per row".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// `foo.cmae` -> `foo.json`
pub fn manifest_path(cmae: &Path) -> PathBuf {
    cmae.with_extension("json")
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// CMAE file plus its sidecar manifest when one exists.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<(EmbeddingMatrix, Option<Manifest>)> {
    let path = path.as_ref();
    let matrix = read_cmae(path)?;
    let side = manifest_path(path);
    let manifest = if side.exists() {
        let m = read_manifest(&side)?;
        m.validate(matrix.rows())?;
        Some(m)
    } else {
        None
    };
    Ok((matrix, manifest))
}

/// Format with 6 significant digits, `%g` style.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::UnsupportedFormat(s.to_string())),
        }
    }
}

impl ReportFormat {
    /// Guess from a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) => ext.parse(),
            None => Ok(ReportFormat::Json),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Eval(&'a EvalResult),
    Sweep(&'a [SweepRow]),
    Regression(&'a RegressionResult),
    LengthStudy(&'a LengthStudy),
    Delta(&'a DeltaReport),
    Hypothesis(&'a HypothesisOutcome),
    Comparison(&'a Comparison),
    Ranking(&'a [AgentSetResult]),
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

struct Table {
    out: String,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        let mut t = Table { out: String::new() };
        t.line(header.iter().map(|h| h.to_string()));
        t
    }

    fn line(&mut self, fields: impl IntoIterator<Item = String>) {
        let fields: Vec<String> = fields.into_iter().map(|f| csv_field(&f)).collect();
        self.out.push_str(&fields.join(","));
        self.out.push('\n');
    }
}

fn csv_field(f: &str) -> String {
    if f.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", f.replace('"', "\"\""))
    } else {
        f.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig6).unwrap_or_default()
}

fn eval_csv(r: &EvalResult) -> String {
    let mut t = Table::new(&[
        "fpr_at_tpr",
        "auroc",
        "threshold_lambda",
        "target_tpr",
        "n_id",
        "n_ood",
    ]);
    t.line([
        fmt_sig6(r.fpr_at_tpr),
        fmt_sig6(r.auroc),
        fmt_sig6(r.threshold_lambda),
        fmt_sig6(r.target_tpr),
        r.n_id.to_string(),
        r.n_ood.to_string(),
    ]);
    t.out
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let sets: Vec<&str> = rows
        .first()
        .map(|r| r.per_set.iter().map(|s| s.name.as_str()).collect())
        .unwrap_or_default();
    let mut header = vec![
        "parameter".to_string(),
        "value".into(),
        "seed".into(),
        "n_agents".into(),
    ];
    for s in &sets {
        header.push(format!("{s}_fpr_at_tpr"));
        header.push(format!("{s}_auroc"));
    }
    header.extend([
        "avg_fpr_at_tpr".into(),
        "avg_auroc".into(),
        "id_accuracy".into(),
    ]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&header);
    for r in rows {
        let mut f = vec![
            r.parameter.clone(),
            fmt_sig6(r.value),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.n_agents.to_string(),
        ];
        for s in &r.per_set {
            f.push(fmt_sig6(s.result.fpr_at_tpr));
            f.push(fmt_sig6(s.result.auroc));
        }
        f.extend([
            fmt_sig6(r.average.fpr_at_tpr),
            fmt_sig6(r.average.auroc),
            opt(r.id_accuracy),
        ]);
        t.line(f);
    }
    t.out
}

const REGRESSION_HEADER: [&str; 9] = [
    "beta0",
    "beta1",
    "se_beta1",
    "t_stat",
    "perfect_fit",
    "n",
    "df",
    "range_lo",
    "range_hi",
];

fn regression_csv(r: &RegressionResult) -> String {
    let mut t = Table::new(&REGRESSION_HEADER);
    t.line(regression_fields(r));
    t.out
}

fn length_study_csv(s: &LengthStudy) -> String {
    let mut header = vec!["group"];
    header.extend(REGRESSION_HEADER);
    header.extend(["t_crit", "rejects_null"]);
    let mut t = Table::new(&header);
    for row in &s.rows {
        let mut f = vec![row.group.clone()];
        f.extend(regression_fields(&row.result));
        f.push(opt(s.t_crit));
        f.push(row.rejects_null.map(|r| r.to_string()).unwrap_or_default());
        t.line(f);
    }
    t.out
}

fn regression_fields(r: &RegressionResult) -> Vec<String> {
    vec![
        fmt_sig6(r.beta0),
        fmt_sig6(r.beta1),
        fmt_sig6(r.se_beta1),
        fmt_sig6(r.t_stat),
        r.perfect_fit.to_string(),
        r.n.to_string(),
        r.df.to_string(),
        r.length_range[0].to_string(),
        r.length_range[1].to_string(),
    ]
}

const DELTA_HEADER: [&str; 11] = [
    "mean",
    "mean_abs",
    "variance",
    "frac_within_eps",
    "frac_below_neg_delta",
    "eps",
    "delta",
    "alpha",
    "beta",
    "n",
    "passes",
];

fn delta_fields(d: &DeltaReport, passes: Option<bool>) -> Vec<String> {
    vec![
        fmt_sig6(d.mean),
        fmt_sig6(d.mean_abs),
        fmt_sig6(d.variance),
        fmt_sig6(d.frac_within_eps),
        fmt_sig6(d.frac_below_neg_delta),
        fmt_sig6(d.eps),
        fmt_sig6(d.delta),
        fmt_sig6(d.alpha),
        fmt_sig6(d.beta),
        d.deltas.len().to_string(),
        passes.map(|p| p.to_string()).unwrap_or_default(),
    ]
}

fn delta_csv(d: &DeltaReport) -> String {
    let mut t = Table::new(&DELTA_HEADER);
    t.line(delta_fields(d, None));
    t.out
}

fn hypothesis_csv(h: &HypothesisOutcome) -> String {
    let mut header = vec!["population"];
    header.extend(DELTA_HEADER);
    let mut t = Table::new(&header);
    for (name, d, pass) in [
        ("id", &h.id, h.id_negligible_passes),
        ("ood", &h.ood, h.ood_drop_passes),
    ] {
        let mut f = vec![name.to_string()];
        f.extend(delta_fields(d, Some(pass)));
        t.line(f);
    }
    t.out
}

fn bank_eval_lines(t: &mut Table, method: &str, e: &BankEval) {
    for s in &e.per_set {
        t.line([
            method.to_string(),
            s.name.clone(),
            fmt_sig6(s.result.fpr_at_tpr),
            fmt_sig6(s.result.auroc),
            fmt_sig6(s.result.threshold_lambda),
            opt(e.id_accuracy),
        ]);
    }
    t.line([
        method.to_string(),
        "average".into(),
        fmt_sig6(e.average.fpr_at_tpr),
        fmt_sig6(e.average.auroc),
        String::new(),
        opt(e.id_accuracy),
    ]);
}

fn comparison_csv(c: &Comparison) -> String {
    let mut t = Table::new(&[
        "method",
        "set",
        "fpr_at_tpr",
        "auroc",
        "threshold_lambda",
        "id_accuracy",
    ]);
    bank_eval_lines(&mut t, "mcm", &c.mcm);
    bank_eval_lines(&mut t, "cma", &c.cma);
    t.out
}

fn ranking_csv(rows: &[AgentSetResult]) -> String {
    let mut t = Table::new(&[
        "name",
        "n_agents",
        "avg_fpr_at_tpr",
        "avg_auroc",
        "rank_fpr",
        "rank_auroc",
    ]);
    for r in rows {
        t.line([
            r.name.clone(),
            r.n_agents.to_string(),
            fmt_sig6(r.average.fpr_at_tpr),
            fmt_sig6(r.average.auroc),
            r.rank_fpr.to_string(),
            r.rank_auroc.to_string(),
        ]);
    }
    t.out
}

/// Render a report. JSON keeps full float precision; CSV uses 6
/// significant digits.
pub fn render_report(report: Report<'_>, format: ReportFormat) -> String {
    match (format, report) {
        (ReportFormat::Json, Report::Eval(r)) => to_json(r),
        (ReportFormat::Json, Report::Sweep(r)) => to_json(r),
        (ReportFormat::Json, Report::Regression(r)) => to_json(r),
        (ReportFormat::Json, Report::LengthStudy(r)) => to_json(r),
        (ReportFormat::Json, Report::Delta(r)) => to_json(r),
        (ReportFormat::Json, Report::Hypothesis(r)) => to_json(r),
        (ReportFormat::Json, Report::Comparison(r)) => to_json(r),
        (ReportFormat::Json, Report::Ranking(r)) => to_json(r),
        (ReportFormat::Csv, Report::Eval(r)) => eval_csv(r),
        (ReportFormat::Csv, Report::Sweep(r)) => sweep_csv(r),
        (ReportFormat::Csv, Report::Regression(r)) => regression_csv(r),
        (ReportFormat::Csv, Report::LengthStudy(r)) => length_study_csv(r),
        (ReportFormat::Csv, Report::Delta(r)) => delta_csv(r),
        (ReportFormat::Csv, Report::Hypothesis(r)) => hypothesis_csv(r),
        (ReportFormat::Csv, Report::Comparison(r)) => comparison_csv(r),
        (ReportFormat::Csv, Report::Ranking(r)) => ranking_csv(r),
    }
}

pub fn write_report(report: Report<'_>, format: &str, path: impl AsRef<Path>) -> Result<()> {
    let format: ReportFormat = format.parse()?;
    write_text(path, &render_report(report, format))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub const SCORE_COLUMNS: [&str; 5] = ["image_index", "y_hat", "s_cma", "s_mcm", "s_raw"];

/// Scores CSV. Floats use the shortest round-trip representation so the
/// file can be fed back into `eval` without losing ties or order.
pub fn render_scores(records: &[ScoreRecord]) -> String {
    let mut t = Table::new(&SCORE_COLUMNS);
    for r in records {
        t.line([
            r.image_index.to_string(),
            r.y_hat.to_string(),
            r.s_cma.to_string(),
            r.s_mcm.to_string(),
            r.s_raw.to_string(),
        ]);
    }
    t.out
}

fn parse_err(path: &Path, line: usize, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    }
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields.into_iter().map(|f| f.trim().to_string()).collect()
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

/// Read one score column. Accepts either a bare list (one float per line)
/// or a CSV with a header naming `column`.
pub fn read_score_column(path: impl AsRef<Path>, column: &str) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let Some((_, first)) = lines.first() else {
        return Err(Error::EmptyInput("score file is empty"));
    };
    let parse = |line: usize, s: &str| {
        s.parse::<f64>()
            .map_err(|e| parse_err(path, line, format!("{s:?}: {e}")))
    };
    if first.parse::<f64>().is_ok() {
        return lines.iter().map(|(n, l)| parse(*n, l)).collect();
    }
    let header = split_csv_line(first);
    let idx = header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| parse_err(path, 1, format!("no column {column:?}")))?;
    lines[1..]
        .iter()
        .map(|(n, l)| {
            let fields = split_csv_line(l);
            let f = fields
                .get(idx)
                .ok_or_else(|| parse_err(path, *n, "missing field"))?;
            parse(*n, f)
        })
        .collect()
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let Some((_, first)) = lines.first() else {
        return Err(Error::EmptyInput("score file is empty"));
    };
    let header = split_csv_line(first);
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, 1, format!("no column {name:?}")))
    };
    let idx: Vec<usize> = SCORE_COLUMNS
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    lines[1..]
        .iter()
        .map(|(n, l)| {
            let f = split_csv_line(l);
            let get = |i: usize| {
                f.get(idx[i])
                    .ok_or_else(|| parse_err(path, *n, "missing field"))
            };
            let int =
                |i: usize| -> Result<usize> { get(i)?.parse().map_err(|e| parse_err(path, *n, e)) };
            let float =
                |i: usize| -> Result<f64> { get(i)?.parse().map_err(|e| parse_err(path, *n, e)) };
            Ok(ScoreRecord {
                image_index: int(0)?,
                y_hat: int(1)?,
                s_cma: float(2)?,
                s_mcm: float(3)?,
                s_raw: float(4)?,
            })
        })
        .collect()
}

/// Samples for the length regression: CSV with a `score` column, either a
/// `length` column or a `prompt` column (token count = whitespace words),
/// and an optional `group` column.
pub fn read_length_samples(path: impl AsRef<Path>) -> Result<Vec<(String, u32, f64)>> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let Some((_, first)) = lines.first() else {
        return Err(Error::EmptyInput("pairs file is empty"));
    };
    let header = split_csv_line(first);
    let find = |name: &str| header.iter().position(|h| h == name);
    let score = find("score").ok_or_else(|| parse_err(path, 1, "no score column"))?;
    let length = find("length");
    let prompt = find("prompt");
    if length.is_none() && prompt.is_none() {
        return Err(parse_err(path, 1, "need a length or prompt column"));
    }
    let group = find("group");
    lines[1..]
        .iter()
        .map(|(n, l)| {
            let f = split_csv_line(l);
            let get = |i: usize| f.get(i).ok_or_else(|| parse_err(path, *n, "missing field"));
            let len = match length {
                Some(i) => get(i)?.parse().map_err(|e| parse_err(path, *n, e))?,
                None => crate::stats::token_count(get(prompt.unwrap())?),
            };
            let s: f64 = get(score)?.parse().map_err(|e| parse_err(path, *n, e))?;
            let g = match group {
                Some(i) => get(i)?.clone(),
                None => String::new(),
            };
            Ok((g, len, s))
        })
        .collect()
}
