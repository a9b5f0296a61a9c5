//! File formats: trajectory CSV, profile documents, SVG figures and point
//! clouds of the hypersurface.
//!
//! Every write goes to a temporary file in the target directory and is then
//! renamed over the destination.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{EventKind, IntegrateError, Sample, Trajectory};
use crate::ode::{OdeError, PhaseState, SymmetryParams};
use crate::profile::ClosedProfile;

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 5] = ["t", "x", "y", "theta", "event"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("nothing to draw")]
    EmptyFigure,
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn schema(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Schema {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| IoError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Samples of a trajectory as read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    /// Event that ended the run, attached to the last row.
    pub terminal: Option<EventKind>,
}

impl TrajectoryRecord {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            samples: traj.samples().to_vec(),
            terminal: Some(traj.terminal().kind),
        }
    }

    /// Rebuilds a dense trajectory with Hermite interpolation.
    pub fn to_trajectory(&self, p: SymmetryParams) -> Result<Trajectory, IoError> {
        Ok(Trajectory::from_states(
            p,
            self.samples.clone(),
            self.terminal.unwrap_or(EventKind::TimeLimit),
        )?)
    }

    pub fn polyline(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.state.x, s.state.y)).collect()
    }
}

pub fn trajectory_csv(record: &TrajectoryRecord) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    let last = record.samples.len().saturating_sub(1);
    for (i, s) in record.samples.iter().enumerate() {
        let event = match record.terminal {
            Some(kind) if i == last => kind.name(),
            _ => String::new(),
        };
        w.write_record([
            fmt_f64(s.t),
            fmt_f64(s.state.x),
            fmt_f64(s.state.y),
            fmt_f64(s.state.theta),
            event,
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn export_trajectory(traj: &Trajectory, path: &Path) -> Result<(), IoError> {
    let text = trajectory_csv(&TrajectoryRecord::from_trajectory(traj)).map_err(|source| IoError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    write_atomic(path, text.as_bytes())
}

pub fn import_trajectory(path: &Path) -> Result<TrajectoryRecord, IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(schema(path, format!("expected header {}", CSV_HEADER.join(","))));
    }
    let mut samples = Vec::new();
    let mut terminal = None;
    for (line, row) in r.records().enumerate() {
        let row = row.map_err(csv_err)?;
        if terminal.is_some() {
            return Err(schema(path, "event row must be the last row"));
        }
        let num = |i: usize| -> Result<f64, IoError> {
            row[i]
                .parse::<f64>()
                .map_err(|e| schema(path, format!("row {}: column {}: {e}", line + 2, CSV_HEADER[i])))
        };
        let t = num(0)?;
        if let Some(prev) = samples.last().map(|s: &Sample| s.t) {
            if t <= prev {
                return Err(schema(path, format!("row {}: time does not increase", line + 2)));
            }
        }
        samples.push(Sample {
            t,
            state: PhaseState::new(num(1)?, num(2)?, num(3)?),
        });
        if !row[4].is_empty() {
            let kind = EventKind::parse(&row[4])
                .ok_or_else(|| schema(path, format!("row {}: unknown event {:?}", line + 2, &row[4])))?;
            terminal = Some(kind);
        }
    }
    if samples.is_empty() {
        return Err(schema(path, "no samples"));
    }
    Ok(TrajectoryRecord { samples, terminal })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub m: u32,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub generator: String,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_max: f64,
    pub eps_axis: f64,
    pub solve_tol: f64,
    pub seam_tol: f64,
    pub resample_h: f64,
    /// Seed used when sampling the hypersurface from this profile.
    pub sampling_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certificates {
    pub embedded: bool,
    pub ell_contacts: usize,
    pub max_residual: f64,
    pub closure_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDocument {
    pub schema_version: u32,
    pub params: ParamsRecord,
    pub r_star: f64,
    pub metadata: Metadata,
    pub points: Vec<[f64; 2]>,
    pub certificates: Certificates,
}

impl ProfileDocument {
    pub fn new(profile: &ClosedProfile, metadata: Metadata) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            params: ParamsRecord {
                m: profile.params.m(),
                n: profile.params.n(),
            },
            r_star: profile.r_star,
            metadata,
            points: profile.points.iter().map(|&(x, y)| [x, y]).collect(),
            certificates: Certificates {
                embedded: profile.embedded,
                ell_contacts: profile.ell_contacts,
                max_residual: profile.max_residual,
                closure_gap: profile.closure_gap,
            },
        }
    }

    pub fn to_profile(&self) -> Result<ClosedProfile, IoError> {
        Ok(ClosedProfile {
            points: self.points.iter().map(|p| (p[0], p[1])).collect(),
            params: SymmetryParams::new(self.params.m, self.params.n)?,
            r_star: self.r_star,
            resample_h: self.metadata.resample_h,
            max_residual: self.certificates.max_residual,
            embedded: self.certificates.embedded,
            ell_contacts: self.certificates.ell_contacts,
            closure_gap: self.certificates.closure_gap,
        })
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn export_profile(doc: &ProfileDocument, path: &Path) -> Result<(), IoError> {
    let text = doc.to_json().map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })?;
    write_atomic(path, text.as_bytes())
}

pub fn import_profile(path: &Path) -> Result<ProfileDocument, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(schema(path, format!("schema version {v}, expected {SCHEMA_VERSION}"))),
        None => return Err(schema(path, "missing schema_version")),
    }
    ProfileDocument::from_json(&text).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCurve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl LabeledCurve {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgOptions {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 640.0,
            margin: 40.0,
        }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Standalone SVG of the quadrant with its axes, the line ℓ and the curves.
pub fn svg_document(curves: &[LabeledCurve], p: &SymmetryParams, opts: &SvgOptions) -> Result<String, IoError> {
    if curves.is_empty() || curves.iter().all(|c| c.points.is_empty()) {
        return Err(IoError::EmptyFigure);
    }
    let extent = curves
        .iter()
        .flat_map(|c| c.points.iter())
        .fold(0.0f64, |m, &(x, y)| m.max(x).max(y))
        .max(1e-9)
        * 1.05;
    let plot_w = opts.width - 2.0 * opts.margin;
    let plot_h = opts.height - 2.0 * opts.margin;
    let scale = plot_w.min(plot_h) / extent;
    let sx = |x: f64| opts.margin + x * scale;
    let sy = |y: f64| opts.height - opts.margin - y * scale;
    let path_of = |pts: &[(f64, f64)]| {
        let mut d = String::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.3},{:.3}", if i == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        d
    };
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = opts.width,
        h = opts.height
    );
    let _ = writeln!(out, r#"  <rect width="100%" height="100%" fill="white"/>"#);
    let axes = path_of(&[(0.0, extent), (0.0, 0.0), (extent, 0.0)]);
    let _ = writeln!(
        out,
        r#"  <path id="axes" d="{axes}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let slope = p.ell_slope();
    let ell_end = if slope <= 1.0 {
        (extent, slope * extent)
    } else {
        (extent / slope, extent)
    };
    let ell = path_of(&[(0.0, 0.0), ell_end]);
    let _ = writeln!(
        out,
        r#"  <path id="ell" d="{ell}" fill="none" stroke="gray" stroke-width="1" stroke-dasharray="6,4"/>"#
    );
    let _ = writeln!(
        out,
        r#"  <text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="12" fill="gray">ℓ</text>"#,
        sx(ell_end.0) - 14.0,
        sy(ell_end.1) + 14.0
    );
    for (i, c) in curves.iter().enumerate() {
        if c.points.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let label = escape_xml(&c.label);
        let _ = writeln!(
            out,
            r#"  <path class="curve" d="{}" fill="none" stroke="{color}" stroke-width="1.5"><title>{label}</title></path>"#,
            path_of(&c.points)
        );
        let _ = writeln!(
            out,
            r#"  <text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="12" fill="{color}">{label}</text>"#,
            opts.width - opts.margin - 160.0,
            opts.margin + 16.0 * i as f64
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render_svg(curves: &[LabeledCurve], p: &SymmetryParams, path: &Path, opts: &SvgOptions) -> Result<(), IoError> {
    write_atomic(path, svg_document(curves, p, opts)?.as_bytes())
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Lifts profile points `(x, y)` to `(x·u, y·v)` in `R^{m+n}` with `u`, `v`
/// uniform on the unit spheres of `R^m` and `R^n`; `count` points per vertex.
pub fn sample_hypersurface(points: &[(f64, f64)], p: &SymmetryParams, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (p.m() as usize, p.n() as usize);
    let mut out = Vec::with_capacity(points.len() * count);
    for &(x, y) in points {
        for _ in 0..count {
            let mut row: Vec<f64> = unit_vector(m, &mut rng).into_iter().map(|u| x * u).collect();
            row.extend(unit_vector(n, &mut rng).into_iter().map(|v| y * v));
            out.push(row);
        }
    }
    out
}

pub fn export_point_cloud(rows: &[Vec<f64>], p: &SymmetryParams, path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (1..=p.m())
        .map(|i| format!("x{i}"))
        .chain((1..=p.n()).map(|i| format!("y{i}")))
        .collect();
    let csv_err = |source| IoError::Csv {
        path: path.display().to_string(),
        source,
    };
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_f64(v))).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    write_atomic(path, &bytes)
}
