//! Files written by runs: trajectory CSV, JSON report sidecar, SVG plots,
//! checksummed manifests, and the exponent table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::exponents::{
    bootstrap_exponents, gamma_global_bound, parse_rational, Exponent, Lambda, ModelParams,
};
use crate::grid::Trajectory;
use crate::montecarlo::UniformityTable;
use crate::solver::{SolveReport, WindowRecord};

pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "mass", "z_component_1", "z_component_2", "z_total"];

/// `t, ‖u‖₂², Z components, Z` per mesh time.
pub fn trajectory_csv(traj: &Trajectory) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRAJECTORY_HEADER)?;
    for ((t, m), (a, b)) in traj.times().iter().zip(traj.running_mass()).zip(traj.z_components()) {
        w.write_record([t.to_string(), m.to_string(), a.to_string(), b.to_string(), (a + b).to_string()])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSidecar<'a> {
    pub scheme: &'a str,
    pub tau: f64,
    pub windows: &'a [WindowRecord],
    pub truncation_ever_active: bool,
    pub max_step_mass_change: f64,
    pub final_mass: f64,
    pub warnings: &'a [String],
    pub seed: u64,
    pub path_index: u64,
    pub config_hash: String,
    pub config: &'a SimConfig,
}

pub fn report_json(report: &SolveReport, config: &SimConfig, path_index: u64) -> Result<Vec<u8>> {
    let sidecar = ReportSidecar {
        scheme: match report.scheme {
            crate::config::Scheme::Picard => "picard",
            crate::config::Scheme::Splitstep => "splitstep",
        },
        tau: report.tau,
        windows: &report.windows,
        truncation_ever_active: report.truncation_ever_active,
        max_step_mass_change: report.max_step_mass_change,
        final_mass: *report.trajectory.running_mass().last().expect("non-empty"),
        warnings: &report.warnings,
        seed: config.seed,
        path_index,
        config_hash: config.content_hash(),
        config,
    };
    let mut out = serde_json::to_vec_pretty(&sidecar)?;
    out.push(b'\n');
    Ok(out)
}

/// One plotted series.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Minimal SVG line chart, one stacked panel per series.
pub fn svg_plot(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    const W: f64 = 640.0;
    const PANEL: f64 = 200.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 40.0;
    const GAP: f64 = 50.0;
    let height = TOP + series.len() as f64 * (PANEL + GAP) + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    for (k, ser) in series.iter().enumerate() {
        let y0 = TOP + k as f64 * (PANEL + GAP);
        let finite: Vec<(f64, f64)> = ser.points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        let (xmin, xmax) = bounds(finite.iter().map(|p| p.0));
        let (ymin, ymax) = bounds(finite.iter().map(|p| p.1));
        let sx = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * (W - LEFT - RIGHT);
        let sy = |y: f64| y0 + PANEL - (y - ymin) / (ymax - ymin) * PANEL;
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{y0}" width="{}" height="{PANEL}" fill="none" stroke="#888"/>"##,
            W - LEFT - RIGHT
        );
        let pts: Vec<String> = finite.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r##"<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{}"/>"##, pts.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, LEFT + 5.0, y0 + 15.0, escape(ser.name));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 5.0, y0 + 10.0, tick(ymax));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 5.0, y0 + PANEL, tick(ymin));
        let _ = writeln!(s, r#"<text x="{LEFT}" y="{}">{}</text>"#, y0 + PANEL + 15.0, tick(xmin));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - RIGHT, y0 + PANEL + 15.0, tick(xmax));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, y0 + PANEL + 30.0, escape(x_label));
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn tick(x: f64) -> String {
    format!("{x:.4e}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mass and `Z_t` against time.
pub fn trajectory_svg(traj: &Trajectory, title: &str) -> String {
    let t = traj.times();
    let mass = t.iter().zip(traj.running_mass()).map(|(a, b)| (*a, *b)).collect();
    let z = t.iter().zip(traj.z_values()).map(|(a, b)| (*a, b)).collect();
    svg_plot(title, "t", &[Series { name: "mass ‖u‖₂²", points: mass }, Series { name: "Z_t", points: z }])
}

/// Level means of `‖u_n‖_{Y_T}` and `τ_n = T` frequencies.
pub fn uniformity_svg(table: &UniformityTable) -> String {
    let y = table.rows.iter().map(|r| (r.level, r.mean_yt_norm.mean)).collect();
    let f = table.rows.iter().map(|r| (r.level, r.tau_equals_t_frequency.mean)).collect();
    svg_plot(
        "truncation levels",
        "level n",
        &[Series { name: "mean Y_T norm", points: y }, Series { name: "P(tau_n = T)", points: f }],
    )
}

pub fn uniformity_csv(table: &UniformityTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "mean_yt_norm", "yt_stderr", "tau_equals_t_frequency", "frequency_stderr", "failures"])?;
    for r in &table.rows {
        w.write_record([
            r.level.to_string(),
            r.mean_yt_norm.mean.to_string(),
            r.mean_yt_norm.stderr.to_string(),
            r.tau_equals_t_frequency.mean.to_string(),
            r.tau_equals_t_frequency.stderr.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Self-description of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Writes files into a run directory and records their checksums.
pub struct RunWriter {
    dir: PathBuf,
    files: Vec<FileEntry>,
    started: u64,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(RunWriter { dir: dir.to_path_buf(), files: Vec::new(), started: unix_now() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.push(FileEntry { name: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn finish(self, command: &str, config: &SimConfig) -> Result<RunManifest> {
        let manifest = RunManifest {
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config.content_hash(),
            config: serde_json::to_value(config)?,
            seed: config.seed,
            started_unix: self.started,
            finished_unix: unix_now(),
            files: self.files,
        };
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        std::fs::write(self.dir.join(MANIFEST_NAME), text)?;
        Ok(manifest)
    }
}

/// Recomputes every checksum listed in a manifest; returns the mismatching names.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let manifest: RunManifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_NAME))?)?;
    let mut bad = Vec::new();
    for f in &manifest.files {
        match std::fs::read(dir.join(&f.name)) {
            Ok(bytes) if sha256_hex(&bytes) == f.sha256 => {}
            _ => bad.push(f.name.clone()),
        }
    }
    Ok(bad)
}

/// One row of the exponent table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentRow {
    pub d: u32,
    pub alpha: String,
    pub gamma: String,
    pub p: String,
    pub q: String,
    pub p_tilde: String,
    pub q_tilde: String,
    pub delta: String,
    pub delta_tilde: String,
    pub theta_interp: String,
    pub theta_global: String,
    pub critical: bool,
    /// Empty unless α is strictly subcritical.
    pub gamma_global_bound: String,
    pub gamma_below_bound: String,
}

pub fn exponent_row(d: u32, alpha: Rational64, gamma: Rational64) -> Result<ExponentRow> {
    let params = ModelParams::new(d, alpha, gamma, Lambda::Defocusing)?;
    let z = params.z_exponents()?;
    let b = bootstrap_exponents(&params);
    let bound = gamma_global_bound(d, alpha).ok();
    let exp = |e: Exponent| e.to_string();
    Ok(ExponentRow {
        d,
        alpha: alpha.to_string(),
        gamma: gamma.to_string(),
        p: z.p.to_string(),
        q: z.q.to_string(),
        p_tilde: z.p_tilde.to_string(),
        q_tilde: exp(z.q_tilde),
        delta: b.delta.to_string(),
        delta_tilde: b.delta_tilde.to_string(),
        theta_interp: b.theta_interp.to_string(),
        theta_global: b.theta_global.to_string(),
        critical: b.critical,
        gamma_global_bound: bound.map(|g| g.to_string()).unwrap_or_default(),
        gamma_below_bound: bound.map(|g| (gamma < g).to_string()).unwrap_or_default(),
    })
}

pub fn exponent_table_csv(rows: &[ExponentRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Parses a CSV with header `d,alpha,gamma` (rationals as `3`, `7/3` or `1.25`).
pub fn parse_exponent_table(text: &str) -> Result<Vec<(u32, Rational64, Rational64)>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Decode(format!("missing column {name:?}")))
    };
    let (cd, ca, cg) = (col("d")?, col("alpha")?, col("gamma")?);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).ok_or_else(|| Error::Decode(format!("row {} is short", line + 1)));
        let d: u32 = field(cd)?.parse().map_err(|_| Error::Decode(format!("row {}: bad d", line + 1)))?;
        out.push((d, parse_rational(field(ca)?)?, parse_rational(field(cg)?)?));
    }
    Ok(out)
}
