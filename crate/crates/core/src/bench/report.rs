use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::BenchError;

pub const MODEL_DISCLAIMER: &str = "Results come from a simplified square-law CNFET model with a calibrated \
per-tube transconductance and a fixed gate capacitance. They show the circuit's algebraic behaviour \
(product law, symmetry, doubling, modulation) and are not a substitute for a full compact-model simulation; \
absolute distortion, bandwidth and swing differ from published figures.";

/// Tabular trace written as one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// File stem of the CSV.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Column `index` as a vector.
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[index]).collect()
    }
}

/// 12 significant digits in scientific notation.
pub fn format_number(v: f64) -> String {
    format!("{v:.11e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub scalars: BTreeMap<String, f64>,
    pub traces: Vec<Trace>,
    pub diagnostics: Vec<String>,
    pub disclaimer: String,
    /// Netlist the experiment ran on, in netlist syntax.
    pub netlist: Option<String>,
}

impl ExperimentReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            scalars: BTreeMap::new(),
            traces: Vec::new(),
            diagnostics: Vec::new(),
            disclaimer: MODEL_DISCLAIMER.into(),
            netlist: None,
        }
    }

    /// Records a scalar; non-finite values become a diagnostic instead.
    pub fn set(&mut self, key: &str, value: f64) {
        if value.is_finite() {
            self.scalars.insert(key.into(), value);
        } else {
            self.diagnostics.push(format!("{key} is not finite ({value})"));
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }

    pub fn trace(&self, name: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.name == name)
    }
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn cell(r: &ExperimentReport, key: &str, scale: f64, digits: usize) -> String {
    r.get(key).map_or_else(|| "n/a".into(), |v| format!("{:.*}", digits, v * scale))
}

/// Markdown summary for a set of reports; identical inputs give identical bytes.
pub fn render_summary(reports: &[ExperimentReport]) -> String {
    let mut s = String::new();
    s.push_str("# CNFET multiplier benchmark\n\n");
    s.push_str("| Design | Power (µW) | THD (%) | −3 dB bandwidth (GHz) | Output swing (mV) | DC offset (mV) | Transistors | Supply | Input range |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for r in reports {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | 6 | ±0.9 V | ±400 mV |",
            r.name,
            cell(r, "power_w", 1e6, 2),
            cell(r, "thd_pct", 1.0, 3),
            cell(r, "bandwidth_hz", 1e-9, 2),
            r.get("output_swing_v").map_or_else(|| "n/a".into(), |v| format!("±{:.2}", v * 1e3)),
            cell(r, "dc_offset_v", 1e3, 4),
        );
    }
    s.push_str("| published reference design | 246.9 | 0.45 | 49.88 | ±4.5 | 0.677 | 6 | ±0.9 V | ±400 mV |\n\n");
    s.push_str("Published reference values come from a full compact-model simulation and are listed for context only.\n\n");
    for r in reports {
        let _ = writeln!(s, "## {}\n", r.name);
        if let Some(t) = r.get("thd_pct") {
            let _ = writeln!(s, "THD={t:.4}%\n");
        }
        for (k, v) in &r.scalars {
            let _ = writeln!(s, "- {k} = {}", format_number(*v));
        }
        for t in &r.traces {
            let _ = writeln!(s, "- trace: {}.csv ({} rows)", t.name, t.rows.len());
        }
        if r.netlist.is_some() {
            let _ = writeln!(s, "- netlist: {}.cir", r.name);
        }
        for d in &r.diagnostics {
            let _ = writeln!(s, "- note: {d}");
        }
        s.push('\n');
    }
    s.push_str("## Model notice\n\n");
    let disclaimer = reports.first().map_or(MODEL_DISCLAIMER, |r| r.disclaimer.as_str());
    s.push_str(disclaimer);
    s.push('\n');
    s
}

/// Writes `summary.md`, one CSV per trace and each netlist under `out`.
/// Returns the paths written, summary first.
pub fn emit_report(reports: &[ExperimentReport], out: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if reports.is_empty() {
        return Err(BenchError::Config("no reports to emit".into()));
    }
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let summary = out.join("summary.md");
    write_atomic(&summary, render_summary(reports).as_bytes())?;
    written.push(summary);
    for r in reports {
        for t in &r.traces {
            let p = out.join(format!("{}.csv", t.name));
            write_atomic(&p, t.to_csv().as_bytes())?;
            written.push(p);
        }
        if let Some(net) = &r.netlist {
            let p = out.join(format!("{}.cir", r.name));
            write_atomic(&p, net.as_bytes())?;
            written.push(p);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        let mut r = ExperimentReport::new("dc");
        r.set("power_w", 246.9e-6);
        r.set("bandwidth_hz", f64::INFINITY);
        let mut t = Trace::new("dc_transfer", &["v1", "vout"]);
        t.rows.push(vec![0.1, 1.0 / 3.0]);
        r.traces.push(t);
        r
    }

    #[test]
    fn non_finite_scalar_becomes_note() {
        let r = sample();
        assert!(r.get("bandwidth_hz").is_none());
        assert_eq!(r.diagnostics.len(), 1);
    }

    #[test]
    fn csv_has_twelve_digits() {
        let csv = sample().traces[0].to_csv();
        assert_eq!(csv, "v1,vout\n1.00000000000e-1,3.33333333333e-1\n");
    }

    #[test]
    fn scalar_only_table_and_determinism() {
        let mut r = ExperimentReport::new("power");
        r.set("power_w", 1e-4);
        let a = render_summary(&[r.clone()]);
        assert_eq!(a, render_summary(&[r]));
        assert!(a.contains("±400 mV") && a.contains("±0.9 V") && a.contains("| power | 100.00 |"));
        assert!(a.contains(MODEL_DISCLAIMER));
    }

    #[test]
    fn emits_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&[sample()], dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let first = fs::read(&paths[0]).unwrap();
        emit_report(&[sample()], dir.path()).unwrap();
        assert_eq!(first, fs::read(&paths[0]).unwrap());
        assert!(fs::read_dir(dir.path()).unwrap().all(|e| !e
            .unwrap()
            .file_name()
            .to_string_lossy()
            .ends_with(".partial")));
    }
}
