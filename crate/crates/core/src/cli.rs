//! Command-line front end: analyses on netlist files and the benchmark suite.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on simulation or I/O errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::analysis::{
    ac_sweep, dc_sweep, noise_analysis, operating_point, power_report, transient, AcSpec, AnalysisError, NoiseSpec,
    Probe, SweepSpec, TransientSpec,
};
use crate::bench::{self, format_number, write_atomic, BenchError, ExperimentReport, MultiplierConfig};
use crate::circuit::{parse_netlist, parse_value, Netlist, ParseError, SummerMode};
use crate::cnfet::{device_capacitances, CntParams};
use crate::mna::NewtonConfig;
use crate::plot::chart_from_columns;

#[derive(Debug, Parser)]
#[command(name = "cnfetlab", version, about = "CNFET circuit simulator and multiplier benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print derived device quantities for a chirality.
    Model(ModelArgs),
    /// DC operating point with element currents and power.
    Op(OpArgs),
    /// DC sweep of one source, optionally nested in a second.
    Dc(DcArgs),
    /// Fixed-step transient analysis.
    Tran(TranArgs),
    /// Small-signal AC sweep.
    Ac(AcArgs),
    /// Output and input-referred thermal noise.
    Noise(NoiseArgs),
    /// Multiplier benchmark experiments.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Directory for CSV (and SVG) output; CSV goes to stdout when absent.
    #[arg(long, env = "CNFETLAB_OUT")]
    pub out: Option<PathBuf>,
    /// Also write an SVG chart next to every CSV.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Absolute voltage tolerance (V).
    #[arg(long, default_value_t = 1e-9)]
    pub abstol: f64,
    /// Absolute current tolerance (A).
    #[arg(long, default_value_t = 1e-12)]
    pub abstol_i: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub reltol: f64,
    /// Largest node-voltage update per Newton step (V).
    #[arg(long, default_value_t = 0.3)]
    pub max_step: f64,
    /// Conductance across every CNFET channel (S).
    #[arg(long, default_value_t = 1e-12)]
    pub gmin_floor: f64,
}

impl SolverArgs {
    pub fn config(&self) -> NewtonConfig {
        NewtonConfig {
            max_iter: self.max_iter,
            abs_tol_v: self.abstol,
            abs_tol_i: self.abstol_i,
            rel_tol: self.reltol,
            max_step: self.max_step,
            gmin_floor: self.gmin_floor,
            ..NewtonConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Chirality as `n,m`.
    #[arg(long, default_value = "25,0")]
    pub chirality: String,
}

#[derive(Debug, Args)]
pub struct OpArgs {
    pub netlist: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DcArgs {
    pub netlist: PathBuf,
    /// Swept source as `NAME:start:stop:step`.
    #[arg(long)]
    pub sweep: String,
    /// Optional outer family source as `NAME:start:stop:step`.
    #[arg(long)]
    pub inner: Option<String>,
    /// Source following a swept one as `NAME=SWEPT*scale`, e.g. `V1N=V1*-1`.
    #[arg(long)]
    pub link: Vec<String>,
    /// Probe, `node`, `v(node)` or `v(a,b)`; repeatable.
    #[arg(long, required = true)]
    pub probe: Vec<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TranArgs {
    pub netlist: PathBuf,
    #[arg(long)]
    pub tstop: String,
    #[arg(long)]
    pub dt: String,
    /// Start from zero state instead of the operating point.
    #[arg(long)]
    pub uic: bool,
    #[arg(long, required = true)]
    pub probe: Vec<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AcArgs {
    pub netlist: PathBuf,
    #[arg(long)]
    pub fstart: String,
    #[arg(long)]
    pub fstop: String,
    #[arg(long, default_value_t = 10)]
    pub ppd: usize,
    #[arg(long, required = true)]
    pub probe: Vec<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    pub netlist: PathBuf,
    /// Output probe, e.g. `v(vo2,vo1)`.
    #[arg(long = "output")]
    pub output_probe: String,
    /// Input source the noise is referred to.
    #[arg(long)]
    pub input: String,
    #[arg(long)]
    pub fstart: String,
    #[arg(long)]
    pub fstop: String,
    #[arg(long, default_value_t = 10)]
    pub ppd: usize,
    #[arg(long, default_value_t = 300.0)]
    pub temp: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Dc,
    Thd,
    Freq,
    Noise,
    Am,
    All,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Resistor loads and no channel-length modulation.
    #[arg(long)]
    pub ideal: bool,
    /// Capacitor-network summers instead of behavioural ones.
    #[arg(long)]
    pub physical_summer: bool,
    /// Doubler input amplitude (V).
    #[arg(long, default_value_t = 0.4)]
    pub amplitude: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}:{column}: {message}\n{context}")]
    Netlist {
        path: String,
        line: usize,
        column: usize,
        message: String,
        context: String,
    },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn netlist_error(path: &Path, text: &str, e: ParseError) -> CliError {
    let source_line = text.lines().nth(e.line.saturating_sub(1)).unwrap_or("");
    let gutter = format!("{:>5} | ", e.line);
    let context = format!(
        "{gutter}{source_line}\n{}^",
        " ".repeat(gutter.chars().count() + e.column.saturating_sub(1))
    );
    CliError::Netlist {
        path: path.display().to_string(),
        line: e.line,
        column: e.column,
        message: e.message,
        context,
    }
}

fn load_netlist(path: &Path) -> Result<Netlist, CliError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    parse_netlist(&text).map_err(|e| netlist_error(path, &text, e))
}

fn value(flag: &str, text: &str) -> Result<f64, CliError> {
    parse_value(text).ok_or_else(|| CliError::Usage(format!("--{flag}: cannot read `{text}` as a number")))
}

fn probes(list: &[String]) -> Result<Vec<Probe>, CliError> {
    list.iter()
        .map(|p| Probe::parse(p).map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

/// Parses `NAME:start:stop:step`.
pub fn parse_sweep(text: &str) -> Result<SweepSpec, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let [name, start, stop, step] = parts[..] else {
        return Err(CliError::Usage(format!("sweep `{text}` must look like NAME:start:stop:step")));
    };
    let spec = SweepSpec::new(name, value("sweep", start)?, value("sweep", stop)?, value("sweep", step)?);
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}

/// Parses `NAME=SWEPT*scale`.
fn parse_link(text: &str) -> Result<(String, String, f64), CliError> {
    let bad = || CliError::Usage(format!("link `{text}` must look like NAME=SWEPT*scale"));
    let (name, rhs) = text.split_once('=').ok_or_else(bad)?;
    let (swept, scale) = rhs.split_once('*').ok_or_else(bad)?;
    Ok((name.trim().into(), swept.trim().into(), value("link", scale.trim())?))
}

fn csv(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.iter().map(|v| format_number(*v)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

/// Writes `<stem>.csv` under `--out` (or to stdout) and optionally a chart.
fn emit_table(
    out: &OutputArgs,
    stem: &str,
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
    log_x: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let text = csv(&header, &rows);
    let Some(dir) = &out.out else {
        let _ = stdout.write_all(text.as_bytes());
        return Ok(());
    };
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let path = dir.join(format!("{stem}.csv"));
    write_atomic(&path, text.as_bytes()).map_err(io_error(&path))?;
    let _ = writeln!(stdout, "wrote {}", path.display());
    if out.plot {
        plot_table(dir, stem, &header, &rows, log_x, stdout, stderr);
    }
    Ok(())
}

fn plot_table(
    dir: &Path,
    stem: &str,
    header: &[String],
    rows: &[Vec<f64>],
    log_x: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) {
    let svg = chart_from_columns(stem, header, rows, log_x).to_svg();
    let path = dir.join(format!("{stem}.svg"));
    match write_atomic(&path, svg.as_bytes()) {
        Ok(()) => {
            let _ = writeln!(stdout, "wrote {}", path.display());
        }
        Err(e) => {
            let _ = writeln!(stderr, "warning: plot {} not written: {e}", path.display());
        }
    }
}

fn header_with(first: &str, probes: &[Probe]) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain(probes.iter().map(|p| p.to_string()))
        .collect()
}

fn run_model(args: &ModelArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let bad = || CliError::Usage(format!("--chirality `{}` must look like n,m", args.chirality));
    let (n, m) = args.chirality.split_once(',').ok_or_else(bad)?;
    let n: u32 = n.trim().parse().map_err(|_| bad())?;
    let m: u32 = m.trim().parse().map_err(|_| bad())?;
    let p = CntParams::with_chirality(n, m);
    p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (cgs, cgd) = device_capacitances(&p, 1);
    let _ = writeln!(stdout, "chirality=({n},{m})");
    let _ = writeln!(stdout, "D={:.3} nm", p.diameter() * 1e9);
    let _ = writeln!(stdout, "Vth={:.4} V", p.threshold());
    let _ = writeln!(stdout, "kTube={:.6e} A/V^2", p.k_tube);
    let _ = writeln!(stdout, "lambda={} 1/V", p.lambda);
    let _ = writeln!(stdout, "cgs={cgs:.3e} F cgd={cgd:.3e} F per tube");
    Ok(())
}

fn run_op(args: &OpArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let n = load_netlist(&args.netlist)?;
    let op = operating_point(&n, &args.solver.config())?;
    let power = power_report(&op);
    if args.output.out.is_some() {
        let mut rows = Vec::new();
        let mut header = vec!["t_or_f".to_string()];
        let mut row = vec![0.0];
        for (name, v) in op.node_voltages() {
            header.push(format!("v({name})"));
            row.push(v);
        }
        rows.push(row);
        emit_table(&args.output, "op", header, rows, false, stdout, stderr)?;
    }
    let _ = writeln!(
        stdout,
        "operating point: {:?}, {} iterations",
        op.solution.strategy, op.solution.iterations
    );
    for (name, v) in op.node_voltages() {
        let _ = writeln!(stdout, "v({name}) = {}", format_number(v));
    }
    for e in &op.elements {
        let _ = writeln!(
            stdout,
            "{}: i = {} A, p = {} W",
            e.name,
            format_number(e.current),
            format_number(e.power)
        );
    }
    for d in &op.devices {
        let _ = writeln!(
            stdout,
            "{}: vgs = {:.6} V, vds = {:.6} V, {:?}",
            d.name, d.vgs, d.vds, d.point.region
        );
    }
    let _ = writeln!(stdout, "total power = {} W", format_number(power.total));
    Ok(())
}

fn run_dc(args: &DcArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let n = load_netlist(&args.netlist)?;
    let mut outer = parse_sweep(&args.sweep)?;
    let mut inner = args.inner.as_deref().map(parse_sweep).transpose()?;
    for l in &args.link {
        let (name, swept, scale) = parse_link(l)?;
        if swept == outer.source {
            outer.linked.push((name, scale));
        } else if let Some(i) = inner.as_mut().filter(|i| i.source == swept) {
            i.linked.push((name, scale));
        } else {
            return Err(CliError::Usage(format!("link `{l}` refers to a source that is not swept")));
        }
    }
    let probes = probes(&args.probe)?;
    let res = dc_sweep(&n, &outer, inner.as_ref(), &probes, &args.solver.config())?;
    for f in &res.failures {
        let _ = writeln!(stderr, "warning: no convergence at {} = {}: {}", outer.source, f.outer, f.error);
    }
    let mut header = vec!["t_or_f".to_string()];
    match (&inner, &res.inner_values) {
        (Some(spec), Some(values)) => {
            for v in values {
                for p in &probes {
                    header.push(format!("{p}@{}={}", spec.source, format_number(*v)));
                }
            }
        }
        _ => header.extend(probes.iter().map(|p| p.to_string())),
    }
    let rows = res
        .outer_values
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut row = vec![*x];
            for family in &res.data {
                row.extend(family[i].iter().copied());
            }
            row
        })
        .collect();
    emit_table(&args.output, "dc", header, rows, false, stdout, stderr)
}

fn run_tran(args: &TranArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let n = load_netlist(&args.netlist)?;
    let spec = TransientSpec {
        t_stop: value("tstop", &args.tstop)?,
        dt: value("dt", &args.dt)?,
        uic: args.uic,
    };
    let probes = probes(&args.probe)?;
    let res = transient(&n, &spec, &probes, &args.solver.config())?;
    for w in &res.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let len = res.waveforms.first().map_or(0, |w| w.len());
    let rows = (0..len)
        .map(|k| {
            let mut row = vec![res.waveforms[0].time(k)];
            row.extend(res.waveforms.iter().map(|w| w.samples[k]));
            row
        })
        .collect();
    emit_table(&args.output, "tran", header_with("t_or_f", &probes), rows, false, stdout, stderr)
}

fn run_ac(args: &AcArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let n = load_netlist(&args.netlist)?;
    let spec = AcSpec::new(value("fstart", &args.fstart)?, value("fstop", &args.fstop)?, args.ppd);
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let probes = probes(&args.probe)?;
    let res = ac_sweep(&n, &spec, &probes, &args.solver.config())?;
    let mut header = vec!["t_or_f".to_string()];
    for p in &probes {
        header.push(format!("mag({p})"));
        header.push(format!("phase({p})"));
    }
    let rows = res
        .points
        .iter()
        .map(|pt| {
            let mut row = vec![pt.freq_hz];
            for v in &pt.values {
                row.push(v.norm());
                row.push(v.arg().to_degrees());
            }
            row
        })
        .collect();
    emit_table(&args.output, "ac", header, rows, true, stdout, stderr)
}

fn run_noise(args: &NoiseArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let n = load_netlist(&args.netlist)?;
    let output = Probe::parse(&args.output_probe).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut spec = NoiseSpec::new(
        output,
        &args.input,
        value("fstart", &args.fstart)?,
        value("fstop", &args.fstop)?,
        args.ppd,
    );
    spec.temperature_k = args.temp;
    let res = noise_analysis(&n, &spec, &args.solver.config())?;
    for d in &res.diagnostics {
        let _ = writeln!(stderr, "warning: {d}");
    }
    let header = vec!["t_or_f".into(), "output_noise".into(), "input_noise".into()];
    let rows = res
        .points
        .iter()
        .map(|p| vec![p.freq_hz, p.output_noise, p.input_noise.unwrap_or(f64::NAN)])
        .collect();
    emit_table(&args.output, "noise", header, rows, true, stdout, stderr)
}

fn run_bench(args: &BenchArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = if args.ideal {
        MultiplierConfig::ideal()
    } else {
        MultiplierConfig::default()
    };
    if args.physical_summer {
        cfg.summer_mode = SummerMode::Physical;
    }
    let cfg = bench::calibrated(&cfg)?;
    let reports: Vec<ExperimentReport> = match args.experiment {
        Experiment::Dc => vec![bench::exp_dc_transfer(&cfg)?],
        Experiment::Thd => vec![bench::exp_doubler_thd(&cfg, args.amplitude, 1e6)?],
        Experiment::Freq => vec![bench::exp_freq_response(&cfg)?],
        Experiment::Noise => vec![bench::exp_noise(&cfg)?],
        Experiment::Am => vec![
            bench::exp_am(&cfg, &bench::AmSetting::mhz())?,
            bench::exp_am(&cfg, &bench::AmSetting::ghz())?,
        ],
        Experiment::All => bench::run_suite(&cfg)?,
    };
    match &args.output.out {
        Some(dir) => {
            let written = bench::emit_report(&reports, dir)?;
            for p in &written {
                let _ = writeln!(stdout, "wrote {}", p.display());
            }
            if args.output.plot {
                for r in &reports {
                    for t in &r.traces {
                        let log_x = t.header.first().is_some_and(|h| h == "freq_hz");
                        plot_table(dir, &t.name, &t.header, &t.rows, log_x, stdout, stderr);
                    }
                }
            }
        }
        None => {
            let _ = stdout.write_all(bench::render_summary(&reports).as_bytes());
        }
    }
    Ok(())
}

/// Runs one invocation and returns the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Model(a) => run_model(a, stdout),
        Command::Op(a) => run_op(a, stdout, stderr),
        Command::Dc(a) => run_dc(a, stdout, stderr),
        Command::Tran(a) => run_tran(a, stdout, stderr),
        Command::Ac(a) => run_ac(a, stdout, stderr),
        Command::Noise(a) => run_noise(a, stdout, stderr),
        Command::Bench(a) => run_bench(a, stdout, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_cli(std::iter::once("cnfetlab").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn model_prints_geometry() {
        let (code, out, _) = run(&["model", "--chirality", "25,0"]);
        assert_eq!(code, 0);
        assert!(out.contains("D=1.981 nm"), "{out}");
        assert!(out.contains("Vth=0.2201 V"), "{out}");
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(&["op"]).0, 1);
        assert_eq!(run(&["frobnicate"]).0, 1);
        assert_eq!(run(&["model", "--chirality", "x"]).0, 1);
        assert_eq!(run(&["--help"]).0, 0);
    }

    #[test]
    fn netlist_errors_exit_two_with_context() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.cir");
        fs::write(&p, "V1 a 0 1\nR1 a 0 -5\n").unwrap();
        let (code, _, err) = run(&["op", p.to_str().unwrap()]);
        assert_eq!(code, 2);
        assert!(err.contains(":2:") && err.contains("R1 a 0 -5"), "{err}");
        let (code, _, _) = run(&["op", dir.path().join("missing.cir").to_str().unwrap()]);
        assert_eq!(code, 2);
    }

    #[test]
    fn sweep_syntax() {
        let s = parse_sweep("V1:0:1:0.25").unwrap();
        assert_eq!(s.values().len(), 5);
        assert!(parse_sweep("V1:0:1").is_err());
        assert_eq!(parse_link("V1N=V1*-1").unwrap(), ("V1N".into(), "V1".into(), -1.0));
    }

    #[test]
    fn tran_csv_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rc.cir");
        fs::write(&p, "V1 in 0 dc 1\nR1 in out 1k\nC1 out 0 1u\n").unwrap();
        let out = dir.path().join("res");
        let args = [
            "tran",
            p.to_str().unwrap(),
            "--tstop",
            "1m",
            "--dt",
            "10u",
            "--uic",
            "--probe",
            "v(out)",
            "--out",
            out.to_str().unwrap(),
            "--plot",
        ];
        assert_eq!(run(&args).0, 0);
        let first = fs::read_to_string(out.join("tran.csv")).unwrap();
        assert!(first.starts_with("t_or_f,v(out)\n"));
        assert_eq!(first.lines().count(), 102);
        assert!(out.join("tran.svg").exists());
        assert_eq!(run(&args).0, 0);
        assert_eq!(first, fs::read_to_string(out.join("tran.csv")).unwrap());
    }
}
