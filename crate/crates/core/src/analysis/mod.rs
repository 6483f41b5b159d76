//! Analysis drivers: operating point, DC sweep, transient, AC and noise, plus
//! quiescent power accounting.

mod ac;
mod noise;
mod op;
mod power;
mod sweep;
mod transient;

use std::fmt;

use thiserror::Error;

use crate::circuit::{Diagnostic, Netlist, NodeId};
use crate::mna::{Circuit, MnaError, Scalar};

pub use crate::signal::Waveform;
pub use ac::{ac_solve, ac_sweep, log_frequencies, AcPoint, AcResult, AcSpec};
pub use noise::{noise_analysis, NoisePoint, NoiseResult, NoiseSpec, CHANNEL_NOISE_GAMMA};
pub use op::{operating_point, DeviceReport, ElementOp, OpResult};
pub use power::{power_report, PowerReport, SourcePower};
pub use sweep::{dc_sweep, dc_sweep_with, SweepFailure, SweepResult, SweepSpec};
pub use transient::{transient, TransientResult, TransientSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid netlist: {}", join(.0))]
    InvalidNetlist(Vec<Diagnostic>),
    #[error(transparent)]
    Solver(#[from] MnaError),
    #[error("no voltage source named `{0}`")]
    UnknownSource(String),
    #[error("no node named `{0}`")]
    UnknownNode(String),
    #[error("invalid analysis setup: {0}")]
    InvalidSpec(String),
    #[error("no source carries an AC tag")]
    NoAcSource,
    #[error("transient step at t = {time:e} s failed: {source}")]
    TransientStep {
        time: f64,
        #[source]
        source: MnaError,
    },
    #[error("singular small-signal matrix at {freq_hz:e} Hz")]
    SingularAt { freq_hz: f64 },
}

fn join(d: &[Diagnostic]) -> String {
    d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Node-voltage probe, single-ended or differential.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub pos: String,
    pub neg: Option<String>,
}

impl Probe {
    pub fn node(name: &str) -> Self {
        Self {
            pos: name.into(),
            neg: None,
        }
    }

    pub fn differential(pos: &str, neg: &str) -> Self {
        Self {
            pos: pos.into(),
            neg: Some(neg.into()),
        }
    }

    /// Accepts `name`, `v(name)` or `v(pos,neg)`.
    pub fn parse(text: &str) -> Result<Self, AnalysisError> {
        let t = text.trim();
        let inner = if (t.starts_with("v(") || t.starts_with("V(")) && t.ends_with(')') {
            &t[2..t.len() - 1]
        } else {
            t
        };
        let mut parts = inner.split(',').map(str::trim);
        let pos = parts.next().filter(|s| !s.is_empty());
        let neg = parts.next();
        match (pos, neg, parts.next()) {
            (Some(p), None, None) => Ok(Self::node(p)),
            (Some(p), Some(n), None) if !n.is_empty() => Ok(Self::differential(p, n)),
            _ => Err(AnalysisError::InvalidSpec(format!("bad probe `{text}`"))),
        }
    }

    pub(crate) fn resolve(&self, circuit: &Circuit) -> Result<(NodeId, NodeId), AnalysisError> {
        let find = |name: &str| circuit.find_node(name).ok_or_else(|| AnalysisError::UnknownNode(name.into()));
        let pos = find(&self.pos)?;
        let neg = match &self.neg {
            Some(n) => find(n)?,
            None => NodeId::GROUND,
        };
        Ok((pos, neg))
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.neg {
            None => write!(f, "v({})", self.pos),
            Some(n) => write!(f, "v({},{})", self.pos, n),
        }
    }
}

pub(crate) fn probe_value<T: Scalar>(x: &[T], (pos, neg): (NodeId, NodeId)) -> T {
    crate::mna::node_voltage(x, pos) - crate::mna::node_voltage(x, neg)
}

pub(crate) fn resolve_probes(circuit: &Circuit, probes: &[Probe]) -> Result<Vec<(NodeId, NodeId)>, AnalysisError> {
    probes.iter().map(|p| p.resolve(circuit)).collect()
}

/// Validates and elaborates a netlist for analysis.
pub fn prepare(netlist: &Netlist) -> Result<Circuit, AnalysisError> {
    let diagnostics = crate::circuit::validate_netlist(netlist);
    if !diagnostics.is_empty() {
        return Err(AnalysisError::InvalidNetlist(diagnostics));
    }
    Ok(Circuit::from_netlist(netlist))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_syntax() {
        assert_eq!(Probe::parse("out").unwrap(), Probe::node("out"));
        assert_eq!(Probe::parse("v(out)").unwrap(), Probe::node("out"));
        assert_eq!(Probe::parse("v(vo2, vo1)").unwrap(), Probe::differential("vo2", "vo1"));
        assert!(Probe::parse("v()").is_err());
        assert_eq!(Probe::differential("a", "b").to_string(), "v(a,b)");
    }
}
