//! Circuit data model: nodes, elements, sources and the capacitive summer.

mod elaborate;
mod parser;
mod validate;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::cnfet::{CntParams, ModelError, Polarity};

pub use elaborate::{elaborate, Elaborated, Primitive};
pub use parser::{parse_netlist, parse_value, render_netlist, ParseError};
pub use validate::{validate_netlist, Diagnostic};

/// Dense node index. Index 0 is ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const GROUND: NodeId = NodeId(0);

    pub fn is_ground(self) -> bool {
        self.0 == 0
    }
}

/// Name used for the ground node when rendering.
pub const GROUND_NAME: &str = "0";

pub fn is_ground_name(name: &str) -> bool {
    name == "0" || name.eq_ignore_ascii_case("gnd")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sine {
    pub offset: f64,
    pub amplitude: f64,
    pub freq_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcSpec {
    pub magnitude: f64,
    pub phase_deg: f64,
}

/// Independent source waveform: a DC level, an optional sinusoid and an
/// optional small-signal AC tag.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SourceShape {
    pub dc: f64,
    pub sin: Option<Sine>,
    pub ac: Option<AcSpec>,
}

impl SourceShape {
    pub fn dc(volts: f64) -> Self {
        Self {
            dc: volts,
            ..Self::default()
        }
    }

    pub fn sine(amplitude: f64, freq_hz: f64) -> Self {
        Self {
            dc: 0.0,
            sin: Some(Sine {
                offset: 0.0,
                amplitude,
                freq_hz,
            }),
            ac: None,
        }
    }

    pub fn with_ac(mut self, magnitude: f64, phase_deg: f64) -> Self {
        self.ac = Some(AcSpec {
            magnitude,
            phase_deg,
        });
        self
    }

    /// Large-signal value at time `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let mut v = self.dc;
        if let Some(s) = self.sin {
            v += s.offset + s.amplitude * (2.0 * PI * s.freq_hz * t).sin();
        }
        v
    }

    /// Operating-point value (the waveform at t = 0).
    pub fn dc_value(&self) -> f64 {
        self.value_at(0.0)
    }

    /// Inverted replica: every large-signal term negated, AC phase shifted by 180°.
    pub fn negated(&self) -> Self {
        Self {
            dc: -self.dc,
            sin: self.sin.map(|s| Sine {
                offset: -s.offset,
                amplitude: -s.amplitude,
                freq_hz: s.freq_hz,
            }),
            ac: self.ac.map(|a| {
                let mut phase = a.phase_deg + 180.0;
                if phase > 180.0 {
                    phase -= 360.0;
                }
                AcSpec {
                    magnitude: a.magnitude,
                    phase_deg: phase,
                }
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummerMode {
    /// Ideal controlled source `out = vBias + ratio·(inA + inB)`.
    Behavioral,
    /// Two input capacitors, a ground capacitor and a bias resistor.
    Physical,
}

/// Capacitive adder driving a gate node.
#[derive(Debug, Clone, PartialEq)]
pub struct Summer {
    pub in_a: NodeId,
    pub in_b: NodeId,
    pub out: NodeId,
    pub mode: SummerMode,
    pub c_in: f64,
    pub c_gnd: f64,
    pub r_bias: f64,
    pub v_bias: f64,
}

impl Summer {
    pub const DEFAULT_C: f64 = 5e-15;
    pub const DEFAULT_R_BIAS: f64 = 1e10;

    pub fn new(in_a: NodeId, in_b: NodeId, out: NodeId, mode: SummerMode) -> Self {
        Self {
            in_a,
            in_b,
            out,
            mode,
            c_in: Self::DEFAULT_C,
            c_gnd: 4.0 * Self::DEFAULT_C,
            r_bias: Self::DEFAULT_R_BIAS,
            v_bias: 0.0,
        }
    }

    /// Divider ratio `cIn/(2·cIn + cGnd)`; 1/6 with the default 1:4 sizing.
    pub fn ratio(&self) -> f64 {
        self.c_in / (2.0 * self.c_in + self.c_gnd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor {
        pos: NodeId,
        neg: NodeId,
        ohms: f64,
    },
    Capacitor {
        pos: NodeId,
        neg: NodeId,
        farads: f64,
    },
    VSource {
        pos: NodeId,
        neg: NodeId,
        shape: SourceShape,
    },
    Cnfet {
        drain: NodeId,
        gate: NodeId,
        source: NodeId,
        model: String,
        polarity: Polarity,
        tubes: u32,
    },
    Summer(Summer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
}

impl Element {
    pub fn terminals(&self) -> Vec<NodeId> {
        match &self.kind {
            ElementKind::Resistor { pos, neg, .. }
            | ElementKind::Capacitor { pos, neg, .. }
            | ElementKind::VSource { pos, neg, .. } => vec![*pos, *neg],
            ElementKind::Cnfet {
                drain,
                gate,
                source,
                ..
            } => vec![*drain, *gate, *source],
            ElementKind::Summer(s) => vec![s.in_a, s.in_b, s.out],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("duplicate element name `{0}`")]
    DuplicateName(String),
    #[error("{element}: {what} must be positive, got {value}")]
    NonPositive {
        element: String,
        what: &'static str,
        value: f64,
    },
    #[error("{element}: tube count must be at least 1")]
    InvalidTubes { element: String },
    #[error("{element}: sine frequency must be positive, got {value}")]
    InvalidFrequency { element: String, value: f64 },
    #[error("{element}: node {node} does not exist")]
    UnknownNode { element: String, node: usize },
    #[error("model `{name}`: {source}")]
    Model {
        name: String,
        #[source]
        source: ModelError,
    },
    #[error("no element named `{0}`")]
    UnknownElement(String),
}

/// Immutable-after-construction circuit description.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Netlist {
    pub title: String,
    nodes: Vec<String>,
    elements: Vec<Element>,
    models: BTreeMap<String, CntParams>,
}

impl Netlist {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            nodes: vec![GROUND_NAME.to_string()],
            elements: Vec::new(),
            models: BTreeMap::new(),
        }
    }

    /// Interns a node name; ground aliases map to [`NodeId::GROUND`].
    pub fn node(&mut self, name: &str) -> NodeId {
        if is_ground_name(name) {
            return NodeId::GROUND;
        }
        match self.nodes.iter().position(|n| n == name) {
            Some(i) => NodeId(i),
            None => {
                self.nodes.push(name.to_string());
                NodeId(self.nodes.len() - 1)
            }
        }
    }

    pub fn find_node(&self, name: &str) -> Option<NodeId> {
        if is_ground_name(name) {
            return Some(NodeId::GROUND);
        }
        self.nodes.iter().position(|n| n == name).map(NodeId)
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0]
    }

    /// All node names; index 0 is ground.
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn models(&self) -> &BTreeMap<String, CntParams> {
        &self.models
    }

    pub fn model(&self, name: &str) -> Option<&CntParams> {
        self.models.get(name)
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn add_model(&mut self, name: impl Into<String>, params: CntParams) -> Result<(), CircuitError> {
        let name = name.into();
        params.validate().map_err(|source| CircuitError::Model {
            name: name.clone(),
            source,
        })?;
        self.models.insert(name, params);
        Ok(())
    }

    /// Appends an element after checking names, values and node references.
    pub fn add(&mut self, element: Element) -> Result<(), CircuitError> {
        if self.elements.iter().any(|e| e.name == element.name) {
            return Err(CircuitError::DuplicateName(element.name));
        }
        for t in element.terminals() {
            if t.0 >= self.nodes.len() {
                return Err(CircuitError::UnknownNode {
                    element: element.name.clone(),
                    node: t.0,
                });
            }
        }
        let positive = |what: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(CircuitError::NonPositive {
                    element: element.name.clone(),
                    what,
                    value,
                })
            }
        };
        match &element.kind {
            ElementKind::Resistor { ohms, .. } => positive("resistance", *ohms)?,
            ElementKind::Capacitor { farads, .. } => positive("capacitance", *farads)?,
            ElementKind::VSource { shape, .. } => {
                if let Some(s) = shape.sin {
                    if !(s.freq_hz > 0.0 && s.freq_hz.is_finite()) {
                        return Err(CircuitError::InvalidFrequency {
                            element: element.name.clone(),
                            value: s.freq_hz,
                        });
                    }
                }
            }
            ElementKind::Cnfet { tubes, .. } => {
                if *tubes < 1 {
                    return Err(CircuitError::InvalidTubes {
                        element: element.name.clone(),
                    });
                }
            }
            ElementKind::Summer(s) => {
                positive("input capacitance", s.c_in)?;
                positive("ground capacitance", s.c_gnd)?;
                positive("bias resistance", s.r_bias)?;
            }
        }
        self.elements.push(element);
        Ok(())
    }

    pub fn resistor(&mut self, name: &str, pos: &str, neg: &str, ohms: f64) -> Result<(), CircuitError> {
        let (pos, neg) = (self.node(pos), self.node(neg));
        self.add(Element {
            name: name.into(),
            kind: ElementKind::Resistor { pos, neg, ohms },
        })
    }

    pub fn capacitor(&mut self, name: &str, pos: &str, neg: &str, farads: f64) -> Result<(), CircuitError> {
        let (pos, neg) = (self.node(pos), self.node(neg));
        self.add(Element {
            name: name.into(),
            kind: ElementKind::Capacitor { pos, neg, farads },
        })
    }

    pub fn vsource(&mut self, name: &str, pos: &str, neg: &str, shape: SourceShape) -> Result<(), CircuitError> {
        let (pos, neg) = (self.node(pos), self.node(neg));
        self.add(Element {
            name: name.into(),
            kind: ElementKind::VSource { pos, neg, shape },
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn cnfet(
        &mut self,
        name: &str,
        drain: &str,
        gate: &str,
        source: &str,
        model: &str,
        polarity: Polarity,
        tubes: u32,
    ) -> Result<(), CircuitError> {
        let (drain, gate, source) = (self.node(drain), self.node(gate), self.node(source));
        self.add(Element {
            name: name.into(),
            kind: ElementKind::Cnfet {
                drain,
                gate,
                source,
                model: model.into(),
                polarity,
                tubes,
            },
        })
    }

    /// Adds a summer; `configure` adjusts the defaults (C = 5 fF, 1:4 sizing).
    pub fn summer(
        &mut self,
        name: &str,
        in_a: &str,
        in_b: &str,
        out: &str,
        mode: SummerMode,
        configure: impl FnOnce(&mut Summer),
    ) -> Result<(), CircuitError> {
        let (a, b, o) = (self.node(in_a), self.node(in_b), self.node(out));
        let mut s = Summer::new(a, b, o, mode);
        configure(&mut s);
        self.add(Element {
            name: name.into(),
            kind: ElementKind::Summer(s),
        })
    }

    /// Replaces the shape of a named voltage source.
    pub fn set_source(&mut self, name: &str, shape: SourceShape) -> Result<(), CircuitError> {
        match self.elements.iter_mut().find(|e| e.name == name) {
            Some(Element {
                kind: ElementKind::VSource { shape: s, .. },
                ..
            }) => {
                *s = shape;
                Ok(())
            }
            _ => Err(CircuitError::UnknownElement(name.into())),
        }
    }

    pub fn source_shape(&self, name: &str) -> Option<SourceShape> {
        match self.element(name) {
            Some(Element {
                kind: ElementKind::VSource { shape, .. },
                ..
            }) => Some(*shape),
            _ => None,
        }
    }

    pub fn render(&self) -> String {
        render_netlist(self)
    }
}

impl fmt::Display for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Node count (including ground) and the name → index map.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeIndex {
    pub count: usize,
    pub by_name: BTreeMap<String, usize>,
}

/// Indices follow order of first appearance; ground is always 0.
pub fn build_node_index(n: &Netlist) -> NodeIndex {
    NodeIndex {
        count: n.nodes.len(),
        by_name: n
            .nodes
            .iter()
            .enumerate()
            .map(|(i, name)| (name.clone(), i))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_only_has_one_node() {
        let n = Netlist::new("empty");
        assert_eq!(build_node_index(&n).count, 1);
    }

    #[test]
    fn shared_node_gets_one_index() {
        let mut n = Netlist::new("t");
        n.resistor("R1", "in", "out", 1e3).unwrap();
        n.resistor("R2", "out", "0", 1e3).unwrap();
        let idx = build_node_index(&n);
        assert_eq!(idx.count, 3);
        assert_eq!(idx.by_name["out"], 2);
        assert_eq!(idx.by_name["0"], 0);
    }

    #[test]
    fn rejects_duplicates_and_bad_values() {
        let mut n = Netlist::new("t");
        n.resistor("R1", "a", "0", 1.0).unwrap();
        assert!(matches!(
            n.resistor("R1", "b", "0", 1.0),
            Err(CircuitError::DuplicateName(_))
        ));
        assert!(matches!(
            n.capacitor("C1", "a", "0", 0.0),
            Err(CircuitError::NonPositive { .. })
        ));
        assert!(n
            .cnfet("M1", "a", "b", "0", "x", Polarity::N, 0)
            .is_err());
    }

    #[test]
    fn negated_shape() {
        let s = SourceShape {
            dc: 0.1,
            sin: Some(Sine {
                offset: 0.0,
                amplitude: 0.4,
                freq_hz: 1e6,
            }),
            ac: Some(AcSpec {
                magnitude: 1.0,
                phase_deg: 0.0,
            }),
        };
        let n = s.negated();
        for t in [0.0, 1.3e-7, 4.4e-7] {
            assert_eq!(n.value_at(t), -s.value_at(t));
        }
        assert_eq!(n.ac.unwrap().phase_deg, 180.0);
        assert_eq!(n.negated().ac.unwrap().phase_deg, 0.0);
    }

    #[test]
    fn default_summer_ratio_is_one_sixth() {
        let s = Summer::new(NodeId(1), NodeId(2), NodeId(3), SummerMode::Physical);
        assert!((s.ratio() - 1.0 / 6.0).abs() < 1e-15);
    }
}
