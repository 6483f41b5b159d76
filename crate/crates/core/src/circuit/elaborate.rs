//! Flattening of a netlist into solver primitives.
//!
//! Physical summers expand to two input capacitors, a ground capacitor, a bias
//! resistor and an internal bias source. Each CNFET contributes its channel
//! plus fixed gate-source and gate-drain capacitors.

use super::{ElementKind, Netlist, NodeId, SourceShape, SummerMode};
use crate::cnfet::{device_capacitances, CntParams, Polarity};

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Resistor {
        name: String,
        pos: NodeId,
        neg: NodeId,
        ohms: f64,
    },
    Capacitor {
        name: String,
        pos: NodeId,
        neg: NodeId,
        farads: f64,
    },
    VSource {
        name: String,
        pos: NodeId,
        neg: NodeId,
        shape: SourceShape,
    },
    /// `v(out) = offset + gain·(v(in_a) + v(in_b))`, referenced to ground.
    Vcvs {
        name: String,
        out: NodeId,
        in_a: NodeId,
        in_b: NodeId,
        gain: f64,
        offset: f64,
    },
    Cnfet {
        name: String,
        drain: NodeId,
        gate: NodeId,
        source: NodeId,
        params: CntParams,
        polarity: Polarity,
        tubes: u32,
    },
}

impl Primitive {
    pub fn name(&self) -> &str {
        match self {
            Primitive::Resistor { name, .. }
            | Primitive::Capacitor { name, .. }
            | Primitive::VSource { name, .. }
            | Primitive::Vcvs { name, .. }
            | Primitive::Cnfet { name, .. } => name,
        }
    }

    /// Whether the element adds a branch-current unknown.
    pub fn has_branch(&self) -> bool {
        matches!(self, Primitive::VSource { .. } | Primitive::Vcvs { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elaborated {
    /// Netlist nodes followed by internal nodes.
    pub node_names: Vec<String>,
    pub primitives: Vec<Primitive>,
}

impl Elaborated {
    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn find_node(&self, name: &str) -> Option<NodeId> {
        if super::is_ground_name(name) {
            return Some(NodeId::GROUND);
        }
        self.node_names.iter().position(|n| n == name).map(NodeId)
    }
}

/// Elaborates the netlist. Dangling model references are skipped (the
/// validator reports them).
pub fn elaborate(n: &Netlist) -> Elaborated {
    let mut node_names = n.nodes().to_vec();
    let mut primitives = Vec::new();
    for e in n.elements() {
        match &e.kind {
            ElementKind::Resistor { pos, neg, ohms } => primitives.push(Primitive::Resistor {
                name: e.name.clone(),
                pos: *pos,
                neg: *neg,
                ohms: *ohms,
            }),
            ElementKind::Capacitor { pos, neg, farads } => primitives.push(Primitive::Capacitor {
                name: e.name.clone(),
                pos: *pos,
                neg: *neg,
                farads: *farads,
            }),
            ElementKind::VSource { pos, neg, shape } => primitives.push(Primitive::VSource {
                name: e.name.clone(),
                pos: *pos,
                neg: *neg,
                shape: *shape,
            }),
            ElementKind::Cnfet {
                drain,
                gate,
                source,
                model,
                polarity,
                tubes,
            } => {
                let Some(params) = n.model(model) else {
                    continue;
                };
                let (cgs, cgd) = device_capacitances(params, *tubes);
                primitives.push(Primitive::Cnfet {
                    name: e.name.clone(),
                    drain: *drain,
                    gate: *gate,
                    source: *source,
                    params: params.clone(),
                    polarity: *polarity,
                    tubes: *tubes,
                });
                primitives.push(Primitive::Capacitor {
                    name: format!("{}.cgs", e.name),
                    pos: *gate,
                    neg: *source,
                    farads: cgs,
                });
                primitives.push(Primitive::Capacitor {
                    name: format!("{}.cgd", e.name),
                    pos: *gate,
                    neg: *drain,
                    farads: cgd,
                });
            }
            ElementKind::Summer(s) => match s.mode {
                SummerMode::Behavioral => primitives.push(Primitive::Vcvs {
                    name: e.name.clone(),
                    out: s.out,
                    in_a: s.in_a,
                    in_b: s.in_b,
                    gain: s.ratio(),
                    offset: s.v_bias,
                }),
                SummerMode::Physical => {
                    node_names.push(format!("{}.bias", e.name));
                    let bias = NodeId(node_names.len() - 1);
                    primitives.push(Primitive::Capacitor {
                        name: format!("{}.cin_a", e.name),
                        pos: s.in_a,
                        neg: s.out,
                        farads: s.c_in,
                    });
                    primitives.push(Primitive::Capacitor {
                        name: format!("{}.cin_b", e.name),
                        pos: s.in_b,
                        neg: s.out,
                        farads: s.c_in,
                    });
                    primitives.push(Primitive::Capacitor {
                        name: format!("{}.cgnd", e.name),
                        pos: s.out,
                        neg: NodeId::GROUND,
                        farads: s.c_gnd,
                    });
                    primitives.push(Primitive::Resistor {
                        name: format!("{}.rbias", e.name),
                        pos: s.out,
                        neg: bias,
                        ohms: s.r_bias,
                    });
                    primitives.push(Primitive::VSource {
                        name: format!("{}.vbias", e.name),
                        pos: bias,
                        neg: NodeId::GROUND,
                        shape: SourceShape::dc(s.v_bias),
                    });
                }
            },
        }
    }
    Elaborated {
        node_names,
        primitives,
    }
}
