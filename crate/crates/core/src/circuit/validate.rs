//! Structural checks that do not require solving.

use std::fmt;

use super::{ElementKind, Netlist, NodeId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    /// The netlist has no elements.
    EmptyCircuit,
    /// Only the ground node exists.
    NoNodes,
    /// No DC-conducting path connects the node to ground.
    FloatingNode { node: String },
    DanglingModel { element: String, model: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::EmptyCircuit => f.write_str("circuit has no elements"),
            Diagnostic::NoNodes => f.write_str("circuit has no nodes besides ground"),
            Diagnostic::FloatingNode { node } => write!(f, "node `{node}` has no DC path to ground"),
            Diagnostic::DanglingModel { element, model } => {
                write!(f, "{element}: model `{model}` is not defined")
            }
        }
    }
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: NodeId, b: NodeId) {
        let (ra, rb) = (self.find(a.0), self.find(b.0));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

/// Returns an empty list iff the netlist is valid.
///
/// DC connectivity treats resistors, voltage sources, CNFET channels and
/// summer outputs (controlled source or bias resistor) as conducting;
/// capacitors and gates do not conduct.
pub fn validate_netlist(n: &Netlist) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if n.elements().is_empty() {
        out.push(Diagnostic::EmptyCircuit);
    }
    if n.nodes().len() < 2 {
        out.push(Diagnostic::NoNodes);
    }
    let mut sets = DisjointSet::new(n.nodes().len());
    for e in n.elements() {
        match &e.kind {
            ElementKind::Resistor { pos, neg, .. } | ElementKind::VSource { pos, neg, .. } => {
                sets.union(*pos, *neg)
            }
            ElementKind::Capacitor { .. } => {}
            ElementKind::Cnfet {
                drain,
                source,
                model,
                ..
            } => {
                if n.model(model).is_none() {
                    out.push(Diagnostic::DanglingModel {
                        element: e.name.clone(),
                        model: model.clone(),
                    });
                }
                sets.union(*drain, *source);
            }
            // controlled source or bias resistor
            ElementKind::Summer(s) => sets.union(s.out, NodeId::GROUND),
        }
    }
    let ground = sets.find(0);
    for (i, name) in n.nodes().iter().enumerate().skip(1) {
        if sets.find(i) != ground {
            out.push(Diagnostic::FloatingNode { node: name.clone() });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{SourceShape, SummerMode};

    #[test]
    fn divider_is_clean() {
        let mut n = Netlist::new("div");
        n.vsource("V1", "in", "0", SourceShape::dc(1.0)).unwrap();
        n.resistor("R1", "in", "mid", 1e3).unwrap();
        n.resistor("R2", "mid", "0", 1e3).unwrap();
        assert!(validate_netlist(&n).is_empty());
    }

    #[test]
    fn capacitor_only_node_floats() {
        let mut n = Netlist::new("f");
        n.vsource("V1", "in", "0", SourceShape::dc(1.0)).unwrap();
        n.capacitor("C1", "in", "x", 1e-12).unwrap();
        assert_eq!(
            validate_netlist(&n),
            vec![Diagnostic::FloatingNode { node: "x".into() }]
        );
    }

    #[test]
    fn physical_summer_bias_gives_dc_path() {
        let mut n = Netlist::new("s");
        n.vsource("V1", "a", "0", SourceShape::dc(0.0)).unwrap();
        n.vsource("V2", "b", "0", SourceShape::dc(0.0)).unwrap();
        n.summer("X1", "a", "b", "g", SummerMode::Physical, |s| s.r_bias = 1e10)
            .unwrap();
        assert!(validate_netlist(&n).is_empty());
    }

    #[test]
    fn empty_and_dangling() {
        let n = Netlist::new("e");
        let d = validate_netlist(&n);
        assert!(d.contains(&Diagnostic::EmptyCircuit));
        assert!(d.contains(&Diagnostic::NoNodes));

        let mut n = Netlist::new("m");
        n.vsource("V1", "d", "0", SourceShape::dc(1.0)).unwrap();
        n.cnfet("M1", "d", "d", "0", "missing", crate::cnfet::Polarity::N, 1)
            .unwrap();
        assert!(validate_netlist(&n).contains(&Diagnostic::DanglingModel {
            element: "M1".into(),
            model: "missing".into()
        }));
    }
}
