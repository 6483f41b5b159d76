use super::OpResult;

#[derive(Debug, Clone, PartialEq)]
pub struct SourcePower {
    pub name: String,
    pub volts: f64,
    pub amps: f64,
    /// Power delivered to the circuit (W).
    pub delivered: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerReport {
    pub sources: Vec<SourcePower>,
    /// Dissipation of each non-source element (W).
    pub dissipation: Vec<(String, f64)>,
    /// Total power delivered by all sources (W).
    pub total: f64,
    pub total_dissipated: f64,
}

impl PowerReport {
    /// Source power minus element dissipation; zero by Tellegen's theorem.
    pub fn tellegen_error(&self) -> f64 {
        self.total - self.total_dissipated
    }

    pub fn source(&self, name: &str) -> Option<&SourcePower> {
        self.sources.iter().find(|s| s.name == name)
    }
}

/// Quiescent power at an operating point.
///
/// Sources include independent voltage sources and behavioral summer outputs.
pub fn power_report(op: &OpResult) -> PowerReport {
    let mut sources = Vec::new();
    let mut dissipation = Vec::new();
    for e in &op.elements {
        if e.is_source {
            sources.push(SourcePower {
                name: e.name.clone(),
                volts: e.voltage,
                amps: e.current,
                delivered: -e.power,
            });
        } else {
            dissipation.push((e.name.clone(), e.power));
        }
    }
    let total = sources.iter().map(|s| s.delivered).sum();
    let total_dissipated = dissipation.iter().map(|(_, p)| p).sum();
    PowerReport {
        sources,
        dissipation,
        total,
        total_dissipated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::operating_point;
    use crate::circuit::{Netlist, SourceShape};
    use crate::mna::NewtonConfig;

    #[test]
    fn one_volt_across_one_k() {
        let mut n = Netlist::new("p");
        n.vsource("V1", "a", "0", SourceShape::dc(1.0)).unwrap();
        n.resistor("R1", "a", "0", 1e3).unwrap();
        let r = power_report(&operating_point(&n, &NewtonConfig::default()).unwrap());
        assert!((r.total - 1e-3).abs() < 1e-15);
        assert!(r.tellegen_error().abs() < 1e-12);
    }

    #[test]
    fn divider_split() {
        let mut n = Netlist::new("p");
        n.vsource("V1", "a", "0", SourceShape::dc(1.0)).unwrap();
        n.resistor("R1", "a", "b", 1e3).unwrap();
        n.resistor("R2", "b", "0", 1e3).unwrap();
        let r = power_report(&operating_point(&n, &NewtonConfig::default()).unwrap());
        assert!((r.total - 0.5e-3).abs() < 1e-15);
        for (_, p) in &r.dissipation {
            assert!((p - 0.25e-3).abs() < 1e-15);
        }
    }
}
