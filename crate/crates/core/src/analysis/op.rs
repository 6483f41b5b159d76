use super::{prepare, AnalysisError};
use crate::circuit::{Netlist, Primitive};
use crate::cnfet::DevicePoint;
use crate::mna::{
    current_terminals, element_currents, evaluate_cnfet, newton_solve, node_voltage, Circuit, NewtonConfig,
    RealContext, Solution,
};

/// Branch current and absorbed power of one elaborated element.
///
/// `current` flows from the first terminal to the second (pos→neg,
/// drain→source, controlled-source output→ground). Sources deliver power
/// when `power` is negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementOp {
    pub name: String,
    pub voltage: f64,
    pub current: f64,
    pub power: f64,
    pub is_source: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceReport {
    pub name: String,
    pub vgs: f64,
    pub vds: f64,
    pub point: DevicePoint,
}

#[derive(Debug, Clone)]
pub struct OpResult {
    pub circuit: Circuit,
    pub solution: Solution,
    pub elements: Vec<ElementOp>,
    pub devices: Vec<DeviceReport>,
    pub gmin_floor: f64,
}

impl OpResult {
    pub fn voltage(&self, node: &str) -> Option<f64> {
        self.circuit.find_node(node).map(|n| self.solution.voltage(n))
    }

    pub fn element(&self, name: &str) -> Option<&ElementOp> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn device(&self, name: &str) -> Option<&DeviceReport> {
        self.devices.iter().find(|d| d.name == name)
    }

    /// Node voltages by name (ground excluded), in node order.
    pub fn node_voltages(&self) -> Vec<(String, f64)> {
        self.circuit
            .elaborated
            .node_names
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, n)| (n.clone(), self.solution.x[i - 1]))
            .collect()
    }
}

/// Builds per-element currents, powers and device reports for a solution.
pub(crate) fn describe(circuit: Circuit, solution: Solution, gmin_floor: f64) -> OpResult {
    let ctx = RealContext::Dc { source_scale: 1.0 };
    let currents = element_currents(&circuit, &solution.x, &ctx, gmin_floor);
    let mut elements = Vec::new();
    let mut devices = Vec::new();
    for (p, i) in circuit.primitives().iter().zip(currents) {
        let (a, b) = current_terminals(p);
        let v = node_voltage(&solution.x, a) - node_voltage(&solution.x, b);
        elements.push(ElementOp {
            name: p.name().to_string(),
            voltage: v,
            current: i,
            power: v * i,
            is_source: p.has_branch(),
        });
        if let Primitive::Cnfet { gate, source, drain, .. } = p {
            let vs = node_voltage(&solution.x, *source);
            devices.push(DeviceReport {
                name: p.name().to_string(),
                vgs: node_voltage(&solution.x, *gate) - vs,
                vds: node_voltage(&solution.x, *drain) - vs,
                point: evaluate_cnfet(p, &solution.x).unwrap(),
            });
        }
    }
    OpResult {
        circuit,
        solution,
        elements,
        devices,
        gmin_floor,
    }
}

/// DC operating point with per-element currents and dissipation.
pub fn operating_point(netlist: &Netlist, cfg: &NewtonConfig) -> Result<OpResult, AnalysisError> {
    let circuit = prepare(netlist)?;
    let solution = newton_solve(&circuit, cfg, None)?;
    Ok(describe(circuit, solution, cfg.gmin_floor))
}
