//! Modified nodal analysis: system assembly, element stamps, dense LU and the
//! damped Newton-Raphson driver with gmin and source stepping.
//!
//! Unknown layout: node voltages for nodes `1..N` (ground eliminated) followed
//! by one branch current per voltage source or controlled source. A branch
//! current flows from the element's positive terminal through the element to
//! its negative terminal.

mod lu;
mod newton;

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use thiserror::Error;

use crate::circuit::{Elaborated, NodeId, Primitive};
use crate::cnfet::{drain_current, DevicePoint};

pub use lu::{lu_solve, LuFactors, PIVOT_THRESHOLD};
pub use newton::{
    newton_solve, solve_with_gmin_stepping, solve_with_source_stepping, Attempt, NewtonConfig, Solution,
    Strategy,
};
pub(crate) use newton::iterate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MnaError {
    #[error("singular matrix (pivot below threshold at unknown {row})")]
    SingularMatrix { row: usize },
    #[error("matrix or right-hand side contains non-finite entries")]
    NonFinite,
    #[error("Newton iteration did not converge ({})", describe_trace(.trace))]
    NoConvergence { trace: Vec<Attempt> },
}

fn describe_trace(trace: &[Attempt]) -> String {
    trace
        .iter()
        .map(|a| {
            format!(
                "{:?}: {} iterations, last update {:.3e} V, residual {:.3e} A",
                a.strategy, a.iterations, a.max_update, a.max_residual
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Field operations needed by the dense solver.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn zero() -> Self;
    fn from_real(v: f64) -> Self;
    fn magnitude(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(v: f64) -> Self {
        v
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
}

/// Assembled nodal matrix and right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct MnaSystem<T> {
    pub dim: usize,
    pub node_unknowns: usize,
    /// Row-major `dim×dim`.
    pub matrix: Vec<T>,
    pub rhs: Vec<T>,
}

impl<T: Scalar> MnaSystem<T> {
    pub fn new(node_count: usize, branch_count: usize) -> Self {
        let node_unknowns = node_count.saturating_sub(1);
        let dim = node_unknowns + branch_count;
        Self {
            dim,
            node_unknowns,
            matrix: vec![T::zero(); dim * dim],
            rhs: vec![T::zero(); dim],
        }
    }

    pub fn clear(&mut self) {
        self.matrix.iter_mut().for_each(|v| *v = T::zero());
        self.rhs.iter_mut().for_each(|v| *v = T::zero());
    }

    fn row(node: NodeId) -> Option<usize> {
        (!node.is_ground()).then(|| node.0 - 1)
    }

    pub fn branch_row(&self, branch: usize) -> usize {
        self.node_unknowns + branch
    }

    pub fn add(&mut self, row: usize, col: usize, v: T) {
        self.matrix[row * self.dim + col] += v;
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.matrix[row * self.dim + col]
    }

    /// Two-terminal admittance between `a` and `b`.
    pub fn stamp_admittance(&mut self, a: NodeId, b: NodeId, y: T) {
        let (ra, rb) = (Self::row(a), Self::row(b));
        if let Some(i) = ra {
            self.add(i, i, y);
        }
        if let Some(j) = rb {
            self.add(j, j, y);
        }
        if let (Some(i), Some(j)) = (ra, rb) {
            self.add(i, j, -y);
            self.add(j, i, -y);
        }
    }

    /// Independent current `i` flowing from `a` to `b` through the element.
    pub fn stamp_current(&mut self, a: NodeId, b: NodeId, i: T) {
        if let Some(r) = Self::row(a) {
            self.rhs[r] -= i;
        }
        if let Some(r) = Self::row(b) {
            self.rhs[r] += i;
        }
    }

    /// Current `g·(v(cp) - v(cn))` flowing from `op` to `on`.
    pub fn stamp_transconductance(&mut self, op: NodeId, on: NodeId, cp: NodeId, cn: NodeId, g: T) {
        for (out, s_out) in [(op, 1.0), (on, -1.0)] {
            let Some(r) = Self::row(out) else { continue };
            for (ctrl, s_ctrl) in [(cp, 1.0), (cn, -1.0)] {
                if let Some(c) = Self::row(ctrl) {
                    self.add(r, c, g * T::from_real(s_out * s_ctrl));
                }
            }
        }
    }

    /// Voltage source `v(pos) - v(neg) = value` with its branch current.
    pub fn stamp_voltage_source(&mut self, branch: usize, pos: NodeId, neg: NodeId, value: T) {
        let br = self.branch_row(branch);
        let one = T::from_real(1.0);
        if let Some(r) = Self::row(pos) {
            self.add(r, br, one);
            self.add(br, r, one);
        }
        if let Some(r) = Self::row(neg) {
            self.add(r, br, -one);
            self.add(br, r, -one);
        }
        self.rhs[br] += value;
    }

    /// `v(out) - gain·(v(a) + v(b)) = offset`, output referenced to ground.
    pub fn stamp_vcvs(&mut self, branch: usize, out: NodeId, a: NodeId, b: NodeId, gain: f64, offset: T) {
        let br = self.branch_row(branch);
        let one = T::from_real(1.0);
        if let Some(r) = Self::row(out) {
            self.add(r, br, one);
            self.add(br, r, one);
        }
        for input in [a, b] {
            if let Some(c) = Self::row(input) {
                self.add(br, c, T::from_real(-gain));
            }
        }
        self.rhs[br] += offset;
    }
}

/// Capacitor integration rule for one transient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integration {
    BackwardEuler,
    Trapezoidal,
}

/// Capacitor state carried between transient steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CapState {
    pub voltage: f64,
    pub current: f64,
}

/// Real-valued analysis context.
#[derive(Debug, Clone, Copy)]
pub enum RealContext<'a> {
    /// Capacitors open; independent sources scaled by `source_scale`.
    Dc { source_scale: f64 },
    Transient {
        time: f64,
        dt: f64,
        method: Integration,
        /// One entry per capacitor, in primitive order.
        history: &'a [CapState],
    },
}

/// Companion conductance and history current for a capacitor.
pub fn capacitor_companion(farads: f64, dt: f64, method: Integration, state: CapState) -> (f64, f64) {
    match method {
        Integration::BackwardEuler => {
            let g = farads / dt;
            (g, -g * state.voltage)
        }
        Integration::Trapezoidal => {
            let g = 2.0 * farads / dt;
            (g, -(g * state.voltage + state.current))
        }
    }
}

/// Elaborated circuit with branch and capacitor numbering.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub elaborated: Elaborated,
    /// Branch index per primitive (voltage sources and controlled sources).
    pub branch_of: Vec<Option<usize>>,
    /// Capacitor slot per primitive (index into transient history).
    pub cap_of: Vec<Option<usize>>,
    pub branch_count: usize,
    pub cap_count: usize,
}

impl Circuit {
    pub fn new(elaborated: Elaborated) -> Self {
        let mut branch_of = Vec::with_capacity(elaborated.primitives.len());
        let mut cap_of = Vec::with_capacity(elaborated.primitives.len());
        let (mut b, mut c) = (0, 0);
        for p in &elaborated.primitives {
            if p.has_branch() {
                branch_of.push(Some(b));
                b += 1;
            } else {
                branch_of.push(None);
            }
            if matches!(p, Primitive::Capacitor { .. }) {
                cap_of.push(Some(c));
                c += 1;
            } else {
                cap_of.push(None);
            }
        }
        Self {
            elaborated,
            branch_of,
            cap_of,
            branch_count: b,
            cap_count: c,
        }
    }

    pub fn from_netlist(n: &crate::circuit::Netlist) -> Self {
        Self::new(crate::circuit::elaborate(n))
    }

    pub fn node_count(&self) -> usize {
        self.elaborated.node_count()
    }

    pub fn unknowns(&self) -> usize {
        self.node_count() - 1 + self.branch_count
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.elaborated.primitives
    }

    pub fn is_nonlinear(&self) -> bool {
        self.primitives().iter().any(|p| matches!(p, Primitive::Cnfet { .. }))
    }

    pub fn find_node(&self, name: &str) -> Option<NodeId> {
        self.elaborated.find_node(name)
    }

    pub fn primitive_index(&self, name: &str) -> Option<usize> {
        self.primitives().iter().position(|p| p.name() == name)
    }

    /// Sets the DC level of a named independent source.
    pub fn set_source_dc(&mut self, name: &str, volts: f64) -> bool {
        for p in &mut self.elaborated.primitives {
            if let Primitive::VSource { name: n, shape, .. } = p {
                if n == name {
                    shape.dc = volts;
                    return true;
                }
            }
        }
        false
    }

    pub fn new_real_system(&self) -> MnaSystem<f64> {
        MnaSystem::new(self.node_count(), self.branch_count)
    }

    pub fn new_complex_system(&self) -> MnaSystem<Complex64> {
        MnaSystem::new(self.node_count(), self.branch_count)
    }
}

/// Voltage of `node` in a solution vector.
pub fn node_voltage<T: Scalar>(x: &[T], node: NodeId) -> T {
    if node.is_ground() {
        T::zero()
    } else {
        x[node.0 - 1]
    }
}

/// Stamps a linear primitive (R, C, V, controlled source) into a real system.
/// CNFETs are ignored here; see [`stamp_cnfet`].
pub fn stamp_linear(
    circuit: &Circuit,
    index: usize,
    system: &mut MnaSystem<f64>,
    ctx: &RealContext<'_>,
) {
    match &circuit.primitives()[index] {
        Primitive::Resistor { pos, neg, ohms, .. } => system.stamp_admittance(*pos, *neg, 1.0 / ohms),
        Primitive::Capacitor { pos, neg, farads, .. } => {
            if let RealContext::Transient {
                dt, method, history, ..
            } = ctx
            {
                let slot = circuit.cap_of[index].expect("capacitor slot");
                let (g, i_hist) = capacitor_companion(*farads, *dt, *method, history[slot]);
                system.stamp_admittance(*pos, *neg, g);
                system.stamp_current(*pos, *neg, i_hist);
            }
        }
        Primitive::VSource { pos, neg, shape, .. } => {
            let value = match ctx {
                RealContext::Dc { source_scale } => source_scale * shape.dc_value(),
                RealContext::Transient { time, .. } => shape.value_at(*time),
            };
            let branch = circuit.branch_of[index].expect("source branch");
            system.stamp_voltage_source(branch, *pos, *neg, value);
        }
        Primitive::Vcvs {
            out,
            in_a,
            in_b,
            gain,
            offset,
            ..
        } => {
            let scale = match ctx {
                RealContext::Dc { source_scale } => *source_scale,
                RealContext::Transient { .. } => 1.0,
            };
            let branch = circuit.branch_of[index].expect("vcvs branch");
            system.stamp_vcvs(branch, *out, *in_a, *in_b, *gain, scale * offset);
        }
        Primitive::Cnfet { .. } => {}
    }
}

/// Stamps a linear primitive into the complex small-signal system at `omega`.
pub fn stamp_linear_ac(circuit: &Circuit, index: usize, system: &mut MnaSystem<Complex64>, omega: f64) {
    match &circuit.primitives()[index] {
        Primitive::Resistor { pos, neg, ohms, .. } => {
            system.stamp_admittance(*pos, *neg, Complex64::new(1.0 / ohms, 0.0))
        }
        Primitive::Capacitor { pos, neg, farads, .. } => {
            system.stamp_admittance(*pos, *neg, Complex64::new(0.0, omega * farads))
        }
        Primitive::VSource { pos, neg, shape, .. } => {
            let value = shape
                .ac
                .map(|a| Complex64::from_polar(a.magnitude, a.phase_deg.to_radians()))
                .unwrap_or_default();
            let branch = circuit.branch_of[index].expect("source branch");
            system.stamp_voltage_source(branch, *pos, *neg, value);
        }
        Primitive::Vcvs {
            out, in_a, in_b, gain, ..
        } => {
            let branch = circuit.branch_of[index].expect("vcvs branch");
            system.stamp_vcvs(branch, *out, *in_a, *in_b, *gain, Complex64::new(0.0, 0.0));
        }
        Primitive::Cnfet { .. } => {}
    }
}

/// Evaluates the device at the iterate and returns its operating point.
pub fn evaluate_cnfet(prim: &Primitive, x: &[f64]) -> Option<DevicePoint> {
    let Primitive::Cnfet {
        drain,
        gate,
        source,
        params,
        polarity,
        tubes,
        ..
    } = prim
    else {
        return None;
    };
    let vs = node_voltage(x, *source);
    let vgs = node_voltage(x, *gate) - vs;
    let vds = node_voltage(x, *drain) - vs;
    Some(drain_current(params, *polarity, *tubes, vgs, vds))
}

/// Norton companion of a CNFET linearised at the iterate `x`:
/// `gm`, `gds` and the equivalent current `ids - gm·vgs - gds·vds`, plus the
/// `gmin_floor` conductance across drain-source.
pub fn stamp_cnfet(prim: &Primitive, system: &mut MnaSystem<f64>, x: &[f64], gmin_floor: f64) {
    let Primitive::Cnfet {
        drain, gate, source, ..
    } = prim
    else {
        return;
    };
    let d = evaluate_cnfet(prim, x).expect("cnfet");
    let vs = node_voltage(x, *source);
    let vgs = node_voltage(x, *gate) - vs;
    let vds = node_voltage(x, *drain) - vs;
    if d.gm != 0.0 {
        system.stamp_transconductance(*drain, *source, *gate, *source, d.gm);
    }
    let g = d.gds + gmin_floor;
    if g != 0.0 {
        system.stamp_admittance(*drain, *source, g);
    }
    let i_eq = d.ids - d.gm * vgs - d.gds * vds;
    if i_eq != 0.0 {
        system.stamp_current(*drain, *source, i_eq);
    }
}

/// Small-signal CNFET stamp (gm, gds + gmin floor) at a converged bias.
pub fn stamp_cnfet_ac(prim: &Primitive, system: &mut MnaSystem<Complex64>, bias: &[f64], gmin_floor: f64) {
    let Primitive::Cnfet {
        drain, gate, source, ..
    } = prim
    else {
        return;
    };
    let d = evaluate_cnfet(prim, bias).expect("cnfet");
    system.stamp_transconductance(*drain, *source, *gate, *source, Complex64::new(d.gm, 0.0));
    system.stamp_admittance(*drain, *source, Complex64::new(d.gds + gmin_floor, 0.0));
}

/// Current through each primitive at `x`, flowing from its first terminal
/// (pos / drain / out) to its second (neg / source / ground).
pub fn element_currents(circuit: &Circuit, x: &[f64], ctx: &RealContext<'_>, gmin_floor: f64) -> Vec<f64> {
    let nodes = circuit.node_count();
    circuit
        .primitives()
        .iter()
        .enumerate()
        .map(|(i, p)| match p {
            Primitive::Resistor { pos, neg, ohms, .. } => (node_voltage(x, *pos) - node_voltage(x, *neg)) / ohms,
            Primitive::Capacitor { pos, neg, farads, .. } => match ctx {
                RealContext::Dc { .. } => 0.0,
                RealContext::Transient {
                    dt, method, history, ..
                } => {
                    let (g, i_hist) = capacitor_companion(*farads, *dt, *method, history[circuit.cap_of[i].unwrap()]);
                    g * (node_voltage(x, *pos) - node_voltage(x, *neg)) + i_hist
                }
            },
            Primitive::VSource { .. } | Primitive::Vcvs { .. } => x[nodes - 1 + circuit.branch_of[i].unwrap()],
            Primitive::Cnfet { drain, source, .. } => {
                let d = evaluate_cnfet(p, x).unwrap();
                d.ids + gmin_floor * (node_voltage(x, *drain) - node_voltage(x, *source))
            }
        })
        .collect()
}

/// Terminal pair through which [`element_currents`] flows.
pub fn current_terminals(p: &Primitive) -> (NodeId, NodeId) {
    match p {
        Primitive::Resistor { pos, neg, .. }
        | Primitive::Capacitor { pos, neg, .. }
        | Primitive::VSource { pos, neg, .. } => (*pos, *neg),
        Primitive::Vcvs { out, .. } => (*out, NodeId::GROUND),
        Primitive::Cnfet { drain, source, .. } => (*drain, *source),
    }
}

/// Sum of currents leaving each non-ground node (length `nodes - 1`).
/// `gmin` adds a conductance from every node to ground.
pub fn kcl_residual(circuit: &Circuit, x: &[f64], ctx: &RealContext<'_>, gmin_floor: f64, gmin: f64) -> Vec<f64> {
    let nodes = circuit.node_count();
    let mut r = vec![0.0; nodes - 1];
    let currents = element_currents(circuit, x, ctx, gmin_floor);
    for (p, i) in circuit.primitives().iter().zip(currents) {
        let (a, b) = current_terminals(p);
        if !a.is_ground() {
            r[a.0 - 1] += i;
        }
        if !b.is_ground() {
            r[b.0 - 1] -= i;
        }
    }
    if gmin != 0.0 {
        for (k, v) in r.iter_mut().enumerate() {
            *v += gmin * x[k];
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Netlist, SourceShape};

    #[test]
    fn resistor_stamp() {
        let mut sys = MnaSystem::<f64>::new(3, 0);
        sys.stamp_admittance(NodeId(1), NodeId(2), 1e-3);
        assert_eq!(sys.matrix, vec![1e-3, -1e-3, -1e-3, 1e-3]);
    }

    #[test]
    fn capacitor_open_at_dc_and_jwc_in_ac() {
        let mut n = Netlist::new("c");
        n.capacitor("C1", "a", "0", 5e-15).unwrap();
        let c = Circuit::from_netlist(&n);
        let mut sys = c.new_real_system();
        stamp_linear(&c, 0, &mut sys, &RealContext::Dc { source_scale: 1.0 });
        assert!(sys.matrix.iter().all(|v| *v == 0.0));
        let mut ac = c.new_complex_system();
        stamp_linear_ac(&c, 0, &mut ac, 2.0 * std::f64::consts::PI * 1e6);
        assert!(ac.matrix[0].re == 0.0);
        assert!((ac.matrix[0].im - 3.1416e-8).abs() < 1e-12);
    }

    #[test]
    fn divider_solution() {
        let mut n = Netlist::new("d");
        n.vsource("V1", "in", "0", SourceShape::dc(1.0)).unwrap();
        n.resistor("R1", "in", "mid", 1e3).unwrap();
        n.resistor("R2", "mid", "0", 1e3).unwrap();
        let c = Circuit::from_netlist(&n);
        let mut sys = c.new_real_system();
        let ctx = RealContext::Dc { source_scale: 1.0 };
        for i in 0..c.primitives().len() {
            stamp_linear(&c, i, &mut sys, &ctx);
        }
        let x = lu_solve(&sys).unwrap();
        let mid = c.find_node("mid").unwrap();
        assert!((node_voltage(&x, mid) - 0.5).abs() < 1e-15);
        // branch current: 0.5 mA drawn out of the source's positive terminal
        assert!((x[2] + 0.5e-3).abs() < 1e-15);
        let r = kcl_residual(&c, &x, &ctx, 0.0, 0.0);
        assert!(r.iter().all(|v| v.abs() < 1e-18));
    }

    #[test]
    fn floating_node_is_singular() {
        let mut n = Netlist::new("f");
        n.vsource("V1", "in", "0", SourceShape::dc(1.0)).unwrap();
        n.capacitor("C1", "in", "x", 1e-12).unwrap();
        let c = Circuit::from_netlist(&n);
        let mut sys = c.new_real_system();
        for i in 0..c.primitives().len() {
            stamp_linear(&c, i, &mut sys, &RealContext::Dc { source_scale: 1.0 });
        }
        assert!(matches!(lu_solve(&sys), Err(MnaError::SingularMatrix { .. })));
    }
}
