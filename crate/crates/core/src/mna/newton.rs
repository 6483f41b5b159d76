//! Damped Newton-Raphson with gmin and source-stepping homotopies.

use super::{kcl_residual, lu_solve, stamp_cnfet, stamp_linear, Circuit, MnaError, MnaSystem, RealContext};
use crate::circuit::Primitive;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    pub max_iter: usize,
    pub abs_tol_v: f64,
    pub abs_tol_i: f64,
    pub rel_tol: f64,
    /// Largest node-voltage change per update (V).
    pub max_step: f64,
    pub gmin_start: f64,
    pub gmin_steps: usize,
    pub source_steps: usize,
    /// Permanent conductance across every CNFET channel (S).
    pub gmin_floor: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            abs_tol_v: 1e-9,
            abs_tol_i: 1e-12,
            rel_tol: 1e-6,
            max_step: 0.3,
            gmin_start: 1e-3,
            gmin_steps: 12,
            source_steps: 10,
            gmin_floor: 1e-12,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("abs_tol_v", self.abs_tol_v),
            ("abs_tol_i", self.abs_tol_i),
            ("rel_tol", self.rel_tol),
            ("max_step", self.max_step),
            ("gmin_start", self.gmin_start),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.max_iter < 1 {
            return Err("max_iter must be at least 1".into());
        }
        if !(self.gmin_floor >= 0.0) {
            return Err("gmin_floor must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Linear circuit: one direct solve.
    Direct,
    Newton,
    GminStepping,
    SourceStepping,
}

/// One solver attempt, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub strategy: Strategy,
    pub iterations: usize,
    pub max_update: f64,
    pub max_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Node voltages (nodes 1..N) followed by branch currents.
    pub x: Vec<f64>,
    pub node_count: usize,
    pub iterations: usize,
    pub strategy: Strategy,
}

impl Solution {
    pub fn voltage(&self, node: crate::circuit::NodeId) -> f64 {
        super::node_voltage(&self.x, node)
    }

    pub fn branch_current(&self, branch: usize) -> f64 {
        self.x[self.node_count - 1 + branch]
    }
}

fn base_system(circuit: &Circuit, ctx: &RealContext<'_>, gmin: f64) -> MnaSystem<f64> {
    let mut sys = circuit.new_real_system();
    for i in 0..circuit.primitives().len() {
        stamp_linear(circuit, i, &mut sys, ctx);
    }
    if gmin != 0.0 {
        for k in 0..sys.node_unknowns {
            sys.add(k, k, gmin);
        }
    }
    sys
}

/// Newton iteration on one fixed context. Returns the converged unknowns and
/// the iteration count, or the failed attempt.
pub(crate) fn iterate(
    circuit: &Circuit,
    cfg: &NewtonConfig,
    guess: &[f64],
    ctx: &RealContext<'_>,
    gmin: f64,
    strategy: Strategy,
) -> Result<(Vec<f64>, usize), Attempt> {
    let base = base_system(circuit, ctx, gmin);
    let nodes = base.node_unknowns;
    let failed = |iterations, max_update, max_residual| Attempt {
        strategy,
        iterations,
        max_update,
        max_residual,
        converged: false,
    };

    if !circuit.is_nonlinear() {
        let x = lu_solve(&base).map_err(|_| failed(1, f64::INFINITY, f64::INFINITY))?;
        return Ok((x, 1));
    }

    let devices: Vec<&Primitive> = circuit
        .primitives()
        .iter()
        .filter(|p| matches!(p, Primitive::Cnfet { .. }))
        .collect();
    let mut x = guess.to_vec();
    x.resize(base.dim, 0.0);
    let (mut last_update, mut last_residual) = (f64::INFINITY, f64::INFINITY);
    for k in 1..=cfg.max_iter {
        let mut sys = base.clone();
        for d in &devices {
            stamp_cnfet(d, &mut sys, &x, cfg.gmin_floor);
        }
        let full = match lu_solve(&sys) {
            Ok(v) => v,
            Err(_) => return Err(failed(k, last_update, last_residual)),
        };
        let mut delta: Vec<f64> = full.iter().zip(&x).map(|(a, b)| a - b).collect();
        let max_dv = delta[..nodes].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let damped = max_dv > cfg.max_step;
        if damped {
            let alpha = cfg.max_step / max_dv;
            delta.iter_mut().for_each(|v| *v *= alpha);
        }
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi += di;
        }
        last_update = delta[..nodes].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if damped {
            continue;
        }
        let small_step = delta.iter().zip(&x).enumerate().all(|(i, (d, v))| {
            let abs = if i < nodes { cfg.abs_tol_v } else { cfg.abs_tol_i };
            d.abs() <= abs + cfg.rel_tol * v.abs()
        });
        if !small_step {
            continue;
        }
        let residual = kcl_residual(circuit, &x, ctx, cfg.gmin_floor, gmin);
        last_residual = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if last_residual < cfg.abs_tol_i {
            return Ok((x, k));
        }
    }
    Err(failed(cfg.max_iter, last_update, last_residual))
}

const DC: RealContext<'static> = RealContext::Dc { source_scale: 1.0 };

fn accepted(strategy: Strategy, x: Vec<f64>, iterations: usize, circuit: &Circuit) -> Solution {
    Solution {
        x,
        node_count: circuit.node_count(),
        iterations,
        strategy,
    }
}

/// Gmin stepping: a conductance from every node to ground starts at
/// `gmin_start` and shrinks by a decade per step, then is removed.
pub fn solve_with_gmin_stepping(circuit: &Circuit, cfg: &NewtonConfig, guess: &[f64]) -> Result<Solution, Attempt> {
    let mut x = guess.to_vec();
    let mut total = 0;
    let mut gmin = cfg.gmin_start;
    for _ in 0..cfg.gmin_steps {
        let (next, it) = iterate(circuit, cfg, &x, &DC, gmin, Strategy::GminStepping)?;
        x = next;
        total += it;
        gmin /= 10.0;
    }
    let (x, it) = iterate(circuit, cfg, &x, &DC, 0.0, Strategy::GminStepping)?;
    Ok(accepted(Strategy::GminStepping, x, total + it, circuit))
}

/// Source stepping: all independent sources ramp from 1/steps to full value.
pub fn solve_with_source_stepping(circuit: &Circuit, cfg: &NewtonConfig, guess: &[f64]) -> Result<Solution, Attempt> {
    let mut x = guess.to_vec();
    let mut total = 0;
    let steps = cfg.source_steps.max(1);
    for k in 1..=steps {
        let ctx = RealContext::Dc {
            source_scale: k as f64 / steps as f64,
        };
        let (next, it) = iterate(circuit, cfg, &x, &ctx, 0.0, Strategy::SourceStepping)?;
        x = next;
        total += it;
    }
    Ok(accepted(Strategy::SourceStepping, x, total, circuit))
}

/// DC operating point. Plain Newton first; on failure gmin stepping, then
/// source stepping.
pub fn newton_solve(circuit: &Circuit, cfg: &NewtonConfig, guess: Option<&[f64]>) -> Result<Solution, MnaError> {
    let zeros = vec![0.0; circuit.unknowns()];
    let guess = guess.unwrap_or(&zeros);
    let first = if circuit.is_nonlinear() {
        Strategy::Newton
    } else {
        Strategy::Direct
    };
    let mut trace = Vec::new();
    match iterate(circuit, cfg, guess, &DC, 0.0, first) {
        Ok((x, it)) => return Ok(accepted(first, x, it, circuit)),
        Err(a) => {
            if first == Strategy::Direct {
                // a linear circuit either solves directly or is singular
                let sys = base_system(circuit, &DC, 0.0);
                return Err(lu_solve(&sys).err().unwrap_or(MnaError::NoConvergence { trace: vec![a] }));
            }
            trace.push(a);
        }
    }
    match solve_with_gmin_stepping(circuit, cfg, guess) {
        Ok(s) => return Ok(s),
        Err(a) => trace.push(a),
    }
    match solve_with_source_stepping(circuit, cfg, &zeros) {
        Ok(s) => Ok(s),
        Err(a) => {
            trace.push(a);
            Err(MnaError::NoConvergence { trace })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Netlist, SourceShape};
    use crate::cnfet::{CntParams, Polarity};

    fn nfet_with_load(k_tube: f64) -> (Netlist, Circuit) {
        let mut n = Netlist::new("nfet");
        let p = CntParams {
            k_tube,
            lambda: 0.0,
            ..CntParams::default()
        };
        n.add_model("cnt", p).unwrap();
        n.vsource("VDD", "vdd", "0", SourceShape::dc(0.9)).unwrap();
        n.vsource("VG", "g", "0", SourceShape::dc(0.6)).unwrap();
        n.resistor("RD", "vdd", "d", 1e4).unwrap();
        n.cnfet("M1", "d", "g", "0", "cnt", Polarity::N, 1).unwrap();
        let c = Circuit::from_netlist(&n);
        (n, c)
    }

    #[test]
    fn linear_circuit_one_iteration() {
        let mut n = Netlist::new("lin");
        n.vsource("V1", "in", "0", SourceShape::dc(2.0)).unwrap();
        n.resistor("R1", "in", "out", 3e3).unwrap();
        n.resistor("R2", "out", "0", 1e3).unwrap();
        let c = Circuit::from_netlist(&n);
        let s = newton_solve(&c, &NewtonConfig::default(), None).unwrap();
        assert_eq!(s.iterations, 1);
        assert_eq!(s.strategy, Strategy::Direct);
        assert!((s.voltage(n.find_node("out").unwrap()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_nfet_matches_closed_form() {
        let (n, c) = nfet_with_load(1e-4);
        let s = newton_solve(&c, &NewtonConfig::default(), None).unwrap();
        let vth = CntParams::default().threshold();
        let id = 1e-4 * (0.6 - vth).powi(2);
        let vd = 0.9 - 1e4 * id;
        assert!(vd > 0.6 - vth, "saturation assumption holds");
        let got = s.voltage(n.find_node("d").unwrap());
        // Vd is within the gmin floor's influence of the closed form
        assert!((got - vd).abs() < 1e-7, "{got} vs {vd}");
        assert!((id - 1.444e-5).abs() < 2e-8);
        assert!((vd - 0.7556).abs() < 2e-4);
    }

    #[test]
    fn homotopies_reach_plain_newton_solution() {
        let (_, c) = nfet_with_load(1e-4);
        let cfg = NewtonConfig::default();
        let plain = newton_solve(&c, &cfg, None).unwrap();
        let zeros = vec![0.0; c.unknowns()];
        let gmin = solve_with_gmin_stepping(&c, &cfg, &zeros).unwrap();
        let doubled = NewtonConfig {
            gmin_start: 2e-3,
            ..cfg.clone()
        };
        let gmin2 = solve_with_gmin_stepping(&c, &doubled, &zeros).unwrap();
        let src = solve_with_source_stepping(&c, &cfg, &zeros).unwrap();
        for other in [&gmin, &gmin2, &src] {
            for (a, b) in plain.x.iter().zip(&other.x).take(c.node_count() - 1) {
                assert!((a - b).abs() < 10.0 * cfg.abs_tol_v);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(NewtonConfig::default().validate().is_ok());
        let bad = NewtonConfig {
            max_iter: 0,
            ..NewtonConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
