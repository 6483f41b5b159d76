use super::{prepare, probe_value, resolve_probes, AnalysisError, Probe};
use crate::circuit::Netlist;
use crate::mna::{newton_solve, Circuit, MnaError, NewtonConfig, Solution};

/// Linear sweep of one source's DC level.
///
/// `linked` sources follow the swept value scaled by their factor, e.g. an
/// inverted replica with factor −1.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub source: String,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub linked: Vec<(String, f64)>,
}

impl SweepSpec {
    pub fn new(source: &str, start: f64, stop: f64, step: f64) -> Self {
        Self {
            source: source.into(),
            start,
            stop,
            step,
            linked: Vec::new(),
        }
    }

    pub fn link(mut self, source: &str, scale: f64) -> Self {
        self.linked.push((source.into(), scale));
        self
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.step > 0.0) || !(self.start <= self.stop) {
            return Err(AnalysisError::InvalidSpec(format!(
                "sweep of {} needs step > 0 and start <= stop",
                self.source
            )));
        }
        Ok(())
    }

    /// Grid values `start + k·step` up to `stop` (inclusive within 1e-9 steps).
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.start + k as f64 * self.step).collect()
    }

    fn apply(&self, circuit: &mut Circuit, value: f64) -> Result<(), AnalysisError> {
        if !circuit.set_source_dc(&self.source, value) {
            return Err(AnalysisError::UnknownSource(self.source.clone()));
        }
        for (name, scale) in &self.linked {
            if !circuit.set_source_dc(name, scale * value) {
                return Err(AnalysisError::UnknownSource(name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub outer: f64,
    pub inner: Option<f64>,
    pub error: MnaError,
}

/// Probe values over the sweep grid; `data[inner][outer][probe]`.
/// Points that failed to converge hold NaN and appear in `failures`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub outer_values: Vec<f64>,
    pub inner_values: Option<Vec<f64>>,
    pub probes: Vec<Probe>,
    pub data: Vec<Vec<Vec<f64>>>,
    pub failures: Vec<SweepFailure>,
}

/// Nested sweep with solution continuation; `visit` sees every converged
/// point as `(inner, outer, circuit, solution)`.
pub fn dc_sweep_with<F>(
    netlist: &Netlist,
    outer: &SweepSpec,
    inner: Option<&SweepSpec>,
    cfg: &NewtonConfig,
    mut visit: F,
) -> Result<(Vec<f64>, Option<Vec<f64>>, Vec<SweepFailure>), AnalysisError>
where
    F: FnMut(Option<f64>, f64, &Circuit, Option<&Solution>),
{
    outer.validate()?;
    if let Some(i) = inner {
        i.validate()?;
    }
    let mut circuit = prepare(netlist)?;
    let outer_values = outer.values();
    let inner_values = inner.map(SweepSpec::values);
    let rows: Vec<Option<f64>> = match &inner_values {
        Some(v) => v.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let mut failures = Vec::new();
    let mut row_seed: Option<Vec<f64>> = None;
    for row in rows {
        if let (Some(spec), Some(v)) = (inner, row) {
            spec.apply(&mut circuit, v)?;
        }
        let mut seed = row_seed.clone();
        for (k, &ov) in outer_values.iter().enumerate() {
            outer.apply(&mut circuit, ov)?;
            match newton_solve(&circuit, cfg, seed.as_deref()) {
                Ok(sol) => {
                    visit(row, ov, &circuit, Some(&sol));
                    if k == 0 {
                        row_seed = Some(sol.x.clone());
                    }
                    seed = Some(sol.x);
                }
                Err(error) => {
                    visit(row, ov, &circuit, None);
                    failures.push(SweepFailure {
                        outer: ov,
                        inner: row,
                        error,
                    });
                }
            }
        }
    }
    Ok((outer_values, inner_values, failures))
}

/// DC transfer curves: for each inner value, the outer source is swept with
/// the previous point seeding Newton.
pub fn dc_sweep(
    netlist: &Netlist,
    outer: &SweepSpec,
    inner: Option<&SweepSpec>,
    probes: &[Probe],
    cfg: &NewtonConfig,
) -> Result<SweepResult, AnalysisError> {
    let resolved = resolve_probes(&prepare(netlist)?, probes)?;
    let mut data: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut current_row: Option<Option<f64>> = None;
    let (outer_values, inner_values, failures) = dc_sweep_with(netlist, outer, inner, cfg, |row, _, _, sol| {
        if current_row != Some(row) {
            data.push(Vec::new());
            current_row = Some(row);
        }
        let values = match sol {
            Some(s) => resolved.iter().map(|&p| probe_value(&s.x, p)).collect(),
            None => vec![f64::NAN; resolved.len()],
        };
        data.last_mut().unwrap().push(values);
    })?;
    Ok(SweepResult {
        outer_values,
        inner_values,
        probes: probes.to_vec(),
        data,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::operating_point;
    use crate::circuit::SourceShape;

    fn divider() -> Netlist {
        let mut n = Netlist::new("d");
        n.vsource("V1", "in", "0", SourceShape::dc(0.3)).unwrap();
        n.resistor("R1", "in", "mid", 1e3).unwrap();
        n.resistor("R2", "mid", "0", 1e3).unwrap();
        n
    }

    #[test]
    fn grid_values() {
        let s = SweepSpec::new("V", -0.4, 0.4, 0.05);
        let v = s.values();
        assert_eq!(v.len(), 17);
        assert!((v[16] - 0.4).abs() < 1e-12);
        assert_eq!(SweepSpec::new("V", 0.1, 0.1, 0.01).values(), vec![0.1]);
    }

    #[test]
    fn divider_slope() {
        let n = divider();
        let r = dc_sweep(
            &n,
            &SweepSpec::new("V1", 0.0, 1.0, 0.1),
            None,
            &[Probe::node("mid")],
            &NewtonConfig::default(),
        )
        .unwrap();
        for (v, row) in r.outer_values.iter().zip(&r.data[0]) {
            assert!((row[0] - 0.5 * v).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_equals_op() {
        let n = divider();
        let r = dc_sweep(
            &n,
            &SweepSpec::new("V1", 0.3, 0.3, 0.1),
            None,
            &[Probe::node("mid")],
            &NewtonConfig::default(),
        )
        .unwrap();
        let op = operating_point(&n, &NewtonConfig::default()).unwrap();
        assert_eq!(r.data[0].len(), 1);
        assert!((r.data[0][0][0] - op.voltage("mid").unwrap()).abs() < 1e-15);
    }

    #[test]
    fn unknown_source() {
        let n = divider();
        let e = dc_sweep(&n, &SweepSpec::new("VX", 0.0, 1.0, 0.5), None, &[], &NewtonConfig::default());
        assert!(matches!(e, Err(AnalysisError::UnknownSource(_))));
        let e = dc_sweep(&n, &SweepSpec::new("V1", 1.0, 0.0, 0.5), None, &[], &NewtonConfig::default());
        assert!(matches!(e, Err(AnalysisError::InvalidSpec(_))));
    }
}
