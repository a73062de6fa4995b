//! Full deterministic analysis of one lattice and its serialized forms.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::girsanov::{change_kernel, change_kernel_with, Frame, FreeEnergyContext, MinimizerResult};
use crate::harmonic::{albanese, flow_voltage_sum, modified_harmonic_realization, AlbaneseMetric};
use crate::lattice::{CrystalLattice, TransitionKernel, VertexId};
use crate::stationary::{homological_direction, is_symmetric, stationary_measure};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DartRecord {
    pub id: usize,
    pub name: String,
    pub origin: String,
    pub terminus: String,
    pub voltage: Vec<i64>,
    pub p: f64,
    /// Probability as written in the input, when it was not a plain number.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeRecord {
    pub name: String,
    pub rank: usize,
    pub vertices: Vec<String>,
    pub darts: Vec<DartRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexValue {
    pub vertex: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexVector {
    pub vertex: String,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DartValue {
    pub dart: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DartVector {
    pub dart: String,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub tree: Vec<String>,
    pub cotree: Vec<String>,
    pub cycles: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub gram: Vec<Vec<f64>>,
    pub metric: Vec<Vec<f64>>,
    pub to_orthonormal: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerRecord {
    pub vertex: String,
    pub lambda: Vec<f64>,
    pub f_min: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyRecord {
    pub frame: Frame,
    pub vertices: Vec<MinimizerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangedRecord {
    pub p: Vec<DartValue>,
    pub stationary: Vec<VertexValue>,
    pub asymptotic_direction: Vec<f64>,
    pub harmonicity_residual: f64,
    pub albanese: MetricRecord,
    pub m_p: f64,
    pub exp_m_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: u32,
    pub lattice: LatticeRecord,
    pub stationary: Vec<VertexValue>,
    pub stationary_residual: f64,
    pub symmetric: bool,
    pub edge_flow: Vec<DartValue>,
    pub cycle_basis: CycleRecord,
    pub homology_coords: Vec<f64>,
    pub asymptotic_direction: Vec<f64>,
    pub realization_base: String,
    pub positions: Vec<VertexVector>,
    pub increments: Vec<DartVector>,
    pub harmonicity_residual: f64,
    pub albanese: MetricRecord,
    pub free_energy: Vec<FreeEnergyRecord>,
    pub changed: ChangedRecord,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn metric_record(a: &AlbaneseMetric) -> MetricRecord {
    MetricRecord {
        gram: matrix_rows(&a.gram),
        metric: matrix_rows(&a.metric),
        to_orthonormal: matrix_rows(&a.to_orthonormal),
    }
}

fn free_energy_record(lattice: &CrystalLattice, r: &MinimizerResult) -> FreeEnergyRecord {
    FreeEnergyRecord {
        frame: r.frame,
        vertices: r
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| MinimizerRecord {
                vertex: lattice.graph().vertex_name(VertexId(i)).to_string(),
                lambda: v.lambda.clone(),
                f_min: v.f_min,
                iterations: v.iterations,
                gradient_norm: v.gradient_norm,
            })
            .collect(),
    }
}

/// Runs every deterministic stage with the first vertex as base point.
pub fn analyze(name: &str, lattice: &CrystalLattice, kernel: &TransitionKernel) -> Result<AnalysisReport> {
    let graph = lattice.graph();
    let vname = |x: VertexId| graph.vertex_name(x).to_string();
    let dname = |e: crate::lattice::DartId| graph.dart(e).name.clone();
    let m = stationary_measure(graph, kernel)?;
    let basis = lattice.cycle_basis();
    let dir = homological_direction(lattice, kernel, &m, &basis);
    let base = VertexId(0);
    let realization = modified_harmonic_realization(lattice, kernel, &m, base)?;
    let metric = albanese(lattice, kernel, &m, &realization)?;
    let changed = change_kernel(lattice, kernel, &m, &realization)?;
    let ortho = FreeEnergyContext::new(lattice, kernel, &realization, Frame::Orthonormal, Some(&metric))?;
    let ortho_min = change_kernel_with(lattice, kernel, &m, &realization, &ortho)?.minimizers;

    let darts = graph
        .darts()
        .iter()
        .map(|d| DartRecord {
            id: d.id.index(),
            name: d.name.clone(),
            origin: vname(d.origin),
            terminus: vname(d.terminus),
            voltage: lattice.voltage(d.id).to_vec(),
            p: kernel.prob(d.id),
            p_source: kernel
                .source()
                .map(|s| s[d.id.index()].clone())
                .filter(|s| s.parse::<f64>().is_err()),
        })
        .collect();
    let per_vertex = |w: &[f64]| {
        graph
            .vertices()
            .map(|x| VertexValue {
                vertex: vname(x),
                value: w[x.index()],
            })
            .collect::<Vec<_>>()
    };
    let per_dart = |w: &[f64]| {
        graph
            .darts()
            .iter()
            .map(|d| DartValue {
                dart: d.name.clone(),
                value: w[d.id.index()],
            })
            .collect::<Vec<_>>()
    };
    let changed_flow = changed.stationary.edge_flow(graph, &changed.kernel);
    let changed_direction = flow_voltage_sum(lattice, &changed_flow);
    let zero = vec![0.0; lattice.rank()];

    Ok(AnalysisReport {
        schema: SCHEMA_VERSION,
        lattice: LatticeRecord {
            name: name.to_string(),
            rank: lattice.rank(),
            vertices: graph.vertex_names().to_vec(),
            darts,
        },
        stationary: per_vertex(&m.weight),
        stationary_residual: m.residual(graph, kernel),
        symmetric: is_symmetric(graph, kernel, &m),
        edge_flow: per_dart(&dir.edge_flow),
        cycle_basis: CycleRecord {
            tree: basis.tree.iter().map(|&e| dname(e)).collect(),
            cotree: basis.cotree.iter().map(|&e| dname(e)).collect(),
            cycles: basis
                .cycles
                .iter()
                .map(|c| c.iter().map(|&e| dname(e)).collect())
                .collect(),
        },
        homology_coords: dir.homology_coords.clone(),
        asymptotic_direction: dir.asymptotic.clone(),
        realization_base: vname(base),
        positions: graph
            .vertices()
            .map(|x| VertexVector {
                vertex: vname(x),
                value: realization.position[x.index()].clone(),
            })
            .collect(),
        increments: graph
            .darts()
            .iter()
            .map(|d| DartVector {
                dart: d.name.clone(),
                value: realization.increment(d.id).to_vec(),
            })
            .collect(),
        harmonicity_residual: realization.harmonicity_residual(graph, kernel, &dir.asymptotic),
        albanese: metric_record(&metric),
        free_energy: vec![
            free_energy_record(lattice, &changed.minimizers),
            free_energy_record(lattice, &ortho_min),
        ],
        changed: ChangedRecord {
            p: per_dart(changed.kernel.probs()),
            stationary: per_vertex(&changed.stationary.weight),
            asymptotic_direction: changed_direction,
            harmonicity_residual: realization.harmonicity_residual(graph, &changed.kernel, &zero),
            albanese: metric_record(&changed.albanese),
            m_p: changed.m_p,
            exp_m_p: changed.m_p.exp(),
        },
    })
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One `path = value` line per leaf, floats with 17 significant digits.
    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut out = String::new();
        flatten(&value, String::new(), &mut out);
        out
    }
}

fn flatten(v: &Value, path: String, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                flatten(child, p, out);
            }
        }
        Value::Array(items) => {
            if items.is_empty() {
                let _ = writeln!(out, "{path} = []");
            }
            for (i, child) in items.iter().enumerate() {
                flatten(child, format!("{path}[{i}]"), out);
            }
        }
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = writeln!(out, "{path} = {i}");
            } else {
                let _ = writeln!(out, "{path} = {:.16e}", n.as_f64().expect("finite"));
            }
        }
        Value::String(s) => {
            let _ = writeln!(out, "{path} = {s}");
        }
        Value::Bool(b) => {
            let _ = writeln!(out, "{path} = {b}");
        }
        Value::Null => {
            let _ = writeln!(out, "{path} = null");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{builtin, Builtin};

    #[test]
    fn hexagonal_report_fields() {
        let (l, k) = builtin(Builtin::Hexagonal).unwrap();
        let r = analyze("hexagonal", &l, &k).unwrap();
        assert_eq!(r.schema, 1);
        assert_eq!(r.lattice.darts.len(), 6);
        assert_eq!(r.lattice.darts[1].name, "~e1");
        assert_eq!(r.lattice.darts[0].p_source.as_deref(), Some("1/2"));
        assert_eq!(r.cycle_basis.tree, vec!["e2"]);
        assert!(!r.symmetric);
        assert_eq!(r.free_energy.len(), 2);
        assert!((r.changed.p[0].value - 1.0 / 3.0).abs() < 1e-12);
        let back: AnalysisReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn text_lines_carry_full_precision() {
        let (l, k) = builtin(Builtin::Dice).unwrap();
        let r = analyze("dice", &l, &k).unwrap();
        let text = r.to_text();
        let line = text.lines().find(|s| s.starts_with("changed.m_p = ")).unwrap();
        let v: f64 = line.trim_start_matches("changed.m_p = ").parse().unwrap();
        assert_eq!(v, r.changed.m_p);
        assert!(text.contains("schema = 1\n"));
    }
}
