//! Synthetic measurements: forward solves on a fine data mesh sampled at the
//! coarse boundary nodes, and the uniform noise model.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dg::TraceLayout;
use crate::error::{Error, Result};
use crate::geometry::{FaultSegment, Point2, Vec2};
use crate::mesh::{FaultMesh, SideClass, SquareEdge};
use crate::problem::Model;
use crate::slip::SlipField;

/// Which traction-free sides carry measurements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acquisition {
    /// Left, top and right sides.
    AllExposed,
    /// `y = 1` only.
    TopOnly,
}

impl Acquisition {
    /// Edges in path order: up the left side, along the top, down the right.
    pub fn edges(self) -> &'static [SquareEdge] {
        match self {
            Acquisition::AllExposed => &[SquareEdge::Left, SquareEdge::Top, SquareEdge::Right],
            Acquisition::TopOnly => &[SquareEdge::Top],
        }
    }
}

/// Provenance of a measurement.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMeta {
    pub true_fault: Option<[[f64; 2]; 2]>,
    pub h_data: Option<f64>,
    pub seed: Option<u64>,
    pub a: f64,
    pub noise_level: f64,
}

/// Displacements at the coarse boundary nodes of the acquisition sides.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub acquisition: Acquisition,
    /// Nodes in path order, corners once.
    pub nodes: Vec<Point2>,
    pub values: Vec<Vec2>,
    /// Slip of the source that produced the data.
    pub slip: SlipField,
    pub meta: MeasurementMeta,
}

/// Position along a square edge from its counterclockwise start corner.
fn edge_coord(e: SquareEdge, p: Point2) -> f64 {
    let (a, b) = e.endpoints();
    (p - a).dot(b - a) / 4.0
}

/// Coarse lattice nodes on the acquisition sides, in path order.
pub fn acquisition_nodes(mesh: &FaultMesh, acquisition: Acquisition) -> Vec<Point2> {
    let mut nodes: Vec<Point2> = Vec::new();
    for &e in acquisition.edges() {
        // edges run counterclockwise; the path runs clockwise
        for v in mesh.boundary_nodes(e).into_iter().rev() {
            let p = mesh.coarse.vertices[v];
            if nodes.last() != Some(&p) {
                nodes.push(p);
            }
        }
    }
    nodes
}

impl Measurement {
    pub fn new(acquisition: Acquisition, nodes: Vec<Point2>, values: Vec<Vec2>, slip: SlipField) -> Result<Self> {
        if nodes.len() != values.len() || nodes.len() < 2 {
            return Err(Error::LayoutMismatch(format!("{} nodes and {} values", nodes.len(), values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::LayoutMismatch("non-finite sample".into()));
        }
        for &e in acquisition.edges() {
            if nodes.iter().filter(|p| e.contains(**p)).count() < 2 {
                return Err(Error::LayoutMismatch(format!("fewer than two nodes on {e:?}")));
            }
        }
        Ok(Measurement { acquisition, nodes, values, slip, meta: MeasurementMeta::default() })
    }

    /// Linear interpolation of the nodal data along the side containing `x`.
    pub fn interpolate(&self, x: Point2) -> Result<Vec2> {
        for &e in self.acquisition.edges() {
            if !e.contains(x) {
                continue;
            }
            let s = edge_coord(e, x);
            let mut below: Option<(f64, Vec2)> = None;
            let mut above: Option<(f64, Vec2)> = None;
            for (p, v) in self.nodes.iter().zip(&self.values) {
                if !e.contains(*p) {
                    continue;
                }
                let sp = edge_coord(e, *p);
                if sp <= s && below.is_none_or(|(b, _)| sp > b) {
                    below = Some((sp, *v));
                }
                if sp >= s && above.is_none_or(|(a, _)| sp < a) {
                    above = Some((sp, *v));
                }
            }
            if let (Some((s0, v0)), Some((s1, v1))) = (below, above) {
                if s1 == s0 {
                    return Ok(v0);
                }
                let t = (s - s0) / (s1 - s0);
                return Ok(Vec2::lerp2(v0, 1.0 - t, v1, t));
            }
        }
        Err(Error::LayoutMismatch(format!("point ({}, {}) is not on the acquisition sides", x.x, x.y)))
    }

    /// Data interpolated at every point of `layout`.
    pub fn sample(&self, layout: &TraceLayout) -> Result<Vec<Vec2>> {
        layout.points.iter().map(|p| self.interpolate(p.2)).collect()
    }

    /// Euclidean norm of the nodal data (both components).
    pub fn nodal_norm(&self) -> f64 {
        self.values.iter().map(|v| v.dot(*v)).sum::<f64>().sqrt()
    }
}

/// Solves the forward problem for `fault` on the data mesh of `model` and
/// samples the boundary trace at the coarse nodes of the acquisition sides.
///
/// At a node the trace is the mean of the one-sided traces of the
/// acquisition sides meeting there.
pub fn make_measurement(model: &Model, fault: &FaultSegment, acquisition: Acquisition) -> Result<Measurement> {
    let solver = model.solver(model.build_mesh(fault)?)?;
    let disc = &solver.disc;
    let u = solver.forward(&fault.slip)?;
    let nodes = acquisition_nodes(&disc.mesh, acquisition);
    let mesh = &disc.space.mesh;
    let mut values = Vec::with_capacity(nodes.len());
    for p in &nodes {
        let mut sum = Vec2::ZERO;
        let mut count = 0.0;
        for side in mesh.sides.iter().filter(|s| s.class == SideClass::Neumann) {
            if !side.edge.is_some_and(|e| acquisition.edges().contains(&e)) {
                continue;
            }
            if side.vertices.iter().any(|&v| mesh.vertices[v] == *p) {
                sum += disc.space.value(&u, side.plus.triangle, *p);
                count += 1.0;
            }
        }
        if count == 0.0 {
            return Err(Error::LayoutMismatch(format!("node ({}, {}) has no acquisition side", p.x, p.y)));
        }
        values.push(sum * (1.0 / count));
    }
    let mut m = Measurement::new(acquisition, nodes, values, fault.slip.clone())?;
    m.meta.true_fault = Some([fault.p0.to_array(), fault.p1.to_array()]);
    m.meta.h_data = Some(model.mesh.h_target);
    Ok(m)
}

/// Adds `eps * |u_m|` to every nodal component, `eps ~ U(-a, a)` drawn
/// independently per node and component from a seeded ChaCha stream.
/// `|u_m|` is the Euclidean norm of the clean nodal data.
pub fn add_noise(m: &Measurement, a: f64, seed: u64) -> Measurement {
    assert!(a >= 0.0, "noise half-width must be nonnegative");
    let mut out = m.clone();
    out.meta.seed = Some(seed);
    out.meta.a = a;
    if a == 0.0 {
        out.meta.noise_level = 0.0;
        return out;
    }
    let scale = m.nodal_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.values.iter_mut() {
        v.x += rng.gen_range(-a..a) * scale;
        v.y += rng.gen_range(-a..a) * scale;
    }
    out.meta.noise_level = noise_level(&out, m).unwrap_or(0.0);
    out
}

/// `|noisy - clean| / |clean|` in the nodal Euclidean norm.
pub fn noise_level(noisy: &Measurement, clean: &Measurement) -> Result<f64> {
    if noisy.nodes != clean.nodes {
        return Err(Error::LayoutMismatch("measurements have different nodes".into()));
    }
    let norm = clean.nodal_norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let diff: f64 = noisy.values.iter().zip(&clean.values).map(|(a, b)| (*a - *b).dot(*a - *b)).sum();
    Ok(diff.sqrt() / norm)
}

/// Sidecar of a measurement CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub acquisition: Acquisition,
    pub slip: SlipField,
    #[serde(flatten)]
    pub meta: MeasurementMeta,
}

#[derive(Deserialize)]
struct Row {
    #[allow(dead_code)]
    node_id: usize,
    x: f64,
    y: f64,
    ux: f64,
    uy: f64,
}

/// Path of the JSON sidecar of a measurement CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

impl Measurement {
    /// CSV with columns `node_id, x, y, ux, uy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node_id,x,y,ux,uy\n");
        for (i, (p, v)) in self.nodes.iter().zip(&self.values).enumerate() {
            s.push_str(&format!("{i},{},{},{},{}\n", p.x, p.y, v.x, v.y));
        }
        s
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar { acquisition: self.acquisition, slip: self.slip.clone(), meta: self.meta.clone() }
    }

    /// Reads a measurement CSV and its sidecar.
    pub fn read(csv_path: &Path) -> Result<Measurement> {
        let side = sidecar_path(csv_path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::io(&side, e))?;
        let mut reader = csv::Reader::from_path(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let (mut nodes, mut values) = (Vec::new(), Vec::new());
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(|e| Error::io(csv_path, e))?;
            nodes.push(Point2::new(row.x, row.y));
            values.push(Vec2::new(row.ux, row.uy));
        }
        let mut m = Measurement::new(sidecar.acquisition, nodes, values, sidecar.slip)?;
        m.meta = sidecar.meta;
        Ok(m)
    }
}
