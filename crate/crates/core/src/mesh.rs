//! Fault-conforming triangulations of the square.
//!
//! A mesh is built in two levels. The coarse level is a constrained Delaunay
//! triangulation of a fixed, fault-independent triangular lattice (minus the
//! lattice points close to the fault) together with equally spaced points on
//! the fault, which is inserted as a chain of constraint edges. The fine
//! level subdivides every coarse triangle uniformly into `n^2` similar
//! triangles, so fine and coarse meshes are nested and the fault is tiled by
//! fine sides.
//!
//! Moving a fault endpoint moves only the fault nodes of the coarse mesh and
//! the fine nodes inside coarse triangles touching the fault; the induced
//! node motion is the coarse piecewise-linear field returned by
//! [`FaultMesh::vertex_field`].

use std::collections::HashMap;
use std::io::Write;

use spade::{ConstrainedDelaunayTriangulation, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::{boundary_distance, point_segment_distance, FaultSegment, Point2, Vec2};

/// Tolerance for "lies on a side of the square".
const ON_BOUNDARY: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SideClass {
    Interior,
    Dirichlet,
    Neumann,
    Fault,
}

impl SideClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SideClass::Interior => "INTERIOR",
            SideClass::Dirichlet => "DIRICHLET",
            SideClass::Neumann => "NEUMANN",
            SideClass::Fault => "FAULT",
        }
    }
}

/// The four sides of the square domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SquareEdge {
    Bottom,
    Right,
    Top,
    Left,
}

impl SquareEdge {
    pub const ALL: [SquareEdge; 4] = [SquareEdge::Bottom, SquareEdge::Right, SquareEdge::Top, SquareEdge::Left];

    pub fn of_segment(a: Point2, b: Point2) -> Option<SquareEdge> {
        let on = |v: f64, c: f64| (v - c).abs() <= ON_BOUNDARY;
        if on(a.y, -1.0) && on(b.y, -1.0) {
            Some(SquareEdge::Bottom)
        } else if on(a.x, 1.0) && on(b.x, 1.0) {
            Some(SquareEdge::Right)
        } else if on(a.y, 1.0) && on(b.y, 1.0) {
            Some(SquareEdge::Top)
        } else if on(a.x, -1.0) && on(b.x, -1.0) {
            Some(SquareEdge::Left)
        } else {
            None
        }
    }

    pub fn contains(self, p: Point2) -> bool {
        let on = |v: f64, c: f64| (v - c).abs() <= ON_BOUNDARY;
        match self {
            SquareEdge::Bottom => on(p.y, -1.0),
            SquareEdge::Right => on(p.x, 1.0),
            SquareEdge::Top => on(p.y, 1.0),
            SquareEdge::Left => on(p.x, -1.0),
        }
    }

    /// Start and end corner, counterclockwise around the square.
    pub fn endpoints(self) -> (Point2, Point2) {
        match self {
            SquareEdge::Bottom => (Point2::new(-1.0, -1.0), Point2::new(1.0, -1.0)),
            SquareEdge::Right => (Point2::new(1.0, -1.0), Point2::new(1.0, 1.0)),
            SquareEdge::Top => (Point2::new(1.0, 1.0), Point2::new(-1.0, 1.0)),
            SquareEdge::Left => (Point2::new(-1.0, 1.0), Point2::new(-1.0, -1.0)),
        }
    }
}

/// A triangle adjacent to a side, with the side normal pointing out of it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adjacent {
    pub triangle: usize,
    pub normal: Vec2,
}

/// An element side.
///
/// For FAULT sides `plus` is the triangle on the positive side of the fault
/// (the side its normal points into), so `plus.normal` is minus the fault
/// normal.
#[derive(Clone, Debug, PartialEq)]
pub struct Side {
    pub vertices: [usize; 2],
    pub class: SideClass,
    pub edge: Option<SquareEdge>,
    pub plus: Adjacent,
    pub minus: Option<Adjacent>,
}

/// A conforming triangulation with classified sides.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point2>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub sides: Vec<Side>,
    /// Side indices of each triangle, opposite to local vertex 2, 0, 1.
    pub triangle_sides: Vec<[usize; 3]>,
    /// Maximum element diameter.
    pub h: f64,
    pub fault_vertex_ids: [usize; 2],
}

/// Side counts per class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SideCounts {
    pub interior: usize,
    pub dirichlet: usize,
    pub neumann: usize,
    pub fault: usize,
    pub total: usize,
}

impl TriMesh {
    /// Builds sides and adjacency. `fault_edges` lists the vertex pairs of
    /// the sides that lie on the fault; `fault_normal` orients them.
    pub fn from_parts(
        vertices: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        fault_edges: &[[usize; 2]],
        fault_normal: Vec2,
        fault_vertex_ids: [usize; 2],
    ) -> Result<TriMesh> {
        let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
        let fault_set: std::collections::HashSet<(usize, usize)> =
            fault_edges.iter().map(|e| key(e[0], e[1])).collect();
        let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut sides: Vec<Side> = Vec::with_capacity(triangles.len() * 2);
        let mut triangle_sides = Vec::with_capacity(triangles.len());
        let mut h: f64 = 0.0;
        for (t, tri) in triangles.iter().enumerate() {
            let p = tri.map(|v| vertices[v]);
            if (p[1] - p[0]).cross(p[2] - p[0]) <= 0.0 {
                return Err(Error::InconsistentTopology(format!("triangle {t} is not counterclockwise")));
            }
            let mut ts = [0; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let d = vertices[b] - vertices[a];
                let len = d.norm();
                h = h.max(len);
                let normal = Vec2::new(d.y / len, -d.x / len);
                let adj = Adjacent { triangle: t, normal };
                let s = match index.get(&key(a, b)) {
                    Some(&s) => {
                        if sides[s].minus.is_some() {
                            return Err(Error::InconsistentTopology(format!("side {a}-{b} has three triangles")));
                        }
                        sides[s].minus = Some(adj);
                        s
                    }
                    None => {
                        index.insert(key(a, b), sides.len());
                        sides.push(Side {
                            vertices: [a.min(b), a.max(b)],
                            class: SideClass::Interior,
                            edge: None,
                            plus: adj,
                            minus: None,
                        });
                        sides.len() - 1
                    }
                };
                ts[k] = s;
            }
            triangle_sides.push(ts);
        }
        for (s, side) in sides.iter_mut().enumerate() {
            let [a, b] = side.vertices;
            let on_fault = fault_set.contains(&(a, b));
            match side.minus {
                None => {
                    if on_fault {
                        return Err(Error::InconsistentTopology(format!("fault side {s} is on the boundary")));
                    }
                    let edge = SquareEdge::of_segment(vertices[a], vertices[b]).ok_or_else(|| {
                        Error::InconsistentTopology(format!("side {s} has one triangle but is interior"))
                    })?;
                    side.edge = Some(edge);
                    side.class = if edge == SquareEdge::Bottom { SideClass::Dirichlet } else { SideClass::Neumann };
                }
                Some(minus) => {
                    if on_fault {
                        side.class = SideClass::Fault;
                        // plus is the triangle the fault normal points into
                        if side.plus.normal.dot(fault_normal) > 0.0 {
                            side.minus = Some(side.plus);
                            side.plus = minus;
                        }
                    }
                }
            }
        }
        if fault_set.len() != sides.iter().filter(|s| s.class == SideClass::Fault).count() {
            return Err(Error::InconsistentTopology("fault edge missing from the triangulation".into()));
        }
        Ok(TriMesh { vertices, triangles, sides, triangle_sides, h, fault_vertex_ids })
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point2; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        let p = self.triangle_points(t);
        0.5 * (p[1] - p[0]).cross(p[2] - p[0])
    }

    pub fn side_length(&self, s: usize) -> f64 {
        let [a, b] = self.sides[s].vertices;
        self.vertices[a].dist(self.vertices[b])
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        (0..self.n_triangles()).map(|t| min_angle(self.triangle_points(t))).fold(180.0, f64::min)
    }

    /// Same triangles and side classes.
    pub fn same_topology(&self, other: &TriMesh) -> bool {
        self.triangles == other.triangles
            && self.sides.len() == other.sides.len()
            && self.sides.iter().zip(&other.sides).all(|(a, b)| a.vertices == b.vertices && a.class == b.class)
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        boundary_distance(self.vertices[v]) <= ON_BOUNDARY
    }

    /// Writes the plain-text mesh format (VERTICES, TRIANGLES, SIDES).
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "VERTICES {}", self.vertices.len())?;
        for (i, p) in self.vertices.iter().enumerate() {
            writeln!(w, "{i} {:.16e} {:.16e}", p.x, p.y)?;
        }
        writeln!(w, "TRIANGLES {}", self.triangles.len())?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{i} {} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "SIDES {}", self.sides.len())?;
        for (i, s) in self.sides.iter().enumerate() {
            writeln!(w, "{i} {} {} {}", s.vertices[0], s.vertices[1], s.class.as_str())?;
        }
        Ok(())
    }
}

fn min_angle(p: [Point2; 3]) -> f64 {
    let mut m = 180.0f64;
    for k in 0..3 {
        let a = p[(k + 1) % 3] - p[k];
        let b = p[(k + 2) % 3] - p[k];
        let ang = a.cross(b).abs().atan2(a.dot(b)).to_degrees();
        m = m.min(ang);
    }
    m
}

/// Checks side classes against adjacency and returns the counts.
pub fn classify_sides(mesh: &TriMesh) -> Result<SideCounts> {
    let mut c = SideCounts { total: mesh.sides.len(), ..Default::default() };
    for (s, side) in mesh.sides.iter().enumerate() {
        let two = side.minus.is_some();
        let ok = match side.class {
            SideClass::Interior => {
                c.interior += 1;
                two
            }
            SideClass::Fault => {
                c.fault += 1;
                two
            }
            SideClass::Dirichlet => {
                c.dirichlet += 1;
                !two && side.edge == Some(SquareEdge::Bottom)
            }
            SideClass::Neumann => {
                c.neumann += 1;
                !two && matches!(side.edge, Some(e) if e != SquareEdge::Bottom)
            }
        };
        if !ok {
            return Err(Error::InconsistentTopology(format!(
                "side {s} of class {} has incompatible adjacency",
                side.class.as_str()
            )));
        }
    }
    Ok(c)
}

/// Mesh construction parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshParams {
    /// Target diameter of the fine triangles.
    pub h_target: f64,
    /// Lattice spacing of the coarse mesh (raised to `h_target` if smaller).
    pub h_coarse: f64,
    pub delta_min: f64,
    pub angle_floor_deg: f64,
    /// Lattice points closer than this multiple of the spacing to the fault
    /// are dropped.
    pub exclusion: f64,
}

impl MeshParams {
    pub fn new(h_target: f64) -> Self {
        MeshParams { h_target, ..Default::default() }
    }

    pub fn spacing(&self) -> f64 {
        self.h_coarse.max(self.h_target)
    }
}

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams {
            h_target: 0.05,
            h_coarse: 0.1,
            delta_min: crate::geometry::DEFAULT_DELTA_MIN,
            angle_floor_deg: 15.0,
            exclusion: 0.55,
        }
    }
}

/// How a fine vertex is obtained from coarse vertices.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Origin {
    Vertex(usize),
    /// `k / n` of the way from the first to the second coarse vertex.
    Edge(usize, usize, usize),
    /// Lattice node `(i, j)` of a coarse triangle.
    Interior(usize, usize, usize),
}

/// A coarse mesh and its uniform refinement, both conforming to the fault.
#[derive(Clone, Debug, PartialEq)]
pub struct FaultMesh {
    pub params: MeshParams,
    pub fault: FaultSegment,
    pub coarse: TriMesh,
    pub fine: TriMesh,
    /// Subdivisions per coarse edge.
    pub subdivisions: usize,
    /// Coarse triangle containing each fine triangle.
    pub fine_parent: Vec<usize>,
    /// Arclength fraction of each coarse fault node.
    coarse_fraction: Vec<Option<f64>>,
    origins: Vec<Origin>,
}

/// Fine mesh for `fault` with default parameters and target size `h_target`.
pub fn build_mesh(fault: &FaultSegment, h_target: f64) -> Result<TriMesh> {
    if !(h_target > 0.0 && h_target <= 0.5) {
        return Err(Error::config("h_target", format!("must be in (0, 0.5], got {h_target}")));
    }
    Ok(FaultMesh::build(fault, &MeshParams::new(h_target))?.fine)
}

/// Rebuilds the mesh around a moved fault; the slip follows the arclength
/// fraction.
pub fn move_fault(
    fault: &FaultSegment,
    new_p0: Point2,
    new_p1: Point2,
    h_target: f64,
) -> Result<(FaultSegment, TriMesh)> {
    let moved = fault.with_vertices(new_p0, new_p1);
    let mesh = build_mesh(&moved, h_target)?;
    Ok((moved, mesh))
}

/// Fault-independent coarse lattice: rows of a triangular lattice with both
/// square corners of every row included.
fn lattice(spacing: f64) -> Vec<Point2> {
    let nx = ((2.0 / spacing - 1e-9).ceil() as usize).max(2);
    let ny = ((2.0 / (spacing * 0.75f64.sqrt()) - 1e-9).ceil() as usize).max(2);
    let mut pts = Vec::new();
    for j in 0..=ny {
        let y = (2 * j) as f64 / ny as f64 - 1.0;
        if j % 2 == 0 {
            for i in 0..=nx {
                pts.push(Point2::new((2 * i) as f64 / nx as f64 - 1.0, y));
            }
        } else {
            pts.push(Point2::new(-1.0, y));
            for i in 0..nx {
                pts.push(Point2::new((2 * i + 1) as f64 / nx as f64 - 1.0, y));
            }
            pts.push(Point2::new(1.0, y));
        }
    }
    pts
}

impl FaultMesh {
    /// Builds the coarse/fine pair. Pure function of `fault` and `params`.
    pub fn build(fault: &FaultSegment, params: &MeshParams) -> Result<FaultMesh> {
        if !(params.h_target > 0.0 && params.h_target.is_finite()) {
            return Err(Error::config("h_target", format!("must be positive, got {}", params.h_target)));
        }
        fault.validate(params.delta_min)?;
        let spacing = params.spacing();
        let r_ex = params.exclusion * spacing;

        let mut points: Vec<Point2> = lattice(spacing)
            .into_iter()
            .filter(|&p| {
                boundary_distance(p) <= ON_BOUNDARY || point_segment_distance(p, fault.p0, fault.p1) >= r_ex
            })
            .collect();
        let m = ((fault.length() / spacing - 1e-9).ceil() as usize).max(1);
        let first_fault = points.len();
        let mut coarse_fraction = vec![None; points.len()];
        for k in 0..=m {
            let t = k as f64 / m as f64;
            let w0 = (m - k) as f64 / m as f64;
            points.push(Point2::lerp2(fault.p0, w0, fault.p1, t));
            coarse_fraction.push(Some(t));
        }

        let mut cdt = ConstrainedDelaunayTriangulation::<spade::Point2<f64>>::new();
        let mut handles = Vec::with_capacity(points.len());
        for p in &points {
            let h = cdt
                .insert(spade::Point2::new(p.x, p.y))
                .map_err(|e| Error::InconsistentTopology(format!("triangulation insert failed: {e:?}")))?;
            handles.push(h);
        }
        if cdt.num_vertices() != points.len() {
            return Err(Error::InconsistentTopology("duplicate coarse points".into()));
        }
        let mut id_of = vec![usize::MAX; points.len()];
        for (i, h) in handles.iter().enumerate() {
            id_of[h.index()] = i;
        }
        let mut fault_edges = Vec::with_capacity(m);
        for k in 0..m {
            let (a, b) = (first_fault + k, first_fault + k + 1);
            cdt.add_constraint(handles[a], handles[b]);
            fault_edges.push([a, b]);
        }
        let mut triangles: Vec<[usize; 3]> = cdt
            .inner_faces()
            .map(|f| f.vertices().map(|v| id_of[v.fix().index()]))
            .collect();
        for t in triangles.iter_mut() {
            // canonical rotation: smallest id first, orientation kept
            let r = (0..3).min_by_key(|&k| t[k]).unwrap();
            t.rotate_left(r);
            let p = t.map(|v| points[v]);
            if (p[1] - p[0]).cross(p[2] - p[0]) < 0.0 {
                t.swap(1, 2);
            }
        }
        triangles.sort_unstable();

        let fault_ids = [first_fault, first_fault + m];
        let coarse = TriMesh::from_parts(points, triangles, &fault_edges, fault.normal(), fault_ids)?;
        let min_angle = coarse.min_angle_deg();
        if min_angle < params.angle_floor_deg {
            return Err(Error::MeshQuality { min_angle_deg: min_angle, floor_deg: params.angle_floor_deg });
        }

        let n = ((spacing / params.h_target - 1e-9).ceil() as usize).max(1);
        let (origins, fine_triangles, fine_parent, fine_fault_edges) = subdivide(&coarse, n, &fault_edges);
        let vertices = origins.iter().map(|o| origin_position(&coarse, n, *o)).collect();
        let fine = TriMesh::from_parts(vertices, fine_triangles, &fine_fault_edges, fault.normal(), fault_ids)?;
        Ok(FaultMesh {
            params: *params,
            fault: fault.clone(),
            coarse,
            fine,
            subdivisions: n,
            fine_parent,
            coarse_fraction,
            origins,
        })
    }

    /// Nominal diameter of the fine triangles, `spacing / subdivisions`.
    pub fn nominal_h(&self) -> f64 {
        self.params.spacing() / self.subdivisions as f64
    }

    /// Coarse-level value of the deformation field of fault vertex `l`
    /// (0 for `p0`, 1 for `p1`): the arclength weight of `P_l` at fault
    /// nodes and zero at every other coarse node.
    fn coarse_weight(&self, l: usize, v: usize) -> f64 {
        match self.coarse_fraction[v] {
            Some(t) if l == 0 => 1.0 - t,
            Some(t) => t,
            None => 0.0,
        }
    }

    /// Nodal values on the fine mesh of the scalar deformation weight of
    /// fault vertex `l`.
    pub fn vertex_field(&self, l: usize) -> Vec<f64> {
        let n = self.subdivisions as f64;
        self.origins
            .iter()
            .map(|o| match *o {
                Origin::Vertex(v) => self.coarse_weight(l, v),
                Origin::Edge(a, b, k) => {
                    let k = k as f64;
                    ((n - k) * self.coarse_weight(l, a) + k * self.coarse_weight(l, b)) / n
                }
                Origin::Interior(t, i, j) => {
                    let tri = self.coarse.triangles[t];
                    let (i, j) = (i as f64, j as f64);
                    ((n - i - j) * self.coarse_weight(l, tri[0])
                        + i * self.coarse_weight(l, tri[1])
                        + j * self.coarse_weight(l, tri[2]))
                        / n
                }
            })
            .collect()
    }

    /// Coarse triangles on which the deformation fields are nonzero.
    pub fn field_support(&self) -> Vec<bool> {
        self.coarse
            .triangles
            .iter()
            .map(|t| t.iter().any(|&v| self.coarse_fraction[v].is_some()))
            .collect()
    }

    /// Moves the fault endpoints by `d0`, `d1` keeping the topology; every
    /// node moves by the deformation fields of the two endpoints.
    pub fn moved(&self, d0: Vec2, d1: Vec2) -> Result<FaultMesh> {
        let fault = self.fault.with_vertices(self.fault.p0 + d0, self.fault.p1 + d1);
        fault.validate(self.params.delta_min)?;
        let mut out = self.clone();
        for (v, t) in self.coarse_fraction.iter().enumerate() {
            if let Some(t) = *t {
                out.coarse.vertices[v] = fault.point_at(t);
            }
        }
        let n = self.subdivisions;
        let vertices: Vec<Point2> = self.origins.iter().map(|o| origin_position(&out.coarse, n, *o)).collect();
        out.coarse = rebuilt(&out.coarse, out.coarse.vertices.clone(), &fault)?;
        out.fine = rebuilt(&self.fine, vertices, &fault)?;
        let min_angle = out.coarse.min_angle_deg();
        if min_angle < self.params.angle_floor_deg {
            return Err(Error::MeshQuality { min_angle_deg: min_angle, floor_deg: self.params.angle_floor_deg });
        }
        out.fault = fault;
        Ok(out)
    }

    /// Coarse vertices on the closed square edge `e`, ordered along it.
    pub fn boundary_nodes(&self, e: SquareEdge) -> Vec<usize> {
        let (a, b) = e.endpoints();
        let dir = b - a;
        let mut ids: Vec<usize> = (0..self.coarse.vertices.len())
            .filter(|&v| e.contains(self.coarse.vertices[v]))
            .collect();
        ids.sort_by(|&u, &v| {
            let su = (self.coarse.vertices[u] - a).dot(dir);
            let sv = (self.coarse.vertices[v] - a).dot(dir);
            su.total_cmp(&sv)
        });
        ids
    }
}

fn rebuilt(old: &TriMesh, vertices: Vec<Point2>, fault: &FaultSegment) -> Result<TriMesh> {
    let fault_edges: Vec<[usize; 2]> =
        old.sides.iter().filter(|s| s.class == SideClass::Fault).map(|s| s.vertices).collect();
    TriMesh::from_parts(vertices, old.triangles.clone(), &fault_edges, fault.normal(), old.fault_vertex_ids)
}

fn origin_position(coarse: &TriMesh, n: usize, o: Origin) -> Point2 {
    let nf = n as f64;
    match o {
        Origin::Vertex(v) => coarse.vertices[v],
        Origin::Edge(a, b, k) => {
            Point2::lerp2(coarse.vertices[a], (n - k) as f64 / nf, coarse.vertices[b], k as f64 / nf)
        }
        Origin::Interior(t, i, j) => {
            let p = coarse.triangle_points(t);
            let w0 = (n - i - j) as f64 / nf;
            let (w1, w2) = (i as f64 / nf, j as f64 / nf);
            Point2::new(w0 * p[0].x + w1 * p[1].x + w2 * p[2].x, w0 * p[0].y + w1 * p[1].y + w2 * p[2].y)
        }
    }
}

type Subdivision = (Vec<Origin>, Vec<[usize; 3]>, Vec<usize>, Vec<[usize; 2]>);

/// Uniform `n`-fold subdivision of every coarse triangle.
fn subdivide(coarse: &TriMesh, n: usize, coarse_fault_edges: &[[usize; 2]]) -> Subdivision {
    let mut origins: Vec<Origin> = (0..coarse.vertices.len()).map(Origin::Vertex).collect();
    // interior nodes of each coarse edge, from the smaller to the larger id
    let mut edge_nodes: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut edge_chain = |origins: &mut Vec<Origin>, a: usize, b: usize| -> Vec<usize> {
        let (lo, hi) = (a.min(b), a.max(b));
        let nodes = edge_nodes.entry((lo, hi)).or_insert_with(|| {
            (1..n)
                .map(|k| {
                    origins.push(Origin::Edge(lo, hi, k));
                    origins.len() - 1
                })
                .collect()
        });
        let mut chain = Vec::with_capacity(n + 1);
        chain.push(lo);
        chain.extend(nodes.iter().copied());
        chain.push(hi);
        if a > b {
            chain.reverse();
        }
        chain
    };
    let mut triangles = Vec::with_capacity(coarse.n_triangles() * n * n);
    let mut parent = Vec::with_capacity(coarse.n_triangles() * n * n);
    let mut local = vec![usize::MAX; (n + 1) * (n + 1)];
    let at = |i: usize, j: usize| i * (n + 1) + j;
    for (t, tri) in coarse.triangles.iter().enumerate() {
        let e01 = edge_chain(&mut origins, tri[0], tri[1]);
        let e02 = edge_chain(&mut origins, tri[0], tri[2]);
        let e12 = edge_chain(&mut origins, tri[1], tri[2]);
        for i in 0..=n {
            for j in 0..=(n - i) {
                local[at(i, j)] = if j == 0 {
                    e01[i]
                } else if i == 0 {
                    e02[j]
                } else if i + j == n {
                    e12[j]
                } else {
                    origins.push(Origin::Interior(t, i, j));
                    origins.len() - 1
                };
            }
        }
        for i in 0..n {
            for j in 0..(n - i) {
                triangles.push([local[at(i, j)], local[at(i + 1, j)], local[at(i, j + 1)]]);
                parent.push(t);
                if i + j + 2 <= n {
                    triangles.push([local[at(i + 1, j)], local[at(i + 1, j + 1)], local[at(i, j + 1)]]);
                    parent.push(t);
                }
            }
        }
    }
    let mut fault_edges = Vec::with_capacity(coarse_fault_edges.len() * n);
    for e in coarse_fault_edges {
        let chain = edge_chain(&mut origins, e[0], e[1]);
        for w in chain.windows(2) {
            fault_edges.push([w[0], w[1]]);
        }
    }
    (origins, triangles, parent, fault_edges)
}

/// Piecewise-linear nodal function equal to one at a vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct HatField {
    pub center_vertex: usize,
    pub values: Vec<f64>,
}

/// Hat function of an interior vertex. Errors with [`Error::BoundaryVertex`]
/// when the vertex is on the boundary, where the field would not vanish.
pub fn hat_field(mesh: &TriMesh, vertex_id: usize) -> Result<HatField> {
    if vertex_id >= mesh.vertices.len() || mesh.is_boundary_vertex(vertex_id) {
        return Err(Error::BoundaryVertex(vertex_id));
    }
    let mut values = vec![0.0; mesh.vertices.len()];
    values[vertex_id] = 1.0;
    Ok(HatField { center_vertex: vertex_id, values })
}

impl HatField {
    /// Value at `p`; zero outside the one-ring of the center vertex.
    pub fn eval(&self, mesh: &TriMesh, p: Point2) -> f64 {
        for tri in mesh.triangles.iter().filter(|t| t.contains(&self.center_vertex)) {
            let q = tri.map(|v| mesh.vertices[v]);
            let area = (q[1] - q[0]).cross(q[2] - q[0]);
            let l = [
                (q[2] - q[1]).cross(p - q[1]) / area,
                (q[0] - q[2]).cross(p - q[2]) / area,
                (q[1] - q[0]).cross(p - q[0]) / area,
            ];
            if l.iter().all(|&x| x >= -1e-12) {
                return (0..3).map(|k| l[k] * self.values[tri[k]]).sum();
            }
        }
        0.0
    }
}
