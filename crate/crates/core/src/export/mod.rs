//! OpenSCAD export of extracted CSG trees.
//!
//! Leaves that match a native solid are written as one; the rest become
//! polyhedra meshed from the single quadric. A grammar linter and a
//! membership interpreter for the emitted subset live alongside.

mod classify;
mod interp;
mod scad;

use std::fmt::Write as _;

pub use classify::{classify_quadric, BasicPrimitive, CLASSIFY_TOL};
pub use interp::{interpret, Solid};
pub use scad::{lint, parse, Arg, Expr, Stmt, MODULES};

use crate::error::{Error, Result};
use crate::extract::{extract_isosurface, CsgTree, Leaf};
use crate::geometry::{NormalizationTransform, Point3};
use crate::network::{quadric_value, Branch};

/// Edge length, in normalised units, of the cubes standing in for
/// unbounded solids.
pub const HALF_SPACE_SIZE: f64 = 10.0;
/// Grid resolution for polyhedral leaves.
pub const POLYHEDRON_RESOLUTION: usize = 64;
/// Axis-alignment tolerance for collapsing half-spaces into a box.
pub const BOX_TOL: f64 = 1e-3;
pub const SPHERE_FACETS: usize = 96;

#[derive(Clone, Debug, PartialEq)]
pub struct ExportOptions {
    /// Write original input units instead of normalised ones.
    pub world: bool,
    pub classify: bool,
    pub tol: f64,
    pub seed: Option<u64>,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            world: false,
            classify: true,
            tol: CLASSIFY_TOL,
            seed: None,
        }
    }
}

/// Normalised-to-output coordinate map (uniform scale plus shift).
#[derive(Clone, Copy, Debug)]
struct Frame(NormalizationTransform);

impl Frame {
    fn point(&self, p: Point3) -> Point3 {
        self.0.invert(p)
    }

    fn length(&self, l: f64) -> f64 {
        l / self.0.scale
    }
}

fn num(v: f64) -> String {
    // shortest round-trip form; avoid "-0"
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

fn vec3(v: Point3) -> String {
    format!("[{}, {}, {}]", num(v[0]), num(v[1]), num(v[2]))
}

/// How one leaf is written.
enum Piece {
    Native(BasicPrimitive),
    Mesh(String),
    /// Covers nothing (convex leaf) or everything (as a complement).
    Empty,
}

struct Writer {
    out: String,
    depth: usize,
}

impl Writer {
    fn line(&mut self, s: &str) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn open(&mut self, s: &str) {
        self.line(&format!("{s} {{"));
        self.depth += 1;
    }

    fn close(&mut self) {
        self.depth -= 1;
        self.line("}");
    }
}

fn convex_form(leaf: &Leaf) -> [f64; 7] {
    if leaf.inverted {
        leaf.coeffs.map(|v| -v)
    } else {
        leaf.coeffs
    }
}

fn polyhedron(q: &[f64; 7], frame: Frame) -> Option<String> {
    let mesh = extract_isosurface(
        |pts| pts.iter().map(|&x| quadric_value(q, x)).collect(),
        POLYHEDRON_RESOLUTION,
        0.0,
    );
    if mesh.is_empty() {
        return None;
    }
    let points: Vec<String> = mesh.vertices.iter().map(|&v| vec3(frame.point(v))).collect();
    // OpenSCAD wants faces clockwise seen from outside
    let faces: Vec<String> = mesh
        .triangles
        .iter()
        .map(|t| format!("[{}, {}, {}]", t[0], t[2], t[1]))
        .collect();
    Some(format!(
        "polyhedron(points=[{}], faces=[{}]);",
        points.join(", "),
        faces.join(", ")
    ))
}

fn piece(leaf: &Leaf, opts: &ExportOptions, frame: Frame) -> Piece {
    let q = convex_form(leaf);
    if opts.classify {
        match classify_quadric(&q, opts.tol) {
            Some(BasicPrimitive::Empty) => return Piece::Empty,
            Some(p) => return Piece::Native(p),
            None => {}
        }
    }
    polyhedron(&q, frame).map_or(Piece::Empty, Piece::Mesh)
}

/// Orthonormal `u, v` completing `n` to a right-handed basis.
fn basis(n: Point3) -> (Point3, Point3) {
    let a = if n[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let cross = |a: Point3, b: Point3| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let u = cross(a, n);
    let l = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let u = u.map(|x| x / l);
    (u, cross(n, u))
}

fn native(w: &mut Writer, p: &BasicPrimitive, frame: Frame) {
    let big = frame.length(HALF_SPACE_SIZE);
    match *p {
        BasicPrimitive::Sphere { center, radius } => w.line(&format!(
            "translate({}) sphere(r={});",
            vec3(frame.point(center)),
            num(frame.length(radius))
        )),
        BasicPrimitive::Ellipsoid { center, radii } => w.line(&format!(
            "translate({}) scale({}) sphere(r=1);",
            vec3(frame.point(center)),
            vec3(radii.map(|r| frame.length(r)))
        )),
        BasicPrimitive::Cylinder { axis, center, radii } => {
            let c = frame.point(center);
            let [r0, r1] = radii.map(|r| frame.length(r));
            // local x/y radii after rotating the z-axis onto `axis`
            let (rot, sx, sy) = match axis {
                0 => ("rotate([0, 90, 0]) ", r1, r0),
                1 => ("rotate([-90, 0, 0]) ", r0, r1),
                _ => ("", r0, r1),
            };
            w.line(&format!(
                "translate({}) {rot}scale([{}, {}, 1]) cylinder(h={}, r=1, center=true);",
                vec3(c),
                num(sx),
                num(sy),
                num(big)
            ));
        }
        BasicPrimitive::HalfSpace { normal, offset } => {
            let (u, v) = basis(normal);
            let origin = frame.point(normal.map(|x| x * offset));
            let m = |k: usize| format!("[{}, {}, {}, {}]", num(u[k]), num(v[k]), num(normal[k]), num(origin[k]));
            w.line(&format!(
                "multmatrix([{}, {}, {}, [0, 0, 0, 1]]) translate([{}, {}, {}]) cube({});",
                m(0),
                m(1),
                m(2),
                num(-big / 2.0),
                num(-big / 2.0),
                num(-big),
                num(big)
            ));
        }
        BasicPrimitive::Slab {
            axis,
            center,
            half_width,
        } => {
            let mut c = [0.0; 3];
            c[axis] = center;
            let mut size = [big; 3];
            size[axis] = frame.length(2.0 * half_width);
            w.line(&format!(
                "translate({}) cube({}, center=true);",
                vec3(frame.point(c)),
                vec3(size)
            ));
        }
        BasicPrimitive::Empty => {}
    }
}

/// Axis-aligned bounds from half-spaces in a node, when all six sides are
/// present. Returns the box and the indices it replaces.
fn collapse_box(pieces: &[(usize, &Piece)]) -> Option<([Point3; 2], Vec<usize>)> {
    let mut lo = [f64::NEG_INFINITY; 3];
    let mut hi = [f64::INFINITY; 3];
    let mut used = Vec::new();
    for &(i, p) in pieces {
        let Piece::Native(BasicPrimitive::HalfSpace { normal, offset }) = p else {
            continue;
        };
        let Some(axis) = (0..3).find(|&k| (normal[k].abs() - 1.0).abs() < BOX_TOL) else {
            continue;
        };
        if (0..3).any(|k| k != axis && normal[k].abs() >= BOX_TOL) {
            continue;
        }
        if normal[axis] > 0.0 {
            hi[axis] = hi[axis].min(offset / normal[axis]);
        } else {
            lo[axis] = lo[axis].max(offset / normal[axis]);
        }
        used.push(i);
    }
    let complete = (0..3).all(|k| lo[k].is_finite() && hi[k].is_finite());
    (complete && used.len() >= 6).then_some(([lo, hi], used))
}

fn emit_node(w: &mut Writer, node: &[Leaf], branch: Branch, index: usize, opts: &ExportOptions, frame: Frame) {
    let pieces: Vec<Piece> = node.iter().map(|l| piece(l, opts, frame)).collect();
    let convex: Vec<(usize, &Piece)> = pieces.iter().enumerate().filter(|(i, _)| !node[*i].inverted).collect();
    let inverse: Vec<(usize, &Piece)> = pieces
        .iter()
        .enumerate()
        .filter(|(i, p)| node[*i].inverted && !matches!(p, Piece::Empty))
        .collect();
    w.line(&format!("// {branch:?} shape {index}").to_lowercase());
    if convex.iter().any(|(_, p)| matches!(p, Piece::Empty)) {
        w.line("// empty: a convex leaf covers nothing");
        return;
    }
    let boxed = collapse_box(&convex);
    let write_convex = |w: &mut Writer| {
        if let Some(([lo, hi], _)) = &boxed {
            let (a, b) = (frame.point(*lo), frame.point(*hi));
            let size = [0, 1, 2].map(|k| (b[k] - a[k]).max(0.0));
            w.line(&format!("translate({}) cube({});", vec3(a), vec3(size)));
        }
        let skip: &[usize] = boxed.as_ref().map_or(&[], |b| &b.1);
        for &(i, p) in &convex {
            if skip.contains(&i) {
                continue;
            }
            write_piece(w, p, frame);
        }
        if convex.is_empty() {
            // complements alone: bound them by the domain
            let c = frame.point([0.0; 3]);
            w.line(&format!(
                "translate({}) cube({}, center=true);",
                vec3(c),
                num(frame.length(HALF_SPACE_SIZE))
            ));
        }
    };
    if inverse.is_empty() {
        w.open("intersection()");
        write_convex(w);
        w.close();
    } else {
        w.open("difference()");
        w.open("intersection()");
        write_convex(w);
        w.close();
        w.open("union()");
        for &(_, p) in &inverse {
            write_piece(w, p, frame);
        }
        w.close();
        w.close();
    }
}

fn write_piece(w: &mut Writer, p: &Piece, frame: Frame) {
    match p {
        Piece::Native(prim) => native(w, prim, frame),
        Piece::Mesh(text) => w.line(text),
        Piece::Empty => {}
    }
}

/// Writes the tree as `difference(){ union(){cover} union(){residual} }`.
pub fn emit_openscad(tree: &CsgTree, opts: &ExportOptions) -> Result<String> {
    if tree.cover.is_empty() {
        return Err(Error::EmptyReconstruction);
    }
    let frame = Frame(if opts.world {
        tree.transform
    } else {
        NormalizationTransform::identity()
    });
    let mut header = String::new();
    let _ = writeln!(header, "// d2csg: version {}", env!("CARGO_PKG_VERSION"));
    if let Some(seed) = opts.seed {
        let _ = writeln!(header, "// d2csg: seed {seed}");
    }
    let _ = writeln!(
        header,
        "// d2csg: coordinates {}",
        if opts.world { "world" } else { "normalized" }
    );
    let _ = writeln!(
        header,
        "// d2csg: unbounded solids use cubes of size {}",
        num(frame.length(HALF_SPACE_SIZE))
    );
    for b in Branch::BOTH {
        for (i, node) in tree.branch(b).iter().enumerate() {
            for leaf in node {
                let kind = if opts.classify {
                    classify_quadric(&convex_form(leaf), opts.tol).map_or("polyhedron", |p| p.kind())
                } else {
                    "polyhedron"
                };
                let inv = if leaf.inverted { " inverted" } else { "" };
                let _ = writeln!(header, "// d2csg: {b:?} shape {i} row {}{inv} {kind}", leaf.row);
            }
        }
    }
    let mut w = Writer {
        out: header.to_lowercase(),
        depth: 0,
    };
    w.line(&format!("$fn = {SPHERE_FACETS};"));
    w.open("difference()");
    for b in Branch::BOTH {
        w.open("union()");
        for (i, node) in tree.branch(b).iter().enumerate() {
            emit_node(&mut w, node, b, i, opts, frame);
        }
        w.close();
    }
    w.close();
    Ok(w.out)
}

#[cfg(test)]
mod tests;
