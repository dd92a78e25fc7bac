//! Point-membership interpreter for parsed exporter scripts.

use rayon::prelude::*;

use super::scad::{parse, Arg, Expr, Stmt};
use crate::error::{Error, Result};
use crate::geometry::{winding_number, Point3, TriangleMesh};

/// Affine map `x ↦ m·x + t` stored row-major as 3×4.
type Affine = [[f64; 4]; 3];

const IDENTITY: Affine = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]];

fn apply(a: &Affine, x: Point3) -> Point3 {
    [0, 1, 2].map(|r| a[r][0] * x[0] + a[r][1] * x[1] + a[r][2] * x[2] + a[r][3])
}

fn invert(a: &Affine) -> Option<Affine> {
    let m = |r: usize, c: usize| a[r][c];
    let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    if det.abs() < 1e-300 {
        return None;
    }
    let cof = |r: usize, c: usize| {
        let (r0, r1) = ((r + 1) % 3, (r + 2) % 3);
        let (c0, c1) = ((c + 1) % 3, (c + 2) % 3);
        m(r0, c0) * m(r1, c1) - m(r0, c1) * m(r1, c0)
    };
    let mut inv = [[0.0; 4]; 3];
    for r in 0..3 {
        for c in 0..3 {
            inv[r][c] = cof(c, r) / det;
        }
    }
    for r in 0..3 {
        inv[r][3] = -(0..3).map(|c| inv[r][c] * a[c][3]).sum::<f64>();
    }
    Some(inv)
}

/// A solid as a membership predicate tree.
#[derive(Clone, Debug)]
pub enum Solid {
    Union(Vec<Solid>),
    Intersection(Vec<Solid>),
    /// First child minus the rest.
    Difference(Vec<Solid>),
    /// `inverse` maps world points into the child's frame.
    Transform {
        inverse: Affine,
        child: Box<Solid>,
    },
    Sphere(f64),
    Cube {
        size: Point3,
        center: bool,
    },
    Cylinder {
        h: f64,
        r1: f64,
        r2: f64,
        center: bool,
    },
    Polyhedron(TriangleMesh),
}

impl Solid {
    pub fn contains(&self, x: Point3) -> bool {
        match self {
            Solid::Union(c) => c.iter().any(|s| s.contains(x)),
            Solid::Intersection(c) => !c.is_empty() && c.iter().all(|s| s.contains(x)),
            Solid::Difference(c) => match c.split_first() {
                Some((first, rest)) => first.contains(x) && !rest.iter().any(|s| s.contains(x)),
                None => false,
            },
            Solid::Transform { inverse, child } => child.contains(apply(inverse, x)),
            Solid::Sphere(r) => x[0] * x[0] + x[1] * x[1] + x[2] * x[2] <= r * r,
            Solid::Cube { size, center } => (0..3).all(|k| {
                let lo = if *center { -size[k] / 2.0 } else { 0.0 };
                x[k] >= lo && x[k] <= lo + size[k]
            }),
            Solid::Cylinder { h, r1, r2, center } => {
                let z0 = if *center { -h / 2.0 } else { 0.0 };
                let t = (x[2] - z0) / h;
                (0.0..=1.0).contains(&t) && (x[0] * x[0] + x[1] * x[1]).sqrt() <= r1 + t * (r2 - r1)
            }
            Solid::Polyhedron(mesh) => winding_number(mesh, x).abs() > 0.5,
        }
    }

    pub fn contains_all(&self, points: &[Point3]) -> Vec<bool> {
        points.par_iter().map(|&x| self.contains(x)).collect()
    }
}

fn bad<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Scad {
        offset,
        message: message.into(),
    })
}

struct Env {
    vars: Vec<(String, Expr)>,
}

impl Env {
    fn resolve<'a>(&'a self, e: &'a Expr) -> &'a Expr {
        match e {
            Expr::Ident(n) => self.vars.iter().rev().find(|(k, _)| k == n).map_or(e, |(_, v)| v),
            _ => e,
        }
    }

    fn num(&self, e: &Expr, at: usize) -> Result<f64> {
        match self.resolve(e) {
            Expr::Num(v) => Ok(*v),
            other => bad(at, format!("expected a number, got {other:?}")),
        }
    }

    fn boolean(&self, e: &Expr, at: usize) -> Result<bool> {
        match self.resolve(e) {
            Expr::Bool(v) => Ok(*v),
            other => bad(at, format!("expected a boolean, got {other:?}")),
        }
    }

    fn nums(&self, e: &Expr, at: usize) -> Result<Vec<f64>> {
        match self.resolve(e) {
            Expr::Vector(items) => items.iter().map(|i| self.num(i, at)).collect(),
            other => bad(at, format!("expected a vector, got {other:?}")),
        }
    }

    fn vec3(&self, e: &Expr, at: usize) -> Result<Point3> {
        let v = self.nums(e, at)?;
        <[f64; 3]>::try_from(v.as_slice()).or_else(|_| bad(at, "expected 3 components"))
    }

    /// Scalar or 3-vector, as `cube` and `scale` accept.
    fn scalar_or_vec3(&self, e: &Expr, at: usize) -> Result<Point3> {
        match self.resolve(e) {
            Expr::Num(v) => Ok([*v; 3]),
            _ => self.vec3(e, at),
        }
    }
}

/// Named argument, else the positional one at `index`.
fn arg<'a>(args: &'a [Arg], name: &str, index: usize) -> Option<&'a Expr> {
    args.iter()
        .find(|a| a.name.as_deref() == Some(name))
        .or_else(|| args.iter().filter(|a| a.name.is_none()).nth(index))
        .map(|a| &a.value)
}

fn rotation(angles: Point3) -> Affine {
    let (sx, cx) = angles[0].to_radians().sin_cos();
    let (sy, cy) = angles[1].to_radians().sin_cos();
    let (sz, cz) = angles[2].to_radians().sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
        let mut o = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                o[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
            }
        }
        o
    };
    // x first, then y, then z
    let m = mul(rz, mul(ry, rx));
    [0, 1, 2].map(|r| [m[r][0], m[r][1], m[r][2], 0.0])
}

fn build(stmts: &[Stmt], env: &mut Env) -> Result<Vec<Solid>> {
    let mut out = Vec::new();
    for s in stmts {
        match s {
            Stmt::Assign { name, value } => env.vars.push((name.clone(), value.clone())),
            Stmt::Call {
                name,
                args,
                children,
                offset,
            } => {
                let at = *offset;
                let need = |n: &str, i: usize| {
                    arg(args, n, i).ok_or_else(|| Error::Scad {
                        offset: at,
                        message: format!("{name} is missing {n}"),
                    })
                };
                let kids = build(children, env)?;
                let transform = |a: Affine, kids: Vec<Solid>| -> Result<Solid> {
                    let inverse = invert(&a).ok_or_else(|| Error::Scad {
                        offset: at,
                        message: "singular transform".into(),
                    })?;
                    Ok(Solid::Transform {
                        inverse,
                        child: Box::new(Solid::Union(kids)),
                    })
                };
                let solid = match name.as_str() {
                    "union" => Solid::Union(kids),
                    "intersection" => Solid::Intersection(kids),
                    "difference" => Solid::Difference(kids),
                    "translate" => {
                        let v = env.vec3(need("v", 0)?, at)?;
                        let mut a = IDENTITY;
                        (0..3).for_each(|r| a[r][3] = v[r]);
                        transform(a, kids)?
                    }
                    "scale" => {
                        let v = env.scalar_or_vec3(need("v", 0)?, at)?;
                        let mut a = IDENTITY;
                        (0..3).for_each(|r| a[r][r] = v[r]);
                        transform(a, kids)?
                    }
                    "rotate" => transform(rotation(env.vec3(need("a", 0)?, at)?), kids)?,
                    "multmatrix" => {
                        let rows = match env.resolve(need("m", 0)?) {
                            Expr::Vector(rows) if rows.len() >= 3 => rows.clone(),
                            _ => return bad(at, "multmatrix needs at least 3 rows"),
                        };
                        let mut a = IDENTITY;
                        for (r, row) in rows.iter().take(3).enumerate() {
                            let v = env.nums(row, at)?;
                            if v.len() != 4 {
                                return bad(at, "multmatrix rows need 4 entries");
                            }
                            a[r].copy_from_slice(&v);
                        }
                        transform(a, kids)?
                    }
                    "sphere" => Solid::Sphere(env.num(need("r", 0)?, at)?),
                    "cube" => Solid::Cube {
                        size: env.scalar_or_vec3(need("size", 0)?, at)?,
                        center: arg(args, "center", 1).map_or(Ok(false), |e| env.boolean(e, at))?,
                    },
                    "cylinder" => {
                        let h = env.num(need("h", 0)?, at)?;
                        let r = arg(args, "r", 1).map(|e| env.num(e, at)).transpose()?;
                        let r1 = arg(args, "r1", usize::MAX).map(|e| env.num(e, at)).transpose()?;
                        let r2 = arg(args, "r2", usize::MAX).map(|e| env.num(e, at)).transpose()?;
                        let (r1, r2) = match (r, r1, r2) {
                            (Some(r), _, _) => (r, r),
                            (None, Some(a), Some(b)) => (a, b),
                            _ => return bad(at, "cylinder needs r or r1 and r2"),
                        };
                        Solid::Cylinder {
                            h,
                            r1,
                            r2,
                            center: arg(args, "center", usize::MAX).map_or(Ok(false), |e| env.boolean(e, at))?,
                        }
                    }
                    "polyhedron" => {
                        let pts = match env.resolve(need("points", 0)?) {
                            Expr::Vector(items) => items.iter().map(|p| env.vec3(p, at)).collect::<Result<Vec<_>>>()?,
                            _ => return bad(at, "polyhedron points must be a vector"),
                        };
                        let faces = match env.resolve(need("faces", 1)?) {
                            Expr::Vector(items) => items
                                .iter()
                                .map(|f| {
                                    let v = env.nums(f, at)?;
                                    if v.len() != 3
                                        || v.iter()
                                            .any(|&i| i < 0.0 || i.fract() != 0.0 || i as usize >= pts.len())
                                    {
                                        return bad(at, "faces must be index triples");
                                    }
                                    // OpenSCAD faces are clockwise seen from outside
                                    Ok([v[0] as usize, v[2] as usize, v[1] as usize])
                                })
                                .collect::<Result<Vec<_>>>()?,
                            _ => return bad(at, "polyhedron faces must be a vector"),
                        };
                        Solid::Polyhedron(TriangleMesh::new(pts, faces)?)
                    }
                    other => return bad(at, format!("unknown module {other}")),
                };
                out.push(solid);
            }
        }
    }
    Ok(out)
}

/// Parses and builds a script; top-level statements are unioned.
pub fn interpret(src: &str) -> Result<Solid> {
    let stmts = parse(src)?;
    Ok(Solid::Union(build(&stmts, &mut Env { vars: Vec::new() })?))
}
