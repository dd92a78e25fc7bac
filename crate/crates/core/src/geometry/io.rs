use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::mesh::{Point3, TriangleMesh};
use super::OrientedPointCloud;
use crate::error::{Error, Result};

/// A mesh as read from disk, with the number of zero-area faces removed.
#[derive(Clone, Debug)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    pub degenerate_dropped: usize,
}

fn unreadable(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default()
}

/// Reads an OBJ, STL (ASCII or binary) or OFF file. Polygons are fan
/// triangulated; zero-area triangles are dropped and counted.
pub fn load_mesh(path: &Path) -> Result<LoadedMesh> {
    let ext = extension(path);
    if !matches!(ext.as_str(), "obj" | "stl" | "off") {
        return Err(Error::UnsupportedFormat(if ext.is_empty() {
            "<none>".into()
        } else {
            ext
        }));
    }
    let bytes = fs::read(path).map_err(|e| unreadable(path, e.to_string()))?;
    let (vertices, faces) = match ext.as_str() {
        "obj" => parse_obj(&text(path, &bytes)?).map_err(|r| unreadable(path, r))?,
        "off" => parse_off(&text(path, &bytes)?).map_err(|r| unreadable(path, r))?,
        _ => parse_stl(&bytes).map_err(|r| unreadable(path, r))?,
    };
    if vertices.is_empty() || faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut triangles = Vec::with_capacity(faces.len());
    for face in &faces {
        for k in 1..face.len() - 1 {
            triangles.push([face[0], face[k], face[k + 1]]);
        }
    }
    let before = triangles.len();
    let probe = TriangleMesh::new(vertices.clone(), triangles.clone()).map_err(|e| match e {
        Error::UnreadableFile { reason, .. } => unreadable(path, reason),
        other => other,
    })?;
    let (lo, hi) = probe.bounds();
    let diag2: f64 = (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum();
    let keep: Vec<[usize; 3]> = (0..before)
        .filter(|&t| probe.area(t) > 1e-14 * diag2.max(f64::MIN_POSITIVE))
        .map(|t| triangles[t])
        .collect();
    let dropped = before - keep.len();
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} degenerate triangle(s)", path.display());
    }
    let mesh = TriangleMesh::new(vertices, keep)?;
    Ok(LoadedMesh {
        mesh,
        degenerate_dropped: dropped,
    })
}

fn text<'a>(path: &Path, bytes: &'a [u8]) -> Result<&'a str> {
    std::str::from_utf8(bytes).map_err(|_| unreadable(path, "not valid UTF-8 text"))
}

type Parsed = (Vec<Point3>, Vec<Vec<usize>>);

fn parse_f64(tok: Option<&str>, line: usize) -> std::result::Result<f64, String> {
    let tok = tok.ok_or_else(|| format!("line {line}: missing coordinate"))?;
    let v: f64 = tok.parse().map_err(|_| format!("line {line}: bad number '{tok}'"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("line {line}: non-finite coordinate"))
    }
}

fn parse_obj(src: &str) -> std::result::Result<Parsed, String> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), n + 1)?;
                let y = parse_f64(toks.next(), n + 1)?;
                let z = parse_f64(toks.next(), n + 1)?;
                vertices.push([x, y, z]);
            }
            Some("f") => {
                let mut face = Vec::new();
                for tok in toks {
                    let idx = tok.split('/').next().unwrap_or("");
                    let i: i64 = idx
                        .parse()
                        .map_err(|_| format!("line {}: bad face index '{tok}'", n + 1))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(format!("line {}: face index 0", n + 1));
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(format!("line {}: face index {i} out of range", n + 1));
                    }
                    face.push(resolved as usize);
                }
                if face.len() < 3 {
                    return Err(format!("line {}: face with fewer than 3 vertices", n + 1));
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn parse_off(src: &str) -> std::result::Result<Parsed, String> {
    let mut lines = src
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    let header = lines.next().ok_or("empty file")?;
    let counts_line = if header == "OFF" {
        lines.next().ok_or("missing counts")?
    } else if let Some(rest) = header.strip_prefix("OFF") {
        rest
    } else {
        return Err("missing OFF header".into());
    };
    let counts: Vec<usize> = counts_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| format!("bad count '{t}'")))
        .collect::<std::result::Result<_, _>>()?;
    if counts.len() < 2 {
        return Err("missing vertex/face counts".into());
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut vertices = Vec::with_capacity(nv);
    for i in 0..nv {
        let l = lines
            .next()
            .ok_or_else(|| format!("truncated: expected {nv} vertices, got {i}"))?;
        let mut toks = l.split_whitespace();
        vertices.push([
            parse_f64(toks.next(), i + 1)?,
            parse_f64(toks.next(), i + 1)?,
            parse_f64(toks.next(), i + 1)?,
        ]);
    }
    let mut faces = Vec::with_capacity(nf);
    for i in 0..nf {
        let l = lines
            .next()
            .ok_or_else(|| format!("truncated: expected {nf} faces, got {i}"))?;
        let nums: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| format!("bad face token '{t}'")))
            .collect::<std::result::Result<_, _>>()?;
        let k = *nums.first().ok_or("empty face line")?;
        if k < 3 || nums.len() < k + 1 {
            return Err(format!("face {i}: malformed"));
        }
        let face = nums[1..=k].to_vec();
        if face.iter().any(|&v| v >= nv) {
            return Err(format!("face {i}: index out of range"));
        }
        faces.push(face);
    }
    Ok((vertices, faces))
}

fn parse_stl(bytes: &[u8]) -> std::result::Result<Parsed, String> {
    let mut cursor = std::io::Cursor::new(bytes);
    let indexed = stl_io::read_stl(&mut cursor).map_err(|e| e.to_string())?;
    let vertices = indexed
        .vertices
        .iter()
        .map(|v| [v[0] as f64, v[1] as f64, v[2] as f64])
        .collect();
    let faces = indexed.faces.iter().map(|f| f.vertices.to_vec()).collect();
    Ok((vertices, faces))
}

/// Writes a Wavefront OBJ with optional per-vertex normals.
pub fn write_obj(path: &Path, vertices: &[Point3], triangles: &[[usize; 3]], normals: Option<&[Point3]>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in vertices {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    if let Some(ns) = normals {
        for n in ns {
            writeln!(w, "vn {} {} {}", n[0], n[1], n[2])?;
        }
    }
    for t in triangles {
        if normals.is_some() {
            writeln!(w, "f {0}//{0} {1}//{1} {2}//{2}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        } else {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads whitespace-separated `x y z nx ny nz` rows. Normals are rescaled to
/// unit length; zero normals are rejected.
pub fn load_xyz(path: &Path) -> Result<OrientedPointCloud> {
    let src = fs::read_to_string(path).map_err(|e| unreadable(path, e.to_string()))?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (n, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| unreadable(path, format!("line {}: bad number", n + 1)))?;
        if vals.len() != 6 || vals.iter().any(|v| !v.is_finite()) {
            return Err(unreadable(path, format!("line {}: expected 6 finite values", n + 1)));
        }
        let len = (vals[3] * vals[3] + vals[4] * vals[4] + vals[5] * vals[5]).sqrt();
        if len == 0.0 {
            return Err(Error::NonUnitNormal {
                index: points.len(),
                norm: 0.0,
            });
        }
        points.push([vals[0], vals[1], vals[2]]);
        normals.push([vals[3] / len, vals[4] / len, vals[5] / len]);
    }
    if points.is_empty() {
        return Err(Error::EmptyMesh);
    }
    OrientedPointCloud::new(points, normals)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE_OBJ: &str = "\
v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nv 0 0 1\nv 1 0 1\nv 0 1 1\nv 1 1 1
f 1 5 7\nf 1 7 3\nf 2 4 8\nf 2 8 6\nf 1 2 6\nf 1 6 5
f 3 7 8\nf 3 8 4\nf 1 3 4\nf 1 4 2\nf 5 6 8\nf 5 8 7
";

    fn write(dir: &tempfile::TempDir, name: &str, body: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn unit_cube_obj() {
        let dir = tempfile::tempdir().unwrap();
        let loaded = load_mesh(&write(&dir, "cube.obj", CUBE_OBJ.as_bytes())).unwrap();
        assert_eq!(loaded.mesh.vertices().len(), 8);
        assert_eq!(loaded.mesh.triangles().len(), 12);
        assert_eq!(loaded.degenerate_dropped, 0);
        assert!(loaded.mesh.is_watertight());
    }

    #[test]
    fn degenerate_triangle_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{CUBE_OBJ}f 1 2 1\n");
        let loaded = load_mesh(&write(&dir, "deg.obj", body.as_bytes())).unwrap();
        assert_eq!(loaded.mesh.triangles().len(), 12);
        assert_eq!(loaded.degenerate_dropped, 1);
    }

    #[test]
    fn truncated_obj_is_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        let cut = &CUBE_OBJ[..CUBE_OBJ.len() - 4];
        let err = load_mesh(&write(&dir, "cut.obj", cut.as_bytes())).unwrap_err();
        assert!(err.to_string().starts_with("unreadable file"), "{err}");
    }

    #[test]
    fn unsupported_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "mesh.ply", b"ply");
        assert!(matches!(load_mesh(&p), Err(Error::UnsupportedFormat(_))));
        let missing = dir.path().join("nope.obj");
        assert!(matches!(load_mesh(&missing), Err(Error::UnreadableFile { .. })));
    }

    #[test]
    fn off_and_stl_round_trip_the_cube() {
        let dir = tempfile::tempdir().unwrap();
        let obj = load_mesh(&write(&dir, "c.obj", CUBE_OBJ.as_bytes())).unwrap().mesh;
        let mut off = format!("OFF\n8 12 0\n");
        for v in obj.vertices() {
            off += &format!("{} {} {}\n", v[0], v[1], v[2]);
        }
        for t in obj.triangles() {
            off += &format!("3 {} {} {}\n", t[0], t[1], t[2]);
        }
        let from_off = load_mesh(&write(&dir, "c.off", off.as_bytes())).unwrap().mesh;
        assert_eq!(from_off, obj);

        let tris: Vec<stl_io::Triangle> = obj
            .triangles()
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let n = obj.face_normal(i);
                let v = |k: usize| {
                    let p = obj.vertices()[t[k]];
                    stl_io::Vertex::new([p[0] as f32, p[1] as f32, p[2] as f32])
                };
                stl_io::Triangle {
                    normal: stl_io::Normal::new([n[0] as f32, n[1] as f32, n[2] as f32]),
                    vertices: [v(0), v(1), v(2)],
                }
            })
            .collect();
        let mut buf = Vec::new();
        stl_io::write_stl(&mut buf, tris.iter()).unwrap();
        let from_stl = load_mesh(&write(&dir, "c.stl", &buf)).unwrap().mesh;
        assert_eq!(from_stl.triangles().len(), 12);
        assert_eq!(from_stl.vertices().len(), 8);
        assert!(from_stl.is_watertight());
    }

    #[test]
    fn xyz_point_cloud() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.xyz", b"0 0 0.5 0 0 2\n0.5 0 0 1 0 0\n");
        let pc = load_xyz(&p).unwrap();
        assert_eq!(pc.len(), 2);
        assert_eq!(pc.normals()[0], [0.0, 0.0, 1.0]);
        let bad = write(&dir, "b.xyz", b"0 0 0 0 0\n");
        assert!(load_xyz(&bad).is_err());
    }
}
