use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::{MeshError, SurfaceMesh, WELD_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    StlAscii,
    SimpleText,
}

impl MeshFormat {
    /// `.stl` files are read as ASCII STL, everything else as simple text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("stl") => MeshFormat::StlAscii,
            _ => MeshFormat::SimpleText,
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<SurfaceMesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    match format {
        MeshFormat::StlAscii => parse_stl_ascii(&text),
        MeshFormat::SimpleText => parse_simple_text(&text),
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64, MeshError> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing coordinate"))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("bad number `{tok}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, format!("non-finite number `{tok}`")))
    }
}

/// Parses the `solid` / `facet normal` / `outer loop` / `vertex` grammar.
/// Stored facet normals are ignored; orientation comes from vertex order.
pub fn parse_stl_ascii(text: &str) -> Result<SurfaceMesh, MeshError> {
    let mut points = Vec::new();
    let mut in_loop = false;
    let mut loop_count = 0;
    let mut saw_solid = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut toks = raw.split_whitespace();
        let Some(kw) = toks.next() else { continue };
        match kw {
            "solid" => saw_solid = true,
            "endsolid" | "facet" | "endfacet" => {}
            "outer" => {
                if in_loop {
                    return Err(parse_err(line, "nested `outer loop`"));
                }
                in_loop = true;
                loop_count = 0;
            }
            "endloop" => {
                if !in_loop || loop_count != 3 {
                    return Err(parse_err(line, "facet loop must contain exactly 3 vertices"));
                }
                in_loop = false;
            }
            "vertex" => {
                if !in_loop {
                    return Err(parse_err(line, "`vertex` outside of a loop"));
                }
                let x = parse_f64(toks.next(), line)?;
                let y = parse_f64(toks.next(), line)?;
                let z = parse_f64(toks.next(), line)?;
                points.push(Point3::new(x, y, z));
                loop_count += 1;
            }
            other => return Err(parse_err(line, format!("unexpected keyword `{other}`"))),
        }
    }
    if !saw_solid {
        return Err(parse_err(1, "missing `solid` header"));
    }
    if in_loop {
        return Err(parse_err(text.lines().count(), "unterminated facet loop"));
    }
    if points.is_empty() {
        return Err(parse_err(1, "no facets"));
    }
    let (vertices, remap) = weld(&points, WELD_TOLERANCE);
    let faces = remap.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    SurfaceMesh::new(vertices, faces)
}

/// Parses `mesh v=<nv> f=<nf>` followed by `v x y z` and `f i j k` lines.
pub fn parse_simple_text(text: &str) -> Result<SurfaceMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("mesh") {
        return Err(parse_err(hline, "expected `mesh v=<nv> f=<nf>` header"));
    }
    let mut count = |prefix: &str| -> Result<usize, MeshError> {
        toks.next()
            .and_then(|t| t.strip_prefix(prefix))
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(hline, format!("missing `{prefix}<count>`")))
    };
    let nv = count("v=")?;
    let nf = count("f=")?;

    let mut points = Vec::with_capacity(nv);
    let mut raw_faces = Vec::with_capacity(nf);
    for (line, body) in lines {
        let mut toks = body.split_whitespace();
        match toks.next() {
            Some("v") if raw_faces.is_empty() && points.len() < nv => {
                let x = parse_f64(toks.next(), line)?;
                let y = parse_f64(toks.next(), line)?;
                let z = parse_f64(toks.next(), line)?;
                points.push(Point3::new(x, y, z));
            }
            Some("f") if points.len() == nv && raw_faces.len() < nf => {
                let mut idx = [0usize; 3];
                for slot in &mut idx {
                    let tok = toks.next().ok_or_else(|| parse_err(line, "missing face index"))?;
                    *slot = tok
                        .parse()
                        .map_err(|_| parse_err(line, format!("bad index `{tok}`")))?;
                }
                raw_faces.push(idx);
            }
            _ => return Err(parse_err(line, format!("unexpected line `{body}`"))),
        }
        if toks.next().is_some() {
            return Err(parse_err(line, "trailing tokens"));
        }
    }
    if points.len() != nv || raw_faces.len() != nf {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {nv} vertices and {nf} faces, found {} and {}", points.len(), raw_faces.len()),
        ));
    }
    for (f, face) in raw_faces.iter().enumerate() {
        if let Some(&index) = face.iter().find(|&&i| i >= nv) {
            return Err(MeshError::IndexOutOfRange { face: f, index, count: nv });
        }
    }
    let (vertices, remap) = weld(&points, WELD_TOLERANCE);
    let faces = raw_faces.iter().map(|f| f.map(|i| remap[i])).collect();
    SurfaceMesh::new(vertices, faces)
}

pub fn write_simple_text(mesh: &SurfaceMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mesh v={} f={}", mesh.vertex_count(), mesh.face_count());
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0], f[1], f[2]);
    }
    out
}

/// Merges points closer than `tol`; returns unique points and a per-input map.
/// The first occurrence of each cluster is kept.
pub(crate) fn weld(points: &[Point3<f64>], tol: f64) -> (Vec<Point3<f64>>, Vec<usize>) {
    let cell = |p: &Point3<f64>| {
        [
            (p.x / tol).floor() as i64,
            (p.y / tol).floor() as i64,
            (p.z / tol).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut unique: Vec<Point3<f64>> = Vec::new();
    let mut remap = Vec::with_capacity(points.len());
    for p in points {
        let c = cell(p);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if let Some(&id) = ids.iter().find(|&&id| (unique[id] - p).norm() < tol) {
                            found = Some(id);
                            break 'search;
                        }
                    }
                }
            }
        }
        let id = found.unwrap_or_else(|| {
            unique.push(*p);
            grid.entry(c).or_default().push(unique.len() - 1);
            unique.len() - 1
        });
        remap.push(id);
    }
    (unique, remap)
}
