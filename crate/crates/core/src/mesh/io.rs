use super::{MeshError, TriangleMesh};
use nalgebra::Point3;
use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    PlyAscii,
    StlBinary,
    /// Pick the format from the file extension.
    Auto,
}

impl std::str::FromStr for MeshFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "ply" | "ply_ascii" => Ok(MeshFormat::PlyAscii),
            "stl" | "stl_binary" => Ok(MeshFormat::StlBinary),
            "auto" => Ok(MeshFormat::Auto),
            other => Err(format!("unknown mesh format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Weld STL triangle-soup vertices closer than this (mm). `None` disables welding.
    pub stl_weld_tolerance: Option<f64>,
    /// Drop degenerate faces instead of failing.
    pub drop_degenerate: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { stl_weld_tolerance: Some(1e-6), drop_degenerate: true }
    }
}

/// Diagnostics collected while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub dropped_degenerate: usize,
    pub welded_vertices: usize,
}

pub fn load_mesh(
    path: impl AsRef<Path>,
    format: MeshFormat,
    options: &LoadOptions,
) -> Result<(TriangleMesh, LoadReport), MeshError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(MeshError::FileNotFound(path.to_path_buf()));
    }
    let format = match format {
        MeshFormat::Auto => detect_format(path)?,
        f => f,
    };
    let bytes = fs::read(path)?;
    let (vertices, faces, welded) = match format {
        MeshFormat::Obj => {
            let (v, f) = parse_obj(&String::from_utf8_lossy(&bytes))?;
            (v, f, 0)
        }
        MeshFormat::PlyAscii => {
            let (v, f) = parse_ply_ascii(&String::from_utf8_lossy(&bytes))?;
            (v, f, 0)
        }
        MeshFormat::StlBinary => {
            let (v, f) = parse_stl_binary(&bytes)?;
            match options.stl_weld_tolerance {
                Some(tol) => {
                    let before = v.len();
                    let (v, f) = weld(v, f, tol);
                    let welded = before - v.len();
                    (v, f, welded)
                }
                None => (v, f, 0),
            }
        }
        MeshFormat::Auto => unreachable!(),
    };
    let (mesh, dropped) = if options.drop_degenerate {
        TriangleMesh::with_degenerates_dropped(vertices, faces)?
    } else {
        (TriangleMesh::new(vertices, faces)?, 0)
    };
    if dropped > 0 {
        log::info!("{}: dropped {dropped} degenerate faces", path.display());
    }
    Ok((mesh, LoadReport { dropped_degenerate: dropped, welded_vertices: welded }))
}

fn detect_format(path: &Path) -> Result<MeshFormat, MeshError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "obj" => Ok(MeshFormat::Obj),
        "ply" => Ok(MeshFormat::PlyAscii),
        "stl" => Ok(MeshFormat::StlBinary),
        _ => Err(MeshError::parse(path.display().to_string(), "cannot infer mesh format from extension")),
    }
}

fn parse_f64(tok: Option<&str>, location: &str) -> Result<f64, MeshError> {
    let tok = tok.ok_or_else(|| MeshError::parse(location, "missing coordinate"))?;
    let v: f64 = tok.parse().map_err(|_| MeshError::parse(location, format!("invalid number `{tok}`")))?;
    if !v.is_finite() {
        return Err(MeshError::parse(location, format!("non-finite coordinate `{tok}`")));
    }
    Ok(v)
}

fn parse_obj(text: &str) -> Result<(Vec<Point3<f64>>, Vec<[usize; 3]>), MeshError> {
    let mut vertices = Vec::new();
    // (line number, raw indices) so bounds are checked once all vertices are known.
    let mut raw_faces: Vec<(usize, [i64; 3], usize)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let location = format!("line {lineno}");
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), &location)?;
                let y = parse_f64(toks.next(), &location)?;
                let z = parse_f64(toks.next(), &location)?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let idx: Vec<i64> = toks
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        head.parse::<i64>()
                            .map_err(|_| MeshError::parse(location.as_str(), format!("invalid face index `{t}`")))
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(MeshError::parse(location, format!("expected a triangle, got {} indices", idx.len())));
                }
                raw_faces.push((lineno, [idx[0], idx[1], idx[2]], vertices.len()));
            }
            _ => {}
        }
    }
    let count = vertices.len();
    let mut faces = Vec::with_capacity(raw_faces.len());
    for (lineno, idx, seen) in raw_faces {
        let mut face = [0usize; 3];
        for (slot, &i) in face.iter_mut().zip(idx.iter()) {
            let resolved = match i {
                i if i > 0 => i - 1,
                i if i < 0 => seen as i64 + i,
                _ => -1,
            };
            if resolved < 0 || resolved as usize >= count {
                return Err(MeshError::parse(
                    format!("line {lineno}"),
                    format!("face index {i} out of range for {count} vertices"),
                ));
            }
            *slot = resolved as usize;
        }
        faces.push(face);
    }
    Ok((vertices, faces))
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProperty>,
}

enum PlyProperty {
    Scalar(String),
    List,
}

fn parse_ply_ascii(text: &str) -> Result<(Vec<Point3<f64>>, Vec<[usize; 3]>), MeshError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(MeshError::parse("line 1", "missing `ply` magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let (n, line) = lines.next().ok_or_else(|| MeshError::parse("header", "missing end_header"))?;
        let location = format!("line {}", n + 1);
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(MeshError::parse(location, format!("unsupported PLY format `{other}`")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| MeshError::parse(location.as_str(), "invalid element count"))?;
                elements.push(PlyElement { name: name.to_string(), count, props: Vec::new() });
            }
            ["property", "list", _, _, _] => elements
                .last_mut()
                .ok_or_else(|| MeshError::parse(location.as_str(), "property before element"))?
                .props
                .push(PlyProperty::List),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| MeshError::parse(location.as_str(), "property before element"))?
                .props
                .push(PlyProperty::Scalar(name.to_string())),
            _ => return Err(MeshError::parse(location, format!("unrecognized header line `{line}`"))),
        }
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut data = lines.filter(|(_, l)| !l.trim().is_empty());
    for el in &elements {
        let axis_slots: Option<[usize; 3]> = if el.name == "vertex" {
            let find = |axis: &str| {
                el.props.iter().position(|p| matches!(p, PlyProperty::Scalar(n) if n == axis))
            };
            match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(MeshError::parse("header", "vertex element lacks x/y/z")),
            }
        } else {
            None
        };
        for _ in 0..el.count {
            let (n, line) = data
                .next()
                .ok_or_else(|| MeshError::parse("body", format!("unexpected end of data in element `{}`", el.name)))?;
            let location = format!("line {}", n + 1);
            let toks: Vec<&str> = line.split_whitespace().collect();
            if let Some([x, y, z]) = axis_slots {
                if toks.len() < el.props.len() {
                    return Err(MeshError::parse(location, "too few vertex properties"));
                }
                vertices.push(Point3::new(
                    parse_f64(Some(toks[x]), &location)?,
                    parse_f64(Some(toks[y]), &location)?,
                    parse_f64(Some(toks[z]), &location)?,
                ));
            } else if el.name == "face" {
                let n: usize = toks
                    .first()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| MeshError::parse(location.as_str(), "missing face vertex count"))?;
                if n != 3 {
                    return Err(MeshError::parse(location, format!("expected a triangle, got {n} indices")));
                }
                if toks.len() < 4 {
                    return Err(MeshError::parse(location, "too few face indices"));
                }
                let mut face = [0usize; 3];
                for (slot, t) in face.iter_mut().zip(&toks[1..4]) {
                    *slot = t
                        .parse()
                        .map_err(|_| MeshError::parse(location.as_str(), format!("invalid face index `{t}`")))?;
                }
                faces.push((location, face));
            }
        }
    }
    let count = vertices.len();
    let faces = faces
        .into_iter()
        .map(|(location, f)| {
            if let Some(&i) = f.iter().find(|&&i| i >= count) {
                Err(MeshError::parse(location, format!("face index {i} out of range for {count} vertices")))
            } else {
                Ok(f)
            }
        })
        .collect::<Result<_, _>>()?;
    Ok((vertices, faces))
}

fn parse_stl_binary(bytes: &[u8]) -> Result<(Vec<Point3<f64>>, Vec<[usize; 3]>), MeshError> {
    if bytes.len() < 84 {
        return Err(MeshError::parse("offset 0", "file shorter than the 84-byte STL header"));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let needed = 84 + 50 * count;
    if bytes.len() < needed {
        let hint = if bytes.starts_with(b"solid") { " (ASCII STL is not supported)" } else { "" };
        return Err(MeshError::parse(
            format!("offset {}", bytes.len()),
            format!("expected {count} facets ({needed} bytes){hint}"),
        ));
    }
    let read_f32 = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    let mut vertices = Vec::with_capacity(3 * count);
    let mut faces = Vec::with_capacity(count);
    for i in 0..count {
        let base = 84 + 50 * i + 12;
        for k in 0..3 {
            let off = base + 12 * k;
            let p = Point3::new(read_f32(off), read_f32(off + 4), read_f32(off + 8));
            if !p.iter().all(|c| c.is_finite()) {
                return Err(MeshError::parse(format!("offset {off}"), "non-finite coordinate"));
            }
            vertices.push(p);
        }
        faces.push([3 * i, 3 * i + 1, 3 * i + 2]);
    }
    Ok((vertices, faces))
}

/// Merges vertices within `tol` of an earlier vertex. Order of first
/// occurrence is preserved.
fn weld(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>, tol: f64) -> (Vec<Point3<f64>>, Vec<[usize; 3]>) {
    let cell = tol.max(f64::MIN_POSITIVE);
    let key = |p: &Point3<f64>| -> [i64; 3] {
        [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut merged: Vec<Point3<f64>> = Vec::new();
    let mut remap = Vec::with_capacity(vertices.len());
    let tol2 = tol * tol;
    for p in &vertices {
        let k = key(p);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &j in list {
                            if (merged[j] - p).norm_squared() <= tol2 {
                                found = Some(j);
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        let idx = found.unwrap_or_else(|| {
            merged.push(*p);
            grid.entry(k).or_default().push(merged.len() - 1);
            merged.len() - 1
        });
        remap.push(idx);
    }
    let faces = faces.into_iter().map(|[a, b, c]| [remap[a], remap[b], remap[c]]).collect();
    (merged, faces)
}

/// Writes OBJ with 17 significant digits so coordinates round-trip bit-exactly.
pub fn write_obj<W: Write>(mesh: &TriangleMesh, mut out: W) -> std::io::Result<()> {
    for v in mesh.vertices() {
        writeln!(out, "v {:.16e} {:.16e} {:.16e}", v.x, v.y, v.z)?;
    }
    for [a, b, c] in mesh.faces() {
        writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1)?;
    }
    out.flush()
}

pub fn save_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let file = fs::File::create(path)?;
    write_obj(mesh, BufWriter::new(file))?;
    Ok(())
}

/// Writes ASCII PLY, optionally with one extra per-vertex scalar property.
pub fn save_ply_ascii(
    mesh: &TriangleMesh,
    path: impl AsRef<Path>,
    vertex_scalar: Option<(&str, &[f64])>,
) -> Result<(), MeshError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "ply\nformat ascii 1.0")?;
    writeln!(out, "element vertex {}", mesh.vertex_count())?;
    writeln!(out, "property double x\nproperty double y\nproperty double z")?;
    if let Some((name, values)) = vertex_scalar {
        assert_eq!(values.len(), mesh.vertex_count(), "one scalar per vertex");
        writeln!(out, "property double {name}")?;
    }
    writeln!(out, "element face {}", mesh.face_count())?;
    writeln!(out, "property list uchar int vertex_indices\nend_header")?;
    for (i, v) in mesh.vertices().iter().enumerate() {
        write!(out, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z)?;
        if let Some((_, values)) = vertex_scalar {
            write!(out, " {:.16e}", values[i])?;
        }
        writeln!(out)?;
    }
    for [a, b, c] in mesh.faces() {
        writeln!(out, "3 {a} {b} {c}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_stl_binary(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let mut header = [0u8; 80];
    header[..9].copy_from_slice(b"ligdetect");
    out.write_all(&header)?;
    out.write_all(&(mesh.face_count() as u32).to_le_bytes())?;
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.triangle(f);
        let n = (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_default();
        for x in n.iter().chain(a.iter()).chain(b.iter()).chain(c.iter()) {
            out.write_all(&(*x as f32).to_le_bytes())?;
        }
        out.write_all(&0u16.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}
