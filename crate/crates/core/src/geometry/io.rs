//! ASCII PLY and plain XYZ point clouds. Coordinates in files are
//! millimetres; in memory they are metres.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::ParticleSet;
use crate::error::{Error, Result};
use crate::mpm::Tag;

pub const MM_PER_M: f64 = 1000.0;

pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<ParticleSet> {
    let path = path.as_ref();
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::EmptyCloud(path.to_path_buf())),
    };
    let (positions, normals) = if first.trim() == "ply" {
        read_ply(path, lines)?
    } else {
        let mut out = Vec::new();
        parse_xyz_line(path, 1, &first, &mut out)?;
        for (n, line) in lines.enumerate() {
            parse_xyz_line(path, n + 2, &line?, &mut out)?;
        }
        (out, None)
    };
    if positions.is_empty() {
        return Err(Error::EmptyCloud(path.to_path_buf()));
    }
    let mut set = ParticleSet::new(positions, Tag::Indenter, path.display().to_string());
    set.normals = normals;
    Ok(set)
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_xyz_line(path: &Path, lineno: usize, line: &str, out: &mut Vec<Vector3<f64>>) -> Result<()> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(());
    }
    let mut xyz = [0.0; 3];
    let mut fields = line.split_whitespace();
    for v in &mut xyz {
        let tok = fields
            .next()
            .ok_or_else(|| parse_error(path, lineno, format!("expected 3 coordinates in {line:?}")))?;
        *v = parse_coord(path, lineno, tok)?;
    }
    out.push(Vector3::from(xyz) / MM_PER_M);
    Ok(())
}

fn parse_coord(path: &Path, lineno: usize, tok: &str) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_error(path, lineno, format!("invalid coordinate {tok:?}"))),
    }
}

type PlyBody = (Vec<Vector3<f64>>, Option<Vec<Vector3<f64>>>);

/// Vertex positions, plus normals when the vertex has `nx ny nz`.
fn read_ply<I>(path: &Path, mut lines: I) -> Result<PlyBody>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let mut lineno = 1;
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    loop {
        lineno += 1;
        let line = lines
            .next()
            .ok_or_else(|| parse_error(path, lineno, "missing end_header"))??;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(parse_error(path, lineno, "only ASCII PLY is supported"));
                }
            }
            Some("element") => {
                let name = tok.next();
                in_vertex = name == Some("vertex");
                if in_vertex {
                    let n = tok
                        .next()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| parse_error(path, lineno, "bad vertex count"))?;
                    vertex_count = Some(n);
                } else if vertex_count.is_none() {
                    return Err(parse_error(path, lineno, "vertex element must come first"));
                }
            }
            Some("property") if in_vertex => {
                let name = tok.last().unwrap_or_default();
                props.push(name.to_string());
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    let n = vertex_count.ok_or_else(|| parse_error(path, lineno, "no vertex element"))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| parse_error(path, lineno, format!("vertex has no {name} property")))
    };
    let cols = [col("x")?, col("y")?, col("z")?];
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Ok(a), Ok(b), Ok(c)) => Some([a, b, c]),
        _ => None,
    };
    let mut normals = normal_cols.map(|_| Vec::with_capacity(n));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        lineno += 1;
        let line = lines
            .next()
            .ok_or_else(|| parse_error(path, lineno, format!("expected {n} vertices, found {}", out.len())))??;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < props.len() {
            return Err(parse_error(
                path,
                lineno,
                format!("expected {} values, found {}", props.len(), fields.len()),
            ));
        }
        let mut xyz = [0.0; 3];
        for (v, &c) in xyz.iter_mut().zip(&cols) {
            *v = parse_coord(path, lineno, fields[c])?;
        }
        out.push(Vector3::from(xyz) / MM_PER_M);
        if let (Some(nc), Some(normals)) = (&normal_cols, &mut normals) {
            let mut v = [0.0; 3];
            for (v, &c) in v.iter_mut().zip(nc) {
                *v = parse_coord(path, lineno, fields[c])?;
            }
            let v = Vector3::from(v);
            let len = v.norm();
            if len == 0.0 {
                return Err(parse_error(path, lineno, "zero-length normal"));
            }
            normals.push(v / len);
        }
    }
    Ok((out, normals))
}

pub fn write_ply(path: impl AsRef<Path>, set: &ParticleSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply\nformat ascii 1.0\ncomment units mm")?;
    writeln!(w, "element vertex {}", set.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    if set.normals.is_some() {
        writeln!(w, "property float nx\nproperty float ny\nproperty float nz")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in set.positions.iter().enumerate() {
        let mm = p * MM_PER_M;
        match &set.normals {
            Some(n) => {
                let n = n[i];
                writeln!(w, "{} {} {} {} {} {}", mm.x, mm.y, mm.z, n.x, n.y, n.z)?
            }
            None => writeln!(w, "{} {} {}", mm.x, mm.y, mm.z)?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_xyz(path: impl AsRef<Path>, set: &ParticleSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in &set.positions {
        let mm = p * MM_PER_M;
        writeln!(w, "{} {} {}", mm.x, mm.y, mm.z)?;
    }
    w.flush()?;
    Ok(())
}
