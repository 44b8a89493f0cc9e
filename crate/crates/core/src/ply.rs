//! Minimal PLY reader/writer for labelled vertices and triangle meshes.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{input, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Vertex element of a PLY file: property names and one row per vertex.
pub(crate) struct VertexTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl VertexTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Reads the vertex element of an ASCII or binary little-endian PLY file.
pub(crate) fn read_vertices(path: &Path) -> Result<VertexTable> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    let mut lineno = 0;
    let mut next_line = |r: &mut BufReader<std::fs::File>, line: &mut String| -> Result<()> {
        line.clear();
        lineno += 1;
        if r.read_line(line)? == 0 {
            return Err(Error::Parse { line: lineno, message: "unexpected end of PLY header".into() });
        }
        Ok(())
    };
    next_line(&mut r, &mut line)?;
    if line.trim() != "ply" {
        return input("not a PLY file");
    }
    let mut binary = false;
    let mut vertex_count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    let mut element_before_vertex = false;
    loop {
        next_line(&mut r, &mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => binary = false,
            ["format", "binary_little_endian", _] => binary = true,
            ["format", other, _] => return input(format!("unsupported PLY format {other}")),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                let count: usize = count.parse().map_err(|_| Error::Input("bad PLY element count".into()))?;
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(count);
                } else if vertex_count.is_none() && count > 0 {
                    element_before_vertex = true;
                }
            }
            ["property", "list", ..] if in_vertex => return input("list properties on vertices are not supported"),
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| Error::Input(format!("unknown PLY type {ty}")))?;
                props.push((name.to_string(), s));
            }
            ["property", ..] => {}
            _ => return input(format!("unrecognised PLY header line {:?}", line.trim())),
        }
    }
    if element_before_vertex {
        return input("the vertex element must come first");
    }
    let n = vertex_count.ok_or_else(|| Error::Input("PLY file has no vertex element".into()))?;
    let names: Vec<String> = props.iter().map(|p| p.0.clone()).collect();
    let mut rows = Vec::with_capacity(n);
    if binary {
        let stride: usize = props.iter().map(|p| p.1.size()).sum();
        let mut buf = vec![0u8; stride];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            let mut off = 0;
            let mut row = Vec::with_capacity(props.len());
            for (_, s) in &props {
                row.push(s.read_le(&buf[off..]));
                off += s.size();
            }
            rows.push(row);
        }
    } else {
        for _ in 0..n {
            next_line(&mut r, &mut line)?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Input(format!("bad PLY vertex row {:?}", line.trim())))?;
            if row.len() != props.len() {
                return input(format!("PLY vertex row has {} values, header declares {}", row.len(), props.len()));
            }
            rows.push(row);
        }
    }
    Ok(VertexTable { names, rows })
}

/// Writes `x y z` doubles plus an int `label` per vertex.
pub(crate) fn write_labeled_vertices(path: &Path, coords: &[[f64; 3]], labels: &[u32]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nproperty int label\nend_header\n",
        coords.len()
    )?;
    for (c, &l) in coords.iter().zip(labels) {
        for v in c {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(l as i32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a binary little-endian triangle mesh; each comment must be a single line.
pub(crate) fn write_mesh(path: &Path, vertices: &[[f64; 3]], triangles: &[[u32; 3]], comments: &[&str]) -> Result<()> {
    if comments.iter().any(|c| c.contains('\n')) {
        return input("PLY comments must not contain newlines");
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "ply\nformat binary_little_endian 1.0\n")?;
    for c in comments {
        writeln!(w, "comment {c}")?;
    }
    write!(
        w,
        "element vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        vertices.len(),
        triangles.len()
    )?;
    for v in vertices {
        for c in v {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
    }
    for t in triangles {
        w.write_all(&[3u8])?;
        for &i in t {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a mesh written by [`write_mesh`] (binary little-endian, float vertices, uchar/int faces).
pub(crate) fn read_mesh(path: &Path) -> Result<(Vec<[f64; 3]>, Vec<[u32; 3]>)> {
    let bytes = std::fs::read(path)?;
    let end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| Error::Input("PLY header not terminated".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Input("PLY header is not UTF-8".into()))?;
    let mut nv = 0;
    let mut nf = 0;
    for l in header.lines() {
        let t: Vec<&str> = l.split_whitespace().collect();
        if let ["element", name, c] = t.as_slice() {
            let c: usize = c.parse().map_err(|_| Error::Input("bad element count".into()))?;
            match *name {
                "vertex" => nv = c,
                "face" => nf = c,
                _ => {}
            }
        }
    }
    let mut off = end + 11;
    let need = nv * 12 + nf * 13;
    if bytes.len() < off + need {
        return input("PLY body truncated");
    }
    let mut verts = Vec::with_capacity(nv);
    for _ in 0..nv {
        let mut v = [0.0; 3];
        for c in &mut v {
            *c = Scalar::F32.read_le(&bytes[off..]);
            off += 4;
        }
        verts.push(v);
    }
    let mut tris = Vec::with_capacity(nf);
    for _ in 0..nf {
        if bytes[off] != 3 {
            return input("only triangle faces are supported");
        }
        off += 1;
        let mut t = [0u32; 3];
        for i in &mut t {
            *i = i32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as u32;
            off += 4;
        }
        tris.push(t);
    }
    Ok((verts, tris))
}
