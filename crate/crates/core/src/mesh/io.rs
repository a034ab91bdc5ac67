//! Plain-text mesh and nodal-field files.
//!
//! ```text
//! cracklab-mesh v1
//! config_hash <hex>
//! dim <d> cell_dim <k> radius <r>
//! nodes <n>
//! <x> <y> <z> <crack 0|1> <boundary 0|1>
//! cells <m>
//! <i0> <i1> ... <ik>
//! ```
//!
//! Field files start with `cracklab-field v1`, then `config_hash`, `values <n>`
//! and one value per line.

use std::fmt::Write as _;

use super::Mesh;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::io::fmt_g17;

pub const MESH_HEADER: &str = "cracklab-mesh v1";
pub const FIELD_HEADER: &str = "cracklab-field v1";

pub fn mesh_to_string(mesh: &Mesh, config_hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MESH_HEADER}");
    let _ = writeln!(s, "config_hash {config_hash}");
    let _ = writeln!(s, "dim {} cell_dim {} radius {}", mesh.dim, mesh.cell_dim, fmt_g17(mesh.radius));
    let _ = writeln!(s, "nodes {}", mesh.nodes.len());
    for (i, p) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(s, "{} {} {} {} {}", fmt_g17(p[0]), fmt_g17(p[1]), fmt_g17(p[2]), mesh.crack[i] as u8, mesh.boundary[i] as u8);
    }
    let _ = writeln!(s, "cells {}", mesh.cells.len());
    for c in 0..mesh.cells.len() {
        let v: Vec<String> = mesh.verts(c).iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "{}", v.join(" "));
    }
    s
}

pub fn field_to_string(values: &[f64], config_hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{FIELD_HEADER}");
    let _ = writeln!(s, "config_hash {config_hash}");
    let _ = writeln!(s, "values {}", values.len());
    for v in values {
        let _ = writeln!(s, "{}", fmt_g17(*v));
    }
    s
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Config(format!("malformed mesh/field file: {}", msg.into()))
}

fn next_line<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<&'a str> {
    lines.next().ok_or_else(|| parse_err("unexpected end of file"))
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse::<T>().map_err(|_| parse_err(format!("bad number {s:?}")))
}

/// Parse a mesh file, returning the mesh and its config hash.
pub fn mesh_from_str(text: &str) -> Result<(Mesh, String)> {
    let mut lines = text.lines();
    if next_line(&mut lines)?.trim() != MESH_HEADER {
        return Err(parse_err("missing mesh header"));
    }
    let hash = next_line(&mut lines)?.strip_prefix("config_hash ").ok_or_else(|| parse_err("missing config_hash"))?.to_string();
    let meta: Vec<&str> = next_line(&mut lines)?.split_whitespace().collect();
    if meta.len() != 6 {
        return Err(parse_err("bad dimension line"));
    }
    let dim: usize = num(meta[1])?;
    let cell_dim: usize = num(meta[3])?;
    let radius: f64 = num(meta[5])?;
    let n: usize = num(next_line(&mut lines)?.strip_prefix("nodes ").ok_or_else(|| parse_err("missing nodes"))?)?;
    let mut nodes = Vec::with_capacity(n);
    let mut crack = Vec::with_capacity(n);
    let mut boundary = Vec::with_capacity(n);
    for _ in 0..n {
        let f: Vec<&str> = next_line(&mut lines)?.split_whitespace().collect();
        if f.len() != 5 {
            return Err(parse_err("bad node line"));
        }
        nodes.push(Vec3::new(num(f[0])?, num(f[1])?, num(f[2])?));
        crack.push(f[3] == "1");
        boundary.push(f[4] == "1");
    }
    let m: usize = num(next_line(&mut lines)?.strip_prefix("cells ").ok_or_else(|| parse_err("missing cells"))?)?;
    let mut cells = Vec::with_capacity(m);
    for _ in 0..m {
        let f: Vec<&str> = next_line(&mut lines)?.split_whitespace().collect();
        if f.len() != cell_dim + 1 {
            return Err(parse_err("bad cell line"));
        }
        let mut c = [usize::MAX; 4];
        for (i, v) in f.iter().enumerate() {
            let idx: usize = num(v)?;
            if idx >= n {
                return Err(parse_err("cell index out of range"));
            }
            c[i] = idx;
        }
        cells.push(c);
    }
    Ok((Mesh { dim, cell_dim, nodes, cells, crack, boundary, radius }, hash))
}

/// Parse a field file, returning the values and the config hash.
pub fn field_from_str(text: &str) -> Result<(Vec<f64>, String)> {
    let mut lines = text.lines();
    if next_line(&mut lines)?.trim() != FIELD_HEADER {
        return Err(parse_err("missing field header"));
    }
    let hash = next_line(&mut lines)?.strip_prefix("config_hash ").ok_or_else(|| parse_err("missing config_hash"))?.to_string();
    let n: usize = num(next_line(&mut lines)?.strip_prefix("values ").ok_or_else(|| parse_err("missing values"))?)?;
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        v.push(num(next_line(&mut lines)?.trim())?);
    }
    Ok((v, hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build::{cracked_disk, PolarParams};

    #[test]
    fn mesh_and_field_round_trip_exactly() {
        let m = cracked_disk(PolarParams { radius: 0.5, h: 0.1, grading: 2.0 }).unwrap();
        let text = mesh_to_string(&m, "abc");
        let (back, hash) = mesh_from_str(&text).unwrap();
        assert_eq!(hash, "abc");
        assert_eq!(back.nodes, m.nodes);
        assert_eq!(back.cells, m.cells);
        assert_eq!(back.crack, m.crack);
        let vals: Vec<f64> = m.nodes.iter().map(|p| p[0].sin() / 3.0).collect();
        let (v2, _) = field_from_str(&field_to_string(&vals, "abc")).unwrap();
        assert_eq!(v2, vals);
        assert!(mesh_from_str("garbage").is_err());
    }
}
