//! Text formats: native meshes, orientation files, round-count CSVs, and
//! the quadrangle subset of Gmsh MSH 2.2 ASCII.
//!
//! Native mesh:
//!
//! ```text
//! quadmesh <nv> <nc>
//! <v0> <v1> <v2> <v3>      (nc lines, cyclic order)
//! ```
//!
//! Orientation: one `<lo> <hi> <+|->` line per edge sorted by `(lo, hi)`;
//! `+` means the consistent direction is `lo -> hi`.
//!
//! All writers emit `\n` line endings and plain decimal integers.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::mesh::{EdgeKey, MeshError, QuadMesh, RelOrientation, VertexId};
use crate::orientation::OrientationMap;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("orientation file has no line for edge {0}")]
    MissingEdge(EdgeKey),
    #[error("orientation file names edge {0}, which is not in the mesh")]
    UnknownEdge(EdgeKey),
    #[error("no rows to write")]
    EmptyInput,
    #[error("process counts must be strictly increasing ({prev} then {next})")]
    UnorderedRows { prev: u64, next: u64 },
    #[error("unsupported MSH format: {0}")]
    UnsupportedVersion(String),
    #[error("malformed ${section} section: {msg}")]
    MalformedSection { section: String, msg: String },
    #[error("mesh contains no 4-node quadrangles")]
    NoQuadrangles,
}

fn parse_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, msg: msg.into() }
}

fn parse_int<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, FormatError> {
    tok.parse().map_err(|_| parse_err(line, format!("expected a non-negative integer, found `{tok}`")))
}

pub fn write_native(mesh: &QuadMesh) -> String {
    let mut out = format!("quadmesh {} {}\n", mesh.num_vertices(), mesh.num_cells());
    for c in mesh.cells() {
        let _ = writeln!(out, "{} {} {} {}", c[0], c[1], c[2], c[3]);
    }
    out
}

pub fn read_native(text: &str) -> Result<QuadMesh, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let (nv, nc) = match head[..] {
        ["quadmesh", nv, nc] => (parse_int::<usize>(nv, hl)?, parse_int::<usize>(nc, hl)?),
        _ => return Err(parse_err(hl, "expected header `quadmesh <nv> <nc>`")),
    };
    let mut cells = Vec::with_capacity(nc);
    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(parse_err(ln, format!("expected 4 vertex indices, found {}", toks.len())));
        }
        let mut cell = [0; 4];
        for (slot, tok) in toks.iter().enumerate() {
            cell[slot] = parse_int::<VertexId>(tok, ln)?;
        }
        cells.push(cell);
    }
    if cells.len() != nc {
        return Err(parse_err(hl, format!("header announces {nc} cells, found {}", cells.len())));
    }
    Ok(QuadMesh::new(nv, cells)?)
}

pub fn write_orientation(mesh: &QuadMesh, map: &OrientationMap) -> String {
    assert_eq!(map.len(), mesh.num_edges(), "orientation must cover every edge");
    let mut out = String::with_capacity(mesh.num_edges() * 12);
    for (e, key) in mesh.edges().iter().enumerate() {
        let dir = if map[e] == RelOrientation::Same { '+' } else { '-' };
        let _ = writeln!(out, "{} {} {}", key.lo, key.hi, dir);
    }
    out
}

pub fn read_orientation(mesh: &QuadMesh, text: &str) -> Result<OrientationMap, FormatError> {
    let mut flags: Vec<Option<RelOrientation>> = vec![None; mesh.num_edges()];
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [lo, hi, dir] = toks[..] else {
            return Err(parse_err(ln, "expected `<lo> <hi> <+|->`"));
        };
        let (a, b): (VertexId, VertexId) = (parse_int(lo, ln)?, parse_int(hi, ln)?);
        if a >= b {
            return Err(parse_err(ln, "endpoints must be written as lo < hi"));
        }
        let key = EdgeKey { lo: a, hi: b };
        let o = match dir {
            "+" => RelOrientation::Same,
            "-" => RelOrientation::Flip,
            other => return Err(parse_err(ln, format!("direction must be + or -, found `{other}`"))),
        };
        let e = mesh.edge_id(key).ok_or(FormatError::UnknownEdge(key))?;
        if flags[e].replace(o).is_some() {
            return Err(parse_err(ln, format!("edge {key} listed twice")));
        }
    }
    let flags = flags
        .into_iter()
        .enumerate()
        .map(|(e, f)| f.ok_or(FormatError::MissingEdge(mesh.edge(e))))
        .collect::<Result<_, _>>()?;
    Ok(OrientationMap::from_flags(flags))
}

/// `P,rounds` CSV with one row per process count.
pub fn write_rounds_csv(rows: &[(u64, u64)]) -> Result<String, FormatError> {
    if rows.is_empty() {
        return Err(FormatError::EmptyInput);
    }
    for w in rows.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(FormatError::UnorderedRows { prev: w[0].0, next: w[1].0 });
        }
    }
    let mut out = String::from("P,rounds\n");
    for (p, rounds) in rows {
        let _ = writeln!(out, "{p},{rounds}");
    }
    Ok(out)
}

pub fn read_rounds_csv(text: &str) -> Result<Vec<(u64, u64)>, FormatError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "P,rounds")) => {}
        _ => return Err(parse_err(1, "expected header `P,rounds`")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let (p, r) = line.split_once(',').ok_or_else(|| parse_err(i + 1, "expected `P,rounds`"))?;
        rows.push((parse_int(p, i + 1)?, parse_int(r, i + 1)?));
    }
    if rows.is_empty() {
        return Err(FormatError::EmptyInput);
    }
    Ok(rows)
}

fn malformed(section: &str, msg: impl Into<String>) -> FormatError {
    FormatError::MalformedSection { section: section.to_string(), msg: msg.into() }
}

const MSH_QUAD: u32 = 3;

/// Reads the 4-node quadrangles (element type 3) of an MSH 2.x ASCII file.
///
/// Node coordinates and tags are discarded. The nodes referenced by
/// quadrangles are renumbered densely from 0 in ascending Gmsh id order.
pub fn read_msh(text: &str) -> Result<QuadMesh, FormatError> {
    let mut sections: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let mut lines = text.lines().map(str::trim);
    while let Some(line) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let Some(name) = line.strip_prefix('$') else {
            return Err(malformed("?", format!("unexpected line outside a section: `{line}`")));
        };
        let end = format!("$End{name}");
        let mut body = Vec::new();
        loop {
            match lines.next() {
                Some(l) if l == end => break,
                Some(l) => body.push(l),
                None => return Err(malformed(name, format!("missing {end}"))),
            }
        }
        sections.insert(name.to_string(), body);
    }

    let format = sections.get("MeshFormat").ok_or_else(|| malformed("MeshFormat", "section missing"))?;
    let toks: Vec<&str> = format.first().map(|l| l.split_whitespace().collect()).unwrap_or_default();
    let [version, file_type, _data_size] = toks[..] else {
        return Err(malformed("MeshFormat", "expected `<version> <file-type> <data-size>`"));
    };
    if !version.starts_with("2.") {
        return Err(FormatError::UnsupportedVersion(format!("version {version}")));
    }
    if file_type != "0" {
        return Err(FormatError::UnsupportedVersion("binary file".into()));
    }

    let nodes = sections.get("Nodes").ok_or_else(|| malformed("Nodes", "section missing"))?;
    let declared: usize =
        nodes.first().and_then(|l| l.parse().ok()).ok_or_else(|| malformed("Nodes", "missing node count"))?;
    if nodes.len() != declared + 1 {
        return Err(malformed("Nodes", format!("expected {declared} nodes, found {}", nodes.len() - 1)));
    }
    let mut known = HashMap::with_capacity(declared);
    for l in &nodes[1..] {
        let mut it = l.split_whitespace();
        let id: u64 =
            it.next().and_then(|t| t.parse().ok()).ok_or_else(|| malformed("Nodes", format!("bad node line `{l}`")))?;
        if it.clone().count() != 3 || it.any(|t| t.parse::<f64>().is_err()) {
            return Err(malformed("Nodes", format!("bad coordinates in `{l}`")));
        }
        known.insert(id, ());
    }

    let elements = sections.get("Elements").ok_or_else(|| malformed("Elements", "section missing"))?;
    let declared: usize =
        elements.first().and_then(|l| l.parse().ok()).ok_or_else(|| malformed("Elements", "missing element count"))?;
    if elements.len() != declared + 1 {
        return Err(malformed("Elements", format!("expected {declared} elements, found {}", elements.len() - 1)));
    }
    let mut quads: Vec<[u64; 4]> = Vec::new();
    for l in &elements[1..] {
        let nums: Vec<u64> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| malformed("Elements", format!("bad element line `{l}`"))))
            .collect::<Result<_, _>>()?;
        if nums.len() < 3 {
            return Err(malformed("Elements", format!("bad element line `{l}`")));
        }
        if nums[1] != MSH_QUAD as u64 {
            continue;
        }
        let ntags = nums[2] as usize;
        let conn = &nums[3.min(nums.len())..];
        if conn.len() != ntags + 4 {
            return Err(malformed("Elements", format!("quadrangle needs {ntags} tags and 4 nodes: `{l}`")));
        }
        let v = [conn[ntags], conn[ntags + 1], conn[ntags + 2], conn[ntags + 3]];
        if let Some(missing) = v.iter().find(|id| !known.contains_key(id)) {
            return Err(malformed("Elements", format!("element references unknown node {missing}")));
        }
        quads.push(v);
    }
    if quads.is_empty() {
        return Err(FormatError::NoQuadrangles);
    }

    let mut used: Vec<u64> = quads.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let dense = |id: u64| used.binary_search(&id).expect("collected above");
    let cells = quads.iter().map(|q| q.map(dense)).collect();
    Ok(QuadMesh::new(used.len(), cells)?)
}
