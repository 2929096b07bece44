//! Text matrix formats, JSON instance descriptors and instance digests.
//!
//! Dense: first line `rows cols`, then one whitespace-separated row per line.
//! Sparse: first line `rows cols nnz`, then `i j v` triplets (0-based).
//! Values are written in shortest round-trip form, so reloading is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generators::{
    build_compressed_sensing, CompressedSensingInstance, Family, GenSpec, ScadLsInstance,
};
use crate::problems::{FiniteSumProblem, MultiBlockProblem};
use crate::scad::build_scad_ls;

pub const DESCRIPTOR_FORMAT: &str = "rapopt-instance/1";

pub fn dense_to_string(m: &DMatrix<f64>) -> String {
    let mut s = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                s.push(' ');
            }
            write!(s, "{}", m[(i, j)]).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn sparse_to_string(m: &DMatrix<f64>) -> String {
    let mut body = String::new();
    let mut nnz = 0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                nnz += 1;
                writeln!(body, "{i} {j} {v}").unwrap();
            }
        }
    }
    format!("{} {} {nnz}\n{body}", m.nrows(), m.ncols())
}

fn parse_err(what: &str, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{what}, line {line}: {msg}"))
}

fn parse_header<'a>(text: &'a str, what: &str, fields: usize) -> Result<(Vec<usize>, std::iter::Enumerate<std::str::Lines<'a>>)> {
    let mut lines = text.lines().enumerate();
    let (_, head) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::Parse(format!("{what}: empty file")))?;
    let dims: Vec<usize> = head
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| parse_err(what, 1, e)))
        .collect::<Result<_>>()?;
    if dims.len() != fields {
        return Err(parse_err(what, 1, format!("expected {fields} header fields, found {}", dims.len())));
    }
    Ok((dims, lines))
}

fn parse_value(tok: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|e| parse_err(what, line, e))?;
    if !v.is_finite() {
        return Err(parse_err(what, line, "non-finite value"));
    }
    Ok(v)
}

pub fn parse_dense(text: &str) -> Result<DMatrix<f64>> {
    let what = "dense matrix";
    let (dims, lines) = parse_header(text, what, 2)?;
    let (rows, cols) = (dims[0], dims[1]);
    let mut m = DMatrix::zeros(rows, cols);
    let mut i = 0;
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if i == rows {
            return Err(parse_err(what, ln + 1, "more rows than declared"));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != cols {
            return Err(parse_err(what, ln + 1, format!("expected {cols} values, found {}", toks.len())));
        }
        for (j, t) in toks.iter().enumerate() {
            m[(i, j)] = parse_value(t, what, ln + 1)?;
        }
        i += 1;
    }
    if i != rows {
        return Err(Error::Parse(format!("{what}: expected {rows} rows, found {i}")));
    }
    Ok(m)
}

pub fn parse_sparse(text: &str) -> Result<DMatrix<f64>> {
    let what = "sparse matrix";
    let (dims, lines) = parse_header(text, what, 3)?;
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    let mut m = DMatrix::zeros(rows, cols);
    let mut count = 0;
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(what, ln + 1, "expected `i j v`"));
        }
        let i: usize = toks[0].parse().map_err(|e| parse_err(what, ln + 1, e))?;
        let j: usize = toks[1].parse().map_err(|e| parse_err(what, ln + 1, e))?;
        if i >= rows || j >= cols {
            return Err(parse_err(what, ln + 1, format!("index ({i}, {j}) out of range")));
        }
        m[(i, j)] = parse_value(toks[2], what, ln + 1)?;
        count += 1;
    }
    if count != nnz {
        return Err(Error::Parse(format!("{what}: header declares {nnz} entries, found {count}")));
    }
    Ok(m)
}

pub fn vector_to_string(v: &[f64]) -> String {
    dense_to_string(&DMatrix::from_column_slice(v.len(), 1, v))
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let m = parse_dense(text)?;
    if m.ncols() != 1 {
        return Err(Error::Parse(format!("vector file must have one column, found {}", m.ncols())));
    }
    Ok(m.as_slice().to_vec())
}

/// JSON descriptor. File paths are relative to the descriptor's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub format: String,
    pub spec: GenSpec,
    /// Dense `A` (scad-ls) or sparse horizontal concatenation `[A_1 .. A_{m-1}]`.
    pub matrix: String,
    pub rhs: String,
    pub ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_coupling: Option<String>,
    #[serde(default)]
    pub redrawn_columns: usize,
    pub digest: String,
}

/// A loaded instance of either family.
#[derive(Debug, Clone)]
pub enum Instance {
    FiniteSum { spec: GenSpec, problem: FiniteSumProblem, ground_truth: Vec<f64> },
    MultiBlock { spec: GenSpec, problem: MultiBlockProblem, ground_truth: Vec<f64> },
}

impl Instance {
    pub fn spec(&self) -> &GenSpec {
        match self {
            Self::FiniteSum { spec, .. } | Self::MultiBlock { spec, .. } => spec,
        }
    }

    pub fn ground_truth(&self) -> &[f64] {
        match self {
            Self::FiniteSum { ground_truth, .. } | Self::MultiBlock { ground_truth, .. } => ground_truth,
        }
    }
}

/// Serialized files of an instance, in digest order.
struct Files {
    entries: Vec<(String, String)>,
}

/// SHA-256 over the canonical spec JSON followed by each file name and body.
fn digest(spec: &GenSpec, files: &Files) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec)?);
    for (name, body) in &files.entries {
        h.update([0u8]);
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update(body.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

fn hstack(blocks: &[DMatrix<f64>], rows: usize) -> DMatrix<f64> {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        out.view_mut((0, off), (rows, b.ncols())).copy_from(b);
        off += b.ncols();
    }
    out
}

fn scad_ls_files(inst: &ScadLsInstance) -> Files {
    let a = DMatrix::from_row_slice(inst.spec.m, inst.spec.n, &inst.matrix);
    Files {
        entries: vec![
            ("A.txt".into(), dense_to_string(&a)),
            ("b.txt".into(), vector_to_string(&inst.rhs)),
            ("xhat.txt".into(), vector_to_string(&inst.ground_truth)),
        ],
    }
}

fn cs_files(inst: &CompressedSensingInstance) -> Files {
    let n = inst.spec.n;
    Files {
        entries: vec![
            ("A.txt".into(), sparse_to_string(&hstack(&inst.blocks, n))),
            ("b.txt".into(), vector_to_string(&inst.rhs)),
            ("xhat.txt".into(), vector_to_string(&inst.ground_truth)),
            ("Am.txt".into(), sparse_to_string(&DMatrix::identity(n, n))),
        ],
    }
}

pub fn scad_ls_digest(inst: &ScadLsInstance) -> Result<String> {
    digest(&inst.spec, &scad_ls_files(inst))
}

pub fn compressed_sensing_digest(inst: &CompressedSensingInstance) -> Result<String> {
    digest(&inst.spec, &cs_files(inst))
}

fn write_files(spec: &GenSpec, files: Files, dir: &Path, redrawn_columns: usize) -> Result<(PathBuf, Descriptor)> {
    fs::create_dir_all(dir)?;
    let digest = digest(spec, &files)?;
    for (name, body) in &files.entries {
        fs::write(dir.join(name), body)?;
    }
    let name = |i: usize| files.entries[i].0.clone();
    let desc = Descriptor {
        format: DESCRIPTOR_FORMAT.into(),
        spec: spec.clone(),
        matrix: name(0),
        rhs: name(1),
        ground_truth: name(2),
        last_coupling: files.entries.get(3).map(|e| e.0.clone()),
        redrawn_columns,
        digest,
    };
    let path = dir.join("instance.json");
    fs::write(&path, serde_json::to_string_pretty(&desc)? + "\n")?;
    Ok((path, desc))
}

/// Writes matrix files and `instance.json` into `dir`.
pub fn write_scad_ls(inst: &ScadLsInstance, dir: &Path) -> Result<(PathBuf, Descriptor)> {
    write_files(&inst.spec, scad_ls_files(inst), dir, 0)
}

pub fn write_compressed_sensing(inst: &CompressedSensingInstance, dir: &Path) -> Result<(PathBuf, Descriptor)> {
    write_files(&inst.spec, cs_files(inst), dir, inst.redrawn_columns)
}

/// Loads an instance from a descriptor, verifying its digest.
pub fn load_instance(path: &Path) -> Result<Instance> {
    let desc: Descriptor = serde_json::from_str(&fs::read_to_string(path)?)?;
    if desc.format != DESCRIPTOR_FORMAT {
        return Err(Error::Parse(format!("unsupported descriptor format `{}`", desc.format)));
    }
    desc.spec.validate()?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let read = |name: &str| -> Result<(String, String)> { Ok((name.to_string(), fs::read_to_string(dir.join(name))?)) };
    let mut entries = vec![read(&desc.matrix)?, read(&desc.rhs)?, read(&desc.ground_truth)?];
    if let Some(am) = &desc.last_coupling {
        entries.push(read(am)?);
    }
    let files = Files { entries };
    let actual = digest(&desc.spec, &files)?;
    if actual != desc.digest {
        return Err(Error::Parse(format!("digest mismatch: descriptor {}, files {actual}", desc.digest)));
    }
    let spec = desc.spec;
    let rhs = parse_vector(&files.entries[1].1)?;
    let ground_truth = parse_vector(&files.entries[2].1)?;
    let check = |found: usize, expected: usize| {
        if found == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    };
    check(ground_truth.len(), spec.signal_dim())?;
    match spec.family {
        Family::ScadLs => {
            let a = parse_dense(&files.entries[0].1)?;
            check(a.nrows(), spec.m)?;
            check(a.ncols(), spec.n)?;
            let rows: Vec<f64> = a.transpose().as_slice().to_vec();
            let problem = build_scad_ls(rows, spec.m, spec.n, rhs, spec.scad)?;
            Ok(Instance::FiniteSum { spec, problem, ground_truth })
        }
        Family::CompressedSensing => {
            let a = parse_sparse(&files.entries[0].1)?;
            let d = spec.block_dim;
            check(a.nrows(), spec.n)?;
            check(a.ncols(), (spec.m - 1) * d)?;
            let am = match files.entries.get(3) {
                Some((_, body)) => parse_sparse(body)?,
                None => return Err(Error::Parse("compressed-sensing descriptor lacks last_coupling".into())),
            };
            if am != DMatrix::identity(spec.n, spec.n) {
                return Err(Error::Parse("compressed-sensing last coupling must be the identity".into()));
            }
            let blocks: Vec<DMatrix<f64>> =
                (0..spec.m - 1).map(|i| a.columns(i * d, d).into_owned()).collect();
            let problem = build_compressed_sensing(&blocks, rhs, spec.scad)?;
            Ok(Instance::MultiBlock { spec, problem, ground_truth })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_compressed_sensing, gen_scad_ls};

    #[test]
    fn dense_round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.5e-300, 1.0 / 3.0, 7.0, 0.0, -1e17]);
        assert_eq!(parse_dense(&dense_to_string(&m)).unwrap(), m);
        assert_eq!(dense_to_string(&m).lines().next(), Some("2 3"));
    }

    #[test]
    fn sparse_round_trip_is_exact() {
        let m = DMatrix::from_row_slice(3, 2, &[0.0, 1.5, 0.0, 0.0, -0.7, 0.0]);
        let s = sparse_to_string(&m);
        assert!(s.starts_with("3 2 2\n"));
        assert_eq!(parse_sparse(&s).unwrap(), m);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(parse_dense("").is_err());
        assert!(parse_dense("2 2\n1 2\n").is_err());
        assert!(parse_dense("1 2\n1 x\n").is_err());
        assert!(parse_dense("1 1\n1\n2\n").is_err());
        assert!(parse_sparse("2 2 1\n5 0 1\n").is_err());
        assert!(parse_sparse("2 2 2\n0 0 1\n").is_err());
        assert!(parse_vector("2 2\n1 2\n3 4\n").is_err());
        assert!(parse_dense("1 1\nNaN\n").is_err());
    }

    #[test]
    fn scad_ls_write_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let inst = gen_scad_ls(&GenSpec::scad_ls(12, 4, 3)).unwrap();
        let (path, desc) = write_scad_ls(&inst, dir.path()).unwrap();
        assert_eq!(desc.digest, scad_ls_digest(&inst).unwrap());
        match load_instance(&path).unwrap() {
            Instance::FiniteSum { problem, ground_truth, .. } => {
                assert_eq!(ground_truth, inst.ground_truth);
                let x = vec![0.3, -0.2, 0.1, 1.0];
                let mut c = Default::default();
                let mut c2 = Default::default();
                assert_eq!(
                    problem.full_objective(&x, &mut c).unwrap(),
                    inst.problem.full_objective(&x, &mut c2).unwrap()
                );
            }
            _ => panic!("wrong family"),
        }
    }

    #[test]
    fn compressed_sensing_write_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let inst = gen_compressed_sensing(&GenSpec::compressed_sensing(9, 6, 4)).unwrap();
        let (path, desc) = write_compressed_sensing(&inst, dir.path()).unwrap();
        assert_eq!(desc.redrawn_columns, inst.redrawn_columns);
        match load_instance(&path).unwrap() {
            Instance::MultiBlock { problem, .. } => {
                assert_eq!(problem.num_blocks(), 9);
                for (b, a) in problem.blocks().iter().zip(&inst.blocks) {
                    assert_eq!(&b.coupling, a);
                }
                assert_eq!(problem.rhs(), inst.rhs.as_slice());
            }
            _ => panic!("wrong family"),
        }
    }

    #[test]
    fn tampering_breaks_the_digest() {
        let dir = tempfile::tempdir().unwrap();
        let inst = gen_scad_ls(&GenSpec::scad_ls(5, 3, 1)).unwrap();
        let (path, _) = write_scad_ls(&inst, dir.path()).unwrap();
        let b = dir.path().join("b.txt");
        let text = fs::read_to_string(&b).unwrap();
        fs::write(&b, text + "\n").unwrap();
        assert!(load_instance(&path).is_err());
    }

    #[test]
    fn digest_is_seed_sensitive() {
        let a = gen_scad_ls(&GenSpec::scad_ls(5, 3, 1)).unwrap();
        let b = gen_scad_ls(&GenSpec::scad_ls(5, 3, 1)).unwrap();
        let c = gen_scad_ls(&GenSpec::scad_ls(5, 3, 2)).unwrap();
        assert_eq!(scad_ls_digest(&a).unwrap(), scad_ls_digest(&b).unwrap());
        assert_ne!(scad_ls_digest(&a).unwrap(), scad_ls_digest(&c).unwrap());
    }
}
