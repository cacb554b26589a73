//! Matrix Market reading and writing (real matrices only).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use faer::{Mat, MatRef};
use thiserror::Error;

use crate::mna::StateSpaceModel;
use crate::sparse::{self, SparseMat};

#[derive(Debug, Error)]
pub enum MtxError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: field `{field}` is not real-valued")]
    NonReal { path: PathBuf, field: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0} must be symmetric")]
    Asymmetric(&'static str),
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

pub fn parse_mtx(text: &str, path: &Path) -> Result<SparseMat, MtxError> {
    let fmt = |line: usize, message: String| MtxError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| fmt(1, "empty file".into()))?;
    let words: Vec<String> = header.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(fmt(1, "expected `%%MatrixMarket matrix <format> <field> <symmetry>`".into()));
    }
    let coordinate = match words[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(fmt(1, format!("unknown format `{other}`"))),
    };
    match words[3].as_str() {
        "real" | "double" | "integer" => {}
        other => {
            return Err(MtxError::NonReal {
                path: path.to_path_buf(),
                field: other.to_string(),
            })
        }
    }
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(fmt(1, format!("unsupported symmetry `{other}`"))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data.next().ok_or_else(|| fmt(2, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|w| w.parse().map_err(|_| fmt(size_line + 1, format!("bad size field `{w}`"))))
        .collect::<Result<_, _>>()?;
    let (nrows, ncols) = match (coordinate, dims.as_slice()) {
        (true, [r, c, _]) | (false, [r, c]) => (*r, *c),
        _ => return Err(fmt(size_line + 1, "wrong number of size fields".into())),
    };

    let mut entries = Vec::new();
    let mut push = |i: usize, j: usize, v: f64| {
        entries.push((i, j, v));
        if i != j {
            match symmetry {
                Symmetry::Symmetric => entries.push((j, i, v)),
                Symmetry::SkewSymmetric => entries.push((j, i, -v)),
                Symmetry::General => {}
            }
        }
    };
    let parse_f = |line: usize, w: &str| -> Result<f64, MtxError> {
        w.parse::<f64>().map_err(|_| fmt(line + 1, format!("bad value `{w}`")))
    };

    if coordinate {
        let nnz = dims[2];
        let mut count = 0;
        for (ln, l) in data {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(fmt(ln + 1, format!("expected 3 fields, found {}", f.len())));
            }
            let idx = |w: &str, bound: usize| -> Result<usize, MtxError> {
                match w.parse::<usize>() {
                    Ok(k) if k >= 1 && k <= bound => Ok(k - 1),
                    _ => Err(fmt(ln + 1, format!("index `{w}` out of range 1..={bound}"))),
                }
            };
            push(idx(f[0], nrows)?, idx(f[1], ncols)?, parse_f(ln, f[2])?);
            count += 1;
        }
        if count != nnz {
            return Err(fmt(size_line + 1, format!("header declares {nnz} entries, found {count}")));
        }
    } else {
        // Column-major; symmetric storage lists the lower triangle only.
        let mut positions = (0..ncols).flat_map(|j| {
            let start = if symmetry == Symmetry::General { 0 } else { j };
            (start..nrows).map(move |i| (i, j))
        });
        for (ln, l) in data {
            for w in l.split_whitespace() {
                let (i, j) = positions
                    .next()
                    .ok_or_else(|| fmt(ln + 1, "more values than the declared size".into()))?;
                let v = parse_f(ln, w)?;
                if v != 0.0 {
                    push(i, j, v);
                }
            }
        }
        if positions.next().is_some() {
            return Err(fmt(size_line + 1, "fewer values than the declared size".into()));
        }
    }
    Ok(sparse::from_triplets(nrows, ncols, entries))
}

pub fn read_mtx(path: &Path) -> Result<SparseMat, MtxError> {
    let text = fs::read_to_string(path).map_err(|source| MtxError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_mtx(&text, path)
}

/// Coordinate/real/general text; `{:e}` formatting round-trips every `f64` exactly.
pub fn format_mtx(a: &SparseMat) -> String {
    let entries: Vec<_> = sparse::entries(a).filter(|e| e.2 != 0.0).collect();
    let mut out = String::with_capacity(32 * (entries.len() + 2));
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", a.nrows(), a.ncols(), entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v);
    }
    out
}

pub fn write_mtx(path: &Path, a: &SparseMat) -> std::io::Result<()> {
    fs::write(path, format_mtx(a))
}

pub fn write_dense_mtx(path: &Path, a: MatRef<'_, f64>) -> std::io::Result<()> {
    write_mtx(path, &sparse::from_dense(a))
}

pub fn read_dense_mtx(path: &Path) -> Result<Mat<f64>, MtxError> {
    read_mtx(path).map(|a| sparse::to_dense(&a))
}

/// Paths of the four descriptor matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixPaths {
    pub g: PathBuf,
    pub c: PathBuf,
    pub b: PathBuf,
    pub l: PathBuf,
}

pub fn load_matrices(paths: &MatrixPaths) -> Result<StateSpaceModel, MtxError> {
    let g = read_mtx(&paths.g)?;
    let c = read_mtx(&paths.c)?;
    let b = read_mtx(&paths.b)?;
    let l = read_mtx(&paths.l)?;
    let n = g.nrows();
    let check = |ok: bool, what: String| if ok { Ok(()) } else { Err(MtxError::Dimension(what)) };
    check(g.ncols() == n, format!("G is {}x{}, expected square", n, g.ncols()))?;
    check(
        c.nrows() == n && c.ncols() == n,
        format!("C is {}x{}, expected {n}x{n}", c.nrows(), c.ncols()),
    )?;
    check(b.nrows() == n, format!("B has {} rows, expected N = {n}", b.nrows()))?;
    check(l.ncols() == n, format!("L has {} columns, expected N = {n}", l.ncols()))?;
    if !sparse::is_symmetric(&c, 1e-12) {
        return Err(MtxError::Asymmetric("C"));
    }
    Ok(StateSpaceModel::new(c, g, b, l))
}

pub fn save_matrices(model: &StateSpaceModel, paths: &MatrixPaths) -> std::io::Result<()> {
    write_mtx(&paths.g, &model.g)?;
    write_mtx(&paths.c, &model.c)?;
    write_mtx(&paths.b, &model.b)?;
    write_mtx(&paths.l, &model.l)
}
