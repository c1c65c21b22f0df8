//! Dense complex arrays on disk: CSV with one integer index column per
//! grid coordinate, then `re,im`, row-major over the tensored grid.  The
//! header names each index coordinate, so files are self-describing:
//!
//! ```text
//! a,b,re,im
//! 0,0,1.0e0,0.0e0
//! 0,1,...
//! ```

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use groupquant::dual::DualGrid;
use groupquant::group::{GroupGrid, GroupKind, SampledFunction};
use groupquant::oracle::ScalarSymbol;
use num_complex::Complex64 as C64;

/// Human-readable chart coordinate names per family.
pub fn axis_names(grid: &GroupGrid) -> Vec<String> {
    match grid.spec().kind() {
        GroupKind::Euclidean(1) => vec!["x".into()],
        GroupKind::Euclidean(n) => (1..=n).map(|d| format!("x{d}")).collect(),
        GroupKind::Affine => vec!["a".into(), "b".into()],
        GroupKind::AffineLine => vec!["a".into(), "b".into(), "c".into()],
        GroupKind::Bianchi(_) => vec!["v1".into(), "v2".into(), "c".into()],
    }
}

fn format_rows(names: &[String], shape: &[usize], values: &[C64]) -> String {
    let mut out = String::new();
    out.push_str(&names.join(","));
    out.push_str(",re,im\n");
    let dim = shape.len();
    let mut idx = vec![0usize; dim];
    for v in values {
        for (d, i) in idx.iter().enumerate() {
            out.push_str(&i.to_string());
            let _ = d;
            out.push(',');
        }
        out.push_str(&format!("{:.17e},{:.17e}\n", v.re, v.im));
        // advance the row-major multi-index
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

fn parse_rows(text: &str, names: &[String], shape: &[usize]) -> Result<Vec<C64>> {
    let expected: usize = shape.iter().product();
    let mut lines = text.lines();
    let header = lines.next().context("empty CSV file")?;
    let want_header =
        names.iter().cloned().chain(["re".into(), "im".into()]).collect::<Vec<_>>().join(",");
    if header.trim() != want_header {
        bail!("CSV header '{header}' does not match expected '{want_header}'");
    }
    let mut values = Vec::with_capacity(expected);
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() + 2 {
            bail!("line {}: expected {} fields, got {}", lineno + 2, names.len() + 2, fields.len());
        }
        let mut flat = 0usize;
        for (d, f) in fields[..names.len()].iter().enumerate() {
            let i: usize = f
                .trim()
                .parse()
                .with_context(|| format!("line {}: bad index '{}'", lineno + 2, f))?;
            if i >= shape[d] {
                bail!("line {}: index {} out of range for {} (size {})",
                    lineno + 2, i, names[d], shape[d]);
            }
            flat = flat * shape[d] + i;
        }
        if flat != values.len() {
            bail!("line {}: rows must be row-major and complete (expected flat index {}, got {})",
                lineno + 2, values.len(), flat);
        }
        let re: f64 = fields[names.len()]
            .trim()
            .parse()
            .with_context(|| format!("line {}: bad re field", lineno + 2))?;
        let im: f64 = fields[names.len() + 1]
            .trim()
            .parse()
            .with_context(|| format!("line {}: bad im field", lineno + 2))?;
        values.push(C64::new(re, im));
    }
    if values.len() != expected {
        bail!("dimension error: expected {expected} rows, got {}", values.len());
    }
    Ok(values)
}

pub fn write_function(path: &Path, f: &SampledFunction) -> Result<()> {
    let grid = f.grid();
    let names = axis_names(grid);
    let shape: Vec<usize> = (0..names.len()).map(|d| grid.axis(d).len()).collect();
    std::fs::write(path, format_rows(&names, &shape, f.values()))
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_function(path: &Path, grid: &Arc<GroupGrid>) -> Result<SampledFunction> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let names = axis_names(grid);
    let shape: Vec<usize> = (0..names.len()).map(|d| grid.axis(d).len()).collect();
    let values = parse_rows(&text, &names, &shape)?;
    SampledFunction::new(grid.clone(), values).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Scalar symbols use the grid coordinates plus one momentum index per
/// flat-group axis.
pub fn write_scalar_symbol(path: &Path, a: &ScalarSymbol) -> Result<()> {
    let grid = a.grid();
    let mut names = axis_names(grid);
    let dim = names.len();
    for d in 0..dim {
        names.push(if dim == 1 { "xi".into() } else { format!("xi{}", d + 1) });
    }
    let mut shape: Vec<usize> = (0..dim).map(|d| grid.axis(d).len()).collect();
    // momentum lattice is the reciprocal of the same axes
    for d in 0..dim {
        shape.push(grid.axis(d).len());
    }
    let nxi = a.dual().node_count();
    let mut values = Vec::with_capacity(grid.len() * nxi);
    for x in 0..grid.len() {
        for k in 0..nxi {
            values.push(a.value(x, k));
        }
    }
    std::fs::write(path, format_rows(&names, &shape, &values))
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_scalar_symbol(
    path: &Path,
    grid: &Arc<GroupGrid>,
    dual: &Arc<DualGrid>,
) -> Result<ScalarSymbol> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut names = axis_names(grid);
    let dim = names.len();
    for d in 0..dim {
        names.push(if dim == 1 { "xi".into() } else { format!("xi{}", d + 1) });
    }
    let mut shape: Vec<usize> = (0..dim).map(|d| grid.axis(d).len()).collect();
    for d in 0..dim {
        shape.push(grid.axis(d).len());
    }
    let values = parse_rows(&text, &names, &shape)?;
    ScalarSymbol::new(grid.clone(), dual.clone(), values).map_err(|e| anyhow::anyhow!("{e}"))
}
