//! Grid CSV formats.
//!
//! * `Matrix`: one line per axis-0 index, one comma-separated cell per axis-1 index, no
//!   header. An empty cell marks a missing (unobserved) value.
//! * `Long`: header `i1,…,ic,value[,observed]` then one line per cell with 0-based integer
//!   indices. Axis sizes are the largest index plus one; unlisted cells are unobserved.
//!
//! Values are written with 17 significant digits so finite values roundtrip exactly.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::field::GridField;
use crate::error::{Error, Result};
use crate::linalg::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridLayout {
    Matrix,
    Long,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_value(line: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_err(line, format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value {s:?}")));
    }
    Ok(v)
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_grid_csv(text: &str, layout: GridLayout) -> Result<GridField> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if lines.is_empty() {
        return Err(parse_err(1, "empty file"));
    }
    match layout {
        GridLayout::Matrix => parse_matrix(&lines),
        GridLayout::Long => parse_long(&lines),
    }
}

fn parse_matrix(lines: &[(usize, &str)]) -> Result<GridField> {
    let cols = lines[0].1.split(',').count();
    let mut values = Vec::with_capacity(lines.len() * cols);
    let mut mask = Vec::with_capacity(lines.len() * cols);
    for &(ln, l) in lines {
        let cells: Vec<&str> = l.split(',').map(str::trim).collect();
        if cells.len() != cols {
            return Err(parse_err(
                ln,
                format!("expected {cols} cells, found {}", cells.len()),
            ));
        }
        for c in cells {
            if c.is_empty() {
                values.push(f64::NAN);
                mask.push(false);
            } else {
                values.push(parse_value(ln, c)?);
                mask.push(true);
            }
        }
    }
    let all = mask.iter().all(|&m| m);
    let t = DenseTensor::from_raw(vec![lines.len(), cols], values);
    GridField::new(t, 1, if all { None } else { Some(mask) })
}

fn parse_long(lines: &[(usize, &str)]) -> Result<GridField> {
    let header: Vec<&str> = lines[0].1.split(',').map(str::trim).collect();
    let has_observed = header.last() == Some(&"observed");
    let arity = header.len() - 1 - usize::from(has_observed);
    if arity == 0 || header[arity] != "value" {
        return Err(parse_err(
            lines[0].0,
            "header must be i1,…,ic,value[,observed]",
        ));
    }
    let mut rows = Vec::with_capacity(lines.len() - 1);
    let mut seen = HashSet::new();
    for &(ln, l) in &lines[1..] {
        let cells: Vec<&str> = l.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(parse_err(ln, format!("expected {} cells", header.len())));
        }
        let idx = cells[..arity]
            .iter()
            .map(|c| {
                c.parse::<usize>()
                    .map_err(|_| parse_err(ln, format!("bad index {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if !seen.insert(idx.clone()) {
            return Err(parse_err(ln, format!("duplicate coordinate {idx:?}")));
        }
        let value = parse_value(ln, cells[arity])?;
        let observed = if has_observed {
            match cells[arity + 1] {
                "1" | "true" => true,
                "0" | "false" => false,
                o => return Err(parse_err(ln, format!("bad observed flag {o:?}"))),
            }
        } else {
            true
        };
        rows.push((idx, value, observed));
    }
    if rows.is_empty() {
        return Err(parse_err(lines[0].0, "no data rows"));
    }
    let mut dims = vec![0usize; arity];
    for (idx, _, _) in &rows {
        for (d, &i) in dims.iter_mut().zip(idx) {
            *d = (*d).max(i + 1);
        }
    }
    let cells: usize = dims.iter().product();
    let mut values = vec![f64::NAN; cells];
    let mut mask = vec![false; cells];
    for (idx, v, obs) in rows {
        let off = idx.iter().zip(&dims).fold(0, |acc, (&i, &d)| acc * d + i);
        values[off] = v;
        mask[off] = obs;
    }
    let all = mask.iter().all(|&m| m);
    GridField::new(
        DenseTensor::from_raw(dims, values),
        1,
        if all { None } else { Some(mask) },
    )
}

pub fn format_grid_csv(field: &GridField, layout: GridLayout) -> Result<String> {
    if field.channels() != 1 {
        return Err(Error::invalid("CSV export supports single-channel fields"));
    }
    let mut s = String::new();
    match layout {
        GridLayout::Matrix => {
            if field.arity() != 2 {
                return Err(Error::dims("matrix layout needs a 2-axis field"));
            }
            let (n, t) = (field.dims()[0], field.dims()[1]);
            for i in 0..n {
                let row: Vec<String> = (0..t)
                    .map(|j| {
                        let cell = i * t + j;
                        if field.is_observed(cell) {
                            fmt_value(field.cell_values(cell)[0])
                        } else {
                            String::new()
                        }
                    })
                    .collect();
                s.push_str(&row.join(","));
                s.push('\n');
            }
        }
        GridLayout::Long => {
            let names: Vec<String> = (1..=field.arity()).map(|k| format!("i{k}")).collect();
            let _ = writeln!(s, "{},value,observed", names.join(","));
            for cell in 0..field.cells() {
                let v = field.cell_values(cell)[0];
                if !v.is_finite() {
                    continue;
                }
                let idx: Vec<String> = field
                    .cell_index(cell)
                    .iter()
                    .map(usize::to_string)
                    .collect();
                let _ = writeln!(
                    s,
                    "{},{},{}",
                    idx.join(","),
                    fmt_value(v),
                    u8::from(field.is_observed(cell))
                );
            }
        }
    }
    Ok(s)
}

pub fn load_grid_csv(path: impl AsRef<Path>, layout: GridLayout) -> Result<GridField> {
    parse_grid_csv(&std::fs::read_to_string(path)?, layout)
}

pub fn save_grid_csv(field: &GridField, path: impl AsRef<Path>, layout: GridLayout) -> Result<()> {
    std::fs::write(path, format_grid_csv(field, layout)?)?;
    Ok(())
}
