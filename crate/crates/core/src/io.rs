//! CSV helpers for grid functions and exponent tables, plus atomic file writes.
//!
//! Numbers are written with C `%.17g` semantics so every `f64` round-trips.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::grid::{Grid, GridFunction};

/// Format like C's `printf("%.17g", v)`.
pub fn format_g17(v: f64) -> String {
    const P: i32 = 17;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, v)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Write `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// CSV with a leading comment line, a header row and one row per node:
/// `node,x[,y],value`.
pub fn grid_function_csv(u: &GridFunction, comment: &str) -> String {
    let g = u.grid();
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str(if g.dim() == 1 {
        "node,x,value\n"
    } else {
        "node,x,y,value\n"
    });
    for (i, &v) in u.values().iter().enumerate() {
        let x = g.coords(i);
        let _ = write!(out, "{i},{}", format_g17(x[0]));
        if g.dim() == 2 {
            let _ = write!(out, ",{}", format_g17(x[1]));
        }
        let _ = writeln!(out, ",{}", format_g17(v));
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("line {line}: cannot parse `{field}` as a number")]
    Number { line: usize, field: String },
    #[error("expected {expected} values, found {found}")]
    Count { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Numbers from a CSV body, row-major. Lines starting with `#` are comments and
/// a first row that does not parse is taken as a header. With a header that
/// has a `value` column only that column is read.
pub fn parse_numbers(text: &str) -> Result<Vec<f64>, CsvError> {
    let mut out = Vec::new();
    let mut column: Option<usize> = None;
    let mut seen_data = false;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_data && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            seen_data = true;
            column = fields.iter().position(|f| f.eq_ignore_ascii_case("value"));
            continue;
        }
        seen_data = true;
        let picked: Vec<&str> = match column {
            Some(c) => fields.get(c).copied().into_iter().collect(),
            None => fields,
        };
        for f in picked {
            if f.is_empty() {
                continue;
            }
            out.push(f.parse::<f64>().map_err(|_| CsvError::Number {
                line: k + 1,
                field: f.to_string(),
            })?);
        }
    }
    Ok(out)
}

pub fn read_numbers(path: &Path, expected: usize) -> Result<Vec<f64>, CsvError> {
    let values = parse_numbers(&fs::read_to_string(path)?)?;
    if values.len() != expected {
        return Err(CsvError::Count {
            expected,
            found: values.len(),
        });
    }
    Ok(values)
}

/// Read a grid function written by [`grid_function_csv`] or a plain value list.
pub fn read_grid_function(path: &Path, grid: &Grid) -> Result<GridFunction, CsvError> {
    let values = read_numbers(path, grid.len())?;
    GridFunction::new(grid, values).map_err(|_| CsvError::Number {
        line: 0,
        field: "non-finite value".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g17_matches_c() {
        assert_eq!(format_g17(0.0), "0");
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(0.5), "0.5");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(5.0 / 3.0), "1.6666666666666667");
        assert_eq!(format_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_g17(1e20), "1e+20");
        assert_eq!(format_g17(-123456.75), "-123456.75");
        assert_eq!(format_g17(1e16), "10000000000000000");
        assert_eq!(format_g17(1e17), "1e+17");
        assert_eq!(format_g17(0.0001), "0.0001");
    }

    #[test]
    fn header_and_value_column() {
        let text = "# comment\nnode,x,value\n0,0,1.5\n1,0.5,-2\n";
        assert_eq!(parse_numbers(text).unwrap(), vec![1.5, -2.0]);
        assert_eq!(
            parse_numbers("1,2,3\n4,5,6\n").unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        );
        assert!(matches!(
            parse_numbers("1\nabc\n"),
            Err(CsvError::Number { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn grid_function_round_trips(vals in prop::collection::vec(-1e6f64..1e6, 6)) {
            let g = Grid::rect(2, 3, [0.0, 0.0], 0.1).unwrap();
            let u = GridFunction::new(&g, vals).unwrap();
            let text = grid_function_csv(&u, "test");
            prop_assert_eq!(parse_numbers(&text).unwrap(), u.values().to_vec());
        }

        #[test]
        fn g17_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(format_g17(v).parse::<f64>().unwrap(), v);
        }
    }
}
