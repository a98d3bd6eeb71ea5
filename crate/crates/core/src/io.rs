//! Deterministic CSV output.
//!
//! Every file starts with a `# schema=1` line followed by the header; floats
//! are printed like C's `%.9g`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

pub const SCHEMA_LINE: &str = "# schema=1";

/// Formats `x` with 9 significant digits, C `%g` style.
pub fn format_g9(x: f64) -> String {
    const PRECISION: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A CSV table built in memory and written in one go.
#[derive(Debug, Clone)]
pub struct CsvTable {
    columns: Vec<String>,
    body: String,
}

/// One CSV cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            body: String::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Appends a row; panics if the width does not match the header.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        for (i, cell) in row.into_iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            match cell {
                Cell::Num(x) => self.body.push_str(&format_g9(x)),
                Cell::Int(n) => {
                    let _ = write!(self.body, "{n}");
                }
                Cell::Text(s) => self.body.push_str(&s),
            }
        }
        self.body.push('\n');
    }

    pub fn render(&self) -> String {
        format!("{SCHEMA_LINE}\n{}\n{}", self.columns.join(","), self.body)
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, self.render())
    }
}

/// Parsed CSV: header names and rows of raw fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ParsedCsv {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut first = lines.next().ok_or("empty file")?;
        if first.starts_with('#') {
            if first.trim() != SCHEMA_LINE {
                return Err(format!("unsupported schema line `{first}`"));
            }
            first = lines.next().ok_or("missing header")?;
        }
        let columns: Vec<String> = first.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != columns.len() {
                return Err(format!("row {} has {} fields, expected {}", n + 1, row.len(), columns.len()));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric column by name; `nan` fields parse to NaN.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>, String> {
        let j = self.column(name).ok_or_else(|| format!("missing column `{name}`"))?;
        self.rows
            .iter()
            .map(|r| r[j].parse::<f64>().map_err(|e| format!("column `{name}`: {e}")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_matches_c_printf() {
        let cases = [
            (3.5, "3.5"),
            (-0.5, "-0.5"),
            (2.0 / 3f64.ln() + 0.5, "2.32047845"),
            (1e-5, "1e-05"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (1.0 / 3.0, "0.333333333"),
            (100.0, "100"),
            (-59.0, "-59"),
            (6.02214076e23, "6.02214076e+23"),
        ];
        for (x, s) in cases {
            assert_eq!(format_g9(x), s, "{x}");
        }
        assert_eq!(format_g9(f64::NAN), "nan");
    }

    #[test]
    fn table_round_trip() {
        let mut t = CsvTable::new(&["kind", "v"]);
        t.push(vec!["FB".into(), 3.5.into()]);
        t.push(vec!["AOL".into(), f64::NAN.into()]);
        let text = t.render();
        assert!(text.starts_with("# schema=1\nkind,v\n"));
        let parsed = ParsedCsv::parse(&text).unwrap();
        assert_eq!(parsed.rows.len(), 2);
        let v = parsed.numbers("v").unwrap();
        assert_eq!(v[0], 3.5);
        assert!(v[1].is_nan());
    }
}
