//! CSV output with a fixed schema.

use std::fmt;

#[derive(Debug)]
pub struct SchemaError(pub String);

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Real(f64),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(n) => n.to_string(),
            Cell::Real(x) => sig6(*x),
            Cell::Empty => String::new(),
        }
    }
}

/// `x` rounded to six significant digits, in plain notation unless very
/// large or small.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if (1e-4..1e15).contains(&a) {
        rounded.to_string()
    } else {
        format!("{rounded:e}")
    }
}

/// Header plus one line per row, `\n`-terminated, quoted where needed.
pub fn emit_csv(header: &[&str], rows: &[Vec<Cell>]) -> Result<String, SchemaError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(vec![]);
    let fail = |e: csv::Error| SchemaError(e.to_string());
    w.write_record(header).map_err(fail)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(SchemaError(format!(
                "row {i} has {} fields, the schema has {}",
                row.len(),
                header.len()
            )));
        }
        w.write_record(row.iter().map(Cell::render)).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| SchemaError(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SchemaError(e.to_string()))
}
