use std::io::{self, Write};

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    JsonLines,
    Table,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Num(f64),
    Empty,
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as i64)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n as i64)
    }
}

impl From<u32> for Cell {
    fn from(n: u32) -> Self {
        Cell::Int(n.into())
    }
}

impl Cell {
    fn text(&self, decimals: usize) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(n) => n.to_string(),
            Cell::Num(x) if x.is_finite() => format!("{x:.decimals$}"),
            Cell::Num(x) if x.is_nan() => "NA".into(),
            Cell::Num(x) if *x > 0.0 => "inf".into(),
            Cell::Num(_) => "-inf".into(),
            Cell::Empty => "NA".into(),
        }
    }

    /// Numbers keep their fixed-precision text so JSON output is as stable as CSV.
    fn json(&self, decimals: usize) -> String {
        match self {
            Cell::Text(s) => serde_json::to_string(s).expect("strings serialize"),
            Cell::Int(n) => n.to_string(),
            Cell::Num(x) if x.is_finite() => format!("{x:.decimals$}"),
            Cell::Num(_) | Cell::Empty => "null".into(),
        }
    }
}

/// Rows under fixed column names, rendered in any output format.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format, decimals: usize) -> String {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns).expect("in-memory write");
                for row in &self.rows {
                    w.write_record(row.iter().map(|c| c.text(decimals))).expect("in-memory write");
                }
                String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
            }
            Format::JsonLines => {
                let mut out = String::new();
                for row in &self.rows {
                    let fields: Vec<String> = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(k, v)| format!("{}:{}", serde_json::to_string(k).expect("keys serialize"), v.json(decimals)))
                        .collect();
                    out.push('{');
                    out.push_str(&fields.join(","));
                    out.push_str("}\n");
                }
                out
            }
            Format::Table => {
                let cells: Vec<Vec<String>> =
                    self.rows.iter().map(|r| r.iter().map(|c| c.text(decimals)).collect()).collect();
                let widths: Vec<usize> = (0..self.columns.len())
                    .map(|i| {
                        cells.iter().map(|r| r[i].chars().count()).chain([self.columns[i].len()]).max().unwrap_or(0)
                    })
                    .collect();
                let line = |vals: Vec<&str>| {
                    let padded: Vec<String> =
                        vals.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}", w = *w)).collect();
                    padded.join("  ").trim_end().to_string() + "\n"
                };
                let mut out = line(self.columns.clone());
                out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
                for r in &cells {
                    out.push_str(&line(r.iter().map(String::as_str).collect()));
                }
                out
            }
        }
    }

    pub fn write(&self, format: Format, decimals: usize, out: &mut dyn Write) -> io::Result<()> {
        out.write_all(self.render(format, decimals).as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&["name", "score", "n"]);
        t.push(vec!["a, b".into(), 0.123456.into(), 3usize.into()]);
        t.push(vec!["c".into(), Cell::Empty, 10usize.into()]);
        t
    }

    #[test]
    fn csv_quotes_and_fixes_precision() {
        assert_eq!(sample().render(Format::Csv, 4), "name,score,n\n\"a, b\",0.1235,3\nc,NA,10\n");
    }

    #[test]
    fn json_lines_keep_column_order() {
        let out = sample().render(Format::JsonLines, 2);
        assert_eq!(out, "{\"name\":\"a, b\",\"score\":0.12,\"n\":3}\n{\"name\":\"c\",\"score\":null,\"n\":10}\n");
        for line in out.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }

    #[test]
    fn table_aligns_columns() {
        let out = sample().render(Format::Table, 4);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "name  score   n");
        assert_eq!(lines[1], "----  ------  --");
        assert_eq!(lines[2], "a, b  0.1235  3");
    }
}
