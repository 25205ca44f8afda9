//! Result tables: CSV for machines, aligned text for people.

use std::path::Path;

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// Heading of the label column.
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn new(title: &str, columns: &[&str]) -> Self {
        Table {
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.columns.len(), "row width");
        self.rows.push((label.into(), values));
    }

    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.0 == row).map(|r| r.1[c])
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.title.clone()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory csv");
        for (label, values) in &self.rows {
            let mut rec = vec![label.clone()];
            rec.extend(values.iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let csv_err = |source| HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.clone();
        let mut cols = header.iter();
        let title = cols.next().ok_or_else(|| HarnessError::format(path, "empty header"))?;
        let columns: Vec<&str> = cols.collect();
        let mut table = Table::new(title, &columns);
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let label = rec.get(0).unwrap_or_default().to_string();
            let values = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| HarnessError::format(path, format!("row `{label}`: bad number `{v}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != table.columns.len() {
                return Err(HarnessError::format(path, format!("row `{label}` has {} values", values.len())));
            }
            table.rows.push((label, values));
        }
        Ok(table)
    }

    /// Right-aligned columns; Chamfer gets more decimals than percentages.
    pub fn to_text(&self) -> String {
        let fmt = |col: &str, v: f64| {
            if col.starts_with("C. Dist") {
                format!("{v:.5}")
            } else {
                format!("{v:.2}")
            }
        };
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(_, vals)| self.columns.iter().zip(vals).map(|(c, v)| fmt(c, *v)).collect())
            .collect();
        let label_w = self.rows.iter().map(|r| r.0.len()).chain([self.title.len()]).max().unwrap_or(0);
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| cells.iter().map(|r| r[j].len()).chain([c.len()]).max().unwrap_or(0))
            .collect();
        let mut out = format!("{:<label_w$}", self.title);
        for (c, w) in self.columns.iter().zip(&widths) {
            out.push_str(&format!("  {c:>w$}"));
        }
        out.push('\n');
        for ((label, _), row) in self.rows.iter().zip(&cells) {
            out.push_str(&format!("{label:<label_w$}"));
            for (cell, w) in row.iter().zip(&widths) {
                out.push_str(&format!("  {cell:>w$}"));
            }
            out.push('\n');
        }
        out
    }
}
