//! Header-addressed reading of delimiter-separated files.
//!
//! Fields are looked up by column name and parse failures are collected as
//! [`Violation`]s naming the file, data row and column.

use std::io::Read;
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, Trim};

use crate::error::{Error, Result, ValidationReport, Violation};

#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub headers: Vec<String>,
    rows: Vec<StringRecord>,
}

impl Table {
    /// Comma-separated unless the header line contains a tab. `#` lines are comments.
    pub fn parse(file: &str, text: &str) -> Result<Table> {
        let header_line = text.lines().find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#')).unwrap_or("");
        let delimiter = if header_line.contains('\t') { b'\t' } else { b',' };
        let mut rdr = ReaderBuilder::new()
            .delimiter(delimiter)
            .comment(Some(b'#'))
            .trim(Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::single(file, format!("cannot read header: {e}")))?
            .iter()
            .map(|h| h.to_string())
            .collect();
        if headers.iter().all(|h| h.is_empty()) {
            return Err(Error::single(file, "missing header row"));
        }
        let mut rows = Vec::new();
        let mut report = ValidationReport::default();
        for (i, rec) in rdr.records().enumerate() {
            match rec {
                Ok(r) if r.iter().all(|f| f.is_empty()) => {}
                Ok(r) => {
                    if r.len() != headers.len() {
                        report.push(
                            Violation::new(file, format!("expected {} fields, found {}", headers.len(), r.len()))
                                .row(i + 1),
                        );
                    }
                    rows.push(r);
                }
                Err(e) => report.push(Violation::new(file, e.to_string()).row(i + 1)),
            }
        }
        report.into_result(Table { file: file.to_string(), headers, rows })
    }

    pub fn read_from(file: &str, mut r: impl Read) -> Result<Table> {
        let mut s = String::new();
        r.read_to_string(&mut s).map_err(|e| Error::io(file, e))?;
        Table::parse(file, &s)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Records a violation for every column in `required` that is absent.
    pub fn require_columns(&self, required: &[&str], report: &mut ValidationReport) -> bool {
        let mut ok = true;
        for c in required {
            if self.column(c).is_none() {
                report.push(Violation::new(&self.file, format!("missing column `{c}`")));
                ok = false;
            }
        }
        ok
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().enumerate().map(move |(i, rec)| Row { table: self, number: i + 1, rec })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    table: &'a Table,
    /// 1-based data row number.
    pub number: usize,
    rec: &'a StringRecord,
}

impl<'a> Row<'a> {
    pub fn raw(&self, col: &str) -> &'a str {
        self.table.column(col).and_then(|i| self.rec.get(i)).unwrap_or("")
    }

    pub fn violation(&self, col: &str, msg: impl Into<String>) -> Violation {
        Violation::new(&self.table.file, msg).at(self.number, col)
    }

    pub fn parse<T: FromStr>(&self, col: &str, report: &mut ValidationReport) -> Option<T> {
        let s = self.raw(col);
        match s.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                report.push(self.violation(col, format!("cannot parse `{s}`")));
                None
            }
        }
    }

    /// Empty field reads as `None`.
    pub fn parse_opt<T: FromStr>(&self, col: &str, report: &mut ValidationReport) -> Option<Option<T>> {
        if self.raw(col).is_empty() {
            Some(None)
        } else {
            self.parse(col, report).map(Some)
        }
    }

    pub fn parse_with<T>(
        &self,
        col: &str,
        report: &mut ValidationReport,
        f: impl FnOnce(&str) -> Option<T>,
        expected: &str,
    ) -> Option<T> {
        let s = self.raw(col);
        let v = f(s);
        if v.is_none() {
            report.push(self.violation(col, format!("bad value `{s}`, expected {expected}")));
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_by_column_name() {
        let t = Table::parse("x.csv", "# note\nb,a\n2, 1\n\n4,3\n").unwrap();
        let mut rep = ValidationReport::default();
        let v: Vec<(i32, i32)> =
            t.rows().map(|r| (r.parse("a", &mut rep).unwrap(), r.parse("b", &mut rep).unwrap())).collect();
        assert_eq!(v, vec![(1, 2), (3, 4)]);
        assert!(rep.is_empty());
    }

    #[test]
    fn tab_delimited_detected() {
        let t = Table::parse("x.tsv", "k\tv\nfoo, bar\t1\n").unwrap();
        assert_eq!(t.rows().next().unwrap().raw("k"), "foo, bar");
    }

    #[test]
    fn parse_errors_name_row_and_column() {
        let t = Table::parse("x.csv", "a\n1\nz\n").unwrap();
        let mut rep = ValidationReport::default();
        let _: Vec<Option<i32>> = t.rows().map(|r| r.parse("a", &mut rep)).collect();
        assert_eq!(rep.0.len(), 1);
        assert_eq!(rep.0[0].row, Some(2));
        assert_eq!(rep.0[0].column.as_deref(), Some("a"));
    }
}
