//! Plain-text `key = value` files with optional `[section]` headers.
//!
//! `#` starts a comment. Keys keep their order of appearance; duplicate keys
//! within a section are rejected.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result, ValidationReport, Violation};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    /// Empty for entries before the first header.
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KvFile {
    pub file: String,
    pub sections: Vec<Section>,
}

impl KvFile {
    pub fn parse(file: &str, text: &str) -> Result<Self> {
        let mut report = ValidationReport::default();
        let mut sections = vec![Section { name: String::new(), line: 0, entries: Vec::new() }];
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                match rest.strip_suffix(']') {
                    Some(name) => {
                        sections.push(Section { name: name.trim().to_string(), line: line_no, entries: Vec::new() })
                    }
                    None => report.push(Violation::new(file, "unterminated section header").row(line_no)),
                }
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                report.push(Violation::new(file, format!("expected `key = value`, got `{line}`")).row(line_no));
                continue;
            };
            let key = k.trim().to_string();
            let section = sections.last_mut().expect("root section");
            if section.entries.iter().any(|e| e.key == key) {
                report.push(Violation::new(file, format!("duplicate key `{key}`")).row(line_no));
                continue;
            }
            section.entries.push(Entry { key, value: v.trim().to_string(), line: line_no });
        }
        report.into_result(KvFile { file: file.to_string(), sections })
    }

    /// Entries outside any section header.
    pub fn root(&self) -> &Section {
        &self.sections[0]
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|e| (e.key.clone(), e.value.clone())).collect()
    }

    /// Parses `key` if present, recording a violation on failure.
    pub fn parse_opt<T: FromStr>(&self, file: &str, key: &str, report: &mut ValidationReport) -> Option<T> {
        let e = self.get(key)?;
        match e.value.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                report.push(Violation::new(file, format!("bad value `{}` for `{key}`", e.value)).row(e.line));
                None
            }
        }
    }

    pub fn parse_or<T: FromStr>(&self, file: &str, key: &str, default: T, report: &mut ValidationReport) -> T {
        self.parse_opt(file, key, report).unwrap_or(default)
    }
}

/// `on`/`off`, `true`/`false`, `yes`/`no`, `1`/`0`.
pub fn parse_switch(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Some(true),
        "off" | "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

pub fn require<T>(v: Option<T>, file: &str, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::single(file, format!("missing `{what}`")))
}
