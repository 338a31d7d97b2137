//! Result rendering. Every format carries the config hash and seed so a
//! result file alone identifies the run that produced it.

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Format::Table),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

/// One result row: ordered key/value pairs, identical keys across a report.
#[derive(Debug, Clone, Default)]
pub struct Record(pub Vec<(String, Value)>);

impl Record {
    pub fn push(&mut self, key: &str, value: Value) {
        self.0.push((key.into(), value));
    }
}

pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn int(x: u64) -> Value {
    Value::Number(x.into())
}

pub fn text(s: impl Into<String>) -> Value {
    Value::String(s.into())
}

#[derive(Debug, Clone)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

fn cell_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

pub fn render(meta: &Meta, records: &[Record], format: Format) -> String {
    match format {
        Format::Table => render_table(meta, records),
        Format::Json => render_json(meta, records),
        Format::Csv => render_csv(meta, records),
    }
}

fn render_table(meta: &Meta, records: &[Record]) -> String {
    let mut out = format!(
        "# command: {}\n# config_hash: {}\n# seed: {}\n",
        meta.command, meta.config_hash, meta.seed
    );
    let Some(first) = records.first() else {
        return out;
    };
    let headers: Vec<&str> = first.0.iter().map(|(k, _)| k.as_str()).collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| r.0.iter().map(|(_, v)| cell_string(v)).collect())
        .collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    for (h, w) in headers.iter().zip(&widths) {
        out.push_str(&format!("{h:<w$}  "));
    }
    out.pop();
    out.pop();
    out.push('\n');
    for row in &rows {
        for (cell, w) in row.iter().zip(&widths) {
            out.push_str(&format!("{cell:<w$}  "));
        }
        out.pop();
        out.pop();
        out.push('\n');
    }
    out
}

fn render_json(meta: &Meta, records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        let mut obj = serde_json::Map::new();
        obj.insert("command".into(), Value::String(meta.command.clone()));
        obj.insert("config_hash".into(), Value::String(meta.config_hash.clone()));
        obj.insert("seed".into(), int(meta.seed));
        for (k, v) in &r.0 {
            obj.insert(k.clone(), v.clone());
        }
        out.push_str(&Value::Object(obj).to_string());
        out.push('\n');
    }
    out
}

fn render_csv(meta: &Meta, records: &[Record]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    if let Some(first) = records.first() {
        let mut header = vec!["command", "config_hash", "seed"];
        header.extend(first.0.iter().map(|(k, _)| k.as_str()));
        w.write_record(&header).expect("csv header");
        for r in records {
            let mut row = vec![
                meta.command.clone(),
                meta.config_hash.clone(),
                meta.seed.to_string(),
            ];
            row.extend(r.0.iter().map(|(_, v)| cell_string(v)));
            w.write_record(&row).expect("csv row");
        }
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
}

pub fn deliver(text: &str, out: Option<&std::path::Path>) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())
        }
    }
}
