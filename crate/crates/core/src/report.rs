//! CSV and JSON-lines outputs.
//!
//! Every file starts with a header carrying the schema version and the
//! config hash. Rows are flushed as they are written, so an interrupted
//! run leaves well-formed partial files. Floats use 17 significant digits.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::Check;

pub const SCHEMA_VERSION: u32 = 1;
pub const CHECK_COLUMNS: [&str; 5] = ["quantity", "estimate", "ci_half_width", "target", "verdict"];

/// `x` with 17 significant digits (`NaN`, `inf`, `-inf` spelled out).
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn header_line(config_hash: &str) -> String {
    format!("# tflab schema={SCHEMA_VERSION} config={config_hash}")
}

/// Config hash recorded in a CSV file's header line.
pub fn read_csv_hash(path: &Path) -> Result<String> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    BufReader::new(f).read_line(&mut line).map_err(|e| Error::io(path, e))?;
    line.split_whitespace()
        .find_map(|w| w.strip_prefix("config="))
        .map(str::to_string)
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no config header", path.display())))
}

/// Append-only CSV table with a config-hash header line.
pub struct CsvTable {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvTable {
    pub fn create(path: &Path, config_hash: &str, columns: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "{}", header_line(config_hash)).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::WriterBuilder::new().from_writer(buf);
        writer.write_record(columns)?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(CsvTable {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        self.writer.write_record(fields.iter().map(|s| s.as_ref()))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn check(&mut self, c: &Check) -> Result<()> {
        self.row(&[
            c.quantity.clone(),
            fmt_f64(c.estimate),
            fmt_f64(c.ci_half_width),
            fmt_f64(c.target),
            c.verdict.as_str().to_string(),
        ])
    }
}

/// `serde_json` formatter printing floats with 17 significant digits.
struct Precise;

impl serde_json::ser::Formatter for Precise {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serialize one JSON value on a single line with precise floats.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Precise);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("json is utf-8"))
}

/// Append-only JSON-lines event log; the first line is a header record.
pub struct JsonLog {
    path: PathBuf,
    writer: BufWriter<File>,
}

#[derive(Serialize)]
struct Header<'a> {
    record: &'a str,
    schema: u32,
    config_hash: &'a str,
    experiment: &'a str,
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    record: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

impl JsonLog {
    pub fn create(path: &Path, config_hash: &str, experiment: &str) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut log = JsonLog {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
        };
        let h = Header {
            record: "header",
            schema: SCHEMA_VERSION,
            config_hash,
            experiment,
        };
        log.line(&to_json_line(&h)?)?;
        Ok(log)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.writer, "{s}").map_err(|e| Error::io(&self.path, e))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }

    /// Write `body` with an added `"record": kind` field.
    pub fn event<T: Serialize>(&mut self, kind: &str, body: &T) -> Result<()> {
        let s = to_json_line(&Tagged { record: kind, body })?;
        self.line(&s)
    }
}

/// CSV table plus JSON-lines log sharing a stem inside an output directory.
pub struct ReportSet {
    pub table: CsvTable,
    pub log: JsonLog,
    dir: PathBuf,
    hash: String,
}

impl ReportSet {
    pub fn create(dir: &Path, stem: &str, config_hash: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let table = CsvTable::create(&dir.join(format!("{stem}.csv")), config_hash, &CHECK_COLUMNS)?;
        let log = JsonLog::create(&dir.join(format!("{stem}.jsonl")), config_hash, stem)?;
        Ok(ReportSet {
            table,
            log,
            dir: dir.to_path_buf(),
            hash: config_hash.to_string(),
        })
    }

    /// Record a check in both the table and the log.
    pub fn check(&mut self, c: &Check) -> Result<()> {
        self.table.check(c)?;
        self.log.event("check", c)
    }

    /// Extra per-sample series table `<dir>/<name>.csv`.
    pub fn series(&self, name: &str, columns: &[&str]) -> Result<CsvTable> {
        CsvTable::create(&self.dir.join(format!("{name}.csv")), &self.hash, columns)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Concatenate the bodies of CSV tables produced under the same config.
pub fn merge_csv(inputs: &[PathBuf], output: &Path) -> Result<()> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to merge".into()))?;
    let hash = read_csv_hash(first)?;
    let mut columns: Option<csv::StringRecord> = None;
    let mut rows = Vec::new();
    for p in inputs {
        let h = read_csv_hash(p)?;
        if h != hash {
            return Err(Error::InvalidParameter(format!(
                "{} was produced by config {h}, expected {hash}",
                p.display()
            )));
        }
        let f = File::open(p).map_err(|e| Error::io(p, e))?;
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
        let cols = rdr.headers()?.clone();
        match &columns {
            Some(c) if *c != cols => {
                return Err(Error::InvalidParameter(format!("{} has different columns", p.display())));
            }
            None => columns = Some(cols),
            _ => {}
        }
        for r in rdr.records() {
            rows.push(r?);
        }
    }
    let cols = columns.expect("at least one input");
    let names: Vec<&str> = cols.iter().collect();
    let mut out = CsvTable::create(output, &hash, &names)?;
    for r in &rows {
        out.row(&r.iter().collect::<Vec<_>>())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Verdict;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn json_lines_use_precise_floats() {
        let line = to_json_line(&serde_json::json!({"x": 0.5})).unwrap();
        assert_eq!(line, "{\"x\":5.0000000000000000e-1}");
    }

    #[test]
    fn merge_refuses_mismatched_configs() {
        let dir = tempfile::tempdir().unwrap();
        let c = Check {
            quantity: "q".into(),
            estimate: 1.0,
            ci_half_width: 0.1,
            target: 1.0,
            verdict: Verdict::Pass,
        };
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let z = dir.path().join("z.csv");
        CsvTable::create(&a, "aaa", &CHECK_COLUMNS).unwrap().check(&c).unwrap();
        CsvTable::create(&b, "aaa", &CHECK_COLUMNS).unwrap().check(&c).unwrap();
        CsvTable::create(&z, "zzz", &CHECK_COLUMNS).unwrap().check(&c).unwrap();
        let out = dir.path().join("m.csv");
        merge_csv(&[a.clone(), b], &out).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(merge_csv(&[a, z], &out).is_err());
    }
}
