//! Tab-separated query-ad logs.
//!
//! The first line names the columns. `query`, `title`, `description`, `url`
//! and `click` are mandatory; `external_score`, `true_ctr` and `device` are
//! optional. Column order is free. Fields may not contain tabs.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Desktop,
    Mobile,
    #[default]
    Unknown,
}

impl Device {
    pub fn parse(s: &str) -> Option<Device> {
        match s {
            "desktop" => Some(Device::Desktop),
            "mobile" => Some(Device::Mobile),
            "unknown" | "" => Some(Device::Unknown),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Device::Desktop => "desktop",
            Device::Mobile => "mobile",
            Device::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryAdRecord {
    pub query: String,
    pub ad_title: String,
    pub ad_description: String,
    pub ad_display_url: String,
    pub click: u8,
    pub external_score: Option<f64>,
    pub true_ctr: Option<f64>,
    pub device: Option<Device>,
}

impl QueryAdRecord {
    pub fn new(query: &str, title: &str, description: &str, url: &str, click: u8) -> Self {
        QueryAdRecord {
            query: query.to_owned(),
            ad_title: title.to_owned(),
            ad_description: description.to_owned(),
            ad_display_url: url.to_owned(),
            click,
            external_score: None,
            true_ctr: None,
            device: None,
        }
    }

    pub fn label(&self) -> f64 {
        f64::from(self.click)
    }

    /// Canonical query text.
    pub fn query_text(&self) -> String {
        super::canonicalize(&self.query)
    }

    /// Canonical concatenated ad text.
    pub fn ad_text(&self) -> String {
        super::ad_text(&self.ad_title, &self.ad_description, &self.ad_display_url)
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Layout {
    query: usize,
    title: usize,
    description: usize,
    url: usize,
    click: usize,
    external_score: Option<usize>,
    true_ctr: Option<usize>,
    device: Option<usize>,
    width: usize,
}

impl Layout {
    fn from_header(header: &str) -> std::result::Result<Layout, String> {
        let names: Vec<&str> = header.split('\t').map(str::trim).collect();
        let find = |name: &str| names.iter().position(|&n| n == name);
        let mut missing = Vec::new();
        let mut need = |name: &'static str| {
            find(name).unwrap_or_else(|| {
                missing.push(name);
                0
            })
        };
        let layout = Layout {
            query: need("query"),
            title: need("title"),
            description: need("description"),
            url: need("url"),
            click: need("click"),
            external_score: find("external_score"),
            true_ctr: find("true_ctr"),
            device: find("device"),
            width: names.len(),
        };
        if !missing.is_empty() {
            return Err(format!("missing mandatory column(s): {}", missing.join(", ")));
        }
        const KNOWN: [&str; 8] = [
            "query",
            "title",
            "description",
            "url",
            "click",
            "external_score",
            "true_ctr",
            "device",
        ];
        if let Some(bad) = names.iter().find(|n| !KNOWN.contains(n)) {
            return Err(format!("unknown column {bad:?}"));
        }
        Ok(layout)
    }

    fn parse(&self, line: &str) -> std::result::Result<QueryAdRecord, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != self.width {
            return Err(format!("expected {} columns, found {}", self.width, fields.len()));
        }
        let click = match fields[self.click] {
            "0" => 0,
            "1" => 1,
            other => return Err(format!("click must be 0 or 1, found {other:?}")),
        };
        let prob = |idx: Option<usize>, name: &str| -> std::result::Result<Option<f64>, String> {
            let Some(i) = idx else { return Ok(None) };
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| format!("cannot parse {name} {:?}", fields[i]))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [0, 1]"));
            }
            Ok(Some(v))
        };
        let device = match self.device {
            None => None,
            Some(i) => Some(Device::parse(fields[i]).ok_or_else(|| format!("unknown device {:?}", fields[i]))?),
        };
        Ok(QueryAdRecord {
            query: fields[self.query].to_owned(),
            ad_title: fields[self.title].to_owned(),
            ad_description: fields[self.description].to_owned(),
            ad_display_url: fields[self.url].to_owned(),
            click,
            external_score: prob(self.external_score, "external_score")?,
            true_ctr: prob(self.true_ctr, "true_ctr")?,
            device,
        })
    }
}

/// Streaming record iterator over a dataset file.
pub struct DatasetReader {
    path: PathBuf,
    lines: Lines<BufReader<File>>,
    layout: Layout,
    line_no: usize,
}

impl DatasetReader {
    pub fn has_external_score(&self) -> bool {
        self.layout.external_score.is_some()
    }

    pub fn has_true_ctr(&self) -> bool {
        self.layout.true_ctr.is_some()
    }
}

impl Iterator for DatasetReader {
    type Item = Result<QueryAdRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.is_empty() {
                continue;
            }
            return Some(self.layout.parse(&line).map_err(|msg| Error::Parse {
                path: self.path.clone(),
                line: self.line_no,
                msg,
            }));
        }
    }
}

pub fn read_dataset(path: &Path) -> Result<DatasetReader> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "missing header".into(),
    })?;
    let layout = Layout::from_header(&header).map_err(|msg| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg,
    })?;
    Ok(DatasetReader {
        path: path.to_path_buf(),
        lines,
        layout,
        line_no: 1,
    })
}

/// Writes records with the columns implied by the first record's optional
/// fields. All records must agree on which optional fields are present.
pub fn write_dataset(path: &Path, records: &[QueryAdRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_records(&mut w, records)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_records<W: Write>(w: &mut W, records: &[QueryAdRecord]) -> Result<()> {
    let first = records.first();
    let has_ext = first.is_some_and(|r| r.external_score.is_some());
    let has_ctr = first.is_some_and(|r| r.true_ctr.is_some());
    let has_dev = first.is_some_and(|r| r.device.is_some());
    write!(w, "query\ttitle\tdescription\turl\tclick")?;
    if has_ext {
        write!(w, "\texternal_score")?;
    }
    if has_ctr {
        write!(w, "\ttrue_ctr")?;
    }
    if has_dev {
        write!(w, "\tdevice")?;
    }
    writeln!(w)?;
    for (i, r) in records.iter().enumerate() {
        if r.external_score.is_some() != has_ext || r.true_ctr.is_some() != has_ctr || r.device.is_some() != has_dev {
            return Err(Error::Invalid(format!("record {i} has different optional columns")));
        }
        for field in [&r.query, &r.ad_title, &r.ad_description, &r.ad_display_url] {
            if field.contains(['\t', '\n']) {
                return Err(Error::Invalid(format!("record {i}: tab or newline inside a field")));
            }
        }
        write!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.query, r.ad_title, r.ad_description, r.ad_display_url, r.click
        )?;
        if let Some(v) = r.external_score {
            write!(w, "\t{v}")?;
        }
        if let Some(v) = r.true_ctr {
            write!(w, "\t{v}")?;
        }
        if let Some(d) = r.device {
            write!(w, "\t{d}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
