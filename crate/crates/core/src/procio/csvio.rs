use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::DateTime;

use crate::analytics::{Quality, Sample, TimeSeries};

use super::ProcioError;

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    /// 1-based line number in the file.
    pub line: u64,
    pub data_point: String,
    pub sample: Sample,
}

/// Parsed measurement file: rows in file order plus one warning per
/// skipped row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvData {
    pub rows: Vec<CsvRow>,
    pub warnings: Vec<String>,
}

impl CsvData {
    pub fn load(path: &Path) -> Result<Self, ProcioError> {
        let file = std::fs::File::open(path).map_err(|e| ProcioError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_reader(file).map_err(|e| match e {
            ProcioError::Csv { message, .. } => ProcioError::Csv {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Header must be `timestamp,data_point,value[,quality]`.
    pub fn from_reader(reader: impl Read) -> Result<Self, ProcioError> {
        let csv_err = |message: String| ProcioError::Csv {
            path: Default::default(),
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(None)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| csv_err(e.to_string()))?.clone();
        let names: Vec<String> = header.iter().map(str::to_ascii_lowercase).collect();
        let ok = names.len() >= 3
            && names.len() <= 4
            && names[..3] == ["timestamp", "data_point", "value"]
            && names.get(3).is_none_or(|q| q == "quality");
        if !ok {
            return Err(csv_err(format!(
                "header must be `timestamp,data_point,value[,quality]`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }

        let mut data = CsvData::default();
        for record in rdr.records() {
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    data.warnings.push(format!("line {line}: {e}"));
                    continue;
                }
            };
            let line = record.position().map_or(0, |p| p.line());
            match parse_row(&record) {
                Ok((data_point, sample)) => data.rows.push(CsvRow {
                    line,
                    data_point,
                    sample,
                }),
                Err(msg) => data.warnings.push(format!("line {line}: {msg}")),
            }
        }
        Ok(data)
    }

    /// Rows stable-sorted by timestamp.
    pub fn sorted_rows(&self) -> Vec<&CsvRow> {
        let mut rows: Vec<&CsvRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.sample.timestamp_ms);
        rows
    }

    /// Per-point series built from rows whose data point is in `keep` (all
    /// rows if `None`). Duplicate timestamps keep the first row.
    pub fn histories(&self, keep: Option<&BTreeSet<String>>) -> (BTreeMap<String, TimeSeries>, usize) {
        let mut grouped: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
        for row in &self.rows {
            if keep.is_none_or(|k| k.contains(&row.data_point)) {
                grouped.entry(row.data_point.clone()).or_default().push(row.sample);
            }
        }
        let mut dropped = 0;
        let series = grouped
            .into_iter()
            .map(|(dp, samples)| {
                let (ts, d) = TimeSeries::from_unordered(dp.clone(), samples);
                dropped += d;
                (dp, ts)
            })
            .collect();
        (series, dropped)
    }

    pub fn data_points(&self) -> BTreeSet<String> {
        self.rows.iter().map(|r| r.data_point.clone()).collect()
    }
}

fn parse_row(record: &csv::StringRecord) -> Result<(String, Sample), String> {
    if record.len() < 3 || record.len() > 4 {
        return Err(format!("expected 3 or 4 fields, found {}", record.len()));
    }
    let timestamp_ms = parse_timestamp(&record[0])?;
    if timestamp_ms < 0 {
        return Err(format!("timestamp `{}` is before 1970", &record[0]));
    }
    let data_point = record[1].to_string();
    if !crate::ruledsl::is_identifier(&data_point) {
        return Err(format!("invalid data point id `{data_point}`"));
    }
    let value: f64 = record[2]
        .parse()
        .map_err(|_| format!("value `{}` is not a number", &record[2]))?;
    if !value.is_finite() {
        return Err(format!("value `{}` is not finite", &record[2]));
    }
    let quality = match record.get(3).map(str::to_ascii_lowercase).as_deref() {
        None | Some("") | Some("good") => Quality::Good,
        Some("bad") => Quality::Bad,
        Some(other) => return Err(format!("quality `{other}` is neither good nor bad")),
    };
    Ok((
        data_point,
        Sample {
            timestamp_ms,
            value,
            quality,
        },
    ))
}

/// Integer epoch milliseconds or an RFC 3339 / ISO-8601 timestamp with
/// offset.
pub fn parse_timestamp(s: &str) -> Result<i64, String> {
    if let Ok(ms) = s.parse::<i64>() {
        return Ok(ms);
    }
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.timestamp_millis())
        .map_err(|_| format!("timestamp `{s}` is neither epoch ms nor ISO-8601"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_timestamp_forms() {
        assert_eq!(parse_timestamp("2024-01-01T00:00:00Z"), Ok(1_704_067_200_000));
        assert_eq!(parse_timestamp("2024-01-01T01:00:00.5+01:00"), Ok(1_704_067_200_500));
        assert_eq!(parse_timestamp("60000"), Ok(60_000));
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn malformed_rows_become_warnings() {
        let src = "timestamp,data_point,value\n0,p,1\n1000,p,abc\n2000,p,3\n";
        let d = CsvData::from_reader(src.as_bytes()).unwrap();
        assert_eq!(d.rows.len(), 2);
        assert_eq!(d.warnings, vec!["line 3: value `abc` is not a number".to_string()]);
    }

    #[test]
    fn quality_column() {
        let src = "timestamp,data_point,value,quality\n0,p,1,good\n1,p,2,BAD\n2,p,3,\n3,p,4,meh\n";
        let d = CsvData::from_reader(src.as_bytes()).unwrap();
        let q: Vec<Quality> = d.rows.iter().map(|r| r.sample.quality).collect();
        assert_eq!(q, vec![Quality::Good, Quality::Bad, Quality::Good]);
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn header_checked() {
        assert!(CsvData::from_reader("time,dp,v\n".as_bytes()).is_err());
        assert!(CsvData::from_reader("".as_bytes()).is_err());
        assert_eq!(CsvData::from_reader("timestamp,data_point,value\n".as_bytes()).unwrap().rows.len(), 0);
    }

    #[test]
    fn histories_sort_and_dedup() {
        let src = "timestamp,data_point,value\n20,p,2\n10,p,1\n20,p,9\n5,q,0\n";
        let d = CsvData::from_reader(src.as_bytes()).unwrap();
        let (h, dropped) = d.histories(None);
        assert_eq!(dropped, 1);
        assert_eq!(h["p"].samples(), &[Sample::good(10, 1.0), Sample::good(20, 2.0)]);
        let keep: BTreeSet<String> = ["q".to_string()].into();
        assert_eq!(d.histories(Some(&keep)).0.len(), 1);
    }
}
