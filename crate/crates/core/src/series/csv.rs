use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;

use super::RawSeries;
use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

const ACCEPTED_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim().trim_end_matches('Z');
    ACCEPTED_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
}

fn parse_reading(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    raw.parse().ok()
}

/// Reads a LEAD-style CSV (`building_id,timestamp,meter_reading,anomaly`).
///
/// Buildings are returned in order of first appearance, each sorted by
/// timestamp. Empty or `NaN` readings are kept as `NaN`.
pub fn load_lead_csv(path: impl AsRef<Path>) -> Result<Vec<RawSeries>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("{}: missing column `{name}`", path.display())))
    };
    let (c_id, c_ts, c_val, c_lab) = (
        column("building_id")?,
        column("timestamp")?,
        column("meter_reading")?,
        column("anomaly")?,
    );

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(NaiveDateTime, f64, bool)>> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse {
                line,
                msg: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |msg: String| Error::Parse { line, msg };

        let id = field(c_id).to_string();
        let ts = parse_timestamp(field(c_ts))
            .ok_or_else(|| bad(format!("unparsable timestamp `{}`", field(c_ts))))?;
        let value = parse_reading(field(c_val))
            .ok_or_else(|| bad(format!("unparsable meter_reading `{}`", field(c_val))))?;
        let label = match field(c_lab) {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("anomaly must be 0 or 1, got `{other}`"))),
        };
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id).or_default().push((ts, value, label));
    }

    order
        .into_iter()
        .map(|id| {
            let mut r = rows.remove(&id).unwrap_or_default();
            r.sort_by_key(|row| row.0);
            if let Some(w) = r.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Format(format!(
                    "building {id}: duplicate timestamp {}",
                    w[0].0.format(TIMESTAMP_FORMAT)
                )));
            }
            Ok(RawSeries {
                building_id: id,
                timestamps: r.iter().map(|row| row.0).collect(),
                readings: r.iter().map(|row| row.1).collect(),
                labels: r.iter().map(|row| row.2).collect(),
            })
        })
        .collect()
}

/// Writes series in the same schema [`load_lead_csv`] reads.
pub fn write_lead_csv(path: impl AsRef<Path>, series: &[RawSeries]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("building_id,timestamp,meter_reading,anomaly\n");
    for s in series {
        for i in 0..s.len() {
            let reading = if s.readings[i].is_finite() {
                s.readings[i].to_string()
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.building_id,
                s.timestamps[i].format(TIMESTAMP_FORMAT),
                reading,
                u8::from(s.labels[i])
            ));
        }
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
