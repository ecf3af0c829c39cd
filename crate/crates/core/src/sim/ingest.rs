//! Trip file readers.
//!
//! Generic CSV: one trip per row, columns `epoch_seconds, o_lon, o_lat,
//! d_lon, d_lat`. A header row is skipped when its first field is not a number.
//!
//! Cabtrace: one GPS fix per line, `lat lon occupied epoch_seconds`, one file
//! per cab (or a directory of them). A 0 -> 1 change of the occupied flag is a
//! pickup at that fix and the following 1 -> 0 change is the dropoff.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::Request;
use crate::error::{Error, Result};
use crate::network::Projection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripFormat {
    Csv,
    Cabtrace,
}

impl std::str::FromStr for TripFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" | "generic" => Ok(TripFormat::Csv),
            "cabtrace" | "sf" | "sf-cabtrace" => Ok(TripFormat::Cabtrace),
            other => Err(Error::invalid(format!("unknown trip format {other:?}"))),
        }
    }
}

/// A trip in geographic coordinates, `(lon, lat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawTrip {
    pub time: f64,
    pub origin: (f64, f64),
    pub destination: (f64, f64),
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn number(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what}: {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{what} is not finite")));
    }
    Ok(v)
}

fn check_lonlat(path: &Path, line: usize, lon: f64, lat: f64) -> Result<()> {
    if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
        return Err(parse_err(path, line, format!("coordinate ({lon}, {lat}) out of range")));
    }
    Ok(())
}

/// Parse generic CSV text; `path` only labels errors.
pub fn parse_generic_csv(text: &str, path: &Path) -> Result<Vec<RawTrip>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut trips = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
        if idx == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != 5 {
            return Err(parse_err(path, line, format!("expected 5 fields, found {}", rec.len())));
        }
        let f: Vec<f64> = ["epoch_seconds", "o_lon", "o_lat", "d_lon", "d_lat"]
            .iter()
            .enumerate()
            .map(|(c, name)| number(path, line, &rec[c], name))
            .collect::<Result<_>>()?;
        check_lonlat(path, line, f[1], f[2])?;
        check_lonlat(path, line, f[3], f[4])?;
        trips.push(RawTrip {
            time: f[0],
            origin: (f[1], f[2]),
            destination: (f[3], f[4]),
        });
    }
    Ok(trips)
}

/// Trips of one cab from its trace text.
pub fn parse_cabtrace(text: &str, path: &Path) -> Result<Vec<RawTrip>> {
    let mut fixes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(parse_err(path, line, format!("expected `lat lon occupied time`, found {} fields", fields.len())));
        }
        let lat = number(path, line, fields[0], "lat")?;
        let lon = number(path, line, fields[1], "lon")?;
        check_lonlat(path, line, lon, lat)?;
        let occupied = match fields[2] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(path, line, format!("occupied flag must be 0 or 1, got {other:?}"))),
        };
        let time = number(path, line, fields[3], "time")?;
        fixes.push((time, (lon, lat), occupied));
    }
    // Published traces run newest first.
    fixes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut trips = Vec::new();
    let mut pickup: Option<(f64, (f64, f64))> = None;
    let mut prev = None;
    for &(time, pos, occupied) in &fixes {
        match (prev, occupied) {
            (Some(false), true) => pickup = Some((time, pos)),
            (Some(true), false) => {
                if let Some((t0, p0)) = pickup.take() {
                    trips.push(RawTrip {
                        time: t0,
                        origin: p0,
                        destination: pos,
                    });
                }
            }
            _ => {}
        }
        prev = Some(occupied);
    }
    Ok(trips)
}

/// Read a trip file (or, for cabtrace, a directory of per-cab files) sorted by time.
pub fn ingest_trips(path: &Path, format: TripFormat) -> Result<Vec<RawTrip>> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let mut trips = match format {
        TripFormat::Csv => parse_generic_csv(&read(path)?, path)?,
        TripFormat::Cabtrace if path.is_dir() => {
            let mut files: Vec<_> = std::fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
                .collect();
            files.sort();
            let mut all = Vec::new();
            for f in files {
                all.extend(parse_cabtrace(&read(&f)?, &f)?);
            }
            all
        }
        TripFormat::Cabtrace => parse_cabtrace(&read(path)?, path)?,
    };
    if trips.is_empty() {
        return Err(Error::invalid(format!("{} contains no trips", path.display())));
    }
    trips.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(trips)
}

/// Project trips to planar meters, by default about their mean position.
pub fn project_trips(trips: &[RawTrip], projection: Option<Projection>) -> (Vec<Request>, Projection) {
    let proj = projection.unwrap_or_else(|| {
        let pts: Vec<(f64, f64)> = trips.iter().flat_map(|t| [t.origin, t.destination]).collect();
        Projection::about_mean(&pts).unwrap_or(Projection { lat0: 0.0, lon0: 0.0 })
    });
    let requests = trips
        .iter()
        .map(|t| Request {
            time: t.time,
            origin: proj.project(t.origin.0, t.origin.1),
            destination: proj.project(t.destination.0, t.destination.1),
        })
        .collect();
    (requests, proj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("trips")
    }

    #[test]
    fn generic_csv_rows() {
        let t = parse_generic_csv("epoch_seconds,o_lon,o_lat,d_lon,d_lat\n100,-122.4,37.7,-122.5,37.8\n", p()).unwrap();
        assert_eq!(
            t,
            vec![RawTrip {
                time: 100.0,
                origin: (-122.4, 37.7),
                destination: (-122.5, 37.8)
            }]
        );
        let err = parse_generic_csv("1,0,0,0,0\n2,0,x,0,0\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(matches!(parse_generic_csv("1,0,0,0\n", p()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn cabtrace_edges_make_trips() {
        // Newest first, as in the published traces.
        let text = "37.80 -122.40 0 400\n37.79 -122.41 1 300\n37.78 -122.42 1 200\n37.77 -122.43 0 100\n";
        let t = parse_cabtrace(text, p()).unwrap();
        assert_eq!(
            t,
            vec![RawTrip {
                time: 200.0,
                origin: (-122.42, 37.78),
                destination: (-122.40, 37.80)
            }]
        );
        assert!(matches!(parse_cabtrace("37.7 -122.4 2 100\n", p()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn ingest_sorts_and_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("t.csv");
        std::fs::write(&f, "30,0,0,0.01,0\n10,0,0,0.01,0\n20,0,0,0.01,0\n").unwrap();
        let times: Vec<f64> = ingest_trips(&f, TripFormat::Csv).unwrap().iter().map(|t| t.time).collect();
        assert_eq!(times, vec![10.0, 20.0, 30.0]);
        std::fs::write(&f, "epoch_seconds,o_lon,o_lat,d_lon,d_lat\n").unwrap();
        assert!(matches!(ingest_trips(&f, TripFormat::Csv), Err(Error::InvalidInput(_))));
        assert!(matches!(ingest_trips(&dir.path().join("missing.csv"), TripFormat::Csv), Err(Error::Io { .. })));
    }
}
