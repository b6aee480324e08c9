//! Readers for the raw Foursquare and Gowalla check-in dumps.
//!
//! Both parsers are stateless over lines: a malformed line is skipped and
//! counted, never fatal. Only an unreadable file is an error.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::DateTime;

use super::CheckIn;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Parsed {
    pub checkins: Vec<CheckIn>,
    /// Non-blank lines that could not be parsed or failed range checks.
    pub skipped: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| Error::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn read_lines<R: BufRead>(reader: R, path: &Path) -> Result<Vec<String>> {
    reader
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|source| Error::Input {
            path: path.to_path_buf(),
            source,
        })
}

fn coord(s: &str, limit: f64) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    (v.is_finite() && v.abs() <= limit).then_some(v)
}

/// Foursquare TSMC2014 layout: user, venue, category id, category name,
/// lat, lon, timezone offset (minutes), UTC time
/// (`Tue Apr 03 18:00:09 +0000 2012`).
///
/// Venue ids are hex strings; they are mapped to integers in order of first
/// appearance within the file.
pub fn parse_foursquare(path: &Path) -> Result<Parsed> {
    let lines = read_lines(open(path)?, path)?;
    Ok(parse_foursquare_lines(lines.iter().map(String::as_str)))
}

pub fn parse_foursquare_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Parsed {
    let mut venues: HashMap<String, u64> = HashMap::new();
    let mut out = Parsed::default();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let parsed = (|| {
            if f.len() != 8 {
                return None;
            }
            let user_id: u64 = f[0].trim().parse().ok()?;
            let venue = f[1].trim();
            if venue.is_empty() {
                return None;
            }
            let lat = coord(f[4], 90.0)?;
            let lon = coord(f[5], 180.0)?;
            let _tz: i64 = f[6].trim().parse().ok()?;
            let ts = DateTime::parse_from_str(f[7].trim(), "%a %b %d %H:%M:%S %z %Y")
                .ok()?
                .timestamp();
            (ts > 0).then_some((user_id, venue, lat, lon, ts))
        })();
        match parsed {
            Some((user_id, venue, lat, lon, timestamp)) => {
                let next = venues.len() as u64;
                let poi_id = *venues.entry(venue.to_string()).or_insert(next);
                out.checkins.push(CheckIn {
                    user_id,
                    poi_id,
                    timestamp,
                    lat,
                    lon,
                });
            }
            None => out.skipped += 1,
        }
    }
    out
}

/// Gowalla (SNAP) layout: user, ISO-8601 time, lat, lon, location id.
pub fn parse_gowalla(path: &Path) -> Result<Parsed> {
    let lines = read_lines(open(path)?, path)?;
    Ok(parse_gowalla_lines(lines.iter().map(String::as_str)))
}

pub fn parse_gowalla_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Parsed {
    let mut out = Parsed::default();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let parsed = (|| {
            if f.len() != 5 {
                return None;
            }
            let user_id: u64 = f[0].trim().parse().ok()?;
            let timestamp = DateTime::parse_from_rfc3339(f[1].trim()).ok()?.timestamp();
            let lat = coord(f[2], 90.0)?;
            let lon = coord(f[3], 180.0)?;
            let poi_id: u64 = f[4].trim().parse().ok()?;
            (timestamp > 0).then_some(CheckIn {
                user_id,
                poi_id,
                timestamp,
                lat,
                lon,
            })
        })();
        match parsed {
            Some(c) => out.checkins.push(c),
            None => out.skipped += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Proleptic Gregorian days since 1970-01-01 (Howard Hinnant's
    /// days_from_civil), used as an independent calendar.
    fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
        let y = if m <= 2 { y - 1 } else { y };
        let era = if y >= 0 { y } else { y - 399 } / 400;
        let yoe = y - era * 400;
        let mp = (m + 9) % 12;
        let doy = (153 * mp + 2) / 5 + d - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146_097 + doe - 719_468
    }

    fn epoch(y: i64, mo: i64, d: i64, h: i64, mi: i64, s: i64) -> i64 {
        days_from_civil(y, mo, d) * 86_400 + h * 3600 + mi * 60 + s
    }

    const FSQ: &str = "470\t49bbd6c0f964a520f4531fe3\t4bf58dd8d48988d127951735\tArts & Crafts Store\t40.7128\t-74.0060\t-240\tTue Apr 03 18:00:09 +0000 2012";

    #[test]
    fn foursquare_line() {
        let p = parse_foursquare_lines([FSQ]);
        assert_eq!(p.skipped, 0);
        let c = p.checkins[0];
        assert_eq!(c.user_id, 470);
        assert_eq!(c.poi_id, 0);
        assert_eq!(c.lat, 40.7128);
        assert_eq!(c.lon, -74.0060);
        assert_eq!(c.timestamp, epoch(2012, 4, 3, 18, 0, 9));
        assert_eq!(c.timestamp, 1_333_476_009);
    }

    #[test]
    fn foursquare_venue_ids_by_first_appearance() {
        let other = FSQ.replace("49bbd6c0f964a520f4531fe3", "abc");
        let p = parse_foursquare_lines([FSQ, other.as_str(), FSQ]);
        let ids: Vec<u64> = p.checkins.iter().map(|c| c.poi_id).collect();
        assert_eq!(ids, vec![0, 1, 0]);
    }

    #[test]
    fn foursquare_out_of_range_latitude_is_skipped() {
        let bad = FSQ.replace("40.7128", "95.0");
        let p = parse_foursquare_lines([bad.as_str()]);
        assert!(p.checkins.is_empty());
        assert_eq!(p.skipped, 1);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_foursquare_lines([]), Parsed::default());
        assert_eq!(parse_gowalla_lines(["", "  "]), Parsed::default());
    }

    #[test]
    fn gowalla_line() {
        let p = parse_gowalla_lines(["0\t2010-10-19T23:55:27Z\t30.23\t-97.79\t22847"]);
        assert_eq!(p.skipped, 0);
        assert_eq!(
            p.checkins,
            vec![CheckIn {
                user_id: 0,
                poi_id: 22847,
                timestamp: epoch(2010, 10, 19, 23, 55, 27),
                lat: 30.23,
                lon: -97.79,
            }]
        );
    }

    #[test]
    fn gowalla_duplicates_and_garbage() {
        let line = "0\t2010-10-19T23:55:27Z\t30.23\t-97.79\t22847";
        let p = parse_gowalla_lines([line, line, "0\t2010-10-19T23:55:27Z\tabc\t-97.79\t1"]);
        assert_eq!(p.checkins.len(), 2);
        assert_eq!(p.skipped, 1);
    }

    #[test]
    fn wrong_format_skips_everything() {
        let line = "0\t2010-10-19T23:55:27Z\t30.23\t-97.79\t22847";
        let p = parse_foursquare_lines([line, line, line]);
        assert_eq!(p.skipped, 3);
        let p = parse_gowalla_lines([FSQ]);
        assert_eq!(p.skipped, 1);
    }

    #[test]
    fn unreadable_file_is_fatal() {
        let err = parse_gowalla(Path::new("/definitely/not/here.tsv")).unwrap_err();
        assert!(matches!(err, Error::Input { .. }));
    }
}
