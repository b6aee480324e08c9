//! Line-delimited JSON dataset file.
//!
//! ```text
//! {"format":"adspoi-dataset","version":1,"name":..,"users":..,"pois":..,"checkins":..}
//! {"catalog":[[id,lat,lon],...]}
//! {"user":u,"poi":[..],"t":[..],"lat":[..],"lon":[..]}   // one line per user
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every value bit for bit. Writing is atomic (temp file, rename).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Catalog, CheckIn, Poi};
use crate::error::{Error, Result};

pub const DATASET_VERSION: u32 = 1;
const FORMAT_TAG: &str = "adspoi-dataset";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    name: String,
    users: usize,
    pois: usize,
    checkins: usize,
}

#[derive(Serialize, Deserialize)]
struct CatalogLine {
    catalog: Vec<(u64, f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct UserLine {
    user: u64,
    poi: Vec<u64>,
    t: Vec<i64>,
    lat: Vec<f64>,
    lon: Vec<f64>,
}

/// Contents of a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub checkins: Vec<CheckIn>,
    pub catalog: Catalog,
    /// Hex SHA-256 of the file bytes.
    pub fingerprint: String,
}

fn encode(name: &str, checkins: &[CheckIn]) -> Result<Vec<u8>> {
    let catalog = Catalog::from_checkins(checkins);
    let mut by_user: BTreeMap<u64, Vec<CheckIn>> = BTreeMap::new();
    for c in checkins {
        by_user.entry(c.user_id).or_default().push(*c);
    }
    let mut buf = Vec::new();
    serde_json::to_writer(
        &mut buf,
        &Header {
            format: FORMAT_TAG.into(),
            version: DATASET_VERSION,
            name: name.into(),
            users: by_user.len(),
            pois: catalog.len(),
            checkins: checkins.len(),
        },
    )?;
    buf.push(b'\n');
    serde_json::to_writer(
        &mut buf,
        &CatalogLine {
            catalog: catalog.pois().iter().map(|p| (p.id, p.lat, p.lon)).collect(),
        },
    )?;
    buf.push(b'\n');
    for (user, mut events) in by_user {
        events.sort_by_key(|c| c.timestamp);
        serde_json::to_writer(
            &mut buf,
            &UserLine {
                user,
                poi: events.iter().map(|c| c.poi_id).collect(),
                t: events.iter().map(|c| c.timestamp).collect(),
                lat: events.iter().map(|c| c.lat).collect(),
                lon: events.iter().map(|c| c.lon).collect(),
            },
        )?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes check-ins grouped per user (time-ordered) with their catalog.
pub fn write_dataset(path: &Path, name: &str, checkins: &[CheckIn]) -> Result<()> {
    write_atomic(path, &encode(name, checkins)?)
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("dataset line {line}: {msg}"))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|source| Error::Input {
        path: path.to_path_buf(),
        source,
    })?;
    let fingerprint = hex::encode(Sha256::digest(&bytes));
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(e.to_string()))?;
    let mut lines = text.lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let header: Header = serde_json::from_str(first).map_err(|e| bad(1, e))?;
    if header.format != FORMAT_TAG {
        return Err(bad(1, format!("not a dataset file (format {:?})", header.format)));
    }
    if header.version != DATASET_VERSION {
        return Err(bad(1, format!("unsupported version {}", header.version)));
    }
    let (_, second) = lines.next().ok_or_else(|| bad(2, "missing catalog"))?;
    let cat: CatalogLine = serde_json::from_str(second).map_err(|e| bad(2, e))?;
    let catalog = Catalog::new(
        cat.catalog
            .into_iter()
            .map(|(id, lat, lon)| Poi { id, lat, lon })
            .collect(),
    );

    let mut checkins = Vec::with_capacity(header.checkins);
    let mut users = 0;
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let u: UserLine = serde_json::from_str(line).map_err(|e| bad(i + 1, e))?;
        let n = u.poi.len();
        if u.t.len() != n || u.lat.len() != n || u.lon.len() != n {
            return Err(bad(i + 1, "event arrays differ in length"));
        }
        for j in 0..n {
            if !catalog.contains(u.poi[j]) {
                return Err(bad(i + 1, format!("POI {} missing from catalog", u.poi[j])));
            }
            checkins.push(CheckIn {
                user_id: u.user,
                poi_id: u.poi[j],
                timestamp: u.t[j],
                lat: u.lat[j],
                lon: u.lon[j],
            });
        }
        users += 1;
    }
    if users != header.users || checkins.len() != header.checkins || catalog.len() != header.pois {
        return Err(Error::Format(
            "dataset counts disagree with header (truncated file?)".into(),
        ));
    }
    Ok(Dataset {
        name: header.name,
        checkins,
        catalog,
        fingerprint,
    })
}
