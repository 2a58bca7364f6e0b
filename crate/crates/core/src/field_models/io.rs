//! CSV readers and writers for station records and gridded snapshots.
//!
//! Station records: `time_id,station_id,x1,x2,value` (`x2` omitted in 1D).
//! Gridded fields: `time_id,i1,i2,value` (`i2` omitted in 1D) plus a sidecar
//! `<path>.grid` key-value file with `origin`, `spacing` and `shape`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::station_world::StationData;
use crate::data::{increment, GriddedField, PointSet};
use crate::error::{Error, Result};
use crate::kv::{fmt_f64, KvFile};

pub fn station_header(dim: usize) -> &'static str {
    if dim == 1 {
        "time_id,station_id,x1,value"
    } else {
        "time_id,station_id,x1,x2,value"
    }
}

pub fn write_station_csv(path: &Path, data: &StationData) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{}", station_header(data.dim)).unwrap();
    for (t, reports) in &data.by_time {
        for &(s, v) in reports {
            write!(out, "{t},{}", data.station_ids[s]).unwrap();
            for x in data.station_point(s) {
                write!(out, ",{}", fmt_f64(*x)).unwrap();
            }
            writeln!(out, ",{}", fmt_f64(v)).unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_station_csv(path: &Path) -> Result<StationData> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format(path, "empty file"))?.trim();
    let dim = match header {
        h if h == station_header(1) => 1,
        h if h == station_header(2) => 2,
        h => return Err(Error::format(path, format!("unexpected header `{h}`"))),
    };
    let mut index: BTreeMap<u32, usize> = BTreeMap::new();
    let mut data = StationData {
        dim,
        station_ids: Vec::new(),
        station_coords: Vec::new(),
        by_time: BTreeMap::new(),
    };
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::format(path, format!("line {}: {what}", lineno + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(bad("wrong number of fields"));
        }
        let t: u32 = fields[0].parse().map_err(|_| bad("bad time_id"))?;
        let id: u32 = fields[1].parse().map_err(|_| bad("bad station_id"))?;
        let point: Vec<f64> = fields[2..2 + dim]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad coordinate"))?;
        let value: f64 = fields[2 + dim].parse().map_err(|_| bad("bad value"))?;
        let s = match index.get(&id) {
            Some(&s) => {
                if data.station_point(s) != point.as_slice() {
                    return Err(bad("station moved between rows"));
                }
                s
            }
            None => {
                let s = data.station_ids.len();
                index.insert(id, s);
                data.station_ids.push(id);
                data.station_coords.extend_from_slice(&point);
                s
            }
        };
        data.by_time.entry(t).or_default().push((s, value));
    }
    for reports in data.by_time.values_mut() {
        reports.sort_by_key(|&(s, _)| s);
        if reports.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::format(path, "duplicate station report at one time"));
        }
    }
    Ok(data)
}

pub fn grid_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".grid");
    PathBuf::from(s)
}

/// Writes snapshots that share one grid geometry.
pub fn write_gridded_csv(path: &Path, snapshots: &[(u32, &GriddedField)]) -> Result<()> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::config("no gridded snapshots to write"))?
        .1;
    let dim = first.dim();
    let mut out = String::new();
    writeln!(out, "{}", if dim == 1 { "time_id,i1,value" } else { "time_id,i1,i2,value" }).unwrap();
    for &(t, field) in snapshots {
        if field.shape != first.shape || field.origin != first.origin || field.spacing != first.spacing {
            return Err(Error::Shape("gridded snapshots must share a grid".into()));
        }
        let mut idx = vec![0usize; dim];
        for v in &field.values {
            write!(out, "{t}").unwrap();
            for i in &idx {
                write!(out, ",{i}").unwrap();
            }
            writeln!(out, ",{}", fmt_f64(*v)).unwrap();
            increment(&mut idx, &field.shape);
        }
    }
    std::fs::write(path, out)?;
    let mut meta = KvFile::new();
    meta.set_list("origin", &first.origin.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>());
    meta.set("spacing", fmt_f64(first.spacing));
    meta.set_list("shape", &first.shape);
    meta.save(&grid_sidecar(path))
}

pub fn read_gridded_csv(path: &Path) -> Result<Vec<(u32, GriddedField)>> {
    let meta = KvFile::load(&grid_sidecar(path))?;
    let origin: Vec<f64> = meta.get_list("origin")?;
    let spacing: f64 = meta.get("spacing")?;
    let shape: Vec<usize> = meta.get_list("shape")?;
    let dim = shape.len();
    if origin.len() != dim || !(1..=2).contains(&dim) {
        return Err(Error::format(path, "grid sidecar origin/shape mismatch"));
    }
    let n: usize = shape.iter().product();
    let text = std::fs::read_to_string(path)?;
    let mut fields: BTreeMap<u32, Vec<Option<f64>>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::format(path, format!("line {}: {what}", lineno + 1));
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != dim + 2 {
            return Err(bad("wrong number of fields"));
        }
        let t: u32 = parts[0].parse().map_err(|_| bad("bad time_id"))?;
        let mut flat = 0;
        for d in 0..dim {
            let i: usize = parts[1 + d].parse().map_err(|_| bad("bad index"))?;
            if i >= shape[d] {
                return Err(bad("index out of range"));
            }
            flat = flat * shape[d] + i;
        }
        let v: f64 = parts[1 + dim].parse().map_err(|_| bad("bad value"))?;
        fields.entry(t).or_insert_with(|| vec![None; n])[flat] = Some(v);
    }
    fields
        .into_iter()
        .map(|(t, vals)| {
            let values = vals
                .into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::format(path, format!("time {t} has missing grid nodes")))?;
            Ok((
                t,
                GriddedField {
                    origin: origin.clone(),
                    spacing,
                    shape: shape.clone(),
                    values,
                },
            ))
        })
        .collect()
}

/// Independent draws in the station-record layout: `time_id` is the draw
/// index and `station_id` the point index within the draw.
pub fn write_draws_csv(path: &Path, draws: &[PointSet]) -> Result<()> {
    let dim = draws.first().map_or(1, |d| d.dim);
    let mut out = String::new();
    writeln!(out, "{}", station_header(dim)).unwrap();
    for (t, draw) in draws.iter().enumerate() {
        if draw.dim != dim {
            return Err(Error::Shape("draws must share one dimension".into()));
        }
        for (i, (x, v)) in draw.points().zip(&draw.values).enumerate() {
            write!(out, "{t},{i}").unwrap();
            for c in x {
                write!(out, ",{}", fmt_f64(*c)).unwrap();
            }
            writeln!(out, ",{}", fmt_f64(*v)).unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads [`write_draws_csv`] output, one point set per distinct `time_id`.
pub fn read_draws_csv(path: &Path) -> Result<Vec<PointSet>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format(path, "empty file"))?.trim();
    let dim = match header {
        h if h == station_header(1) => 1,
        h if h == station_header(2) => 2,
        h => return Err(Error::format(path, format!("unexpected header `{h}`"))),
    };
    let mut draws: BTreeMap<u32, PointSet> = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::format(path, format!("line {}: {what}", lineno + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(bad("wrong number of fields"));
        }
        let t: u32 = fields[0].parse().map_err(|_| bad("bad time_id"))?;
        let nums: Vec<f64> = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad number"))?;
        draws.entry(t).or_insert_with(|| PointSet::empty(dim)).push(&nums[..dim], nums[dim]);
    }
    Ok(draws.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn station_csv_round_trip_and_header() {
        let mut by_time = BTreeMap::new();
        by_time.insert(3, vec![(0, 1.5), (1, -0.25)]);
        by_time.insert(7, vec![(1, 0.1)]);
        let data = StationData {
            dim: 2,
            station_ids: vec![10, 42],
            station_coords: vec![0.1, 0.2, 0.3, 0.4],
            by_time,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.csv");
        write_station_csv(&path, &data).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("time_id,station_id,x1,x2,value\n3,10,0.1,0.2,1.5\n"));
        assert_eq!(read_station_csv(&path).unwrap(), data);
    }

    #[test]
    fn gridded_csv_round_trip_1d() {
        let f = GriddedField {
            origin: vec![-1.0],
            spacing: 0.5,
            shape: vec![3],
            values: vec![1.0, 2.0, 3.0],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        write_gridded_csv(&path, &[(0, &f), (1, &f)]).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("time_id,i1,value\n0,0,1.0\n"));
        let back = read_gridded_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].1, f);
    }

    #[test]
    fn moving_station_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "time_id,station_id,x1,value\n0,1,0.5,1.0\n1,1,0.6,1.0\n").unwrap();
        assert!(read_station_csv(&path).is_err());
    }

    #[test]
    fn draws_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.csv");
        let draws = vec![
            PointSet::new(1, vec![0.5, -1.25], vec![0.1, 2.0]),
            PointSet::new(1, vec![1.0 / 3.0], vec![-0.7]),
        ];
        write_draws_csv(&path, &draws).unwrap();
        assert_eq!(read_draws_csv(&path).unwrap(), draws);
    }
}
