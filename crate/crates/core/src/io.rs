//! Survey CSV ingestion, model snapshots and result exports. Every file
//! written here goes through a temporary file renamed into place.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Location, SampleDistribution, SurveyDataset};
use crate::error::{Error, Result};
use crate::evaluation::{CurveSet, PRPoint, Strategy};
use crate::grid::{CellKey, GridConfig};
use crate::prediction::ScalarField;
use crate::topic::{Hyperparameters, TrainedModel};

pub const SNAPSHOT_VERSION: u32 = 1;
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

const METRIC_HEADER: [&str; 4] = ["sample_id", "time_s", "easting_m", "northing_m"];
const LATLON_HEADER: [&str; 4] = ["sample_id", "time_s", "lat_deg", "lon_deg"];

/// Writes `path` by filling a temporary file in the same directory and
/// renaming it over the target.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows: usize,
    /// Rows dropped because every count was zero.
    pub dropped_empty: usize,
}

struct RawRow {
    line: usize,
    sample_id: u64,
    time: f64,
    a: f64,
    b: f64,
    counts: Vec<u32>,
}

fn read_rows(path: &Path, header: [&str; 4]) -> Result<(Vec<String>, Vec<RawRow>)> {
    let file = File::open(path)
        .map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let head = rdr
        .headers()
        .map_err(|e| Error::parse(1, format!("unreadable header: {e}")))?
        .clone();
    if head.len() < 5 || head.iter().take(4).ne(header.iter().copied()) {
        return Err(Error::parse(
            1,
            format!(
                "header must be `{},<taxon_1>,...`, got `{}`",
                header.join(","),
                head.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let names: Vec<String> = head.iter().skip(4).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != head.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", head.len(), rec.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            let s = &rec[i];
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("{}: non-numeric value {s:?}", header[i])))?;
            if !v.is_finite() {
                return Err(Error::parse(line, format!("{}: non-finite value {s:?}", header[i])));
            }
            Ok(v)
        };
        let sample_id: u64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("sample_id: not an integer {:?}", &rec[0])))?;
        let mut counts = Vec::with_capacity(names.len());
        for (j, field) in rec.iter().enumerate().skip(4) {
            let f = field.trim();
            let c: i64 = f.parse().map_err(|_| {
                Error::parse(line, format!("{}: non-numeric count {f:?}", names[j - 4]))
            })?;
            if c < 0 {
                return Err(Error::parse(line, format!("{}: negative count {c}", names[j - 4])));
            }
            let c = u32::try_from(c)
                .map_err(|_| Error::parse(line, format!("{}: count {c} too large", names[j - 4])))?;
            counts.push(c);
        }
        rows.push(RawRow {
            line,
            sample_id,
            time: num(1)?,
            a: num(2)?,
            b: num(3)?,
            counts,
        });
    }
    Ok((names, rows))
}

fn build_dataset(
    names: Vec<String>,
    rows: Vec<RawRow>,
    location: impl Fn(&RawRow) -> Location,
) -> Result<(SurveyDataset, LoadReport)> {
    let mut report = LoadReport {
        rows: rows.len(),
        dropped_empty: 0,
    };
    let mut samples = Vec::new();
    for r in &rows {
        if r.counts.iter().all(|&c| c == 0) {
            report.dropped_empty += 1;
            continue;
        }
        samples.push(SampleDistribution::new(r.sample_id, location(r), r.counts.clone())?);
    }
    if samples.is_empty() {
        return Err(Error::input("no samples"));
    }
    Ok((SurveyDataset::new(names, samples)?, report))
}

/// Loads a wide per-sample count table with metric coordinates.
pub fn load_counts_csv(path: &Path) -> Result<(SurveyDataset, LoadReport)> {
    let (names, rows) = read_rows(path, METRIC_HEADER)?;
    build_dataset(names, rows, |r| Location {
        time: r.time,
        easting: r.a,
        northing: r.b,
    })
}

/// Equirectangular projection about a reference latitude, measured from
/// an origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equirectangular {
    pub ref_lat_deg: f64,
    pub origin_lat_deg: f64,
    pub origin_lon_deg: f64,
}

impl Equirectangular {
    pub fn forward(&self, lat_deg: f64, lon_deg: f64) -> (f64, f64) {
        let easting = EARTH_RADIUS_M
            * (lon_deg - self.origin_lon_deg).to_radians()
            * self.ref_lat_deg.to_radians().cos();
        let northing = EARTH_RADIUS_M * (lat_deg - self.origin_lat_deg).to_radians();
        (easting, northing)
    }

    pub fn inverse(&self, easting: f64, northing: f64) -> (f64, f64) {
        let lat = self.origin_lat_deg + (northing / EARTH_RADIUS_M).to_degrees();
        let lon = self.origin_lon_deg
            + (easting / (EARTH_RADIUS_M * self.ref_lat_deg.to_radians().cos())).to_degrees();
        (lat, lon)
    }
}

/// Loads a count table with geographic coordinates, projected to meters
/// relative to the earliest sample.
pub fn load_latlon_csv(path: &Path, ref_lat_deg: f64) -> Result<(SurveyDataset, LoadReport)> {
    if !(ref_lat_deg.is_finite() && ref_lat_deg.abs() < 90.0) {
        return Err(Error::input(format!("reference latitude {ref_lat_deg} out of range")));
    }
    let (names, rows) = read_rows(path, LATLON_HEADER)?;
    for r in &rows {
        if r.a.abs() > 90.0 {
            return Err(Error::parse(r.line, format!("latitude {} out of range", r.a)));
        }
        if r.b.abs() > 180.0 {
            return Err(Error::parse(r.line, format!("longitude {} out of range", r.b)));
        }
    }
    let origin = rows
        .iter()
        .filter(|r| r.counts.iter().any(|&c| c > 0))
        .min_by(|x, y| x.time.total_cmp(&y.time))
        .map(|r| (r.a, r.b))
        .unwrap_or((0.0, 0.0));
    let proj = Equirectangular {
        ref_lat_deg,
        origin_lat_deg: origin.0,
        origin_lon_deg: origin.1,
    };
    build_dataset(names, rows, |r| {
        let (easting, northing) = proj.forward(r.a, r.b);
        Location {
            time: r.time,
            easting,
            northing,
        }
    })
}

/// Writes a dataset as a metric count table.
pub fn write_counts_csv(dataset: &SurveyDataset, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut head: Vec<&str> = METRIC_HEADER.to_vec();
        head.extend(dataset.vocab_names.iter().map(String::as_str));
        out.write_record(&head).map_err(csv_io)?;
        for s in &dataset.samples {
            let mut row = vec![
                s.sample_id.to_string(),
                s.location.time.to_string(),
                s.location.easting.to_string(),
                s.location.northing.to_string(),
            ];
            row.extend(s.counts().iter().map(u32::to_string));
            out.write_record(&row).map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    })
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    grid_config: GridConfig,
    hyperparameters: Hyperparameters,
    vocab_size: usize,
    vocab_names: Vec<String>,
    topic_taxon_counts: Vec<Vec<u32>>,
    cell_topic_counts: BTreeMap<CellKey, Vec<u32>>,
    rng_seed: u64,
    n_observations: u64,
}

pub fn model_to_json(model: &TrainedModel) -> Result<String> {
    let snap = Snapshot {
        version: SNAPSHOT_VERSION,
        grid_config: model.grid,
        hyperparameters: model.hyperparameters,
        vocab_size: model.vocab_size(),
        vocab_names: model.vocab_names.clone(),
        topic_taxon_counts: model.topic_taxon_counts.clone(),
        cell_topic_counts: model.cell_topic_counts.clone(),
        rng_seed: model.rng_seed,
        n_observations: model.n_observations,
    };
    Ok(serde_json::to_string_pretty(&snap)?)
}

pub fn model_from_json(text: &str) -> Result<TrainedModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Snapshot(format!("corrupt JSON: {e}")))?;
    match value.get("version") {
        None => return Err(Error::Snapshot("unversioned snapshot".into())),
        Some(v) if v.as_u64() != Some(SNAPSHOT_VERSION as u64) => {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {v}, expected {SNAPSHOT_VERSION}"
            )))
        }
        Some(_) => {}
    }
    let snap: Snapshot =
        serde_json::from_value(value).map_err(|e| Error::Snapshot(format!("malformed snapshot: {e}")))?;
    if snap.vocab_size != snap.vocab_names.len() {
        return Err(Error::Snapshot(format!(
            "vocab_size {} disagrees with {} names",
            snap.vocab_size,
            snap.vocab_names.len()
        )));
    }
    let model = TrainedModel {
        grid: snap.grid_config,
        hyperparameters: snap.hyperparameters,
        vocab_names: snap.vocab_names,
        topic_taxon_counts: snap.topic_taxon_counts,
        cell_topic_counts: snap.cell_topic_counts,
        rng_seed: snap.rng_seed,
        n_observations: snap.n_observations,
    };
    model
        .validate()
        .map_err(|e| Error::Snapshot(e.to_string()))?;
    Ok(model)
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let json = model_to_json(model)?;
    write_atomic(path, |w| {
        w.write_all(json.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    model_from_json(&text)
}

/// `t_idx,e_idx,n_idx,value`, one row per covered cell in key order.
pub fn write_field_csv(field: &ScalarField, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "t_idx,e_idx,n_idx,value")?;
        for (c, v) in field.iter() {
            writeln!(w, "{},{},{},{v}", c.t_idx, c.e_idx, c.n_idx)?;
        }
        Ok(())
    })
}

/// `t_idx,e_idx,n_idx`, one row per hotspot cell in key order.
pub fn write_hotspots_csv(cells: &BTreeSet<CellKey>, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "t_idx,e_idx,n_idx")?;
        for c in cells {
            writeln!(w, "{},{},{}", c.t_idx, c.e_idx, c.n_idx)?;
        }
        Ok(())
    })
}

fn pr_row(strategy: Strategy, taxon: &str, p: &PRPoint) -> [String; 9] {
    [
        strategy.to_string(),
        taxon.to_string(),
        p.tau.to_string(),
        p.tp.to_string(),
        p.fp.to_string(),
        p.fn_.to_string(),
        p.tn.to_string(),
        p.precision.to_string(),
        p.recall.to_string(),
    ]
}

/// `strategy,taxon,tau,tp,fp,fn,tn,precision,recall`. Per-taxon rows carry
/// the taxon name; micro-aggregated rows use `all`.
pub fn write_pr_csv(curves: &[(Strategy, &CurveSet)], vocab_names: &[String], path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["strategy", "taxon", "tau", "tp", "fp", "fn", "tn", "precision", "recall"])
            .map_err(csv_io)?;
        for (strategy, set) in curves {
            for (v, points) in &set.per_taxon {
                let name = vocab_names.get(*v).map_or_else(|| v.to_string(), Clone::clone);
                for p in points {
                    out.write_record(pr_row(*strategy, &name, p)).map_err(csv_io)?;
                }
            }
            for p in &set.aggregated {
                out.write_record(pr_row(*strategy, "all", p)).map_err(csv_io)?;
            }
        }
        out.flush()?;
        Ok(())
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_atomic(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })
}
