//! Energy CSV, binary snapshots, PPM heatmaps, and the file-backed run driver.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dfs::{extend_bmc, restrict, Grid, SphereField};
use crate::dynamics::{build_plan, run_to_equilibrium, RunOptions, StopReason, TraceRow};
use crate::error::{Error, Result};
use crate::experiments::{count_bubbles, BUBBLE_THRESHOLD};
use crate::io::config::{RawConfig, RunConfig};

pub const ENERGY_HEADER: [&str; 5] = ["step", "time", "energy", "modified_energy", "residual"];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

/// One row per accepted step; the initial state (step 0) is not written.
pub fn write_energy_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(ENERGY_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for row in trace.iter().filter(|r| r.step > 0) {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_energy_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(ENERGY_HEADER) {
        return Err(Error::Config(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

/// Metadata stored next to the raw samples of a snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub n_phi: usize,
    pub n_theta: usize,
    pub species: usize,
    pub step: usize,
    pub time: f64,
    /// Native samples per species, little-endian f64, `φ` index outer.
    pub layout: String,
    pub config: Option<RawConfig>,
}

const LAYOUT: &str = "native_le_f64_phi_major";

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `stem.json` and `stem.bin`.
pub fn write_snapshot(
    stem: &Path,
    fields: &[SphereField],
    step: usize,
    time: f64,
    config: Option<RawConfig>,
) -> Result<()> {
    let grid = fields
        .first()
        .ok_or_else(|| Error::Config("snapshot needs at least one field".into()))?
        .grid();
    let meta = SnapshotMeta {
        n_phi: grid.n_phi(),
        n_theta: grid.n_theta(),
        species: fields.len(),
        step,
        time,
        layout: LAYOUT.into(),
        config,
    };
    let json_path = with_ext(stem, "json");
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    let bin_path = with_ext(stem, "bin");
    let file = File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut w = BufWriter::new(file);
    for f in fields {
        if f.grid() != grid {
            return Err(Error::GridMismatch);
        }
        for v in restrict(f).values.iter() {
            w.write_all(&v.to_le_bytes())
                .map_err(|e| Error::io(&bin_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&bin_path, e))
}

pub fn read_snapshot(stem: &Path) -> Result<(SnapshotMeta, Vec<SphereField>)> {
    let json_path = with_ext(stem, "json");
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let meta: SnapshotMeta = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: json_path.clone(),
        source,
    })?;
    if meta.layout != LAYOUT {
        return Err(Error::Config(format!(
            "unknown snapshot layout {}",
            meta.layout
        )));
    }
    let grid = Grid::new(meta.n_phi, meta.n_theta)?;
    let bin_path = with_ext(stem, "bin");
    let mut bytes = Vec::new();
    File::open(&bin_path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(&bin_path, e))?;
    let shape = grid.native_shape();
    let per = shape.0 * shape.1;
    if bytes.len() != 8 * per * meta.species {
        return Err(Error::Config(format!(
            "{}: expected {} bytes, found {}",
            bin_path.display(),
            8 * per * meta.species,
            bytes.len()
        )));
    }
    let fields = bytes
        .chunks_exact(8 * per)
        .map(|chunk| {
            let vals: Vec<f64> = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            let native = Array2::from_shape_vec(shape, vals).expect("length checked");
            extend_bmc(grid, &native)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((meta, fields))
}

const BACKGROUND: [u8; 3] = [32, 32, 96];
const SPECIES_COLORS: [[u8; 3]; 2] = [[220, 40, 40], [240, 210, 40]];
const SINGLE_COLOR: [u8; 3] = [240, 210, 40];

/// Equirectangular image of the native domain: width `n_φ`, one image row
/// per native row with the north pole on top. Nodes above the 0.5 level get
/// the species color.
pub fn render_heatmap(fields: &[SphereField]) -> Result<Vec<u8>> {
    let grid = fields
        .first()
        .ok_or_else(|| Error::Config("heatmap needs at least one field".into()))?
        .grid();
    let native: Vec<Array2<f64>> = fields.iter().map(|f| restrict(f).values).collect();
    let (w, h) = grid.native_shape();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for r in 0..h {
        for i in 0..w {
            let mut color = BACKGROUND;
            for (s, f) in native.iter().enumerate() {
                if f[[i, r]] > BUBBLE_THRESHOLD {
                    color = if native.len() == 1 {
                        SINGLE_COLOR
                    } else {
                        SPECIES_COLORS[s % 2]
                    };
                }
            }
            out.extend_from_slice(&color);
        }
    }
    Ok(out)
}

/// Parses a binary PPM produced by [`render_heatmap`] into `(width, height, rgb)`.
pub fn read_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let bad = || Error::Config("malformed PPM".into());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?);
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad());
    }
    let w: usize = fields[1].parse().map_err(|_| bad())?;
    let h: usize = fields[2].parse().map_err(|_| bad())?;
    let data = bytes.get(pos..).ok_or_else(bad)?;
    if data.len() != 3 * w * h {
        return Err(bad());
    }
    Ok((
        w,
        h,
        data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    ))
}

pub fn write_heatmap(path: &Path, fields: &[SphereField]) -> Result<()> {
    fs::write(path, render_heatmap(fields)?).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub stem: String,
    pub step: usize,
    pub time: f64,
}

/// Summary written to `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RawConfig,
    pub stop_reason: StopReason,
    pub steps: usize,
    pub time: f64,
    pub residual: f64,
    pub energy: f64,
    pub bubble_counts: Vec<usize>,
    pub modified_energy_violations: Vec<usize>,
    pub wall_seconds: f64,
    pub snapshots: Vec<SnapshotEntry>,
    pub trace: Vec<TraceRow>,
}

/// Runs `config` to equilibrium and writes `config.json`, `energy.csv`,
/// `report.json`, the requested snapshots, and `final.{json,bin,ppm}` into
/// the output directory.
pub fn run_config(config: &RunConfig) -> Result<RunSummary> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let raw = config.to_raw();
    let cfg_path = dir.join("config.json");
    fs::write(&cfg_path, config.to_json()).map_err(|e| Error::io(&cfg_path, e))?;

    let started = Instant::now();
    let model = config.model();
    model.validate()?;
    let init = config.initial_fields(config.seed)?;
    let plan = build_plan(config.grid, model.system())?;
    let opts = RunOptions {
        stop: config.stop,
        record_every: config.record_every,
        record_energy: true,
        check_modified_energy: config.check_modified_energy,
    };

    let mut snapshots = Vec::new();
    let mut pending = config.snapshot_times.iter().peekable();
    let mut snap_err: Option<Error> = None;
    let report = run_to_equilibrium(
        model.system(),
        &plan,
        init,
        &opts,
        &mut |step, time, fields| {
            if pending.peek().is_none_or(|&&t| time < t) || snap_err.is_some() {
                return;
            }
            while pending.next_if(|&&t| time >= t).is_some() {}
            let stem = format!("snapshot_{step:08}");
            match write_snapshot(&dir.join(&stem), fields, step, time, Some(raw.clone())) {
                Ok(()) => snapshots.push(SnapshotEntry { stem, step, time }),
                Err(e) => snap_err = Some(e),
            }
        },
    )?;
    if let Some(e) = snap_err {
        return Err(e);
    }

    write_energy_csv(&dir.join("energy.csv"), &report.trace)?;
    let stem = dir.join("final");
    write_snapshot(
        &stem,
        &report.fields,
        report.steps,
        report.time,
        Some(raw.clone()),
    )?;
    write_heatmap(&dir.join("final.ppm"), &report.fields)?;
    let energy = model.system().energy(&plan, &report.fields)?;
    let summary = RunSummary {
        config: raw,
        stop_reason: report.stop_reason,
        steps: report.steps,
        time: report.time,
        residual: report.residual,
        energy,
        bubble_counts: report
            .fields
            .iter()
            .map(|f| count_bubbles(f, BUBBLE_THRESHOLD).count)
            .collect(),
        modified_energy_violations: report.modified_energy_violations,
        wall_seconds: started.elapsed().as_secs_f64(),
        snapshots,
        trace: report.trace,
    };
    write_json(&dir.join("report.json"), &summary)?;
    Ok(summary)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
