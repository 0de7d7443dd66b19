//! Trajectory records: a CSV of samples plus optional binary field snapshots.
//!
//! Doubles are written in Rust's shortest round-trip form, so reading them
//! back is bit-exact. Snapshot files are a fixed header followed by
//! little-endian `f64` arrays in row-major order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analysis::Snapshot;
use crate::coupling::{CoupledState, Sample};
use crate::error::{Error, Result};
use crate::fluid::velocity_cells;
use crate::grid::Grid;

pub const SCHEMA_MAJOR: u32 = 1;
pub const SCHEMA_MINOR: u32 = 0;
const SNAP_MAGIC: &[u8; 8] = b"CFSISNAP";

/// Shortest decimal that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a CSV with the config echo block, a header row and rows.
pub fn write_csv(path: &Path, echo: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    for line in echo.lines() {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Fields of one coupled state on the MAC grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotRecord {
    pub t: f64,
    pub nx: usize,
    pub ny: usize,
    /// `nx·ny`
    pub u: Vec<f64>,
    /// `nx·(ny+1)`
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub t11: Vec<f64>,
    pub t12: Vec<f64>,
    pub t22: Vec<f64>,
    /// `nx`
    pub eta: Vec<f64>,
    pub eta_dot: Vec<f64>,
}

impl SnapshotRecord {
    pub fn of(s: &CoupledState) -> Self {
        let g = s.grid();
        Self {
            t: s.t,
            nx: g.nx,
            ny: g.ny,
            u: s.fluid.u.clone(),
            v: s.fluid.v.clone(),
            p: s.fluid.p.clone(),
            t11: s.stress.t11.clone(),
            t12: s.stress.t12.clone(),
            t22: s.stress.t22.clone(),
            eta: s.shell.eta.clone(),
            eta_dot: s.shell.eta_dot.clone(),
        }
    }

    fn arrays(&self) -> [(&'static str, &Vec<f64>, usize); 8] {
        let (c, n) = (self.nx * self.ny, self.nx);
        [
            ("u", &self.u, c),
            ("v", &self.v, n * (self.ny + 1)),
            ("p", &self.p, c),
            ("T11", &self.t11, c),
            ("T12", &self.t12, c),
            ("T22", &self.t22, c),
            ("eta", &self.eta, n),
            ("eta_dot", &self.eta_dot, n),
        ]
    }

    pub fn check_dims(&self) -> Result<()> {
        for (name, a, n) in self.arrays() {
            if a.len() != n {
                return Err(Error::Record(format!(
                    "snapshot field {name} has {} values, a {}×{} grid needs {n}",
                    a.len(),
                    self.nx,
                    self.ny
                )));
            }
        }
        Ok(())
    }

    /// Cell-centred copy used by the trajectory comparison.
    pub fn to_snapshot(&self, g: &Grid) -> Result<Snapshot> {
        if g.nx != self.nx || g.ny != self.ny {
            return Err(Error::Record(format!(
                "snapshot grid {}×{} differs from {}×{}",
                self.nx, self.ny, g.nx, g.ny
            )));
        }
        let (uc, vc) = velocity_cells(g, &self.u, &self.v);
        Ok(Snapshot {
            t: self.t,
            eta: self.eta.clone(),
            eta_dot: self.eta_dot.clone(),
            uc,
            vc,
            t11: self.t11.clone(),
            t12: self.t12.clone(),
            t22: self.t22.clone(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check_dims()?;
        let total: usize = self.arrays().iter().map(|a| a.2).sum();
        let mut b = Vec::with_capacity(32 + 8 * total);
        b.extend_from_slice(SNAP_MAGIC);
        b.extend_from_slice(&SCHEMA_MAJOR.to_le_bytes());
        b.extend_from_slice(&(self.nx as u32).to_le_bytes());
        b.extend_from_slice(&(self.ny as u32).to_le_bytes());
        b.extend_from_slice(&0u32.to_le_bytes());
        b.extend_from_slice(&self.t.to_le_bytes());
        for (_, a, _) in self.arrays() {
            for v in a {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(b)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let need = |off: usize, n: usize, what: &str| -> Result<()> {
            if b.len() < off + n {
                Err(Error::Record(format!(
                    "snapshot truncated at byte offset {} while reading {what} (needs {} bytes)",
                    b.len(),
                    off + n
                )))
            } else {
                Ok(())
            }
        };
        need(0, 32, "header")?;
        if &b[0..8] != SNAP_MAGIC {
            return Err(Error::Record("not a snapshot file (bad magic at byte offset 0)".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().expect("4 bytes"));
        let major = u32_at(8);
        if major != SCHEMA_MAJOR {
            return Err(Error::Record(format!("snapshot schema major version {major} is not supported (expected {SCHEMA_MAJOR})")));
        }
        let (nx, ny) = (u32_at(12) as usize, u32_at(16) as usize);
        if nx == 0 || ny == 0 || nx > 1 << 16 || ny > 1 << 16 {
            return Err(Error::Record(format!("corrupted dimensions header at byte offset 12: {nx}×{ny}")));
        }
        let t = f64::from_le_bytes(b[24..32].try_into().expect("8 bytes"));
        let mut off = 32;
        let mut take = |n: usize, what: &str| -> Result<Vec<f64>> {
            need(off, 8 * n, what)?;
            let v = b[off..off + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            off += 8 * n;
            Ok(v)
        };
        let c = nx * ny;
        let s = Self {
            t,
            nx,
            ny,
            u: take(c, "u")?,
            v: take(nx * (ny + 1), "v")?,
            p: take(c, "p")?,
            t11: take(c, "T11")?,
            t12: take(c, "T12")?,
            t22: take(c, "T22")?,
            eta: take(nx, "eta")?,
            eta_dot: take(nx, "eta_dot")?,
        };
        if off != b.len() {
            return Err(Error::Record(format!("{} trailing bytes after byte offset {off}", b.len() - off)));
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    /// resolved config text, one `key = value` per line
    pub config: String,
    pub nx: usize,
    pub ny: usize,
    pub samples: Vec<Sample>,
    pub snapshots: Vec<SnapshotRecord>,
}

impl TrajectoryRecord {
    pub fn new(config: String, nx: usize, ny: usize) -> Self {
        Self {
            config,
            nx,
            ny,
            samples: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.samples.windows(2).find(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Record(format!("sample times not strictly increasing at t = {}", w[1].t)));
        }
        for s in &self.snapshots {
            if s.nx != self.nx || s.ny != self.ny {
                return Err(Error::Record(format!(
                    "snapshot at t = {} is on a {}×{} grid, the record is {}×{}",
                    s.t, s.nx, s.ny, self.nx, self.ny
                )));
            }
            s.check_dims()?;
        }
        Ok(())
    }

    /// Refuses records from a different grid.
    pub fn check_compatible(&self, other: &TrajectoryRecord) -> Result<()> {
        if (self.nx, self.ny) != (other.nx, other.ny) {
            return Err(Error::Record(format!(
                "records come from different grids: {}×{} and {}×{}",
                self.nx, self.ny, other.nx, other.ny
            )));
        }
        Ok(())
    }

    pub fn analysis_snapshots(&self, g: &Grid) -> Result<Vec<Snapshot>> {
        self.snapshots.iter().map(|s| s.to_snapshot(g)).collect()
    }
}

fn snapshot_path(path: &Path, k: usize) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{name}.snap{k:04}.bin"))
}

/// Writes `path` (CSV) and one `path.snapNNNN.bin` per snapshot.
pub fn write_record(record: &TrajectoryRecord, path: &Path) -> Result<()> {
    record.validate()?;
    let mut f = fs::File::create(path)?;
    writeln!(f, "# schema = {SCHEMA_MAJOR}.{SCHEMA_MINOR}")?;
    writeln!(f, "# grid = {} {}", record.nx, record.ny)?;
    for line in record.config.lines() {
        writeln!(f, "# config: {line}")?;
    }
    for (k, s) in record.snapshots.iter().enumerate() {
        let p = snapshot_path(path, k);
        fs::write(&p, s.to_bytes()?)?;
        writeln!(f, "# snapshot = {}", p.file_name().expect("file name").to_string_lossy())?;
    }
    writeln!(f, "{}", Sample::COLUMNS.join(","))?;
    for s in &record.samples {
        let row: Vec<String> = s.values().iter().map(|&v| fmt_f64(v)).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_record(path: &Path) -> Result<TrajectoryRecord> {
    let text = fs::read_to_string(path)?;
    let mut rec = TrajectoryRecord::new(String::new(), 0, 0);
    let mut schema = false;
    let mut header = false;
    let mut snap_files = Vec::new();
    let mut config = String::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let complete = line.ends_with('\n');
        let line = line.trim_end_matches('\n');
        if let Some(c) = line.strip_prefix("# ") {
            if let Some(v) = c.strip_prefix("schema = ") {
                let major: u32 = v
                    .split('.')
                    .next()
                    .and_then(|m| m.parse().ok())
                    .ok_or_else(|| Error::Record(format!("unreadable schema version `{v}` at byte offset {at}")))?;
                if major != SCHEMA_MAJOR {
                    return Err(Error::Record(format!("record schema major version {major} is not supported (expected {SCHEMA_MAJOR})")));
                }
                schema = true;
            } else if let Some(v) = c.strip_prefix("grid = ") {
                let d: Vec<usize> = v.split_whitespace().filter_map(|x| x.parse().ok()).collect();
                if d.len() != 2 || d[0] == 0 || d[1] == 0 {
                    return Err(Error::Record(format!("corrupted dimensions header `{v}` at byte offset {at}")));
                }
                (rec.nx, rec.ny) = (d[0], d[1]);
            } else if let Some(v) = c.strip_prefix("config: ") {
                config.push_str(v);
                config.push('\n');
            } else if let Some(v) = c.strip_prefix("snapshot = ") {
                snap_files.push(v.to_string());
            }
            continue;
        }
        if !header {
            if line != Sample::COLUMNS.join(",") {
                return Err(Error::Record(format!("unexpected header at byte offset {at}")));
            }
            header = true;
            continue;
        }
        if !complete {
            return Err(Error::Record(format!("record truncated at byte offset {offset} (incomplete last row)")));
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Record(format!("unreadable row at byte offset {at}")))?;
        if vals.len() != Sample::COLUMNS.len() {
            return Err(Error::Record(format!("row at byte offset {at} has {} values, expected {}", vals.len(), Sample::COLUMNS.len())));
        }
        rec.samples.push(Sample::from_values(&vals)?);
    }
    if !schema {
        return Err(Error::Record("missing schema line".into()));
    }
    if rec.nx == 0 {
        return Err(Error::Record("missing dimensions header".into()));
    }
    if !header {
        return Err(Error::Record(format!("record truncated at byte offset {offset} (no header row)")));
    }
    rec.config = config;
    let dir = path.parent().unwrap_or(Path::new("."));
    for name in snap_files {
        let p = dir.join(&name);
        let bytes = fs::read(&p)?;
        rec.snapshots
            .push(SnapshotRecord::from_bytes(&bytes).map_err(|e| Error::Record(format!("{}: {e}", p.display())))?);
    }
    rec.validate()?;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ReferenceDomain;

    fn record() -> TrajectoryRecord {
        let d = ReferenceDomain::channel(8).unwrap();
        let mut s = CoupledState::rest(&d).unwrap();
        s.fluid.u[3] = 0.1 + 0.2;
        s.stress.t12[5] = -1.0 / 3.0;
        s.shell.eta[2] = 1e-300;
        let mut r = TrajectoryRecord::new("Nx = 8\n".into(), 8, 4);
        let mut v = [0.0; 13];
        v[0] = 0.0;
        v[1] = std::f64::consts::PI;
        v[5] = 5e-324;
        v[11] = f64::MAX;
        r.samples.push(Sample::from_values(&v).unwrap());
        v[0] = 0.1;
        v[2] = -0.0;
        r.samples.push(Sample::from_values(&v).unwrap());
        r.snapshots.push(SnapshotRecord::of(&s));
        r
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        let r = record();
        write_record(&r, &p).unwrap();
        let back = read_record(&p).unwrap();
        assert_eq!(back, r);
        for (a, b) in back.samples.iter().zip(&r.samples) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn empty_record_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        write_record(&TrajectoryRecord::new(String::new(), 8, 4), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1);
        assert!(read_record(&p).unwrap().samples.is_empty());
    }

    #[test]
    fn corruption_is_reported() {
        let r = record();
        let bytes = r.snapshots[0].to_bytes().unwrap();
        let e = SnapshotRecord::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err().to_string();
        assert!(e.contains("byte offset"), "{e}");
        let mut bad = bytes.clone();
        bad[12..16].copy_from_slice(&0u32.to_le_bytes());
        assert!(SnapshotRecord::from_bytes(&bad).unwrap_err().to_string().contains("dimensions"));
        let mut wrong = r.clone();
        wrong.nx = 16;
        assert!(write_record(&wrong, Path::new("/nonexistent/x.csv")).unwrap_err().to_string().contains("grid"));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_record(&r, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, &text[..text.len() - 5]).unwrap();
        assert!(read_record(&p).unwrap_err().to_string().contains("byte offset"));
        fs::write(&p, text.replace("schema = 1.0", "schema = 2.0")).unwrap();
        assert!(read_record(&p).unwrap_err().to_string().contains("schema"));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = record();
        let b = TrajectoryRecord::new(String::new(), 16, 8);
        assert!(a.check_compatible(&b).is_err());
        let g = ReferenceDomain::channel(16).unwrap().grid();
        assert!(a.analysis_snapshots(&g).is_err());
    }
}
