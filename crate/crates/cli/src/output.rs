//! Run directories: CSV and binary artifacts, each recorded with its SHA-256
//! in a manifest that also carries the config hash and seed.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use toml::{Table, Value};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Shortest round-trip decimal, so equal numbers always print equal bytes.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub struct RunDir {
    pub dir: PathBuf,
    artifacts: Vec<(String, String)>,
}

impl RunDir {
    pub fn create(root: &Path, name: &str) -> io::Result<Self> {
        let dir = root.join(name);
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            artifacts: Vec::new(),
        })
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> io::Result<()> {
        fs::write(self.dir.join(name), data)?;
        self.artifacts.push((name.to_string(), sha256_hex(data)));
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let data = w.into_inner().map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))?;
        self.bytes(name, &data)
    }

    pub fn text(&mut self, name: &str, s: &str) -> io::Result<()> {
        self.bytes(name, s.as_bytes())
    }

    /// manifest.toml; written last and not listed among its own artifacts.
    pub fn manifest(&self, fields: &[(&str, Value)]) -> io::Result<()> {
        let mut t = Table::new();
        for (k, v) in fields {
            t.insert(k.to_string(), v.clone());
        }
        let arts: Vec<Value> = self
            .artifacts
            .iter()
            .map(|(n, h)| {
                let mut a = Table::new();
                a.insert("name".into(), Value::String(n.clone()));
                a.insert("sha256".into(), Value::String(h.clone()));
                Value::Table(a)
            })
            .collect();
        t.insert("artifacts".into(), Value::Array(arts));
        fs::write(self.dir.join("manifest.toml"), t.to_string())
    }
}

/// Header and rows of a CSV file as strings.
pub fn read_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))?;
    let header = r
        .headers()
        .map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

pub const RASTER_MAGIC: &[u8; 4] = b"HUSI";
pub const RASTER_VERSION: u32 = 1;

/// Little-endian raster: magic, version, d, M, delta, h, stride, x nodes,
/// ξ bins, then f64 values in `[x node][ξ bin]` order.
pub fn husimi_raster(f: &fockcm::semiclassics::HusimiField) -> Vec<u8> {
    let mut b = Vec::with_capacity(44 + 8 * f.values.len());
    b.extend_from_slice(RASTER_MAGIC);
    b.extend_from_slice(&RASTER_VERSION.to_le_bytes());
    b.extend_from_slice(&(f.grid.d as u32).to_le_bytes());
    b.extend_from_slice(&(f.grid.m as u32).to_le_bytes());
    b.extend_from_slice(&f.grid.delta.to_le_bytes());
    b.extend_from_slice(&f.h.to_le_bytes());
    b.extend_from_slice(&(f.stride as u32).to_le_bytes());
    b.extend_from_slice(&(f.x_nodes() as u32).to_le_bytes());
    b.extend_from_slice(&(f.grid.points() as u32).to_le_bytes());
    for v in &f.values {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}
