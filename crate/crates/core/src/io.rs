//! CSV tables and binary field dumps.
//!
//! Dump layout (all little-endian):
//!
//! ```text
//! magic  b"NCFD"
//! kind   u32      0 = velocity faces (u then v), 1 = nodal scalar
//! nx ny nt u64
//! T        f64
//! frames   u64
//! per frame: t f64, then the row-major arrays as f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::grid::Grid;
use crate::scalar::Real;
use crate::weights::WeightSet;

const MAGIC: &[u8; 4] = b"NCFD";

/// Round-trip exact decimal rendering used in every metric table.
pub fn num<T: Real>(x: T) -> String {
    format!("{:.17e}", x.as_f64())
}

/// Simple comma-separated table kept in memory and written in one go.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            out.write_record(r).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii table")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpKind {
    Velocity = 0,
    Nodal = 1,
}

/// Decoded dump: frames hold the raw arrays (velocity: `u` followed by `v`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub kind: DumpKind,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub t_final: f64,
    pub frames: Vec<(f64, Vec<f64>)>,
}

impl FieldDump {
    pub fn velocity<T: Real>(grid: &Grid<T>, frames: &[(T, &VelocityField<T>)]) -> Self {
        FieldDump {
            kind: DumpKind::Velocity,
            nx: grid.nx,
            ny: grid.ny,
            nt: grid.nt,
            t_final: grid.t_final.as_f64(),
            frames: frames.iter().map(|(t, f)| (t.as_f64(), f.u.iter().chain(&f.v).map(|x| x.as_f64()).collect())).collect(),
        }
    }

    /// Velocity field stored in frame `n`.
    pub fn velocity_frame(&self, n: usize) -> Option<VelocityField<f64>> {
        if self.kind != DumpKind::Velocity {
            return None;
        }
        let data = &self.frames.get(n)?.1;
        let nu = (self.nx + 1) * self.ny;
        Some(VelocityField { nx: self.nx, ny: self.ny, u: data[..nu].to_vec(), v: data[nu..].to_vec() })
    }

    fn frame_len(&self) -> usize {
        match self.kind {
            DumpKind::Velocity => (self.nx + 1) * self.ny + self.nx * (self.ny + 1),
            DumpKind::Nodal => (self.nx + 1) * (self.ny + 1),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.kind as u32).to_le_bytes())?;
        for n in [self.nx, self.ny, self.nt] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        w.write_all(&self.t_final.to_le_bytes())?;
        w.write_all(&(self.frames.len() as u64).to_le_bytes())?;
        for (t, data) in &self.frames {
            if data.len() != self.frame_len() {
                return Err(Error::MeshMismatch(format!("frame of {} values, expected {}", data.len(), self.frame_len())));
            }
            w.write_all(&t.to_le_bytes())?;
            for x in data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Config(format!("{}: not a field dump", path.display())));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let kind = match u32::from_le_bytes(b4) {
            0 => DumpKind::Velocity,
            1 => DumpKind::Nodal,
            k => return Err(Error::Config(format!("{}: unknown dump kind {k}", path.display()))),
        };
        let mut u64s = [0usize; 3];
        for n in &mut u64s {
            r.read_exact(&mut b8)?;
            *n = u64::from_le_bytes(b8) as usize;
        }
        r.read_exact(&mut b8)?;
        let t_final = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let n_frames = u64::from_le_bytes(b8) as usize;
        let mut dump = FieldDump { kind, nx: u64s[0], ny: u64s[1], nt: u64s[2], t_final, frames: Vec::with_capacity(n_frames) };
        let len = dump.frame_len();
        for _ in 0..n_frames {
            r.read_exact(&mut b8)?;
            let t = f64::from_le_bytes(b8);
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut b8)?;
                data.push(f64::from_le_bytes(b8));
            }
            dump.frames.push((t, data));
        }
        Ok(dump)
    }
}

/// Space-time log-weights at every node and time level.
pub fn weights_table<T: Real>(grid: &Grid<T>, ws: &WeightSet<T>) -> Table {
    let mut t = Table::new(&["x", "y", "t", "log_alpha", "log_xi", "log_beta", "log_gamma"]);
    let nn = ws.n_nodes;
    for k in 0..=ws.nt {
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                let node = j * (grid.nx + 1) + i;
                let (x, y) = grid.node_pos(i, j);
                let at = k * nn + node;
                t.push(vec![
                    num(x),
                    num(y),
                    num(grid.time(k)),
                    num(ws.log_alpha[at]),
                    num(ws.log_xi[at]),
                    num(ws.log_beta[at]),
                    num(ws.log_gamma[at]),
                ]);
            }
        }
    }
    t
}

/// The four log-weights as nodal frames, one frame per time level and family member.
pub fn weights_dump<T: Real>(grid: &Grid<T>, ws: &WeightSet<T>) -> FieldDump {
    let nn = ws.n_nodes;
    let mut frames = Vec::with_capacity(4 * (ws.nt + 1));
    for k in 0..=ws.nt {
        for arr in [&ws.log_alpha, &ws.log_xi, &ws.log_beta, &ws.log_gamma] {
            frames.push((grid.time(k).as_f64(), arr[k * nn..(k + 1) * nn].iter().map(|x| x.as_f64()).collect()));
        }
    }
    FieldDump { kind: DumpKind::Nodal, nx: grid.nx, ny: grid.ny, nt: grid.nt, t_final: grid.t_final.as_f64(), frames }
}
