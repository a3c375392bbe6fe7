//! On-disk form of pooled sparse feature vectors.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic      4 bytes  "SGPV"
//! version    u16      (1)
//! reserved   u16      (0)
//! id_len     u32
//! subject_id id_len bytes, UTF-8
//! n_nodes    u32
//! feat_dim   u32
//! ratio      f64
//! nnz        u64
//! entries    nnz × (position u64, value f64), positions strictly increasing
//! ```
//!
//! The CSV debug form is a `# subject_id=..,n_nodes=..,feat_dim=..,ratio=..`
//! comment line followed by a `position,value` table.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::SparseFeatureVector;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SGPV";
pub const VERSION: u16 = 1;

/// A pooled subject as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatureFile {
    pub subject_id: String,
    pub ratio: f64,
    pub vector: SparseFeatureVector,
}

impl SparseFeatureFile {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let v = &self.vector;
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        w.write_u16::<LittleEndian>(0)?;
        let id = self.subject_id.as_bytes();
        w.write_u32::<LittleEndian>(id.len() as u32)?;
        w.write_all(id)?;
        w.write_u32::<LittleEndian>(v.n_nodes as u32)?;
        w.write_u32::<LittleEndian>(v.feat_dim as u32)?;
        w.write_f64::<LittleEndian>(self.ratio)?;
        w.write_u64::<LittleEndian>(v.entries.len() as u64)?;
        for &(pos, val) in &v.entries {
            w.write_u64::<LittleEndian>(pos as u64)?;
            w.write_f64::<LittleEndian>(val)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::format(path, "bad magic, not a sparse feature file"));
        }
        let version = r.read_u16::<LittleEndian>().map_err(io)?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let _reserved = r.read_u16::<LittleEndian>().map_err(io)?;
        let id_len = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id).map_err(io)?;
        let subject_id =
            String::from_utf8(id).map_err(|_| Error::format(path, "subject id is not UTF-8"))?;
        let n_nodes = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let feat_dim = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let ratio = r.read_f64::<LittleEndian>().map_err(io)?;
        let nnz = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let total = n_nodes * feat_dim;
        let mut entries = Vec::with_capacity(nnz.min(total));
        let mut last: Option<usize> = None;
        for _ in 0..nnz {
            let pos = r.read_u64::<LittleEndian>().map_err(io)? as usize;
            let val = r.read_f64::<LittleEndian>().map_err(io)?;
            if pos >= total || last.is_some_and(|l| pos <= l) {
                return Err(Error::format(
                    path,
                    format!("position {pos} out of order or beyond length {total}"),
                ));
            }
            if !val.is_finite() {
                return Err(Error::format(path, format!("non-finite value at {pos}")));
            }
            last = Some(pos);
            entries.push((pos, val));
        }
        Ok(Self {
            subject_id,
            ratio,
            vector: SparseFeatureVector {
                n_nodes,
                feat_dim,
                entries,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f), path)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let v = &self.vector;
        writeln!(
            w,
            "# subject_id={},n_nodes={},feat_dim={},ratio={}",
            self.subject_id, v.n_nodes, v.feat_dim, self.ratio
        )?;
        writeln!(w, "position,value")?;
        for &(pos, val) in &v.entries {
            writeln!(w, "{pos},{val}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}
