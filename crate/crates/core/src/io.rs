//! Tensor file format and multi-tensor containers.
//!
//! A tensor file is: magic bytes `SMT1`, a little-endian `u32` rank,
//! `rank` little-endian `u64` dims, then the row-major `f64` payload in
//! little-endian order. A container is a concatenation of such records;
//! byte offsets of each record are listed in a text manifest kept next
//! to it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SMT1";

pub fn write_tensor_to(w: &mut impl Write, t: &Tensor) -> Result<()> {
    if !t.data().iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric(
            "refusing to write non-finite values to tensor file".into(),
        ));
    }
    w.write_all(MAGIC)?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor_from(r: &mut impl Read) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "bad tensor file magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let rank = u32::from_le_bytes(b4) as usize;
    if rank > 16 {
        return Err(Error::Data(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut b8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut b8)?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        r.read_exact(&mut b8)?;
        data.push(f64::from_le_bytes(b8));
    }
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::Data("tensor file contains non-finite values".into()));
    }
    Tensor::from_vec(data, &shape)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor_to(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    read_tensor_from(&mut r)
}

/// Writer that appends named tensor records and tracks their offsets.
pub struct ContainerWriter {
    w: BufWriter<File>,
    offset: u64,
    entries: Vec<(String, Vec<usize>, u64)>,
}

impl ContainerWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(ContainerWriter {
            w: BufWriter::new(File::create(path)?),
            offset: 0,
            entries: Vec::new(),
        })
    }

    pub fn append(&mut self, name: &str, t: &Tensor) -> Result<()> {
        let start = self.offset;
        write_tensor_to(&mut self.w, t)?;
        let bytes = 4 + 4 + 8 * t.rank() as u64 + 8 * t.numel() as u64;
        self.offset += bytes;
        self.entries
            .push((name.to_string(), t.shape().to_vec(), start));
        Ok(())
    }

    /// Flush and return `(name, shape, byte_offset)` for every record.
    pub fn finish(mut self) -> Result<Vec<(String, Vec<usize>, u64)>> {
        self.w.flush()?;
        Ok(self.entries)
    }
}

/// Read one record out of a container at a known byte offset.
pub fn read_container_entry(path: &Path, offset: u64) -> Result<Tensor> {
    let mut f = File::open(path)?;
    f.seek(SeekFrom::Start(offset))?;
    let mut r = BufReader::new(f);
    read_tensor_from(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn tensor_file_roundtrip_is_bit_exact() {
        let dir = std::env::temp_dir().join("climem_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.smt");
        let mut rng = RngStream::new(3, 1);
        let t = rng.gaussian(&[3, 5, 2]).unwrap();
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert_eq!(back.data(), t.data());
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(&raw[..4], MAGIC);
        assert_eq!(raw.len(), 4 + 4 + 8 * 3 + 8 * 30);
    }

    #[test]
    fn container_offsets_resolve() {
        let dir = std::env::temp_dir().join("climem_io_container");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.smt");
        let mut rng = RngStream::new(4, 1);
        let a = rng.gaussian(&[4]).unwrap();
        let b = rng.gaussian(&[2, 2]).unwrap();
        let mut cw = ContainerWriter::create(&path).unwrap();
        cw.append("a", &a).unwrap();
        cw.append("b", &b).unwrap();
        let entries = cw.finish().unwrap();
        let got_b = read_container_entry(&path, entries[1].2).unwrap();
        assert_eq!(got_b.data(), b.data());
    }
}
