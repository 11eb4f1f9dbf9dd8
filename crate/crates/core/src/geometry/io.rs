//! "KETO" binary cloud container: magic, u16 version, u32 cloud count, then
//! per cloud a u32 point count and `count * 3` little-endian f32 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"KETO";
pub const VERSION: u16 = 1;

pub fn write_clouds<W: Write>(mut w: W, clouds: &[PointCloud]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(clouds.len() as u32).to_le_bytes())?;
    for c in clouds {
        w.write_all(&(c.len() as u32).to_le_bytes())?;
        for p in &c.points {
            for v in p {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_clouds<R: Read>(mut r: R) -> Result<Vec<PointCloud>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a KETO cloud file".into()));
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v)?;
    if u16::from_le_bytes(v) != VERSION {
        return Err(Error::Format("unsupported KETO version".into()));
    }
    let count = read_u32(&mut r)? as usize;
    let mut clouds = Vec::with_capacity(count.min(1 << 16));
    let mut buf = [0u8; 4];
    for _ in 0..count {
        let m = read_u32(&mut r)? as usize;
        let mut pts = Vec::with_capacity(m.min(1 << 20));
        for _ in 0..m {
            let mut p = [0.0; 3];
            for c in &mut p {
                r.read_exact(&mut buf)?;
                *c = f32::from_le_bytes(buf) as f64;
            }
            pts.push(p);
        }
        clouds.push(PointCloud::new(pts));
    }
    Ok(clouds)
}

pub fn save(path: &Path, clouds: &[PointCloud]) -> Result<()> {
    write_clouds(BufWriter::new(File::create(path)?), clouds)
}

pub fn load(path: &Path) -> Result<Vec<PointCloud>> {
    let f = File::open(path)
        .map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    read_clouds(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn write_read_write_is_byte_identical(
            clouds in prop::collection::vec(
                prop::collection::vec(prop::array::uniform3(-10.0f32..10.0), 0..40),
                0..5,
            )
        ) {
            let clouds: Vec<PointCloud> = clouds
                .into_iter()
                .map(|c| PointCloud::new(c.into_iter().map(|p| p.map(|v| v as f64)).collect()))
                .collect();
            let mut first = Vec::new();
            write_clouds(&mut first, &clouds).unwrap();
            let back = read_clouds(first.as_slice()).unwrap();
            prop_assert_eq!(&back, &clouds);
            let mut second = Vec::new();
            write_clouds(&mut second, &back).unwrap();
            prop_assert_eq!(first, second);
        }
    }

    #[test]
    fn header_layout() {
        let mut out = Vec::new();
        write_clouds(&mut out, &[PointCloud::new(vec![[1.0, 2.0, 3.0]])]).unwrap();
        assert_eq!(&out[..4], b"KETO");
        assert_eq!(&out[4..6], &[1, 0]);
        assert_eq!(&out[6..10], &[1, 0, 0, 0]);
        assert_eq!(&out[10..14], &[1, 0, 0, 0]);
        assert_eq!(out.len(), 14 + 12);
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(read_clouds(&b"NOPE\x01\x00\x00\x00\x00\x00"[..]).is_err());
    }
}
