//! Binary feature archive.
//!
//! Layout (little-endian): magic `FARC1`, then records until EOF, each
//! `u32 id_len | id bytes | u32 rows | u32 cols | u8 kind tag | rows*cols f32`.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use std::io::{ErrorKind, Read, Write};

use super::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"FARC1";

pub fn write_archive<W: Write>(mut w: W, records: &[(String, FeatureMatrix)]) -> Result<()> {
    w.write_all(MAGIC)?;
    for (id, fm) in records {
        w.write_u32::<LittleEndian>(id.len() as u32)?;
        w.write_all(id.as_bytes())?;
        w.write_u32::<LittleEndian>(fm.frames() as u32)?;
        w.write_u32::<LittleEndian>(fm.dims() as u32)?;
        w.write_u8(fm.kind.tag())?;
        for &v in fm.data.iter() {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::UnsupportedFormat(msg.into())
}

pub fn read_archive<R: Read>(mut r: R) -> Result<Vec<(String, FeatureMatrix)>> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a FARC1 feature archive"));
    }
    let mut out = Vec::new();
    loop {
        let id_len = match r.read_u32::<LittleEndian>() {
            Ok(n) => n as usize,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id)?;
        let id = String::from_utf8(id).map_err(|_| bad("record id is not UTF-8"))?;
        let rows = r.read_u32::<LittleEndian>()? as usize;
        let cols = r.read_u32::<LittleEndian>()? as usize;
        let tag = r.read_u8()?;
        let kind = FeatureKind::from_tag(tag).ok_or_else(|| bad(format!("unknown kind tag {tag:#04x}")))?;
        let mut values = vec![0f32; rows * cols];
        r.read_f32_into::<LittleEndian>(&mut values)?;
        let data = Array2::from_shape_vec((rows, cols), values).map_err(|e| bad(e.to_string()))?;
        out.push((id, FeatureMatrix::new(data, kind)?));
    }
    Ok(out)
}
