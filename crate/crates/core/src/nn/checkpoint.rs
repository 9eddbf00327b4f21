//! Model checkpoint container.
//!
//! ```text
//! NNCK1
//! spec=<network spec as JSON>
//! meta.<key>=<JSON value>     (zero or more, sorted by key)
//! params=<count>
//! dtype=f32le
//! <empty line>
//! <count little-endian f32 values, layer order, weights then bias>
//! ```

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::network::Network;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};

pub const MAGIC: &str = "NNCK1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Network<f32>,
    pub meta: BTreeMap<String, Value>,
}

impl Checkpoint {
    pub fn new(net: Network<f32>) -> Self {
        Self {
            net,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl serde::Serialize) -> Result<Self> {
        self.meta.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(self)
    }

    pub fn meta<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Missing(format!("checkpoint has no `{key}` entry")))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "spec={}", serde_json::to_string(&self.net.spec)?)?;
        for (k, v) in &self.meta {
            writeln!(w, "meta.{k}={}", serde_json::to_string(v)?)?;
        }
        let flat = self.net.flat_params();
        writeln!(w, "params={}", flat.len())?;
        writeln!(w, "dtype=f32le")?;
        writeln!(w)?;
        for v in flat {
            w.write_f32::<LittleEndian>(v)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let bad = |m: String| Error::UnsupportedFormat(format!("checkpoint: {m}"));
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(bad("missing NNCK1 magic".into()));
        }
        let mut spec: Option<NetworkSpec> = None;
        let mut meta = BTreeMap::new();
        let mut count: Option<usize> = None;
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("truncated header".into()));
            }
            let l = line.trim_end_matches(['\n', '\r']);
            if l.is_empty() {
                break;
            }
            let (k, v) = l.split_once('=').ok_or_else(|| bad(format!("bad header line `{l}`")))?;
            match k {
                "spec" => spec = Some(serde_json::from_str(v)?),
                "params" => count = Some(v.parse().map_err(|_| bad(format!("bad count `{v}`")))?),
                "dtype" if v != "f32le" => return Err(bad(format!("unsupported dtype {v}"))),
                "dtype" => {}
                _ => match k.strip_prefix("meta.") {
                    Some(key) => {
                        meta.insert(key.to_string(), serde_json::from_str(v)?);
                    }
                    None => return Err(bad(format!("unknown header key `{k}`"))),
                },
            }
        }
        let spec = spec.ok_or_else(|| bad("no spec".into()))?;
        let count = count.ok_or_else(|| bad("no parameter count".into()))?;
        let mut flat = vec![0f32; count];
        r.read_f32_into::<LittleEndian>(&mut flat)?;
        let mut net = Network::<f32>::init(spec, 0)?;
        net.set_flat_params(&flat)?;
        Ok(Self { net, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::read_from(fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::LayerSpec;

    #[test]
    fn round_trip_is_exact() {
        let spec = NetworkSpec::new(vec![
            LayerSpec::FullSigmoid { input: 5, output: 4 },
            LayerSpec::Softmax { input: 4, output: 3 },
        ])
        .unwrap();
        let ck = Checkpoint::new(Network::init(spec, 11).unwrap())
            .with_meta("priors", vec![0.25, 0.5, 0.25])
            .unwrap()
            .with_meta("note", "two\nlines")
            .unwrap();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"NNCK1\n"));
        let back = Checkpoint::read_from(&buf[..]).unwrap();
        assert_eq!(back, ck);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }
}
