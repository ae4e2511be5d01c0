//! Binary model container.
//!
//! Layout (little-endian): magic `MAMMOCNN`, `u32` version, `u32` length and
//! UTF-8 architecture descriptor, `u32` tensor count, then per tensor a
//! `u32` name length, the name, `u32` rank, `u64` extents and `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{Network, NetworkConfig};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"MAMMOCNN";
pub const VERSION: u32 = 1;

const MAX_NAME: usize = 1 << 12;
const MAX_ELEMENTS: u64 = 1 << 32;

fn put<W: Write>(out: &mut W, bytes: &[u8]) -> Result<()> {
    out.write_all(bytes)
        .map_err(|e| Error::io("writing checkpoint", e))
}

pub fn write_checkpoint<T: Scalar, W: Write>(network: &Network<T>, mut out: W) -> Result<()> {
    put(&mut out, MAGIC)?;
    put(&mut out, &VERSION.to_le_bytes())?;
    let desc = network.config().descriptor();
    put(&mut out, &(desc.len() as u32).to_le_bytes())?;
    put(&mut out, desc.as_bytes())?;
    let tensors = network.named_tensors();
    put(&mut out, &(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        put(&mut out, &(name.len() as u32).to_le_bytes())?;
        put(&mut out, name.as_bytes())?;
        put(&mut out, &(t.rank() as u32).to_le_bytes())?;
        for &e in t.shape() {
            put(&mut out, &(e as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 8);
        for &v in t.data() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        put(&mut out, &buf)?;
    }
    out.flush().map_err(|e| Error::io("writing checkpoint", e))
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format("checkpoint is truncated".into())
            } else {
                Error::io("reading checkpoint", e)
            }
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.bytes(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.bytes(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32()? as usize;
        if n > MAX_NAME * 16 {
            return Err(Error::Format(format!(
                "{} length {} is implausible",
                what, n
            )));
        }
        String::from_utf8(self.bytes(n)?)
            .map_err(|_| Error::Format(format!("{} is not UTF-8", what)))
    }
}

pub fn read_checkpoint<T: Scalar, R: Read>(input: R) -> Result<Network<T>> {
    let mut cur = Cursor { inner: input };
    if cur.bytes(MAGIC.len())? != MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {}",
            version
        )));
    }
    let config = NetworkConfig::parse_descriptor(&cur.string("architecture descriptor")?)?;
    // placeholder weights, all overwritten below
    let mut network = Network::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let expected = network.named_tensors().len();
    let count = cur.u32()? as usize;
    if count != expected {
        return Err(Error::Format(format!(
            "checkpoint holds {} tensors, architecture needs {}",
            count, expected
        )));
    }
    let mut seen = std::collections::HashSet::new();
    for _ in 0..count {
        let name = cur.string("tensor name")?;
        let rank = cur.u32()? as usize;
        if rank > 8 {
            return Err(Error::Format(format!(
                "tensor {} has implausible rank {}",
                name, rank
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut total: u64 = 1;
        for _ in 0..rank {
            let e = cur.u64()?;
            total = total.saturating_mul(e);
            shape.push(e as usize);
        }
        if total > MAX_ELEMENTS {
            return Err(Error::Format(format!(
                "tensor {} is implausibly large",
                name
            )));
        }
        let raw = cur.bytes(total as usize * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| T::cast(f64::from_le_bytes(b.try_into().expect("8 bytes"))))
            .collect();
        let tensor = Tensor::new(shape, data)
            .map_err(|e| Error::Format(format!("tensor {}: {}", name, e)))?;
        network.set_tensor(&name, tensor)?;
        if !seen.insert(name.clone()) {
            return Err(Error::Format(format!("tensor {} appears twice", name)));
        }
    }
    Ok(network)
}

pub fn save_checkpoint<T: Scalar>(network: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file =
        File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    write_checkpoint(network, BufWriter::new(file))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_checkpoint(BufReader::new(file))
}
