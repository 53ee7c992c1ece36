//! Binary parameter files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "PGPARAMS"
//! version  u32      1
//! count    u32
//! count x record:
//!   name_len u32, name (utf-8)
//!   rank     u32, dims u64 x rank
//!   payload  f64 x product(dims)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use priorgan_autodiff::Tensor;

use super::{Network, ParamSet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PGPARAMS";
pub const VERSION: u32 = 1;

pub fn write_params(params: &ParamSet, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(VERSION)?;
    out.write_u32::<LittleEndian>(params.len() as u32)?;
    for (name, t) in params.iter() {
        out.write_u32::<LittleEndian>(name.len() as u32)?;
        out.write_all(name.as_bytes())?;
        out.write_u32::<LittleEndian>(t.shape().len() as u32)?;
        for &d in t.shape() {
            out.write_u64::<LittleEndian>(d as u64)?;
        }
        for &v in t.data() {
            out.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

/// Reads every record of a parameter file. `path` is only used in messages.
pub fn read_params(input: &mut impl Read, path: &Path) -> Result<ParamSet> {
    let mut current = String::from("<header>");
    let err = |what: &str, ctx: &str, e: std::io::Error| Error::parse(path, format!("{what} while reading {ctx}: {e}"));
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|e| err("truncated file", &current, e))?;
    if &magic != MAGIC {
        return Err(Error::parse(path, "not a parameter file (bad magic)"));
    }
    let version = input
        .read_u32::<LittleEndian>()
        .map_err(|e| err("truncated file", &current, e))?;
    if version != VERSION {
        return Err(Error::parse(path, format!("unsupported version {version}")));
    }
    let count = input
        .read_u32::<LittleEndian>()
        .map_err(|e| err("truncated file", &current, e))?;
    let mut entries = Vec::with_capacity(count as usize);
    for i in 0..count {
        current = format!("record {i}");
        let len = input
            .read_u32::<LittleEndian>()
            .map_err(|e| err("truncated file", &current, e))?;
        let mut name = vec![0u8; len as usize];
        input
            .read_exact(&mut name)
            .map_err(|e| err("truncated file", &current, e))?;
        let name = String::from_utf8(name).map_err(|_| Error::parse(path, format!("{current}: name is not utf-8")))?;
        current = format!("parameter {name}");
        let rank = input
            .read_u32::<LittleEndian>()
            .map_err(|e| err("truncated file", &current, e))?;
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            dims.push(
                input
                    .read_u64::<LittleEndian>()
                    .map_err(|e| err("truncated file", &current, e))? as usize,
            );
        }
        let n: usize = dims.iter().product();
        let mut data = vec![0.0; n];
        input
            .read_f64_into::<LittleEndian>(&mut data)
            .map_err(|e| err("truncated payload", &current, e))?;
        let t = Tensor::new(dims, data).map_err(|e| Error::parse(path, format!("{current}: {e}")))?;
        entries.push((name, t));
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).map_err(|e| err("read error", "trailer", e))? != 0 {
        return Err(Error::parse(path, "trailing bytes after last record"));
    }
    ParamSet::new(entries).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn save_params(net: &Network, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_params(net.params(), &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Replaces `net`'s parameters with the file's, which must match by name and shape.
pub fn load_params(net: &mut Network, path: &Path) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let loaded = read_params(&mut BufReader::new(file), path)?;
    for (name, current) in net.params().iter() {
        match loaded.get(name) {
            None => {
                return Err(Error::parse(path, format!("missing parameter {name}")));
            }
            Some(t) if t.shape() != current.shape() => {
                return Err(Error::parse(
                    path,
                    format!(
                        "parameter {name} has shape {:?} in file, network expects {:?}",
                        t.shape(),
                        current.shape()
                    ),
                ));
            }
            Some(_) => {}
        }
    }
    if loaded.len() != net.params().len() {
        return Err(Error::parse(path, "file holds parameters the network does not have"));
    }
    for (name, t) in net.params_mut().entries_mut() {
        *t = loaded.get(name).cloned().unwrap_or_else(|| t.clone());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkSpec;
    use crate::seed::{rng_for, Stream};

    fn net(seed: u64) -> Network {
        Network::build(NetworkSpec::mlp(4, &[6], 3), &mut rng_for(seed, Stream::Init)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let a = net(1);
        save_params(&a, &path).unwrap();
        let mut b = net(2);
        load_params(&mut b, &path).unwrap();
        assert_eq!(a.params().checksum(), b.params().checksum());
        let x = Tensor::from_rows(&[[0.1, 0.2, -0.3, 0.4]]).unwrap();
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
    }

    #[test]
    fn missing_parameter_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let a = net(1);
        let partial = ParamSet::new(
            a.params()
                .iter()
                .filter(|(n, _)| *n != "layer1.bias")
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        )
        .unwrap();
        let mut f = File::create(&path).unwrap();
        write_params(&partial, &mut f).unwrap();
        drop(f);
        let err = load_params(&mut net(2), &path).unwrap_err().to_string();
        assert!(err.contains("layer1.bias"), "{err}");
    }

    #[test]
    fn wrong_shape_names_both_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let other = Network::build(NetworkSpec::mlp(4, &[5], 3), &mut rng_for(1, Stream::Init)).unwrap();
        save_params(&other, &path).unwrap();
        let err = load_params(&mut net(2), &path).unwrap_err().to_string();
        assert!(err.contains("[4, 5]") && err.contains("[4, 6]"), "{err}");
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let mut buf = Vec::new();
        write_params(net(1).params(), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        let err = read_params(&mut buf.as_slice(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("layer1.bias"), "{err}");
        let err = read_params(&mut &b"NOTPARAMS"[..], Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }
}
