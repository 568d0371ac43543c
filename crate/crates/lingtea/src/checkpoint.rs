//! Binary model checkpoints.
//!
//! Layout, all integers little-endian `u64`:
//!
//! ```text
//! magic   7 bytes          b"LTCKPT1"
//! config  line count, then per line: byte length + UTF-8 "key=value"
//! groups  in model order, each:
//!           name byte length + UTF-8 name
//!           rank
//!           rank × dimension
//!           product(dims) × f64 (little-endian bits)
//! ```
//!
//! Weights are stored as raw bit patterns, so a save/load roundtrip is
//! bit-identical. The loader rebuilds the expected group layout from the
//! embedded config and verifies every name and shape against it; a file
//! that ends early reports truncation, a file with the wrong magic or
//! malformed config reports a format error, and a group mismatch reports a
//! structure error naming the group.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::model::{ModelConfig, ModelError, ModelParams, ModelResult};
use crate::tensor::Tensor;

const MAGIC: &[u8; 7] = b"LTCKPT1";

/// Config keys, in the order they are written.
const CONFIG_KEYS: [&str; 6] = [
    "vocab_size",
    "d_model",
    "n_layers",
    "n_heads",
    "max_seq_len",
    "seed",
];

// ── Writing ─────────────────────────────────────────────────────────────

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> ModelResult<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_checkpoint(params, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, w: &mut W) -> ModelResult<()> {
    w.write_all(MAGIC)?;

    let c = &params.config;
    let values = [
        c.vocab_size as u64,
        c.d_model as u64,
        c.n_layers as u64,
        c.n_heads as u64,
        c.max_seq_len as u64,
        c.seed,
    ];
    w.write_all(&(CONFIG_KEYS.len() as u64).to_le_bytes())?;
    for (key, value) in CONFIG_KEYS.iter().zip(values) {
        let line = format!("{key}={value}");
        w.write_all(&(line.len() as u64).to_le_bytes())?;
        w.write_all(line.as_bytes())?;
    }

    for (name, tensor) in params.groups() {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.shape.len() as u64).to_le_bytes())?;
        for &dim in &tensor.shape {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &v in &tensor.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

// ── Reading ─────────────────────────────────────────────────────────────

pub fn load_checkpoint(path: &Path) -> ModelResult<ModelParams> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    read_checkpoint(&mut r)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> ModelResult<ModelParams> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MAGIC),
        )));
    }

    let config = read_config(r)?;
    let layout = config.group_layout();

    let mut groups = Vec::with_capacity(layout.len());
    for (want_name, want_shape) in &layout {
        let name = read_string(r, "group name")?;
        if &name != want_name {
            return Err(ModelError::Structure {
                group: want_name.clone(),
                detail: format!("checkpoint has `{name}` in its place"),
            });
        }
        let rank = read_u64(r)? as usize;
        if rank != want_shape.len() {
            return Err(ModelError::Structure {
                group: name,
                detail: format!("rank {rank}, expected {}", want_shape.len()),
            });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(r)? as usize);
        }
        if &shape != want_shape {
            return Err(ModelError::Structure {
                group: name,
                detail: format!("shape {shape:?}, expected {want_shape:?}"),
            });
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            let v = f64::from_le_bytes(buf);
            if v.is_nan() || v.is_infinite() {
                return Err(ModelError::Structure {
                    group: name,
                    detail: "non-finite weight in payload".to_string(),
                });
            }
            data.push(v);
        }
        groups.push((
            name,
            Tensor {
                shape,
                data,
                requires_grad: true,
                grad: None,
            },
        ));
    }

    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => {}
        _ => {
            return Err(ModelError::Format(
                "trailing bytes after the final parameter group".to_string(),
            ))
        }
    }

    ModelParams::from_groups(config, groups)
}

fn read_config<R: Read>(r: &mut R) -> ModelResult<ModelConfig> {
    let count = read_u64(r)? as usize;
    if count != CONFIG_KEYS.len() {
        return Err(ModelError::Format(format!(
            "config has {count} lines, expected {}",
            CONFIG_KEYS.len()
        )));
    }
    let mut values = [0u64; CONFIG_KEYS.len()];
    for (i, key) in CONFIG_KEYS.iter().enumerate() {
        let line = read_string(r, "config line")?;
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ModelError::Format(format!("config line `{line}` lacks `=`")))?;
        if k != *key {
            return Err(ModelError::Format(format!(
                "config key `{k}`, expected `{key}`"
            )));
        }
        values[i] = v
            .parse()
            .map_err(|_| ModelError::Format(format!("config value `{v}` for `{k}`")))?;
    }
    let config = ModelConfig {
        vocab_size: values[0] as usize,
        d_model: values[1] as usize,
        n_layers: values[2] as usize,
        n_heads: values[3] as usize,
        max_seq_len: values[4] as usize,
        seed: values[5],
    };
    config.validate()?;
    Ok(config)
}

fn read_u64<R: Read>(r: &mut R) -> ModelResult<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_string<R: Read>(r: &mut R, what: &str) -> ModelResult<String> {
    let len = read_u64(r)? as usize;
    if len > 1 << 20 {
        return Err(ModelError::Format(format!(
            "{what} length {len} is implausibly large"
        )));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| ModelError::Format(format!("{what} is not UTF-8")))
}

// ── Tests ───────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::init(&ModelConfig {
            vocab_size: 23,
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            max_seq_len: 10,
            seed: 42,
        })
        .unwrap()
    }

    fn to_bytes(p: &ModelParams) -> Vec<u8> {
        let mut buf = Vec::new();
        write_checkpoint(p, &mut buf).unwrap();
        buf
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let original = params();
        let bytes = to_bytes(&original);
        let loaded = read_checkpoint(&mut bytes.as_slice()).unwrap();
        assert_eq!(loaded.config, original.config);
        for ((an, at), (bn, bt)) in loaded.groups().iter().zip(original.groups()) {
            assert_eq!(an, bn);
            assert_eq!(at.shape, bt.shape);
            let a_bits: Vec<u64> = at.data.iter().map(|v| v.to_bits()).collect();
            let b_bits: Vec<u64> = bt.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(a_bits, b_bits, "group {an} changed across a roundtrip");
        }

        // Saving the loaded params again reproduces the same bytes.
        assert_eq!(to_bytes(&loaded), bytes);
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let mut bytes = to_bytes(&params());
        bytes[0] = b'X';
        match read_checkpoint(&mut bytes.as_slice()) {
            Err(ModelError::Format(msg)) => assert!(msg.contains("magic"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_is_its_own_error() {
        let bytes = to_bytes(&params());
        for cut in [3, 40, bytes.len() / 2, bytes.len() - 5] {
            match read_checkpoint(&mut bytes[..cut].as_ref()) {
                Err(ModelError::Truncated) => {}
                other => panic!("cut at {cut}: expected truncation, got {other:?}"),
            }
        }
    }

    #[test]
    fn shape_tampering_names_the_group() {
        let original = params();
        let bytes = to_bytes(&original);
        // The first group is the token embedding; its rank field sits right
        // after magic + config lines + name. Find the name instead of
        // hard-coding offsets.
        let name = b"token_embedding";
        let pos = bytes
            .windows(name.len())
            .position(|w| w == name)
            .expect("group name present");
        let rank_pos = pos + name.len();
        let dim_pos = rank_pos + 8;
        let mut tampered = bytes.clone();
        // vocab_size 23 -> 24: shape no longer matches the config layout.
        tampered[dim_pos] = 24;
        match read_checkpoint(&mut tampered.as_slice()) {
            Err(ModelError::Structure { group, .. }) => assert_eq!(group, "token_embedding"),
            other => panic!("expected structure error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = to_bytes(&params());
        bytes.push(0);
        match read_checkpoint(&mut bytes.as_slice()) {
            Err(ModelError::Format(msg)) => assert!(msg.contains("trailing"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn file_roundtrip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let original = params();
        save_checkpoint(&original, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        for ((_, at), (_, bt)) in loaded.groups().iter().zip(original.groups()) {
            assert_eq!(at.data, bt.data);
        }
    }
}
