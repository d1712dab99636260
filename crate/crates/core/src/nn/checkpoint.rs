//! Checkpoint container: a text header naming every tensor with its dtype,
//! shape, byte offset and length, then the raw little-endian payloads in
//! header order.
//!
//! ```text
//! dvae-checkpoint 1
//! meta epoch 3
//! tensor enc.embed f64 24,32 0 6144
//! end
//! <payload bytes>
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::tensor::Tensor;

pub const MAGIC: &str = "dvae-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint has no tensor or field named {0}")]
    Missing(String),
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(msg.into())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        assert!(valid_name(key), "bad metadata key {key:?}");
        let value = value.to_string();
        assert!(!value.contains('\n'), "metadata values are single-line");
        self.meta.push((key.to_string(), value));
    }

    pub fn push(&mut self, name: &str, t: Tensor) {
        assert!(valid_name(name), "bad tensor name {name:?}");
        self.tensors.push((name.to_string(), t));
    }

    pub fn meta(&self, key: &str) -> Result<&str, CheckpointError> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CheckpointError::Missing(key.to_string()))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        self.meta(key)?
            .parse()
            .map_err(|_| corrupt(format!("field {key} does not parse")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, CheckpointError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!("{MAGIC} {FORMAT_VERSION}\n");
        for (k, v) in &self.meta {
            header.push_str(&format!("meta {k} {v}\n"));
        }
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            let nbytes = t.len() * 8;
            header.push_str(&format!(
                "tensor {name} f64 {} {offset} {nbytes}\n",
                dims.join(",")
            ));
            offset += nbytes;
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        out.reserve(offset);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut pos = 0usize;
        let mut next_line = || -> Result<&str, CheckpointError> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| corrupt("truncated header"))?;
            pos += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| corrupt("header is not UTF-8"))
        };
        let first = next_line()?;
        let version = first
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| corrupt("missing magic line"))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let mut ck = Checkpoint::new();
        let mut table = Vec::new();
        loop {
            let line = next_line()?;
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.push((k.to_string(), v.to_string()));
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 6 || fields[0] != "tensor" {
                return Err(corrupt(format!("bad header line {line:?}")));
            }
            let dims: Vec<usize> = if fields[3].is_empty() {
                Vec::new()
            } else {
                fields[3]
                    .split(',')
                    .map(|d| {
                        d.parse()
                            .map_err(|_| corrupt(format!("bad shape in {line:?}")))
                    })
                    .collect::<Result<_, _>>()?
            };
            let offset: usize = fields[4].parse().map_err(|_| corrupt("bad offset"))?;
            let nbytes: usize = fields[5].parse().map_err(|_| corrupt("bad length"))?;
            table.push((
                fields[1].to_string(),
                fields[2].to_string(),
                dims,
                offset,
                nbytes,
            ));
        }
        let payload = &bytes[pos..];
        let mut expected = 0usize;
        for (name, dtype, dims, offset, nbytes) in table {
            let count: usize = dims.iter().product();
            let width = match dtype.as_str() {
                "f64" => 8,
                "f32" => 4,
                other => return Err(corrupt(format!("unknown dtype {other}"))),
            };
            if offset != expected || nbytes != count * width {
                return Err(corrupt(format!(
                    "tensor {name}: offset or length disagrees with its shape"
                )));
            }
            let raw = payload
                .get(offset..offset + nbytes)
                .ok_or_else(|| corrupt(format!("tensor {name} runs past the end of the file")))?;
            let data: Vec<f64> = if width == 8 {
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect()
            } else {
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                    .collect()
            };
            let t = Tensor::new(&dims, data).map_err(|e| corrupt(e.to_string()))?;
            ck.tensors.push((name, t));
            expected += nbytes;
        }
        if expected != payload.len() {
            return Err(corrupt("trailing bytes after the last tensor"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
