//! Binary snapshot format.
//!
//! ```text
//! "ZMPOLICY"                      8 bytes
//! format version                  u32
//! observation layout version      u32
//! metadata length, metadata       u32, UTF-8 `key=value` lines
//! tensor count                    u32
//!   name length, name, ndim, dims u16, bytes, u32, u32 × ndim
//! parameter count                 u64
//! parameters                      f32 × count
//! CRC-32 of all preceding bytes   u32
//! ```
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::net::{NetConfig, PolicyParams};
use crate::error::{Error, Result, SnapshotError};
use crate::observation::OBS_LAYOUT_VERSION;

pub const MAGIC: &[u8; 8] = b"ZMPOLICY";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SnapshotMeta {
    /// Stage tag such as `RL` or `SP1`.
    pub tag: String,
    pub update_count: u64,
    pub seed: u64,
    /// Free-form extra entries.
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    pub params: PolicyParams,
}

fn corrupt(msg: impl Into<String>) -> Error {
    SnapshotError::Corrupt(msg.into()).into()
}

fn meta_lines(meta: &SnapshotMeta, cfg: &NetConfig) -> String {
    let mut kv: BTreeMap<String, String> = meta.extra.clone();
    kv.insert("tag".into(), meta.tag.clone());
    kv.insert("update_count".into(), meta.update_count.to_string());
    kv.insert("seed".into(), meta.seed.to_string());
    kv.insert("raster_px".into(), cfg.raster_px.to_string());
    kv.insert("vector_dim".into(), cfg.vector_dim.to_string());
    kv.insert("channels".into(), format!("{},{},{}", cfg.channels[0], cfg.channels[1], cfg.channels[2]));
    kv.insert("raster_embed".into(), cfg.raster_embed.to_string());
    kv.insert("vec_hidden".into(), cfg.vec_hidden.to_string());
    kv.insert("fusion".into(), cfg.fusion.to_string());
    kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn save_snapshot<W: Write>(params: &PolicyParams, meta: &SnapshotMeta, mut sink: W) -> Result<()> {
    if meta.tag.contains('\n') || meta.extra.iter().any(|(k, v)| k.contains(['=', '\n']) || v.contains('\n')) {
        return Err(Error::Config("snapshot metadata may not contain newlines or '=' in keys".into()));
    }
    let mut buf = Vec::with_capacity(64 + params.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&OBS_LAYOUT_VERSION.to_le_bytes());
    let meta = meta_lines(meta, &params.config);
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta.as_bytes());
    let shapes = params.config.shapes();
    buf.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for (name, dims) in &shapes {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &x in &params.data {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    sink.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            return Err(corrupt("unexpected end of data"));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn parse_config(kv: &BTreeMap<String, String>) -> Result<NetConfig> {
    let get = |k: &str| -> Result<usize> {
        kv.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| SnapshotError::ShapeTable(format!("metadata lacks a valid {k}")).into())
    };
    let ch: Vec<usize> = kv
        .get("channels")
        .map(|v| v.split(',').filter_map(|x| x.parse().ok()).collect())
        .unwrap_or_default();
    if ch.len() != 3 {
        return Err(SnapshotError::ShapeTable("metadata lacks channels".into()).into());
    }
    let cfg = NetConfig {
        raster_px: get("raster_px")?,
        vector_dim: get("vector_dim")?,
        channels: [ch[0], ch[1], ch[2]],
        raster_embed: get("raster_embed")?,
        vec_hidden: get("vec_hidden")?,
        fusion: get("fusion")?,
    };
    cfg.validate().map_err(|e| Error::from(SnapshotError::ShapeTable(e.to_string())))?;
    Ok(cfg)
}

pub fn load_snapshot<R: Read>(mut source: R) -> Result<Snapshot> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    if buf.len() < MAGIC.len() + 4 || &buf[..MAGIC.len()] != MAGIC {
        return Err(corrupt("missing magic bytes"));
    }
    let body_len = buf.len() - 4;
    let stored = u32::from_le_bytes(buf[body_len..].try_into().unwrap());
    let mut c = Cursor { buf: &buf[..body_len], at: MAGIC.len() };
    let format = c.u32()?;
    if crc32fast::hash(&buf[..body_len]) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    if format != FORMAT_VERSION {
        return Err(SnapshotError::FormatVersion { found: format, expected: FORMAT_VERSION }.into());
    }
    let layout = c.u32()?;
    if layout != OBS_LAYOUT_VERSION {
        return Err(SnapshotError::LayoutVersion { found: layout, expected: OBS_LAYOUT_VERSION }.into());
    }
    let meta_len = c.u32()? as usize;
    let meta_text = std::str::from_utf8(c.take(meta_len)?).map_err(|_| corrupt("metadata is not UTF-8"))?;
    let mut kv = BTreeMap::new();
    for line in meta_text.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| corrupt(format!("bad metadata line {line:?}")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let config = parse_config(&kv)?;

    let n_tensors = c.u32()? as usize;
    let mut table = Vec::with_capacity(n_tensors.min(64));
    for _ in 0..n_tensors {
        let nl = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(nl)?).map_err(|_| corrupt("tensor name is not UTF-8"))?.to_string();
        let nd = c.u32()? as usize;
        let dims = (0..nd).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        table.push((name, dims));
    }
    if table != config.shapes() {
        return Err(SnapshotError::ShapeTable("tensor table does not match the network configuration".into()).into());
    }
    let count = c.u64()? as usize;
    if count != config.param_count() {
        return Err(SnapshotError::ShapeTable(format!("{count} parameters, shapes need {}", config.param_count())).into());
    }
    let raw = c.take(count.checked_mul(4).ok_or_else(|| corrupt("parameter count overflow"))?)?;
    let data: Vec<f64> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
    if c.at != body_len {
        return Err(corrupt("trailing bytes before checksum"));
    }

    let mut extra = kv;
    let tag = extra.remove("tag").unwrap_or_default();
    let update_count = extra.remove("update_count").and_then(|v| v.parse().ok()).unwrap_or(0);
    let seed = extra.remove("seed").and_then(|v| v.parse().ok()).unwrap_or(0);
    for k in ["raster_px", "vector_dim", "channels", "raster_embed", "vec_hidden", "fusion"] {
        extra.remove(k);
    }
    Ok(Snapshot { meta: SnapshotMeta { tag, update_count, seed, extra }, params: PolicyParams { config, data } })
}
